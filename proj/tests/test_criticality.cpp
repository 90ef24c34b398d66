#include "doctest.h"

#include <cmath>
#include <string>

#include "twistwg/criticality.hpp"

using namespace twg;

namespace {

Numerics coarse()
{
    Numerics num;
    num.ny = 10;
    num.levels = 2;
    return num;
}

const CriticalBracket& first_branch()
{
    static const CriticalBracket c = critical_length(1, {1.0, 0.0, Variant::Twisted}, coarse());
    return c;
}

}  // namespace

TEST_CASE("branch sectors alternate")
{
    CHECK(branch_sector(1) == 1);
    CHECK(branch_sector(2) == -1);
    CHECK(branch_sector(3) == 1);
}

TEST_CASE("indicator changes sign across the first critical length")
{
    Numerics num = coarse();
    num.levels = 1;
    const IndicatorValue below = threshold_indicator(WaveguideSpec{1.0, 0.16, Variant::Twisted}, 1, num);
    const IndicatorValue above = threshold_indicator(WaveguideSpec{1.0, 0.36, Variant::Twisted}, 1, num);
    CHECK(below.sector == 1);
    CHECK(below.k == 0);
    CHECK(below.theta > 0.0);
    CHECK(above.theta < 0.0);
    CHECK(above.theta_next > 0.0);
}

TEST_CASE("first critical length lies in (0, ell*_2 / 2]")
{
    const CriticalBracket& c = first_branch();
    REQUIRE(c.aux_upper.has_value());
    CHECK(c.ell > 0.0);
    CHECK(c.ell <= *c.aux_upper / 2 + c.uncertainty);
    CHECK(c.lo <= c.ell);
    CHECK(c.ell <= c.hi);
    CHECK(c.levels.size() == 2);
    CHECK(std::abs(c.ell - 0.2633) < 0.01);
}

TEST_CASE("auxiliary critical lengths are close to integers")
{
    Numerics num = coarse();
    num.levels = 1;
    const CriticalBracket a1 = critical_length(1, {1.0, 0.0, Variant::Auxiliary}, num);
    CHECK(a1.ell == 0.0);
    const CriticalBracket a2 = critical_length(2, {1.0, 0.0, Variant::Auxiliary}, num);
    CHECK(a2.ell > 1.0);
    CHECK(a2.ell < 1.3);
}

TEST_CASE("threshold mode at the critical length")
{
    const ThresholdMode m = threshold_mode(first_branch(), coarse());
    CHECK(m.wp == 1);
    CHECK(m.parity_score < 1e-8);
    CHECK(m.amp_plus == doctest::Approx(1.0));
    CHECK(std::abs(m.flux_defect) < 1e-6);
    CHECK(m.decay_rate == doctest::Approx(m.decay_expected).epsilon(0.05));
    CHECK(m.dx_energy > 0.0);
}

TEST_CASE("threshold mode refuses a non-critical length")
{
    bool thrown = false;
    try {
        threshold_mode(0.2, 1, {1.0, 0.0, Variant::Twisted}, coarse());
    } catch (const NumericError& e) {
        thrown = std::string(e.what()).find("ell not critical") != std::string::npos;
    }
    CHECK(thrown);
}
