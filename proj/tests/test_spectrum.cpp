#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "twistwg/spectrum.hpp"

using namespace twg;
constexpr double pi = std::numbers::pi;

TEST_CASE("richardson recovers a second-order limit")
{
    // v(h) = 1 + 3 h^2 at h = 1, 1/2, 1/4
    const Extrapolation e = richardson({4.0, 1.75, 1.1875});
    CHECK(e.order == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(e.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.order_estimated);

    // two values: first order
    const Extrapolation f = richardson({3.0, 2.0});
    CHECK(f.value == doctest::Approx(1.0));
    CHECK_FALSE(f.order_estimated);

    // order clamped to [0.5, 3]
    CHECK(richardson({1.0, 0.5, 0.49}).order == doctest::Approx(3.0));
    CHECK_THROWS(richardson({}));
}

TEST_CASE("straight strip has no eigenvalue below the threshold")
{
    Numerics num;
    num.ny = 10;
    num.levels = 2;
    const EdgeReport e = spectrum_edge({1.0, 0.0, Variant::Twisted}, num);
    for (const auto& l : e.levels) {
        CHECK(l.count == 0);
        CHECK(l.neumann_lowest >= l.tau1 * (1 - 1e-9));
    }
    CHECK(e.improving);
    CHECK(e.E1 == doctest::Approx(pi * pi / 4));
}

TEST_CASE("one bound state at ell = 1, bracketed and even")
{
    Numerics num;
    num.ny = 10;
    num.levels = 2;
    const SpectrumReport r = discrete_spectrum({1.0, 1.0, Variant::Twisted}, num);
    REQUIRE(r.count == 1);
    const BracketedEigenvalue& e = r.eigenvalues.at(0);
    CHECK(e.lower <= e.value);
    CHECK(e.value <= e.upper);
    CHECK(e.parity == Parity::Even);
    CHECK(e.parity_score < 1e-8);
    CHECK(e.extrapolated < pi * pi / 4);
    CHECK(r.parity_alternates());
}

TEST_CASE("auxiliary count band at ell = 1.5")
{
    Numerics num;
    num.ny = 10;
    num.levels = 2;
    const SpectrumReport r = discrete_spectrum({1.0, 1.5, Variant::Auxiliary}, num);
    CHECK(r.count >= 1);
    CHECK(r.count <= 2);
    CHECK(auxiliary_count_band(r));
    for (const auto& b : auxiliary_bound_rows(r)) CHECK(b.pass);
}

TEST_CASE("spectrum report survives a json round trip")
{
    Numerics num;
    num.ny = 8;
    num.levels = 2;
    const SpectrumReport r = discrete_spectrum({1.0, 2.0, Variant::Twisted}, num);
    const nlohmann::json j = to_json(r);
    CHECK(to_json(spectrum_from_json(j)).dump() == j.dump());
}

TEST_CASE("sweep flags a decreasing count")
{
    SpectrumReport a, b;
    a.spec.ell = 1.0;
    a.count = 2;
    b.spec.ell = 2.0;
    b.count = 1;
    const SweepResult s = summarize_sweep({a, b});
    CHECK_FALSE(s.counts_nondecreasing);
    CHECK(s.flags.size() == 1);
    CHECK(summarize_sweep({b, a}).counts_nondecreasing);
}

TEST_CASE("end-condition gap decays at twice the bound-state rate")
{
    Numerics num;
    num.ny = 10;
    num.tol = 1e-12;
    num.end_margin = 1.0;
    const TruncationStudy t = truncation_study({1.0, 1.0, Variant::Twisted}, {3.0, 3.5, 4.0}, num);
    for (const auto& r : t.rows) CHECK(r.gap > 0.0);
    CHECK(t.rows[2].gap < t.rows[0].gap);
    CHECK(std::abs(t.slope - t.slope_expected) < 0.05 * t.slope_expected);
}

TEST_CASE("parallel_for visits every index and rethrows")
{
    std::vector<int> seen(17, 0);
    parallel_for(17, 4, [&](int i) { seen[i] += 1; });
    for (int s : seen) CHECK(s == 1);
    CHECK_THROWS_AS(parallel_for(5, 2, [](int i) { if (i == 3) throw std::runtime_error("x"); }),
                    std::runtime_error);
}

TEST_CASE("fmt17 round-trips")
{
    for (double x : {0.1, pi, 1.0 / 3.0, 2.4674011002723395, -1e-300})
        CHECK(std::stod(fmt17(x)) == x);
}
