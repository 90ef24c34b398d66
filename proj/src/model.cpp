#include "twistwg/model.hpp"

#include <cmath>
#include <numbers>

namespace twg {

std::string to_string(Variant v)
{
    return v == Variant::Twisted ? "twisted" : "auxiliary";
}

Variant variant_from_string(const std::string& s)
{
    if (s == "twisted") return Variant::Twisted;
    if (s == "auxiliary") return Variant::Auxiliary;
    throw std::invalid_argument("unknown variant '" + s + "' (expected twisted|auxiliary)");
}

void WaveguideSpec::validate() const
{
    if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("d must be > 0");
    if (!(ell >= 0.0) || !std::isfinite(ell)) throw DomainError("ell must be >= 0");
}

BoundaryKind classify_boundary(const WaveguideSpec& spec, Point p)
{
    const bool bottom = p.x2 == 0.0;
    const bool top = p.x2 == spec.d;
    if (!bottom && !top) throw DomainError("point is not on the strip boundary");

    const double ell = spec.ell;
    if (spec.variant == Variant::Twisted) {
        if (bottom) {
            if (p.x1 > ell) return BoundaryKind::Dirichlet;
            if (p.x1 == ell) return BoundaryKind::Transition;
        } else {
            if (p.x1 < -ell) return BoundaryKind::Dirichlet;
            if (p.x1 == -ell) return BoundaryKind::Transition;
        }
        return BoundaryKind::Neumann;
    }
    if (bottom) {
        if (std::abs(p.x1) > ell) return BoundaryKind::Dirichlet;
        if (std::abs(p.x1) == ell) return BoundaryKind::Transition;
    }
    return BoundaryKind::Neumann;
}

double threshold_energy(int m, double d)
{
    if (m < 1) throw DomainError("mode index must be >= 1");
    if (!(d > 0.0)) throw DomainError("d must be > 0");
    const double k = std::numbers::pi * (m - 0.5) / d;
    return k * k;
}

double chi(int m, Side side, double x2, double d)
{
    const double k = std::sqrt(threshold_energy(m, d));
    if (x2 < 0.0 || x2 > d) throw DomainError("x2 must lie in [0, d]");
    const double arg = side == Side::Right ? x2 : d - x2;
    return std::sqrt(2.0 / d) * std::sin(k * arg);
}

double decay_rate(int m, double mu, double d)
{
    if (m < 1) throw DomainError("mode index must be >= 1");
    if (m == 1) {
        if (mu < 0.0) throw DomainError("mu must be >= 0 for the first mode");
        return mu;
    }
    const double s = threshold_energy(m, d) - threshold_energy(1, d) + mu * mu;
    if (s < 0.0) throw DomainError("negative decay-rate radicand");
    return std::sqrt(s);
}

Point parity_map(Point p, double d) { return {-p.x1, d - p.x2}; }

Point reflect_x1(Point p) { return {-p.x1, p.x2}; }

Point symmetry_map(Variant v, Point p, double d)
{
    return v == Variant::Twisted ? parity_map(p, d) : reflect_x1(p);
}

}  // namespace twg
