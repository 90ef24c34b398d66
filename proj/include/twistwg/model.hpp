#pragma once

#include <stdexcept>
#include <string>

namespace twg {

/// Raised when an argument lies outside the domain of an analytic formula.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

enum class Variant { Twisted, Auxiliary };
enum class Side { Right, Left };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Strip of width d with a boundary-condition window of half-length ell.
///
/// Twisted:   Dirichlet on {x1 > ell, x2 = 0} and {x1 < -ell, x2 = d}.
/// Auxiliary: Dirichlet on {|x1| > ell, x2 = 0}.
/// Neumann on the rest of the boundary in both cases.
struct WaveguideSpec {
    double d = 1.0;
    double ell = 0.0;
    Variant variant = Variant::Twisted;

    void validate() const;
};

struct Point {
    double x1 = 0.0;
    double x2 = 0.0;
};

enum class BoundaryKind { Dirichlet, Neumann, Transition };

/// Classification of a point on the strip boundary (x2 == 0 or x2 == d).
/// Points exactly at the window edges belong to neither open set.
BoundaryKind classify_boundary(const WaveguideSpec& spec, Point p);

/// E_m = pi^2 (m - 1/2)^2 / d^2.
double threshold_energy(int m, double d);

/// Transverse mode chi_m on the right (x1 > 0) or left (x1 < 0) branch.
/// The left branch is the mirror image x2 -> d - x2 of the right one.
double chi(int m, Side side, double x2, double d);

/// Decay rate of mode m at spectral offset mu: mu for m = 1,
/// sqrt(E_m - E_1 + mu^2) otherwise.
double decay_rate(int m, double mu, double d);

/// Point symmetry (x1, x2) -> (-x1, d - x2).
Point parity_map(Point p, double d);

/// Reflection x1 -> -x1 (symmetry of the auxiliary operator).
Point reflect_x1(Point p);

/// Symmetry carried by the operator of the given variant.
Point symmetry_map(Variant v, Point p, double d);

}  // namespace twg
