#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "twistwg/operator.hpp"
#include "twistwg/spectrum.hpp"

namespace twg {

enum class CriticalMethod { CountBisection, IndicatorZero };
std::string to_string(CriticalMethod m);

struct CriticalOptions {
    CriticalMethod method = CriticalMethod::IndicatorZero;
    std::vector<double> delta_factors{1e-4, 4e-4, 1.6e-3, 6.4e-3};  // times E1
    double ell_tol = 1e-11;
    std::optional<double> search_lo;
    std::optional<double> search_hi;
};

/// Fit ell(delta) = ell0 + a sqrt(delta) + b delta of the count-bisection
/// crossings, with the exponent estimated from consecutive differences.
struct DeltaFit {
    std::vector<double> deltas;
    std::vector<double> ells;
    double ell0 = 0.0;
    double a = 0.0;
    double b = 0.0;
    double exponent = 0.0;
    bool exponent_ok = false;
};

struct LevelCritical {
    int nx = 0;
    int ny = 0;
    double L = 0.0;
    double anchor = 0.0;
    int window_cells = 0;
    double ell = 0.0;
    double theta_next = 0.0;  // next in-sector indicator eigenvalue at ell
    DeltaFit fit;
    int evaluations = 0;
};

struct CriticalBracket {
    int n = 0;
    WaveguideSpec spec;  // ell holds the extrapolated critical length
    CriticalMethod method = CriticalMethod::IndicatorZero;
    double ell = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double uncertainty = 0.0;
    double order = 1.0;
    double search_lo = 0.0;
    double search_hi = 0.0;
    std::optional<double> aux_lower;  // auxiliary critical lengths seeding the search
    std::optional<double> aux_upper;
    std::vector<LevelCritical> levels;
    std::vector<std::string> warnings;
};

struct IndicatorValue {
    int sector = 1;         // +1 even, -1 odd
    int k = 0;              // in-sector eigenvalues of earlier branches
    double theta = 0.0;     // (k+1)-th smallest in-sector eigenvalue of A_T(mu=0) - tau1
    double theta_next = 0.0;
};

/// Sector of branch n: (-1)^(n-1).
int branch_sector(int n);

IndicatorValue threshold_indicator(const Grid& g, int n, const Numerics& num);
IndicatorValue threshold_indicator(const WaveguideSpec& spec, int n, const Numerics& num, int level = -1);

/// Numerics with a truncation length and layout anchor fixed for a search
/// over ell in [lo, hi], so that the discrete operator moves smoothly with ell.
Numerics search_numerics(const WaveguideSpec& spec, const Numerics& num, double hi, double anchor);

/// Critical length at one grid level with the layout anchored at the
/// returned value (self-consistent anchor).
LevelCritical refine_critical_length(int n, const WaveguideSpec& spec, double lo, double hi,
                                     const Numerics& num, int level, const CriticalOptions& opt);

CriticalBracket critical_length(int n, const WaveguideSpec& spec, const Numerics& num,
                                const CriticalOptions& opt = {});

struct ThresholdMode {
    int n = 0;
    WaveguideSpec spec;
    std::shared_ptr<const OperatorBundle> bundle;  // free ends; transparent closure applied at tau1
    Vec y;                     // symmetric-form unknown vector
    Eigen::MatrixXd U;         // nodal values on the full grid (zeros on Dirichlet nodes)
    double amp_plus = 0.0;     // mode-1 amplitude at x1 = +L
    double amp_minus = 0.0;    // mode-1 amplitude at x1 = -L against the left mode
    int wp = 0;
    double parity_score = 1.0;
    double match_x = 0.0;
    int match_column = 0;
    std::vector<double> a_star;  // mode traces at x1 = +match_x
    std::vector<double> a_star_left;  // at -match_x against the left modes
    double alpha1 = 0.0;
    double alpha3 = 0.0;
    double alpha_fit_rms = 0.0;
    int alpha_fit_points = 0;
    double residual = 0.0;     // ||(A_T - E1) y|| / ||y||
    double flux_defect = 0.0;  // bordered multiplier; 0 at exact criticality
    double decay_rate = 0.0;   // measured rate of the m >= 2 remainder
    double decay_expected = 0.0;
    double dx_energy = 0.0;    // integral of |d phi / d x1|^2 over the strip
};

/// Threshold mode at a critical length (grid of the given level, layout
/// anchored at ell_n). Throws NumericError("ell not critical") when the
/// bordered multiplier exceeds `critical_tol`.
ThresholdMode threshold_mode(double ell_n, int n, const WaveguideSpec& spec, const Numerics& num, int level = -1,
                             double critical_tol = 1e-6);
ThresholdMode threshold_mode(const CriticalBracket& c, const Numerics& num, int level = -1,
                             double critical_tol = 1e-6);

/// Full-grid nodal field of a symmetric-form vector.
Eigen::MatrixXd nodal_field(const OperatorBundle& b, const Vec& y);

/// Sum over x1-edges of wy (delta u)^2 / gap for edges inside [xa, xb].
double dx_energy(const Grid& g, const Eigen::MatrixXd& U, double xa, double xb);

/// Mode coefficients of column i against the discrete transverse modes of that column.
std::vector<double> column_modes(const Grid& g, const Eigen::MatrixXd& U, int i, bool left_modes);

nlohmann::json to_json(const CriticalBracket& c);
nlohmann::json to_json(const ThresholdMode& t);
void write_mode_csv(std::ostream& os, const ThresholdMode& t);

}  // namespace twg
