#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "twistwg/eigensolve.hpp"
#include "twistwg/operator.hpp"

namespace twg {

/// Discretization and solver settings shared by the physics modules.
/// Level l of the grid family uses nx * 2^l by ny * 2^l cells on the same
/// truncation length.
struct Numerics {
    double L = 0.0;            // 0: ell + end_margin * d
    double end_margin = 3.0;   // required L - ell, in units of d
    int nx = 0;                // 0: square cells
    int ny = 20;
    int levels = 3;
    double tol = 1e-9;
    int n_modes = 0;
    OffsetPolicy offset = OffsetPolicy::MidcellAtEll;
    std::optional<double> anchor_ell;
    std::uint64_t seed = 20240607;
    int jobs = 1;
};

double truncation_length(const WaveguideSpec& spec, const Numerics& num);
GridSpec level_grid(const WaveguideSpec& spec, const Numerics& num, int level);

struct Extrapolation {
    double value = 0.0;
    double error = 0.0;
    double order = 1.0;
    bool order_estimated = false;
};

/// Richardson extrapolation of values on grids refined by 2 (coarse first).
/// The order is estimated from the last three values and clamped to
/// [0.5, 3]; with two values first order is assumed.
Extrapolation richardson(const std::vector<double>& v);

enum class Parity { Even, Odd, Undetermined };
std::string to_string(Parity p);

struct ParityResult {
    Parity parity = Parity::Undetermined;
    double score_even = 1.0;  // ||v - Pv|| / ||v||
    double score_odd = 1.0;   // ||v + Pv|| / ||v||
};

ParityResult classify_parity(const Vec& y, const OperatorBundle& b, double threshold = 1e-6);

/// m-th eigenpair of the transparent truncation: the fixed point
/// theta_m(lambda) = lambda, bracketed by [lo, hi].
struct TransparentPair {
    double value = 0.0;
    Vec vector;
    double residual = 0.0;
    int evaluations = 0;
};

TransparentPair transparent_eigenpair(const OperatorBundle& b, int m, double lo, double hi,
                                      const Numerics& num);

/// Number of eigenvalues of the transparent truncation below lambda.
int transparent_count(const OperatorBundle& b, double lambda);

struct BracketedEigenvalue {
    int m = 0;
    double lower = 0.0;         // Neumann ends, finest grid
    double upper = 0.0;         // Dirichlet ends, finest grid
    double value = 0.0;         // transparent ends, finest grid
    double extrapolated = 0.0;
    double error = 0.0;
    double order = 1.0;
    Parity parity = Parity::Undetermined;
    double parity_score = 1.0;
    std::vector<double> level_values;
};

struct LevelInfo {
    int nx = 0;
    int ny = 0;
    double L = 0.0;
    double hx = 0.0;
    double hy = 0.0;
    double tau1 = 0.0;
    int count = 0;
};

struct SpectrumReport {
    WaveguideSpec spec;
    Numerics numerics;
    std::vector<LevelInfo> levels;
    std::vector<BracketedEigenvalue> eigenvalues;  // certified, ascending
    std::vector<BracketedEigenvalue> near;         // within the margin of E1
    int count = 0;
    double E1 = 0.0;
    double margin = 0.0;
    std::vector<std::string> warnings;

    /// Even, Odd, Even, ... over the certified eigenvalues.
    bool parity_alternates() const;
};

SpectrumReport discrete_spectrum(const WaveguideSpec& spec, const Numerics& num);

struct EdgeLevel {
    int nx = 0;
    int ny = 0;
    double tau1 = 0.0;
    int count = 0;
    double neumann_lowest = 0.0;
    double dirichlet_lowest = 0.0;
};

/// Bottom of the spectrum of the discrete infinite strip, per level.
struct EdgeReport {
    WaveguideSpec spec;
    std::vector<EdgeLevel> levels;
    double E1 = 0.0;
    double edge = 0.0;            // finest level
    double relative_error = 0.0;  // |edge - E1| / E1
    bool improving = false;
};

EdgeReport spectrum_edge(const WaveguideSpec& spec, const Numerics& num);

struct BoundRow {
    int m = 0;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct BracketingReport {
    double ell = 0.0;
    double d = 1.0;
    SpectrumReport twisted;
    SpectrumReport auxiliary;          // at 2 ell
    std::vector<BoundRow> two_sided;   // aux(2m-1) <= twisted(m) <= aux(2m)
    std::vector<BoundRow> aux_bounds;  // pi^2 (m-1)^2 / 4 l^2 < aux(m) < pi^2 m^2 / 4 l^2, at 2 ell
    int N = 0;
    int N_star = 0;
    bool count_sandwich = false;
    bool pass = false;
};

BracketingReport validate_bracketing(double ell, double d, const Numerics& num);

/// Rows of the auxiliary estimates for one auxiliary report, plus the count
/// band floor(ell / d) <= N* <= floor(ell / d) + 1.
std::vector<BoundRow> auxiliary_bound_rows(const SpectrumReport& aux);
bool auxiliary_count_band(const SpectrumReport& aux);

struct SweepResult {
    std::vector<SpectrumReport> reports;
    bool monotone = true;
    bool counts_nondecreasing = true;
    std::vector<std::string> flags;
};

SweepResult sweep(const std::vector<double>& ells, const WaveguideSpec& templ, const Numerics& num);

/// Count and monotonicity flags over reports at ascending ell.
SweepResult summarize_sweep(std::vector<SpectrumReport> reports);

struct TruncationRow {
    double L = 0.0;
    int nx = 0;
    double neumann = 0.0;
    double dirichlet = 0.0;
    double gap = 0.0;
};

/// Lowest Dirichlet-end minus Neumann-end eigenvalue against L at fixed
/// mesh size. The gap decays like exp(-2 kappa L), kappa = sqrt(E1 - Lambda1).
struct TruncationStudy {
    WaveguideSpec spec;
    std::vector<TruncationRow> rows;
    double E1 = 0.0;
    double tau1 = 0.0;
    double lambda1 = 0.0;         // transparent, longest L
    double slope = 0.0;           // -d log(gap) / dL, least squares
    double slope_expected = 0.0;  // 2 sqrt(E1 - lambda1)
    double slope_discrete = 0.0;  // 2 sqrt(tau1 - lambda1)
};

TruncationStudy truncation_study(const WaveguideSpec& spec, const std::vector<double>& Ls, const Numerics& num);

/// Runs f(i) for i in [0, n) on up to `jobs` threads; the first exception
/// is rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& f);

nlohmann::json to_json(const SpectrumReport& r);
nlohmann::json to_json(const EdgeReport& r);
nlohmann::json to_json(const BracketingReport& r);
nlohmann::json to_json(const TruncationStudy& r);

/// Inverse of to_json(SpectrumReport) for the fields it serializes.
SpectrumReport spectrum_from_json(const nlohmann::json& j);

/// CSV with columns ell,m,lower,upper,extrapolated,parity,E1,L,nx,ny.
void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumReport>& reports);

std::string fmt17(double x);

}  // namespace twg
