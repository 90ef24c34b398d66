#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "twistwg/criticality.hpp"

namespace twg {

enum class CutoffProfile { Quintic, Septic };

/// Odd cut-off xi(t): +-1 for |t -+ ell*| < ell*/3, 0 for |t -+ ell*| > 2 ell*/3,
/// a polynomial smoothstep in between.
struct CutoffSpec {
    double ell_star = 0.0;
    CutoffProfile profile = CutoffProfile::Quintic;

    /// k-th derivative (k = 0..3).
    double eval(double t, int k = 0) const;
};

double compute_mu1(const ThresholdMode& mode);

/// (1/2) int phi L1 phi: the value of mu1 for which the corrector problem is solvable.
double compute_mu1_cutoff(const ThresholdMode& mode, const CutoffSpec& cutoff);

/// Second-order differences in x1 on the nonuniform columns of the grid.
Eigen::MatrixXd dx1(const Grid& g, const Eigen::MatrixXd& U);
Eigen::MatrixXd dx1x1(const Grid& g, const Eigen::MatrixXd& U);

/// L1 u = -2 xi' u_11 - xi'' u_1 and L2 u = (xi'^2 - 2 xi'' xi) u_11 - xi''' xi u_1.
Eigen::MatrixXd apply_L1(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& U);
Eigen::MatrixXd apply_L2(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& U);

struct Corrector {
    Vec y;                       // symmetric-form vector
    Eigen::MatrixXd U;           // nodal field
    double multiplier = 0.0;     // bordered multiplier along phi
    double mismatch = 0.0;       // <phi, rhs>: int phi L1 phi - 2 mu1
    double mu1_cutoff = 0.0;     // (1/2) int phi L1 phi
    double parity_score = 1.0;   // ||psi - wp P psi|| / ||psi||
    double residual = 0.0;       // interior rows, relative to ||rhs||
};

Corrector solve_corrector(const ThresholdMode& mode, double mu1, const CutoffSpec& cutoff);

struct Mu2Result {
    double value = 0.0;          // mode sum weighted by 1/(2 sqrt(E_m - E1))
    double value_printed = 0.0;  // mode sum weighted by 1/sqrt(E_m - E1)
    double norm_term = 0.0;
    double operator_term = 0.0;
    double mode_sum = 0.0;       // sum_{m>=2} a_m^2 / sqrt(E_m - E1), discrete rates
    double mode_tail = 0.0;      // part of mode_sum beyond the first 12 modes
    double cutoff_free = 0.0;    // the xi-free representation
    std::vector<std::string> warnings;
};

Mu2Result compute_mu2(const ThresholdMode& mode, const Corrector& psi1, double mu1, const CutoffSpec& cutoff);

struct EmergenceLevel {
    int nx = 0;
    int ny = 0;
    double ell_star = 0.0;
    double tau1 = 0.0;
    std::vector<double> lambda;
    std::vector<double> mu;
    double mu1_fit = 0.0;
    double mu2_fit = 0.0;
    double mu1_integral = 0.0;
    double mu1_alpha = 0.0;
    double mu1_cutoff = 0.0;
    double alpha1 = 0.0;
    double mu2_formula = 0.0;
    double mu2_printed = 0.0;
    double mu2_cutoff_free = 0.0;
    double mismatch = 0.0;  // int phi L1 phi - 2 mu1_integral
};

struct EmergenceSeries {
    int n = 0;
    WaveguideSpec spec;
    double ell_star = 0.0;
    std::vector<double> eps_grid;
    std::vector<double> lambda_direct;  // finest level
    std::vector<double> mu;             // finest level
    std::vector<double> mu_pred;        // finest level, mu1_fit eps + mu2_fit eps^2
    double mu1_integral = 0.0;
    double mu1_alpha = 0.0;
    double mu1_fit = 0.0;
    double mu2_formula = 0.0;
    double mu2_printed = 0.0;
    double mu2_cutoff_free = 0.0;
    double mu2_fit = 0.0;
    double slope_small = 0.0;           // log-log slope of mu at the two smallest eps
    double series_residual = 0.0;       // weighted rms of the fit
    // third-order check against coefficients from a tiny-eps interpolation
    double mu1_ref = 0.0;
    double mu2_ref = 0.0;
    std::vector<double> remainder;      // mu - mu1_ref eps - mu2_ref eps^2
    std::vector<double> remainder_ratio;
    std::vector<EmergenceLevel> levels;
    std::vector<std::string> warnings;
};

struct EmergenceOptions {
    std::vector<double> eps_factors{0.02, 0.04, 0.08, 0.16};  // times ell*
    std::vector<double> ref_factors{0.0025, 0.005, 0.0075, 0.01};
    CutoffSpec cutoff;  // ell_star filled per level
};

/// Weighted least squares mu = m1 eps + m2 eps^2 with weights eps^-2.
std::pair<double, double> fit_series(const std::vector<double>& eps, const std::vector<double>& mu,
                                     double* rms = nullptr);

EmergenceSeries emergence_fit(const CriticalBracket& c, const Numerics& num, const EmergenceOptions& opt = {});

nlohmann::json to_json(const EmergenceSeries& e);

/// CSV with columns eps,lambda,mu,mu_pred.
void write_emergence_csv(std::ostream& os, const EmergenceSeries& e);

}  // namespace twg
