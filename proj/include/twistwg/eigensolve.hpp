#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "twistwg/operator.hpp"

namespace twg {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EigenRequest {
    int k = 1;
    double sigma = 0.0;
    double tol = 1e-9;          // absolute residual ||A v - lambda v|| for unit v
    int max_iter = 240;         // Krylov dimension cap
    std::uint64_t seed = 20240607;
    int dense_below = 0;        // use a dense solve when n <= dense_below
};

struct EigenResult {
    std::vector<double> values;  // ascending
    std::vector<Vec> vectors;    // unit 2-norm
    std::vector<double> residuals;
    std::vector<bool> converged;
    double sigma_used = 0.0;
    int reshifts = 0;
    int iterations = 0;

    bool all_converged() const;
};

struct Inertia {
    int neg = 0;
    int zero = 0;
    int pos = 0;
    double min_abs_pivot = 0.0;
};

/// Sparse LDL^T of A - sigma I (fill-reducing ordering, no pivoting).
/// The symbolic analysis is kept so that matrices with the same pattern
/// can be refactorized cheaply.
class ShiftedLdlt {
public:
    /// Returns false if the factorization broke down or a pivot is tiny.
    bool factorize(const SpMat& A, double sigma);
    Vec solve(const Vec& b) const { return ldlt_.solve(b); }
    Inertia inertia() const;

private:
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    bool analyzed_ = false;
    Eigen::Index pattern_nnz_ = -1;
    Eigen::Index pattern_n_ = -1;
    double min_abs_ = 0.0;
    double max_abs_ = 0.0;
};

/// Sylvester inertia of A - shift I.
Inertia inertia(const SpMat& A, double shift);

/// Number of eigenvalues of A strictly below x.
int count_below(const SpMat& A, double x);

/// The k eigenvalues of A closest to req.sigma (the k smallest when sigma
/// lies below the spectrum), by shift-invert Lanczos with full
/// reorthogonalization.
EigenResult smallest_eigs(const SpMat& A, const EigenRequest& req);
EigenResult smallest_eigs(const OperatorBundle& b, const EigenRequest& req);

/// All eigenvalues in (lo, hi), certified against the inertia count.
EigenResult eigs_in_interval(const SpMat& A, double lo, double hi, double tol,
                             std::uint64_t seed = 20240607);

/// Full dense diagonalization (oracle path).
EigenResult dense_eigs(const SpMat& A, int k = -1);

/// Process-wide number of Lanczos solves started so far.
std::uint64_t eigensolve_count();

}  // namespace twg
