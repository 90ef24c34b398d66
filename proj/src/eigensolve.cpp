#include "twistwg/eigensolve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

namespace twg {

namespace {
std::atomic<std::uint64_t> g_solves{0};
}

std::uint64_t eigensolve_count()
{
    return g_solves.load();
}

bool EigenResult::all_converged() const
{
    return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
}

namespace {

SpMat shifted(const SpMat& A, double sigma)
{
    SpMat S = A;
    if (sigma != 0.0) {
        SpMat I(A.rows(), A.cols());
        I.setIdentity();
        S = A - sigma * I;
    }
    S.makeCompressed();
    return S;
}

Vec random_unit(std::mt19937_64& rng, Eigen::Index n)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v / v.norm();
}

void orthogonalize(Vec& w, const std::vector<Vec>& V)
{
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& v : V) w -= v.dot(w) * v;
}

}  // namespace

bool ShiftedLdlt::factorize(const SpMat& A, double sigma)
{
    const SpMat S = shifted(A, sigma);
    if (!analyzed_ || pattern_nnz_ != S.nonZeros() || pattern_n_ != S.rows()) {
        ldlt_.analyzePattern(S);
        analyzed_ = true;
        pattern_nnz_ = S.nonZeros();
        pattern_n_ = S.rows();
    }
    ldlt_.factorize(S);
    if (ldlt_.info() != Eigen::Success) return false;
    const Vec d = ldlt_.vectorD();
    min_abs_ = d.cwiseAbs().minCoeff();
    max_abs_ = d.cwiseAbs().maxCoeff();
    return std::isfinite(max_abs_) && min_abs_ > 1e-15 * max_abs_;
}

Inertia ShiftedLdlt::inertia() const
{
    Inertia in;
    const Vec d = ldlt_.vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) < 0.0) ++in.neg;
        else if (d(i) > 0.0) ++in.pos;
        else ++in.zero;
    }
    in.min_abs_pivot = min_abs_;
    return in;
}

Inertia inertia(const SpMat& A, double shift)
{
    ShiftedLdlt f;
    if (!f.factorize(A, shift)) throw NumericError("LDL^T breakdown while counting eigenvalues");
    return f.inertia();
}

int count_below(const SpMat& A, double x)
{
    return inertia(A, x).neg;
}

EigenResult dense_eigs(const SpMat& A, int k)
{
    const Eigen::MatrixXd M(A);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
    const int n = static_cast<int>(M.rows());
    const int take = k < 0 ? n : std::min(k, n);
    EigenResult r;
    for (int i = 0; i < take; ++i) {
        const Vec v = es.eigenvectors().col(i);
        r.values.push_back(es.eigenvalues()(i));
        r.vectors.push_back(v);
        r.residuals.push_back((M * v - es.eigenvalues()(i) * v).norm());
        r.converged.push_back(true);
    }
    return r;
}

namespace {

struct Ritz {
    std::vector<double> values;
    std::vector<Vec> vectors;
    std::vector<double> residuals;
};

// Ritz pairs of the k largest |theta| of T, mapped back to A.
Ritz extract(const SpMat& A, const std::vector<Vec>& V, const std::vector<double>& alpha,
             const std::vector<double>& beta, double sigma, int k)
{
    const int m = static_cast<int>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
    });
    Ritz out;
    const int take = std::min(k, m);
    for (int t = 0; t < take; ++t) {
        const int i = idx[t];
        const double theta = es.eigenvalues()(i);
        Vec y = Vec::Zero(V.front().size());
        for (int j = 0; j < m; ++j) y += es.eigenvectors()(j, i) * V[j];
        y /= y.norm();
        const double lambda = sigma + 1.0 / theta;
        out.values.push_back(lambda);
        out.residuals.push_back((A * y - lambda * y).norm());
        out.vectors.push_back(std::move(y));
    }
    return out;
}

}  // namespace

EigenResult smallest_eigs(const SpMat& A, const EigenRequest& req)
{
    ++g_solves;
    if (req.k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(req.tol > 0.0)) throw std::invalid_argument("tol must be > 0");
    const int n = static_cast<int>(A.rows());
    if (n <= req.dense_below) {
        EigenResult all = dense_eigs(A);
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return std::abs(all.values[a] - req.sigma) < std::abs(all.values[b] - req.sigma);
        });
        idx.resize(std::min(req.k, n));
        std::sort(idx.begin(), idx.end());
        EigenResult r;
        r.sigma_used = req.sigma;
        for (int i : idx) {
            r.values.push_back(all.values[i]);
            r.vectors.push_back(all.vectors[i]);
            r.residuals.push_back(all.residuals[i]);
            r.converged.push_back(all.residuals[i] <= req.tol);
        }
        return r;
    }

    EigenResult res;
    ShiftedLdlt f;
    double sigma = req.sigma;
    const double step = 1e-7 * std::max(1.0, std::abs(sigma));
    while (!f.factorize(A, sigma)) {
        if (++res.reshifts > 8) throw NumericError("shift-invert factorization failed after re-shifting");
        sigma -= step * std::pow(4.0, res.reshifts);
    }
    res.sigma_used = sigma;

    const int k = std::min(req.k, n);
    const int pmax = std::min(n, std::max(req.max_iter, k + 2));
    std::mt19937_64 rng(req.seed);
    std::vector<Vec> V{random_unit(rng, n)};
    std::vector<double> alpha, beta;
    Ritz ritz;
    bool done = false;
    const int first_check = std::min(pmax, std::max(2 * k + 8, 20));

    for (int j = 0; j < pmax; ++j) {
        Vec w = f.solve(V[j]);
        alpha.push_back(V[j].dot(w));
        orthogonalize(w, V);
        const double b = w.norm();
        const int m = j + 1;
        if (m >= first_check && ((m - first_check) % 6 == 0 || m == pmax || b == 0.0)) {
            ritz = extract(A, V, alpha, beta, sigma, k);
            res.iterations = m;
            const bool ok = static_cast<int>(ritz.values.size()) == k &&
                std::all_of(ritz.residuals.begin(), ritz.residuals.end(),
                            [&](double r) { return r <= req.tol; });
            if (ok) {
                done = true;
                break;
            }
        }
        if (m == pmax) break;
        const double scale = std::max(std::abs(alpha.back()), 1e-300);
        if (b <= 1e-13 * scale) {
            // invariant subspace: continue with a fresh direction
            Vec r = random_unit(rng, n);
            orthogonalize(r, V);
            beta.push_back(0.0);
            V.push_back(r / r.norm());
        } else {
            beta.push_back(b);
            V.push_back(w / b);
        }
    }
    if (!done) {
        ritz = extract(A, V, alpha, beta, sigma, k);
        res.iterations = static_cast<int>(alpha.size());
    }

    std::vector<int> idx(ritz.values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ritz.values[a] < ritz.values[b]; });
    for (int i : idx) {
        res.values.push_back(ritz.values[i]);
        res.vectors.push_back(ritz.vectors[i]);
        res.residuals.push_back(ritz.residuals[i]);
        res.converged.push_back(ritz.residuals[i] <= req.tol);
    }
    return res;
}

EigenResult smallest_eigs(const OperatorBundle& b, const EigenRequest& req)
{
    return smallest_eigs(b.A, req);
}

EigenResult eigs_in_interval(const SpMat& A, double lo, double hi, double tol, std::uint64_t seed)
{
    if (!(lo < hi)) throw std::invalid_argument("eigs_in_interval: lo must be < hi");
    const Inertia a = inertia(A, lo);
    const Inertia b = inertia(A, hi);
    const int count = b.neg - (a.neg + a.zero);
    EigenResult r;
    r.sigma_used = 0.5 * (lo + hi);
    if (count <= 0) return r;

    EigenRequest req;
    req.k = count + 2;
    req.sigma = 0.5 * (lo + hi);
    req.tol = tol;
    req.seed = seed;
    req.max_iter = std::max(req.max_iter, 4 * req.k + 40);
    const EigenResult near = smallest_eigs(A, req);
    for (std::size_t i = 0; i < near.values.size(); ++i) {
        if (near.values[i] > lo && near.values[i] < hi) {
            r.values.push_back(near.values[i]);
            r.vectors.push_back(near.vectors[i]);
            r.residuals.push_back(near.residuals[i]);
            r.converged.push_back(near.converged[i]);
        }
    }
    r.sigma_used = near.sigma_used;
    r.reshifts = near.reshifts;
    r.iterations = near.iterations;
    if (static_cast<int>(r.values.size()) != count)
        throw NumericError("eigs_in_interval: Lanczos found " + std::to_string(r.values.size()) +
                           " eigenvalues but the inertia count is " + std::to_string(count));
    return r;
}

}  // namespace twg
