#include "twistwg/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>

namespace twg {

namespace {

// k-th derivative of the smoothstep on [0, 1].
double smoothstep(CutoffProfile p, double s, int k)
{
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return k == 0 ? 1.0 : 0.0;
    if (p == CutoffProfile::Quintic) {
        switch (k) {
        case 0: return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        case 1: return 30.0 * s * s * (1.0 + s * (-2.0 + s));
        case 2: return s * (60.0 + s * (-180.0 + 120.0 * s));
        default: return 60.0 + s * (-360.0 + 360.0 * s);
        }
    }
    switch (k) {
    case 0: return s * s * s * s * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
    case 1: return s * s * s * (140.0 + s * (-420.0 + s * (420.0 - 140.0 * s)));
    case 2: return s * s * (420.0 + s * (-1680.0 + s * (2100.0 - 840.0 * s)));
    default: return s * (840.0 + s * (-5040.0 + s * (8400.0 - 4200.0 * s)));
    }
}

}  // namespace

double CutoffSpec::eval(double t, int k) const
{
    if (!(ell_star > 0.0)) throw ConfigError("cut-off needs ell* > 0");
    if (k < 0 || k > 3) throw ConfigError("cut-off derivative order must lie in [0, 3]");
    if (t < 0.0) return ((k % 2 == 0) ? -1.0 : 1.0) * eval(-t, k);
    const double u = t - ell_star;
    const double s = 2.0 - 3.0 * std::abs(u) / ell_star;
    const double ds = (u >= 0.0 ? -3.0 : 3.0) / ell_star;
    return smoothstep(profile, s, k) * std::pow(ds, k);
}

double compute_mu1(const ThresholdMode& mode)
{
    if (std::abs(mode.amp_plus - 1.0) > 1e-8) throw NumericError("mode not normalized/critical");
    if (!(mode.decay_rate > 0.5 * mode.decay_expected))
        throw NumericError("mode not normalized/critical: remainder not decaying");
    return mode.dx_energy / mode.spec.ell;
}

Eigen::MatrixXd dx1(const Grid& g, const Eigen::MatrixXd& U)
{
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    for (int i = 1; i + 1 < g.cols(); ++i) {
        const double hm = g.x1[i] - g.x1[i - 1], hp = g.x1[i + 1] - g.x1[i];
        const double cp = hm / (hp * (hm + hp)), cm = -hp / (hm * (hm + hp)), c0 = -(cp + cm);
        D.row(i) = cp * U.row(i + 1) + c0 * U.row(i) + cm * U.row(i - 1);
    }
    return D;
}

Eigen::MatrixXd dx1x1(const Grid& g, const Eigen::MatrixXd& U)
{
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    for (int i = 1; i + 1 < g.cols(); ++i) {
        const double hm = g.x1[i] - g.x1[i - 1], hp = g.x1[i + 1] - g.x1[i];
        const double s = 2.0 / (hm * hp * (hm + hp));
        D.row(i) = s * (hm * U.row(i + 1) - (hm + hp) * U.row(i) + hp * U.row(i - 1));
    }
    return D;
}

namespace {

void zero_dirichlet(const Grid& g, Eigen::MatrixXd& F)
{
    for (int i = 0; i < g.cols(); ++i)
        for (int j = 0; j < g.rows(); ++j)
            if (g.dirichlet[g.node(i, j)]) F(i, j) = 0.0;
}

}  // namespace

Eigen::MatrixXd apply_L1(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& U)
{
    const Eigen::MatrixXd D1 = dx1(g, U), D2 = dx1x1(g, U);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    for (int i = 1; i + 1 < g.cols(); ++i) {
        const double x = g.x1[i];
        F.row(i) = -2.0 * c.eval(x, 1) * D2.row(i) - c.eval(x, 2) * D1.row(i);
    }
    zero_dirichlet(g, F);
    return F;
}

Eigen::MatrixXd apply_L2(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& U)
{
    const Eigen::MatrixXd D1 = dx1(g, U), D2 = dx1x1(g, U);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    for (int i = 1; i + 1 < g.cols(); ++i) {
        const double x = g.x1[i];
        const double xi = c.eval(x, 0), x1 = c.eval(x, 1), x2 = c.eval(x, 2), x3 = c.eval(x, 3);
        F.row(i) = (x1 * x1 - 2.0 * x2 * xi) * D2.row(i) - x3 * xi * D1.row(i);
    }
    zero_dirichlet(g, F);
    return F;
}

namespace {

// Functional y -> mode-1 coefficient of column i (symmetric coordinates).
Vec column_functional(const OperatorBundle& b, int i, bool left_modes)
{
    const Grid& g = b.grid;
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(g.cols(), g.rows());
    Vec f = Vec::Zero(b.size());
    for (int j = 0; j < g.rows(); ++j) {
        if (b.unknown_of_node[g.node(i, j)] < 0) continue;
        E(i, j) = 1.0;
        const double a = column_modes(g, E, i, left_modes)[0];
        E(i, j) = 0.0;
        const int u = b.unknown_of_node[g.node(i, j)];
        f(u) = a / b.sqrt_mass(u);
    }
    return f;
}

Vec end_trace(const OperatorBundle& b, int side, int m)
{
    const EndModes& em = b.ends[side];
    Vec t = Vec::Zero(b.size());
    for (std::size_t r = 0; r < em.rows.size(); ++r) t(em.rows[r]) = em.t(static_cast<Eigen::Index>(r), m);
    return t;
}

// Column weights of the trapezoid rule restricted to [xa, xb] (grid nodes).
std::vector<double> restricted_wx(const Grid& g, double xa, double xb)
{
    std::vector<double> w(g.cols(), 0.0);
    for (int i = 0; i + 1 < g.cols(); ++i) {
        if (g.x1[i] < xa - 1e-12 || g.x1[i + 1] > xb + 1e-12) continue;
        const double h = g.x1[i + 1] - g.x1[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

double weighted_sum(const Grid& g, const std::vector<double>& wx, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B)
{
    double s = 0.0;
    for (int i = 0; i < g.cols(); ++i) {
        if (wx[i] == 0.0) continue;
        for (int j = 0; j < g.rows(); ++j) s += wx[i] * g.wy[j] * A(i, j) * B(i, j);
    }
    return s;
}

constexpr int kStencil = 6;

// Fornberg weights: derivatives 0..2 at x of the interpolant through z.
void lagrange_weights(const double* z, double x, double w[3][kStencil])
{
    double c1 = 1.0, c4 = z[0] - x;
    for (int d = 0; d < 3; ++d)
        for (int a = 0; a < kStencil; ++a) w[d][a] = 0.0;
    w[0][0] = 1.0;
    for (int i = 1; i < kStencil; ++i) {
        const int mn = std::min(i, 2);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = z[i] - x;
        for (int j = 0; j < i; ++j) {
            const double c3 = z[i] - z[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) w[k][i] = c1 * (k * w[k - 1][i - 1] - c5 * w[k][i - 1]) / c2;
                w[0][i] = -c1 * c5 * w[0][i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k) w[k][j] = (c4 * w[k][j] - k * w[k - 1][j]) / c3;
            w[0][j] = c4 * w[0][j] / c3;
        }
        c1 = c2;
    }
}

struct BandPoint {
    int cell = 0;      // x in [x1[cell], x1[cell + 1]]
    int first = 0;     // first interpolation column
    double x = 0.0;
    double w = 0.0;    // quadrature weight in x1
    double c[3][kStencil];
};

// Gauss points covering the support of xi' (cells split at the band edges).
std::vector<BandPoint> band_points(const Grid& g, const CutoffSpec& c)
{
    using Gauss = boost::math::quadrature::gauss<double, 8>;
    const double e = c.ell_star;
    std::vector<double> edges{-5 * e / 3, -4 * e / 3, -2 * e / 3, -e / 3, e / 3, 2 * e / 3, 4 * e / 3, 5 * e / 3};
    std::vector<BandPoint> pts;
    const auto& ab = Gauss::abscissa();
    const auto& wt = Gauss::weights();
    for (int band = 0; band < 4; ++band) {
        const double lo = edges[2 * band], hi = edges[2 * band + 1];
        for (int i = 0; i + 1 < g.cols(); ++i) {
            const double a = std::max(lo, g.x1[i]), b = std::min(hi, g.x1[i + 1]);
            if (!(b > a)) continue;
            const int first = std::clamp(i - kStencil / 2 + 1, 0, g.cols() - kStencil);
            const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
            for (std::size_t k = 0; k < ab.size(); ++k) {
                for (int sgn : {-1, 1}) {
                    if (ab[k] == 0.0 && sgn > 0) continue;
                    BandPoint p;
                    p.cell = i;
                    p.first = first;
                    p.x = mid + sgn * half * ab[k];
                    p.w = half * wt[k];
                    lagrange_weights(&g.x1[first], p.x, p.c);
                    pts.push_back(p);
                }
            }
        }
    }
    return pts;
}

// value, d/dx1 and d2/dx1^2 of the row-j interpolant at a band point
void interp(const BandPoint& p, const Eigen::MatrixXd& U, int j, double v[3])
{
    for (int d = 0; d < 3; ++d) {
        v[d] = 0.0;
        for (int a = 0; a < kStencil; ++a) v[d] += p.c[d][a] * U(p.first + a, j);
    }
}

double L1_at(const CutoffSpec& c, double x, const double v[3])
{
    return -2.0 * c.eval(x, 1) * v[2] - c.eval(x, 2) * v[1];
}

double L2_at(const CutoffSpec& c, double x, const double v[3])
{
    const double xi = c.eval(x, 0), x1 = c.eval(x, 1), x2 = c.eval(x, 2), x3 = c.eval(x, 3);
    return (x1 * x1 - 2.0 * x2 * xi) * v[2] - x3 * xi * v[1];
}

// Load of L1 U against the hat functions in x1 (trapezoid in x2).
Eigen::MatrixXd band_load(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& U)
{
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(U.rows(), U.cols());
    for (const BandPoint& p : band_points(g, c)) {
        const double h = g.x1[p.cell + 1] - g.x1[p.cell];
        const double t = (p.x - g.x1[p.cell]) / h;
        for (int j = 0; j < g.rows(); ++j) {
            if (g.dirichlet[g.node(p.cell, j)] && g.dirichlet[g.node(p.cell + 1, j)]) continue;
            double v[3];
            interp(p, U, j, v);
            const double f = g.wy[j] * p.w * L1_at(c, p.x, v);
            B(p.cell, j) += (1.0 - t) * f;
            B(p.cell + 1, j) += t * f;
        }
    }
    zero_dirichlet(g, B);
    return B;
}

// sum_j wy_j int phi (L1 psi + L2 phi) dx1 over the bands, with L1 moved
// onto phi by parts so that only values of psi enter.
double band_integral(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& Psi)
{
    double s = 0.0;
    for (const BandPoint& p : band_points(g, c)) {
        const double x1 = c.eval(p.x, 1), x2 = c.eval(p.x, 2), x3 = c.eval(p.x, 3);
        for (int j = 0; j < g.rows(); ++j) {
            double f[3], q[3];
            interp(p, Phi, j, f);
            interp(p, Psi, j, q);
            const double adj = -(x3 * f[0] + 3.0 * x2 * f[1] + 2.0 * x1 * f[2]);
            s += g.wy[j] * p.w * (q[0] * adj + f[0] * L2_at(c, p.x, f));
        }
    }
    return s;
}

// (1/2) sum_j wy_j int phi L1 phi dx1
double half_phi_L1_phi(const Grid& g, const CutoffSpec& c, const Eigen::MatrixXd& Phi)
{
    double s = 0.0;
    for (const BandPoint& p : band_points(g, c)) {
        for (int j = 0; j < g.rows(); ++j) {
            double f[3];
            interp(p, Phi, j, f);
            s += g.wy[j] * p.w * f[0] * L1_at(c, p.x, f);
        }
    }
    return 0.5 * s;
}

}  // namespace

double compute_mu1_cutoff(const ThresholdMode& mode, const CutoffSpec& cutoff)
{
    return half_phi_L1_phi(mode.bundle->grid, cutoff, mode.U);
}

Corrector solve_corrector(const ThresholdMode& mode, double mu1, const CutoffSpec& cutoff)
{
    const OperatorBundle& b = *mode.bundle;
    const Grid& g = b.grid;
    const int N = b.size();
    const int wp = mode.wp;
    Corrector out;

    const Eigen::MatrixXd F = band_load(g, cutoff, mode.U);
    Vec rhs(N);
    for (int u = 0; u < N; ++u) rhs(u) = F(b.column_of(u), b.row_of(u)) / b.sqrt_mass(u);
    out.mu1_cutoff = half_phi_L1_phi(g, cutoff, mode.U);
    rhs -= mu1 * (end_trace(b, 0, 0) + wp * end_trace(b, 1, 0));
    out.mismatch = mode.y.dot(rhs);

    const int cr = mode.match_column, cl = g.nearest_column(-g.x1[cr]);
    const Vec gfun = column_functional(b, cr, false) + wp * column_functional(b, cl, true);

    SpMat S = transparent_operator(b, b.tau1);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(S.nonZeros() + 2 * N + N);
    for (int k = 0; k < S.outerSize(); ++k)
        for (SpMat::InnerIterator it(S, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < N; ++i) {
        trip.emplace_back(i, i, -b.tau1);
        if (mode.y(i) != 0.0) trip.emplace_back(i, N, mode.y(i));
        if (gfun(i) != 0.0) trip.emplace_back(N, i, gfun(i));
    }
    SpMat B(N + 1, N + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) throw NumericError("corrector: bordered system singular (ell* off criticality?)");
    Vec r(N + 1);
    r.head(N) = rhs;
    r(N) = 0.0;
    const Vec sol = lu.solve(r);
    if (!sol.allFinite()) throw NumericError("corrector: bordered solve failed");
    out.y = sol.head(N);
    out.multiplier = sol(N);
    const Vec res = S * out.y - b.tau1 * out.y + out.multiplier * mode.y - rhs;
    out.residual = res.norm() / std::max(rhs.norm(), 1e-300);
    out.parity_score = (out.y - wp * apply_parity(b, out.y)).norm() / std::max(out.y.norm(), 1e-300);
    out.U = nodal_field(b, out.y);
    return out;
}

Mu2Result compute_mu2(const ThresholdMode& mode, const Corrector& psi1, double mu1, const CutoffSpec& cutoff)
{
    const OperatorBundle& b = *mode.bundle;
    const Grid& g = b.grid;
    Mu2Result out;
    const double X = g.x1[mode.match_column];
    const std::vector<double> wX = restricted_wx(g, -X, X);

    out.norm_term = -0.5 * mu1 * mu1 * weighted_sum(g, wX, mode.U, mode.U);
    out.operator_term = 0.5 * band_integral(g, cutoff, mode.U, psi1.U);

    // discrete exterior rates beyond X: the exact analogue of 1 / sqrt(E_m - E1)
    const int bot = g.dirichlet[g.node(mode.match_column, 0)] != 0;
    const int top = g.dirichlet[g.node(mode.match_column, g.rows() - 1)] != 0;
    const EndModes em = transverse_modes(g, bot, top);
    const double h = g.h_out;
    double partial = 0.0;
    for (int m = 1; m < static_cast<int>(mode.a_star.size()); ++m) {
        const double am1 = 0.5 * h * h * (em.tau(m) - em.tau(0));
        const double gamma = h * (am1 + 1.0) / std::sqrt(am1 * (am1 + 2.0));  // -2 d(beta)/d(lambda)
        const double term = mode.a_star[m] * mode.a_star[m] * gamma;
        out.mode_sum += term;
        if (m >= 12) out.mode_tail += term;
        else partial += term;
    }
    if (out.mode_tail > 0.01 * partial) out.warnings.push_back("mode-sum tail exceeds 1% of the partial sum");
    out.value = out.norm_term + out.operator_term - 0.5 * mu1 * mu1 * out.mode_sum;
    out.value_printed = out.norm_term + out.operator_term - mu1 * mu1 * out.mode_sum;

    // cutoff-free form: phi~ = psi1 - xi d1 phi - C phi with C fixing phi~ ~ -mu1 x1 chi1
    const double ell = mode.spec.ell;
    const Eigen::MatrixXd D1 = dx1(g, mode.U);
    Eigen::MatrixXd T = psi1.U - mu1 * X * mode.U;
    for (int i = 0; i < g.cols(); ++i) T.row(i) -= cutoff.eval(g.x1[i], 0) * D1.row(i);
    zero_dirichlet(g, T);
    double cross = 0.0;
    for (int i = 0; i + 1 < g.cols(); ++i) {
        const double gap = g.x1[i + 1] - g.x1[i];
        for (int j = 0; j < g.rows(); ++j)
            cross += g.wy[j] * (mode.U(i + 1, j) - mode.U(i, j)) * (T(i + 1, j) - T(i, j)) / gap;
    }
    const EndModes er = transverse_modes(g, g.dirichlet[g.node(g.cols() - 1, 0)] != 0,
                                         g.dirichlet[g.node(g.cols() - 1, g.rows() - 1)] != 0);
    Eigen::MatrixXd R = mode.U;
    const int ny = g.rows() - 1;
    for (int i = 0; i < g.cols(); ++i) {
        const double x = g.x1[i];
        if (std::abs(x) <= ell) continue;
        for (std::size_t r = 0; r < er.rows.size(); ++r) {
            const int j = er.rows[r];
            const double q = er.q(static_cast<Eigen::Index>(r), 0);
            if (x > 0.0) R(i, j) -= q;
            else if (g.spec.variant == Variant::Twisted) R(i, ny - j) -= mode.wp * q;
            else R(i, j) -= mode.wp * q;
        }
    }
    const std::vector<double> wall = restricted_wx(g, -g.gs.L, g.gs.L);
    const double norms = weighted_sum(g, wall, R, R);
    out.cutoff_free = -0.5 * mu1 * mu1 * norms + cross / ell;
    return out;
}

std::pair<double, double> fit_series(const std::vector<double>& eps, const std::vector<double>& mu, double* rms)
{
    const int m = static_cast<int>(eps.size());
    if (m < 2 || static_cast<int>(mu.size()) != m) throw ConfigError("series fit needs matching eps and mu (>= 2)");
    Eigen::MatrixXd M(m, 2);
    Vec r(m);
    for (int i = 0; i < m; ++i) {
        M(i, 0) = 1.0;
        M(i, 1) = eps[i];
        r(i) = mu[i] / eps[i];
    }
    const Vec c = M.colPivHouseholderQr().solve(r);
    if (rms) *rms = std::sqrt((M * c - r).squaredNorm() / m);
    return {c(0), c(1)};
}

namespace {

struct DirectLevel {
    double tau1 = 0.0;
    std::vector<double> lambda, mu;
};

DirectLevel direct_eigenvalues(int n, const WaveguideSpec& spec, double ell_star, const std::vector<double>& eps,
                               const Numerics& nums, int level)
{
    DirectLevel out;
    out.lambda.resize(eps.size());
    out.mu.resize(eps.size());
    std::vector<double> tau(eps.size());
    parallel_for(static_cast<int>(eps.size()), nums.jobs, [&](int k) {
        WaveguideSpec s = spec;
        s.ell = ell_star + eps[k];
        const Grid g = build_grid(s, level_grid(s, nums, level));
        const OperatorBundle nb = assemble(g, EndCondition::neumann());
        if (transparent_count(nb, nb.tau1 * (1.0 - 1e-12)) < n)
            throw NumericError("branch not emerged; ell* likely wrong (eps = " + fmt17(eps[k]) + ")");
        EigenRequest req;
        req.k = n;
        req.sigma = -1.0;
        req.tol = nums.tol;
        req.seed = nums.seed;
        const EigenResult lo = smallest_eigs(nb.A, req);
        const TransparentPair p = transparent_eigenpair(nb, n, lo.values[n - 1], nb.tau1, nums);
        if (!(p.value < nb.tau1)) throw NumericError("branch not emerged; ell* likely wrong");
        out.lambda[k] = p.value;
        out.mu[k] = std::sqrt(nb.tau1 - p.value);
        tau[k] = nb.tau1;
    });
    out.tau1 = tau.empty() ? 0.0 : tau[0];
    return out;
}

}  // namespace

EmergenceSeries emergence_fit(const CriticalBracket& c, const Numerics& num, const EmergenceOptions& opt)
{
    if (c.levels.empty()) throw ConfigError("emergence needs a critical bracket with levels");
    if (opt.eps_factors.size() < 4) throw ConfigError("eps grid needs at least 4 points");
    for (double f : opt.eps_factors)
        if (!(f > 0.0 && f <= 0.2)) throw ConfigError("eps grid must lie in (0, 0.2 ell*]");
    const auto [fmin, fmax] = std::minmax_element(opt.eps_factors.begin(), opt.eps_factors.end());
    if (*fmax < 8.0 * *fmin) throw ConfigError("eps grid must span a factor of at least 8");
    EmergenceSeries out;
    out.n = c.n;
    out.spec = c.spec;
    out.ell_star = c.ell;
    for (double f : opt.eps_factors) out.eps_grid.push_back(f * c.ell);

    const int nl = static_cast<int>(c.levels.size());
    out.levels.resize(nl);
    for (int l = 0; l < nl; ++l) {
        const LevelCritical& lc = c.levels[l];
        Numerics nums = num;
        nums.levels = nl;
        nums.L = lc.L;
        nums.anchor_ell = lc.anchor;
        EmergenceLevel& el = out.levels[l];
        el.nx = lc.nx;
        el.ny = lc.ny;
        el.ell_star = lc.ell;

        const ThresholdMode mode = threshold_mode(c, nums, l);
        CutoffSpec cut = opt.cutoff;
        cut.ell_star = lc.ell;
        el.mu1_integral = compute_mu1(mode);
        el.alpha1 = mode.alpha1;
        el.mu1_alpha = std::numbers::pi * mode.alpha1 * mode.alpha1 / 4.0;
        el.mu1_cutoff = compute_mu1_cutoff(mode, cut);
        el.mismatch = 2.0 * (el.mu1_cutoff - el.mu1_integral);
        const Corrector psi = solve_corrector(mode, el.mu1_cutoff, cut);
        const Mu2Result m2 = compute_mu2(mode, psi, el.mu1_cutoff, cut);
        el.mu2_formula = m2.value;
        el.mu2_printed = m2.value_printed;
        el.mu2_cutoff_free = m2.cutoff_free;
        for (const auto& w : m2.warnings) out.warnings.push_back(w + " (ny = " + std::to_string(lc.ny) + ")");

        const DirectLevel dl = direct_eigenvalues(c.n, c.spec, lc.ell, out.eps_grid, nums, l);
        el.tau1 = dl.tau1;
        el.lambda = dl.lambda;
        el.mu = dl.mu;
        std::tie(el.mu1_fit, el.mu2_fit) = fit_series(out.eps_grid, el.mu);

        if (l == nl - 1) {
            out.lambda_direct = dl.lambda;
            out.mu = dl.mu;
            double rms = 0.0;
            fit_series(out.eps_grid, dl.mu, &rms);
            out.series_residual = rms;
            for (std::size_t k = 1; k < dl.mu.size(); ++k)
                if (!(dl.mu[k] > dl.mu[k - 1])) out.warnings.push_back("mu(eps) not increasing on the grid");
            out.slope_small = std::log(dl.mu[1] / dl.mu[0]) / std::log(out.eps_grid[1] / out.eps_grid[0]);

            // reference coefficients: exact interpolation mu = sum_{p=1..4} c_p eps^p at tiny eps
            std::vector<double> re;
            for (double f : opt.ref_factors) re.push_back(f * c.ell);
            const DirectLevel rl = direct_eigenvalues(c.n, c.spec, lc.ell, re, nums, l);
            const int q = static_cast<int>(re.size());
            Eigen::MatrixXd M(q, q);
            Vec r(q);
            for (int i = 0; i < q; ++i) {
                for (int p = 0; p < q; ++p) M(i, p) = std::pow(re[i], p + 1);
                r(i) = rl.mu[i];
            }
            const Vec coef = M.colPivHouseholderQr().solve(r);
            out.mu1_ref = coef(0);
            out.mu2_ref = coef(1);
            for (std::size_t k = 0; k < out.eps_grid.size(); ++k) {
                const double e = out.eps_grid[k];
                out.remainder.push_back(dl.mu[k] - out.mu1_ref * e - out.mu2_ref * e * e);
            }
            for (std::size_t k = 1; k < out.remainder.size(); ++k)
                out.remainder_ratio.push_back(out.remainder[k] / out.remainder[k - 1]);
        }
    }

    auto extrap = [&](auto field) {
        std::vector<double> v;
        for (const auto& el : out.levels) v.push_back(el.*field);
        return richardson(v).value;
    };
    out.mu1_integral = extrap(&EmergenceLevel::mu1_integral);
    out.mu1_alpha = extrap(&EmergenceLevel::mu1_alpha);
    out.mu1_fit = extrap(&EmergenceLevel::mu1_fit);
    out.mu2_formula = extrap(&EmergenceLevel::mu2_formula);
    out.mu2_printed = extrap(&EmergenceLevel::mu2_printed);
    out.mu2_cutoff_free = extrap(&EmergenceLevel::mu2_cutoff_free);
    out.mu2_fit = extrap(&EmergenceLevel::mu2_fit);
    for (double e : out.eps_grid) out.mu_pred.push_back(out.mu1_fit * e + out.mu2_fit * e * e);
    if (!(out.mu1_integral > 0.0)) out.warnings.push_back("mu1 not positive");
    return out;
}

nlohmann::json to_json(const EmergenceSeries& e)
{
    nlohmann::json j;
    j["n"] = e.n;
    j["d"] = e.spec.d;
    j["variant"] = to_string(e.spec.variant);
    j["ell_star"] = e.ell_star;
    j["mu1_integral"] = e.mu1_integral;
    j["mu1_alpha"] = e.mu1_alpha;
    j["mu1_fit"] = e.mu1_fit;
    j["mu2_formula"] = e.mu2_formula;
    j["mu2_printed"] = e.mu2_printed;
    j["mu2_cutoff_free"] = e.mu2_cutoff_free;
    j["mu2_fit"] = e.mu2_fit;
    j["slope_small"] = e.slope_small;
    j["series_residual"] = e.series_residual;
    j["mu1_ref"] = e.mu1_ref;
    j["mu2_ref"] = e.mu2_ref;
    j["remainder"] = e.remainder;
    j["remainder_ratio"] = e.remainder_ratio;
    j["mu1_agree"] = std::abs(e.mu1_fit - e.mu1_integral) <= 0.05 * std::abs(e.mu1_integral);
    nlohmann::json tab = nlohmann::json::array();
    for (std::size_t k = 0; k < e.eps_grid.size(); ++k)
        tab.push_back({{"eps", e.eps_grid[k]}, {"lambda", e.lambda_direct[k]}, {"mu", e.mu[k]}, {"mu_pred", e.mu_pred[k]}});
    j["table"] = tab;
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& l : e.levels)
        lv.push_back({{"nx", l.nx}, {"ny", l.ny}, {"ell_star", l.ell_star}, {"tau1", l.tau1}, {"mu", l.mu},
                      {"mu1_fit", l.mu1_fit}, {"mu2_fit", l.mu2_fit}, {"mu1_integral", l.mu1_integral},
                      {"mu1_alpha", l.mu1_alpha}, {"mu1_cutoff", l.mu1_cutoff}, {"alpha1", l.alpha1}, {"mu2_formula", l.mu2_formula},
                      {"mu2_printed", l.mu2_printed}, {"mu2_cutoff_free", l.mu2_cutoff_free},
                      {"solvability_mismatch", l.mismatch}});
    j["levels"] = lv;
    j["warnings"] = e.warnings;
    return j;
}

void write_emergence_csv(std::ostream& os, const EmergenceSeries& e)
{
    os << "eps,lambda,mu,mu_pred\n";
    for (std::size_t k = 0; k < e.eps_grid.size(); ++k)
        os << fmt17(e.eps_grid[k]) << ',' << fmt17(e.lambda_direct[k]) << ',' << fmt17(e.mu[k]) << ','
           << fmt17(e.mu_pred[k]) << '\n';
}

}  // namespace twg
