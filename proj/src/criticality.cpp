#include "twistwg/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/math/tools/toms748_solve.hpp>
#include <Eigen/SparseLU>

namespace twg {

std::string to_string(CriticalMethod m)
{
    return m == CriticalMethod::CountBisection ? "count-bisection" : "indicator-zero";
}

int branch_sector(int n)
{
    return n % 2 == 1 ? 1 : -1;
}

namespace {

WaveguideSpec with_ell(WaveguideSpec s, double ell)
{
    s.ell = ell;
    return s;
}

Grid level_grid_at(const WaveguideSpec& spec, double ell, const Numerics& num, int level)
{
    const WaveguideSpec s = with_ell(spec, ell);
    return build_grid(s, level_grid(s, num, level));
}

int resolve_level(const Numerics& num, int level)
{
    if (level < 0) level = num.levels - 1;
    if (level >= num.levels) throw ConfigError("level out of range");
    return level;
}

}  // namespace

IndicatorValue threshold_indicator(const Grid& g, int n, const Numerics& num)
{
    if (n < 1) throw ConfigError("n must be >= 1");
    const OperatorBundle b = assemble(g, EndCondition::neumann());
    IndicatorValue out;
    out.sector = branch_sector(n);
    out.k = (n - 1) / 2;
    const SpMat Q = sector_basis(b, out.sector);
    SpMat S = (Q.transpose() * transparent_operator(b, b.tau1) * Q).pruned();
    for (int i = 0; i < S.rows(); ++i) S.coeffRef(i, i) -= b.tau1;
    EigenRequest req;
    req.k = out.k + 2;
    req.sigma = -b.tau1 - 1.0;
    req.tol = num.tol;
    req.seed = num.seed;
    const EigenResult r = smallest_eigs(S, req);
    if (static_cast<int>(r.values.size()) < out.k + 2) throw NumericError("threshold_indicator: too few eigenvalues");
    out.theta = r.values[out.k];
    out.theta_next = r.values[out.k + 1];
    return out;
}

IndicatorValue threshold_indicator(const WaveguideSpec& spec, int n, const Numerics& num, int level)
{
    level = resolve_level(num, level);
    spec.validate();
    return threshold_indicator(level_grid_at(spec, spec.ell, num, level), n, num);
}

Numerics search_numerics(const WaveguideSpec& spec, const Numerics& num, double hi, double anchor)
{
    Numerics out = num;
    const double need = 1.25 * hi + num.end_margin * spec.d;
    if (num.L == 0.0) out.L = need;
    else if (num.L < need) throw ConfigError("L must be >= 1.25 ell + " + fmt17(num.end_margin) + " d for a critical search (need " + fmt17(need) + ")");
    out.anchor_ell = anchor;
    return out;
}

namespace {

struct Located {
    double ell = 0.0;
    DeltaFit fit;
    int evaluations = 0;
};

// Root of f (positive below, negative above) in [lo, hi].
template <class F>
double indicator_root(F&& f, double lo, double hi, double tol, int& evals)
{
    double flo = f(lo), fhi = f(hi);
    evals += 2;
    if (!(flo > 0.0 && fhi < 0.0)) throw NumericError("no critical point detected in [" + fmt17(lo) + ", " + fmt17(hi) + "]");
    std::uintmax_t it = 100;
    auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    auto counted = [&](double x) {
        ++evals;
        return f(x);
    };
    const auto r = boost::math::tools::toms748_solve(counted, lo, hi, flo, fhi, stop, it);
    return 0.5 * (r.first + r.second);
}

// Smallest ell in [lo, hi] with pred(ell) true, assuming pred(lo) false and pred(hi) true.
template <class P>
double bisect(P&& pred, double lo, double hi, double tol, int& evals)
{
    evals += 2;
    if (pred(lo) || !pred(hi)) throw NumericError("count predicate has no sign change in [" + fmt17(lo) + ", " + fmt17(hi) + "]");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        ++evals;
        if (pred(mid)) hi = mid;
        else lo = mid;
    }
    return 0.5 * (lo + hi);
}

DeltaFit fit_delta(const std::vector<double>& deltas, const std::vector<double>& ells)
{
    DeltaFit f;
    f.deltas = deltas;
    f.ells = ells;
    const int m = static_cast<int>(deltas.size());
    Eigen::MatrixXd M(m, 3);
    Vec rhs(m);
    for (int i = 0; i < m; ++i) {
        M(i, 0) = 1.0;
        M(i, 1) = std::sqrt(deltas[i]);
        M(i, 2) = deltas[i];
        rhs(i) = ells[i];
    }
    const Vec c = M.colPivHouseholderQr().solve(rhs);
    f.ell0 = c(0);
    f.a = c(1);
    f.b = c(2);
    // consecutive differences over the three smallest deltas
    if (m >= 3) {
        const double d1 = ells[1] - ells[0], d2 = ells[2] - ells[1];
        const double ratio = (deltas[2] - deltas[1]) / (deltas[1] - deltas[0]);
        f.exponent = (d1 > 0.0 && d2 > 0.0) ? std::log(d2 / d1) / std::log(ratio) : 0.0;
    }
    f.exponent_ok = std::abs(f.exponent - 0.5) <= 0.125;
    return f;
}

Located locate(int n, const WaveguideSpec& spec, double lo, double hi, const Numerics& nums, int level,
               const CriticalOptions& opt, double coarse_tol)
{
    Located out;
    const double tol = coarse_tol > 0.0 ? coarse_tol : opt.ell_tol;
    if (opt.method == CriticalMethod::IndicatorZero) {
        auto f = [&](double ell) { return threshold_indicator(level_grid_at(spec, ell, nums, level), n, nums).theta; };
        out.ell = indicator_root(f, lo, hi, tol, out.evaluations);
        return out;
    }
    // count bisection, one crossing per delta
    const double E1 = threshold_energy(1, spec.d);
    std::vector<double> deltas;
    for (double fct : opt.delta_factors) deltas.push_back(fct * E1);
    std::sort(deltas.begin(), deltas.end());
    if (coarse_tol > 0.0) deltas.resize(1);
    std::vector<double> ells(deltas.size());
    std::vector<int> evals(deltas.size(), 0);
    parallel_for(static_cast<int>(deltas.size()), nums.jobs, [&](int k) {
        auto pred = [&](double ell) {
            const OperatorBundle b = assemble(level_grid_at(spec, ell, nums, level), EndCondition::neumann());
            return transparent_count(b, b.tau1 - deltas[k]) >= n;
        };
        ells[k] = bisect(pred, lo, hi, tol, evals[k]);
    });
    for (int e : evals) out.evaluations += e;
    if (coarse_tol > 0.0) {
        out.ell = ells[0];
        return out;
    }
    for (std::size_t k = 1; k < ells.size(); ++k)
        if (!(ells[k] >= ells[k - 1])) throw NumericError("count predicate non-monotone in ell (grid too coarse)");
    out.fit = fit_delta(deltas, ells);
    out.ell = out.fit.ell0;
    return out;
}

}  // namespace

LevelCritical refine_critical_length(int n, const WaveguideSpec& spec, double lo, double hi,
                                     const Numerics& num, int level, const CriticalOptions& opt)
{
    if (!(lo < hi)) throw ConfigError("critical search needs lo < hi");
    level = resolve_level(num, level);
    LevelCritical out;
    int evals = 0;

    // coarse location with each ell on its own layout
    Numerics free = search_numerics(spec, num, hi, 0.0);
    free.anchor_ell.reset();
    Located first = locate(n, spec, lo, hi, free, level, opt, 1e-4 * spec.d);
    evals += first.evaluations;

    double anchor = first.ell;
    Located cur;
    for (int pass = 0; pass < 4; ++pass) {
        const Numerics nums = search_numerics(spec, num, hi, anchor);
        // narrow bracket around the anchor, widened until it holds a crossing
        double w = 0.05 * (hi - lo) + 2e-3 * spec.d;
        if (opt.method == CriticalMethod::CountBisection) w += 0.15 * (hi - lo);
        for (;;) {
            const double a = std::max(lo, anchor - w), b = std::min(hi, anchor + w);
            try {
                cur = locate(n, spec, a, b, nums, level, opt, 0.0);
                break;
            } catch (const NumericError& e) {
                if (a <= lo && b >= hi) throw;
                if (std::string(e.what()).find("non-monotone") != std::string::npos) throw;
                w *= 2.0;
            }
        }
        evals += cur.evaluations;
        const Grid at_root = level_grid_at(spec, cur.ell, nums, level);
        Numerics self = nums;
        self.anchor_ell = cur.ell;
        const Grid self_grid = level_grid_at(spec, cur.ell, self, level);
        out.nx = at_root.gs.nx;
        out.ny = at_root.gs.ny;
        out.L = at_root.gs.L;
        out.anchor = anchor;
        out.window_cells = at_root.window_cells;
        out.ell = cur.ell;
        out.fit = cur.fit;
        if (self_grid.window_cells == at_root.window_cells) break;
        anchor = cur.ell;
    }
    const Numerics nums = search_numerics(spec, num, hi, out.anchor);
    out.theta_next = threshold_indicator(level_grid_at(spec, out.ell, nums, level), n, nums).theta_next;
    out.evaluations = evals + 1;
    return out;
}

CriticalBracket critical_length(int n, const WaveguideSpec& spec, const Numerics& num, const CriticalOptions& opt)
{
    if (n < 1) throw ConfigError("n must be >= 1");
    if (!(spec.d > 0.0)) throw ConfigError("d must be > 0");
    CriticalBracket out;
    out.n = n;
    out.spec = spec;
    out.method = opt.method;
    const double d = spec.d;

    if (spec.variant == Variant::Auxiliary && n == 1) {
        // a bound state exists for every ell > 0
        out.spec.ell = 0.0;
        return out;
    }

    double lo, hi;
    if (opt.search_lo && opt.search_hi) {
        lo = *opt.search_lo;
        hi = *opt.search_hi;
    } else if (spec.variant == Variant::Auxiliary) {
        lo = (n - 1) * d - 0.05 * d;
        hi = n * d + 0.05 * d;
    } else {
        CriticalOptions aux_opt = opt;
        aux_opt.method = CriticalMethod::IndicatorZero;
        aux_opt.search_lo.reset();
        aux_opt.search_hi.reset();
        WaveguideSpec aux = spec;
        aux.variant = Variant::Auxiliary;
        const CriticalBracket a1 = critical_length(2 * n - 1, aux, num, aux_opt);
        const CriticalBracket a2 = critical_length(2 * n, aux, num, aux_opt);
        out.aux_lower = a1.ell;
        out.aux_upper = a2.ell;
        lo = 0.5 * a1.ell - 0.02 * d;
        hi = 0.5 * a2.ell + 0.02 * d;
    }
    lo = std::max(lo, 0.01 * d);
    if (opt.search_lo) lo = *opt.search_lo;
    if (opt.search_hi) hi = *opt.search_hi;
    out.search_lo = lo;
    out.search_hi = hi;

    out.levels.resize(num.levels);
    for (int l = 0; l < num.levels; ++l) out.levels[l] = refine_critical_length(n, spec, lo, hi, num, l, opt);

    std::vector<double> v;
    for (const auto& lc : out.levels) {
        v.push_back(lc.ell);
        if (opt.method == CriticalMethod::CountBisection && !lc.fit.exponent_ok)
            out.warnings.push_back("delta extrapolation exponent " + fmt17(lc.fit.exponent) + " at ny = " +
                                   std::to_string(lc.ny) + " is off 0.5 by more than 25%");
    }
    const Extrapolation ex = richardson(v);
    out.ell = ex.value;
    out.uncertainty = std::max(ex.error, opt.ell_tol);
    out.order = ex.order;
    out.lo = out.ell - out.uncertainty;
    out.hi = out.ell + out.uncertainty;
    out.spec.ell = out.ell;
    return out;
}

Eigen::MatrixXd nodal_field(const OperatorBundle& b, const Vec& y)
{
    const Grid& g = b.grid;
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(g.cols(), g.rows());
    for (int u = 0; u < b.size(); ++u) U(b.column_of(u), b.row_of(u)) = y(u) / b.sqrt_mass(u);
    return U;
}

double dx_energy(const Grid& g, const Eigen::MatrixXd& U, double xa, double xb)
{
    double s = 0.0;
    for (int i = 0; i + 1 < g.cols(); ++i) {
        if (g.x1[i] < xa - 1e-12 || g.x1[i + 1] > xb + 1e-12) continue;
        const double gap = g.x1[i + 1] - g.x1[i];
        for (int j = 0; j < g.rows(); ++j) {
            const double du = U(i + 1, j) - U(i, j);
            s += g.wy[j] * du * du / gap;
        }
    }
    return s;
}

std::vector<double> column_modes(const Grid& g, const Eigen::MatrixXd& U, int i, bool left_modes)
{
    const int ny = g.rows() - 1;
    const bool bot = g.dirichlet[g.node(i, 0)] != 0;
    const bool top = g.dirichlet[g.node(i, ny)] != 0;
    EndModes em;
    if (left_modes && g.spec.variant == Variant::Twisted) {
        const EndModes r = transverse_modes(g, top, bot);
        em.q = r.q.colwise().reverse();
        em.rows.resize(r.rows.size());
        for (std::size_t k = 0; k < r.rows.size(); ++k) em.rows[k] = ny - r.rows[r.rows.size() - 1 - k];
    } else {
        em = transverse_modes(g, bot, top);
    }
    std::vector<double> a(em.q.cols(), 0.0);
    for (int m = 0; m < em.q.cols(); ++m)
        for (std::size_t r = 0; r < em.rows.size(); ++r)
            a[m] += g.wy[em.rows[r]] * em.q(static_cast<Eigen::Index>(r), m) * U(i, em.rows[r]);
    return a;
}

namespace {

double remainder_norm(const std::vector<double>& a)
{
    double s = 0.0;
    for (std::size_t m = 1; m < a.size(); ++m) s += a[m] * a[m];
    return std::sqrt(s);
}

double end_coefficient(const EndModes& em, const Vec& y, int m)
{
    double c = 0.0;
    for (std::size_t r = 0; r < em.rows.size(); ++r) c += em.t(static_cast<Eigen::Index>(r), m) * y(em.rows[r]);
    return c;
}

struct CornerFit {
    double alpha1 = 0.0, alpha3 = 0.0, rms = 0.0;
    int points = 0;
};

CornerFit fit_corner(const Grid& g, const Eigen::MatrixXd& U, double ell, double k)
{
    const double h = std::max({g.hy, g.h_in, g.h_out});
    std::vector<std::array<double, 3>> rows;
    std::vector<double> rhs;
    for (int i = 0; i < g.cols(); ++i) {
        const double dx = g.x1[i] - ell;
        if (std::abs(dx) > 10.0 * h) continue;
        for (int j = 0; j < g.rows(); ++j) {
            const double r = std::hypot(dx, g.x2[j]);
            if (r < 2.0 * h || r > 10.0 * h) continue;
            const double th = std::atan2(g.x2[j], dx);
            const double z = k * r, sr = std::sqrt(r);
            const double j0 = std::sin(z) / z;
            const double j1 = std::sin(z) / (z * z) - std::cos(z) / z;
            const double j2 = (3.0 / (z * z) - 1.0) * std::sin(z) / z - 3.0 * std::cos(z) / (z * z);
            rows.push_back({sr * j0 * std::sin(0.5 * th), 3.0 * sr * j1 / k * std::sin(1.5 * th),
                            15.0 * sr * j2 / (k * k) * std::sin(2.5 * th)});
            rhs.push_back(U(i, j));
        }
    }
    CornerFit f;
    f.points = static_cast<int>(rows.size());
    if (f.points < 6) throw NumericError("corner fit: too few nodes in the annulus");
    Eigen::MatrixXd M(f.points, 3);
    Vec b(f.points);
    for (int p = 0; p < f.points; ++p) {
        for (int c = 0; c < 3; ++c) M(p, c) = rows[p][c];
        b(p) = rhs[p];
    }
    const Vec c = M.colPivHouseholderQr().solve(b);
    f.alpha1 = c(0);
    f.alpha3 = c(1);
    f.rms = std::sqrt((M * c - b).squaredNorm() / f.points);
    return f;
}

// Exterior x-derivative energy of the m >= 2 components beyond an end.
double tail_dx_energy(const EndModes& em, const Vec& y, double lambda)
{
    double s = 0.0;
    for (int m = 1; m < em.tau.size(); ++m) {
        const double c = end_coefficient(em, y, m);
        const double am1 = 0.5 * em.h * em.h * (em.tau(m) - lambda);
        const double rho = 1.0 + am1 - std::sqrt(am1 * (am1 + 2.0));
        s += c * c * (1.0 - rho) / (em.h * (1.0 + rho));
    }
    return s;
}

}  // namespace

ThresholdMode threshold_mode(double ell_n, int n, const WaveguideSpec& spec_in, const Numerics& num, int level,
                             double critical_tol)
{
    if (n < 1) throw ConfigError("n must be >= 1");
    level = resolve_level(num, level);
    WaveguideSpec spec = with_ell(spec_in, ell_n);
    spec.validate();
    const double d = spec.d;
    ThresholdMode t;
    t.n = n;
    t.spec = spec;
    const Grid g = build_grid(spec, level_grid(spec, num, level));
    if (g.gs.L < ell_n + 3.0 * d - 1e-12) throw ConfigError("L must be >= ell + 3 d");
    auto bundle = std::make_shared<OperatorBundle>(assemble(g, EndCondition::neumann()));
    const OperatorBundle& b = *bundle;
    const int N = b.size();
    const double tau1 = b.tau1;
    const SpMat AT = transparent_operator(b, tau1);

    // bordered system [S -c; c^T 0][y; s] = [0; 1]
    const EndModes& right = b.ends[0];
    Vec c = Vec::Zero(N);
    for (std::size_t r = 0; r < right.rows.size(); ++r) c(right.rows[r]) = right.t(static_cast<Eigen::Index>(r), 0);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(AT.nonZeros() + 2 * right.rows.size() + N);
    for (int k = 0; k < AT.outerSize(); ++k)
        for (SpMat::InnerIterator it(AT, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < N; ++i) trip.emplace_back(i, i, -tau1);
    for (std::size_t r = 0; r < right.rows.size(); ++r) {
        const double v = right.t(static_cast<Eigen::Index>(r), 0);
        trip.emplace_back(right.rows[r], N, -v);
        trip.emplace_back(N, right.rows[r], v);
    }
    SpMat B(N + 1, N + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(B);
    if (lu.info() != Eigen::Success) throw NumericError("ell not critical: bordered system singular");
    Vec rhs = Vec::Zero(N + 1);
    rhs(N) = 1.0;
    const Vec sol = lu.solve(rhs);
    if (!sol.allFinite()) throw NumericError("ell not critical: bordered solve failed");
    t.flux_defect = sol(N);
    if (std::abs(t.flux_defect) > critical_tol)
        throw NumericError("ell not critical: flux defect " + fmt17(t.flux_defect));
    Vec y = sol.head(N);

    // parity, then exact symmetrization
    const Vec Py = apply_parity(b, y);
    t.wp = y.dot(Py) >= 0.0 ? 1 : -1;
    t.parity_score = (y - t.wp * Py).norm() / y.norm();
    y = 0.5 * (y + t.wp * Py);
    y /= end_coefficient(right, y, 0);
    t.amp_plus = end_coefficient(right, y, 0);
    t.amp_minus = end_coefficient(b.ends[1], y, 0);

    const double E1 = threshold_energy(1, d);
    t.residual = (AT * y - E1 * y).norm() / y.norm();
    t.U = nodal_field(b, y);
    t.y = y;

    t.match_x = ell_n + 2.0 * d;
    t.match_column = g.nearest_column(t.match_x);
    t.a_star = column_modes(g, t.U, t.match_column, false);
    t.a_star_left = column_modes(g, t.U, g.nearest_column(-t.match_x), true);
    const int c3 = g.nearest_column(ell_n + 3.0 * d);
    const double r2 = remainder_norm(t.a_star), r3 = remainder_norm(column_modes(g, t.U, c3, false));
    t.decay_rate = std::log(r2 / r3) / (g.x1[c3] - g.x1[t.match_column]);
    t.decay_expected = std::sqrt(threshold_energy(2, d) - E1);

    t.dx_energy = dx_energy(g, t.U, -g.gs.L, g.gs.L) + tail_dx_energy(b.ends[0], y, tau1) +
                  tail_dx_energy(b.ends[1], y, tau1);
    const CornerFit cf = fit_corner(g, t.U, ell_n, std::sqrt(E1));
    t.alpha1 = cf.alpha1;
    t.alpha3 = cf.alpha3;
    t.alpha_fit_rms = cf.rms;
    t.alpha_fit_points = cf.points;
    t.bundle = bundle;
    return t;
}

ThresholdMode threshold_mode(const CriticalBracket& c, const Numerics& num, int level, double critical_tol)
{
    level = resolve_level(num, level);
    if (level >= static_cast<int>(c.levels.size())) throw ConfigError("critical bracket lacks that level");
    const LevelCritical& lc = c.levels[level];
    Numerics nums = num;
    nums.L = lc.L;
    nums.anchor_ell = lc.anchor;
    return threshold_mode(lc.ell, c.n, c.spec, nums, level, critical_tol);
}

nlohmann::json to_json(const CriticalBracket& c)
{
    nlohmann::json j;
    j["n"] = c.n;
    j["d"] = c.spec.d;
    j["variant"] = to_string(c.spec.variant);
    j["method"] = to_string(c.method);
    j["ell"] = c.ell;
    j["lo"] = c.lo;
    j["hi"] = c.hi;
    j["uncertainty"] = c.uncertainty;
    j["order"] = c.order;
    j["search_lo"] = c.search_lo;
    j["search_hi"] = c.search_hi;
    if (c.aux_lower) j["aux_lower"] = *c.aux_lower;
    if (c.aux_upper) j["aux_upper"] = *c.aux_upper;
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& l : c.levels) {
        nlohmann::json e{{"nx", l.nx}, {"ny", l.ny}, {"L", l.L}, {"anchor", l.anchor},
                         {"window_cells", l.window_cells}, {"ell", l.ell}, {"theta_next", l.theta_next},
                         {"evaluations", l.evaluations}};
        if (!l.fit.deltas.empty())
            e["delta_fit"] = {{"deltas", l.fit.deltas}, {"ells", l.fit.ells}, {"ell0", l.fit.ell0},
                              {"a", l.fit.a}, {"b", l.fit.b}, {"exponent", l.fit.exponent},
                              {"exponent_ok", l.fit.exponent_ok}};
        lv.push_back(e);
    }
    j["levels"] = lv;
    j["warnings"] = c.warnings;
    return j;
}

nlohmann::json to_json(const ThresholdMode& t)
{
    const Grid& g = t.bundle->grid;
    return {{"n", t.n},
            {"ell", t.spec.ell},
            {"d", t.spec.d},
            {"variant", to_string(t.spec.variant)},
            {"nx", g.gs.nx},
            {"ny", g.gs.ny},
            {"L", g.gs.L},
            {"amp_plus", t.amp_plus},
            {"amp_minus", t.amp_minus},
            {"wp", t.wp},
            {"parity_score", t.parity_score},
            {"alpha1", t.alpha1},
            {"alpha3", t.alpha3},
            {"alpha_fit_rms", t.alpha_fit_rms},
            {"residual", t.residual},
            {"flux_defect", t.flux_defect},
            {"match_x", t.match_x},
            {"a_star", t.a_star},
            {"decay_rate", t.decay_rate},
            {"decay_expected", t.decay_expected},
            {"dx_energy", t.dx_energy}};
}

void write_mode_csv(std::ostream& os, const ThresholdMode& t)
{
    const Grid& g = t.bundle->grid;
    os << "x1,x2,value\n";
    for (int i = 0; i < g.cols(); ++i)
        for (int j = 0; j < g.rows(); ++j)
            os << fmt17(g.x1[i]) << ',' << fmt17(g.x2[j]) << ',' << fmt17(t.U(i, j)) << '\n';
}

}  // namespace twg
