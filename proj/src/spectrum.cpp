#include "twistwg/spectrum.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>


namespace twg {

std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double truncation_length(const WaveguideSpec& spec, const Numerics& num)
{
    const double need = spec.ell + num.end_margin * spec.d;
    if (num.L == 0.0) return need;
    if (num.L < need - 1e-12 * need)
        throw ConfigError("L must be >= ell + " + fmt17(num.end_margin) + " d (got L = " + fmt17(num.L) +
                          ", need " + fmt17(need) + ")");
    return num.L;
}

GridSpec level_grid(const WaveguideSpec& spec, const Numerics& num, int level)
{
    if (num.ny < 4) throw ConfigError("ny must be >= 4");
    if (num.levels < 1) throw ConfigError("levels must be >= 1");
    const int f = 1 << level;
    GridSpec gs;
    gs.L = truncation_length(spec, num);
    gs.ny = num.ny * f;
    if (num.nx > 0) {
        if (num.nx % 2 != 0) throw ConfigError("nx must be even");
        gs.nx = num.nx * f;
    } else {
        const double h = spec.d / num.ny;
        gs.nx = 2 * static_cast<int>(std::ceil(gs.L / h - 1e-9)) * f;
    }
    gs.offset = num.offset;
    gs.anchor_ell = num.anchor_ell;
    return gs;
}

Extrapolation richardson(const std::vector<double>& v)
{
    Extrapolation e;
    const std::size_t n = v.size();
    if (n == 0) throw std::invalid_argument("richardson: no values");
    if (n == 1) {
        e.value = v[0];
        e.error = std::abs(v[0]) * 1e-2;
        return e;
    }
    double p = 1.0;
    if (n >= 3) {
        const double d1 = v[n - 2] - v[n - 3];
        const double d2 = v[n - 1] - v[n - 2];
        if (d1 != 0.0 && d2 != 0.0 && (d1 > 0) == (d2 > 0)) {
            p = std::clamp(std::log2(d1 / d2), 0.5, 3.0);
            e.order_estimated = true;
        }
    }
    const double corr = (v[n - 1] - v[n - 2]) / (std::pow(2.0, p) - 1.0);
    e.value = v[n - 1] + corr;
    e.order = p;
    // the correction itself, plus the spread against a first-order guess
    const double first = v[n - 1] + (v[n - 1] - v[n - 2]);
    e.error = std::max(std::abs(corr), 0.25 * std::abs(first - e.value));
    return e;
}

std::string to_string(Parity p)
{
    switch (p) {
    case Parity::Even: return "even";
    case Parity::Odd: return "odd";
    default: return "undetermined";
    }
}

ParityResult classify_parity(const Vec& y, const OperatorBundle& b, double threshold)
{
    if (y.size() != b.size()) throw std::invalid_argument("classify_parity: vector size mismatch");
    const Vec py = apply_parity(b, y);
    const double n = y.norm();
    ParityResult r;
    if (n == 0.0) return r;
    r.score_even = (y - py).norm() / n;
    r.score_odd = (y + py).norm() / n;
    if (r.score_even < threshold) r.parity = Parity::Even;
    else if (r.score_odd < threshold) r.parity = Parity::Odd;
    return r;
}

int transparent_count(const OperatorBundle& b, double lambda)
{
    return count_below(transparent_operator(b, std::min(lambda, b.tau1)), lambda);
}

namespace {

// y^T D'(lambda) y for the transparent end blocks (non-positive).
double closure_slope(const OperatorBundle& b, double lambda, const Vec& y, int n_modes)
{
    double s = 0.0;
    for (const auto& em : b.ends) {
        const int nm = static_cast<int>(em.tau.size());
        const int exact = (n_modes <= 0 || n_modes > nm) ? nm : n_modes;
        for (int m = 0; m < exact; ++m) {
            double c = 0.0;
            for (std::size_t r = 0; r < em.rows.size(); ++r) c += em.t(static_cast<Eigen::Index>(r), m) * y(em.rows[r]);
            const double am1 = 0.5 * em.h * em.h * (em.tau(m) - lambda);
            if (am1 <= 0.0) return -std::numeric_limits<double>::infinity();
            const double dbeta = -0.5 * em.h * (am1 + 1.0) / std::sqrt(am1 * (am1 + 2.0));
            s += dbeta * c * c;
        }
    }
    return s;
}

}  // namespace

TransparentPair transparent_eigenpair(const OperatorBundle& b, int m, double lo, double hi,
                                      const Numerics& num)
{
    hi = std::min(hi, b.tau1);
    if (!(lo <= hi)) throw NumericError("transparent_eigenpair: empty bracket");
    TransparentPair out;
    EigenRequest req;
    req.k = m;
    req.sigma = std::min(-1.0, lo - 1.0);
    req.tol = num.tol;
    req.seed = num.seed;

    // f(x) = theta_m(x) - x has slope <= -1, so |x - root| <= |f(x)|.
    // Safeguarded Newton inside the bracket [a, c].
    double a = lo, c = hi, x = lo;
    const double scale = std::max(1.0, std::abs(hi));
    const double ftol = 1e-13 * scale;
    for (int it = 0; it < 80; ++it) {
        ++out.evaluations;
        const EigenResult r = smallest_eigs(transparent_operator(b, x, num.n_modes), req);
        if (static_cast<int>(r.values.size()) < m) throw NumericError("transparent_eigenpair: too few Ritz values");
        const double fx = r.values[m - 1] - x;
        out.vector = r.vectors[m - 1];
        out.residual = r.residuals[m - 1];
        out.value = x;
        if (std::abs(fx) <= ftol) return out;
        if (fx > 0.0) a = x;
        else c = x;
        if (c - a <= ftol) return out;
        const double slope = closure_slope(b, x, out.vector, num.n_modes) - 1.0;
        double xn = std::isfinite(slope) ? x - fx / slope : 0.5 * (a + c);
        if (!(xn > a && xn < c)) xn = 0.5 * (a + c);
        x = xn;
    }
    throw NumericError("transparent_eigenpair: no convergence");
}

bool SpectrumReport::parity_alternates() const
{
    for (std::size_t i = 0; i < eigenvalues.size(); ++i)
        if (eigenvalues[i].parity != (i % 2 == 0 ? Parity::Even : Parity::Odd)) return false;
    return true;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& f)
{
    const int workers = std::max(1, std::min(jobs, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

namespace {

struct LevelSolve {
    LevelInfo info;
    std::vector<double> lower, upper, value;
    std::vector<ParityResult> parity;
    std::vector<std::string> warnings;
};

LevelSolve solve_level(const WaveguideSpec& spec, const Numerics& num, int level)
{
    LevelSolve s;
    const Grid g = build_grid(spec, level_grid(spec, num, level));
    const OperatorBundle nb = assemble(g, EndCondition::neumann());
    const OperatorBundle db = assemble(g, EndCondition::dirichlet());
    s.info = {g.cols() - 1, g.rows() - 1, g.gs.L, g.hx_nominal(), g.hy, nb.tau1, 0};
    const double below = nb.tau1 * (1.0 - 1e-12);
    const int c = transparent_count(nb, below);
    s.info.count = c;
    if (c == 0) return s;

    EigenRequest req;
    req.k = c;
    req.sigma = -1.0;
    req.tol = num.tol;
    req.seed = num.seed;
    const EigenResult lo = smallest_eigs(nb.A, req);
    const EigenResult hi = smallest_eigs(db.A, req);
    if (!lo.all_converged() || !hi.all_converged())
        s.warnings.push_back("truncated eigenpairs not converged at level " + std::to_string(level));
    for (int m = 1; m <= c; ++m) {
        const double up = m <= static_cast<int>(hi.values.size()) ? hi.values[m - 1] : nb.tau1;
        const TransparentPair p = transparent_eigenpair(nb, m, lo.values[m - 1], up, num);
        if (p.residual > num.tol)
            s.warnings.push_back("transparent eigenpair " + std::to_string(m) + " residual " + fmt17(p.residual));
        s.lower.push_back(lo.values[m - 1]);
        s.upper.push_back(up);
        s.value.push_back(p.value);
        s.parity.push_back(classify_parity(p.vector, nb));
    }
    return s;
}

}  // namespace

SpectrumReport discrete_spectrum(const WaveguideSpec& spec, const Numerics& num)
{
    spec.validate();
    SpectrumReport r;
    r.spec = spec;
    r.numerics = num;
    r.E1 = threshold_energy(1, spec.d);
    r.margin = 1e-3 * r.E1;
    truncation_length(spec, num);

    std::vector<LevelSolve> lv(num.levels);
    parallel_for(num.levels, num.jobs, [&](int l) { lv[l] = solve_level(spec, num, l); });

    int maxc = 0;
    for (const auto& s : lv) {
        r.levels.push_back(s.info);
        maxc = std::max(maxc, s.info.count);
        r.warnings.insert(r.warnings.end(), s.warnings.begin(), s.warnings.end());
    }
    const LevelSolve& fine = lv.back();
    bool certified = true;
    for (int m = 1; m <= maxc; ++m) {
        BracketedEigenvalue e;
        e.m = m;
        bool everywhere = true;
        for (const auto& s : lv) {
            if (m <= s.info.count) e.level_values.push_back(s.value[m - 1]);
            else everywhere = false;
        }
        if (m <= fine.info.count) {
            e.lower = fine.lower[m - 1];
            e.upper = fine.upper[m - 1];
            e.value = fine.value[m - 1];
            e.parity = fine.parity[m - 1].parity;
            e.parity_score = std::min(fine.parity[m - 1].score_even, fine.parity[m - 1].score_odd);
        }
        if (everywhere) {
            const Extrapolation x = richardson(e.level_values);
            e.extrapolated = x.value;
            e.error = x.error;
            e.order = x.order;
        } else {
            e.extrapolated = e.level_values.back();
            e.error = std::abs(r.E1 - e.extrapolated);
        }
        const double margin = std::max(r.margin, 2.0 * e.error);
        certified = certified && everywhere && e.extrapolated < r.E1 - margin;
        if (certified) {
            if (e.parity == Parity::Undetermined)
                r.warnings.push_back("parity undetermined for eigenvalue " + std::to_string(m));
            r.eigenvalues.push_back(std::move(e));
        } else {
            r.near.push_back(std::move(e));
        }
    }
    r.count = static_cast<int>(r.eigenvalues.size());
    if (!r.near.empty())
        r.warnings.push_back("near-threshold, count uncertain: " + std::to_string(r.near.size()) +
                             " eigenvalue(s) within the margin of E1");
    return r;
}

EdgeReport spectrum_edge(const WaveguideSpec& spec, const Numerics& num)
{
    spec.validate();
    EdgeReport e;
    e.spec = spec;
    e.E1 = threshold_energy(1, spec.d);
    e.levels.resize(num.levels);
    parallel_for(num.levels, num.jobs, [&](int l) {
        const Grid g = build_grid(spec, level_grid(spec, num, l));
        const OperatorBundle nb = assemble(g, EndCondition::neumann());
        const OperatorBundle db = assemble(g, EndCondition::dirichlet());
        EigenRequest req;
        req.sigma = -1.0;
        req.tol = num.tol;
        req.seed = num.seed;
        EdgeLevel& el = e.levels[l];
        el.nx = g.cols() - 1;
        el.ny = g.rows() - 1;
        el.tau1 = nb.tau1;
        el.count = transparent_count(nb, nb.tau1 * (1.0 - 1e-12));
        el.neumann_lowest = smallest_eigs(nb.A, req).values.at(0);
        el.dirichlet_lowest = smallest_eigs(db.A, req).values.at(0);
    });
    e.edge = e.levels.back().tau1;
    e.relative_error = std::abs(e.edge - e.E1) / e.E1;
    e.improving = true;
    for (std::size_t l = 1; l < e.levels.size(); ++l)
        e.improving = e.improving && std::abs(e.levels[l].tau1 - e.E1) < std::abs(e.levels[l - 1].tau1 - e.E1);
    return e;
}

namespace {

const BracketedEigenvalue* find_m(const SpectrumReport& r, int m)
{
    for (const auto& e : r.eigenvalues)
        if (e.m == m) return &e;
    for (const auto& e : r.near)
        if (e.m == m) return &e;
    return nullptr;
}

}  // namespace

std::vector<BoundRow> auxiliary_bound_rows(const SpectrumReport& aux)
{
    std::vector<BoundRow> rows;
    const double l = aux.spec.ell;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    for (const auto& e : aux.eigenvalues) {
        BoundRow b;
        b.m = e.m;
        b.value = e.extrapolated;
        b.lo = pi2 * (e.m - 1) * (e.m - 1) / (4.0 * l * l);
        b.hi = pi2 * e.m * e.m / (4.0 * l * l);
        b.tolerance = e.error;
        b.pass = b.lo < b.value && b.value < b.hi;
        rows.push_back(b);
    }
    return rows;
}

bool auxiliary_count_band(const SpectrumReport& aux)
{
    const int f = static_cast<int>(std::floor(aux.spec.ell / aux.spec.d));
    return aux.near.empty() && f <= aux.count && aux.count <= f + 1;
}

BracketingReport validate_bracketing(double ell, double d, const Numerics& num)
{
    BracketingReport br;
    br.ell = ell;
    br.d = d;
    const WaveguideSpec tw{d, ell, Variant::Twisted};
    const WaveguideSpec ax{d, 2.0 * ell, Variant::Auxiliary};
    Numerics an = num;
    if (num.L != 0.0 && num.L < ax.ell + num.end_margin * d) an.L = 0.0;
    an.nx = 0;
    br.twisted = discrete_spectrum(tw, num);
    br.auxiliary = discrete_spectrum(ax, an);
    const double E1 = br.twisted.E1;

    bool ok = true;
    for (const auto& e : br.twisted.eigenvalues) {
        BoundRow b;
        b.m = e.m;
        b.value = e.extrapolated;
        const auto* lo = find_m(br.auxiliary, 2 * e.m - 1);
        const auto* hi = find_m(br.auxiliary, 2 * e.m);
        b.lo = lo ? lo->extrapolated : E1;
        b.hi = hi ? hi->extrapolated : E1;
        b.tolerance = e.error + (lo ? lo->error : 0.0) + (hi ? hi->error : 0.0);
        b.pass = b.lo - b.tolerance <= b.value && b.value <= b.hi + b.tolerance;
        ok = ok && b.pass;
        br.two_sided.push_back(b);
    }
    br.aux_bounds = auxiliary_bound_rows(br.auxiliary);
    for (const auto& b : br.aux_bounds) ok = ok && b.pass;
    br.N = br.twisted.count;
    br.N_star = br.auxiliary.count;
    br.count_sandwich = br.twisted.near.empty() && br.auxiliary.near.empty() && br.N_star / 2 <= br.N &&
                        br.N <= br.N_star / 2 + 1;
    br.pass = ok && br.count_sandwich;
    return br;
}

SweepResult sweep(const std::vector<double>& ells, const WaveguideSpec& templ, const Numerics& num)
{
    for (std::size_t i = 1; i < ells.size(); ++i)
        if (!(ells[i] > ells[i - 1])) throw ConfigError("sweep: ell values must be ascending");
    std::vector<SpectrumReport> reports(ells.size());
    Numerics inner = num;
    inner.jobs = 1;
    parallel_for(static_cast<int>(ells.size()), num.jobs, [&](int i) {
        WaveguideSpec s = templ;
        s.ell = ells[i];
        reports[i] = discrete_spectrum(s, inner);
    });
    return summarize_sweep(std::move(reports));
}

SweepResult summarize_sweep(std::vector<SpectrumReport> reports)
{
    SweepResult out;
    out.reports = std::move(reports);
    for (std::size_t i = 1; i < out.reports.size(); ++i) {
        const auto& a = out.reports[i - 1];
        const auto& b = out.reports[i];
        const double la = a.spec.ell, lb = b.spec.ell;
        if (b.count < a.count) {
            out.counts_nondecreasing = false;
            out.flags.push_back("count decreases between ell = " + fmt17(la) + " and " + fmt17(lb));
        }
        const std::size_t k = std::min(a.eigenvalues.size(), b.eigenvalues.size());
        for (std::size_t m = 0; m < k; ++m) {
            const double slack = a.eigenvalues[m].error + b.eigenvalues[m].error + a.numerics.tol;
            if (b.eigenvalues[m].extrapolated > a.eigenvalues[m].extrapolated + slack) {
                out.monotone = false;
                out.flags.push_back("eigenvalue " + std::to_string(m + 1) + " increases between ell = " +
                                    fmt17(la) + " and " + fmt17(lb) + " (grid under-resolved?)");
            }
        }
    }
    return out;
}

TruncationStudy truncation_study(const WaveguideSpec& spec, const std::vector<double>& Ls, const Numerics& num)
{
    spec.validate();
    if (Ls.size() < 2) throw ConfigError("truncation study needs at least two lengths");
    TruncationStudy t;
    t.spec = spec;
    t.E1 = threshold_energy(1, spec.d);
    t.rows.resize(Ls.size());
    std::vector<double> lam(Ls.size()), tau(Ls.size());
    parallel_for(static_cast<int>(Ls.size()), num.jobs, [&](int i) {
        Numerics n = num;
        n.L = Ls[i];
        n.nx = 0;
        const Grid g = build_grid(spec, level_grid(spec, n, 0));
        const OperatorBundle nb = assemble(g, EndCondition::neumann());
        const OperatorBundle db = assemble(g, EndCondition::dirichlet());
        EigenRequest req;
        req.sigma = -1.0;
        req.tol = num.tol;
        req.seed = num.seed;
        TruncationRow& r = t.rows[i];
        r.L = Ls[i];
        r.nx = g.cols() - 1;
        r.neumann = smallest_eigs(nb.A, req).values.at(0);
        r.dirichlet = smallest_eigs(db.A, req).values.at(0);
        r.gap = r.dirichlet - r.neumann;
        tau[i] = nb.tau1;
        if (r.neumann >= nb.tau1) throw NumericError("truncation study: no eigenvalue below the threshold");
        lam[i] = transparent_eigenpair(nb, 1, r.neumann, r.dirichlet, n).value;
    });
    t.tau1 = tau.back();
    t.lambda1 = lam.back();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(Ls.size());
    for (const auto& r : t.rows) {
        if (!(r.gap > 0.0)) throw NumericError("truncation study: non-positive end gap at L = " + fmt17(r.L));
        const double y = std::log(r.gap);
        sx += r.L;
        sy += y;
        sxx += r.L * r.L;
        sxy += r.L * y;
    }
    t.slope = -(k * sxy - sx * sy) / (k * sxx - sx * sx);
    t.slope_expected = 2.0 * std::sqrt(t.E1 - t.lambda1);
    t.slope_discrete = 2.0 * std::sqrt(t.tau1 - t.lambda1);
    return t;
}

namespace {

nlohmann::json eig_json(const BracketedEigenvalue& e)
{
    return {{"m", e.m},
            {"lower", e.lower},
            {"upper", e.upper},
            {"value", e.value},
            {"extrapolated", e.extrapolated},
            {"error", e.error},
            {"order", e.order},
            {"parity", to_string(e.parity)},
            {"parity_score", e.parity_score},
            {"level_values", e.level_values}};
}

nlohmann::json spec_json(const WaveguideSpec& s)
{
    return {{"d", s.d}, {"ell", s.ell}, {"variant", to_string(s.variant)}};
}

nlohmann::json rows_json(const std::vector<BoundRow>& rows)
{
    nlohmann::json a = nlohmann::json::array();
    for (const auto& b : rows)
        a.push_back({{"m", b.m}, {"value", b.value}, {"lo", b.lo}, {"hi", b.hi}, {"tolerance", b.tolerance},
                     {"pass", b.pass}});
    return a;
}

}  // namespace

nlohmann::json to_json(const SpectrumReport& r)
{
    nlohmann::json j;
    j["spec"] = spec_json(r.spec);
    j["numerics"] = {{"L", r.numerics.L},         {"end_margin", r.numerics.end_margin},
                     {"nx", r.numerics.nx},       {"ny", r.numerics.ny},
                     {"levels", r.numerics.levels}, {"tol", r.numerics.tol},
                     {"n_modes", r.numerics.n_modes}, {"seed", r.numerics.seed}};
    j["E1"] = r.E1;
    j["margin"] = r.margin;
    j["count"] = r.count;
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& l : r.levels)
        lv.push_back({{"nx", l.nx}, {"ny", l.ny}, {"L", l.L}, {"hx", l.hx}, {"hy", l.hy}, {"tau1", l.tau1},
                      {"count", l.count}});
    j["levels"] = lv;
    j["eigenvalues"] = nlohmann::json::array();
    for (const auto& e : r.eigenvalues) j["eigenvalues"].push_back(eig_json(e));
    j["near_threshold"] = nlohmann::json::array();
    for (const auto& e : r.near) j["near_threshold"].push_back(eig_json(e));
    j["parity_alternates"] = r.parity_alternates();
    j["warnings"] = r.warnings;
    return j;
}

nlohmann::json to_json(const EdgeReport& r)
{
    nlohmann::json j;
    j["spec"] = spec_json(r.spec);
    j["E1"] = r.E1;
    j["edge"] = r.edge;
    j["relative_error"] = r.relative_error;
    j["improving"] = r.improving;
    j["levels"] = nlohmann::json::array();
    for (const auto& l : r.levels)
        j["levels"].push_back({{"nx", l.nx}, {"ny", l.ny}, {"tau1", l.tau1}, {"count", l.count},
                               {"neumann_lowest", l.neumann_lowest}, {"dirichlet_lowest", l.dirichlet_lowest}});
    return j;
}

nlohmann::json to_json(const BracketingReport& r)
{
    nlohmann::json j;
    j["ell"] = r.ell;
    j["d"] = r.d;
    j["two_sided"] = rows_json(r.two_sided);
    j["aux_bounds"] = rows_json(r.aux_bounds);
    j["N"] = r.N;
    j["N_star"] = r.N_star;
    j["count_sandwich"] = r.count_sandwich;
    j["pass"] = r.pass;
    j["twisted"] = to_json(r.twisted);
    j["auxiliary"] = to_json(r.auxiliary);
    return j;
}

nlohmann::json to_json(const TruncationStudy& r)
{
    nlohmann::json j;
    j["spec"] = spec_json(r.spec);
    j["E1"] = r.E1;
    j["tau1"] = r.tau1;
    j["lambda1"] = r.lambda1;
    j["slope"] = r.slope;
    j["slope_expected"] = r.slope_expected;
    j["slope_discrete"] = r.slope_discrete;
    j["rows"] = nlohmann::json::array();
    for (const auto& w : r.rows)
        j["rows"].push_back({{"L", w.L}, {"nx", w.nx}, {"neumann", w.neumann}, {"dirichlet", w.dirichlet},
                             {"gap", w.gap}});
    return j;
}

namespace {

BracketedEigenvalue eig_from_json(const nlohmann::json& j)
{
    BracketedEigenvalue e;
    e.m = j.at("m");
    e.lower = j.at("lower");
    e.upper = j.at("upper");
    e.value = j.at("value");
    e.extrapolated = j.at("extrapolated");
    e.error = j.at("error");
    e.order = j.at("order");
    const std::string p = j.at("parity");
    e.parity = p == "even" ? Parity::Even : p == "odd" ? Parity::Odd : Parity::Undetermined;
    e.parity_score = j.at("parity_score");
    e.level_values = j.at("level_values").get<std::vector<double>>();
    return e;
}

}  // namespace

SpectrumReport spectrum_from_json(const nlohmann::json& j)
{
    SpectrumReport r;
    const auto& s = j.at("spec");
    r.spec.d = s.at("d");
    r.spec.ell = s.at("ell");
    r.spec.variant = s.at("variant") == "auxiliary" ? Variant::Auxiliary : Variant::Twisted;
    const auto& n = j.at("numerics");
    r.numerics.L = n.at("L");
    r.numerics.end_margin = n.at("end_margin");
    r.numerics.nx = n.at("nx");
    r.numerics.ny = n.at("ny");
    r.numerics.levels = n.at("levels");
    r.numerics.tol = n.at("tol");
    r.numerics.n_modes = n.at("n_modes");
    r.numerics.seed = n.at("seed");
    r.E1 = j.at("E1");
    r.margin = j.at("margin");
    r.count = j.at("count");
    for (const auto& l : j.at("levels"))
        r.levels.push_back({l.at("nx"), l.at("ny"), l.at("L"), l.at("hx"), l.at("hy"), l.at("tau1"), l.at("count")});
    for (const auto& e : j.at("eigenvalues")) r.eigenvalues.push_back(eig_from_json(e));
    for (const auto& e : j.at("near_threshold")) r.near.push_back(eig_from_json(e));
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

void write_spectrum_csv(std::ostream& os, const std::vector<SpectrumReport>& reports)
{
    os << "ell,m,lower,upper,extrapolated,parity,E1,L,nx,ny\n";
    for (const auto& r : reports) {
        const LevelInfo& f = r.levels.back();
        for (const auto& e : r.eigenvalues) {
            os << fmt17(r.spec.ell) << ',' << e.m << ',' << fmt17(e.lower) << ',' << fmt17(e.upper) << ','
               << fmt17(e.extrapolated) << ',' << to_string(e.parity) << ',' << fmt17(r.E1) << ',' << fmt17(f.L)
               << ',' << f.nx << ',' << f.ny << '\n';
        }
    }
}

}  // namespace twg
