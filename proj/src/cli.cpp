#include "twistwg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <openssl/evp.h>

#include "CLI11.hpp"

#include "twistwg/criticality.hpp"
#include "twistwg/perturbation.hpp"

namespace twg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(bool ok, const std::string& msg)
{
    if (!ok) throw ConfigError(msg);
}

bool one_of(const std::string& s, std::initializer_list<const char*> opts)
{
    return std::any_of(opts.begin(), opts.end(), [&](const char* o) { return s == o; });
}

}  // namespace

void RunConfig::validate() const
{
    require(std::isfinite(d) && d > 0.0 && d <= 100.0, "d must be in (0, 100]");
    require(std::isfinite(ell) && ell >= 0.0, "ell must be >= 0");
    require(ell <= 1000.0, "ell must be <= 1000");
    require(one_of(variant, {"twisted", "auxiliary"}), "variant must be twisted or auxiliary");
    require(n >= 1 && n <= 50, "n must be in [1, 50]");
    require(std::isfinite(L) && L >= 0.0, "L must be >= 0 (0 selects ell + end_margin d)");
    require(end_margin >= 1.0 && end_margin <= 50.0, "end_margin must be in [1, 50]");
    require(nx == 0 || (nx >= 8 && nx <= 1000000 && nx % 2 == 0), "nx must be 0 or an even number in [8, 1e6]");
    require(ny >= 4 && ny <= 4096, "ny must be in [4, 4096]");
    require(levels >= 1 && levels <= 6, "levels must be in [1, 6]");
    require(tol >= 1e-14 && tol <= 1e-3, "tol must be in [1e-14, 1e-3]");
    require(n_modes >= 0 && n_modes <= 100000, "n_modes must be in [0, 100000]");
    require(one_of(offset, {"midcell", "node"}), "offset must be midcell or node");
    require(one_of(method, {"indicator", "count"}), "method must be indicator or count");
    require(one_of(cutoff, {"quintic", "septic"}), "cutoff must be quintic or septic");
    require(jobs >= 1 && jobs <= 1024, "jobs must be in [1, 1024]");
    require(one_of(format, {"csv", "json", "both"}), "format must be csv, json or both");
    require(one_of(end, {"neumann", "dirichlet", "transparent"}), "end must be neumann, dirichlet or transparent");
    require(!out.empty(), "out must not be empty");
    const std::vector<double>& e = eps;
    require(e.size() >= 2, "eps needs at least two factors");
    for (std::size_t i = 0; i < e.size(); ++i) {
        require(std::isfinite(e[i]) && e[i] > 0.0 && e[i] <= 0.5, "eps factors must be in (0, 0.5]");
        require(i == 0 || e[i] > e[i - 1], "eps factors must be ascending");
    }
    const std::vector<double> ls = ell_list();
    require(!ls.empty(), "sweep needs at least one ell");
    for (std::size_t i = 0; i < ls.size(); ++i) {
        require(ls[i] >= 0.0, "ell must be >= 0");
        require(i == 0 || ls[i] > ls[i - 1], "sweep ell values must be ascending");
    }
}

WaveguideSpec RunConfig::spec() const
{
    return {d, ell, variant_from_string(variant)};
}

Numerics RunConfig::numerics() const
{
    Numerics num;
    num.L = L;
    num.end_margin = end_margin;
    num.nx = nx;
    num.ny = ny;
    num.levels = levels;
    num.tol = tol;
    num.n_modes = n_modes;
    num.offset = offset == "node" ? OffsetPolicy::NodeAtEll : OffsetPolicy::MidcellAtEll;
    num.seed = seed;
    num.jobs = jobs;
    return num;
}

std::vector<double> RunConfig::ell_list() const
{
    if (!ells.empty()) return ells;
    require(std::isfinite(ell_min) && std::isfinite(ell_max) && std::isfinite(ell_step),
            "ell range must be finite");
    require(ell_min >= 0.0, "ell_min must be >= 0");
    require(ell_max >= ell_min, "ell_max must be >= ell_min");
    require(ell_step > 0.0, "ell_step must be > 0");
    const double k = std::floor((ell_max - ell_min) / ell_step + 1e-9);
    require(k <= 10000, "sweep is limited to 10001 ell values");
    std::vector<double> v;
    for (int i = 0; i <= static_cast<int>(k); ++i) v.push_back(ell_min + i * ell_step);
    return v;
}

fs::path RunConfig::cache_path() const
{
    if (!cache_dir.empty()) return cache_dir;
    if (const char* env = std::getenv("TWISTWG_CACHE_DIR"); env && *env) return env;
    return ".twistwg-cache";
}

RunConfig parse_config(const std::vector<std::string>& args)
{
    RunConfig c;
    CLI::App app{"Spectral solver for the twisted Dirichlet/Neumann strip", "twistwg"};
    app.set_config("--config", "", "flat key = value file; command-line values win");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    app.add_option("--d", c.d, "strip width");
    app.add_option("--ell", c.ell, "half-length of the Dirichlet window");
    app.add_option("--ells", c.ells, "comma list of ell values (sweep)")->delimiter(',');
    app.add_option("--ell_min,--ell-min", c.ell_min);
    app.add_option("--ell_max,--ell-max", c.ell_max);
    app.add_option("--ell_step,--ell-step", c.ell_step);
    app.add_option("--variant", c.variant, "twisted | auxiliary");
    app.add_option("--n", c.n, "branch index");
    app.add_option("--L", c.L, "truncation half-length (0: ell + end_margin d)");
    app.add_option("--end_margin,--end-margin", c.end_margin);
    app.add_option("--nx", c.nx, "cells along x1 on level 0 (0: square cells)");
    app.add_option("--ny", c.ny, "cells along x2 on level 0");
    app.add_option("--levels", c.levels, "depth of the refinement family");
    app.add_option("--tol", c.tol);
    app.add_option("--n_modes,--n-modes", c.n_modes, "exact transverse modes in the end closure (0: all)");
    app.add_option("--seed", c.seed);
    app.add_option("--offset", c.offset, "midcell | node");
    app.add_option("--method", c.method, "indicator | count");
    app.add_option("--cutoff", c.cutoff, "quintic | septic");
    app.add_option("--eps", c.eps, "comma list of eps / ell_n")->delimiter(',');
    app.add_flag("--quick", c.quick);
    app.add_option("--jobs", c.jobs);
    app.add_option("--cache_dir,--cache-dir", c.cache_dir);
    app.add_flag("--no_cache,--no-cache", c.no_cache);
    app.add_option("--out", c.out, "output directory");
    app.add_option("--format", c.format, "csv | json | both");
    app.add_option("--dump_matrix,--dump-matrix", c.dump_matrix, "write the level-0 matrix as COO CSV");
    app.add_option("--end", c.end, "end condition of the dumped matrix");

    for (const char* name : {"spectrum", "sweep", "critical", "threshold-mode", "emerge", "validate"})
        app.add_subcommand(name)->fallthrough();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        throw ConfigError(app.help());
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }
    c.command = app.get_subcommands().front()->get_name();
    c.validate();
    return c;
}

// ---------------------------------------------------------------- cache

std::string sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

Cache::Cache(fs::path dir, std::string version) : dir_(std::move(dir)), version_(std::move(version)) {}

std::string Cache::key(const std::string& kind, const json& inputs, const std::string& version)
{
    return sha256_hex(kind + '\n' + inputs.dump() + '\n' + version);
}

std::optional<json> Cache::get(const std::string& key) const
{
    std::ifstream is(dir_ / (key + ".json"));
    if (!is) return std::nullopt;
    const json j = json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (j.value("format", 0) != 1 || j.value("version", "") != version_ || j.value("key", "") != key ||
        !j.contains("payload"))
        return std::nullopt;
    return j["payload"];
}

void Cache::put(const std::string& key, const std::string& kind, const json& payload) const
{
    static std::atomic<unsigned> serial{0};
    fs::create_directories(dir_);
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    const json entry = {{"format", 1}, {"version", version_}, {"key", key},
                        {"kind", kind}, {"created_at", stamp}, {"payload", payload}};
    const fs::path tmp =
        dir_ / (key + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(serial++));
    {
        std::ofstream os(tmp, std::ios::binary);
        os << entry.dump() << '\n';
        if (!os) throw std::runtime_error("cache: cannot write " + tmp.string());
    }
    fs::rename(tmp, dir_ / (key + ".json"));
}

json spectrum_inputs(const WaveguideSpec& spec, const Numerics& num)
{
    return {{"d", spec.d},
            {"ell", spec.ell},
            {"variant", to_string(spec.variant)},
            {"L", truncation_length(spec, num)},
            {"nx", num.nx},
            {"ny", num.ny},
            {"levels", num.levels},
            {"tol", num.tol},
            {"n_modes", num.n_modes},
            {"offset", num.offset == OffsetPolicy::NodeAtEll ? "node" : "midcell"},
            {"seed", num.seed}};
}

// ---------------------------------------------------------------- commands

namespace {

fs::path prepare_out(const RunConfig& c)
{
    fs::create_directories(c.out);
    return c.out;
}

bool want_json(const RunConfig& c)
{
    return c.format != "csv";
}

bool want_csv(const RunConfig& c)
{
    return c.format != "json";
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream os(p, std::ios::binary);
    os << s;
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j)
{
    write_text(p, j.dump(2) + '\n');
}

std::optional<Cache> open_cache(const RunConfig& c)
{
    if (c.no_cache) return std::nullopt;
    return Cache(c.cache_path());
}

void dump_matrix(const RunConfig& c, const WaveguideSpec& spec, const Numerics& num)
{
    const Grid g = build_grid(spec, level_grid(spec, num, 0));
    const bool dir = c.end == "dirichlet";
    const OperatorBundle b = assemble(g, dir ? EndCondition::dirichlet() : EndCondition::neumann());
    const SpMat A = c.end == "transparent" ? transparent_operator(b, b.tau1, num.n_modes) : b.A;
    std::ostringstream os;
    os << "row,col,value\n";
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            os << it.row() << ',' << it.col() << ',' << fmt17(it.value()) << '\n';
    fs::path p = c.dump_matrix;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, os.str());
}

CriticalOptions critical_options(const RunConfig& c)
{
    CriticalOptions o;
    o.method = c.method == "count" ? CriticalMethod::CountBisection : CriticalMethod::IndicatorZero;
    return o;
}

WaveguideSpec twisted_spec(const RunConfig& c)
{
    return {c.d, 0.0, Variant::Twisted};
}

std::string interval(double a, double b)
{
    return "[" + fmt17(a) + ", " + fmt17(b) + "]";
}

}  // namespace

int cmd_spectrum(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const WaveguideSpec spec = c.spec();
    const Numerics num = c.numerics();
    const json inputs = spectrum_inputs(spec, num);
    if (!c.dump_matrix.empty()) dump_matrix(c, spec, num);

    const std::optional<Cache> cache = open_cache(c);
    const std::string key = Cache::key("spectrum", inputs, kVersion);
    json payload;
    int hits = 0;
    if (auto hit = cache ? cache->get(key) : std::nullopt) {
        payload = std::move(*hit);
        hits = 1;
    } else {
        payload = to_json(discrete_spectrum(spec, num));
        if (cache) cache->put(key, "spectrum", payload);
    }
    if (cache) err << "cache hits: " << hits << "/1\n";
    const SpectrumReport r = spectrum_from_json(payload);

    const fs::path dir = prepare_out(c);
    if (want_json(c)) write_json(dir / "spectrum.json", payload);
    if (want_csv(c)) {
        std::ostringstream os;
        write_spectrum_csv(os, {r});
        write_text(dir / "spectrum.csv", os.str());
    }

    std::ostringstream s;
    s << "count=" << r.count << " E1=" << fmt17(r.E1);
    if (!r.eigenvalues.empty())
        s << " lowest=" << interval(r.eigenvalues.front().lower, r.eigenvalues.front().upper);
    int rc = 0;
    if (spec.variant == Variant::Auxiliary) {
        const int lo = static_cast<int>(std::floor(spec.ell / spec.d + 1e-12));
        const bool ok = auxiliary_count_band(r);
        s << " band=[" << lo << "," << lo + 1 << "] " << (ok ? "ok" : "VIOLATED");
        if (!ok) rc = 1;
    }
    if (!r.near.empty()) s << " near_threshold=" << r.near.size();
    out << s.str() << '\n';
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    return rc;
}

int cmd_sweep(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const std::vector<double> ells = c.ell_list();
    const Numerics num = c.numerics();
    const WaveguideSpec templ = c.spec();
    const std::optional<Cache> cache = open_cache(c);
    const int N = static_cast<int>(ells.size());

    std::vector<WaveguideSpec> specs(N, templ);
    std::vector<std::string> keys(N);
    std::vector<json> payloads(N);
    std::vector<int> todo;
    for (int i = 0; i < N; ++i) {
        specs[i].ell = ells[i];
        specs[i].validate();
        keys[i] = Cache::key("spectrum", spectrum_inputs(specs[i], num), kVersion);
        if (auto hit = cache ? cache->get(keys[i]) : std::nullopt) payloads[i] = std::move(*hit);
        else todo.push_back(i);
    }
    const int hits = N - static_cast<int>(todo.size());
    err << "cache hits: " << hits << "/" << N << '\n';

    Numerics inner = num;
    inner.jobs = 1;
    parallel_for(static_cast<int>(todo.size()), num.jobs, [&](int t) {
        const int i = todo[t];
        payloads[i] = to_json(discrete_spectrum(specs[i], inner));
        if (cache) cache->put(keys[i], "spectrum", payloads[i]);
    });

    std::vector<SpectrumReport> reports;
    for (const auto& p : payloads) reports.push_back(spectrum_from_json(p));
    const SweepResult sw = summarize_sweep(std::move(reports));

    const fs::path dir = prepare_out(c);
    if (want_json(c)) {
        json j = {{"reports", payloads},
                  {"monotone", sw.monotone},
                  {"counts_nondecreasing", sw.counts_nondecreasing},
                  {"flags", sw.flags}};
        write_json(dir / "sweep.json", j);
    }
    if (want_csv(c)) {
        std::ostringstream os;
        os << "ell,count,near,E1,lambda1,lambda1_lower,lambda1_upper\n";
        for (const auto& r : sw.reports) {
            os << fmt17(r.spec.ell) << ',' << r.count << ',' << r.near.size() << ',' << fmt17(r.E1) << ',';
            if (r.eigenvalues.empty()) os << ",,\n";
            else
                os << fmt17(r.eigenvalues[0].extrapolated) << ',' << fmt17(r.eigenvalues[0].lower) << ','
                   << fmt17(r.eigenvalues[0].upper) << '\n';
        }
        write_text(dir / "sweep.csv", os.str());
        std::ostringstream ev;
        write_spectrum_csv(ev, sw.reports);
        write_text(dir / "sweep_eigenvalues.csv", ev.str());
    }

    std::ostringstream counts;
    for (std::size_t i = 0; i < sw.reports.size(); ++i) counts << (i ? "," : "") << sw.reports[i].count;
    out << "ells=" << N << " counts=" << counts.str() << " counts_nondecreasing=" << (sw.counts_nondecreasing ? "yes" : "no")
        << " monotone=" << (sw.monotone ? "yes" : "no") << '\n';
    for (const auto& f : sw.flags) err << "flag: " << f << '\n';
    return sw.counts_nondecreasing ? 0 : 1;
}

int cmd_critical(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const CriticalBracket cb = critical_length(c.n, twisted_spec(c), c.numerics(), critical_options(c));
    const fs::path dir = prepare_out(c);
    write_json(dir / "critical.json", to_json(cb));
    out << "ell_" << cb.n << "=" << fmt17(cb.ell) << " +- " << fmt17(cb.uncertainty) << " bracket "
        << interval(cb.lo, cb.hi) << " method=" << to_string(cb.method) << '\n';
    for (const auto& w : cb.warnings) err << "warning: " << w << '\n';
    return 0;
}

int cmd_threshold_mode(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    RunConfig ci = c;
    ci.method = "indicator";
    const Numerics num = c.numerics();
    const CriticalBracket cb = critical_length(c.n, twisted_spec(c), num, critical_options(ci));
    const ThresholdMode m = threshold_mode(cb, num);
    const fs::path dir = prepare_out(c);
    if (want_json(c)) write_json(dir / "threshold_mode.json", {{"critical", to_json(cb)}, {"mode", to_json(m)}});
    if (want_csv(c)) {
        std::ostringstream os;
        write_mode_csv(os, m);
        write_text(dir / "threshold_mode.csv", os.str());
    }
    out << "ell_" << cb.n << "=" << fmt17(cb.ell) << " wp=" << m.wp << " parity_score=" << fmt17(m.parity_score)
        << " alpha1=" << fmt17(m.alpha1) << " decay=" << fmt17(m.decay_rate) << " expected="
        << fmt17(m.decay_expected) << '\n';
    for (const auto& w : cb.warnings) err << "warning: " << w << '\n';
    return 0;
}

int cmd_emerge(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    RunConfig ci = c;
    ci.method = "indicator";
    const Numerics num = c.numerics();
    const CriticalBracket cb = critical_length(c.n, twisted_spec(c), num, critical_options(ci));
    EmergenceOptions opt;
    opt.eps_factors = c.eps;
    opt.cutoff.profile = c.cutoff == "septic" ? CutoffProfile::Septic : CutoffProfile::Quintic;
    const EmergenceSeries e = emergence_fit(cb, num, opt);
    const double rel = std::abs(e.mu1_fit - e.mu1_integral) / std::abs(e.mu1_integral);
    const bool agree = rel <= 0.05;
    const fs::path dir = prepare_out(c);
    if (want_json(c)) {
        json j = to_json(e);
        j["mu1_agreement"] = {{"relative_difference", rel}, {"tolerance", 0.05}, {"agree", agree}};
        j["critical"] = to_json(cb);
        write_json(dir / "emerge.json", j);
    }
    if (want_csv(c)) {
        std::ostringstream os;
        write_emergence_csv(os, e);
        write_text(dir / "emerge.csv", os.str());
    }
    out << "ell_" << cb.n << "=" << fmt17(e.ell_star) << " mu1_integral=" << fmt17(e.mu1_integral)
        << " mu1_fit=" << fmt17(e.mu1_fit) << " agree=" << (agree ? "yes" : "no") << " mu2_formula="
        << fmt17(e.mu2_formula) << " mu2_fit=" << fmt17(e.mu2_fit) << '\n';
    for (const auto& w : e.warnings) err << "warning: " << w << '\n';
    return 0;
}

int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    const Numerics num = c.numerics();
    const double d = c.d;
    json checks = json::array();
    bool all = true;
    auto record = [&](const std::string& name, bool pass, json detail) {
        detail["name"] = name;
        detail["pass"] = pass;
        checks.push_back(std::move(detail));
        all = all && pass;
        out << (pass ? "PASS " : "FAIL ") << name << '\n';
    };
    auto run = [&](const std::string& name, const std::function<void()>& f) {
        try {
            f();
        } catch (const std::exception& e) {
            record(name, false, {{"error", e.what()}});
        }
    };

    const std::vector<double> aux_ells =
        c.quick ? std::vector<double>{0.5, 1.5} : std::vector<double>{0.5, 1.5, 2.5, 3.5};
    for (double l : aux_ells) {
        const std::string name = "auxiliary ell=" + fmt17(l * d);
        run(name, [&] {
            const SpectrumReport r = discrete_spectrum({d, l * d, Variant::Auxiliary}, num);
            const std::vector<BoundRow> rows = auxiliary_bound_rows(r);
            const bool bounds = std::all_of(rows.begin(), rows.end(), [](const BoundRow& b) { return b.pass; });
            const bool band = auxiliary_count_band(r);
            json rj = json::array();
            for (const auto& b : rows)
                rj.push_back({{"m", b.m}, {"value", b.value}, {"lo", b.lo}, {"hi", b.hi}, {"pass", b.pass}});
            record(name, bounds && band, {{"count", r.count}, {"bounds", rj}, {"count_band", band}});
        });
    }

    const std::vector<double> br_ells = c.quick ? std::vector<double>{1.0, 2.0} : std::vector<double>{1.0, 2.0, 3.0};
    for (double l : br_ells) {
        const std::string tag = "ell=" + fmt17(l * d);
        run("bracketing " + tag, [&] {
            const BracketingReport br = validate_bracketing(l * d, d, num);
            const bool two = std::all_of(br.two_sided.begin(), br.two_sided.end(),
                                         [](const BoundRow& b) { return b.pass; });
            json rj = json::array();
            for (const auto& b : br.two_sided)
                rj.push_back({{"m", b.m}, {"value", b.value}, {"lo", b.lo}, {"hi", b.hi},
                              {"tolerance", b.tolerance}, {"pass", b.pass}});
            record("bracketing " + tag, two, {{"rows", rj}});
            record("count sandwich " + tag, br.count_sandwich, {{"N", br.N}, {"N_star", br.N_star}});
            bool par = br.twisted.parity_alternates();
            json pj = json::array();
            for (const auto& e : br.twisted.eigenvalues) {
                par = par && e.parity_score < 1e-6;
                pj.push_back({{"m", e.m}, {"parity", to_string(e.parity)}, {"score", e.parity_score}});
            }
            record("parity " + tag, par, {{"eigenvalues", pj}});
        });
    }

    const int n_max = c.quick ? 1 : 2;
    for (int n = 1; n <= n_max; ++n) {
        const std::string name = "critical bracket n=" + std::to_string(n);
        run(name, [&] {
            const CriticalBracket cb = critical_length(n, {d, 0.0, Variant::Twisted}, num);
            const double lo = n == 1 ? 0.0 : cb.aux_lower.value_or(0.0) / 2;
            const double hi = cb.aux_upper.value_or(0.0) / 2;
            const double slack = cb.uncertainty;
            const bool ok = cb.aux_upper.has_value() && cb.ell > lo - slack && (n > 1 || cb.ell > 0.0) &&
                            cb.ell <= hi + slack;
            record(name, ok, {{"ell", cb.ell}, {"uncertainty", cb.uncertainty}, {"lower", lo}, {"upper", hi}});
        });
    }

    if (!c.quick) {
        run("threshold mode n=1", [&] {
            const CriticalBracket cb = critical_length(1, {d, 0.0, Variant::Twisted}, num);
            const ThresholdMode m = threshold_mode(cb, num);
            const double rel = std::abs(m.decay_rate - m.decay_expected) / m.decay_expected;
            record("threshold mode n=1", m.parity_score < 1e-6 && rel < 0.05,
                   {{"parity_score", m.parity_score}, {"decay_rate", m.decay_rate},
                    {"decay_expected", m.decay_expected}});
        });
        run("truncation gap", [&] {
            Numerics tn = num;
            tn.end_margin = 1.0;
            tn.tol = std::min(num.tol, 1e-12);
            const TruncationStudy t =
                truncation_study({d, d, Variant::Twisted}, {3.0 * d, 3.5 * d, 4.0 * d, 4.5 * d, 5.0 * d}, tn);
            const double rel = std::abs(t.slope - t.slope_expected) / t.slope_expected;
            record("truncation gap", rel < 0.2, {{"slope", t.slope}, {"expected", t.slope_expected}});
        });
    }

    const fs::path dir = prepare_out(c);
    json report = {{"quick", c.quick},
                   {"d", d},
                   {"numerics",
                    {{"ny", num.ny}, {"levels", num.levels}, {"tol", num.tol}, {"seed", num.seed},
                     {"end_margin", num.end_margin}}},
                   {"checks", checks},
                   {"pass", all}};
    write_json(dir / "validate.json", report);
    out << "validate: " << (all ? "all checks passed" : "FAILED") << '\n';
    if (!all) err << "validate: at least one invariant failed\n";
    return all ? 0 : 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    RunConfig c;
    try {
        c = parse_config(args);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        const bool help = std::find(args.begin(), args.end(), "--help") != args.end() ||
                          std::find(args.begin(), args.end(), "-h") != args.end();
        (help ? out : err) << msg << (msg.empty() || msg.back() != '\n' ? "\n" : "");
        return help ? 0 : 2;
    }
    try {
        if (c.command == "spectrum") return cmd_spectrum(c, out, err);
        if (c.command == "sweep") return cmd_sweep(c, out, err);
        if (c.command == "critical") return cmd_critical(c, out, err);
        if (c.command == "threshold-mode") return cmd_threshold_mode(c, out, err);
        if (c.command == "emerge") return cmd_emerge(c, out, err);
        if (c.command == "validate") return cmd_validate(c, out, err);
        err << "unknown command " << c.command << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace twg
