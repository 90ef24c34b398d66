#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "twistwg/spectrum.hpp"

namespace twg {

inline constexpr const char* kVersion = "0.1.0";

/// Flat run configuration. Physical, numerical and execution fields; only
/// the first two enter cache keys.
struct RunConfig {
    std::string command;

    // physical
    double d = 1.0;
    double ell = 1.0;
    std::vector<double> ells;  // sweep; empty: ell_min..ell_max by ell_step
    double ell_min = 0.5;
    double ell_max = 3.5;
    double ell_step = 0.5;
    std::string variant = "twisted";
    int n = 1;

    // numerics
    double L = 0.0;
    double end_margin = 3.0;
    int nx = 0;
    int ny = 20;
    int levels = 3;
    double tol = 1e-9;
    int n_modes = 0;
    std::uint64_t seed = 20240607;
    std::string offset = "midcell";
    std::string method = "indicator";
    std::string cutoff = "quintic";
    std::vector<double> eps{0.02, 0.04, 0.08, 0.16};  // times ell_n
    bool quick = false;

    // execution
    int jobs = 1;
    std::string cache_dir;  // empty: $TWISTWG_CACHE_DIR, else .twistwg-cache
    bool no_cache = false;
    std::string out = "results";
    std::string format = "both";
    std::string dump_matrix;
    std::string end = "neumann";

    /// Throws ConfigError naming the offending key.
    void validate() const;

    WaveguideSpec spec() const;
    Numerics numerics() const;
    std::vector<double> ell_list() const;
    std::filesystem::path cache_path() const;
};

/// Parses "<command> [--key value ...] [--config file]". Config files hold
/// "key = value" lines; command-line values win. Throws ConfigError.
RunConfig parse_config(const std::vector<std::string>& args);

/// Content-addressed store of JSON payloads. Writes go to a temporary
/// file first and are renamed into place.
class Cache {
public:
    explicit Cache(std::filesystem::path dir, std::string version = kVersion);

    static std::string key(const std::string& kind, const nlohmann::json& inputs, const std::string& version);

    std::optional<nlohmann::json> get(const std::string& key) const;
    void put(const std::string& key, const std::string& kind, const nlohmann::json& payload) const;

    const std::filesystem::path& dir() const { return dir_; }
    const std::string& version() const { return version_; }

private:
    std::filesystem::path dir_;
    std::string version_;
};

std::string sha256_hex(const std::string& data);

/// Cache inputs of one spectrum computation.
nlohmann::json spectrum_inputs(const WaveguideSpec& spec, const Numerics& num);

int cmd_spectrum(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_sweep(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_critical(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_threshold_mode(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_emerge(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err);

/// Whole front end: parse, dispatch, map errors to exit codes
/// (0 ok, 1 numeric failure, 2 configuration error).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace twg
