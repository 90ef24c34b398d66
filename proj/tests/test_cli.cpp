#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "twistwg/cli.hpp"

using namespace twg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        static int serial = 0;
        path = fs::temp_directory_path() /
               ("twistwg_test_" + std::to_string(::getpid()) + "_" + std::to_string(serial++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int rc = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args)
{
    std::ostringstream o, e;
    Run r;
    r.rc = run_cli(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("sha256 test vector")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("configuration errors exit with 2")
{
    const Run neg = cli({"spectrum", "--ell", "-1"});
    CHECK(neg.rc == 2);
    CHECK(neg.err.find("ell must be >= 0") != std::string::npos);
    CHECK(cli({"spectrum", "--bogus", "1"}).rc == 2);
    CHECK(cli({"spectrum", "--ny", "2"}).rc == 2);
    CHECK(cli({"spectrum", "--variant", "spiral"}).rc == 2);
    CHECK(cli({"sweep", "--ells", "1,0.5"}).rc == 2);
    CHECK(cli({"nonsense"}).rc == 2);
    CHECK(cli({}).rc == 2);
    // L too short for the window is caught when the run starts
    CHECK(cli({"spectrum", "--ell", "2", "--L", "3", "--no-cache"}).rc == 2);
}

TEST_CASE("config file with command-line overrides")
{
    TempDir t;
    std::ofstream(t.path / "run.cfg") << "# comment\nd = 2\nell = 3.5\nvariant = auxiliary\nells = 0.5, 1, 2\n";
    const RunConfig c = parse_config({"sweep", "--config", (t.path / "run.cfg").string(), "--ell", "1.25"});
    CHECK(c.command == "sweep");
    CHECK(c.d == 2.0);
    CHECK(c.ell == 1.25);
    CHECK(c.variant == "auxiliary");
    CHECK(c.ell_list() == std::vector<double>{0.5, 1.0, 2.0});

    std::ofstream(t.path / "bad.cfg") << "ell = 1\nnot_a_key = 4\n";
    CHECK_THROWS_AS(parse_config({"spectrum", "--config", (t.path / "bad.cfg").string()}), ConfigError);
}

TEST_CASE("ell range expands inclusively")
{
    RunConfig c;
    c.ell_min = 0.5;
    c.ell_max = 2.0;
    c.ell_step = 0.5;
    CHECK(c.ell_list() == std::vector<double>{0.5, 1.0, 1.5, 2.0});
}

TEST_CASE("cache returns the stored payload and ignores stale entries")
{
    TempDir t;
    const nlohmann::json in = {{"ell", 1.0}, {"ny", 20}};
    const std::string k = Cache::key("spectrum", in, "1");
    CHECK(k == Cache::key("spectrum", nlohmann::json{{"ny", 20}, {"ell", 1.0}}, "1"));
    CHECK(k != Cache::key("spectrum", in, "2"));
    CHECK(k != Cache::key("critical", in, "1"));

    const Cache c1(t.path, "1"), c2(t.path, "2");
    CHECK_FALSE(c1.get(k).has_value());
    const nlohmann::json payload = {{"value", 0.1 + 0.2}, {"list", {1, 2, 3}}};
    c1.put(k, "spectrum", payload);
    REQUIRE(c1.get(k).has_value());
    CHECK(c1.get(k)->dump() == payload.dump());
    CHECK((*c1.get(k))["value"].get<double>() == 0.1 + 0.2);
    CHECK_FALSE(c2.get(k).has_value());

    std::ofstream(t.path / (k + ".json")) << "{ truncated";
    CHECK_FALSE(c1.get(k).has_value());
    for (const auto& e : fs::directory_iterator(t.path))
        CHECK(e.path().filename().string().find(".tmp.") == std::string::npos);
}

TEST_CASE("warm cache performs no eigensolves and reproduces the files")
{
    TempDir t;
    const std::vector<std::string> args = {"spectrum",  "--ell",       "1",   "--ny",  "8",
                                           "--levels",  "2",           "--cache-dir", (t.path / "c").string(),
                                           "--out",     (t.path / "a").string()};
    const Run first = cli(args);
    REQUIRE(first.rc == 0);
    CHECK(first.err.find("cache hits: 0/1") != std::string::npos);
    CHECK(first.out.find("count=1") != std::string::npos);

    std::vector<std::string> again = args;
    again.back() = (t.path / "b").string();
    const auto before = eigensolve_count();
    const Run second = cli(again);
    CHECK(eigensolve_count() == before);
    CHECK(second.err.find("cache hits: 1/1") != std::string::npos);
    CHECK(second.out == first.out);
    CHECK(slurp(t.path / "a" / "spectrum.json") == slurp(t.path / "b" / "spectrum.json"));
    CHECK(slurp(t.path / "a" / "spectrum.csv") == slurp(t.path / "b" / "spectrum.csv"));
}

TEST_CASE("environment variable selects the cache directory")
{
    TempDir t;
    ::setenv("TWISTWG_CACHE_DIR", (t.path / "env").c_str(), 1);
    const RunConfig c = parse_config({"spectrum"});
    CHECK(c.cache_path() == t.path / "env");
    const RunConfig e = parse_config({"spectrum", "--cache-dir", "x"});
    CHECK(e.cache_path() == fs::path("x"));
    ::unsetenv("TWISTWG_CACHE_DIR");
}

TEST_CASE("interrupted sweep resumes from the cache")
{
    TempDir t;
    const std::string cache = (t.path / "c").string(), out = (t.path / "o").string();
    const Run a = cli({"sweep", "--ells", "0.5,1", "--ny", "8", "--levels", "1", "--cache-dir", cache, "--out", out});
    REQUIRE(a.rc == 0);
    CHECK(a.err.find("cache hits: 0/2") != std::string::npos);
    const Run b =
        cli({"sweep", "--ells", "0.5,1,2", "--ny", "8", "--levels", "1", "--cache-dir", cache, "--out", out});
    REQUIRE(b.rc == 0);
    CHECK(b.err.find("cache hits: 2/3") != std::string::npos);
    const Run c =
        cli({"sweep", "--ells", "0.5,1,2", "--ny", "8", "--levels", "1", "--cache-dir", cache, "--out", out});
    CHECK(c.err.find("cache hits: 3/3") != std::string::npos);

    std::istringstream csv(slurp(t.path / "o" / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line.rfind("ell,count,", 0) == 0);
    int prev = -1, rows = 0;
    while (std::getline(csv, line)) {
        const int count = std::stoi(line.substr(line.find(',') + 1));
        CHECK(count >= prev);
        prev = count;
        ++rows;
    }
    CHECK(rows == 3);
}

TEST_CASE("auxiliary summary reports the count band")
{
    TempDir t;
    const Run r = cli({"spectrum", "--variant", "auxiliary", "--ell", "2.5", "--ny", "8", "--levels", "1",
                       "--no-cache", "--out", t.path.string()});
    CHECK(r.rc == 0);
    CHECK(r.out.find("band=[2,3] ok") != std::string::npos);
}

TEST_CASE("matrix dump is a symmetric coordinate list")
{
    TempDir t;
    const fs::path p = t.path / "A.csv";
    const Run r = cli({"spectrum", "--ell", "1", "--ny", "4", "--levels", "1", "--no-cache", "--out",
                       t.path.string(), "--dump-matrix", p.string()});
    REQUIRE(r.rc == 0);
    std::istringstream is(slurp(p));
    std::string line;
    std::getline(is, line);
    CHECK(line == "row,col,value");
    std::map<std::pair<long, long>, double> entries;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string a, b, v;
        std::getline(ls, a, ',');
        std::getline(ls, b, ',');
        std::getline(ls, v);
        entries[{std::stol(a), std::stol(b)}] = std::stod(v);
    }
    CHECK(!entries.empty());
    for (const auto& [ij, v] : entries) CHECK(entries.at({ij.second, ij.first}) == v);
}
