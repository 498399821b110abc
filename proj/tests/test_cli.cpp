#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct cli_result {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path case_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("screed_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

cli_result run_cli(const fs::path& dir, const std::string& args,
                   const std::string& env_prefix = "") {
    const std::string cmd = "cd '" + dir.string() + "' && " + env_prefix + " '" +
                            SCREED_CLI_PATH + "' " + args + " > cli_stdout.txt 2> cli_stderr.txt";
    const int rc = std::system(cmd.c_str());
    cli_result r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(dir / "cli_stdout.txt");
    r.err = slurp(dir / "cli_stderr.txt");
    return r;
}

json load_manifest(const fs::path& dir) {
    return json::parse(slurp(dir / "manifest.json"));
}

}  // namespace

TEST_CASE("solve with the zero-intensity config reports a vanishing field", "[cli]") {
    const fs::path dir = case_dir("zero");
    const cli_result r =
        run_cli(dir, std::string("solve --config '") + SCREED_CONFIG_DIR + "/zero.cfg' --out run");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const json m = load_manifest(dir / "run");
    REQUIRE(m.at("command") == "solve");
    REQUIRE(m.at("solve").at("max_abs_u").get<double>() <= 1e-12);
    REQUIRE(m.at("geometry").at("inclusions") == 0);
    REQUIRE(fs::exists(dir / "run" / "field.clsf"));
    // every output is listed with a checksum
    REQUIRE(m.at("outputs").size() == 1);
    REQUIRE(m.at("outputs")[0].at("file") == "field.clsf");
}

TEST_CASE("repeated sampling produces identical CSVs", "[cli]") {
    const fs::path dir = case_dir("sample_det");
    const std::string args = "sample --d 3 --rho 3 --lambda 1 --L 32 --seed 7 --out ";
    REQUIRE(run_cli(dir, args + "a").exit_code == 0);
    REQUIRE(run_cli(dir, args + "b").exit_code == 0);
    const std::string csv_a = slurp(dir / "a" / "points.csv");
    REQUIRE(!csv_a.empty());
    REQUIRE(csv_a == slurp(dir / "b" / "points.csv"));
    const json ma = load_manifest(dir / "a");
    const json mb = load_manifest(dir / "b");
    REQUIRE(ma.at("outputs")[0].at("fnv1a64") == mb.at("outputs")[0].at("fnv1a64"));
}

TEST_CASE("usage errors exit with a machine-readable record and no outputs", "[cli]") {
    const fs::path dir = case_dir("usage");

    cli_result r = run_cli(dir, "solve --nonsense 1 --out run");
    REQUIRE(r.exit_code == 2);
    REQUIRE(json::parse(r.err).at("error").at("type") == "usage");
    REQUIRE(!fs::exists(dir / "run"));

    // unknown key inside the config file
    {
        std::ofstream cfg(dir / "bad.cfg");
        cfg << "d = 3\nwidth = 7\n";
    }
    r = run_cli(dir, "solve --config bad.cfg --out run2");
    REQUIRE(r.exit_code == 2);
    const json err = json::parse(r.err);
    REQUIRE(err.at("error").at("type") == "usage");
    REQUIRE(err.at("error").at("message").get<std::string>().find("width") !=
            std::string::npos);
    REQUIRE(!fs::exists(dir / "run2"));

    // grid underdetermined
    r = run_cli(dir, "solve --d 3 --T 4 --out run3");
    REQUIRE(r.exit_code == 2);
    REQUIRE(!fs::exists(dir / "run3"));

    REQUIRE(run_cli(dir, "--help").exit_code == 0);
}

TEST_CASE("error records map failure kinds to exit codes", "[cli]") {
    const fs::path dir = case_dir("errors");

    // nonconvergence: solver error, exit 4
    cli_result r = run_cli(dir,
                           "solve --d 3 --n 16 --h 0.5 --T 16 --rho 2 --lambda 0.1 "
                           "--cg_maxit 1 --cg_tol 1e-14 --out run");
    REQUIRE(r.exit_code == 4);
    REQUIRE(json::parse(r.err).at("error").at("type") == "solver");

    // memory guard: resource error, exit 3
    r = run_cli(dir, "sweep --d 3 --h 1 --box_rule 8 --rho 2 --lambda 0.01 "
                     "--mode linearized --Ts 16,1048576 --out run2");
    REQUIRE(r.exit_code == 3);
    REQUIRE(json::parse(r.err).at("error").at("type") == "resource");
    REQUIRE(!fs::exists(dir / "run2"));
}

TEST_CASE("command-line overrides beat the config file", "[cli]") {
    const fs::path dir = case_dir("override");
    {
        std::ofstream cfg(dir / "base.cfg");
        cfg << "d = 2\nn = 16\nh = 0.5\nT = 16\nrho = 2\nlambda = 0.1\nthreads = 1\n";
    }
    const cli_result r = run_cli(dir, "solve --config base.cfg --T 64 --out run");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const json m = load_manifest(dir / "run");
    REQUIRE(m.at("config").at("T") == 64.0);
    REQUIRE(m.at("config").at("d") == 2);
}

TEST_CASE("worker threads come from the environment when not configured", "[cli]") {
    const fs::path dir = case_dir("threads");
    const std::string args =
        "ensemble --d 2 --n 16 --h 0.5 --T 16 --rho 2 --lambda 0.1 --realizations 4 --out run";
    const cli_result r = run_cli(dir, args, "SCREED_THREADS=3");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(load_manifest(dir / "run").at("config").at("threads") == 3);

    // an explicit key wins over the environment
    const cli_result r2 = run_cli(dir, args + "2 --threads 2", "SCREED_THREADS=5");
    REQUIRE(r2.exit_code == 0);
    REQUIRE(load_manifest(dir / "run2").at("config").at("threads") == 2);
}

TEST_CASE("ensemble CSV is byte-identical across worker-thread counts", "[cli]") {
    const fs::path dir = case_dir("det_threads");
    const std::string base =
        "ensemble --d 3 --n 16 --h 0.5 --T 16 --rho 2 --lambda 0.1 --realizations 8 "
        "--seed 424242 --out ";
    std::string ref;
    for (int threads : {1, 4, 8}) {
        const std::string out = "run" + std::to_string(threads);
        const cli_result r =
            run_cli(dir, base + out + " --threads " + std::to_string(threads));
        INFO(r.err);
        REQUIRE(r.exit_code == 0);
        const std::string csv = slurp(dir / out / "ensemble.csv");
        REQUIRE(!csv.empty());
        if (ref.empty())
            ref = csv;
        else
            REQUIRE(csv == ref);
    }
}

TEST_CASE("linearized sweep writes rows and a fit record", "[cli]") {
    const fs::path dir = case_dir("sweep");
    const cli_result r = run_cli(dir,
                                 "sweep --d 3 --h 1 --box_rule 4 --mode linearized --rho 2 "
                                 "--lambda 0.02 --realizations 4 --seed 11 --Ts 16,64,256 "
                                 "--threads 1 --out run");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(dir / "run" / "sweep.csv");
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    REQUIRE(lines == 4);  // header + 3 rows
    const json m = load_manifest(dir / "run");
    REQUIRE(m.at("fit").at("kind") == "power");
    const double expo = m.at("fit").at("exponent").get<double>();
    REQUIRE(expo > 0.3);
    REQUIRE(expo < 0.7);
    REQUIRE(m.at("rows").size() == 3);

    // decreasing T list is rejected before any output
    const cli_result bad = run_cli(dir,
                                   "sweep --d 3 --h 1 --box_rule 4 --mode linearized --rho 2 "
                                   "--lambda 0.02 --realizations 4 --Ts 64,16 --out run_bad");
    REQUIRE(bad.exit_code == 2);
    REQUIRE(!fs::exists(dir / "run_bad"));
}

TEST_CASE("green subcommand fits the obstacle decay", "[cli]") {
    const fs::path dir = case_dir("green");
    const cli_result r = run_cli(dir,
                                 "green --d 3 --n 32 --h 0.5 --T 25 --rho 3 --lambda 0.005 "
                                 "--cg_tol 1e-8 --seed 21 --r-lo 2 --r-hi 7 --out run");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const json m = load_manifest(dir / "run");
    REQUIRE(m.at("decay").at("slope").get<double>() < 0.0);
    REQUIRE(m.at("decay").at("bins_used").get<int>() >= 3);
    REQUIRE(fs::exists(dir / "run" / "green.clsf"));
}

TEST_CASE("oracle subcommand cross-checks radial and dense solves", "[cli]") {
    const fs::path dir = case_dir("oracle");
    const cli_result r = run_cli(dir,
                                 "oracle --d 2 --n 8 --L 8 --T 25 --rho 2 --lambda 0.1 "
                                 "--seed 3 --out run");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const json m = load_manifest(dir / "run");
    REQUIRE(m.at("oracle").at("radial_residual").get<double>() <= 1e-8);
    REQUIRE(m.at("oracle").at("dense_vs_cg_rel_l2").get<double>() <= 1e-8);
    const std::string csv = slurp(dir / "run" / "radial.csv");
    REQUIRE(csv.rfind("r,v\n", 0) == 0);
}
