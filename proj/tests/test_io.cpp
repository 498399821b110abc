#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "screed/ensemble.hpp"
#include "screed/io.hpp"
#include "screed/oracle.hpp"
#include "screed/points.hpp"

using namespace screed;

namespace {

std::uint64_t hash_of(const std::string& s) {
    return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

}  // namespace

TEST_CASE("FNV-1a checksum matches the reference vectors", "[io]") {
    REQUIRE(hash_of("") == 0xcbf29ce484222325ull);
    REQUIRE(hash_of("a") == 0xaf63dc4c8601ec8cull);
    REQUIRE(hash_of("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("file checksum equals the in-memory hash", "[io]") {
    const auto path = std::filesystem::temp_directory_path() / "screed_io_checksum.bin";
    const std::string payload = "screened corrector\n\x01\x02\x03 payload";
    {
        std::ofstream out(path, std::ios::binary);
        out << payload;
    }
    REQUIRE(file_checksum(path.string()) == hash_of(payload));
    std::filesystem::remove(path);
    REQUIRE_THROWS_AS(file_checksum(path.string()), usage_error);
}

TEST_CASE("point CSV golden output and sampling determinism", "[io]") {
    point_set ps;
    ps.d = 2;
    ps.L = 4.0;
    ps.x = {0.5, 1.25, 3.0, 0.125};
    std::ostringstream out;
    write_points_csv(out, ps);
    REQUIRE(out.str() == "x1,x2\n0.5,1.25\n3,0.125\n");

    const point_set a = sample_hardcore_poisson(3, 32.0, 3.0, 1.0, 7);
    const point_set b = sample_hardcore_poisson(3, 32.0, 3.0, 1.0, 7);
    std::ostringstream ca, cb;
    write_points_csv(ca, a);
    write_points_csv(cb, b);
    REQUIRE(a.size() > 0);
    REQUIRE(ca.str() == cb.str());
}

TEST_CASE("radial CSV has the documented columns", "[io]") {
    const radial_profile p = radial_massive_solve(3, 25.0, 8.0, -1.0, 0.0, 200);
    std::ostringstream out;
    write_radial_csv(out, p);
    std::istringstream in(out.str());
    std::string line;
    REQUIRE(std::getline(in, line));
    REQUIRE(line == "r,v");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    REQUIRE(rows == p.size());
}

TEST_CASE("sweep CSV golden output", "[io]") {
    std::vector<sweep_row> rows(2);
    rows[0].T = 16.0;
    rows[0].n = 16;
    rows[0].L = 16.0;
    rows[0].stats.u_bar = -0.5;
    rows[0].stats.u_bar_se = 0.25;
    rows[0].stats.var_ui = 2.0;
    rows[0].stats.var_ui_se = 0.5;
    rows[0].stats.mean_energy_dirichlet = 4.0;
    rows[0].stats.identity_mean0 = 0.0;
    rows[0].stats.identity_energy = 0.0;
    rows[0].stats.realizations_used = 3;
    rows[0].stats.degenerate = 1;
    rows[1] = rows[0];
    rows[1].T = 64.0;
    rows[1].n = 32;
    rows[1].L = 32.0;
    rows[1].stats.degenerate = 0;
    rows[1].stats.realizations_used = 4;

    std::ostringstream out;
    write_sweep_csv(out, rows);
    REQUIRE(out.str() ==
            "T,L,n,realizations,u_bar,u_bar_se,var_ui,var_ui_se,"
            "energy_dirichlet,identity_mean0,identity_energy\n"
            "16,16,16,4,-0.5,0.25,2,0.5,4,0,0\n"
            "64,32,32,4,-0.5,0.25,2,0.5,4,0,0\n");
}

TEST_CASE("field dump round trip and validation", "[io]") {
    std::vector<double> values{0.0, -0.0, 1.5, -2.25e-300, 3.0e300, 42.0};
    std::ostringstream out(std::ios::binary);
    write_field_dump(out, 3, 16, values);
    const std::string blob = out.str();
    REQUIRE(blob.size() == 4 + 4 + 3 * 8 + values.size() * 8);

    std::istringstream in(blob, std::ios::binary);
    const field_dump fd = read_field_dump(in);
    REQUIRE(fd.version == field_dump_version);
    REQUIRE(fd.d == 3);
    REQUIRE(fd.n == 16);
    REQUIRE(fd.values == values);

    std::istringstream bad("XLSF" + blob.substr(4), std::ios::binary);
    REQUIRE_THROWS_AS(read_field_dump(bad), usage_error);

    std::istringstream truncated(blob.substr(0, blob.size() - 4), std::ios::binary);
    REQUIRE_THROWS_AS(read_field_dump(truncated), usage_error);

    std::string wrong_version = blob;
    wrong_version[4] = 2;
    std::istringstream wv(wrong_version, std::ios::binary);
    REQUIRE_THROWS_AS(read_field_dump(wv), usage_error);
}

TEST_CASE("configuration text parsing", "[io]") {
    std::istringstream in(
        "# experiment\n"
        "\n"
        "d = 3\n"
        "T = 64   # screening\n"
        "mode=linearized\n"
        "  lambda =0.02\t\n");
    const config_entries entries = parse_config_text(in);
    REQUIRE(entries.size() == 4);
    REQUIRE(entries[0] == std::pair<std::string, std::string>{"d", "3"});
    REQUIRE(entries[1] == std::pair<std::string, std::string>{"T", "64"});
    REQUIRE(entries[2] == std::pair<std::string, std::string>{"mode", "linearized"});
    REQUIRE(entries[3] == std::pair<std::string, std::string>{"lambda", "0.02"});

    std::istringstream missing_eq("d 3\n");
    REQUIRE_THROWS_AS(parse_config_text(missing_eq), usage_error);

    std::istringstream dup("d = 3\nd = 2\n");
    REQUIRE_THROWS_AS(parse_config_text(dup), usage_error);

    std::istringstream empty_key("= 3\n");
    REQUIRE_THROWS_AS(parse_config_text(empty_key), usage_error);
}

TEST_CASE("configuration registry covers every run_config field", "[io]") {
    config_entries entries{{"d", "4"},
                           {"n", "24"},
                           {"L", "12"},
                           {"h", "0.5"},
                           {"T", "128"},
                           {"rho", "2.5"},
                           {"lambda", "0.125"},
                           {"parking", "true"},
                           {"gbar", "-2"},
                           {"realizations", "9"},
                           {"master_seed", "987654321"},
                           {"cg_tol", "1e-9"},
                           {"cg_maxit", "777"},
                           {"box_rule", "4"},
                           {"mode", "divform"},
                           {"threads", "3"},
                           {"direction", "2"},
                           {"mem_budget", "1000000"}};
    REQUIRE(entries.size() == config_registry().size());
    const run_config cfg = build_config(entries);
    REQUIRE(cfg.d == 4);
    REQUIRE(cfg.n == 24);
    REQUIRE(cfg.L == 12.0);
    REQUIRE(cfg.h == 0.5);
    REQUIRE(cfg.T == 128.0);
    REQUIRE(cfg.rho == 2.5);
    REQUIRE(cfg.lambda == 0.125);
    REQUIRE(cfg.parking);
    REQUIRE(cfg.gbar == -2.0);
    REQUIRE(cfg.realizations == 9);
    REQUIRE(cfg.master_seed == 987654321ull);
    REQUIRE(cfg.cg_tol == 1e-9);
    REQUIRE(cfg.cg_maxit == 777);
    REQUIRE(cfg.box_rule == 4.0);
    REQUIRE(cfg.mode == run_mode::divform);
    REQUIRE(cfg.threads == 3);
    REQUIRE(cfg.direction == 2);
    REQUIRE(cfg.mem_budget_bytes == 1000000ull);

    // the echo contains exactly the registry keys, in registry order
    const json echo = config_echo_json(cfg);
    std::size_t i = 0;
    for (auto it = echo.begin(); it != echo.end(); ++it, ++i)
        REQUIRE(it.key() == config_registry()[i]);
    REQUIRE(i == config_registry().size());
}

TEST_CASE("configuration value validation", "[io]") {
    run_config cfg;
    REQUIRE_THROWS_AS(apply_config_key(cfg, "bogus", "1"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "T", "fast"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "T", "1.5x"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "n", "12.5"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "parking", "maybe"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "master_seed", "-1"), usage_error);
    REQUIRE_THROWS_AS(apply_config_key(cfg, "mode", "quadratic"), usage_error);
    REQUIRE_NOTHROW(apply_config_key(cfg, "T", "6.25e2"));
    REQUIRE(cfg.T == 625.0);
}

TEST_CASE("manifest fragments carry the documented fields", "[io]") {
    const point_set ps = sample_hardcore_poisson(2, 8.0, 1.5, 0.2, 11);
    const json pj = points_json(ps);
    REQUIRE(pj.at("kind") == "hardcore_poisson");
    REQUIRE(pj.at("d") == 2);
    REQUIRE(pj.at("count") == ps.size());
    REQUIRE(pj.at("achieved_horizon") == ps.achieved_horizon);

    grid g{2, 16, 0.5};
    const geometry geo = rasterize(ps, g);
    const json gj = geometry_json(geo);
    REQUIRE(gj.at("n") == 16);
    REQUIRE(gj.at("inclusions") == geo.inclusions());
    REQUIRE(gj.at("theta_h") == geo.theta_h);

    const operator_spec A = make_operator(geo, 9.0);
    const solve_result res = solve_corrector(A, -1.0);
    const identity_report rep = check_identities(A, -1.0, res);
    const json sj = solve_report_json(res, rep);
    REQUIRE(sj.at("iterations") == res.iterations);
    REQUIRE(sj.at("u_bar_box") == rep.u_bar_box);
    REQUIRE(sj.at("max_abs_u").get<double>() > 0.0);

    ensemble_stats st;
    st.u_bar = -0.25;
    st.realizations_used = 5;
    const json ej = stats_json(st);
    REQUIRE(ej.at("u_bar") == -0.25);
    REQUIRE(ej.at("realizations_used") == 5);
}
