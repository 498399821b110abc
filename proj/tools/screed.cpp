// screed: batch front end for the screened-corrector laboratory.
//
// Subcommands: sample, solve, green, linearized, ensemble, sweep, oracle.
// Configuration comes from an optional flat key=value file (--config) with
// every key overridable as --key value; all randomness flows from the single
// master_seed key. Each run writes its data files plus exactly one
// manifest.json listing every output with a checksum. Usage errors exit
// before any output file is created.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "screed/corrector.hpp"
#include "screed/ensemble.hpp"
#include "screed/io.hpp"
#include "screed/lattice.hpp"
#include "screed/oracle.hpp"
#include "screed/points.hpp"
#include "screed/rng.hpp"
#include "screed/stats.hpp"

namespace fs = std::filesystem;
using namespace screed;

namespace {

constexpr const char* tool_version = "1.0.0";

struct cli_options {
    std::string config_path;
    std::string out_dir = ".";
    std::map<std::string, std::string> overrides;  // registry key -> raw value
    std::string seed_alias;                        // --seed shorthand
    std::string Ts;                                // sweep
    std::string fit = "power";                     // sweep
    double r_lo = 4.0;                             // green decay window
    double r_hi = 0.0;                             // 0 = half the box side
};

void add_common_options(CLI::App* cmd, cli_options& opt) {
    cmd->add_option("--config", opt.config_path, "flat key = value configuration file");
    cmd->add_option("--out", opt.out_dir, "output directory (default: current)");
    cmd->add_option("--seed", opt.seed_alias, "shorthand for --master_seed");
    for (const std::string& key : config_registry())
        cmd->add_option("--" + key, opt.overrides[key], "override config key " + key);
}

// Assemble the effective configuration: file, then --key overrides, then the
// worker-thread default (SCREED_THREADS, else hardware parallelism).
run_config load_config(const CLI::App* cmd, cli_options& opt) {
    config_entries entries;
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) throw usage_error("cannot open config file " + opt.config_path);
        entries = parse_config_text(in);
    }
    run_config cfg = build_config(entries);
    bool threads_set = false;
    for (const auto& [k, v] : entries)
        if (k == "threads") threads_set = true;
    for (const std::string& key : config_registry()) {
        if (cmd->count("--" + key) > 0) {
            apply_config_key(cfg, key, opt.overrides[key]);
            if (key == "threads") threads_set = true;
        }
    }
    if (cmd->count("--seed") > 0) apply_config_key(cfg, "master_seed", opt.seed_alias);
    if (!threads_set) {
        if (const char* env = std::getenv("SCREED_THREADS")) {
            apply_config_key(cfg, "threads", env);
        } else {
            cfg.threads = std::max(1u, std::thread::hardware_concurrency());
        }
    }
    return cfg;
}

class stage_clock {
  public:
    void start() { t0_ = std::chrono::steady_clock::now(); }
    void lap(const std::string& name) {
        const auto t1 = std::chrono::steady_clock::now();
        timings_[name] += std::chrono::duration<double>(t1 - t0_).count();
        t0_ = t1;
    }
    json to_json() const {
        json j;
        double total = 0.0;
        for (const auto& [k, v] : timings_) {
            j[k] = v;
            total += v;
        }
        j["total"] = total;
        return j;
    }

  private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
    std::map<std::string, double> timings_;
};

// Collects output files and writes the single manifest last.
class run_output {
  public:
    run_output(std::string command, const run_config& cfg, fs::path dir)
        : dir_(std::move(dir)) {
        manifest_["tool"] = "screed";
        manifest_["version"] = tool_version;
        manifest_["command"] = std::move(command);
        manifest_["config"] = config_echo_json(cfg);
    }

    json& manifest() { return manifest_; }

    void add_warning(const std::string& w) { warnings_.push_back(w); }
    void add_warnings(const std::vector<std::string>& ws) {
        warnings_.insert(warnings_.end(), ws.begin(), ws.end());
    }

    void write_file(const std::string& name, const std::function<void(std::ostream&)>& body) {
        fs::create_directories(dir_);
        const fs::path path = dir_ / name;
        {
            std::ofstream out(path, std::ios::binary);
            if (!out) throw resource_error("cannot open output file " + path.string());
            body(out);
            if (!out) throw resource_error("write failed for " + path.string());
        }
        json entry;
        entry["file"] = name;
        entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(path));
        char hex[20];
        std::snprintf(hex, sizeof hex, "0x%016llx",
                      static_cast<unsigned long long>(file_checksum(path.string())));
        entry["fnv1a64"] = hex;
        inventory_.push_back(entry);
    }

    void finish(const stage_clock& clk) {
        manifest_["timings"] = clk.to_json();
        manifest_["warnings"] = warnings_;
        manifest_["outputs"] = inventory_;
        fs::create_directories(dir_);
        const fs::path path = dir_ / "manifest.json";
        std::ofstream out(path);
        if (!out) throw resource_error("cannot open output file " + path.string());
        out << manifest_.dump(2) << '\n';
    }

  private:
    json manifest_;
    json inventory_ = json::array();
    std::vector<std::string> warnings_;
    fs::path dir_;
};

point_set sample_for(const run_config& cfg, double L, std::uint64_t seed) {
    return cfg.parking ? sample_random_parking(cfg.d, L, cfg.rho, seed)
                       : sample_hardcore_poisson(cfg.d, L, cfg.rho, cfg.lambda, seed);
}

void guard_memory(const run_config& cfg, const grid& g) {
    run_config one = cfg;
    one.realizations = 1;
    one.threads = 1;
    if (estimate_memory_bytes(one, g) > cfg.mem_budget_bytes)
        throw resource_error("estimated memory exceeds the budget for grid n=" +
                             std::to_string(g.n));
}

int cmd_sample(const run_config& cfg, const cli_options& opt) {
    double L = cfg.L;
    if (!(L > 0.0)) {
        if (cfg.n > 0 && cfg.h > 0.0)
            L = static_cast<double>(cfg.n) * cfg.h;
        else
            throw usage_error("sample: box side underdetermined (give L, or n and h)");
    }
    if (cfg.d < 1 || cfg.d > 8) throw usage_error("sample: dimension must be in [1, 8]");
    stage_clock clk;
    clk.start();
    const point_set ps = sample_for(cfg, L, cfg.master_seed);
    clk.lap("sample");

    run_output out("sample", cfg, opt.out_dir);
    out.manifest()["points"] = points_json(ps);
    out.write_file("points.csv", [&](std::ostream& os) { write_points_csv(os, ps); });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

int cmd_solve(const run_config& cfg, const cli_options& opt) {
    const grid g = resolve_grid(cfg);
    guard_memory(cfg, g);
    stage_clock clk;
    clk.start();
    const point_set ps = sample_for(cfg, g.L(), derive_seed(cfg.master_seed, 0));
    const geometry geo = rasterize(ps, g);
    const operator_spec A = make_operator(geo, cfg.T);
    cg_options opts;
    opts.tol = cfg.cg_tol;
    opts.maxit = cfg.cg_maxit;
    const solve_result res = solve_corrector(A, cfg.gbar, opts);
    clk.lap("solve");
    const identity_report rep = check_identities(A, cfg.gbar, res);

    run_output out("solve", cfg, opt.out_dir);
    out.manifest()["points"] = points_json(ps);
    out.manifest()["geometry"] = geometry_json(geo);
    out.manifest()["solve"] = solve_report_json(res, rep);
    if (geo.inclusions() == 0)
        out.add_warning("configuration has no inclusions; the field vanishes identically");
    out.write_file("field.clsf", [&](std::ostream& os) {
        write_field_dump(os, static_cast<std::uint64_t>(g.d), static_cast<std::uint64_t>(g.n),
                         res.u);
    });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

int cmd_green(const run_config& cfg, const cli_options& opt) {
    const grid g = resolve_grid(cfg);
    guard_memory(cfg, g);
    const double r_hi = opt.r_hi > 0.0 ? opt.r_hi : g.L() / 2.0;
    if (!(opt.r_lo > 0.0) || !(r_hi > opt.r_lo))
        throw usage_error("green: need 0 < r-lo < r-hi (r-hi defaults to L/2)");

    stage_clock clk;
    clk.start();
    point_set ps = sample_for(cfg, g.L(), derive_seed(cfg.master_seed, 0));
    geometry geo = rasterize(ps, g);
    operator_spec A = make_operator(geo, cfg.T);
    const std::int64_t source = find_green_source(geo);
    cg_options opts;
    opts.tol = cfg.cg_tol;
    opts.maxit = cfg.cg_maxit;
    const solve_result res = green_function(A, source, opts);
    clk.lap("solve");
    const decay_fit fit = green_decay_fit(A, res, source, opt.r_lo, r_hi);
    clk.lap("fit");

    run_output out("green", cfg, opt.out_dir);
    out.manifest()["points"] = points_json(ps);
    out.manifest()["geometry"] = geometry_json(geo);
    out.manifest()["source_cell"] = source;
    json fj;
    fj["slope"] = fit.slope;
    fj["r_lo"] = fit.r_lo;
    fj["r_hi"] = fit.r_hi;
    fj["bins_used"] = fit.bins_used;
    out.manifest()["decay"] = fj;
    json sj;
    sj["iterations"] = res.iterations;
    sj["residual"] = res.residual;
    out.manifest()["solve"] = sj;
    out.write_file("green.clsf", [&](std::ostream& os) {
        write_field_dump(os, static_cast<std::uint64_t>(g.d), static_cast<std::uint64_t>(g.n),
                         res.u);
    });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

int run_ensemble_command(const char* name, const run_config& cfg, const cli_options& opt) {
    const grid g = resolve_grid(cfg);
    stage_clock clk;
    clk.start();
    const ensemble_stats st = run_ensemble(cfg);
    clk.lap("ensemble");

    sweep_row row;
    row.T = cfg.T;
    row.n = g.n;
    row.L = g.L();
    row.stats = st;

    run_output out(name, cfg, opt.out_dir);
    out.manifest()["stats"] = stats_json(st);
    out.add_warnings(st.warnings);
    out.write_file("ensemble.csv", [&](std::ostream& os) {
        write_sweep_csv(os, std::vector<sweep_row>{row});
    });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

int cmd_linearized(run_config cfg, const cli_options& opt) {
    if (cfg.mode != run_mode::linearized && cfg.mode != run_mode::divform)
        cfg.mode = run_mode::linearized;
    return run_ensemble_command("linearized", cfg, opt);
}

std::vector<double> parse_T_list(const std::string& text) {
    std::vector<double> Ts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = screed::detail::trim(item);
        if (item.empty()) throw usage_error("sweep: empty entry in --Ts");
        Ts.push_back(screed::detail::parse_double("Ts", item));
    }
    if (Ts.empty()) throw usage_error("sweep: --Ts must list at least one value");
    return Ts;
}

int cmd_sweep(const run_config& cfg, const cli_options& opt) {
    const std::vector<double> Ts = parse_T_list(opt.Ts);
    fit_kind kind;
    if (opt.fit == "power")
        kind = fit_kind::power;
    else if (opt.fit == "logarithmic")
        kind = fit_kind::logarithmic;
    else
        throw usage_error("sweep: --fit must be power or logarithmic");

    stage_clock clk;
    clk.start();
    const std::vector<sweep_row> rows = sweep_T(cfg, Ts);
    clk.lap("sweep");

    run_output out("sweep", cfg, opt.out_dir);
    for (const auto& row : rows)
        for (const auto& w : row.stats.warnings)
            out.add_warning("T=" + screed::detail::fmt_g17(row.T) + ": " + w);

    bool fit_ok = rows.size() >= 3;
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : rows) {
        if (!(row.stats.var_ui > 0.0)) fit_ok = false;
        pts.emplace_back(row.T, row.stats.var_ui);
    }
    if (fit_ok) {
        const scaling_fit fit = fit_scaling(pts, kind);
        json fj;
        fj["statistic"] = "var_ui";
        fj["kind"] = opt.fit;
        fj["exponent"] = fit.exponent;
        fj["log_fit_r2"] = fit.log_fit_r2;
        fj["logarithmic"] = is_logarithmic(fit);
        out.manifest()["fit"] = fj;
    } else {
        out.add_warning("scaling fit skipped: need >= 3 rows with a positive variance statistic");
    }
    json rows_json = json::array();
    for (const auto& row : rows) {
        json rj = stats_json(row.stats);
        rj["T"] = row.T;
        rj["n"] = row.n;
        rj["L"] = row.L;
        rows_json.push_back(rj);
    }
    out.manifest()["rows"] = rows_json;
    out.write_file("sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

int cmd_oracle(const run_config& cfg, const cli_options& opt) {
    const grid g = resolve_grid(cfg);
    stage_clock clk;
    clk.start();

    // radial reference profile for the configured (d, T, gbar)
    const double R_out = std::min(1000.0, std::max(8.0 * std::sqrt(cfg.T), 4.0));
    const radial_profile prof =
        radial_massive_solve(cfg.d, cfg.T, R_out, cfg.gbar, 0.0, 4000);
    const double residual = radial_residual(prof);
    clk.lap("radial");

    // dense cross-check on the configured grid (must fit the dense budget)
    const point_set ps = sample_for(cfg, g.L(), derive_seed(cfg.master_seed, 0));
    const geometry geo = rasterize(ps, g);
    const operator_spec A = make_operator(geo, cfg.T);
    const field b = assemble_rhs(A, cfg.gbar);
    const field xd = dense_direct_solve(A, b);
    cg_options opts;
    opts.tol = cfg.cg_tol;
    opts.maxit = cfg.cg_maxit;
    const solve_result res = solve_corrector(A, cfg.gbar, opts);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xd.size(); ++i) {
        num += (res.u[i] - xd[i]) * (res.u[i] - xd[i]);
        den += xd[i] * xd[i];
    }
    const double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    clk.lap("dense");

    run_output out("oracle", cfg, opt.out_dir);
    json oj;
    oj["radial_R_out"] = R_out;
    oj["radial_residual"] = residual;
    oj["dense_dofs"] = A.dofs.n_dofs;
    oj["dense_vs_cg_rel_l2"] = rel;
    out.manifest()["oracle"] = oj;
    out.manifest()["geometry"] = geometry_json(geo);
    out.write_file("radial.csv", [&](std::ostream& os) { write_radial_csv(os, prof); });
    clk.lap("write");
    out.finish(clk);
    return 0;
}

void print_error(const char* type, const std::string& message) {
    json j;
    j["error"]["type"] = type;
    j["error"]["message"] = message;
    std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"screed: screened-corrector laboratory"};
    app.set_help_flag("--help", "print help");  // frees -h for the spacing key --h
    app.require_subcommand(1);

    std::map<std::string, cli_options> opts;
    std::map<std::string, CLI::App*> cmds;
    for (const char* name : {"sample", "solve", "green", "linearized", "ensemble", "sweep",
                             "oracle"}) {
        CLI::App* cmd = app.add_subcommand(name, "");
        cmd->set_help_flag("--help", "print help");
        add_common_options(cmd, opts[name]);
        cmds[name] = cmd;
    }
    cmds["sample"]->description("draw a point configuration and write points.csv");
    cmds["solve"]->description("single corrector solve with the identity report");
    cmds["green"]->description("obstacle Green function and decay fit");
    cmds["linearized"]->description("spectral linearized / div-form ensemble");
    cmds["ensemble"]->description("ensemble statistics for the configured mode");
    cmds["sweep"]->description("T-scaling study with a fit record");
    cmds["oracle"]->description("radial and dense cross-checks");
    cmds["sweep"]->add_option("--Ts", opts["sweep"].Ts,
                              "comma-separated increasing T values")->required();
    cmds["sweep"]->add_option("--fit", opts["sweep"].fit, "fit kind: power or logarithmic");
    cmds["green"]->add_option("--r-lo", opts["green"].r_lo, "decay window inner radius");
    cmds["green"]->add_option("--r-hi", opts["green"].r_hi,
                              "decay window outer radius (default: L/2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error("usage", e.what());
        return 2;
    }

    try {
        for (const auto& [name, cmd] : cmds) {
            if (!cmd->parsed()) continue;
            cli_options& opt = opts[name];
            const run_config cfg = load_config(cmd, opt);
            if (name == "sample") return cmd_sample(cfg, opt);
            if (name == "solve") return cmd_solve(cfg, opt);
            if (name == "green") return cmd_green(cfg, opt);
            if (name == "linearized") return cmd_linearized(cfg, opt);
            if (name == "ensemble") return run_ensemble_command("ensemble", cfg, opt);
            if (name == "sweep") return cmd_sweep(cfg, opt);
            if (name == "oracle") return cmd_oracle(cfg, opt);
        }
        print_error("usage", "no subcommand given");
        return 2;
    } catch (const usage_error& e) {
        print_error("usage", e.what());
        return 2;
    } catch (const resource_error& e) {
        print_error("resource", e.what());
        return 3;
    } catch (const solver_error& e) {
        print_error("solver", e.what());
        return 4;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
}
