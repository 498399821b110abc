#pragma once

// Serialization: plot-ready CSV tables, the binary field-dump format, JSON
// manifest fragments, checksums, and the flat key=value configuration format.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "screed/core.hpp"
#include "screed/corrector.hpp"
#include "screed/ensemble.hpp"
#include "screed/lattice.hpp"
#include "screed/oracle.hpp"
#include "screed/points.hpp"

namespace screed {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// checksums

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw usage_error("checksum: cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = fnv1a64({reinterpret_cast<const unsigned char*>(buf),
                     static_cast<std::size_t>(in.gcount())},
                    h);
        if (in.eof()) break;
    }
    return h;
}

// ---------------------------------------------------------------------------
// CSV writers (%.17g keeps doubles byte-stable and round-trippable)

namespace detail {

inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

inline void write_points_csv(std::ostream& out, const point_set& ps) {
    for (int j = 0; j < ps.d; ++j) out << (j ? ",x" : "x") << (j + 1);
    out << '\n';
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto p = ps.point(i);
        for (int j = 0; j < ps.d; ++j) {
            if (j) out << ',';
            out << detail::fmt_g17(p[j]);
        }
        out << '\n';
    }
}

inline void write_radial_csv(std::ostream& out, const radial_profile& p) {
    out << "r,v\n";
    for (std::size_t j = 0; j < p.size(); ++j)
        out << detail::fmt_g17(p.radii[j]) << ',' << detail::fmt_g17(p.values[j]) << '\n';
}

inline void write_sweep_csv(std::ostream& out, std::span<const sweep_row> rows) {
    out << "T,L,n,realizations,u_bar,u_bar_se,var_ui,var_ui_se,"
           "energy_dirichlet,identity_mean0,identity_energy\n";
    for (const auto& row : rows) {
        const auto& st = row.stats;
        out << detail::fmt_g17(row.T) << ',' << detail::fmt_g17(row.L) << ',' << row.n << ','
            << (st.realizations_used + st.degenerate) << ',' << detail::fmt_g17(st.u_bar) << ','
            << detail::fmt_g17(st.u_bar_se) << ',' << detail::fmt_g17(st.var_ui) << ','
            << detail::fmt_g17(st.var_ui_se) << ',' << detail::fmt_g17(st.mean_energy_dirichlet)
            << ',' << detail::fmt_g17(st.identity_mean0) << ','
            << detail::fmt_g17(st.identity_energy) << '\n';
    }
}

// ---------------------------------------------------------------------------
// binary field dump: magic "CLSF", u32 version, u64 d / n / DOF count, then
// the DOF values as little-endian 64-bit floats (fluid cells row-major, then
// inclusions by index).

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

}  // namespace detail

inline constexpr std::uint32_t field_dump_version = 1;

struct field_dump {
    std::uint32_t version = field_dump_version;
    std::uint64_t d = 0;
    std::uint64_t n = 0;
    std::vector<double> values;  // DOF order
};

inline void write_field_dump(std::ostream& out, std::uint64_t d, std::uint64_t n,
                             std::span<const double> values) {
    out.write("CLSF", 4);
    detail::put_le<std::uint32_t>(out, field_dump_version);
    detail::put_le<std::uint64_t>(out, d);
    detail::put_le<std::uint64_t>(out, n);
    detail::put_le<std::uint64_t>(out, values.size());
    for (double v : values) detail::put_le<double>(out, v);
    if (!out) throw usage_error("field dump: write failed");
}

inline field_dump read_field_dump(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CLSF", 4) != 0)
        throw usage_error("field dump: bad magic");
    field_dump fd;
    fd.version = detail::get_le<std::uint32_t>(in);
    if (fd.version != field_dump_version)
        throw usage_error("field dump: unsupported version " + std::to_string(fd.version));
    fd.d = detail::get_le<std::uint64_t>(in);
    fd.n = detail::get_le<std::uint64_t>(in);
    const auto count = detail::get_le<std::uint64_t>(in);
    if (!in) throw usage_error("field dump: truncated header");
    fd.values.resize(count);
    for (auto& v : fd.values) v = detail::get_le<double>(in);
    if (!in) throw usage_error("field dump: truncated payload");
    return fd;
}

// ---------------------------------------------------------------------------
// JSON manifest fragments

inline json points_json(const point_set& ps) {
    json j;
    j["kind"] = to_string(ps.kind);
    j["d"] = ps.d;
    j["L"] = ps.L;
    j["rho"] = ps.rho;
    j["lambda"] = ps.lambda;
    j["seed"] = ps.seed;
    j["count"] = ps.size();
    j["achieved_horizon"] = ps.achieved_horizon;
    return j;
}

inline json geometry_json(const geometry& geo) {
    json j;
    j["d"] = geo.g.d;
    j["n"] = geo.g.n;
    j["h"] = geo.g.h;
    j["L"] = geo.g.L();
    j["inclusions"] = geo.inclusions();
    j["theta_h"] = geo.theta_h;
    return j;
}

inline json solve_report_json(const solve_result& res, const identity_report& rep) {
    json j;
    j["iterations"] = res.iterations;
    j["residual"] = res.residual;
    j["energy_massive"] = res.energy_massive;
    j["energy_dirichlet"] = res.energy_dirichlet;
    j["u_bar_box"] = rep.u_bar_box;
    j["identity_mean0_rel"] = rep.mean0_rel;
    j["identity_energy_rel"] = rep.energy_rel;
    double mx = 0.0;
    for (double v : res.u) mx = std::max(mx, std::abs(v));
    j["max_abs_u"] = mx;
    return j;
}

inline json stats_json(const ensemble_stats& st) {
    json j;
    j["u_bar"] = st.u_bar;
    j["u_bar_se"] = st.u_bar_se;
    j["var_ui"] = st.var_ui;
    j["var_ui_se"] = st.var_ui_se;
    j["mean_energy_massive"] = st.mean_energy_massive;
    j["mean_energy_dirichlet"] = st.mean_energy_dirichlet;
    j["identity_mean0"] = st.identity_mean0;
    j["identity_energy"] = st.identity_energy;
    j["realizations_used"] = st.realizations_used;
    j["degenerate"] = st.degenerate;
    j["mean_iterations"] = st.mean_iterations;
    return j;
}

// ---------------------------------------------------------------------------
// flat key = value configuration

using config_entries = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size())
        throw usage_error("config: key '" + key + "' has non-numeric value '" + v + "'");
    return x;
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::int64_t x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw usage_error("config: key '" + key + "' has non-integer value '" + v + "'");
    }
    if (pos != v.size())
        throw usage_error("config: key '" + key + "' has non-integer value '" + v + "'");
    return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t x = 0;
    try {
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw usage_error("config: key '" + key + "' has non-integer value '" + v + "'");
    }
    if (pos != v.size() || v.find('-') != std::string::npos)
        throw usage_error("config: key '" + key + "' must be a non-negative integer, got '" +
                          v + "'");
    return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw usage_error("config: key '" + key + "' has non-boolean value '" + v + "'");
}

}  // namespace detail

inline config_entries parse_config_text(std::istream& in) {
    config_entries entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw usage_error("config: line " + std::to_string(lineno) +
                              " is not of the form key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw usage_error("config: line " + std::to_string(lineno) + " has an empty key");
        for (const auto& [k, v] : entries)
            if (k == key)
                throw usage_error("config: duplicate key '" + key + "' at line " +
                                  std::to_string(lineno));
        entries.emplace_back(key, value);
    }
    return entries;
}

inline const std::vector<std::string>& config_registry() {
    static const std::vector<std::string> keys{
        "d",           "n",        "L",       "h",           "T",
        "rho",         "lambda",   "parking", "gbar",        "realizations",
        "master_seed", "cg_tol",   "cg_maxit", "box_rule",   "mode",
        "threads",     "direction", "mem_budget"};
    return keys;
}

inline void apply_config_key(run_config& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "d")
        cfg.d = static_cast<int>(parse_int(key, value));
    else if (key == "n")
        cfg.n = parse_int(key, value);
    else if (key == "L")
        cfg.L = parse_double(key, value);
    else if (key == "h")
        cfg.h = parse_double(key, value);
    else if (key == "T")
        cfg.T = parse_double(key, value);
    else if (key == "rho")
        cfg.rho = parse_double(key, value);
    else if (key == "lambda")
        cfg.lambda = parse_double(key, value);
    else if (key == "parking")
        cfg.parking = parse_bool(key, value);
    else if (key == "gbar")
        cfg.gbar = parse_double(key, value);
    else if (key == "realizations")
        cfg.realizations = parse_int(key, value);
    else if (key == "master_seed")
        cfg.master_seed = parse_uint(key, value);
    else if (key == "cg_tol")
        cfg.cg_tol = parse_double(key, value);
    else if (key == "cg_maxit")
        cfg.cg_maxit = parse_int(key, value);
    else if (key == "box_rule")
        cfg.box_rule = parse_double(key, value);
    else if (key == "mode")
        cfg.mode = parse_run_mode(value);
    else if (key == "threads")
        cfg.threads = static_cast<int>(parse_int(key, value));
    else if (key == "direction")
        cfg.direction = static_cast<int>(parse_int(key, value));
    else if (key == "mem_budget")
        cfg.mem_budget_bytes = parse_uint(key, value);
    else
        throw usage_error("config: unknown key '" + key + "'");
}

inline run_config build_config(const config_entries& entries) {
    run_config cfg;
    for (const auto& [k, v] : entries) apply_config_key(cfg, k, v);
    return cfg;
}

inline json config_echo_json(const run_config& cfg) {
    json j;
    j["d"] = cfg.d;
    j["n"] = cfg.n;
    j["L"] = cfg.L;
    j["h"] = cfg.h;
    j["T"] = cfg.T;
    j["rho"] = cfg.rho;
    j["lambda"] = cfg.lambda;
    j["parking"] = cfg.parking;
    j["gbar"] = cfg.gbar;
    j["realizations"] = cfg.realizations;
    j["master_seed"] = cfg.master_seed;
    j["cg_tol"] = cfg.cg_tol;
    j["cg_maxit"] = cfg.cg_maxit;
    j["box_rule"] = cfg.box_rule;
    j["mode"] = to_string(cfg.mode);
    j["threads"] = cfg.threads;
    j["direction"] = cfg.direction;
    j["mem_budget"] = cfg.mem_budget_bytes;
    return j;
}

}  // namespace screed
