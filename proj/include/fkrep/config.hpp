#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fkrep {

/// Fully resolved run description. Every field has a documented default and
/// everything, default or not, is echoed into the manifest: no silent
/// defaults.
struct RunConfig {
    std::string scenario = "heat";

    // weighted space
    int d = 1;
    double q = 2.0;  // default q = d+1, re-derived when only d is given
    bool q_explicit = false;
    double L_domain = 20.0;
    int n_quad = 2001;

    // time grid
    double t = 0.0;
    double T = 1.0;
    int N_steps = 100;

    // Monte Carlo
    size_t M = 200000;
    uint64_t seed = 1;

    // regression basis
    std::string basis_kind = "auto";  // resolved to a concrete kind by d
    int basis_size = 0;               // 0 = default for the kind
    int picard_iters = 3;

    // truncation: <= 0 means auto (2 * max(1, sup|h| estimate))
    double truncation_n = 0.0;
    std::vector<double> sweep_levels = {1.0, 2.0, 5.0};

    // finite-difference oracle
    double fd_dx = 0.01;
    double fd_dt = 0.001;
    double fd_L = 10.0;
    int fd_slices = 5;

    // verification
    std::vector<std::string> checks = {"representation-error", "z-gradient", "norm-equivalence",
                                       "flow-identity"};
    double C_p = 4.0;
    double rep_error_cap = 0.10;
    double z_consistency_cap = 0.15;
    double flow_cap = 0.05;
    double norm_band_lo = 0.2;
    double norm_band_hi = 5.0;
    double noise_mult = 3.0;

    std::string output_dir = "out";

    std::string resolved_basis_kind() const {
        if (basis_kind != "auto") return basis_kind;
        return d == 1 ? "piecewise-linear-bins" : "global-polynomial";
    }
    int resolved_basis_size() const {
        if (basis_size > 0) return basis_size;
        return resolved_basis_kind() == "piecewise-linear-bins" ? 32 : 3;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double x;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
    return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    size_t pos = 0;
    long long x;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v +
                                    "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v +
                                    "'");
    return x;
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

}  // namespace detail

/// Line-oriented `key = value` parser. Unknown keys, duplicate keys and type
/// mismatches are hard errors; q <= d is rejected here rather than at run
/// time.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::string> seen;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = line;
        size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value'");
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                     ": empty key");
        if (seen.count(key))
            throw std::invalid_argument("config: duplicate key '" + key + "'");
        seen[key] = val;

        if (key == "scenario") cfg.scenario = val;
        else if (key == "d") cfg.d = static_cast<int>(detail::parse_int(key, val));
        else if (key == "q") { cfg.q = detail::parse_real(key, val); cfg.q_explicit = true; }
        else if (key == "L_domain") cfg.L_domain = detail::parse_real(key, val);
        else if (key == "n_quad") cfg.n_quad = static_cast<int>(detail::parse_int(key, val));
        else if (key == "t") cfg.t = detail::parse_real(key, val);
        else if (key == "T") cfg.T = detail::parse_real(key, val);
        else if (key == "N_steps") cfg.N_steps = static_cast<int>(detail::parse_int(key, val));
        else if (key == "M") cfg.M = static_cast<size_t>(detail::parse_int(key, val));
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(detail::parse_int(key, val));
        else if (key == "basis_kind") cfg.basis_kind = val;
        else if (key == "basis_size") cfg.basis_size = static_cast<int>(detail::parse_int(key, val));
        else if (key == "picard_iters") cfg.picard_iters = static_cast<int>(detail::parse_int(key, val));
        else if (key == "truncation_n") cfg.truncation_n = (val == "auto") ? 0.0 : detail::parse_real(key, val);
        else if (key == "sweep_levels") {
            cfg.sweep_levels.clear();
            for (const auto& tok : detail::split_list(val))
                cfg.sweep_levels.push_back(detail::parse_real(key, tok));
        }
        else if (key == "fd_dx") cfg.fd_dx = detail::parse_real(key, val);
        else if (key == "fd_dt") cfg.fd_dt = detail::parse_real(key, val);
        else if (key == "fd_L") cfg.fd_L = detail::parse_real(key, val);
        else if (key == "fd_slices") cfg.fd_slices = static_cast<int>(detail::parse_int(key, val));
        else if (key == "checks") cfg.checks = detail::split_list(val);
        else if (key == "C_p") cfg.C_p = detail::parse_real(key, val);
        else if (key == "rep_error_cap") cfg.rep_error_cap = detail::parse_real(key, val);
        else if (key == "z_consistency_cap") cfg.z_consistency_cap = detail::parse_real(key, val);
        else if (key == "flow_cap") cfg.flow_cap = detail::parse_real(key, val);
        else if (key == "norm_band_lo") cfg.norm_band_lo = detail::parse_real(key, val);
        else if (key == "norm_band_hi") cfg.norm_band_hi = detail::parse_real(key, val);
        else if (key == "noise_mult") cfg.noise_mult = detail::parse_real(key, val);
        else if (key == "output_dir") cfg.output_dir = val;
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    if (!cfg.q_explicit) cfg.q = cfg.d + 1.0;
    if (!(cfg.q > cfg.d)) throw std::invalid_argument("config: q must exceed d");
    if (cfg.d < 1) throw std::invalid_argument("config: d must be positive");
    if (!(cfg.t >= 0 && cfg.t < cfg.T)) throw std::invalid_argument("config: need 0 <= t < T");
    if (cfg.N_steps < 1) throw std::invalid_argument("config: N_steps must be positive");
    if (cfg.M < 1) throw std::invalid_argument("config: M must be positive");
    if (cfg.basis_kind != "auto" && cfg.basis_kind != "piecewise-linear-bins" &&
        cfg.basis_kind != "global-polynomial")
        throw std::invalid_argument("config: unknown basis_kind '" + cfg.basis_kind + "'");
    return cfg;
}

/// Canonical text form; parse(serialize(cfg)) == cfg.
inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    auto list = [](const auto& xs) {
        std::ostringstream s;
        s.precision(17);
        for (size_t i = 0; i < xs.size(); ++i) s << (i ? "," : "") << xs[i];
        return s.str();
    };
    out << "scenario = " << cfg.scenario << "\n";
    out << "d = " << cfg.d << "\n";
    out << "q = " << cfg.q << "\n";
    out << "L_domain = " << cfg.L_domain << "\n";
    out << "n_quad = " << cfg.n_quad << "\n";
    out << "t = " << cfg.t << "\n";
    out << "T = " << cfg.T << "\n";
    out << "N_steps = " << cfg.N_steps << "\n";
    out << "M = " << cfg.M << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "basis_kind = " << cfg.basis_kind << "\n";
    out << "basis_size = " << cfg.basis_size << "\n";
    out << "picard_iters = " << cfg.picard_iters << "\n";
    out << "truncation_n = " << (cfg.truncation_n <= 0 ? std::string("auto")
                                                       : [&] {
                                                             std::ostringstream s;
                                                             s.precision(17);
                                                             s << cfg.truncation_n;
                                                             return s.str();
                                                         }())
        << "\n";
    out << "sweep_levels = " << list(cfg.sweep_levels) << "\n";
    out << "fd_dx = " << cfg.fd_dx << "\n";
    out << "fd_dt = " << cfg.fd_dt << "\n";
    out << "fd_L = " << cfg.fd_L << "\n";
    out << "fd_slices = " << cfg.fd_slices << "\n";
    out << "checks = " << list(cfg.checks) << "\n";
    out << "C_p = " << cfg.C_p << "\n";
    out << "rep_error_cap = " << cfg.rep_error_cap << "\n";
    out << "z_consistency_cap = " << cfg.z_consistency_cap << "\n";
    out << "flow_cap = " << cfg.flow_cap << "\n";
    out << "norm_band_lo = " << cfg.norm_band_lo << "\n";
    out << "norm_band_hi = " << cfg.norm_band_hi << "\n";
    out << "noise_mult = " << cfg.noise_mult << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    return out.str();
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

}  // namespace fkrep
