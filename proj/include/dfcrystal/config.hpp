#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "lattice.hpp"
#include "meanfield.hpp"
#include "scf.hpp"

namespace dfc {

// Flat config file grammar:
//   line    := blank | comment | key '=' value
//   comment := '#' anything
// Keys are unique; whitespace around keys and values is ignored; unknown keys are errors.
//
//   ell z q alpha                   crystal parameters
//   kmax kgrid_n kgrid_shifted       discretization (shifted: true/false)
//   eps_P                           positive number or "auto"
//   tol_scf tol_E max_iter mixing retract_every exchange_scheme
//   anderson anderson_depth theta_tol theta_max_iter shell_tol
//   energy_json iteration_log checkpoint   output paths (empty: not written)
struct RunConfig {
    CrystalParams crystal{10.0, 2.0, 2.0, 1.0 / 137.0};
    ScfConfig scf;
    std::string energy_json;
    std::string iteration_log;
    std::string checkpoint;

    void validate() const {
        try {
            crystal.validate(true);
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
        scf.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
    if (pos != v.size()) throw ConfigError("bad number for " + key + ": " + v);
    return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_double(key, v);
    if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError("expected integer for " + key + ": " + v);
    return int(x);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected boolean for " + key + ": " + v);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    std::map<std::string, std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string v = detail::trim(line.substr(eq + 1));
        if (seen.count(key)) throw ConfigError("duplicate key: " + key);
        seen[key] = v;
        using namespace detail;
        if (key == "ell") c.crystal.ell = parse_double(key, v);
        else if (key == "z") c.crystal.z = parse_double(key, v);
        else if (key == "q") c.crystal.q = parse_double(key, v);
        else if (key == "alpha") c.crystal.alpha = parse_double(key, v);
        else if (key == "kmax") c.scf.kmax = parse_int(key, v);
        else if (key == "kgrid_n") c.scf.n_per_axis = parse_int(key, v);
        else if (key == "kgrid_shifted") c.scf.shifted = parse_bool(key, v);
        else if (key == "eps_P") {
            if (v == "auto") c.scf.eps_P.reset();
            else c.scf.eps_P = parse_double(key, v);
        }
        else if (key == "tol_scf") c.scf.tol_scf = parse_double(key, v);
        else if (key == "tol_E") c.scf.tol_E = parse_double(key, v);
        else if (key == "max_iter") c.scf.max_iter = parse_int(key, v);
        else if (key == "mixing") c.scf.mixing = parse_double(key, v);
        else if (key == "retract_every") c.scf.retract_every = parse_int(key, v);
        else if (key == "exchange_scheme") c.scf.scheme = parse_scheme(v);
        else if (key == "anderson") c.scf.anderson = parse_bool(key, v);
        else if (key == "anderson_depth") c.scf.anderson_depth = parse_int(key, v);
        else if (key == "theta_tol") c.scf.theta_tol = parse_double(key, v);
        else if (key == "theta_max_iter") c.scf.theta_max_iter = parse_int(key, v);
        else if (key == "shell_tol") c.scf.shell_tol = parse_double(key, v);
        else if (key == "energy_json") c.energy_json = v;
        else if (key == "iteration_log") c.iteration_log = v;
        else if (key == "checkpoint") c.checkpoint = v;
        else throw ConfigError("unknown key: " + key);
    }
    c.validate();
    return c;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config: " + path);
    return parse_config(in);
}

}  // namespace dfc
