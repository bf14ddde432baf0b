#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mesc/affinity.hpp"
#include "mesc/errors.hpp"

namespace mesc {

/// Fully resolved settings for one CLI invocation. Defaults sit inside the
/// robust parameter ranges reported for the method; every report echoes the
/// resolved values so a run can be reproduced bit for bit.
struct RunConfig {
    // affinity solver
    std::string reg = "me";
    double lambda1 = 1.0;
    double lambda2 = 10.0;
    double lr = 1e-4;
    std::size_t iters = 20000;
    double tol = 1e-8;
    double eps = 1e-12;
    std::string step = "adam";       // adam | gd
    std::string zero_diag = "auto";  // auto | on | off
    std::string init = "auto";       // auto (1/n) | eps | a nonnegative real
    // network training
    std::string mode = "decoupled";  // decoupled | coupled
    bool pretrain = true;
    std::size_t pretrain_steps = 200;
    std::size_t steps = 400;
    std::vector<std::size_t> kernels{3};
    std::vector<std::size_t> channels{15};
    // clustering
    std::size_t k = 3;
    std::size_t restarts = 10;
    // synthetic data generation
    std::string kind = "features";  // features | images
    std::vector<std::size_t> dims{3, 3, 3};
    std::vector<std::size_t> samples{40, 40, 40};
    std::size_t ambient = 30;
    double noise = 0.0;
    std::size_t side = 16;
    // shared
    std::uint64_t seed = 0;
    // paths
    std::string in;
    std::string out;
    std::string report;
    std::string truth;
    std::string pred;
    std::string affinity;
    std::string trace;
    std::string params_path;
    std::string regs = "me,l1,fro,nuc";

    StepRule step_rule() const {
        return step == "gd" ? StepRule::GradientDescent : StepRule::Adam;
    }

    std::optional<bool> zero_diag_option() const {
        if (zero_diag == "on") return true;
        if (zero_diag == "off") return false;
        return std::nullopt;
    }

    SolverConfig solver_config() const {
        SolverConfig cfg;
        cfg.learning_rate = lr;
        cfg.max_iterations = iters;
        cfg.relative_tolerance = tol;
        cfg.epsilon = eps;
        cfg.seed = seed;
        cfg.zero_diagonal = zero_diag_option();
        cfg.step_rule = step_rule();
        if (init == "eps") {
            cfg.init_value = eps;
        } else if (init != "auto") {
            cfg.init_value = std::stod(init);
        }
        return cfg;
    }

    RegularizerSpec regularizer_spec() const {
        return RegularizerSpec{regularizer_from_name(reg), lambda1, lambda2};
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_real(const std::string& key, const std::string& value,
                         const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(where + "key '" + key + "': unparsable real value '" + value + "'");
    }
}

inline std::size_t parse_count(const std::string& key, const std::string& value,
                               const std::string& where) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size() || v < 0) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError(where + "key '" + key + "': unparsable count '" + value + "'");
    }
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& value,
                                const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError(where + "key '" + key + "': unparsable seed '" + value + "'");
    }
}

inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& value,
                                                 const std::string& where) {
    std::vector<std::size_t> out;
    std::istringstream ss(value);
    std::string field;
    while (std::getline(ss, field, ',')) {
        out.push_back(parse_count(key, trim(field), where));
    }
    if (out.empty()) throw ConfigError(where + "key '" + key + "': empty list");
    return out;
}

inline bool parse_on_off(const std::string& key, const std::string& value,
                         const std::string& where) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw ConfigError(where + "key '" + key + "': expected on|off, got '" + value + "'");
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value,
                          const std::string& where) {
    if (key == "reg") {
        cfg.reg = value;
    } else if (key == "lambda1") {
        cfg.lambda1 = parse_real(key, value, where);
    } else if (key == "lambda2") {
        cfg.lambda2 = parse_real(key, value, where);
    } else if (key == "lr") {
        cfg.lr = parse_real(key, value, where);
    } else if (key == "iters") {
        cfg.iters = parse_count(key, value, where);
    } else if (key == "tol") {
        cfg.tol = parse_real(key, value, where);
    } else if (key == "eps") {
        cfg.eps = parse_real(key, value, where);
    } else if (key == "step") {
        cfg.step = value;
    } else if (key == "zero_diag") {
        cfg.zero_diag = value;
    } else if (key == "init") {
        cfg.init = value;
    } else if (key == "mode") {
        cfg.mode = value;
    } else if (key == "pretrain") {
        cfg.pretrain = parse_on_off(key, value, where);
    } else if (key == "pretrain_steps") {
        cfg.pretrain_steps = parse_count(key, value, where);
    } else if (key == "steps") {
        cfg.steps = parse_count(key, value, where);
    } else if (key == "kernels") {
        cfg.kernels = parse_count_list(key, value, where);
    } else if (key == "channels") {
        cfg.channels = parse_count_list(key, value, where);
    } else if (key == "k") {
        cfg.k = parse_count(key, value, where);
    } else if (key == "restarts") {
        cfg.restarts = parse_count(key, value, where);
    } else if (key == "kind") {
        cfg.kind = value;
    } else if (key == "dims") {
        cfg.dims = parse_count_list(key, value, where);
    } else if (key == "samples") {
        cfg.samples = parse_count_list(key, value, where);
    } else if (key == "ambient") {
        cfg.ambient = parse_count(key, value, where);
    } else if (key == "noise") {
        cfg.noise = parse_real(key, value, where);
    } else if (key == "side") {
        cfg.side = parse_count(key, value, where);
    } else if (key == "seed") {
        cfg.seed = parse_seed(key, value, where);
    } else if (key == "in") {
        cfg.in = value;
    } else if (key == "out") {
        cfg.out = value;
    } else if (key == "report") {
        cfg.report = value;
    } else if (key == "truth") {
        cfg.truth = value;
    } else if (key == "pred") {
        cfg.pred = value;
    } else if (key == "affinity") {
        cfg.affinity = value;
    } else if (key == "trace") {
        cfg.trace = value;
    } else if (key == "params") {
        cfg.params_path = value;
    } else if (key == "regs") {
        cfg.regs = value;
    } else {
        throw ConfigError(where + "unknown key '" + key + "'");
    }
}

}  // namespace detail

/// Validates the solver- and data-level invariants shared by all subcommands.
inline void validate_run_config(const RunConfig& cfg) {
    if (!(cfg.lambda1 > 0.0)) {
        throw ConfigError("key 'lambda1': must be a positive real, got " +
                          std::to_string(cfg.lambda1));
    }
    if (!(cfg.lambda2 > 0.0)) {
        throw ConfigError("key 'lambda2': must be a positive real, got " +
                          std::to_string(cfg.lambda2));
    }
    if (!(cfg.lr > 0.0)) throw ConfigError("key 'lr': must be a positive real");
    if (cfg.iters < 1) throw ConfigError("key 'iters': must be at least 1");
    if (!(cfg.eps > 0.0)) throw ConfigError("key 'eps': must be a positive real");
    if (cfg.tol < 0.0) throw ConfigError("key 'tol': must be nonnegative");
    if (cfg.reg != "me" && cfg.reg != "l1" && cfg.reg != "fro" && cfg.reg != "nuc") {
        throw ConfigError("key 'reg': expected me|l1|fro|nuc, got '" + cfg.reg + "'");
    }
    if (cfg.step != "adam" && cfg.step != "gd") {
        throw ConfigError("key 'step': expected adam|gd, got '" + cfg.step + "'");
    }
    if (cfg.zero_diag != "auto" && cfg.zero_diag != "on" && cfg.zero_diag != "off") {
        throw ConfigError("key 'zero_diag': expected auto|on|off, got '" + cfg.zero_diag + "'");
    }
    if (cfg.init != "auto" && cfg.init != "eps") {
        try {
            std::size_t used = 0;
            const double v = std::stod(cfg.init, &used);
            if (used != cfg.init.size() || !(v >= 0.0)) throw std::invalid_argument(cfg.init);
        } catch (const std::exception&) {
            throw ConfigError("key 'init': expected auto|eps|nonnegative real, got '" +
                              cfg.init + "'");
        }
    }
    if (cfg.mode != "decoupled" && cfg.mode != "coupled") {
        throw ConfigError("key 'mode': expected decoupled|coupled, got '" + cfg.mode + "'");
    }
    if (cfg.kind != "features" && cfg.kind != "images") {
        throw ConfigError("key 'kind': expected features|images, got '" + cfg.kind + "'");
    }
    if (cfg.k < 1) throw ConfigError("key 'k': must be at least 1");
    if (cfg.restarts < 1) throw ConfigError("key 'restarts': must be at least 1");
    if (cfg.noise < 0.0) throw ConfigError("key 'noise': must be nonnegative");
    if (cfg.kernels.empty() || cfg.channels.empty() ||
        cfg.kernels.size() != cfg.channels.size()) {
        throw ConfigError("keys 'kernels'/'channels': lists must be nonempty and equal length");
    }
}

/// Reads a line-oriented `key = value` file ('#' starts a comment) and applies
/// command-line overrides on top. Duplicate keys within one source, unknown
/// keys and unparsable values are configuration errors.
inline RunConfig parse_config(const std::string& file_path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    if (!file_path.empty()) {
        std::ifstream in(file_path);
        if (!in) throw ConfigError("cannot open config file '" + file_path + "'");
        std::string line;
        std::size_t lineno = 0;
        std::set<std::string> seen;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::string where =
                "'" + file_path + "' line " + std::to_string(lineno) + ": ";
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(where + "expected 'key = value'");
            }
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError(where + "empty key");
            if (!seen.insert(key).second) {
                throw ConfigError(where + "duplicate key '" + key + "'");
            }
            detail::apply_setting(cfg, key, value, where);
        }
    }
    std::set<std::string> seen_cli;
    for (const auto& [key, value] : overrides) {
        if (!seen_cli.insert(key).second) {
            throw ConfigError("duplicate command-line key '" + key + "'");
        }
        detail::apply_setting(cfg, key, value, "");
    }
    validate_run_config(cfg);
    return cfg;
}

/// Deterministic echo of every resolved setting, embedded in each report.
inline std::string echo_config(const RunConfig& cfg) {
    std::ostringstream out;
    const auto list = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s.push_back(',');
            s += std::to_string(v[i]);
        }
        return s;
    };
    char num[64];
    const auto real = [&](double v) {
        std::snprintf(num, sizeof(num), "%.12g", v);
        return std::string(num);
    };
    out << "config.reg: " << cfg.reg << "\n";
    out << "config.lambda1: " << real(cfg.lambda1) << "\n";
    out << "config.lambda2: " << real(cfg.lambda2) << "\n";
    out << "config.lr: " << real(cfg.lr) << "\n";
    out << "config.iters: " << cfg.iters << "\n";
    out << "config.tol: " << real(cfg.tol) << "\n";
    out << "config.eps: " << real(cfg.eps) << "\n";
    out << "config.step: " << cfg.step << "\n";
    out << "config.zero_diag: " << cfg.zero_diag << "\n";
    out << "config.init: " << cfg.init << "\n";
    out << "config.mode: " << cfg.mode << "\n";
    out << "config.pretrain: " << (cfg.pretrain ? "on" : "off") << "\n";
    out << "config.pretrain_steps: " << cfg.pretrain_steps << "\n";
    out << "config.steps: " << cfg.steps << "\n";
    out << "config.kernels: " << list(cfg.kernels) << "\n";
    out << "config.channels: " << list(cfg.channels) << "\n";
    out << "config.k: " << cfg.k << "\n";
    out << "config.restarts: " << cfg.restarts << "\n";
    out << "config.kind: " << cfg.kind << "\n";
    out << "config.dims: " << list(cfg.dims) << "\n";
    out << "config.samples: " << list(cfg.samples) << "\n";
    out << "config.ambient: " << cfg.ambient << "\n";
    out << "config.noise: " << real(cfg.noise) << "\n";
    out << "config.side: " << cfg.side << "\n";
    out << "config.seed: " << cfg.seed << "\n";
    return out.str();
}

}  // namespace mesc
