// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_CONFIG_HPP
#define WSSL_CONFIG_HPP

// Flat key=value config files and run manifests. A manifest is itself a
// valid config file: re-running from it reproduces the run, so doubles are
// serialized with 17 significant digits and keys keep a fixed order.

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wssl/io.hpp"
#include "wssl/trainer.hpp"

namespace wssl {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// key=value lines; '#' starts a comment line; later keys win.
inline std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " +
                              t);
        out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw ConfigError(key + ": not a boolean (use 0/1): '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v,
                          T (*one)(const std::string&, const std::string&)) {
    std::vector<T> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(static_cast<T>(one(key, t)));
    }
    return out;
}

// Everything a `run` needs beyond the TrainConfig itself.
struct RunSpec {
    TrainConfig cfg;
    std::string data;  // dataset CSV path
    std::string out;   // output directory
};

// Applies one config key to the spec. Unknown keys raise; informational
// manifest keys (version, command, dataset_*) are accepted and ignored.
inline bool apply_config_key(RunSpec& spec, const std::string& key, const std::string& value) {
    TrainConfig& c = spec.cfg;
    if (key == "version" || key == "command" || key.rfind("dataset_", 0) == 0) return false;
    if (key == "data") {
        spec.data = value;
    } else if (key == "out") {
        spec.out = value;
    } else if (key == "mode") {
        c.mode = parse_run_mode(value);
    } else if (key == "seed") {
        c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "outer_iters") {
        c.outer_iters = static_cast<int>(parse_int(key, value));
    } else if (key == "inner_steps") {
        c.inner_steps = static_cast<int>(parse_int(key, value));
    } else if (key == "warmup_iters") {
        c.warmup_iters = static_cast<int>(parse_int(key, value));
    } else if (key == "theta_step") {
        c.theta_step = parse_double(key, value);
    } else if (key == "lambda_step") {
        c.lambda_step = parse_double(key, value);
    } else if (key == "batch_labeled") {
        c.batch_labeled = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_unlabeled") {
        c.batch_unlabeled = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_validation") {
        c.batch_validation = static_cast<int>(parse_int(key, value));
    } else if (key == "validation_full_limit") {
        c.validation_full_limit = static_cast<int>(parse_int(key, value));
    } else if (key == "lambda_init") {
        c.lambda_init = parse_double(key, value);
    } else if (key == "damping") {
        c.damping = parse_double(key, value);
    } else if (key == "pseudo_threshold") {
        c.pseudo_threshold = parse_double(key, value);
    } else if (key == "ihvp") {
        c.ihvp = value;
    } else if (key == "neumann_terms") {
        c.neumann_terms = static_cast<int>(parse_int(key, value));
    } else if (key == "neumann_scale") {
        c.neumann_scale = parse_double(key, value);
    } else if (key == "theta_opt") {
        c.theta_opt = value;
    } else if (key == "sgd_momentum") {
        c.sgd_momentum = parse_double(key, value);
    } else if (key == "hidden_dim") {
        c.hidden_dim = static_cast<int>(parse_int(key, value));
    } else if (key == "binary_reparam") {
        c.binary_reparam = parse_bool(key, value);
    } else if (key == "weights_log_stride") {
        c.weights_log_stride = static_cast<int>(parse_int(key, value));
    } else if (key == "snapshot_iters") {
        c.snapshot_iters.clear();
        for (long long v : parse_list<long long>(key, value, parse_int))
            c.snapshot_iters.push_back(static_cast<int>(v));
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return true;
}

// Collects every bad key instead of stopping at the first.
inline void apply_config_text(RunSpec& spec, const std::string& text) {
    std::vector<std::string> errors;
    for (const auto& [key, value] : parse_kv(text)) {
        try {
            apply_config_key(spec, key, value);
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const std::string& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
}

inline std::string serialize_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

// The run manifest: resolved config, dataset description when available,
// and the code version. Written before training starts.
inline std::string run_manifest(const RunSpec& spec,
                                const std::vector<std::pair<std::string, std::string>>&
                                    dataset_info = {}) {
    const TrainConfig& c = spec.cfg;
    std::ostringstream out;
    out << "command=run\n";
    out << "version=" << kVersion << "\n";
    out << "data=" << spec.data << "\n";
    out << "out=" << spec.out << "\n";
    out << "mode=" << run_mode_name(c.mode) << "\n";
    out << "seed=" << c.seed << "\n";
    out << "outer_iters=" << c.outer_iters << "\n";
    out << "inner_steps=" << c.inner_steps << "\n";
    out << "warmup_iters=" << c.warmup_iters << "\n";
    out << "theta_step=" << fmt_sig(c.theta_step, 17) << "\n";
    out << "lambda_step=" << fmt_sig(c.lambda_step, 17) << "\n";
    out << "batch_labeled=" << c.batch_labeled << "\n";
    out << "batch_unlabeled=" << c.batch_unlabeled << "\n";
    out << "batch_validation=" << c.batch_validation << "\n";
    out << "validation_full_limit=" << c.validation_full_limit << "\n";
    out << "lambda_init=" << fmt_sig(c.lambda_init, 17) << "\n";
    out << "damping=" << fmt_sig(c.damping, 17) << "\n";
    out << "pseudo_threshold=" << fmt_sig(c.pseudo_threshold, 17) << "\n";
    out << "ihvp=" << c.ihvp << "\n";
    out << "neumann_terms=" << c.neumann_terms << "\n";
    out << "neumann_scale=" << fmt_sig(c.neumann_scale, 17) << "\n";
    out << "theta_opt=" << c.theta_opt << "\n";
    out << "sgd_momentum=" << fmt_sig(c.sgd_momentum, 17) << "\n";
    out << "hidden_dim=" << c.hidden_dim << "\n";
    out << "binary_reparam=" << (c.binary_reparam ? 1 : 0) << "\n";
    out << "weights_log_stride=" << c.weights_log_stride << "\n";
    out << "snapshot_iters=" << serialize_int_list(c.resolved_snapshot_iters()) << "\n";
    for (const auto& [k, v] : dataset_info) out << "dataset_" << k << "=" << v << "\n";
    return out.str();
}

}  // namespace wssl

#endif  // WSSL_CONFIG_HPP
