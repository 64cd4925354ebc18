// Flat dotted-key configuration:
//
//   # comment
//   train.rounds = 200
//   mode = fedmlp
//
// Every key has a default so an empty file is a valid configuration. A run
// manifest (JSON with a "config" object of the same keys) is accepted too.
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedmlp/data_synth.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/fed_protocol.hpp"

namespace fedmlp {

/// Everything needed to reproduce one run.
struct ExperimentConfig {
    FederationConfig fed;
    SyntheticSpec data;
    int missing = 4;
    double correlation = 0.0;

    /// Desk-scale defaults: the protocol hyper-parameters of the method with
    /// T = 200 rounds, evaluation every 5 rounds and a learning rate suited
    /// to a from-scratch MLP.
    static ExperimentConfig defaults() {
        ExperimentConfig c;
        c.fed.total_rounds = 200;
        c.fed.eval_interval = 5;
        c.fed.learning_rate = 1e-3;
        return c;
    }

    SyntheticSpec resolved_data() const {
        SyntheticSpec s = data;
        s.seed = fed.seed;
        s.correlation = correlation == 0.0 ? Matrix() : SyntheticSpec::uniform_correlation(s.classes, correlation);
        return s;
    }

    void validate() const {
        fed.validate();
        resolved_data().validate();
        check_mask_feasible(fed.clients, data.classes, missing);
    }
};

namespace detail {

inline std::string format_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
}

inline long long parse_int(const std::string& v) {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return i;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw std::invalid_argument("expected a boolean");
}

inline Mode parse_mode(const std::string& v) {
    if (v == "fedavg" || v == "FEDAVG") return Mode::kFedAvg;
    if (v == "fedavg_pl" || v == "FEDAVG_PL") return Mode::kFedAvgPL;
    if (v == "fedmlp" || v == "FEDMLP") return Mode::kFedMLP;
    throw std::invalid_argument("expected fedavg, fedavg_pl or fedmlp");
}

inline std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_double(trim(tok)));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
    return out;
}

inline std::string format_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_exact(v[i]);
    return out;
}

struct KeySpec {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::map<std::string, KeySpec>& key_table() {
    static const std::map<std::string, KeySpec> table = [] {
        std::map<std::string, KeySpec> t;
        auto dbl = [&](const std::string& key, auto accessor) {
            t[key] = {[accessor](const ExperimentConfig& c) { return format_exact(accessor(const_cast<ExperimentConfig&>(c))); },
                      [accessor](ExperimentConfig& c, const std::string& v) { accessor(c) = parse_double(v); }};
        };
        auto integer = [&](const std::string& key, auto accessor) {
            t[key] = {[accessor](const ExperimentConfig& c) { return std::to_string(accessor(const_cast<ExperimentConfig&>(c))); },
                      [accessor](ExperimentConfig& c, const std::string& v) {
                          const long long i = parse_int(v);
                          using T = std::remove_reference_t<decltype(accessor(c))>;
                          if (i < 0 && std::is_unsigned_v<T>) throw std::invalid_argument("must be non-negative");
                          accessor(c) = static_cast<T>(i);
                      }};
        };
        auto boolean = [&](const std::string& key, auto accessor) {
            t[key] = {[accessor](const ExperimentConfig& c) {
                          return std::string(accessor(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
                      },
                      [accessor](ExperimentConfig& c, const std::string& v) { accessor(c) = parse_bool(v); }};
        };
        integer("seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.fed.seed; });
        integer("threads", [](ExperimentConfig& c) -> int& { return c.fed.threads; });
        t["mode"] = {[](const ExperimentConfig& c) { return std::string(to_string(c.fed.mode)); },
                     [](ExperimentConfig& c, const std::string& v) { c.fed.mode = parse_mode(v); }};
        integer("federation.clients", [](ExperimentConfig& c) -> int& { return c.fed.clients; });
        integer("data.classes", [](ExperimentConfig& c) -> int& { return c.data.classes; });
        integer("data.input_dim", [](ExperimentConfig& c) -> int& { return c.data.input_dim; });
        integer("data.n_train", [](ExperimentConfig& c) -> std::size_t& { return c.data.n_train; });
        integer("data.n_test", [](ExperimentConfig& c) -> std::size_t& { return c.data.n_test; });
        t["data.positive_rates"] = {
            [](const ExperimentConfig& c) { return format_list(c.data.positive_rates); },
            [](ExperimentConfig& c, const std::string& v) { c.data.positive_rates = parse_list(v); }};
        dbl("data.correlation", [](ExperimentConfig& c) -> double& { return c.correlation; });
        dbl("data.signal", [](ExperimentConfig& c) -> double& { return c.data.signal; });
        dbl("data.noise", [](ExperimentConfig& c) -> double& { return c.data.noise; });
        integer("mask.missing", [](ExperimentConfig& c) -> int& { return c.missing; });
        integer("model.hidden", [](ExperimentConfig& c) -> int& { return c.fed.hidden_dim; });
        integer("train.rounds", [](ExperimentConfig& c) -> int& { return c.fed.total_rounds; });
        integer("train.warmup", [](ExperimentConfig& c) -> int& { return c.fed.warmup_rounds; });
        integer("train.local_epochs", [](ExperimentConfig& c) -> int& { return c.fed.local_epochs; });
        integer("train.batch_size", [](ExperimentConfig& c) -> int& { return c.fed.batch_size; });
        dbl("train.lr", [](ExperimentConfig& c) -> double& { return c.fed.learning_rate; });
        dbl("train.weight_decay", [](ExperimentConfig& c) -> double& { return c.fed.weight_decay; });
        dbl("train.aug_weak", [](ExperimentConfig& c) -> double& { return c.fed.aug_weak; });
        dbl("train.aug_strong", [](ExperimentConfig& c) -> double& { return c.fed.aug_strong; });
        t["loss.normalizer"] = {
            [](const ExperimentConfig& c) {
                return std::string(c.fed.normalizer == LossNormalizer::kClasses ? "classes" : "active");
            },
            [](ExperimentConfig& c, const std::string& v) {
                if (v == "classes") c.fed.normalizer = LossNormalizer::kClasses;
                else if (v == "active") c.fed.normalizer = LossNormalizer::kActive;
                else throw std::invalid_argument("expected classes or active");
            }};
        dbl("loss.la_tau", [](ExperimentConfig& c) -> double& { return c.fed.la_tau; });
        t["loss.prior_scope"] = {
            [](const ExperimentConfig& c) {
                return std::string(c.fed.prior_scope == PriorScope::kLocal ? "local" : "global");
            },
            [](ExperimentConfig& c, const std::string& v) {
                if (v == "local") c.fed.prior_scope = PriorScope::kLocal;
                else if (v == "global") c.fed.prior_scope = PriorScope::kGlobal;
                else throw std::invalid_argument("expected local or global");
            }};
        dbl("mld.L", [](ExperimentConfig& c) -> double& { return c.fed.band_lower; });
        dbl("mld.R", [](ExperimentConfig& c) -> double& { return c.fed.band_upper; });
        dbl("mld.T0", [](ExperimentConfig& c) -> double& { return c.fed.base_tau0; });
        dbl("mld.T1", [](ExperimentConfig& c) -> double& { return c.fed.base_tau1; });
        dbl("mld.tau_min", [](ExperimentConfig& c) -> double& { return c.fed.tau_min; });
        integer("mld.min_select", [](ExperimentConfig& c) -> std::size_t& { return c.fed.min_select; });
        boolean("ablation.mld", [](ExperimentConfig& c) -> bool& { return c.fed.flags.mld; });
        boolean("ablation.wpc", [](ExperimentConfig& c) -> bool& { return c.fed.flags.wpc; });
        boolean("ablation.cr", [](ExperimentConfig& c) -> bool& { return c.fed.flags.cr; });
        boolean("ablation.st", [](ExperimentConfig& c) -> bool& { return c.fed.flags.st; });
        integer("eval.interval", [](ExperimentConfig& c) -> int& { return c.fed.eval_interval; });
        dbl("eval.threshold", [](ExperimentConfig& c) -> double& { return c.fed.eval_threshold; });
        boolean("eval.adjusted", [](ExperimentConfig& c) -> bool& { return c.fed.eval_adjusted; });
        return t;
    }();
    return table;
}

}  // namespace detail

/// Sets one dotted key. Unknown keys and unparsable values raise ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = detail::key_table();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
    try {
        it->second.set(cfg, value);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("bad value '" + value + "' for key '" + key + "': " + e.what());
    }
}

/// All keys with their resolved values, in key order.
inline std::map<std::string, std::string> config_values(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& [key, spec] : detail::key_table()) out[key] = spec.get(cfg);
    return out;
}

/// Flat text rendering of `config_values`, parseable by `parse_config`.
inline std::string render_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_values(cfg)) out += k + " = " + v + "\n";
    return out;
}

/// Applies "key=value" text (one per line) on top of `base`.
/// Errors name the offending line.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = ExperimentConfig::defaults(),
                                     const std::string& source = "config") {
    if (auto first = text.find_first_not_of(" \t\r\n"); first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const std::exception& e) {
            throw ConfigError(source + ": invalid JSON manifest: " + e.what());
        }
        if (!j.contains("config") || !j["config"].is_object())
            throw ConfigError(source + ": manifest has no \"config\" object");
        for (const auto& [k, v] : j["config"].items()) {
            try {
                set_config_value(base, k, v.is_string() ? v.get<std::string>() : v.dump());
            } catch (const ConfigError& e) {
                throw ConfigError(source + ": " + e.what());
            }
        }
        return base;
    }
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            set_config_value(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = ExperimentConfig::defaults()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), std::move(base), path);
}

/// Applies "key=value" overrides from the command line.
inline void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
        try {
            set_config_value(cfg, detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("override '" + o + "': " + e.what());
        }
    }
}

}  // namespace fedmlp
