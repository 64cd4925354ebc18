// Command implementations behind the `fedmlp` executable: run, ablate,
// masksweep. Each returns a process exit code:
//   0 success, 2 configuration error, 3 numerical failure.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedmlp/config.hpp"
#include "fedmlp/data_synth.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/fed_protocol.hpp"
#include "fedmlp/metrics.hpp"

namespace fedmlp {

inline constexpr const char* kVersion = "fedmlp 0.1.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr const char* kOutDirEnv = "FEDMLP_OUT_DIR";

/// CSV number format: six significant digits, "nan" for missing values.
/// Parsing the text back and formatting again yields the same text.
inline std::string format_csv_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Writes to `path.tmp` and renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write '" + tmp.string() + "'");
        f << content;
        if (!f.flush()) throw ConfigError("cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ConfigError("cannot rename onto '" + path.string() + "': " + ec.message());
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw ConfigError("cannot create output directory '" + dir.string() + "'");
}

/// Synthetic data, partition and mask plan for a configuration.
inline DatasetBundle make_synthetic_bundle(const ExperimentConfig& cfg) {
    cfg.validate();
    const SyntheticSpec spec = cfg.resolved_data();
    const DatasetSplit split = generate_dataset(spec);
    const MaskPlan plan = build_mask_plan(cfg.fed.clients, spec.classes, cfg.missing, cfg.fed.seed + 1);
    return make_bundle(split, cfg.fed.clients, plan);
}

// ---------------------------------------------------------------------------
// Result rendering
// ---------------------------------------------------------------------------

inline std::string metrics_csv_header(int classes) {
    std::string h = "round,stage,bacc,auc,map,coverage,tag_precision";
    for (const char* col : {"auc", "ap", "sens", "spec", "dg"})
        for (int c = 0; c < classes; ++c) h += std::string(",") + col + "_c" + std::to_string(c);
    return h + "\n";
}

/// One row per evaluated round.
inline std::string render_metrics_csv(const std::vector<RoundRecord>& history, int classes) {
    std::string out = metrics_csv_header(classes);
    for (const auto& r : history) {
        if (!r.evaluated) continue;
        out += std::to_string(r.round) + "," + r.stage + "," + format_csv_value(r.eval.bacc) + "," +
               format_csv_value(r.eval.auc) + "," + format_csv_value(r.eval.map) + "," +
               format_csv_value(r.coverage) + "," + format_csv_value(r.tag_precision);
        for (const auto* v : {&r.eval.per_class_auc, &r.eval.per_class_ap, &r.eval.sensitivity, &r.eval.specificity})
            for (int c = 0; c < classes; ++c)
                out += "," + format_csv_value(static_cast<std::size_t>(c) < v->size() ? (*v)[static_cast<std::size_t>(c)] : kNaN);
        for (int c = 0; c < classes; ++c)
            out += "," + format_csv_value(c < r.difficulty.size() ? r.difficulty[c] : kNaN);
        out += "\n";
    }
    return out;
}

namespace detail {

inline nlohmann::json json_number(double v) {
    return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

inline nlohmann::json json_numbers(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(json_number(x));
    return a;
}

inline nlohmann::json json_numbers(const Vector& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
    return a;
}

inline std::string iso_time(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Final-state digest of a run.
struct RunOutcome {
    std::vector<RoundRecord> history;
    TagAudit audit;
    ServerState server;
    double wall_seconds = 0.0;

    const RoundRecord& final_record() const { return history.back(); }
};

/// Runs one configuration in-process.
inline RunOutcome execute(const ExperimentConfig& cfg, const RoundObserver& observer = {}) {
    const DatasetBundle bundle = make_synthetic_bundle(cfg);
    RunOutcome out;
    const auto started = std::chrono::steady_clock::now();
    out.history = run_experiment(cfg.fed, bundle, [&](int t, const std::vector<ClientState>& clients,
                                                      const ServerState& server) {
        if (t == cfg.fed.total_rounds) {
            out.audit = TagAudit(static_cast<std::size_t>(bundle.classes));
            for (const auto& c : clients) out.audit.merge(pseudo_label_audit(c.ledger, c.labels.truth));
            out.server = server;
        }
        if (observer) observer(t, clients, server);
    });
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

inline nlohmann::json render_summary(const ExperimentConfig& cfg, const RunOutcome& run) {
    const RoundRecord& last = run.final_record();
    const Recipe recipe = recipe_for(cfg.fed);
    nlohmann::json s;
    s["mode"] = to_string(cfg.fed.mode);
    s["flags"] = {{"mld", cfg.fed.flags.mld}, {"wpc", cfg.fed.flags.wpc}, {"cr", cfg.fed.flags.cr}, {"st", cfg.fed.flags.st}};
    s["rounds"] = cfg.fed.total_rounds;
    s["final"] = {{"round", last.round},
                  {"bacc", detail::json_number(last.eval.bacc)},
                  {"auc", detail::json_number(last.eval.auc)},
                  {"map", detail::json_number(last.eval.map)},
                  {"per_class_auc", detail::json_numbers(last.eval.per_class_auc)},
                  {"per_class_ap", detail::json_numbers(last.eval.per_class_ap)},
                  {"sensitivity", detail::json_numbers(last.eval.sensitivity)},
                  {"specificity", detail::json_numbers(last.eval.specificity)}};
    if (cfg.fed.mode == Mode::kFedMLP && recipe.has_detection_stage()) {
        nlohmann::json st;
        st["coverage_percent"] = last.coverage;
        st["tag_precision"] = detail::json_number(run.audit.overall.precision());
        st["tagged0"] = run.audit.overall.tagged0;
        st["tagged1"] = run.audit.overall.tagged1;
        st["missing_entries"] = run.audit.entries;
        nlohmann::json per = nlohmann::json::array();
        for (const auto& pc : run.audit.per_class)
            per.push_back({{"tagged0", pc.tagged0}, {"tagged1", pc.tagged1},
                           {"precision0", detail::json_number(pc.precision0())},
                           {"precision1", detail::json_number(pc.precision1())},
                           {"recall1", detail::json_number(pc.recall1())}});
        st["per_class"] = per;
        st["global_difficulty"] = detail::json_numbers(run.server.difficulty);
        if (run.server.stats_ready) {
            st["tau0"] = detail::json_numbers(run.server.ratios.tau0);
            st["tau1"] = detail::json_numbers(run.server.ratios.tau1);
        }
        s["stage2"] = st;
    }
    s["wall_seconds"] = run.wall_seconds;
    return s;
}

inline nlohmann::json render_manifest(const ExperimentConfig& cfg, const std::string& command,
                                      std::chrono::system_clock::time_point start,
                                      std::chrono::system_clock::time_point end,
                                      const std::vector<std::string>& outputs) {
    nlohmann::json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = cfg.fed.seed;
    m["config"] = config_values(cfg);
    m["started"] = detail::iso_time(start);
    m["finished"] = detail::iso_time(end);
    m["outputs"] = outputs;
    return m;
}

inline nlohmann::json render_snapshot(int round, const ServerState& server) {
    nlohmann::json j;
    j["round"] = round;
    auto mat = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < m.rows(); ++i) {
            nlohmann::json r = nlohmann::json::array();
            for (Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
            rows.push_back(r);
        }
        return rows;
    };
    j["global"] = {{"w1", mat(server.global.w1)}, {"b1", detail::json_numbers(server.global.b1)},
                   {"w2", mat(server.global.w2)}, {"b2", detail::json_numbers(server.global.b2)}};
    j["difficulty"] = detail::json_numbers(server.difficulty);
    if (server.stats_ready) {
        j["tau0"] = detail::json_numbers(server.ratios.tau0);
        j["tau1"] = detail::json_numbers(server.ratios.tau1);
        nlohmann::json protos = nlohmann::json::object();
        for (const auto& [c, p] : server.prototypes) {
            nlohmann::json e;
            e["negative"] = p.negative ? detail::json_numbers(*p.negative) : nlohmann::json(nullptr);
            e["positive"] = p.positive ? detail::json_numbers(*p.positive) : nlohmann::json(nullptr);
            protos[std::to_string(c)] = e;
        }
        j["prototypes"] = protos;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CommandOptions {
    std::optional<std::string> config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool snapshots = false;
    std::vector<int> missing_list;  // masksweep only
};

/// `--out` wins; otherwise the environment override; otherwise `fallback`.
inline std::filesystem::path resolve_out_dir(const CommandOptions& o, const std::string& fallback) {
    if (o.out_dir) return *o.out_dir;
    if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
    return fallback;
}

inline ExperimentConfig resolve_config(const CommandOptions& o) {
    ExperimentConfig cfg = ExperimentConfig::defaults();
    if (o.config_path) cfg = load_config_file(*o.config_path, cfg);
    apply_overrides(cfg, o.overrides);
    if (o.seed) cfg.fed.seed = *o.seed;
    if (o.threads) cfg.fed.threads = *o.threads;
    cfg.validate();
    return cfg;
}

/// Maps exceptions onto the exit-code contract.
template <class F>
int guarded(F&& body, std::ostream& err = std::cerr) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TrainingDiverged& e) {
        err << "training diverged: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DomainError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

/// Runs one experiment and writes manifest.json, metrics.csv, summary.json
/// and, with snapshots enabled, snapshots/round_NNNN.json.
inline RunOutcome run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                   bool snapshots, const std::string& command) {
    ensure_directory(dir);
    const auto start = std::chrono::system_clock::now();
    std::vector<std::string> outputs{"manifest.json", "metrics.csv", "summary.json"};
    if (snapshots) ensure_directory(dir / "snapshots");
    RunOutcome run = execute(cfg, [&](int t, const std::vector<ClientState>&, const ServerState& server) {
        if (!snapshots || !is_eval_round(t, cfg.fed)) return;
        char name[32];
        std::snprintf(name, sizeof name, "round_%04d.json", t);
        write_file_atomic(dir / "snapshots" / name, render_snapshot(t, server).dump(1) + "\n");
    });
    if (snapshots) outputs.push_back("snapshots/");
    write_file_atomic(dir / "metrics.csv", render_metrics_csv(run.history, cfg.data.classes));
    write_file_atomic(dir / "summary.json", render_summary(cfg, run).dump(2) + "\n");
    write_file_atomic(dir / "manifest.json",
                      render_manifest(cfg, command, start, std::chrono::system_clock::now(), outputs).dump(2) + "\n");
    return run;
}

inline int cmd_run(const CommandOptions& o, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            const ExperimentConfig cfg = resolve_config(o);
            const auto dir = resolve_out_dir(o, "out");
            const RunOutcome run = run_to_directory(cfg, dir, o.snapshots, "run");
            const auto& last = run.final_record();
            log << "round " << last.round << " " << to_string(cfg.fed.mode) << ": BACC "
                << format_csv_value(100 * last.eval.bacc) << " AUC " << format_csv_value(100 * last.eval.auc)
                << " mAP " << format_csv_value(100 * last.eval.map) << " -> " << dir.string() << "\n";
            return kExitOk;
        },
        err);
}

/// The five cumulative component sets of the ablation table.
struct AblationRow {
    std::string name;
    Mode mode;
    AblationFlags flags;
};

inline std::vector<AblationRow> ablation_schedule() {
    return {{"fedavg", Mode::kFedAvg, {false, false, false, false}},
            {"+mld", Mode::kFedMLP, {true, false, false, false}},
            {"+wpc", Mode::kFedMLP, {true, true, false, false}},
            {"+cr", Mode::kFedMLP, {true, true, true, false}},
            {"+st", Mode::kFedMLP, {true, true, true, true}}};
}

inline std::string percent(double v) { return format_csv_value(100.0 * v); }

/// Five runs on shared data and seed; writes ablation.csv (metrics in
/// percent) after every row plus one run directory per row.
inline int cmd_ablate(const CommandOptions& o, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            const ExperimentConfig base = resolve_config(o);
            const auto dir = resolve_out_dir(o, "out");
            ensure_directory(dir);
            std::string csv = "row,fedavg,mld,wpc,cr,st,bacc,auc,map\n";
            const auto start = std::chrono::system_clock::now();
            int index = 0;
            for (const auto& row : ablation_schedule()) {
                ExperimentConfig cfg = base;
                cfg.fed.mode = row.mode;
                cfg.fed.flags = row.flags;
                const auto sub = dir / ("row" + std::to_string(++index));
                const RunOutcome run = run_to_directory(cfg, sub, false, "ablate");
                const auto& e = run.final_record().eval;
                auto b = [](bool f) { return std::string(f ? "1" : "0"); };
                csv += row.name + ",1," + b(row.flags.mld) + "," + b(row.flags.wpc) + "," + b(row.flags.cr) + "," +
                       b(row.flags.st) + "," + percent(e.bacc) + "," + percent(e.auc) + "," + percent(e.map) + "\n";
                write_file_atomic(dir / "ablation.csv", csv);
                log << row.name << ": BACC " << percent(e.bacc) << " AUC " << percent(e.auc) << " mAP "
                    << percent(e.map) << "\n";
            }
            write_file_atomic(dir / "manifest.json",
                              render_manifest(base, "ablate", start, std::chrono::system_clock::now(),
                                              {"ablation.csv", "row1/", "row2/", "row3/", "row4/", "row5/"})
                                      .dump(2) + "\n");
            return kExitOk;
        },
        err);
}

/// FedAvg versus the full method for each missing-class count. Infeasible
/// counts produce a warning row; duplicates are dropped.
inline int cmd_masksweep(const CommandOptions& o, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            const ExperimentConfig base = resolve_config(o);
            const auto dir = resolve_out_dir(o, "out");
            ensure_directory(dir);
            std::vector<int> ms = o.missing_list;
            if (ms.empty())
                for (int m = 1; m < base.data.classes; ++m) ms.push_back(m);
            std::sort(ms.begin(), ms.end());
            ms.erase(std::unique(ms.begin(), ms.end()), ms.end());

            std::string csv = "missing,status,fedavg_bacc,fedavg_auc,fedavg_map,fedmlp_bacc,fedmlp_auc,fedmlp_map\n";
            const auto start = std::chrono::system_clock::now();
            for (int m : ms) {
                try {
                    check_mask_feasible(base.fed.clients, base.data.classes, m);
                } catch (const ConfigError& e) {
                    err << "warning: skipping missing=" << m << ": " << e.what() << "\n";
                    csv += std::to_string(m) + ",infeasible,nan,nan,nan,nan,nan,nan\n";
                    write_file_atomic(dir / "masksweep.csv", csv);
                    continue;
                }
                std::string row = std::to_string(m) + ",ok";
                for (Mode mode : {Mode::kFedAvg, Mode::kFedMLP}) {
                    ExperimentConfig cfg = base;
                    cfg.missing = m;
                    cfg.fed.mode = mode;
                    if (mode == Mode::kFedMLP) cfg.fed.flags = AblationFlags{};
                    const auto sub = dir / ("m" + std::to_string(m) + "_" + to_string(mode));
                    const auto& e = run_to_directory(cfg, sub, false, "masksweep").final_record().eval;
                    row += "," + percent(e.bacc) + "," + percent(e.auc) + "," + percent(e.map);
                    log << "missing " << m << " " << to_string(mode) << ": BACC " << percent(e.bacc) << "\n";
                }
                csv += row + "\n";
                write_file_atomic(dir / "masksweep.csv", csv);
            }
            write_file_atomic(dir / "manifest.json",
                              render_manifest(base, "masksweep", start, std::chrono::system_clock::now(),
                                              {"masksweep.csv"})
                                      .dump(2) + "\n");
            return kExitOk;
        },
        err);
}

}  // namespace fedmlp
