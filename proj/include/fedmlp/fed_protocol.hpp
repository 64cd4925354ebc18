// Client and server state machines for the two-stage federated protocol:
// a warm-up stage trained with the weighted partial-class loss, then a
// missing-label detection stage that tags pseudo labels from global dual
// prototypes and regularizes untagged missing classes toward the global
// model. FedAvg and FedAvg with a partial loss are available as baselines.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedmlp/annotation.hpp"
#include "fedmlp/core_model.hpp"
#include "fedmlp/data_synth.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/metrics.hpp"
#include "fedmlp/prototype_engine.hpp"

namespace fedmlp {

enum class Mode { kFedAvg, kFedAvgPL, kFedMLP };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::kFedAvg: return "fedavg";
        case Mode::kFedAvgPL: return "fedavg_pl";
        case Mode::kFedMLP: return "fedmlp";
    }
    return "?";
}

/// Component switches of the full method, in ablation order.
struct AblationFlags {
    bool mld = true;  // missing-label detection (partial loss + tagging)
    bool wpc = true;  // logit-adjusted weighting
    bool cr = true;   // consistency with the global teacher
    bool st = true;   // self-adaptive selection ratios

    bool operator==(const AblationFlags&) const = default;
};

enum class PriorScope { kLocal, kGlobal };

struct FederationConfig {
    int clients = 5;
    int warmup_rounds = 50;
    int total_rounds = 200;
    int local_epochs = 1;
    int batch_size = 32;
    int hidden_dim = 64;
    double learning_rate = 3e-5;
    double weight_decay = 1e-4;
    double band_lower = 0.3;   // L
    double band_upper = 0.7;   // R
    double base_tau0 = 0.005;  // T0
    double base_tau1 = 0.01;   // T1
    /// Lower bound applied to every selection ratio (0 disables).
    double tau_min = 0.0;
    /// Minimum per-side tag count once a ratio is positive (0 disables).
    std::size_t min_select = 0;
    double aug_weak = 0.05;
    double aug_strong = 0.2;
    double la_tau = 1.0;
    LossNormalizer normalizer = LossNormalizer::kClasses;
    PriorScope prior_scope = PriorScope::kLocal;
    Mode mode = Mode::kFedMLP;
    AblationFlags flags;
    int eval_interval = 5;
    double eval_threshold = 0.5;
    bool eval_adjusted = false;
    int threads = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (clients < 1) throw ConfigError("federation.clients must be >= 1");
        if (total_rounds < 1) throw ConfigError("train.rounds must be >= 1");
        if (warmup_rounds < 1 || warmup_rounds > total_rounds)
            throw ConfigError("train.warmup must satisfy 1 <= t1 <= T");
        if (local_epochs < 1) throw ConfigError("train.local_epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (hidden_dim < 1) throw ConfigError("model.hidden must be >= 1");
        if (!(learning_rate >= 0.0)) throw ConfigError("train.lr must be >= 0");
        if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
        if (!(band_lower >= 0.0 && band_lower < band_upper && band_upper <= 1.0))
            throw ConfigError("mld.L and mld.R must satisfy 0 <= L < R <= 1");
        if (base_tau0 < 0.0 || base_tau1 < 0.0 || tau_min < 0.0)
            throw ConfigError("selection ratios must be >= 0");
        if (aug_weak < 0.0 || aug_strong < aug_weak)
            throw ConfigError("augment noise must satisfy 0 <= weak <= strong");
        if (eval_interval < 1) throw ConfigError("eval.interval must be >= 1");
        if (!(eval_threshold > 0.0 && eval_threshold < 1.0))
            throw ConfigError("eval.threshold must lie in (0, 1)");
        if (threads < 1) throw ConfigError("threads must be >= 1");
    }
};

/// What a configuration actually trains with.
struct Recipe {
    bool partial = false;       // loss only on supervised entries
    bool logit_adjust = false;  // class-prior adjustment inside the loss
    bool tagging = false;       // prototype-based pseudo labels in stage 2
    bool consistency = false;   // MSE toward the global teacher in stage 2
    bool adaptive = false;      // tau scaled by global difficulty

    bool has_detection_stage() const { return tagging || consistency; }
};

inline Recipe recipe_for(const FederationConfig& cfg) {
    Recipe r;
    switch (cfg.mode) {
        case Mode::kFedAvg:
            break;
        case Mode::kFedAvgPL:
            r.partial = true;
            break;
        case Mode::kFedMLP:
            r.partial = cfg.flags.mld || cfg.flags.wpc;
            r.logit_adjust = cfg.flags.wpc;
            r.tagging = cfg.flags.mld;
            r.consistency = cfg.flags.cr;
            r.adaptive = cfg.flags.st && cfg.flags.mld;
            break;
    }
    return r;
}

/// Deterministic per-(seed, client, round, purpose) random stream.
inline std::mt19937_64 stream_for(std::uint64_t seed, int client, int round, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(client + 1), static_cast<std::uint32_t>(round),
                      purpose};
    return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// States and messages
// ---------------------------------------------------------------------------

struct ClientState {
    int id = 0;
    Matrix inputs;
    MaskedLabels labels;
    std::vector<int> active;
    std::vector<int> negative;
    ModelParams params;
    OptimizerState optimizer;
    PseudoLabelLedger ledger;
    ClassPriors priors;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

inline ClientState make_client(const ClientShard& shard, const ModelParams& init,
                               const FederationConfig& cfg) {
    ClientState c;
    c.id = shard.id;
    c.inputs = shard.inputs;
    c.labels = apply_mask(shard.truth, shard.missing);
    c.active = shard.active;
    c.negative = shard.missing;
    c.params = init;
    c.optimizer = OptimizerState::for_params(init, cfg.learning_rate, cfg.weight_decay);
    c.ledger = PseudoLabelLedger(c.size(), c.negative);
    c.priors = ClassPriors::balanced(init.class_count());
    return c;
}

/// Upload from one client at the end of a round.
struct ClientReport {
    int client = 0;
    std::size_t samples = 0;
    ModelParams params;
    bool has_local_stats = false;
    PrototypeMap prototypes;
    DifficultyReport difficulty;
};

struct ServerState {
    ModelParams global;
    AnnotationDistribution annotation;
    PrototypeMap prototypes;
    Vector difficulty;
    SelectionRatios ratios;
    bool stats_ready = false;
    int round = 0;
};

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Sample-count weighted parameter average, reduced in list order.
inline ModelParams fedavg_aggregate(std::span<const ModelParams> models,
                                    std::span<const std::size_t> sizes) {
    if (models.empty()) throw DimensionError("fedavg_aggregate: no models");
    if (models.size() != sizes.size()) throw DimensionError("fedavg_aggregate: sizes mismatch");
    double total = 0.0;
    for (std::size_t s : sizes) {
        if (s == 0) throw DomainError("fedavg_aggregate: client with zero samples");
        total += static_cast<double>(s);
    }
    ModelParams out = models.front().zeros_like();
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (!models[k].same_shape(out)) throw DimensionError("fedavg_aggregate: shape mismatch");
        const double w = static_cast<double>(sizes[k]) / total;
        for_each_tensor([w](auto& acc, const auto& m) { acc += w * m; }, out, models[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local training
// ---------------------------------------------------------------------------

/// Per-entry supervision handed to the epoch loop.
struct TrainingTargets {
    Matrix labels;      // hard labels (true or pseudo) where supervised
    Matrix supervised;  // WPC mask
    Matrix uncertain;   // MSE mask; empty when consistency is off
    ClassPriors priors;
};

namespace detail {

inline Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
    return out;
}

inline Matrix stack_twice(const Matrix& m) {
    Matrix out(2 * m.rows(), m.cols());
    out.topRows(m.rows()) = m;
    out.bottomRows(m.rows()) = m;
    return out;
}

inline std::string context(int client, int round) {
    return " (client " + std::to_string(client) + ", round " + std::to_string(round) + ")";
}

}  // namespace detail

/// E epochs over the union of two augmented views. When `teacher` is given
/// the MSE term pulls the student toward the teacher's first-view outputs
/// on the `uncertain` entries.
inline void train_local_epochs(ClientState& client, const TrainingTargets& targets,
                               const ModelParams* teacher, const FederationConfig& cfg, int round) {
    auto rng = stream_for(cfg.seed, client.id, round, 0x7a11u);
    const Index n = client.inputs.rows();
    if (n == 0) return;
    const Matrix labels2 = detail::stack_twice(targets.labels);
    const Matrix supervised2 = detail::stack_twice(targets.supervised);
    const bool use_cr = teacher != nullptr && targets.uncertain.size() != 0 && targets.uncertain.sum() > 0.0;
    const Matrix uncertain2 = use_cr ? detail::stack_twice(targets.uncertain) : Matrix();

    std::vector<Index> order(static_cast<std::size_t>(2 * n));
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        auto [view1, view2] = augment_two_views(client.inputs, cfg.aug_weak, cfg.aug_strong, rng);
        Matrix both(2 * n, client.inputs.cols());
        both.topRows(n) = view1;
        both.bottomRows(n) = view2;
        Matrix teacher2;
        if (use_cr) teacher2 = detail::stack_twice(forward(*teacher, view1).probs);

        std::iota(order.begin(), order.end(), Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
            const std::span<const Index> rows(order.data() + start, len);
            const Matrix x = detail::gather_rows(both, rows);
            const ForwardResult fwd = forward(client.params, x);
            LossResult loss = wpc_loss(fwd.probs, detail::gather_rows(labels2, rows),
                                       detail::gather_rows(supervised2, rows), targets.priors,
                                       cfg.normalizer);
            if (use_cr) {
                const LossResult mse = mse_consistency_loss(fwd.probs, detail::gather_rows(teacher2, rows),
                                                            detail::gather_rows(uncertain2, rows));
                loss.loss += mse.loss;
                loss.grad += mse.grad;
            }
            if (!std::isfinite(loss.loss))
                throw TrainingDiverged("non-finite training loss" + detail::context(client.id, round));
            const ModelGrads grads = backward(client.params, x, fwd, loss.grad);
            try {
                apply_optimizer_step(client.params, grads, client.optimizer);
            } catch (const TrainingDiverged& e) {
                throw TrainingDiverged(std::string(e.what()) + detail::context(client.id, round));
            }
        }
    }
}

/// Supervision from active labels plus permanent pseudo labels.
inline TrainingTargets supervision_for(const ClientState& client, const Recipe& recipe,
                                       const ClassPriors* fixed_priors, double la_tau) {
    TrainingTargets t;
    const Index C = client.labels.truth.cols();
    if (!recipe.partial) {
        t.labels = client.labels.observed;
        t.supervised = Matrix::Ones(client.inputs.rows(), C);
        t.priors = ClassPriors::balanced(C);
        return t;
    }
    t.labels = client.labels.observed;
    t.supervised = client.labels.active_mask;
    for (int c : client.ledger.negative_classes())
        for (std::size_t i = 0; i < client.size(); ++i) {
            const TagState s = client.ledger.state(i, c);
            if (s == TagState::kUntagged) continue;
            t.supervised(static_cast<Index>(i), c) = 1.0;
            t.labels(static_cast<Index>(i), c) = s == TagState::kTagged1 ? 1.0 : 0.0;
        }
    if (!recipe.logit_adjust)
        t.priors = ClassPriors::balanced(C);
    else if (fixed_priors != nullptr)
        t.priors = *fixed_priors;
    else
        t.priors = compute_class_priors(t.labels, t.supervised, kPriorEpsilon, la_tau);
    return t;
}

/// Untagged entries of the client's missing classes.
inline Matrix uncertain_mask(const ClientState& client) {
    Matrix m = Matrix::Zero(client.inputs.rows(), client.labels.truth.cols());
    for (int c : client.ledger.negative_classes())
        for (std::size_t i = 0; i < client.size(); ++i)
            if (client.ledger.state(i, c) == TagState::kUntagged) m(static_cast<Index>(i), c) = 1.0;
    return m;
}

/// Stage 1: start from the global model and fit the (partial) loss.
inline ClientState local_train_warmup(ClientState client, const ModelParams& global,
                                      const FederationConfig& cfg, int round,
                                      const ClassPriors* fixed_priors = nullptr) {
    const Recipe recipe = recipe_for(cfg);
    client.params = global;
    TrainingTargets targets = supervision_for(client, recipe, fixed_priors, cfg.la_tau);
    client.priors = targets.priors;
    train_local_epochs(client, targets, nullptr, cfg, round);
    return client;
}

/// Tags new pseudo labels for the client's missing classes from the global
/// prototypes. Features come from `model`. Returns the number of new tags.
inline std::size_t tag_missing_labels(ClientState& client, const ModelParams& model,
                                      const PrototypeMap& global_protos, const SelectionRatios& ratios,
                                      std::size_t min_select, int round) {
    std::vector<int> scored;
    for (int c : client.negative) {
        auto it = global_protos.find(c);
        if (it != global_protos.end() && it->second.complete()) scored.push_back(c);
    }
    if (scored.empty()) return 0;
    const Matrix features = forward(model, client.inputs).features;
    const Matrix z = confidence_scores(features, global_protos, scored);
    std::size_t tagged = 0;
    for (std::size_t j = 0; j < scored.size(); ++j) {
        const int c = scored[j];
        const std::vector<std::size_t> residual = client.ledger.residual(c);
        if (residual.empty()) continue;
        std::vector<double> zc(residual.size());
        for (std::size_t r = 0; r < residual.size(); ++r)
            zc[r] = z(static_cast<Index>(residual[r]), static_cast<Index>(j));
        const PseudoLabelSelection sel =
            select_pseudo_labels(zc, residual, ratios.tau0[c], ratios.tau1[c], min_select);
        for (std::size_t i : sel.tagged0) client.ledger.tag(i, c, 0, round, z(static_cast<Index>(i), static_cast<Index>(j)));
        for (std::size_t i : sel.tagged1) client.ledger.tag(i, c, 1, round, z(static_cast<Index>(i), static_cast<Index>(j)));
        tagged += sel.tagged0.size() + sel.tagged1.size();
    }
    return tagged;
}

/// Stage 2: download the global state, tag pseudo labels, then train with
/// the partial loss on hard labels and MSE toward the frozen global model on
/// untagged missing entries.
inline ClientState local_train_detection(ClientState client, const ServerState& server,
                                         const FederationConfig& cfg, int round,
                                         const ClassPriors* fixed_priors = nullptr) {
    const Recipe recipe = recipe_for(cfg);
    client.params = server.global;
    if (recipe.tagging && server.stats_ready)
        tag_missing_labels(client, server.global, server.prototypes, server.ratios, cfg.min_select, round);
    TrainingTargets targets = supervision_for(client, recipe, fixed_priors, cfg.la_tau);
    client.priors = targets.priors;
    if (recipe.consistency) targets.uncertain = uncertain_mask(client);
    train_local_epochs(client, targets, recipe.consistency ? &server.global : nullptr, cfg, round);
    return client;
}

/// Local prototypes and learning degrees of the active classes, computed
/// with the client's freshly trained model.
inline ClientReport local_calculation(const ClientState& client, const FederationConfig& cfg) {
    ClientReport r;
    r.client = client.id;
    r.samples = client.size();
    r.params = client.params;
    r.has_local_stats = true;
    const ForwardResult fwd = forward(client.params, client.inputs);
    r.prototypes = compute_local_prototypes(fwd.features, client.labels.observed, client.active);
    r.difficulty = compute_local_difficulty(fwd.probs, client.active, cfg.band_lower, cfg.band_upper);
    return r;
}

inline ClientReport model_only_report(const ClientState& client) {
    ClientReport r;
    r.client = client.id;
    r.samples = client.size();
    r.params = client.params;
    return r;
}

/// Aggregates one round of reports. Reports must come from every client,
/// in ascending id order. Prototype, difficulty and ratio updates run only
/// when every report carries local statistics.
inline ServerState server_round(const ServerState& server, std::span<const ClientReport> reports,
                                const FederationConfig& cfg) {
    if (reports.size() != static_cast<std::size_t>(cfg.clients))
        throw ProtocolError("server_round: expected " + std::to_string(cfg.clients) + " reports, got " +
                            std::to_string(reports.size()));
    std::vector<ModelParams> models;
    std::vector<std::size_t> sizes;
    bool stats = true;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        if (reports[k].client != static_cast<int>(k))
            throw ProtocolError("server_round: missing report from client " + std::to_string(k));
        models.push_back(reports[k].params);
        sizes.push_back(reports[k].samples);
        stats = stats && reports[k].has_local_stats;
    }
    ServerState next = server;
    next.global = fedavg_aggregate(models, sizes);
    next.round = server.round + 1;
    if (!stats) return next;

    std::map<ClientClassKey, DualPrototype> protos;
    std::map<ClientClassKey, double> degrees;
    for (const auto& r : reports) {
        for (const auto& [c, p] : r.prototypes) protos.emplace(ClientClassKey{r.client, c}, p);
        for (const auto& [c, d] : r.difficulty.degree) degrees.emplace(ClientClassKey{r.client, c}, d);
    }
    next.prototypes = aggregate_global_prototypes(protos, server.annotation);
    next.difficulty = aggregate_global_difficulty(degrees, sizes, server.annotation);
    const Recipe recipe = recipe_for(cfg);
    const Index C = server.annotation.class_count();
    next.ratios = recipe.adaptive ? adaptive_thresholds(next.difficulty, cfg.base_tau0, cfg.base_tau1)
                                  : constant_thresholds(C, cfg.base_tau0, cfg.base_tau1);
    if (cfg.tau_min > 0.0) {
        next.ratios.tau0 = next.ratios.tau0.cwiseMax(cfg.tau_min);
        next.ratios.tau1 = next.ratios.tau1.cwiseMax(cfg.tau_min);
    }
    next.stats_ready = true;
    return next;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct RoundRecord {
    int round = 0;
    std::string stage;
    bool evaluated = false;
    EvalReport eval;
    double coverage = 0.0;  // percent of missing entries tagged
    double tag_precision = kNaN;
    Vector difficulty;
    std::size_t client_updates = 0;
    double wall_seconds = 0.0;
};

/// Called after every round with the updated client and server state.
using RoundObserver =
    std::function<void(int round, const std::vector<ClientState>& clients, const ServerState& server)>;

inline bool is_eval_round(int round, const FederationConfig& cfg) {
    return (round - 1) % cfg.eval_interval == 0 || round == cfg.total_rounds;
}

/// Positive rates over all clients' active labels. Used only for the
/// oracle-global prior diagnostic and adjusted evaluation.
inline ClassPriors pooled_priors(const std::vector<ClientState>& clients, double la_tau) {
    const Index C = clients.front().labels.truth.cols();
    Vector pos = Vector::Zero(C), cnt = Vector::Zero(C);
    for (const auto& c : clients) {
        pos += c.labels.observed.cwiseProduct(c.labels.active_mask).colwise().sum().transpose();
        cnt += c.labels.active_mask.colwise().sum().transpose();
    }
    Vector rates = pos.cwiseQuotient(cnt.cwiseMax(1.0));
    return ClassPriors::from_rates(rates, kPriorEpsilon, la_tau);
}

namespace detail {

template <class F>
void for_each_client_parallel(std::size_t count, int threads, F&& body) {
    std::vector<std::exception_ptr> errors(count);
    auto run = [&](std::size_t k) {
        try {
            body(k);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) run(k);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t k = w; k < count; k += workers) run(k);
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Runs the whole federation and returns the per-round history.
inline std::vector<RoundRecord> run_experiment(const FederationConfig& cfg, const DatasetBundle& bundle,
                                               const RoundObserver& observer = {}) {
    cfg.validate();
    if (static_cast<int>(bundle.clients.size()) != cfg.clients)
        throw ConfigError("run_experiment: bundle has " + std::to_string(bundle.clients.size()) +
                          " clients, config expects " + std::to_string(cfg.clients));
    bundle.annotation.validate();
    const Recipe recipe = recipe_for(cfg);
    const Index C = bundle.classes;

    ServerState server;
    server.global = ModelParams::initialize(bundle.input_dim(), cfg.hidden_dim, C, cfg.seed ^ 0x9e3779b97f4a7c15ull);
    server.annotation = bundle.annotation;
    server.difficulty = Vector::Zero(C);
    server.ratios = constant_thresholds(C, 0.0, 0.0);

    std::vector<ClientState> clients;
    for (const auto& shard : bundle.clients) clients.push_back(make_client(shard, server.global, cfg));

    const ClassPriors pooled = pooled_priors(clients, cfg.la_tau);
    const ClassPriors* fixed_priors = cfg.prior_scope == PriorScope::kGlobal ? &pooled : nullptr;

    std::vector<RoundRecord> history;
    std::vector<ClientReport> reports(clients.size());
    for (int t = 1; t <= cfg.total_rounds; ++t) {
        const auto started = std::chrono::steady_clock::now();
        const bool detection = cfg.mode == Mode::kFedMLP && recipe.has_detection_stage() && t > cfg.warmup_rounds;
        const bool local_stats = recipe.tagging && t >= cfg.warmup_rounds;

        detail::for_each_client_parallel(clients.size(), cfg.threads, [&](std::size_t k) {
            ClientState& c = clients[k];
            c = detection ? local_train_detection(std::move(c), server, cfg, t, fixed_priors)
                          : local_train_warmup(std::move(c), server.global, cfg, t, fixed_priors);
            reports[k] = local_stats ? local_calculation(c, cfg) : model_only_report(c);
        });
        server = server_round(server, reports, cfg);

        RoundRecord rec;
        rec.round = t;
        switch (cfg.mode) {
            case Mode::kFedAvg: rec.stage = "fedavg"; break;
            case Mode::kFedAvgPL: rec.stage = "fedavg_pl"; break;
            case Mode::kFedMLP: rec.stage = t > cfg.warmup_rounds ? "detection" : "warmup"; break;
        }
        rec.client_updates = clients.size();
        rec.difficulty = server.difficulty;
        TagAudit audit(static_cast<std::size_t>(C));
        for (const auto& c : clients) audit.merge(pseudo_label_audit(c.ledger, c.labels.truth));
        rec.coverage = 100.0 * audit.coverage();
        rec.tag_precision = audit.overall.precision();
        if (is_eval_round(t, cfg)) {
            Matrix probs = forward(server.global, bundle.test_inputs).probs;
            if (cfg.eval_adjusted) probs = adjust_probs(probs, pooled);
            rec.eval = evaluate(probs, bundle.test_truth, cfg.eval_threshold);
            rec.evaluated = true;
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        history.push_back(std::move(rec));
        if (observer) observer(t, clients, server);
    }
    return history;
}

}  // namespace fedmlp
