// Hand-checkable fixtures as language-neutral JSON files, each holding its
// inputs next to the expected outputs computed by this library. A port to
// another language can load the same files and compare.
#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedmlp/cli.hpp"
#include "fedmlp/core_model.hpp"
#include "fedmlp/data_synth.hpp"
#include "fedmlp/fed_protocol.hpp"
#include "fedmlp/metrics.hpp"
#include "fedmlp/prototype_engine.hpp"

namespace fedmlp {

namespace fixture_json {

using nlohmann::json;

inline json matrix(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(r);
    }
    return rows;
}

inline json vector(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json numbers(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isnan(x) ? json(nullptr) : json(x));
    return a;
}

inline Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
    Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
    Index i = 0;
    for (const auto& row : r) {
        Index k = 0;
        for (double v : row) m(i, k++) = v;
        ++i;
    }
    return m;
}

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

inline json fixture(const std::string& name, const std::string& description, json input, json expected) {
    return {{"name", name}, {"description", description}, {"input", std::move(input)}, {"expected", std::move(expected)}};
}

inline json loss(const LossResult& r) { return {{"loss", r.loss}, {"grad_logits", matrix(r.grad)}}; }

inline json prototype(const DualPrototype& p) {
    return {{"negative", p.negative ? vector(*p.negative) : json(nullptr)},
            {"positive", p.positive ? vector(*p.positive) : json(nullptr)}};
}

}  // namespace fixture_json

/// Fixture inventory: file name -> JSON document.
inline std::map<std::string, nlohmann::json> fixture_documents() {
    using namespace fixture_json;
    std::map<std::string, json> out;

    {  // Logit adjustment grid.
        const std::vector<double> ys{0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99};
        const std::vector<double> pis{0.05, 0.1, 0.3, 0.5, 0.7, 0.9};
        json table = json::array();
        for (double pi : pis) {
            Matrix p(1, static_cast<Index>(ys.size()));
            for (std::size_t j = 0; j < ys.size(); ++j) p(0, static_cast<Index>(j)) = ys[j];
            const auto priors = ClassPriors::from_rates(Vector::Constant(p.cols(), pi));
            const Matrix a = adjust_probs(p, priors);
            table.push_back({{"pi1", pi}, {"adjusted", matrix(a)[0]}});
        }
        out["logit_adjustment.json"] =
            fixture("logit_adjustment", "y' = y*pi1 / (y*pi1 + (1-y)*(1-pi1)) for each prior row",
                    {{"probs", ys}, {"pi1", pis}}, {{"table", table}});
    }
    {
        const Matrix p = rows({{0.8, 0.3}, {0.6, 0.9}});
        const Matrix y = rows({{1, 0}, {0, 1}});
        out["bce_loss.json"] = fixture("bce_loss", "binary cross-entropy averaged over batch and classes",
                                       {{"probs", matrix(p)}, {"labels", matrix(y)}}, loss(bce_loss(p, y)));
    }
    {
        const Matrix p = rows({{0.72, 0.15, 0.4}, {0.33, 0.81, 0.6}, {0.05, 0.5, 0.93}});
        const Matrix y = rows({{1, 0, 0}, {0, 1, 1}, {0, 0, 1}});
        const Matrix mask = rows({{0, 1, 0}, {0, 1, 0}, {0, 1, 0}});
        const Vector pi = vec({0.4, 0.1, 0.25});
        out["wpc_loss.json"] = fixture(
            "wpc_loss", "cross-entropy on prior-adjusted probabilities over active entries, divided by batch*classes",
            {{"probs", matrix(p)}, {"labels", matrix(y)}, {"active_mask", matrix(mask)}, {"pi1", vector(pi)}},
            loss(wpc_loss(p, y, mask, ClassPriors::from_rates(pi))));
    }
    {
        const Matrix s = rows({{0.9, 0.2}, {0.55, 0.7}});
        const Matrix t = rows({{0.4, 0.2}, {0.35, 0.1}});
        const Matrix mask = rows({{1, 0}, {1, 1}});
        out["mse_consistency.json"] = fixture(
            "mse_consistency", "mean squared probability gap over masked entries; gradient wrt student logits",
            {{"student", matrix(s)}, {"teacher", matrix(t)}, {"mask", matrix(mask)}},
            loss(mse_consistency_loss(s, t, mask)));
    }
    {
        const Matrix p = rows({{1.0}});
        const Matrix g = rows({{1.0}});
        ModelParams params{p, vec({0.0}), g * 0.0, vec({0.0})};
        ModelParams grads{g, vec({0.0}), g * 0.0, vec({0.0})};
        auto state = OptimizerState::for_params(params, 0.1, 0.0);
        json steps = json::array();
        for (int k = 0; k < 3; ++k) {
            apply_optimizer_step(params, grads, state);
            steps.push_back(params.w1(0, 0));
        }
        out["adam_step.json"] = fixture("adam_step", "Adam on a scalar with constant gradient; beta1 0.9, beta2 0.999, eps 1e-8",
                                        {{"param", 1.0}, {"grad", 1.0}, {"lr", 0.1}, {"weight_decay", 0.0}},
                                        {{"param_after_step", steps}});
    }
    {
        const Matrix f = rows({{1, 0}, {0, 1}, {2, 1}, {0.5, 3}});
        const Matrix y = rows({{1, 0}, {0, 0}, {1, 1}, {0, 1}});
        const std::vector<int> active{0, 1};
        const auto protos = compute_local_prototypes(f, y, active);
        json e = json::object();
        for (const auto& [c, pr] : protos) e[std::to_string(c)] = prototype(pr);
        out["local_prototypes.json"] = fixture("local_prototypes", "per-class mean feature of negatives and positives",
                                               {{"features", matrix(f)}, {"labels", matrix(y)}, {"active", active}},
                                               {{"prototypes", e}});
    }
    {
        std::map<ClientClassKey, DualPrototype> locals;
        const std::vector<std::vector<int>> active{{0, 1}, {1}, {0}};
        const std::vector<std::vector<std::pair<Vector, Vector>>> vals{
            {{vec({0, 1}), vec({1, 0})}, {vec({0.2, 0.4}), vec({2, 2})}},
            {{vec({1, 1}), vec({0, 1})}},
            {{vec({0.5, 0.5}), vec({3, 1})}}};
        json in = json::array();
        for (std::size_t k = 0; k < active.size(); ++k)
            for (std::size_t j = 0; j < active[k].size(); ++j) {
                DualPrototype p;
                p.class_id = active[k][j];
                p.negative = vals[k][j].first;
                p.positive = vals[k][j].second;
                locals[{static_cast<int>(k), p.class_id}] = p;
                in.push_back({{"client", k}, {"class", p.class_id}, {"prototype", prototype(p)}});
            }
        const auto ann = AnnotationDistribution::from_active_sets(active, 2);
        const auto global = aggregate_global_prototypes(locals, ann);
        json e = json::object();
        for (const auto& [c, pr] : global) e[std::to_string(c)] = prototype(pr);
        out["global_prototypes.json"] = fixture("global_prototypes",
                                                "unweighted mean of local prototypes over the clients labeling each class",
                                                {{"locals", in}, {"active_sets", active}}, {{"prototypes", e}});
    }
    {
        const Matrix f = rows({{1, 0}, {0, 1}, {1, 1}, {3, -1}, {-2, 0.5}});
        PrototypeMap g;
        DualPrototype p;
        p.class_id = 0;
        p.negative = vec({1, 0});
        p.positive = vec({0, 1});
        g[0] = p;
        p.class_id = 1;
        p.negative = vec({1, 2});
        p.positive = vec({-1, 0.5});
        g[1] = p;
        const std::vector<int> classes{0, 1};
        out["confidence_scores.json"] = fixture(
            "confidence_scores", "Z = cos(negative prototype, f) - cos(positive prototype, f)",
            {{"features", matrix(f)},
             {"prototypes", {{"0", prototype(g[0])}, {"1", prototype(g[1])}}},
             {"classes", classes}},
            {{"z", matrix(confidence_scores(f, g, classes))}});
    }
    {
        json cases = json::array();
        auto add = [&](std::vector<double> z, double t0, double t1) {
            const auto s = select_pseudo_labels(z, t0, t1);
            cases.push_back({{"z", z}, {"tau0", t0}, {"tau1", t1}, {"tagged0", s.tagged0}, {"tagged1", s.tagged1}});
        };
        add({0.9, 0.5, -0.3, -0.7}, 0.5, 0.5);
        add({0.9, 0.5, -0.3, -0.7}, 1.0, 1.0);
        add({0.2, 0.2, 0.6, -0.1, -0.4, -0.4, 0.0}, 0.34, 0.67);
        add({0.3, -0.2, 0.1}, 0.005, 0.01);
        out["pseudo_label_selection.json"] =
            fixture("pseudo_label_selection",
                    "top floor(tau*n) of the Z>=0 side (label 0) and of the Z<0 side by -Z (label 1); ties to lower index",
                    json::object(), {{"cases", cases}});
    }
    {
        const Matrix pr = rows({{0.1, 0.9}, {0.5, 0.2}, {0.95, 0.69}, {0.4, 0.71}});
        const std::vector<int> active{0, 1};
        const auto r = compute_local_difficulty(pr, active, 0.3, 0.7);
        json d = json::object();
        for (const auto& [c, v] : r.degree) d[std::to_string(c)] = v;
        out["local_difficulty.json"] = fixture(
            "local_difficulty", "fraction of samples with prediction below L or above R",
            {{"probs", matrix(pr)}, {"active", active}, {"L", 0.3}, {"R", 0.7}}, {{"degree", d}});
    }
    {
        const std::vector<std::vector<int>> active{{0}, {0, 1}, {1}};
        const std::vector<std::size_t> sizes{100, 300, 50};
        std::map<ClientClassKey, double> locals{{{0, 0}, 0.2}, {{1, 0}, 0.6}, {{1, 1}, 0.3}, {{2, 1}, 0.9}};
        json in = json::array();
        for (const auto& [k, v] : locals) in.push_back({{"client", k.first}, {"class", k.second}, {"degree", v}});
        const Vector g = aggregate_global_difficulty(locals, sizes, AnnotationDistribution::from_active_sets(active, 2));
        const auto ratios = adaptive_thresholds(g, 0.005, 0.01);
        out["global_difficulty.json"] = fixture(
            "global_difficulty", "size-weighted mean of local degrees over labeling clients, then tau = degree * T",
            {{"locals", in}, {"sizes", sizes}, {"active_sets", active}, {"T0", 0.005}, {"T1", 0.01}},
            {{"global", vector(g)}, {"tau0", vector(ratios.tau0)}, {"tau1", vector(ratios.tau1)}});
    }
    {
        const std::vector<ModelParams> models{
            {rows({{2, -1}}), vec({0.5, 1}), rows({{1}, {0}}), vec({3})},
            {rows({{6, 3}}), vec({-0.5, 2}), rows({{0}, {4}}), vec({-1})}};
        const std::vector<std::size_t> sizes{1, 3};
        const ModelParams avg = fedavg_aggregate(models, sizes);
        auto dump = [](const ModelParams& m) {
            return json{{"w1", matrix(m.w1)}, {"b1", vector(m.b1)}, {"w2", matrix(m.w2)}, {"b2", vector(m.b2)}};
        };
        out["fedavg.json"] = fixture("fedavg", "sample-count weighted parameter mean",
                                     {{"models", {dump(models[0]), dump(models[1])}}, {"sizes", sizes}},
                                     {{"model", dump(avg)}});
    }
    {
        const Matrix p = rows({{0.9, 0.2}, {0.6, 0.3}, {0.4, 0.1}, {0.1, 0.7}});
        const Matrix y = rows({{1, 0}, {0, 0}, {1, 1}, {0, 1}});
        const auto b = balanced_accuracy(p, y, 0.5);
        out["balanced_accuracy.json"] = fixture(
            "balanced_accuracy", "macro mean of (sensitivity + specificity) / 2 at threshold 0.5",
            {{"probs", matrix(p)}, {"truth", matrix(y)}, {"threshold", 0.5}},
            {{"macro", b.macro}, {"per_class", numbers(b.per_class)}, {"sensitivity", numbers(b.sensitivity)},
             {"specificity", numbers(b.specificity)}});
    }
    {
        json cases = json::array();
        auto add = [&](std::vector<double> s, std::vector<double> y) {
            cases.push_back({{"scores", s}, {"truth", y}, {"auc", binary_auc(s, y)}});
        };
        add({0.8, 0.8, 0.3}, {1, 0, 0});
        add({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
        add({0.9, 0.7, 0.4, 0.4, 0.2, 0.1}, {1, 0, 1, 0, 0, 1});
        out["auc.json"] = fixture("auc", "probability that a positive outranks a negative; ties count half",
                                  json::object(), {{"cases", cases}});
    }
    {
        json cases = json::array();
        auto add = [&](std::vector<double> s, std::vector<double> y) {
            cases.push_back({{"scores", s}, {"truth", y}, {"ap", average_precision(s, y)}});
        };
        add({0.9, 0.8, 0.7, 0.6}, {0, 1, 0, 0});
        add({0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0});
        add({0.3, 0.9, 0.5, 0.5, 0.1}, {1, 0, 0, 1, 1});
        out["average_precision.json"] = fixture(
            "average_precision", "mean precision at the rank of each positive; scores descending, ties by index",
            json::object(), {{"cases", cases}});
    }
    {
        PseudoLabelLedger ledger(4, {1});
        const Matrix truth = rows({{1, 0}, {1, 1}, {0, 0}, {0, 1}});
        ledger.tag(0, 1, 0, 51, 0.8);
        ledger.tag(1, 1, 1, 51, -0.6);
        ledger.tag(2, 1, 0, 52, 0.4);
        ledger.tag(3, 1, 0, 53, 0.1);
        const auto a = pseudo_label_audit(ledger, truth);
        json tags = json::array({{{"sample", 0}, {"class", 1}, {"label", 0}},
                                 {{"sample", 1}, {"class", 1}, {"label", 1}},
                                 {{"sample", 2}, {"class", 1}, {"label", 0}},
                                 {{"sample", 3}, {"class", 1}, {"label", 0}}});
        out["pseudo_label_audit.json"] = fixture(
            "pseudo_label_audit", "share of pseudo labels that agree with the hidden truth",
            {{"truth", matrix(truth)}, {"tags", tags}},
            {{"precision", a.overall.precision()}, {"coverage", a.coverage()}, {"tagged", a.overall.tagged()}});
    }
    return out;
}

/// Small deterministic bundle for cross-implementation data loading.
inline std::string fixture_bundle_csv() {
    SyntheticSpec spec;
    spec.classes = 5;
    spec.input_dim = 4;
    spec.n_train = 20;
    spec.n_test = 10;
    spec.positive_rates = {0.3, 0.2, 0.1, 0.05, 0.03};
    spec.seed = 7;
    const auto split = generate_dataset(spec);
    const auto plan = build_mask_plan(5, 5, 4, 8);
    std::ostringstream os;
    write_bundle(os, make_bundle(split, 5, plan));
    return os.str();
}

inline int cmd_fixtures(const CommandOptions& o, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    return guarded(
        [&] {
            const auto dir = resolve_out_dir(o, "fixtures");
            ensure_directory(dir);
            std::size_t n = 0;
            for (const auto& [name, doc] : fixture_documents()) {
                write_file_atomic(dir / name, doc.dump(2) + "\n");
                ++n;
            }
            write_file_atomic(dir / "dataset_bundle.csv", fixture_bundle_csv());
            log << "wrote " << n + 1 << " fixture files to " << dir.string() << "\n";
            return kExitOk;
        },
        err);
}

}  // namespace fedmlp
