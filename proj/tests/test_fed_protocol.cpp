#include <gtest/gtest.h>

#include <random>

#include "fedmlp/fed_protocol.hpp"
#include "oracles.hpp"

using namespace fedmlp;

namespace {

DatasetBundle small_bundle(int K = 3, int C = 3, int m = 2, std::uint64_t seed = 5, std::size_t n = 240) {
    SyntheticSpec s;
    s.classes = C;
    s.input_dim = 8;
    s.n_train = n;
    s.n_test = 120;
    s.positive_rates.assign(static_cast<std::size_t>(C), 0.3);
    s.seed = seed;
    return make_bundle(generate_dataset(s), K, build_mask_plan(K, C, m, seed + 1));
}

FederationConfig small_config(int K = 3) {
    FederationConfig c;
    c.clients = K;
    c.warmup_rounds = 4;
    c.total_rounds = 8;
    c.hidden_dim = 12;
    c.learning_rate = 1e-2;
    c.eval_interval = 3;
    c.batch_size = 16;
    return c;
}

/// One client labeling every class.
DatasetBundle single_client_bundle() {
    auto b = small_bundle();
    DatasetBundle one = b;
    ClientShard all;
    for (const auto& c : b.clients) {
        Matrix x(all.inputs.rows() + c.inputs.rows(), c.inputs.cols());
        Matrix y(x.rows(), c.truth.cols());
        if (all.inputs.rows() > 0) {
            x.topRows(all.inputs.rows()) = all.inputs;
            y.topRows(all.inputs.rows()) = all.truth;
        }
        x.bottomRows(c.inputs.rows()) = c.inputs;
        y.bottomRows(c.inputs.rows()) = c.truth;
        all.inputs = x;
        all.truth = y;
    }
    all.active = {0, 1, 2};
    one.clients = {all};
    one.annotation = AnnotationDistribution::from_active_sets({{0, 1, 2}}, 3);
    return one;
}

ModelParams scalar_model(double v) {
    ModelParams p = ModelParams::zeros(1, 1, 1);
    p.w1(0, 0) = v;
    p.b1(0) = v;
    p.w2(0, 0) = v;
    p.b2(0) = v;
    return p;
}

}  // namespace

// ----- aggregation ------------------------------------------------------------

TEST(FedAvg, HandWeightedMean) {
    const std::vector<ModelParams> ms{scalar_model(2), scalar_model(6)};
    const std::vector<std::size_t> sizes{1, 3};
    EXPECT_EQ(fedavg_aggregate(ms, sizes), scalar_model(5));
}

TEST(FedAvg, IdentityCases) {
    const auto p = ModelParams::initialize(3, 4, 2, 1);
    const std::vector<ModelParams> same{p, p, p};
    const std::vector<std::size_t> sizes{7, 1, 30};
    const auto agg = fedavg_aggregate(same, sizes);
    for_each_tensor([](const auto& a, const auto& b) { EXPECT_TRUE(a.isApprox(b, 1e-14)); }, agg, p);
    const std::vector<ModelParams> one{p};
    const std::vector<std::size_t> s1{9};
    EXPECT_EQ(fedavg_aggregate(one, s1), p);
}

TEST(FedAvg, MatchesOracleAndIsLinear) {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::size_t> sz(1, 400);
    for (int t = 0; t < 20; ++t) {
        std::vector<ModelParams> ms;
        std::vector<std::size_t> sizes;
        for (int k = 0; k < 4; ++k) {
            ms.push_back(ModelParams::initialize(3, 5, 2, static_cast<std::uint64_t>(100 * t + k)));
            sizes.push_back(sz(rng));
        }
        const auto agg = fedavg_aggregate(ms, sizes);
        double total = 0;
        for (auto s : sizes) total += static_cast<double>(s);
        for (Index i = 0; i < agg.w1.size(); ++i) {
            double want = 0;
            for (int k = 0; k < 4; ++k) want += static_cast<double>(sizes[static_cast<std::size_t>(k)]) / total * ms[static_cast<std::size_t>(k)].w1.data()[i];
            EXPECT_NEAR(agg.w1.data()[i], want, 1e-12);
        }
        std::vector<ModelParams> scaled = ms;
        for (auto& m : scaled) for_each_tensor([](auto& x) { x *= 2.5; }, m);
        const auto agg2 = fedavg_aggregate(scaled, sizes);
        for_each_tensor([](const auto& a, const auto& b) { EXPECT_TRUE((2.5 * a).isApprox(b, 1e-13)); }, agg, agg2);
    }
    const std::vector<ModelParams> none;
    const std::vector<std::size_t> nos;
    EXPECT_THROW(fedavg_aggregate(none, nos), DimensionError);
}

// ----- local training ---------------------------------------------------------

TEST(Warmup, ZeroLearningRateKeepsGlobal) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.learning_rate = 0.0;
    cfg.weight_decay = 0.0;
    const auto g = ModelParams::initialize(8, 12, 3, 3);
    auto c = make_client(b.clients[0], g, cfg);
    c = local_train_warmup(std::move(c), g, cfg, 1);
    EXPECT_EQ(c.params, g);
}

TEST(Warmup, FullLabelsBalancedPriorEqualsBceTraining) {
    const ClientShard shard = single_client_bundle().clients[0];
    auto cfg = small_config(1);
    const auto g = ModelParams::initialize(8, 12, 3, 3);
    const auto balanced = ClassPriors::balanced(3);

    cfg.mode = Mode::kFedMLP;
    cfg.flags = {true, true, true, true};
    auto a = local_train_warmup(make_client(shard, g, cfg), g, cfg, 1, &balanced);
    cfg.mode = Mode::kFedAvg;
    auto f = local_train_warmup(make_client(shard, g, cfg), g, cfg, 1);
    EXPECT_EQ(a.params, f.params);
}

TEST(Warmup, LearnsSeparableActiveClass) {
    // Two Gaussian blobs in 2-D; class 0 is annotated, class 1 is missing.
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0, 0.5);
    ClientShard s;
    s.inputs.resize(200, 2);
    s.truth = Matrix::Zero(200, 2);
    for (Index i = 0; i < 200; ++i) {
        const bool pos = i % 2 == 0;
        s.inputs(i, 0) = (pos ? 2.0 : -2.0) + g(rng);
        s.inputs(i, 1) = (pos ? 1.0 : -1.0) + g(rng);
        s.truth(i, 0) = pos ? 1 : 0;
        s.truth(i, 1) = i % 3 == 0 ? 1 : 0;
    }
    s.active = {0};
    s.missing = {1};
    DatasetBundle bundle;
    bundle.classes = 2;
    bundle.clients = {s};
    bundle.test_inputs = s.inputs;
    bundle.test_truth = s.truth;
    bundle.annotation = AnnotationDistribution::from_active_sets({{0}, {}}, 2);
    bundle.annotation.clients_by_class[1] = {0};  // keep the server invariant; the class is masked locally

    FederationConfig cfg;
    cfg.clients = 1;
    cfg.mode = Mode::kFedAvgPL;
    cfg.total_rounds = 200;
    cfg.warmup_rounds = 50;
    cfg.hidden_dim = 8;
    cfg.learning_rate = 1e-3;
    cfg.eval_interval = 200;
    const auto h = run_experiment(cfg, bundle);
    EXPECT_GT(h.back().eval.per_class_bacc[0], 0.95);
}

TEST(Detection, CrOffNoTagsIgnoresMissingClass) {
    auto b = small_bundle();
    auto cfg = small_config();
    cfg.mode = Mode::kFedMLP;
    cfg.flags = {true, true, false, false};
    ServerState server;
    server.global = ModelParams::initialize(8, 12, 3, 2);
    server.annotation = b.annotation;
    // No statistics yet, so no tags are possible.
    auto c1 = make_client(b.clients[0], server.global, cfg);
    ClientShard flipped = b.clients[0];
    for (int c : flipped.missing) flipped.truth.col(c) = (1.0 - flipped.truth.col(c).array()).matrix();
    auto c2 = make_client(flipped, server.global, cfg);
    c1 = local_train_detection(std::move(c1), server, cfg, 5);
    c2 = local_train_detection(std::move(c2), server, cfg, 5);
    EXPECT_EQ(c1.params, c2.params);
    EXPECT_EQ(c1.ledger.tagged_count(), 0u);
}

TEST(Detection, SaturatedLedgerHasEmptyUncertainMask) {
    auto b = small_bundle();
    auto cfg = small_config();
    auto c = make_client(b.clients[1], ModelParams::initialize(8, 12, 3, 2), cfg);
    for (int cls : c.negative)
        for (std::size_t i = 0; i < c.size(); ++i) c.ledger.tag(i, cls, 0, 5, 0.1);
    EXPECT_EQ(uncertain_mask(c).sum(), 0.0);
    const auto t = supervision_for(c, recipe_for(cfg), nullptr, 1.0);
    EXPECT_TRUE((t.supervised.array() == 1.0).all());
}

TEST(Detection, LedgerMatchesScriptedReplay) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.base_tau0 = 0.2;
    cfg.base_tau1 = 0.3;
    cfg.flags = {true, true, true, false};
    cfg.total_rounds = cfg.warmup_rounds + 1;
    ServerState before;
    std::vector<ClientState> after;
    run_experiment(cfg, b, [&](int t, const std::vector<ClientState>& cs, const ServerState& s) {
        if (t == cfg.warmup_rounds) before = s;
        if (t == cfg.warmup_rounds + 1) after = cs;
    });
    ASSERT_TRUE(before.stats_ready);
    std::size_t total = 0;
    for (const auto& c : after) {
        const auto f = oracle::to_grid(forward(before.global, c.inputs).features);
        for (int cls : c.negative) {
            const auto& p = before.prototypes.at(cls);
            const std::vector<double> p0(p.negative->data(), p.negative->data() + p.negative->size());
            const std::vector<double> p1(p.positive->data(), p.positive->data() + p.positive->size());
            std::vector<double> z(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) z[i] = oracle::cosine(p0, f[i]) - oracle::cosine(p1, f[i]);
            const auto [w0, w1] = oracle::select(z, before.ratios.tau0[cls], before.ratios.tau1[cls]);
            for (std::size_t i = 0; i < f.size(); ++i) {
                TagState want = TagState::kUntagged;
                if (std::binary_search(w0.begin(), w0.end(), i)) want = TagState::kTagged0;
                if (std::binary_search(w1.begin(), w1.end(), i)) want = TagState::kTagged1;
                EXPECT_EQ(c.ledger.state(i, cls), want) << "client " << c.id << " class " << cls << " sample " << i;
            }
            total += w0.size() + w1.size();
        }
    }
    EXPECT_GT(total, 0u);
}

// ----- server -----------------------------------------------------------------

TEST(Server, SingleClientPassesThrough) {
    const auto b = single_client_bundle();
    auto cfg = small_config(1);
    const auto init = ModelParams::initialize(8, 12, 3, 4);
    auto c = local_train_warmup(make_client(b.clients[0], init, cfg), init, cfg, 1);
    const std::vector<ClientReport> reports{local_calculation(c, cfg)};
    ServerState s;
    s.global = c.params.zeros_like();
    s.annotation = b.annotation;
    const auto next = server_round(s, reports, cfg);
    for_each_tensor([](const auto& a, const auto& e) { EXPECT_TRUE(a.isApprox(e, 1e-15)); }, next.global, c.params);
    for (const auto& [cls, p] : reports[0].prototypes) {
        if (p.negative) { EXPECT_TRUE(next.prototypes.at(cls).negative->isApprox(*p.negative, 1e-15)); }
        if (p.positive) { EXPECT_TRUE(next.prototypes.at(cls).positive->isApprox(*p.positive, 1e-15)); }
    }
    for (const auto& [cls, d] : reports[0].difficulty.degree) EXPECT_NEAR(next.difficulty[cls], d, 1e-15);
}

TEST(Server, WarmupReportsLeaveStatisticsUntouched) {
    const auto b = small_bundle();
    auto cfg = small_config();
    ServerState s;
    s.global = ModelParams::initialize(8, 12, 3, 4);
    s.annotation = b.annotation;
    s.difficulty = Vector::Constant(3, 0.123);
    s.ratios = constant_thresholds(3, 0.7, 0.8);
    std::vector<ClientReport> reports;
    for (const auto& sh : b.clients) reports.push_back(model_only_report(make_client(sh, s.global, cfg)));
    const auto next = server_round(s, reports, cfg);
    EXPECT_EQ(next.difficulty, s.difficulty);
    EXPECT_EQ(next.ratios.tau0, s.ratios.tau0);
    EXPECT_TRUE(next.prototypes.empty());
    EXPECT_FALSE(next.stats_ready);
    EXPECT_EQ(next.round, 1);
}

TEST(Server, MissingReportIsProtocolError) {
    const auto b = small_bundle();
    auto cfg = small_config();
    ServerState s;
    s.global = ModelParams::initialize(8, 12, 3, 4);
    s.annotation = b.annotation;
    std::vector<ClientReport> reports;
    for (const auto& sh : b.clients) reports.push_back(model_only_report(make_client(sh, s.global, cfg)));
    auto short_list = reports;
    short_list.pop_back();
    EXPECT_THROW(server_round(s, short_list, cfg), ProtocolError);
    std::swap(reports[0], reports[1]);
    EXPECT_THROW(server_round(s, reports, cfg), ProtocolError);
}

TEST(Server, ThreeClientRandomReportMatchesOracle) {
    const auto b = small_bundle(3, 4, 2, 13);
    auto cfg = small_config();
    cfg.flags = {true, true, true, true};
    ServerState s;
    s.global = ModelParams::initialize(8, 12, 4, 13);
    s.annotation = b.annotation;
    std::vector<ClientState> cs;
    std::vector<ClientReport> reports;
    for (const auto& sh : b.clients) {
        cs.push_back(local_train_warmup(make_client(sh, s.global, cfg), s.global, cfg, 1));
        reports.push_back(local_calculation(cs.back(), cfg));
    }
    const auto next = server_round(s, reports, cfg);
    double total = 0;
    for (const auto& c : cs) total += static_cast<double>(c.size());
    for (Index i = 0; i < next.global.w2.size(); ++i) {
        double want = 0;
        for (const auto& c : cs) want += static_cast<double>(c.size()) / total * c.params.w2.data()[i];
        EXPECT_NEAR(next.global.w2.data()[i], want, 1e-12);
    }
    for (int cls = 0; cls < 4; ++cls) {
        std::vector<double> p1sum;
        double pn = 0, dnum = 0, dden = 0;
        for (const auto& c : cs) {
            if (!std::binary_search(c.active.begin(), c.active.end(), cls)) continue;
            const auto fwd = forward(c.params, c.inputs);
            const auto f = oracle::to_grid(fwd.features);
            const auto mean1 = oracle::mean_rows(f, [&](std::size_t i) { return c.labels.truth(static_cast<Index>(i), cls) == 1.0; });
            if (!mean1.empty()) {
                if (p1sum.empty()) p1sum.assign(mean1.size(), 0.0);
                for (std::size_t k = 0; k < mean1.size(); ++k) p1sum[k] += mean1[k];
                pn += 1;
            }
            double conf = 0;
            for (Index i = 0; i < fwd.probs.rows(); ++i)
                if (fwd.probs(i, cls) < cfg.band_lower || fwd.probs(i, cls) > cfg.band_upper) conf += 1;
            dnum += conf;  // size * (conf / size)
            dden += static_cast<double>(c.size());
        }
        EXPECT_NEAR(next.difficulty[cls], dnum / dden, 1e-12);
        EXPECT_NEAR(next.ratios.tau0[cls], cfg.base_tau0 * dnum / dden, 1e-12);
        for (std::size_t k = 0; k < p1sum.size(); ++k)
            EXPECT_NEAR((*next.prototypes.at(cls).positive)[static_cast<Index>(k)], p1sum[k] / pn, 1e-12);
    }
}

// ----- whole runs -------------------------------------------------------------

TEST(Run, EvalRowCountAndStages) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.total_rounds = 10;
    cfg.eval_interval = 4;
    const auto h = run_experiment(cfg, b);
    ASSERT_EQ(h.size(), 10u);
    int evals = 0;
    for (const auto& r : h) {
        evals += r.evaluated;
        EXPECT_EQ(r.client_updates, 3u);
        EXPECT_EQ(r.stage, r.round > cfg.warmup_rounds ? "detection" : "warmup");
    }
    EXPECT_EQ(evals, (10 - 1 + 3) / 4 + 1);  // rounds 1, 5, 9 and 10
}

TEST(Run, NoTagsBeforeStageTwoAndLedgerPermanence) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.base_tau0 = 0.05;
    cfg.base_tau1 = 0.05;
    cfg.total_rounds = 12;
    std::vector<PseudoLabelLedger> prev(3);
    double last_cov = 0;
    run_experiment(cfg, b, [&](int t, const std::vector<ClientState>& cs, const ServerState&) {
        std::size_t tagged = 0, entries = 0;
        for (std::size_t k = 0; k < cs.size(); ++k) {
            const auto& l = cs[k].ledger;
            tagged += l.tagged_count();
            entries += l.entry_count();
            if (t <= cfg.warmup_rounds) { EXPECT_EQ(l.tagged_count(), 0u); }
            if (prev[k].entry_count() > 0)
                for (int c : l.negative_classes())
                    for (std::size_t i = 0; i < l.sample_count(); ++i) {
                        const auto& e0 = prev[k].entry(i, c);
                        if (e0.state == TagState::kUntagged) continue;
                        EXPECT_EQ(l.entry(i, c).state, e0.state);
                        EXPECT_EQ(l.entry(i, c).round, e0.round);
                    }
            prev[k] = l;
        }
        const double cov = static_cast<double>(tagged) / static_cast<double>(entries);
        EXPECT_GE(cov, last_cov);
        last_cov = cov;
    });
    EXPECT_GT(last_cov, 0.0);
}

TEST(Run, DeterministicAcrossRunsAndThreads) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.flags = {true, true, true, true};
    const auto a = run_experiment(cfg, b);
    cfg.threads = 3;
    const auto c = run_experiment(cfg, b);
    ASSERT_EQ(a.size(), c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].evaluated, c[i].evaluated);
        if (!a[i].evaluated) continue;
        EXPECT_EQ(a[i].eval.bacc, c[i].eval.bacc);
        EXPECT_EQ(a[i].eval.per_class_auc, c[i].eval.per_class_auc);
        EXPECT_EQ(a[i].coverage, c[i].coverage);
        EXPECT_EQ(a[i].difficulty, c[i].difficulty);
    }
}

TEST(Run, AllFlagsOffReproducesFedAvg) {
    const auto b = small_bundle();
    auto cfg = small_config();
    ModelParams g1, g2;
    cfg.mode = Mode::kFedAvg;
    run_experiment(cfg, b, [&](int t, const auto&, const ServerState& s) { if (t == cfg.total_rounds) g1 = s.global; });
    cfg.mode = Mode::kFedMLP;
    cfg.flags = {false, false, false, false};
    run_experiment(cfg, b, [&](int t, const auto&, const ServerState& s) { if (t == cfg.total_rounds) g2 = s.global; });
    EXPECT_EQ(g1, g2);
}

TEST(Run, StageBoundaryMatchesPartialBaseline) {
    const auto b = small_bundle();
    auto cfg = small_config();
    cfg.total_rounds = cfg.warmup_rounds;
    ModelParams g1, g2;
    cfg.mode = Mode::kFedAvgPL;
    run_experiment(cfg, b, [&](int t, const auto&, const ServerState& s) { if (t == cfg.total_rounds) g1 = s.global; });
    cfg.mode = Mode::kFedMLP;
    cfg.flags = {true, false, true, true};
    run_experiment(cfg, b, [&](int t, const auto&, const ServerState& s) { if (t == cfg.total_rounds) g2 = s.global; });
    EXPECT_EQ(g1, g2);
}

TEST(Run, ConservesSamples) {
    const auto b = small_bundle(4, 3, 1, 8, 243);
    EXPECT_EQ(b.train_size(), 243u);
}
