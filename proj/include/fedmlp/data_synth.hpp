// Synthetic multi-label data, client partitioning, partial-label masks,
// class priors and the two-view noise augmentation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "fedmlp/annotation.hpp"
#include "fedmlp/core_model.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/prototype_engine.hpp"

namespace fedmlp {

/// Generator parameters. Labels come from a Gaussian copula over
/// `correlation` with marginal rates `positive_rates`; an input is the sum
/// of the class directions of its positive classes plus isotropic noise.
struct SyntheticSpec {
    int classes = 5;
    int input_dim = 32;
    std::size_t n_train = 5000;
    std::size_t n_test = 2000;
    std::vector<double> positive_rates{0.30, 0.20, 0.10, 0.05, 0.03};
    Matrix correlation;  // empty means identity
    double signal = 2.0;
    double noise = 0.6;
    std::uint64_t seed = 1;

    /// Uniform off-diagonal correlation.
    static Matrix uniform_correlation(int classes, double rho) {
        Matrix m = Matrix::Constant(classes, classes, rho);
        m.diagonal().setOnes();
        return m;
    }

    Matrix resolved_correlation() const {
        return correlation.size() == 0 ? Matrix(Matrix::Identity(classes, classes)) : correlation;
    }

    void validate() const {
        if (classes < 1) throw ConfigError("data: classes must be >= 1");
        if (input_dim < 1) throw ConfigError("data: input_dim must be >= 1");
        if (static_cast<int>(positive_rates.size()) != classes)
            throw ConfigError("data: positive_rates must list one rate per class");
        for (double r : positive_rates)
            if (!(r > 0.0 && r < 1.0)) throw ConfigError("data: positive rates must lie in (0, 1)");
        if (noise < 0.0 || !std::isfinite(noise)) throw ConfigError("data: noise must be >= 0");
        const Matrix corr = resolved_correlation();
        if (corr.rows() != classes || corr.cols() != classes)
            throw ConfigError("data: correlation matrix must be C x C");
        if (!corr.isApprox(corr.transpose(), 0.0) || !(corr.diagonal().array() == 1.0).all())
            throw ConfigError("data: correlation matrix must be symmetric with unit diagonal");
    }
};

struct LabeledSet {
    Matrix inputs;
    Matrix labels;
};

struct DatasetSplit {
    LabeledSet train;
    LabeledSet test;
    Matrix directions;  // [C x d_in]
};

inline DatasetSplit generate_dataset(const SyntheticSpec& spec) {
    spec.validate();
    const int C = spec.classes;
    const Matrix corr = spec.resolved_correlation();
    const Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(corr)};
    if (llt.info() != Eigen::Success)
        throw ConfigError("data: correlation matrix is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    std::vector<double> cut(static_cast<std::size_t>(C));
    const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
    for (int c = 0; c < C; ++c)
        cut[static_cast<std::size_t>(c)] = boost::math::quantile(std_normal, spec.positive_rates[static_cast<std::size_t>(c)]);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    DatasetSplit out;
    out.directions.resize(C, spec.input_dim);
    for (int c = 0; c < C; ++c) {
        for (int d = 0; d < spec.input_dim; ++d) out.directions(c, d) = gauss(rng);
        out.directions.row(c) *= spec.signal / out.directions.row(c).norm();
    }

    auto draw = [&](std::size_t n) {
        LabeledSet s;
        s.inputs.resize(static_cast<Index>(n), spec.input_dim);
        s.labels.resize(static_cast<Index>(n), C);
        Eigen::VectorXd g(C);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Index>(i);
            for (int c = 0; c < C; ++c) g[c] = gauss(rng);
            const Eigen::VectorXd z = chol * g;
            for (int c = 0; c < C; ++c) s.labels(row, c) = z[c] < cut[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
            for (int d = 0; d < spec.input_dim; ++d) s.inputs(row, d) = spec.noise * gauss(rng);
            for (int c = 0; c < C; ++c)
                if (s.labels(row, c) == 1.0) s.inputs.row(row) += out.directions.row(c);
        }
        return s;
    };
    out.train = draw(spec.n_train);
    out.test = draw(spec.n_test);
    return out;
}

/// Contiguous near-equal shards; the last `n % K` shards get one extra sample.
inline std::vector<std::vector<std::size_t>> partition_clients(std::size_t n, int clients) {
    if (clients < 1) throw ConfigError("partition: need at least one client");
    const auto K = static_cast<std::size_t>(clients);
    if (K > n) throw ConfigError("partition: more clients than training samples");
    const std::size_t base = n / K;
    const std::size_t extra = n % K;
    std::vector<std::vector<std::size_t>> shards(K);
    std::size_t next = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t size = base + (k >= K - extra ? 1 : 0);
        shards[k].resize(size);
        std::iota(shards[k].begin(), shards[k].end(), next);
        next += size;
    }
    return shards;
}

/// Which classes each client has lost.
struct MaskPlan {
    int clients = 0;
    int classes = 0;
    int missing_per_client = 0;
    std::vector<std::vector<int>> missing;  // sorted per client
    AnnotationDistribution annotation;

    std::vector<int> active_classes(int client) const {
        std::vector<int> out;
        const auto& miss = missing.at(static_cast<std::size_t>(client));
        for (int c = 0; c < classes; ++c)
            if (!std::binary_search(miss.begin(), miss.end(), c)) out.push_back(c);
        return out;
    }
};

inline void check_mask_feasible(int clients, int classes, int missing) {
    if (clients < 1 || classes < 2) throw ConfigError("mask plan: need K >= 1 and C >= 2");
    if (missing < 1 || missing > classes - 1)
        throw ConfigError("mask plan: missing classes per client must lie in [1, C-1], got " +
                          std::to_string(missing));
    if (static_cast<long>(clients) * (classes - missing) < classes)
        throw ConfigError("mask plan: K * (C - m) < C, some class would be unlabeled");
}

/// Random plan removing exactly `missing` classes from every client while
/// keeping every class labeled somewhere. Rejection sampling first; if that
/// keeps failing, a rotated assignment over a random class order is used,
/// which always covers every class.
inline MaskPlan build_mask_plan(int clients, int classes, int missing, std::uint64_t seed) {
    check_mask_feasible(clients, classes, missing);
    std::mt19937_64 rng(seed);
    const int active = classes - missing;
    std::vector<int> all(static_cast<std::size_t>(classes));
    std::iota(all.begin(), all.end(), 0);

    std::vector<std::vector<int>> active_sets(static_cast<std::size_t>(clients));
    bool covered = false;
    constexpr int kMaxAttempts = 100000;
    for (int attempt = 0; attempt < kMaxAttempts && !covered; ++attempt) {
        std::vector<int> hits(static_cast<std::size_t>(classes), 0);
        for (auto& set : active_sets) {
            std::vector<int> perm = all;
            std::shuffle(perm.begin(), perm.end(), rng);
            set.assign(perm.begin(), perm.begin() + active);
            for (int c : set) ++hits[static_cast<std::size_t>(c)];
        }
        covered = std::all_of(hits.begin(), hits.end(), [](int h) { return h > 0; });
    }
    if (!covered) {
        std::vector<int> perm = all;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int k = 0; k < clients; ++k) {
            auto& set = active_sets[static_cast<std::size_t>(k)];
            set.clear();
            for (int j = 0; j < active; ++j)
                set.push_back(perm[static_cast<std::size_t>((k * active + j) % classes)]);
        }
    }

    MaskPlan plan;
    plan.clients = clients;
    plan.classes = classes;
    plan.missing_per_client = missing;
    for (auto& set : active_sets) {
        std::sort(set.begin(), set.end());
        std::vector<int> miss;
        std::set_difference(all.begin(), all.end(), set.begin(), set.end(), std::back_inserter(miss));
        plan.missing.push_back(std::move(miss));
    }
    plan.annotation = AnnotationDistribution::from_active_sets(active_sets, classes);
    plan.annotation.validate();
    return plan;
}

/// Both label views of a client's shard plus the retained truth.
struct MaskedLabels {
    Matrix truth;
    /// Missing classes read as negative (baseline view).
    Matrix observed;
    /// 1 where the class is annotated at this client.
    Matrix active_mask;
};

inline MaskedLabels apply_mask(const Matrix& labels, std::span<const int> missing_classes) {
    MaskedLabels m;
    m.truth = labels;
    m.active_mask = Matrix::Ones(labels.rows(), labels.cols());
    for (int c : missing_classes) {
        if (c < 0 || c >= labels.cols()) throw DimensionError("apply_mask: class out of range");
        m.active_mask.col(c).setZero();
    }
    m.observed = labels.cwiseProduct(m.active_mask);
    return m;
}

/// Two additive-Gaussian views of the same inputs (weak, strong).
template <class Rng>
std::pair<Matrix, Matrix> augment_two_views(const Matrix& inputs, double weak, double strong, Rng& rng) {
    if (weak < 0.0 || strong < weak) throw ConfigError("augment: need 0 <= weak <= strong");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix v1 = inputs;
    Matrix v2 = inputs;
    if (weak > 0.0)
        for (Index i = 0; i < v1.size(); ++i) v1.data()[i] += weak * gauss(rng);
    if (strong > 0.0)
        for (Index i = 0; i < v2.size(); ++i) v2.data()[i] += strong * gauss(rng);
    return {std::move(v1), std::move(v2)};
}

/// Positive rate per class over supervised entries (mask == 1), smoothed to
/// [eps, 1 - eps]. Classes with nothing supervised default to 0.5 and are
/// flagged in `defaulted`.
inline ClassPriors compute_class_priors(const Matrix& labels, const Matrix& supervised_mask,
                                        double eps = kPriorEpsilon, double la_tau = 1.0) {
    if (labels.rows() != supervised_mask.rows() || labels.cols() != supervised_mask.cols())
        throw DimensionError("compute_class_priors: shape mismatch");
    const Index C = labels.cols();
    Vector rates(C);
    std::vector<bool> defaulted(static_cast<std::size_t>(C), false);
    for (Index c = 0; c < C; ++c) {
        double positives = 0.0, count = 0.0;
        for (Index i = 0; i < labels.rows(); ++i)
            if (supervised_mask(i, c) != 0.0) {
                count += 1.0;
                positives += labels(i, c);
            }
        if (count == 0.0) {
            rates[c] = 0.5;
            defaulted[static_cast<std::size_t>(c)] = true;
        } else {
            rates[c] = positives / count;
        }
    }
    ClassPriors p = ClassPriors::from_rates(rates, eps, la_tau);
    p.defaulted = std::move(defaulted);
    return p;
}

/// Priors over active labels plus the permanent pseudo labels in `ledger`.
inline ClassPriors compute_class_priors(const Matrix& labels, const Matrix& active_mask,
                                        const PseudoLabelLedger& ledger, double eps = kPriorEpsilon,
                                        double la_tau = 1.0) {
    Matrix y = labels;
    Matrix mask = active_mask;
    for (int c : ledger.negative_classes())
        for (std::size_t i = 0; i < ledger.sample_count(); ++i) {
            const TagState s = ledger.state(i, c);
            if (s == TagState::kUntagged) continue;
            const auto row = static_cast<Index>(i);
            mask(row, c) = 1.0;
            y(row, c) = s == TagState::kTagged1 ? 1.0 : 0.0;
        }
    return compute_class_priors(y, mask, eps, la_tau);
}

// ---------------------------------------------------------------------------
// Federated bundle
// ---------------------------------------------------------------------------

struct ClientShard {
    int id = 0;
    Matrix inputs;
    Matrix truth;
    std::vector<int> active;
    std::vector<int> missing;
};

/// Everything a simulation consumes: per-client shards with their label
/// masks and the held-out test set.
struct DatasetBundle {
    int classes = 0;
    std::vector<ClientShard> clients;
    Matrix test_inputs;
    Matrix test_truth;
    AnnotationDistribution annotation;

    std::size_t train_size() const {
        std::size_t n = 0;
        for (const auto& c : clients) n += static_cast<std::size_t>(c.inputs.rows());
        return n;
    }
    Index input_dim() const { return test_inputs.cols(); }
};

inline DatasetBundle make_bundle(const DatasetSplit& data, int clients, const MaskPlan& plan) {
    if (plan.clients != clients) throw ConfigError("bundle: mask plan client count mismatch");
    DatasetBundle b;
    b.classes = static_cast<int>(data.train.labels.cols());
    const auto shards = partition_clients(static_cast<std::size_t>(data.train.inputs.rows()), clients);
    for (int k = 0; k < clients; ++k) {
        const auto& idx = shards[static_cast<std::size_t>(k)];
        ClientShard s;
        s.id = k;
        const auto first = static_cast<Index>(idx.front());
        const auto n = static_cast<Index>(idx.size());
        s.inputs = data.train.inputs.middleRows(first, n);
        s.truth = data.train.labels.middleRows(first, n);
        s.missing = plan.missing[static_cast<std::size_t>(k)];
        s.active = plan.active_classes(k);
        b.clients.push_back(std::move(s));
    }
    b.test_inputs = data.test.inputs;
    b.test_truth = data.test.labels;
    b.annotation = plan.annotation;
    return b;
}

namespace detail {

inline std::string exact_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Columnar text: a header row, then one sample per line with split,
/// client, inputs x*, truth labels y*, observed labels o* (-1 = missing).
/// Test rows carry client -1 and o = y.
inline void write_bundle(std::ostream& os, const DatasetBundle& b) {
    const Index d = b.input_dim();
    const int C = b.classes;
    os << "split,client";
    for (Index j = 0; j < d; ++j) os << ",x" << j;
    for (int c = 0; c < C; ++c) os << ",y" << c;
    for (int c = 0; c < C; ++c) os << ",o" << c;
    os << '\n';
    auto row = [&](const char* split, int client, const Matrix& x, const Matrix& y, Index i,
                   const std::vector<int>* missing) {
        os << split << ',' << client;
        for (Index j = 0; j < d; ++j) os << ',' << detail::exact_number(x(i, j));
        for (int c = 0; c < C; ++c) os << ',' << static_cast<int>(y(i, c));
        for (int c = 0; c < C; ++c) {
            const bool miss = missing && std::binary_search(missing->begin(), missing->end(), c);
            os << ',' << (miss ? -1 : static_cast<int>(y(i, c)));
        }
        os << '\n';
    };
    for (const auto& s : b.clients)
        for (Index i = 0; i < s.inputs.rows(); ++i) row("train", s.id, s.inputs, s.truth, i, &s.missing);
    for (Index i = 0; i < b.test_inputs.rows(); ++i) row("test", -1, b.test_inputs, b.test_truth, i, nullptr);
}

inline DatasetBundle read_bundle(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("bundle: empty input");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) header.push_back(tok);
    }
    Index d = 0;
    int C = 0;
    for (const auto& h : header) {
        if (!h.empty() && h[0] == 'x') ++d;
        if (!h.empty() && h[0] == 'y') ++C;
    }
    if (header.size() != static_cast<std::size_t>(2 + d + 2 * C))
        throw ConfigError("bundle: malformed header");

    struct Row {
        int client;
        std::vector<double> x;
        std::vector<double> y;
        std::vector<int> o;
    };
    std::vector<Row> train, test;
    int clients = 0;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> f;
        while (std::getline(ss, tok, ',')) f.push_back(tok);
        if (f.size() != header.size())
            throw ConfigError("bundle: line " + std::to_string(line_no) + " has wrong field count");
        Row r;
        try {
            r.client = std::stoi(f[1]);
            for (Index j = 0; j < d; ++j) r.x.push_back(std::stod(f[static_cast<std::size_t>(2 + j)]));
            for (int c = 0; c < C; ++c) r.y.push_back(std::stod(f[static_cast<std::size_t>(2 + d + c)]));
            for (int c = 0; c < C; ++c) r.o.push_back(std::stoi(f[static_cast<std::size_t>(2 + d + C + c)]));
        } catch (const std::exception&) {
            throw ConfigError("bundle: line " + std::to_string(line_no) + " is not numeric");
        }
        if (f[0] == "train") {
            clients = std::max(clients, r.client + 1);
            train.push_back(std::move(r));
        } else if (f[0] == "test") {
            test.push_back(std::move(r));
        } else {
            throw ConfigError("bundle: line " + std::to_string(line_no) + " has unknown split");
        }
    }

    DatasetBundle b;
    b.classes = C;
    b.clients.resize(static_cast<std::size_t>(clients));
    std::vector<std::vector<const Row*>> by_client(static_cast<std::size_t>(clients));
    for (const auto& r : train) by_client.at(static_cast<std::size_t>(r.client)).push_back(&r);
    std::vector<std::vector<int>> active_sets;
    for (int k = 0; k < clients; ++k) {
        auto& s = b.clients[static_cast<std::size_t>(k)];
        const auto& rows = by_client[static_cast<std::size_t>(k)];
        s.id = k;
        s.inputs.resize(static_cast<Index>(rows.size()), d);
        s.truth.resize(static_cast<Index>(rows.size()), C);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (Index j = 0; j < d; ++j) s.inputs(static_cast<Index>(i), j) = rows[i]->x[static_cast<std::size_t>(j)];
            for (int c = 0; c < C; ++c) s.truth(static_cast<Index>(i), c) = rows[i]->y[static_cast<std::size_t>(c)];
        }
        if (!rows.empty())
            for (int c = 0; c < C; ++c) (rows.front()->o[static_cast<std::size_t>(c)] < 0 ? s.missing : s.active).push_back(c);
        active_sets.push_back(s.active);
    }
    b.test_inputs.resize(static_cast<Index>(test.size()), d);
    b.test_truth.resize(static_cast<Index>(test.size()), C);
    for (std::size_t i = 0; i < test.size(); ++i) {
        for (Index j = 0; j < d; ++j) b.test_inputs(static_cast<Index>(i), j) = test[i].x[static_cast<std::size_t>(j)];
        for (int c = 0; c < C; ++c) b.test_truth(static_cast<Index>(i), c) = test[i].y[static_cast<std::size_t>(c)];
    }
    b.annotation = AnnotationDistribution::from_active_sets(active_sets, C);
    return b;
}

}  // namespace fedmlp
