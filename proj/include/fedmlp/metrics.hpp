// Evaluation metrics: macro balanced accuracy, macro ROC AUC, mean average
// precision, plus an audit of pseudo-label quality against ground truth.
//
// Per-class vectors hold NaN for classes that cannot be scored (the test
// set has no positives or no negatives for them); macro values average the
// remaining classes.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "fedmlp/core_model.hpp"
#include "fedmlp/errors.hpp"
#include "fedmlp/prototype_engine.hpp"

namespace fedmlp {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Mean of the non-NaN entries; NaN when there are none.
inline double nan_mean(std::span<const double> values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values)
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    return n == 0 ? kNaN : sum / static_cast<double>(n);
}

struct ClassMetric {
    double macro = kNaN;
    std::vector<double> per_class;
    std::vector<int> skipped;  // classes lacking positives or negatives
};

struct BalancedAccuracy : ClassMetric {
    std::vector<double> sensitivity;
    std::vector<double> specificity;
};

namespace detail {

inline void check_eval_inputs(const Matrix& scores, const Matrix& truth, const char* what) {
    if (scores.rows() != truth.rows() || scores.cols() != truth.cols())
        throw DimensionError(std::string(what) + ": shape mismatch");
    if (scores.rows() == 0) throw DomainError(std::string(what) + ": empty evaluation set");
}

inline std::vector<double> column(const Matrix& m, Index c) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, c);
    return out;
}

}  // namespace detail

inline BalancedAccuracy balanced_accuracy(const Matrix& probs, const Matrix& truth,
                                          double threshold = 0.5) {
    detail::check_eval_inputs(probs, truth, "balanced_accuracy");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("balanced_accuracy: threshold must lie in (0, 1)");
    const auto classes = static_cast<std::size_t>(probs.cols());
    BalancedAccuracy r;
    r.per_class.assign(classes, kNaN);
    r.sensitivity.assign(classes, kNaN);
    r.specificity.assign(classes, kNaN);
    for (Index c = 0; c < probs.cols(); ++c) {
        double tp = 0, fn = 0, tn = 0, fp = 0;
        for (Index i = 0; i < probs.rows(); ++i) {
            const bool predicted = probs(i, c) >= threshold;
            if (truth(i, c) == 1.0)
                (predicted ? tp : fn) += 1;
            else
                (predicted ? fp : tn) += 1;
        }
        const auto k = static_cast<std::size_t>(c);
        if (tp + fn > 0) r.sensitivity[k] = tp / (tp + fn);
        if (tn + fp > 0) r.specificity[k] = tn / (tn + fp);
        if (tp + fn == 0 || tn + fp == 0) {
            r.skipped.push_back(static_cast<int>(c));
            continue;
        }
        r.per_class[k] = 0.5 * (r.sensitivity[k] + r.specificity[k]);
    }
    r.macro = nan_mean(r.per_class);
    return r;
}

/// Mann-Whitney AUC of one class; ties earn half credit. NaN if a label side is empty.
inline double binary_auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw DimensionError("binary_auc: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Sum of (mid)ranks of positives, ranks starting at 1.
    double positive_rank_sum = 0.0;
    double positives = 0.0;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && scores[order[end]] == scores[order[start]]) ++end;
        const double mid_rank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t j = start; j < end; ++j)
            if (labels[order[j]] == 1.0) {
                positive_rank_sum += mid_rank;
                positives += 1.0;
            }
        start = end;
    }
    const double negatives = static_cast<double>(n) - positives;
    if (positives == 0.0 || negatives == 0.0) return kNaN;
    return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

/// Mean of precision@rank over the ranks of the positives, scores
/// descending and ties broken by ascending index. NaN without positives
/// or without negatives.
inline double average_precision(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw DimensionError("average_precision: size mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double hits = 0.0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        if (labels[order[r]] == 1.0) {
            hits += 1.0;
            precision_sum += hits / static_cast<double>(r + 1);
        }
    if (hits == 0.0 || hits == static_cast<double>(n)) return kNaN;
    return precision_sum / hits;
}

inline ClassMetric auc(const Matrix& scores, const Matrix& truth) {
    detail::check_eval_inputs(scores, truth, "auc");
    ClassMetric r;
    r.per_class.assign(static_cast<std::size_t>(scores.cols()), kNaN);
    for (Index c = 0; c < scores.cols(); ++c) {
        const auto s = detail::column(scores, c);
        const auto y = detail::column(truth, c);
        const double v = binary_auc(s, y);
        r.per_class[static_cast<std::size_t>(c)] = v;
        if (std::isnan(v)) r.skipped.push_back(static_cast<int>(c));
    }
    r.macro = nan_mean(r.per_class);
    return r;
}

inline ClassMetric mean_average_precision(const Matrix& scores, const Matrix& truth) {
    detail::check_eval_inputs(scores, truth, "mean_average_precision");
    ClassMetric r;
    r.per_class.assign(static_cast<std::size_t>(scores.cols()), kNaN);
    for (Index c = 0; c < scores.cols(); ++c) {
        const auto s = detail::column(scores, c);
        const auto y = detail::column(truth, c);
        const double v = average_precision(s, y);
        r.per_class[static_cast<std::size_t>(c)] = v;
        if (std::isnan(v)) r.skipped.push_back(static_cast<int>(c));
    }
    r.macro = nan_mean(r.per_class);
    return r;
}

struct EvalReport {
    double bacc = kNaN;
    double auc = kNaN;
    double map = kNaN;
    double threshold = 0.5;
    std::vector<double> per_class_bacc;
    std::vector<double> per_class_auc;
    std::vector<double> per_class_ap;
    std::vector<double> sensitivity;
    std::vector<double> specificity;
};

inline EvalReport evaluate(const Matrix& probs, const Matrix& truth, double threshold = 0.5) {
    EvalReport r;
    r.threshold = threshold;
    auto b = balanced_accuracy(probs, truth, threshold);
    auto a = auc(probs, truth);
    auto m = mean_average_precision(probs, truth);
    r.bacc = b.macro;
    r.auc = a.macro;
    r.map = m.macro;
    r.per_class_bacc = std::move(b.per_class);
    r.sensitivity = std::move(b.sensitivity);
    r.specificity = std::move(b.specificity);
    r.per_class_auc = std::move(a.per_class);
    r.per_class_ap = std::move(m.per_class);
    return r;
}

// ---------------------------------------------------------------------------
// Pseudo-label audit
// ---------------------------------------------------------------------------

struct TagAudit {
    struct Counts {
        std::size_t tagged0 = 0;
        std::size_t correct0 = 0;
        std::size_t tagged1 = 0;
        std::size_t correct1 = 0;

        std::size_t tagged() const { return tagged0 + tagged1; }
        std::size_t correct() const { return correct0 + correct1; }
        double precision() const {
            return tagged() == 0 ? kNaN : static_cast<double>(correct()) / static_cast<double>(tagged());
        }
        double precision0() const {
            return tagged0 == 0 ? kNaN : static_cast<double>(correct0) / static_cast<double>(tagged0);
        }
        double precision1() const {
            return tagged1 == 0 ? kNaN : static_cast<double>(correct1) / static_cast<double>(tagged1);
        }
        /// Of the truly positive missing entries, the share tagged 1.
        std::size_t true_positives = 0;
        double recall1() const {
            return true_positives == 0 ? kNaN
                                       : static_cast<double>(correct1) / static_cast<double>(true_positives);
        }
    };

    std::vector<Counts> per_class;
    Counts overall;
    std::size_t entries = 0;

    double coverage() const {
        return entries == 0 ? 0.0
                            : static_cast<double>(overall.tagged()) / static_cast<double>(entries);
    }

    explicit TagAudit(std::size_t classes = 0) : per_class(classes) {}

    void merge(const TagAudit& o) {
        if (per_class.size() < o.per_class.size()) per_class.resize(o.per_class.size());
        auto add = [](Counts& a, const Counts& b) {
            a.tagged0 += b.tagged0;
            a.correct0 += b.correct0;
            a.tagged1 += b.tagged1;
            a.correct1 += b.correct1;
            a.true_positives += b.true_positives;
        };
        for (std::size_t c = 0; c < o.per_class.size(); ++c) add(per_class[c], o.per_class[c]);
        add(overall, o.overall);
        entries += o.entries;
    }
};

/// Compares every tagged ledger entry with the retained ground truth.
inline TagAudit pseudo_label_audit(const PseudoLabelLedger& ledger, const Matrix& truth) {
    if (static_cast<Index>(ledger.sample_count()) != truth.rows())
        throw DimensionError("pseudo_label_audit: ledger and truth row counts differ");
    TagAudit a(static_cast<std::size_t>(truth.cols()));
    a.entries = ledger.entry_count();
    for (int c : ledger.negative_classes()) {
        auto& pc = a.per_class.at(static_cast<std::size_t>(c));
        for (std::size_t i = 0; i < ledger.sample_count(); ++i) {
            const bool positive = truth(static_cast<Index>(i), c) == 1.0;
            if (positive) ++pc.true_positives;
            switch (ledger.state(i, c)) {
                case TagState::kTagged0:
                    ++pc.tagged0;
                    if (!positive) ++pc.correct0;
                    break;
                case TagState::kTagged1:
                    ++pc.tagged1;
                    if (positive) ++pc.correct1;
                    break;
                case TagState::kUntagged:
                    break;
            }
        }
        a.overall.tagged0 += pc.tagged0;
        a.overall.correct0 += pc.correct0;
        a.overall.tagged1 += pc.tagged1;
        a.overall.correct1 += pc.correct1;
        a.overall.true_positives += pc.true_positives;
    }
    return a;
}

}  // namespace fedmlp
