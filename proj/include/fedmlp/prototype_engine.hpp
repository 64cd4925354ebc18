// Dual class prototypes, cosine confidence scores, pseudo-label selection
// and the difficulty-driven selection ratios used in the detection stage.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmlp/annotation.hpp"
#include "fedmlp/core_model.hpp"
#include "fedmlp/errors.hpp"

namespace fedmlp {

/// Negative/positive feature centroids for one class. A side with zero
/// support is absent.
struct DualPrototype {
    int class_id = -1;
    std::optional<Vector> negative;
    std::optional<Vector> positive;
    std::size_t negative_support = 0;
    std::size_t positive_support = 0;

    bool complete() const { return negative.has_value() && positive.has_value(); }
};

using PrototypeMap = std::map<int, DualPrototype>;
/// (client id, class id)
using ClientClassKey = std::pair<int, int>;

/// Per-class centroid of features over samples with label 0 and label 1.
/// Only the listed active classes are processed.
inline PrototypeMap compute_local_prototypes(const Matrix& features, const Matrix& labels,
                                             std::span<const int> active_classes) {
    if (features.rows() != labels.rows())
        throw DimensionError("compute_local_prototypes: row count mismatch");
    PrototypeMap out;
    const Index dim = features.cols();
    for (int c : active_classes) {
        if (c < 0 || c >= labels.cols())
            throw DimensionError("compute_local_prototypes: class out of range");
        Vector sum0 = Vector::Zero(dim);
        Vector sum1 = Vector::Zero(dim);
        std::size_t n0 = 0, n1 = 0;
        for (Index i = 0; i < features.rows(); ++i) {
            if (labels(i, c) == 1.0) {
                sum1 += features.row(i).transpose();
                ++n1;
            } else {
                sum0 += features.row(i).transpose();
                ++n0;
            }
        }
        DualPrototype p;
        p.class_id = c;
        p.negative_support = n0;
        p.positive_support = n1;
        if (n0 > 0) p.negative = sum0 / static_cast<double>(n0);
        if (n1 > 0) p.positive = sum1 / static_cast<double>(n1);
        out.emplace(c, std::move(p));
    }
    return out;
}

/// Server-side mean of local prototypes over the clients that label each
/// class. Sides absent at a client are skipped and the divisor shrinks.
inline PrototypeMap aggregate_global_prototypes(const std::map<ClientClassKey, DualPrototype>& locals,
                                                const AnnotationDistribution& annotation) {
    PrototypeMap out;
    for (int c = 0; c < annotation.class_count(); ++c) {
        const auto& contributors = annotation.clients_of(c);
        if (contributors.empty())
            throw ProtocolError("aggregate_global_prototypes: class " + std::to_string(c) +
                                " has an empty annotation set");
        DualPrototype g;
        g.class_id = c;
        std::optional<Vector> sum0, sum1;
        std::size_t sides0 = 0, sides1 = 0;
        for (int k : contributors) {
            auto it = locals.find({k, c});
            if (it == locals.end()) continue;
            const DualPrototype& p = it->second;
            if (p.negative) {
                sum0 = sum0 ? Vector(*sum0 + *p.negative) : *p.negative;
                ++sides0;
                g.negative_support += p.negative_support;
            }
            if (p.positive) {
                sum1 = sum1 ? Vector(*sum1 + *p.positive) : *p.positive;
                ++sides1;
                g.positive_support += p.positive_support;
            }
        }
        if (sides0 > 0) g.negative = *sum0 / static_cast<double>(sides0);
        if (sides1 > 0) g.positive = *sum1 / static_cast<double>(sides1);
        out.emplace(c, std::move(g));
    }
    return out;
}

namespace detail {

inline double cosine(const Eigen::Ref<const Vector>& a, double a_norm,
                     const Eigen::Ref<const Vector>& b, double b_norm) {
    return a.dot(b) / (a_norm * b_norm);
}

}  // namespace detail

/// Z[i, j] = cos(P0, F_i) - cos(P1, F_i) for the j-th requested class.
/// Negative values lean positive. Entries whose cosine is undefined (a zero
/// vector) are NaN and must be excluded by the caller.
inline Matrix confidence_scores(const Matrix& features, const PrototypeMap& global_protos,
                                std::span<const int> negative_classes) {
    Matrix z(features.rows(), static_cast<Index>(negative_classes.size()));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Vector row_norm = features.rowwise().norm();
    for (std::size_t j = 0; j < negative_classes.size(); ++j) {
        const int c = negative_classes[j];
        auto it = global_protos.find(c);
        if (it == global_protos.end() || !it->second.complete())
            throw DomainError("confidence_scores: class " + std::to_string(c) +
                              " lacks a complete prototype");
        const Vector& p0 = *it->second.negative;
        const Vector& p1 = *it->second.positive;
        if (p0.size() != features.cols() || p1.size() != features.cols())
            throw DimensionError("confidence_scores: prototype dimension mismatch");
        const double n0 = p0.norm();
        const double n1 = p1.norm();
        for (Index i = 0; i < features.rows(); ++i) {
            const double nf = row_norm[i];
            if (nf == 0.0 || n0 == 0.0 || n1 == 0.0) {
                z(i, static_cast<Index>(j)) = nan;
                continue;
            }
            const Vector f = features.row(i).transpose();
            z(i, static_cast<Index>(j)) =
                detail::cosine(p0, n0, f, nf) - detail::cosine(p1, n1, f, nf);
        }
    }
    return z;
}

/// Samples picked for permanent pseudo labels in one round for one class.
struct PseudoLabelSelection {
    std::vector<std::size_t> tagged0;
    std::vector<std::size_t> tagged1;
};

/// Number of entries that make up the "top tau percent" of `n` candidates.
/// `min_count` (default 0) lifts the count when tau > 0 so that a run can be
/// driven to full coverage.
inline std::size_t selection_count(double tau, std::size_t n, std::size_t min_count = 0) {
    if (tau <= 0.0 || n == 0) return 0;
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    auto k = static_cast<std::size_t>(std::floor(tau * static_cast<double>(n) + 1e-9));
    k = std::max(k, std::min(min_count, n));
    return std::min(k, n);
}

/// Picks the most confident residual entries on each side of Z = 0.
///
/// `z[j]` is the score of sample `ids[j]`. Among entries with Z >= 0 the
/// top floor(tau0 * count) by Z become label 0; among entries with Z < 0
/// the top floor(tau1 * count) by -Z become label 1. Ties go to the lower
/// sample id. NaN entries are never selected.
inline PseudoLabelSelection select_pseudo_labels(std::span<const double> z,
                                                 std::span<const std::size_t> ids, double tau0,
                                                 double tau1, std::size_t min_count = 0) {
    if (z.size() != ids.size()) throw DimensionError("select_pseudo_labels: size mismatch");
    if (tau0 < 0.0 || tau1 < 0.0 || std::isnan(tau0) || std::isnan(tau1))
        throw ConfigError("select_pseudo_labels: selection ratio must be non-negative");
    std::vector<std::size_t> neg_side, pos_side;  // positions into z
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (std::isnan(z[j])) continue;
        (z[j] >= 0.0 ? neg_side : pos_side).push_back(j);
    }
    auto take_top = [&](std::vector<std::size_t>& side, double tau, double sign) {
        const std::size_t k = selection_count(tau, side.size(), min_count);
        std::vector<std::size_t> picked;
        if (k == 0) return picked;
        auto better = [&](std::size_t a, std::size_t b) {
            const double va = sign * z[a];
            const double vb = sign * z[b];
            if (va != vb) return va > vb;
            return ids[a] < ids[b];
        };
        std::partial_sort(side.begin(), side.begin() + static_cast<std::ptrdiff_t>(k), side.end(),
                          better);
        picked.reserve(k);
        for (std::size_t r = 0; r < k; ++r) picked.push_back(ids[side[r]]);
        std::sort(picked.begin(), picked.end());
        return picked;
    };
    PseudoLabelSelection out;
    out.tagged0 = take_top(neg_side, tau0, 1.0);
    out.tagged1 = take_top(pos_side, tau1, -1.0);
    return out;
}

/// Convenience overload where sample ids are 0..n-1.
inline PseudoLabelSelection select_pseudo_labels(std::span<const double> z, double tau0,
                                                 double tau1, std::size_t min_count = 0) {
    std::vector<std::size_t> ids(z.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    return select_pseudo_labels(z, ids, tau0, tau1, min_count);
}

// ---------------------------------------------------------------------------
// Pseudo-label ledger
// ---------------------------------------------------------------------------

enum class TagState : std::uint8_t { kUntagged = 0, kTagged0 = 1, kTagged1 = 2 };

/// Permanent per-(sample, missing class) record of pseudo labels.
class PseudoLabelLedger {
public:
    struct Entry {
        TagState state = TagState::kUntagged;
        int round = 0;
        double score = 0.0;  // Z at tagging time
    };

    PseudoLabelLedger() = default;
    PseudoLabelLedger(std::size_t samples, std::vector<int> negative_classes)
        : samples_(samples), classes_(std::move(negative_classes)) {
        std::sort(classes_.begin(), classes_.end());
        entries_.assign(classes_.size(), std::vector<Entry>(samples));
    }

    std::size_t sample_count() const { return samples_; }
    const std::vector<int>& negative_classes() const { return classes_; }
    bool covers(int cls) const { return column_of(cls).has_value(); }

    const Entry& entry(std::size_t sample, int cls) const { return column(cls).at(sample); }
    TagState state(std::size_t sample, int cls) const { return entry(sample, cls).state; }

    /// Tags an untagged entry. Re-tagging is a protocol violation.
    void tag(std::size_t sample, int cls, int value, int round, double score) {
        if (value != 0 && value != 1) throw DomainError("ledger: pseudo label must be 0 or 1");
        auto& e = mutable_column(cls).at(sample);
        if (e.state != TagState::kUntagged)
            throw ProtocolError("ledger: entry (" + std::to_string(sample) + ", " +
                                std::to_string(cls) + ") is already tagged");
        e.state = value == 1 ? TagState::kTagged1 : TagState::kTagged0;
        e.round = round;
        e.score = score;
        ++tagged_;
    }

    std::vector<std::size_t> residual(int cls) const {
        std::vector<std::size_t> out;
        const auto& col = column(cls);
        for (std::size_t i = 0; i < col.size(); ++i)
            if (col[i].state == TagState::kUntagged) out.push_back(i);
        return out;
    }

    std::size_t entry_count() const { return samples_ * classes_.size(); }
    std::size_t tagged_count() const { return tagged_; }

    bool operator==(const PseudoLabelLedger& o) const {
        if (samples_ != o.samples_ || classes_ != o.classes_) return false;
        for (std::size_t j = 0; j < entries_.size(); ++j)
            for (std::size_t i = 0; i < samples_; ++i) {
                const Entry& a = entries_[j][i];
                const Entry& b = o.entries_[j][i];
                if (a.state != b.state || a.round != b.round || a.score != b.score) return false;
            }
        return true;
    }

private:
    std::optional<std::size_t> column_of(int cls) const {
        auto it = std::lower_bound(classes_.begin(), classes_.end(), cls);
        if (it == classes_.end() || *it != cls) return std::nullopt;
        return static_cast<std::size_t>(it - classes_.begin());
    }
    const std::vector<Entry>& column(int cls) const {
        auto j = column_of(cls);
        if (!j) throw ProtocolError("ledger: class " + std::to_string(cls) + " is not missing here");
        return entries_[*j];
    }
    std::vector<Entry>& mutable_column(int cls) {
        return const_cast<std::vector<Entry>&>(std::as_const(*this).column(cls));
    }

    std::size_t samples_ = 0;
    std::vector<int> classes_;
    std::vector<std::vector<Entry>> entries_;
    std::size_t tagged_ = 0;
};

// ---------------------------------------------------------------------------
// Difficulty and selection ratios
// ---------------------------------------------------------------------------

/// Learning degree of each active class: fraction of local samples whose
/// prediction is confidently outside the band [L, R].
struct DifficultyReport {
    std::map<int, double> degree;
    std::size_t sample_count = 0;
};

inline DifficultyReport compute_local_difficulty(const Matrix& probs, std::span<const int> active_classes,
                                                 double lower, double upper) {
    if (!(lower >= 0.0 && lower < upper && upper <= 1.0))
        throw ConfigError("compute_local_difficulty: need 0 <= L < R <= 1");
    if (probs.rows() == 0) throw DomainError("compute_local_difficulty: empty dataset");
    DifficultyReport r;
    r.sample_count = static_cast<std::size_t>(probs.rows());
    for (int c : active_classes) {
        if (c < 0 || c >= probs.cols()) throw DimensionError("compute_local_difficulty: class out of range");
        std::size_t confident = 0;
        for (Index i = 0; i < probs.rows(); ++i) {
            const double p = probs(i, c);
            if (p < lower || p > upper) ++confident;
        }
        r.degree[c] = static_cast<double>(confident) / static_cast<double>(probs.rows());
    }
    return r;
}

/// Dataset-size weighted mean of local degrees over the clients labeling each class.
inline Vector aggregate_global_difficulty(const std::map<ClientClassKey, double>& locals,
                                          std::span<const std::size_t> dataset_sizes,
                                          const AnnotationDistribution& annotation) {
    Vector out(annotation.class_count());
    for (int c = 0; c < annotation.class_count(); ++c) {
        const auto& contributors = annotation.clients_of(c);
        if (contributors.empty())
            throw ProtocolError("aggregate_global_difficulty: class " + std::to_string(c) +
                                " has an empty annotation set");
        double total_size = 0.0;
        for (int k : contributors) total_size += static_cast<double>(dataset_sizes[static_cast<std::size_t>(k)]);
        double acc = 0.0;
        for (int k : contributors) {
            auto it = locals.find({k, c});
            if (it == locals.end())
                throw ProtocolError("aggregate_global_difficulty: client " + std::to_string(k) +
                                    " did not report class " + std::to_string(c));
            acc += static_cast<double>(dataset_sizes[static_cast<std::size_t>(k)]) / total_size * it->second;
        }
        out[c] = acc;
    }
    return out;
}

/// Per-class negative (tau0) and positive (tau1) selection ratios.
struct SelectionRatios {
    Vector tau0;
    Vector tau1;
};

inline SelectionRatios adaptive_thresholds(const Vector& d_global, double base0, double base1) {
    if (base0 < 0.0 || base1 < 0.0) throw ConfigError("adaptive_thresholds: T0, T1 must be >= 0");
    return {d_global * base0, d_global * base1};
}

inline SelectionRatios constant_thresholds(Index classes, double base0, double base1) {
    return {Vector::Constant(classes, base0), Vector::Constant(classes, base1)};
}

}  // namespace fedmlp
