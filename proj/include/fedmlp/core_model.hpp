// Two-layer perceptron for multi-label classification with closed-form
// gradients, the three training losses and an Adam step.
//
// All arithmetic is double precision. Every function here is pure: inputs
// are taken by const reference and results are returned by value.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "fedmlp/errors.hpp"

namespace fedmlp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Clamp applied to (adjusted) probabilities before taking logs.
inline constexpr double kProbClamp = 1e-7;
/// Smoothing bound for class priors: pi1 is kept in [eps, 1 - eps].
inline constexpr double kPriorEpsilon = 1e-3;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Weights of x -> relu(x W1 + b1) -> F W2 + b2.
///
/// The same struct is used for gradients and optimizer moments.
struct ModelParams {
    Matrix w1;  // [d_in x d_f]
    Vector b1;  // [d_f]
    Matrix w2;  // [d_f x C]
    Vector b2;  // [C]

    Index input_dim() const { return w1.rows(); }
    Index feature_dim() const { return w1.cols(); }
    Index class_count() const { return w2.cols(); }

    static ModelParams zeros(Index input_dim, Index feature_dim, Index classes) {
        ModelParams p;
        p.w1 = Matrix::Zero(input_dim, feature_dim);
        p.b1 = Vector::Zero(feature_dim);
        p.w2 = Matrix::Zero(feature_dim, classes);
        p.b2 = Vector::Zero(classes);
        return p;
    }

    /// He-normal first layer, Glorot-normal second layer, zero biases.
    static ModelParams initialize(Index input_dim, Index feature_dim, Index classes,
                                  std::uint64_t seed) {
        ModelParams p = zeros(input_dim, feature_dim, classes);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
        std::normal_distribution<double> n2(
            0.0, std::sqrt(2.0 / static_cast<double>(feature_dim + classes)));
        for (Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = n1(rng);
        for (Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = n2(rng);
        return p;
    }

    ModelParams zeros_like() const { return zeros(input_dim(), feature_dim(), class_count()); }

    bool same_shape(const ModelParams& o) const {
        return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && b1.size() == o.b1.size() &&
               w2.rows() == o.w2.rows() && w2.cols() == o.w2.cols() && b2.size() == o.b2.size();
    }

    bool consistent() const {
        return w1.cols() == b1.size() && w2.rows() == w1.cols() && w2.cols() == b2.size();
    }

    bool finite() const { return all_finite(w1) && all_finite(b1) && all_finite(w2) && all_finite(b2); }

    std::size_t parameter_count() const {
        return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
    }

    bool operator==(const ModelParams& o) const {
        return same_shape(o) && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
    }
};

using ModelGrads = ModelParams;

/// Applies `f` to corresponding tensors of several same-shaped ModelParams.
template <class F, class... Ps>
void for_each_tensor(F&& f, Ps&&... ps) {
    f(ps.w1...);
    f(ps.b1...);
    f(ps.w2...);
    f(ps.b2...);
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ForwardResult {
    Matrix features;  // post-ReLU hidden activations, [batch x d_f]
    Matrix logits;    // [batch x C]
    Matrix probs;     // sigmoid(logits)
};

inline ForwardResult forward(const ModelParams& params, const Matrix& inputs) {
    if (inputs.cols() != params.input_dim())
        throw DimensionError("forward: input width " + std::to_string(inputs.cols()) +
                             " != model input dim " + std::to_string(params.input_dim()));
    if (!all_finite(inputs)) throw DomainError("forward: non-finite input");
    ForwardResult r;
    r.features = ((inputs * params.w1).rowwise() + params.b1.transpose()).cwiseMax(0.0);
    r.logits = (r.features * params.w2).rowwise() + params.b2.transpose();
    r.probs = r.logits.unaryExpr([](double x) { return sigmoid(x); });
    return r;
}

/// Back-propagates a gradient wrt logits to every parameter.
inline ModelGrads backward(const ModelParams& params, const Matrix& inputs,
                           const ForwardResult& fwd, const Matrix& grad_logits) {
    if (grad_logits.rows() != fwd.logits.rows() || grad_logits.cols() != fwd.logits.cols())
        throw DimensionError("backward: gradient shape does not match logits");
    ModelGrads g;
    g.w2 = fwd.features.transpose() * grad_logits;
    g.b2 = grad_logits.colwise().sum().transpose();
    Matrix grad_hidden = grad_logits * params.w2.transpose();
    grad_hidden = (fwd.features.array() > 0.0).select(grad_hidden, 0.0);
    g.w1 = inputs.transpose() * grad_hidden;
    g.b1 = grad_hidden.colwise().sum().transpose();
    return g;
}

// ---------------------------------------------------------------------------
// Class priors and multi-label logit adjustment
// ---------------------------------------------------------------------------

/// Per-class positive rates used by the logit adjustment.
struct ClassPriors {
    Vector pi1;
    Vector pi0;
    double la_tau = 1.0;
    /// Classes whose prior fell back to 0.5 because nothing was supervised.
    std::vector<bool> defaulted;

    Index size() const { return pi1.size(); }

    /// Builds priors from raw positive rates, clamping into [eps, 1 - eps].
    static ClassPriors from_rates(const Vector& rates, double eps = kPriorEpsilon,
                                  double la_tau = 1.0) {
        ClassPriors p;
        p.pi1 = rates.unaryExpr([eps](double r) { return std::clamp(r, eps, 1.0 - eps); });
        p.pi0 = (1.0 - p.pi1.array()).matrix();
        p.la_tau = la_tau;
        p.defaulted.assign(static_cast<std::size_t>(rates.size()), false);
        return p;
    }

    static ClassPriors balanced(Index classes) {
        return from_rates(Vector::Constant(classes, 0.5));
    }

    bool is_balanced() const { return (pi1.array() == 0.5).all() && la_tau == 1.0; }
};

/// Multi-label logit adjustment:
///   y' = y * pi1^tau / (y * pi1^tau + (1 - y) * pi0^tau)
/// which for tau = 1 is the plain prior reweighting of the sigmoid output.
inline Matrix adjust_probs(const Matrix& probs, const ClassPriors& priors) {
    if (probs.cols() != priors.size())
        throw DimensionError("adjust_probs: class count mismatch");
    Vector w1(priors.size()), w0(priors.size());
    for (Index c = 0; c < priors.size(); ++c) {
        const double p1 = priors.pi1[c];
        const double p0 = priors.pi0[c];
        if (!(p1 > 0.0 && p1 < 1.0) || !(p0 > 0.0 && p0 < 1.0))
            throw DomainError("adjust_probs: degenerate prior for class " + std::to_string(c));
        w1[c] = priors.la_tau == 1.0 ? p1 : std::pow(p1, priors.la_tau);
        w0[c] = priors.la_tau == 1.0 ? p0 : std::pow(p0, priors.la_tau);
    }
    Matrix out(probs.rows(), probs.cols());
    for (Index i = 0; i < probs.rows(); ++i)
        for (Index c = 0; c < probs.cols(); ++c) {
            const double y = probs(i, c);
            const double num = y * w1[c];
            out(i, c) = num / (num + (1.0 - y) * w0[c]);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// A scalar loss and its gradient wrt the pre-sigmoid logits.
struct LossResult {
    double loss = 0.0;
    Matrix grad;
};

/// Normalizer of the partial-class loss: 1/C (as printed) or 1/|active entries of the row|.
enum class LossNormalizer { kClasses, kActive };

namespace detail {

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(what) + ": shape mismatch");
}

inline void check_binary(const Matrix& m, const char* what) {
    for (Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (v != 0.0 && v != 1.0) throw DomainError(std::string(what) + ": entries must be 0 or 1");
    }
}

inline double clamped_log(double p) { return std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp)); }

// Masked BCE over already-adjusted probabilities. Gradient wrt the adjusted
// logit is (p - y) * scale; the logit adjustment is an additive shift so
// this is also the gradient wrt the raw logit.
inline LossResult masked_bce(const Matrix& probs, const Matrix& labels, const Matrix* mask,
                             LossNormalizer normalizer) {
    const Index rows = probs.rows();
    const Index classes = probs.cols();
    LossResult r;
    r.grad = Matrix::Zero(rows, classes);
    if (rows == 0 || classes == 0) return r;
    double total = 0.0;
    for (Index i = 0; i < rows; ++i) {
        double denom = static_cast<double>(classes);
        if (normalizer == LossNormalizer::kActive && mask != nullptr) {
            denom = mask->row(i).sum();
            if (denom == 0.0) continue;
        }
        const double scale = 1.0 / (denom * static_cast<double>(rows));
        double row_sum = 0.0;
        for (Index c = 0; c < classes; ++c) {
            if (mask != nullptr && (*mask)(i, c) == 0.0) continue;
            const double p = probs(i, c);
            const double y = labels(i, c);
            row_sum += y * clamped_log(p) + (1.0 - y) * clamped_log(1.0 - p);
            r.grad(i, c) = (p - y) * scale;
        }
        total -= row_sum * scale;
    }
    r.loss = total;
    return r;
}

}  // namespace detail

/// Binary cross-entropy averaged over classes and batch.
inline LossResult bce_loss(const Matrix& probs, const Matrix& labels) {
    detail::check_same_shape(probs, labels, "bce_loss");
    detail::check_binary(labels, "bce_loss labels");
    return detail::masked_bce(probs, labels, nullptr, LossNormalizer::kClasses);
}

/// Weighted-partial-class loss: BCE on logit-adjusted probabilities,
/// restricted to entries where `active_mask` is 1.
inline LossResult wpc_loss(const Matrix& probs, const Matrix& labels, const Matrix& active_mask,
                           const ClassPriors& priors,
                           LossNormalizer normalizer = LossNormalizer::kClasses) {
    detail::check_same_shape(probs, labels, "wpc_loss");
    detail::check_same_shape(probs, active_mask, "wpc_loss mask");
    detail::check_binary(active_mask, "wpc_loss mask");
    // Labels outside the mask are never read, so only supervised entries are checked.
    for (Index i = 0; i < labels.size(); ++i)
        if (active_mask.data()[i] != 0.0 && labels.data()[i] != 0.0 && labels.data()[i] != 1.0)
            throw DomainError("wpc_loss labels: entries must be 0 or 1");
    if (priors.is_balanced()) return detail::masked_bce(probs, labels, &active_mask, normalizer);
    const Matrix adjusted = adjust_probs(probs, priors);
    return detail::masked_bce(adjusted, labels, &active_mask, normalizer);
}

/// Mean squared error between student and frozen teacher probabilities
/// over the masked entries. The teacher receives no gradient.
inline LossResult mse_consistency_loss(const Matrix& student_probs, const Matrix& teacher_probs,
                                       const Matrix& uncertain_mask) {
    detail::check_same_shape(student_probs, teacher_probs, "mse_consistency_loss");
    detail::check_same_shape(student_probs, uncertain_mask, "mse_consistency_loss mask");
    LossResult r;
    r.grad = Matrix::Zero(student_probs.rows(), student_probs.cols());
    const double count = uncertain_mask.sum();
    if (count == 0.0) return r;
    double total = 0.0;
    for (Index i = 0; i < student_probs.rows(); ++i)
        for (Index c = 0; c < student_probs.cols(); ++c) {
            if (uncertain_mask(i, c) == 0.0) continue;
            const double s = student_probs(i, c);
            const double diff = s - teacher_probs(i, c);
            total += diff * diff;
            r.grad(i, c) = 2.0 * diff * s * (1.0 - s) / count;
        }
    r.loss = total / count;
    return r;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam moments plus hyper-parameters. Weight decay is decoupled (AdamW).
struct OptimizerState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::int64_t step = 0;
    double learning_rate = 3e-5;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerState for_params(const ModelParams& params, double lr, double wd) {
        OptimizerState s;
        s.first_moment = params.zeros_like();
        s.second_moment = params.zeros_like();
        s.learning_rate = lr;
        s.weight_decay = wd;
        return s;
    }
};

/// In-place Adam update; the training loop uses this to avoid copies.
inline void apply_optimizer_step(ModelParams& params, const ModelGrads& grads,
                                 OptimizerState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment))
        throw DimensionError("optimizer_step: shape mismatch");
    if (!grads.finite()) throw TrainingDiverged("optimizer_step: non-finite gradient");
    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = state.learning_rate;
    const double wd = state.weight_decay;
    const double eps = state.epsilon;
    for_each_tensor(
        [&](auto& p, const auto& g, auto& m, auto& v) {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
            auto m_hat = m.array() / correction1;
            auto v_hat = v.array() / correction2;
            p.array() -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p.array());
        },
        params, grads, state.first_moment, state.second_moment);
}

inline std::pair<ModelParams, OptimizerState> optimizer_step(const ModelParams& params,
                                                             const ModelGrads& grads,
                                                             const OptimizerState& state) {
    ModelParams next = params;
    OptimizerState next_state = state;
    apply_optimizer_step(next, grads, next_state);
    return {std::move(next), std::move(next_state)};
}

}  // namespace fedmlp
