#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedmlp/metrics.hpp"
#include "oracles.hpp"

using namespace fedmlp;

namespace {
Matrix column(std::initializer_list<double> v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}
}  // namespace

TEST(BalancedAccuracy, PerfectAndConstant) {
    const Matrix y = column({1, 0, 1, 0, 0});
    EXPECT_EQ(balanced_accuracy(y, y).macro, 1.0);
    const auto b = balanced_accuracy(Matrix::Constant(5, 1, 0.01), y);
    EXPECT_EQ(b.macro, 0.5);
    EXPECT_EQ(b.sensitivity[0], 0.0);
    EXPECT_EQ(b.specificity[0], 1.0);
}

TEST(BalancedAccuracy, HandConfusion) {
    const auto b = balanced_accuracy(column({0.9, 0.6, 0.4, 0.1}), column({1, 0, 1, 0}), 0.5);
    EXPECT_EQ(b.sensitivity[0], 0.5);
    EXPECT_EQ(b.specificity[0], 0.5);
    EXPECT_EQ(b.macro, 0.5);
}

TEST(BalancedAccuracy, SingleLabelClassSkipped) {
    Matrix p(3, 2), y(3, 2);
    p << 0.9, 0.2, 0.1, 0.8, 0.7, 0.3;
    y << 1, 0, 0, 0, 1, 0;
    const auto b = balanced_accuracy(p, y);
    EXPECT_EQ(b.skipped, std::vector<int>{1});
    EXPECT_TRUE(std::isnan(b.per_class[1]));
    EXPECT_EQ(b.macro, 1.0);
    EXPECT_THROW(balanced_accuracy(Matrix(0, 2), Matrix(0, 2)), DomainError);
}

TEST(BalancedAccuracy, MatchesOracle) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 50; ++t) {
        const auto p = oracle::random_grid(rng, 80, 4, 0, 1);
        const auto y = oracle::random_binary(rng, 80, 4, 0.3);
        EXPECT_NEAR(balanced_accuracy(oracle::to_matrix(p), oracle::to_matrix(y)).macro,
                    oracle::balanced_accuracy(p, y, 0.5), 1e-12);
    }
}

TEST(Auc, HandCases) {
    const std::vector<double> y{1, 0, 0, 1};
    EXPECT_EQ(binary_auc(std::vector<double>{0.9, 0.1, 0.2, 0.8}, y), 1.0);
    EXPECT_EQ(binary_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, y), 0.5);
    EXPECT_EQ(binary_auc(std::vector<double>{0.8, 0.8, 0.3}, std::vector<double>{1, 0, 0}), 0.75);
    EXPECT_TRUE(std::isnan(binary_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{0, 0})));
}

TEST(Auc, MatchesPairwiseOracle) {
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> len(2, 200);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::round(u(rng) * 20) / 20;
            y[i] = u(rng) < 0.3 ? 1 : 0;
        }
        const double want = oracle::auc(s, y);
        const double got = binary_auc(s, y);
        if (std::isnan(want)) {
            EXPECT_TRUE(std::isnan(got));
            continue;
        }
        EXPECT_NEAR(got, want, 1e-12);
    }
}

TEST(AveragePrecision, HandCases) {
    EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.1}, std::vector<double>{1, 1, 0}), 1.0);
    EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<double>{0, 1, 0, 0}), 0.5);
    EXPECT_TRUE(std::isnan(average_precision(std::vector<double>{0.3}, std::vector<double>{0})));
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(2, 200);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        const auto n = static_cast<std::size_t>(len(rng));
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::round(u(rng) * 30) / 30;
            y[i] = u(rng) < 0.25 ? 1 : 0;
        }
        const double want = oracle::average_precision(s, y);
        const double got = average_precision(s, y);
        if (std::isnan(want)) {
            EXPECT_TRUE(std::isnan(got));
            continue;
        }
        EXPECT_NEAR(got, want, 1e-12);
    }
}

TEST(Evaluate, MacroSkipsUnscorableClasses) {
    Matrix p(4, 2), y(4, 2);
    p << 0.9, 0.1, 0.2, 0.2, 0.7, 0.3, 0.4, 0.6;
    y << 1, 0, 0, 0, 1, 0, 0, 0;
    const auto r = evaluate(p, y);
    EXPECT_EQ(r.auc, 1.0);
    EXPECT_EQ(r.map, 1.0);
    EXPECT_TRUE(std::isnan(r.per_class_auc[1]));
    EXPECT_TRUE(std::isnan(r.per_class_ap[1]));
}

TEST(Audit, EmptyLedger) {
    PseudoLabelLedger l(3, {1});
    const auto a = pseudo_label_audit(l, Matrix::Zero(3, 2));
    EXPECT_EQ(a.coverage(), 0.0);
    EXPECT_EQ(a.overall.tagged(), 0u);
    EXPECT_TRUE(std::isnan(a.overall.precision()));
}

TEST(Audit, CorrectAndAdversarial) {
    Matrix truth(4, 2);
    truth << 1, 0, 1, 1, 0, 0, 0, 1;
    PseudoLabelLedger good(4, {1});
    for (std::size_t i = 0; i < 4; ++i) good.tag(i, 1, static_cast<int>(truth(static_cast<Index>(i), 1)), 51, 0.0);
    EXPECT_EQ(pseudo_label_audit(good, truth).overall.precision(), 1.0);
    EXPECT_EQ(pseudo_label_audit(good, truth).coverage(), 1.0);

    PseudoLabelLedger bad(4, {1});
    bad.tag(0, 1, 0, 51, 0.8);
    bad.tag(1, 1, 1, 51, -0.6);
    bad.tag(2, 1, 0, 52, 0.4);
    bad.tag(3, 1, 0, 53, 0.1);  // wrong: truth is 1
    const auto a = pseudo_label_audit(bad, truth);
    EXPECT_EQ(a.overall.precision(), 0.75);
    EXPECT_EQ(a.per_class[1].recall1(), 0.5);
}
