#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "vidcurate/forest.hpp"

using namespace vidcurate;

namespace {

double gini(double c0, double c1) {
    const double n = c0 + c1;
    return n == 0 ? 0.0 : 1.0 - (c0 / n) * (c0 / n) - (c1 / n) * (c1 / n);
}

/// Weighted Gini after splitting 1-D data at `t` (x <= t goes left).
double split_gini(const std::vector<double>& x, const std::vector<int>& y, double t) {
    double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) (x[i] <= t ? (y[i] ? l1 : l0) : (y[i] ? r1 : r0)) += 1;
    const double n = static_cast<double>(x.size());
    return (l0 + l1) / n * gini(l0, l1) + (r0 + r1) / n * gini(r0, r1);
}

double best_gini(const std::vector<double>& x, const std::vector<int>& y) {
    std::set<double> values(x.begin(), x.end());
    double best = 1.0;
    for (auto it = values.begin(); std::next(it) != values.end(); ++it)
        best = std::min(best, split_gini(x, y, 0.5 * (*it + *std::next(it))));
    return best;
}

ForestParams stump() {
    ForestParams p;
    p.n_trees = 1;
    p.max_depth = 1;
    p.min_leaf = 1;
    p.bootstrap = false;
    return p;
}

Tree leaf_stump(std::uint32_t l0, std::uint32_t l1, std::uint32_t r0, std::uint32_t r1) {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = 0;
    t.nodes[0].threshold = 0.0;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].count0 = l0;
    t.nodes[1].count1 = l1;
    t.nodes[2].count0 = r0;
    t.nodes[2].count1 = r1;
    return t;
}

}  // namespace

TEST(Forest, StumpOnSeparableData) {
    const std::vector<double> x{0.3, -1.2, 2.0, 0.9, 3.5, -0.4};
    const std::vector<int> y{0, 0, 1, 0, 1, 0};
    const auto m = fit_forest(oracle::to_vectors({{0.3}, {-1.2}, {2.0}, {0.9}, {3.5}, {-0.4}}), y, stump());
    const auto& root = m.trees[0].nodes[0];
    ASSERT_FALSE(root.is_leaf());
    EXPECT_GT(root.threshold, 0.9);
    EXPECT_LT(root.threshold, 2.0);
    EXPECT_EQ(split_gini(x, y, root.threshold), best_gini(x, y));
    // both children are pure, so they are leaves
    EXPECT_TRUE(m.trees[0].nodes[1].is_leaf());
    EXPECT_EQ(m.trees[0].nodes[1].count1, 0u);
    EXPECT_EQ(m.trees[0].nodes[2].count0, 0u);
}

TEST(Forest, StumpMatchesExhaustiveGiniOracle) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng.uniform_index(20);
        std::vector<double> x(n);
        std::vector<int> y(n);
        oracle::Matrix rows;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng.uniform_index(8));  // coarse values force ties
            y[i] = static_cast<int>(rng.bernoulli(0.5));
            rows.push_back({x[i]});
        }
        y[0] = 0;
        y[1] = 1;
        if (std::set<double>(x.begin(), x.end()).size() < 2) continue;
        const auto m = fit_forest(oracle::to_vectors(rows), y, stump());
        const auto& root = m.trees[0].nodes[0];
        const double want = best_gini(x, y);
        if (root.is_leaf()) {
            ADD_FAILURE() << "trial " << trial << ": no split";
            continue;
        }
        EXPECT_NEAR(split_gini(x, y, root.threshold), want, 1e-12) << "trial " << trial;
    }
}

TEST(Forest, DeterministicAcrossRunsAndThreads) {
    const auto [X, y] = oracle::xor_data(200, 3);
    ForestParams p;
    p.n_trees = 30;
    p.seed = 42;
    const auto a = fit_forest(X, y, p);
    const auto b = fit_forest(X, y, p);
    p.threads = 4;
    const auto c = fit_forest(X, y, p);
    EXPECT_EQ(a.trees, b.trees);
    EXPECT_EQ(a.trees, c.trees);
    EXPECT_EQ(serialize(a), serialize(c));
    const auto [T, ty] = oracle::xor_data(50, 4);
    for (const auto& x : T) EXPECT_EQ(predict_proba_forest(a, x), predict_proba_forest(c, x));

    p.seed = 43;
    EXPECT_NE(fit_forest(X, y, p).trees, a.trees);
}

TEST(Forest, LearnsXor) {
    const auto [X, y] = oracle::xor_data(400, 11);
    const std::size_t n_train = 300;
    ForestParams p;
    p.seed = 1;
    const auto m = fit_forest(std::span(X).first(n_train), std::span<const int>(y).first(n_train), p);
    std::size_t correct = 0;
    for (std::size_t i = n_train; i < X.size(); ++i) correct += (predict_proba_forest(m, X[i]) >= 0.5) == (y[i] == 1);
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(X.size() - n_train), 0.9);
}

TEST(Forest, PredictionAveragesLeafFrequencies) {
    ForestModel m;
    m.dimension = 1;
    // leaves hit by x = -1: 3/4, 2/4 and 5/5, so the mean is (0.75 + 0.5 + 1) / 3 = 0.75
    m.trees = {leaf_stump(1, 3, 0, 1), leaf_stump(2, 2, 1, 0), leaf_stump(0, 5, 4, 0)};
    m.params.n_trees = 3;
    const auto left = FeatureVector::from_dense(std::vector<double>{-1.0});
    const auto right = FeatureVector::from_dense(std::vector<double>{1.0});
    EXPECT_DOUBLE_EQ(predict_proba_forest(m, left), 0.75);
    EXPECT_DOUBLE_EQ(predict_proba_forest(m, right), 1.0 / 3.0);
    std::reverse(m.trees.begin(), m.trees.end());
    EXPECT_DOUBLE_EQ(predict_proba_forest(m, left), 0.75);

    m.trees = {leaf_stump(0, 1, 0, 1), leaf_stump(0, 2, 0, 1)};
    EXPECT_EQ(predict_proba_forest(m, left), 1.0);
    m.trees = {leaf_stump(0, 1, 0, 1), leaf_stump(3, 0, 0, 1)};
    EXPECT_EQ(predict_proba_forest(m, left), 0.5);
    EXPECT_THROW(predict_proba_forest(m, FeatureVector(2)), UsageError);
}

TEST(Forest, Errors) {
    const auto X = oracle::to_vectors({{1.0}, {2.0}});
    EXPECT_THROW(fit_forest(X, std::vector<int>{0, 0}), DataError);
    ForestParams p;
    p.n_trees = 0;
    EXPECT_THROW(fit_forest(X, std::vector<int>{0, 1}, p), UsageError);
    p = {};
    p.mtry = 2;
    EXPECT_THROW(fit_forest(X, std::vector<int>{0, 1}, p), UsageError);
}

TEST(Forest, SerializationRoundTrip) {
    const auto [X, y] = oracle::xor_data(80, 9);
    ForestParams p;
    p.n_trees = 5;
    p.seed = 8;
    const auto m = fit_forest(X, y, p);
    std::istringstream in(serialize(m));
    const auto r = read_forest(in);
    EXPECT_EQ(r.trees, m.trees);
    EXPECT_EQ(r.params, m.params);
    EXPECT_EQ(serialize(r), serialize(m));
}
