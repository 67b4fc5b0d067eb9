#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "format.hpp"
#include "logreg.hpp"
#include "random.hpp"

namespace vidcurate {

struct ForestParams {
    int n_trees = 100;
    int max_depth = 16;
    int mtry = 0;  // 0 = ceil(sqrt(dimension))
    int min_leaf = 2;
    std::uint64_t seed = 0;
    bool bootstrap = true;
    /// Worker threads for fitting; 0 = hardware concurrency. Never affects results.
    unsigned threads = 1;

    bool operator==(const ForestParams& o) const {
        return n_trees == o.n_trees && max_depth == o.max_depth && mtry == o.mtry && min_leaf == o.min_leaf &&
               seed == o.seed && bootstrap == o.bootstrap;
    }
};

/// CART node. Internal nodes route x[feature] <= threshold to `left`; leaves carry the
/// class counts of the training samples that reached them.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::uint32_t count0 = 0;
    std::uint32_t count1 = 0;

    bool is_leaf() const { return feature < 0; }
    double p1() const { return static_cast<double>(count1) / static_cast<double>(count0 + count1); }
    double p0() const { return 1.0 - p1(); }

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int depth() const {
        int best = 0;
        std::vector<std::pair<int, int>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [n, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[static_cast<std::size_t>(n)].is_leaf()) {
                stack.emplace_back(nodes[static_cast<std::size_t>(n)].left, d + 1);
                stack.emplace_back(nodes[static_cast<std::size_t>(n)].right, d + 1);
            }
        }
        return best;
    }

    const TreeNode& leaf_for(std::span<const double> x) const {
        const TreeNode* n = &nodes.front();
        while (!n->is_leaf())
            n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
        return *n;
    }

    bool operator==(const Tree&) const = default;
};

struct ForestModel {
    std::vector<Tree> trees;
    ForestParams params;
    std::size_t dimension = 0;
};

namespace forest {

/// Row-major dense copy of the training features.
struct DenseRows {
    std::size_t n = 0, d = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * d + j]; }
};

inline DenseRows densify(std::span<const FeatureVector> X, std::size_t dim) {
    DenseRows m{X.size(), dim, std::vector<double>(X.size() * dim, 0.0)};
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].dimension() != dim) throw DataError("inconsistent feature dimensions in training data");
        for (const auto& [j, w] : X[i].entries()) m.values[i * dim + j] = w;
    }
    return m;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // sum over children of (n0^2 + n1^2) / n; larger = lower weighted Gini
};

/// Weighted-Gini optimal split over `features` (ascending), honouring min_leaf.
/// Ties go to the lower feature index, then the lower threshold.
inline Split best_split(const DenseRows& X, std::span<const int> y, std::span<const std::size_t> samples,
                        std::span<const std::size_t> features, int min_leaf) {
    Split best;
    const std::size_t n = samples.size();
    std::uint32_t total1 = 0;
    for (auto s : samples) total1 += static_cast<std::uint32_t>(y[s]);
    const std::uint32_t total0 = static_cast<std::uint32_t>(n) - total1;
    std::vector<std::pair<double, int>> column(n);
    for (std::size_t f : features) {
        for (std::size_t k = 0; k < n; ++k) column[k] = {X.at(samples[k], f), y[samples[k]]};
        std::sort(column.begin(), column.end());
        std::uint32_t l0 = 0, l1 = 0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            (column[k].second ? l1 : l0)++;
            if (column[k].first == column[k + 1].first) continue;
            const std::size_t nl = k + 1, nr = n - nl;
            if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
            const double r0 = total0 - l0, r1 = total1 - l1;
            const double score = (double(l0) * l0 + double(l1) * l1) / double(nl) + (r0 * r0 + r1 * r1) / double(nr);
            if (best.feature < 0 || score > best.score) {
                double threshold = 0.5 * (column[k].first + column[k + 1].first);
                if (!(threshold < column[k + 1].first)) threshold = column[k].first;
                best = {static_cast<int>(f), threshold, score};
            }
        }
    }
    return best;
}

inline Tree grow_tree(const DenseRows& X, std::span<const int> y, const ForestParams& p, int mtry, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> samples(X.n);
    if (p.bootstrap)
        for (auto& s : samples) s = static_cast<std::size_t>(rng.uniform_index(X.n));
    else
        std::iota(samples.begin(), samples.end(), std::size_t{0});

    Tree tree;
    struct Pending {
        int node;
        std::vector<std::size_t> samples;
        int depth;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(samples), 0});
    std::vector<std::size_t> all_features(X.d);
    std::iota(all_features.begin(), all_features.end(), std::size_t{0});

    while (!stack.empty()) {
        Pending cur = std::move(stack.back());
        stack.pop_back();
        std::uint32_t c1 = 0;
        for (auto s : cur.samples) c1 += static_cast<std::uint32_t>(y[s]);
        const auto c0 = static_cast<std::uint32_t>(cur.samples.size()) - c1;
        TreeNode& node = tree.nodes[static_cast<std::size_t>(cur.node)];
        node.count0 = c0;
        node.count1 = c1;
        if (c0 == 0 || c1 == 0 || cur.depth >= p.max_depth ||
            cur.samples.size() < 2 * static_cast<std::size_t>(p.min_leaf))
            continue;

        // partial Fisher-Yates draw of mtry features, then scan them in ascending order
        std::vector<std::size_t> feats = all_features;
        for (std::size_t k = 0; k < static_cast<std::size_t>(mtry); ++k) {
            const auto j = k + static_cast<std::size_t>(rng.uniform_index(feats.size() - k));
            std::swap(feats[k], feats[j]);
        }
        feats.resize(static_cast<std::size_t>(mtry));
        std::sort(feats.begin(), feats.end());

        const Split split = best_split(X, y, cur.samples, feats, p.min_leaf);
        if (split.feature < 0) continue;

        std::vector<std::size_t> left, right;
        for (auto s : cur.samples)
            (X.at(s, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(s);
        const int li = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        TreeNode& parent = tree.nodes[static_cast<std::size_t>(cur.node)];
        parent.feature = split.feature;
        parent.threshold = split.threshold;
        parent.left = li;
        parent.right = li + 1;
        // right pushed first so the left subtree is expanded first (node order is deterministic either way)
        stack.push_back({li + 1, std::move(right), cur.depth + 1});
        stack.push_back({li, std::move(left), cur.depth + 1});
    }
    return tree;
}

inline int resolve_mtry(const ForestParams& p, std::size_t dim) {
    const int mtry = p.mtry > 0 ? p.mtry : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
    return std::max(1, mtry);
}

}  // namespace forest

/// Random forest of Gini CART trees. Tree i is grown from seed mix_seed(params.seed, i),
/// so the result is independent of `params.threads`.
inline ForestModel fit_forest(std::span<const FeatureVector> X, std::span<const int> y, const ForestParams& params = {}) {
    logreg::check_training_set(X, y);
    if (params.n_trees < 1) throw UsageError("n_trees must be >= 1");
    if (params.max_depth < 0) throw UsageError("max_depth must be >= 0");
    if (params.min_leaf < 1) throw UsageError("min_leaf must be >= 1");
    const std::size_t dim = X.front().dimension();
    if (dim == 0) throw DataError("forest needs at least one feature");
    if (params.mtry > static_cast<int>(dim)) throw UsageError("mtry exceeds feature dimension");
    const auto rows = forest::densify(X, dim);
    const int mtry = forest::resolve_mtry(params, dim);

    ForestModel model;
    model.params = params;
    model.dimension = dim;
    model.trees.resize(static_cast<std::size_t>(params.n_trees));
    unsigned workers = params.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : params.threads;
    workers = std::min<unsigned>(workers, static_cast<unsigned>(params.n_trees));
    auto grow_range = [&](unsigned w) {
        for (std::size_t t = w; t < model.trees.size(); t += workers)
            model.trees[t] = forest::grow_tree(rows, y, params, mtry, mix_seed(params.seed, t));
    };
    if (workers <= 1) {
        grow_range(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(grow_range, w);
    }
    return model;
}

inline ForestModel fit_forest(const std::vector<FeatureVector>& X, const std::vector<int>& y,
                              const ForestParams& params = {}) {
    return fit_forest(std::span<const FeatureVector>(X), std::span<const int>(y), params);
}

/// Mean over trees of the positive-class leaf frequency.
inline double predict_proba_forest(const ForestModel& model, const FeatureVector& x) {
    if (x.dimension() != model.dimension)
        throw UsageError("feature dimension " + std::to_string(x.dimension()) + " does not match model dimension " +
                         std::to_string(model.dimension));
    if (model.trees.empty()) throw StateError("forest has no trees");
    const auto dense = x.to_dense();
    double sum = 0.0;
    for (const auto& t : model.trees) sum += t.leaf_for(dense).p1();
    return sum / static_cast<double>(model.trees.size());
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_forest(std::ostream& out, const ForestModel& m) {
    const auto& p = m.params;
    out << "vidcurate-forest 1\n";
    out << "dimension " << m.dimension << '\n';
    out << "params " << p.n_trees << ' ' << p.max_depth << ' ' << p.mtry << ' ' << p.min_leaf << ' ' << p.seed << ' '
        << (p.bootstrap ? 1 : 0) << '\n';
    for (const auto& t : m.trees) {
        out << "tree " << t.nodes.size() << '\n';
        for (const auto& n : t.nodes)
            out << n.feature << ' ' << fmt_exact(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.count0 << ' '
                << n.count1 << '\n';
    }
}

inline ForestModel read_forest(std::istream& in) {
    detail::expect_word(in, "vidcurate-forest");
    int version = 0;
    if (!(in >> version) || version != 1) throw DataError("unsupported forest model version");
    ForestModel m;
    detail::expect_word(in, "dimension");
    in >> m.dimension;
    detail::expect_word(in, "params");
    int bootstrap = 1;
    in >> m.params.n_trees >> m.params.max_depth >> m.params.mtry >> m.params.min_leaf >> m.params.seed >> bootstrap;
    if (!in) throw DataError("forest model: bad params line");
    m.params.bootstrap = bootstrap != 0;
    m.trees.resize(static_cast<std::size_t>(m.params.n_trees));
    for (auto& t : m.trees) {
        detail::expect_word(in, "tree");
        std::size_t count = 0;
        if (!(in >> count) || count == 0) throw DataError("forest model: bad tree header");
        t.nodes.resize(count);
        for (auto& n : t.nodes) {
            in >> n.feature;
            n.threshold = detail::read_double(in);
            in >> n.left >> n.right >> n.count0 >> n.count1;
            if (!in) throw DataError("forest model: truncated node");
            if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(std::max(n.left, n.right)) >= count))
                throw DataError("forest model: child index out of range");
        }
    }
    return m;
}

inline std::string serialize(const ForestModel& m) {
    std::ostringstream os;
    write_forest(os, m);
    return os.str();
}

}  // namespace vidcurate
