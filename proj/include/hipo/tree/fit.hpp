#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "hipo/core/error.hpp"
#include "hipo/core/matrix_view.hpp"
#include "hipo/core/random.hpp"
#include "hipo/tree/model.hpp"

namespace hipo::tree {

/// Training rows with every feature column presorted once. Fitting many trees
/// on the same rows (a zoo) reuses the sort.
class TrainingSet {
public:
    TrainingSet(MatrixView x, std::span<const std::uint8_t> y, std::vector<std::size_t> rows)
        : x_(x), rows_(std::move(rows)) {
        if (rows_.empty()) throw InvalidArgument("training set is empty");
        const std::size_t n = rows_.size(), p = x.cols;
        y_.resize(n);
        values_.resize(n * p);
        for (std::size_t i = 0; i < n; ++i) {
            y_[i] = y[rows_[i]];
            for (std::size_t f = 0; f < p; ++f) values_[f * n + i] = x(rows_[i], f);
        }
        sorted_.resize(n * p);
        for (std::size_t f = 0; f < p; ++f) {
            auto* o = sorted_.data() + f * n;
            std::iota(o, o + n, 0u);
            const double* v = values_.data() + f * n;
            std::stable_sort(o, o + n, [v](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
        }
        for (auto l : y_) counts_[l]++;
    }

    std::size_t size() const { return rows_.size(); }
    std::size_t features() const { return x_.cols; }
    const std::array<std::uint32_t, 2>& class_counts() const { return counts_; }

    /// Value of feature f for local sample i.
    double value(std::size_t f, std::uint32_t i) const { return values_[f * size() + i]; }
    std::uint8_t label(std::uint32_t i) const { return y_[i]; }
    const std::vector<std::uint32_t>& sorted() const { return sorted_; }

private:
    MatrixView x_;
    std::vector<std::size_t> rows_;
    std::vector<std::uint8_t> y_;
    std::vector<double> values_;          // column-major, feature-major
    std::vector<std::uint32_t> sorted_;   // per feature, local sample ids by value
    std::array<std::uint32_t, 2> counts_{};
};

namespace detail {

struct SplitCandidate {
    bool valid = false;
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;  // sum over children of (sum_c count_c^2) / n_child; larger is purer
};

inline double child_score(std::uint32_t a, std::uint32_t b) {
    const double n = double(a) + double(b);
    return n > 0 ? (double(a) * a + double(b) * b) / n : 0.0;
}

// Ties within 1e-12 (relative) go to the lower feature index, then the lower threshold.
inline bool better(const SplitCandidate& c, const SplitCandidate& best) {
    if (!best.valid) return true;
    const double tol = 1e-12 * std::max(1.0, std::abs(best.score));
    if (c.score > best.score + tol) return true;
    if (c.score < best.score - tol) return false;
    if (c.feature != best.feature) return c.feature < best.feature;
    return c.threshold < best.threshold;
}

}  // namespace detail

/// Greedy CART on Gini impurity.
///
/// At each node features are visited in a seeded random order until
/// `max_features` non-constant ones have been evaluated. The best splitter
/// tries every midpoint between consecutive distinct values; the random
/// splitter draws one threshold uniformly in the node's observed range of the
/// feature. The best candidate over the visited features wins. A node becomes
/// a leaf at max_depth, when pure, when it holds fewer than 2 * min_samples_leaf
/// samples, or when no visited feature admits a split leaving min_samples_leaf
/// samples on each side.
inline TreeModel fit_tree(const TrainingSet& data, const TreeHyperparams& hp) {
    if (hp.max_depth < 0) throw InvalidArgument("max_depth must be >= 0");
    if (hp.min_samples_leaf < 1) throw InvalidArgument("min_samples_leaf must be >= 1");
    const std::size_t n = data.size(), p = data.features();
    if (data.class_counts()[0] == 0 && data.class_counts()[1] == 0) throw InvalidArgument("empty training set");
    const std::size_t max_features =
        hp.max_features <= 0 ? p : std::min<std::size_t>(static_cast<std::size_t>(hp.max_features), p);
    const auto msl = static_cast<std::uint32_t>(hp.min_samples_leaf);

    auto rng = make_rng(hp.seed, {0x74ee});
    std::vector<std::uint32_t> work = data.sorted();  // feature-major, partitioned in place
    std::vector<std::uint8_t> goes_left(n, 0);
    std::vector<std::uint32_t> scratch(n);
    std::vector<std::size_t> feature_order(p);
    std::iota(feature_order.begin(), feature_order.end(), std::size_t{0});

    TreeModel tree;
    tree.hyperparams = hp;
    tree.n_features = p;

    struct Pending {
        int node;
        std::size_t begin, end;
        int depth;
    };
    auto make_node = [&](std::size_t b, std::size_t e) {
        Node nd;
        // feature 0's slice holds exactly the node's samples
        for (std::size_t i = b; i < e; ++i) nd.counts[data.label(work[i])]++;
        nd.label = majority(nd.counts);
        tree.nodes.push_back(nd);
        return static_cast<int>(tree.nodes.size() - 1);
    };

    std::vector<Pending> stack;
    stack.push_back({make_node(0, n), 0, n, 0});
    while (!stack.empty()) {
        Pending cur = stack.back();
        stack.pop_back();
        const auto counts = tree.nodes[cur.node].counts;
        const std::uint32_t m = counts[0] + counts[1];
        if (cur.depth >= hp.max_depth || counts[0] == 0 || counts[1] == 0 || m < 2 * msl) continue;

        detail::SplitCandidate best;
        std::size_t visited = 0;
        for (std::size_t k = 0; k < p && visited < max_features; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, p - 1);
            std::swap(feature_order[k], feature_order[pick(rng)]);
            const std::size_t f = feature_order[k];
            const std::uint32_t* ord = work.data() + f * n + cur.begin;
            const double lo = data.value(f, ord[0]);
            const double hi = data.value(f, ord[m - 1]);
            if (!(hi > lo)) continue;  // constant in this node
            ++visited;

            if (hp.splitter == Splitter::best) {
                std::array<std::uint32_t, 2> left{};
                for (std::uint32_t i = 0; i + 1 < m; ++i) {
                    left[data.label(ord[i])]++;
                    const std::uint32_t nl = i + 1;
                    const double v = data.value(f, ord[i]), vn = data.value(f, ord[i + 1]);
                    if (!(vn > v) || nl < msl || m - nl < msl) continue;
                    detail::SplitCandidate c;
                    c.valid = true;
                    c.feature = static_cast<int>(f);
                    c.threshold = v + (vn - v) / 2.0;
                    if (!(c.threshold < vn)) c.threshold = v;
                    c.score = detail::child_score(left[0], left[1]) +
                              detail::child_score(counts[0] - left[0], counts[1] - left[1]);
                    if (detail::better(c, best)) best = c;
                }
            } else {
                double thr = std::uniform_real_distribution<double>(lo, hi)(rng);
                if (!(thr < hi)) thr = lo;
                std::array<std::uint32_t, 2> left{};
                std::uint32_t nl = 0;
                while (nl < m && data.value(f, ord[nl]) <= thr) left[data.label(ord[nl++])]++;
                if (nl < msl || m - nl < msl) continue;
                detail::SplitCandidate c;
                c.valid = true;
                c.feature = static_cast<int>(f);
                c.threshold = thr;
                c.score = detail::child_score(left[0], left[1]) +
                          detail::child_score(counts[0] - left[0], counts[1] - left[1]);
                if (detail::better(c, best)) best = c;
            }
        }
        if (!best.valid) continue;

        // Partition every feature's slice, keeping each sorted.
        const std::uint32_t* ord_best = work.data() + std::size_t(best.feature) * n + cur.begin;
        std::uint32_t n_left = 0;
        for (std::uint32_t i = 0; i < m; ++i) {
            const bool l = data.value(best.feature, ord_best[i]) <= best.threshold;
            goes_left[ord_best[i]] = l;
            n_left += l;
        }
        for (std::size_t f = 0; f < p; ++f) {
            std::uint32_t* ord = work.data() + f * n + cur.begin;
            std::uint32_t li = 0, ri = n_left;
            for (std::uint32_t i = 0; i < m; ++i) scratch[goes_left[ord[i]] ? li++ : ri++] = ord[i];
            std::copy(scratch.begin(), scratch.begin() + m, ord);
        }
        Node& parent = tree.nodes[cur.node];
        parent.feature = best.feature;
        parent.threshold = best.threshold;
        const int l = make_node(cur.begin, cur.begin + n_left);
        const int r = make_node(cur.begin + n_left, cur.end);
        tree.nodes[cur.node].left = l;
        tree.nodes[cur.node].right = r;
        stack.push_back({r, cur.begin + n_left, cur.end, cur.depth + 1});
        stack.push_back({l, cur.begin, cur.begin + n_left, cur.depth + 1});
    }
    return tree;
}

inline TreeModel fit_tree(MatrixView x, std::span<const std::uint8_t> y, std::vector<std::size_t> rows,
                          const TreeHyperparams& hp) {
    return fit_tree(TrainingSet(x, y, std::move(rows)), hp);
}

}  // namespace hipo::tree
