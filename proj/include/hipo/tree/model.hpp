#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hipo/core/error.hpp"

namespace hipo::tree {

enum class Splitter { best, random };

inline const char* to_string(Splitter s) { return s == Splitter::best ? "best" : "random"; }

inline Splitter splitter_from_string(const std::string& s) {
    if (s == "best") return Splitter::best;
    if (s == "random") return Splitter::random;
    throw InvalidArgument("unknown splitter '" + s + "'");
}

struct TreeHyperparams {
    int max_depth = 3;
    int min_samples_leaf = 1;
    int max_features = 0;  // 0 means every feature
    Splitter splitter = Splitter::best;
    std::uint64_t seed = 0;
};

/// Leaf when `feature < 0`. Samples with x[feature] <= threshold go left.
struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<std::uint32_t, 2> counts{};  // training samples per class reaching the node
    std::uint8_t label = 0;

    bool is_leaf() const { return feature < 0; }
    std::uint32_t samples() const { return counts[0] + counts[1]; }
};

/// Majority label; ties go to class 0.
inline std::uint8_t majority(const std::array<std::uint32_t, 2>& c) { return c[1] > c[0] ? 1 : 0; }

/// Binary decision tree. Node 0 is the root.
struct TreeModel {
    std::vector<Node> nodes;
    TreeHyperparams hyperparams;
    std::size_t n_features = 0;

    std::size_t node_count() const { return nodes.size(); }

    std::size_t leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes) n += nd.is_leaf();
        return n;
    }

    int depth() const {
        if (nodes.empty()) return 0;
        int best = 0;
        std::vector<std::pair<int, int>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[i].is_leaf()) {
                stack.push_back({nodes[i].left, d + 1});
                stack.push_back({nodes[i].right, d + 1});
            }
        }
        return best;
    }

    std::size_t leaf_index(std::span<const double> x) const {
        check_dims(x);
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return i;
    }

    std::uint8_t predict(std::span<const double> x) const { return nodes[leaf_index(x)].label; }

    /// Node indices from the root to the predicting leaf, both included.
    std::vector<std::size_t> path(std::span<const double> x) const {
        check_dims(x);
        std::vector<std::size_t> out{0};
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
            out.push_back(i);
        }
        return out;
    }

private:
    void check_dims(std::span<const double> x) const {
        if (nodes.empty()) throw StateError("tree has no nodes");
        if (x.size() != n_features)
            throw InvalidArgument("feature vector has " + std::to_string(x.size()) + " entries, tree expects " +
                                  std::to_string(n_features));
    }
};

/// Single-leaf tree predicting the majority of `counts`.
inline TreeModel constant_tree(std::size_t n_features, std::array<std::uint32_t, 2> counts) {
    TreeModel t;
    t.n_features = n_features;
    Node leaf;
    leaf.counts = counts;
    leaf.label = majority(counts);
    t.nodes.push_back(leaf);
    return t;
}

}  // namespace hipo::tree
