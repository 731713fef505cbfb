#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hipo/core/matrix_view.hpp"
#include "hipo/tree/model.hpp"

namespace hipo::tree {

/// Drops nodes unreachable from the root and renumbers in pre-order.
inline TreeModel compact(const TreeModel& t) {
    TreeModel out;
    out.hyperparams = t.hyperparams;
    out.n_features = t.n_features;
    if (t.nodes.empty()) return out;
    std::vector<std::pair<int, int>> stack{{0, -1}};  // (old index, new parent slot: 2*parent + side)
    while (!stack.empty()) {
        auto [old, slot] = stack.back();
        stack.pop_back();
        const int idx = static_cast<int>(out.nodes.size());
        out.nodes.push_back(t.nodes[old]);
        if (slot >= 0) (slot % 2 == 0 ? out.nodes[slot / 2].left : out.nodes[slot / 2].right) = idx;
        if (!t.nodes[old].is_leaf()) {
            stack.push_back({t.nodes[old].right, 2 * idx + 1});
            stack.push_back({t.nodes[old].left, 2 * idx});
        }
    }
    return out;
}

/// Validation-guided post-pruning: any internal node whose two children are
/// leaves is collapsed into a leaf (majority of its training counts) when the
/// collapse does not lower accuracy on the validation rows. Sweeps repeat until
/// no node qualifies.
inline TreeModel prune(const TreeModel& tree, MatrixView x, std::span<const std::uint8_t> y,
                       std::span<const std::size_t> rows) {
    TreeModel t = tree;
    if (t.nodes.size() <= 1) return t;
    // validation class counts reaching each node
    std::vector<std::array<std::uint32_t, 2>> seen(t.nodes.size());
    for (auto r : rows) {
        std::size_t i = 0;
        seen[0][y[r]]++;
        while (!t.nodes[i].is_leaf()) {
            i = x(r, t.nodes[i].feature) <= t.nodes[i].threshold ? t.nodes[i].left : t.nodes[i].right;
            seen[i][y[r]]++;
        }
    }
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t k = t.nodes.size(); k-- > 0;) {
            Node& nd = t.nodes[k];
            if (nd.is_leaf()) continue;
            const Node& l = t.nodes[nd.left];
            const Node& r = t.nodes[nd.right];
            if (!l.is_leaf() || !r.is_leaf()) continue;
            const std::uint32_t before = seen[nd.left][l.label] + seen[nd.right][r.label];
            const std::uint8_t merged = majority(nd.counts);
            const std::uint32_t after = seen[k][merged];
            if (after >= before) {
                nd.feature = -1;
                nd.threshold = 0.0;
                nd.left = nd.right = -1;
                nd.label = merged;
                changed = true;
            }
        }
    }
    return compact(t);
}

inline double accuracy(const TreeModel& t, MatrixView x, std::span<const std::uint8_t> y,
                       std::span<const std::size_t> rows) {
    if (rows.empty()) return 0.0;
    std::size_t ok = 0;
    for (auto r : rows) ok += t.predict(x.row(r)) == y[r];
    return double(ok) / double(rows.size());
}

}  // namespace hipo::tree
