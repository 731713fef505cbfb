#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "hipo/core/error.hpp"
#include "hipo/core/matrix_view.hpp"
#include "hipo/tree/model.hpp"

namespace hipo::tree {

/// The four interpretability proxies. Lower is more interpretable.
struct ProxyScores {
    double mean_path_length = 0.0;
    double mean_distinct_features = 0.0;
    double node_count = 1.0;
    double nonzero_features = 0.0;

    bool operator==(const ProxyScores&) const = default;
};

enum class Proxy { path_length = 0, distinct_features = 1, node_count = 2, nonzero_features = 3 };
inline constexpr std::array<Proxy, 4> kAllProxies = {Proxy::path_length, Proxy::distinct_features,
                                                     Proxy::node_count, Proxy::nonzero_features};

inline const char* to_string(Proxy p) {
    switch (p) {
        case Proxy::path_length: return "path_length";
        case Proxy::distinct_features: return "distinct_features";
        case Proxy::node_count: return "node_count";
        case Proxy::nonzero_features: return "nonzero_features";
    }
    return "?";
}

inline Proxy proxy_from_string(const std::string& s) {
    for (auto p : kAllProxies)
        if (s == to_string(p)) return p;
    throw InvalidArgument("unknown proxy '" + s + "'");
}

/// Point-independent proxies depend only on the tree.
inline bool is_local(Proxy p) { return p == Proxy::path_length || p == Proxy::distinct_features; }

inline double get(const ProxyScores& s, Proxy p) {
    switch (p) {
        case Proxy::path_length: return s.mean_path_length;
        case Proxy::distinct_features: return s.mean_distinct_features;
        case Proxy::node_count: return s.node_count;
        case Proxy::nonzero_features: return s.nonzero_features;
    }
    return 0.0;
}

/// Path metrics of one input: internal nodes on the root-to-leaf path and the
/// number of distinct feature indices they test.
struct PathMetrics {
    double path_length = 0.0;
    double distinct_features = 0.0;
};

inline PathMetrics path_metrics(const TreeModel& t, std::span<const double> x) {
    auto p = t.path(x);
    std::vector<int> feats;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) feats.push_back(t.nodes[p[k]].feature);
    std::sort(feats.begin(), feats.end());
    const auto distinct = std::unique(feats.begin(), feats.end()) - feats.begin();
    return {double(p.size() - 1), double(distinct)};
}

/// Number of original columns used by any split; `feature_column` maps an
/// encoded feature index to its column so one-hot siblings count once.
inline std::size_t nonzero_columns(const TreeModel& t, std::span<const std::size_t> feature_column) {
    std::set<std::size_t> cols;
    for (const auto& nd : t.nodes)
        if (!nd.is_leaf()) cols.insert(feature_column.empty() ? std::size_t(nd.feature) : feature_column[nd.feature]);
    return cols.size();
}

/// Proxies of a tree over a set of rows of `x`.
inline ProxyScores proxy_scores(const TreeModel& t, MatrixView x, std::span<const std::size_t> rows,
                                std::span<const std::size_t> feature_column) {
    if (rows.empty()) throw InvalidArgument("proxy_scores needs a non-empty point set");
    ProxyScores s;
    for (auto r : rows) {
        auto m = path_metrics(t, x.row(r));
        s.mean_path_length += m.path_length;
        s.mean_distinct_features += m.distinct_features;
    }
    s.mean_path_length /= double(rows.size());
    s.mean_distinct_features /= double(rows.size());
    s.node_count = double(t.node_count());
    s.nonzero_features = double(nonzero_columns(t, feature_column));
    return s;
}

/// Gini importance: per feature, the sum over its splits of
/// (node samples / root samples) * impurity decrease, normalized to sum 1.
/// A single leaf (or a tree whose splits never reduce impurity) gives zeros.
inline std::vector<double> feature_importances(const TreeModel& t) {
    std::vector<double> imp(t.n_features, 0.0);
    if (t.nodes.empty()) return imp;
    auto gini = [](const std::array<std::uint32_t, 2>& c) {
        const double n = double(c[0]) + double(c[1]);
        if (n == 0) return 0.0;
        const double p0 = c[0] / n, p1 = c[1] / n;
        return 1.0 - p0 * p0 - p1 * p1;
    };
    const double total = t.nodes[0].samples();
    for (const auto& nd : t.nodes) {
        if (nd.is_leaf()) continue;
        const auto& l = t.nodes[nd.left];
        const auto& r = t.nodes[nd.right];
        const double dec = nd.samples() * gini(nd.counts) - l.samples() * gini(l.counts) - r.samples() * gini(r.counts);
        imp[nd.feature] += dec / total;
    }
    double sum = 0.0;
    for (double v : imp) sum += v;
    if (sum > 0.0)
        for (double& v : imp) v /= sum;
    else
        std::fill(imp.begin(), imp.end(), 0.0);
    return imp;
}

}  // namespace hipo::tree
