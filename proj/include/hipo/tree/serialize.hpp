#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/error.hpp"
#include "hipo/tree/metrics.hpp"
#include "hipo/tree/model.hpp"

namespace hipo::tree {

inline constexpr const char* kTreeFormat = "hipo.tree/1";

inline void to_json(nlohmann::json& j, const TreeHyperparams& hp) {
    j = {{"max_depth", hp.max_depth},
         {"min_samples_leaf", hp.min_samples_leaf},
         {"max_features", hp.max_features},
         {"splitter", to_string(hp.splitter)},
         {"seed", hp.seed}};
}

inline void from_json(const nlohmann::json& j, TreeHyperparams& hp) {
    hp.max_depth = j.at("max_depth").get<int>();
    hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    hp.max_features = j.at("max_features").get<int>();
    hp.splitter = splitter_from_string(j.at("splitter").get<std::string>());
    hp.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ProxyScores& s) {
    j = {{"mean_path_length", s.mean_path_length},
         {"mean_distinct_features", s.mean_distinct_features},
         {"node_count", s.node_count},
         {"nonzero_features", s.nonzero_features}};
}

inline void from_json(const nlohmann::json& j, ProxyScores& s) {
    s.mean_path_length = j.at("mean_path_length").get<double>();
    s.mean_distinct_features = j.at("mean_distinct_features").get<double>();
    s.node_count = j.at("node_count").get<double>();
    s.nonzero_features = j.at("nonzero_features").get<double>();
}

/// Wire format shared by model files and quiz payloads:
///
///     {"format": "hipo.tree/1", "n_features": P, "hyperparams": {...},
///      "nodes": [{"id": 0, "feature": 3, "threshold": 0.5, "left": 1, "right": 2,
///                 "counts": [n0, n1], "label": 1}, {"id": 1, "leaf": true, ...}],
///      "feature_names": [...]}            // optional
inline nlohmann::json tree_to_json(const TreeModel& t, const std::vector<std::string>& feature_names = {}) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        const auto& nd = t.nodes[i];
        nlohmann::json n = {{"id", i}, {"counts", nd.counts}, {"label", nd.label}};
        if (nd.is_leaf()) {
            n["leaf"] = true;
        } else {
            n["feature"] = nd.feature;
            n["threshold"] = nd.threshold;
            n["left"] = nd.left;
            n["right"] = nd.right;
        }
        nodes.push_back(std::move(n));
    }
    nlohmann::json j = {{"format", kTreeFormat},
                        {"n_features", t.n_features},
                        {"hyperparams", t.hyperparams},
                        {"nodes", std::move(nodes)}};
    if (!feature_names.empty()) j["feature_names"] = feature_names;
    return j;
}

inline TreeModel tree_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kTreeFormat) throw ParseError("not a hipo.tree/1 document");
    TreeModel t;
    t.n_features = j.at("n_features").get<std::size_t>();
    t.hyperparams = j.at("hyperparams").get<TreeHyperparams>();
    const auto& nodes = j.at("nodes");
    t.nodes.resize(nodes.size());
    for (const auto& n : nodes) {
        const auto id = n.at("id").get<std::size_t>();
        if (id >= t.nodes.size()) throw ParseError("node id out of range");
        Node& nd = t.nodes[id];
        nd.counts = n.at("counts").get<std::array<std::uint32_t, 2>>();
        nd.label = n.at("label").get<std::uint8_t>();
        if (!n.value("leaf", false)) {
            nd.feature = n.at("feature").get<int>();
            nd.threshold = n.at("threshold").get<double>();
            nd.left = n.at("left").get<int>();
            nd.right = n.at("right").get<int>();
            if (nd.feature < 0 || std::size_t(nd.feature) >= t.n_features || nd.left <= int(id) ||
                nd.right <= int(id) || std::size_t(nd.left) >= t.nodes.size() ||
                std::size_t(nd.right) >= t.nodes.size())
                throw ParseError("malformed split node " + std::to_string(id));
        }
    }
    if (t.nodes.empty()) throw ParseError("tree has no nodes");
    return t;
}

inline void save_tree(const TreeModel& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << tree_to_json(t).dump(1) << '\n';
}

inline TreeModel load_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open " + path);
    return tree_from_json(nlohmann::json::parse(in));
}

}  // namespace hipo::tree
