#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hipo/blackbox/mlp.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/matrix_view.hpp"
#include "hipo/core/parallel.hpp"
#include "hipo/core/random.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/tree/fit.hpp"
#include "hipo/tree/metrics.hpp"
#include "hipo/tree/prune.hpp"
#include "hipo/tree/serialize.hpp"

namespace hipo::explain {

struct LocalRegionConfig {
    std::size_t k_neighbors = 20;
    std::size_t n_perturbations = 10000;
    double variance_scale = 0.01;
    double categorical_mix = 0.05;
    double imbalance_cutoff = 0.75;
    double fidelity_threshold = 0.90;
    int max_local_depth = 10;
    int min_leaf = 5;
    double local_validate_fraction = 0.20;

    void validate() const {
        auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
        if (k_neighbors < 1) throw InvalidArgument("k_neighbors must be >= 1");
        if (n_perturbations < 10) throw InvalidArgument("n_perturbations must be >= 10");
        if (variance_scale < 0.0) throw InvalidArgument("variance_scale must be >= 0");
        if (categorical_mix < 0.0 || categorical_mix > 1.0) throw InvalidArgument("categorical_mix must lie in [0, 1]");
        if (!open01(imbalance_cutoff) || !open01(fidelity_threshold) || !open01(local_validate_fraction))
            throw InvalidArgument("cutoffs must lie in (0, 1)");
        if (max_local_depth < 1 || min_leaf < 1) throw InvalidArgument("max_local_depth and min_leaf must be >= 1");
    }
};

/// Labels a row-major batch of encoded feature vectors.
using BatchPredictor = std::function<std::vector<std::uint8_t>(MatrixView)>;

inline BatchPredictor as_predictor(const blackbox::MlpModel& m) {
    return [&m](MatrixView x) { return blackbox::predict_rows(m, x); };
}

inline BatchPredictor as_predictor(const tree::TreeModel& t) {
    return [&t](MatrixView x) {
        std::vector<std::uint8_t> out(x.rows());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.predict(x.row(i));
        return out;
    };
}

inline BatchPredictor constant_predictor(std::uint8_t label) {
    return [label](MatrixView x) { return std::vector<std::uint8_t>(x.rows(), label); };
}

struct NeighborStats {
    std::vector<std::size_t> neighbors;               // nearest first
    std::vector<double> variance;                     // per continuous column (encoded space)
    std::vector<std::vector<double>> categorical;     // per column: value distribution (empty if continuous)
};

/// Exhaustive k-NN over `pool` (Euclidean, encoded space); ties by row index.
inline NeighborStats neighborhood_stats(const data::Dataset& ds, std::span<const double> x, std::size_t k,
                                        std::span<const std::size_t> pool) {
    if (k == 0 || k > pool.size())
        throw InvalidArgument("k = " + std::to_string(k) + " but only " + std::to_string(pool.size()) + " rows");
    if (x.size() != ds.n_features) throw InvalidArgument("anchor has wrong dimension");
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size());
    for (auto r : pool) {
        auto row = ds.row(r);
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += (row[j] - x[j]) * (row[j] - x[j]);
        d.emplace_back(s, r);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    NeighborStats st;
    for (std::size_t i = 0; i < k; ++i) st.neighbors.push_back(d[i].second);
    st.categorical.resize(ds.column_count());
    for (const auto& g : ds.groups) {
        if (g.categorical) {
            auto& dist = st.categorical[g.column];
            dist.assign(g.end - g.begin, 0.0);
            for (auto r : st.neighbors)
                for (std::size_t v = g.begin; v < g.end; ++v) dist[v - g.begin] += ds.row(r)[v];
            for (auto& p : dist) p /= static_cast<double>(k);
        } else {
            double mean = 0.0, sq = 0.0;
            for (auto r : st.neighbors) mean += ds.row(r)[g.begin];
            mean /= static_cast<double>(k);
            for (auto r : st.neighbors) sq += (ds.row(r)[g.begin] - mean) * (ds.row(r)[g.begin] - mean);
            st.variance.push_back(sq / static_cast<double>(k));
        }
    }
    return st;
}

inline NeighborStats neighborhood_stats(const data::Dataset& ds, std::span<const double> x, std::size_t k) {
    auto pool = ds.indices(data::Partition::train);
    return neighborhood_stats(ds, x, k, pool);
}

/// Row-major n x P sample around x. Continuous coordinates are Gaussian with
/// variance scale * neighbor variance; categorical columns draw from the
/// neighbor distribution mixed with the uniform one.
inline std::vector<double> sample_perturbations(const data::Dataset& ds, std::span<const double> x,
                                                const NeighborStats& st, const LocalRegionConfig& cfg,
                                                std::uint64_t seed) {
    auto rng = make_rng(seed, {0x9e27});
    std::normal_distribution<double> z(0.0, 1.0);
    const std::size_t p = ds.n_features;
    std::vector<double> out(cfg.n_perturbations * p, 0.0);
    std::vector<std::vector<double>> cdf(ds.column_count());
    for (const auto& g : ds.groups) {
        if (!g.categorical) continue;
        const auto& emp = st.categorical[g.column];
        const double u = 1.0 / static_cast<double>(emp.size());
        double acc = 0.0;
        for (double e : emp) cdf[g.column].push_back(acc += (1.0 - cfg.categorical_mix) * e + cfg.categorical_mix * u);
    }
    for (std::size_t i = 0; i < cfg.n_perturbations; ++i) {
        double* row = out.data() + i * p;
        for (const auto& g : ds.groups) {
            if (g.categorical) {
                const auto& c = cdf[g.column];
                const double u = uniform01(rng) * c.back();
                auto v = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
                row[g.begin + std::min(v, c.size() - 1)] = 1.0;
            } else {
                const double sd = std::sqrt(cfg.variance_scale * st.variance[g.continuous_slot]);
                row[g.begin] = x[g.begin] + sd * z(rng);
            }
        }
    }
    return out;
}

struct LocalExplanation {
    std::size_t anchor = 0;  // row index in the dataset
    std::optional<tree::TreeModel> surrogate;  // predicts the model's labels
    double fidelity = 0.0;
    int depth = 0;
    double imbalance = 0.0;  // majority fraction of "matches M(x)"
    std::string miss_reason;

    bool on_boundary() const { return surrogate.has_value(); }
};

/// Fits the shallowest pruned tree that agrees with the model on at least the
/// fidelity threshold of held-out perturbations. The surrogate is fitted on
/// "matches M(x)" labels and then relabelled into the model's label space.
inline LocalExplanation fit_local_proxy(const BatchPredictor& model, const data::Dataset& ds, std::size_t anchor,
                                        const LocalRegionConfig& cfg, std::uint64_t seed,
                                        std::span<const std::size_t> pool) {
    cfg.validate();
    LocalExplanation ex;
    ex.anchor = anchor;
    auto x = ds.row(anchor);
    auto st = neighborhood_stats(ds, x, cfg.k_neighbors, pool);
    auto pert = sample_perturbations(ds, x, st, cfg, derive_seed(seed, {anchor}));
    const std::size_t p = ds.n_features;
    const std::uint8_t mx = model(MatrixView{x, p})[0];
    auto pred = model(MatrixView{pert, p});
    std::vector<std::uint8_t> match(pred.size());
    std::vector<std::size_t> cls[2];
    for (std::size_t i = 0; i < pred.size(); ++i) {
        match[i] = pred[i] == mx ? 1 : 0;
        cls[match[i]].push_back(i);
    }
    const std::size_t major = cls[1].size() >= cls[0].size() ? 1 : 0;
    ex.imbalance = static_cast<double>(cls[major].size()) / static_cast<double>(pred.size());
    if (ex.imbalance > cfg.imbalance_cutoff) {
        ex.miss_reason = "imbalance";
        return ex;
    }
    auto rng = make_rng(seed, {anchor, 0xba1});
    auto keep = sample_without_replacement(cls[major].size(), cls[1 - major].size(), rng);
    std::vector<std::size_t> rows = cls[1 - major];
    for (auto k : keep) rows.push_back(cls[major][k]);
    shuffle_in_place(rows, rng);
    auto n_val = static_cast<std::size_t>(std::llround(cfg.local_validate_fraction * static_cast<double>(rows.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, rows.size() - 1);
    std::vector<std::size_t> val(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
    MatrixView xv{pert, p};
    tree::TrainingSet ts(xv, match, train);
    for (int depth = 1; depth <= cfg.max_local_depth; ++depth) {
        tree::TreeHyperparams hp{depth, cfg.min_leaf, 0, tree::Splitter::best, derive_seed(seed, {anchor, 7})};
        auto t = tree::prune(tree::fit_tree(ts, hp), xv, match, val);
        const double fid = tree::accuracy(t, xv, match, val);
        if (fid >= cfg.fidelity_threshold) {
            for (auto& nd : t.nodes) {
                if (mx == 0) std::swap(nd.counts[0], nd.counts[1]);
                nd.label = nd.label == 1 ? mx : static_cast<std::uint8_t>(1 - mx);
            }
            ex.surrogate = std::move(t);
            ex.fidelity = fid;
            ex.depth = depth;
            return ex;
        }
        ex.fidelity = std::max(ex.fidelity, fid);
    }
    ex.miss_reason = "no faithful surrogate";
    return ex;
}

inline LocalExplanation fit_local_proxy(const BatchPredictor& model, const data::Dataset& ds, std::size_t anchor,
                                        const LocalRegionConfig& cfg, std::uint64_t seed) {
    auto pool = ds.indices(data::Partition::train);
    return fit_local_proxy(model, ds, anchor, cfg, seed, pool);
}

/// Agreement between a surrogate and the model on a fresh perturbation sample.
inline double resampled_fidelity(const BatchPredictor& model, const data::Dataset& ds, const LocalExplanation& ex,
                                 const LocalRegionConfig& cfg, std::uint64_t seed) {
    if (!ex.surrogate) throw InvalidArgument("no surrogate attached");
    auto pool = ds.indices(data::Partition::train);
    auto x = ds.row(ex.anchor);
    auto st = neighborhood_stats(ds, x, cfg.k_neighbors, pool);
    auto pert = sample_perturbations(ds, x, st, cfg, seed);
    MatrixView xv{pert, ds.n_features};
    auto pred = model(xv);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += ex.surrogate->predict(xv.row(i)) == pred[i];
    return static_cast<double>(ok) / static_cast<double>(pred.size());
}

struct BoundaryScan {
    double fraction = 0.0;
    std::vector<LocalExplanation> explanations;  // one per point, in point order

    std::vector<std::size_t> members() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < explanations.size(); ++i)
            if (explanations[i].on_boundary()) out.push_back(i);
        return out;
    }
};

inline BoundaryScan boundary_scan(const BatchPredictor& model, const data::Dataset& ds,
                                  std::span<const std::size_t> points, const LocalRegionConfig& cfg,
                                  std::uint64_t seed, unsigned workers = 0) {
    if (points.empty()) throw InvalidArgument("boundary_scan needs at least one point");
    auto pool = ds.indices(data::Partition::train);
    BoundaryScan scan;
    scan.explanations.resize(points.size());
    parallel_for(points.size(),
                 [&](std::size_t i) { scan.explanations[i] = fit_local_proxy(model, ds, points[i], cfg, seed, pool); },
                 workers);
    std::size_t on = 0;
    for (const auto& e : scan.explanations) on += e.on_boundary();
    scan.fraction = static_cast<double>(on) / static_cast<double>(points.size());
    return scan;
}

/// Proxies of a black-box model from its local surrogates. Every point counts
/// in the mean; points off the boundary score 0 on all four proxies.
inline tree::ProxyScores local_proxy_scores(const BoundaryScan& scan, const data::Dataset& ds) {
    tree::ProxyScores s{0.0, 0.0, 0.0, 0.0};
    if (scan.explanations.empty()) return s;
    for (const auto& e : scan.explanations) {
        if (!e.surrogate) continue;
        auto m = tree::path_metrics(*e.surrogate, ds.row(e.anchor));
        s.mean_path_length += m.path_length;
        s.mean_distinct_features += m.distinct_features;
        s.node_count += static_cast<double>(e.surrogate->node_count());
        s.nonzero_features += static_cast<double>(tree::nonzero_columns(*e.surrogate, ds.feature_column));
    }
    const auto n = static_cast<double>(scan.explanations.size());
    s.mean_path_length /= n;
    s.mean_distinct_features /= n;
    s.node_count /= n;
    s.nonzero_features /= n;
    return s;
}

inline nlohmann::json explanation_to_json(const LocalExplanation& e, const std::vector<std::string>& names = {}) {
    nlohmann::json j = {{"anchor", e.anchor}, {"fidelity", e.fidelity},   {"depth", e.depth},
                        {"imbalance", e.imbalance}, {"miss_reason", e.miss_reason}};
    j["surrogate"] = e.surrogate ? tree::tree_to_json(*e.surrogate, names) : nlohmann::json(nullptr);
    return j;
}

inline LocalExplanation explanation_from_json(const nlohmann::json& j) {
    LocalExplanation e;
    e.anchor = j.at("anchor").get<std::size_t>();
    e.fidelity = j.at("fidelity").get<double>();
    e.depth = j.at("depth").get<int>();
    e.imbalance = j.at("imbalance").get<double>();
    e.miss_reason = j.at("miss_reason").get<std::string>();
    if (!j.at("surrogate").is_null()) e.surrogate = tree::tree_from_json(j.at("surrogate"));
    return e;
}

inline nlohmann::json scan_to_json(const BoundaryScan& s, const std::vector<std::string>& names = {}) {
    nlohmann::json j = {{"fraction", s.fraction}, {"explanations", nlohmann::json::array()}};
    for (const auto& e : s.explanations) j["explanations"].push_back(explanation_to_json(e, names));
    return j;
}

inline BoundaryScan scan_from_json(const nlohmann::json& j) {
    BoundaryScan s;
    s.fraction = j.at("fraction").get<double>();
    for (const auto& e : j.at("explanations")) s.explanations.push_back(explanation_from_json(e));
    return s;
}

}  // namespace hipo::explain
