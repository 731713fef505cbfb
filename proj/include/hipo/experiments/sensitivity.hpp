#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hipo/core/error.hpp"
#include "hipo/core/parallel.hpp"
#include "hipo/core/random.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/experiments/rank.hpp"
#include "hipo/experiments/table.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::experiments {

inline const std::vector<double> kVarianceScales = {0.001, 0.01, 0.1};
inline const std::vector<double> kCategoricalMixes = {0.01, 0.05, 0.1};

struct RegionSetting {
    double variance_scale = 0.01;
    double categorical_mix = 0.05;
    bool operator==(const RegionSetting&) const = default;
};

struct SensitivityGrid {
    std::vector<RegionSetting> settings;
    std::vector<tree::Proxy> proxies;
    std::vector<std::vector<std::vector<double>>> scores;  // [setting][proxy][model]
    std::vector<std::vector<std::vector<std::size_t>>> ranks;  // [proxy][selector setting][target setting]
};

/// Local proxies of every model recomputed under each region setting; for each
/// pair of settings, the best model under one is ranked under the other.
inline SensitivityGrid sensitivity_grid(const zoo::ModelZoo& z, std::span<const std::size_t> points,
                                        std::span<const double> variance_scales, std::span<const double> mixes,
                                        std::vector<tree::Proxy> proxies, explain::LocalRegionConfig base,
                                        std::uint64_t seed, unsigned workers = 0) {
    if (z.size() < 2) throw InvalidArgument("sensitivity grid needs at least 2 models");
    if (points.empty() || proxies.empty()) throw InvalidArgument("sensitivity grid needs points and proxies");
    SensitivityGrid g;
    g.proxies = std::move(proxies);
    for (auto v : variance_scales)
        for (auto m : mixes) g.settings.push_back({v, m});
    const auto& ds = *z.dataset;
    for (const auto& s : g.settings) {
        auto cfg = base;
        cfg.variance_scale = s.variance_scale;
        cfg.categorical_mix = s.categorical_mix;
        cfg.validate();
        std::vector<tree::ProxyScores> per(z.size());
        parallel_for(
            z.size(),
            [&](std::size_t k) {
                const auto& r = z.records[k];
                auto scan = explain::boundary_scan(r.predictor(), ds, points, cfg, derive_seed(seed, {0x5e5, std::uint64_t(r.id)}), 1);
                per[k] = explain::local_proxy_scores(scan, ds);
            },
            workers);
        std::vector<std::vector<double>> by_proxy;
        for (auto p : g.proxies) {
            std::vector<double> v;
            for (const auto& ps : per) v.push_back(tree::get(ps, p));
            by_proxy.push_back(std::move(v));
        }
        g.scores.push_back(std::move(by_proxy));
    }
    const std::size_t n = g.settings.size();
    g.ranks.assign(g.proxies.size(), std::vector<std::vector<std::size_t>>(n, std::vector<std::size_t>(n, 0)));
    for (std::size_t p = 0; p < g.proxies.size(); ++p)
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) g.ranks[p][a][b] = cross_rank(g.scores[a][p], g.scores[b][p]);
    return g;
}

inline Table to_table(const SensitivityGrid& g) {
    Table t{{"proxy", "variance_a", "mix_a", "variance_b", "mix_b", "rank"}, {}};
    for (std::size_t p = 0; p < g.proxies.size(); ++p)
        for (std::size_t a = 0; a < g.settings.size(); ++a)
            for (std::size_t b = 0; b < g.settings.size(); ++b)
                if (a != b)
                    t.add({tree::to_string(g.proxies[p]), fmt(g.settings[a].variance_scale),
                           fmt(g.settings[a].categorical_mix), fmt(g.settings[b].variance_scale),
                           fmt(g.settings[b].categorical_mix), fmt(g.ranks[p][a][b])});
    return t;
}

}  // namespace hipo::experiments
