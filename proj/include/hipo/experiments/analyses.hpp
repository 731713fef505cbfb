#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <vector>

#include "hipo/bayesopt/pipeline.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/parallel.hpp"
#include "hipo/core/random.hpp"
#include "hipo/experiments/rank.hpp"
#include "hipo/experiments/table.hpp"
#include "hipo/oracle/oracle.hpp"
#include "hipo/tree/metrics.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::experiments {

using CrossProxyGrid = std::array<std::array<std::size_t, 4>, 4>;  // [selector][target]

inline CrossProxyGrid cross_proxy_ranks(const zoo::ModelZoo& z) {
    if (z.size() < 2) throw InvalidArgument("cross-proxy ranks need at least 2 models");
    CrossProxyGrid g{};
    for (auto a : tree::kAllProxies)
        for (auto b : tree::kAllProxies) g[int(a)][int(b)] = cross_rank(z.scores(a), z.scores(b));
    return g;
}

inline std::size_t max_off_diagonal(const CrossProxyGrid& g) {
    std::size_t m = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            if (a != b) m = std::max(m, g[a][b]);
    return m;
}

/// Per-model, per-point values of a proxy over the zoo's evaluation points (trees)
/// or scanned boundary points (black-box models; 0 off the boundary).
inline std::vector<std::vector<double>> point_values(const zoo::ModelZoo& z, tree::Proxy p) {
    const auto& ds = *z.dataset;
    std::vector<std::vector<double>> out;
    for (const auto& r : z.records) {
        std::vector<double> v;
        auto metric = [&](const tree::TreeModel& t, std::size_t row) {
            switch (p) {
                case tree::Proxy::path_length: return tree::path_metrics(t, ds.row(row)).path_length;
                case tree::Proxy::distinct_features: return tree::path_metrics(t, ds.row(row)).distinct_features;
                case tree::Proxy::node_count: return double(t.node_count());
                case tree::Proxy::nonzero_features: return double(tree::nonzero_columns(t, ds.feature_column));
            }
            return 0.0;
        };
        if (r.is_tree()) {
            for (auto row : z.eval_points.indices) v.push_back(metric(r.tree(), row));
        } else {
            if (!r.boundary) throw InvalidArgument("black-box record has no boundary scan");
            for (const auto& e : r.boundary->explanations) v.push_back(e.surrogate ? metric(*e.surrogate, e.anchor) : 0.0);
        }
        out.push_back(std::move(v));
    }
    return out;
}

struct SampleCurve {
    tree::Proxy proxy = tree::Proxy::path_length;
    std::vector<std::size_t> sizes;
    std::vector<std::vector<std::size_t>> ranks;  // [size][repetition]

    double mean(std::size_t i) const {
        double s = 0.0;
        for (auto r : ranks.at(i)) s += double(r);
        return ranks[i].empty() ? 0.0 : s / double(ranks[i].size());
    }
};

inline const std::vector<std::size_t> kDefaultSampleSizes = {8, 16, 32, 64, 128, 256, 512, 1000};

/// Best model(s) on a random subsample of points, ranked under the full-sample proxy.
inline SampleCurve sampled_rank_curve(const zoo::ModelZoo& z, tree::Proxy p, std::vector<std::size_t> sizes,
                                      std::size_t repetitions, std::uint64_t seed) {
    auto vals = point_values(z, p);
    const std::size_t n_points = vals.empty() ? 0 : vals[0].size();
    auto mean_over = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> m(vals.size(), 0.0);
        for (std::size_t k = 0; k < vals.size(); ++k) {
            for (auto i : idx) m[k] += vals[k][i];
            m[k] /= double(idx.size());
        }
        return m;
    };
    std::vector<std::size_t> all(n_points);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto full = mean_over(all);
    SampleCurve c;
    c.proxy = p;
    for (auto s : sizes) {
        if (s == 0 || s > n_points)
            throw InvalidArgument("sample size " + std::to_string(s) + " outside [1, " + std::to_string(n_points) + "]");
        c.sizes.push_back(s);
        std::vector<std::size_t> ranks;
        for (std::size_t rep = 0; rep < repetitions; ++rep) {
            auto rng = make_rng(seed, {s, rep});
            auto idx = sample_without_replacement(n_points, s, rng);
            std::sort(idx.begin(), idx.end());
            ranks.push_back(cross_rank(mean_over(idx), full));
        }
        c.ranks.push_back(std::move(ranks));
    }
    return c;
}

struct ComparisonOptions {
    std::size_t trials = 100;
    std::size_t draws = 1000;
    int k = 10;
    double kappa = 1.0;
    int restarts = 10;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

struct Comparison {
    tree::Proxy proxy = tree::Proxy::path_length;
    std::vector<std::vector<std::size_t>> pipeline;  // [trial][iteration]: best rank so far
    std::vector<std::vector<std::size_t>> baseline;  // [draw][j]

    static double mean_at(const std::vector<std::vector<std::size_t>>& runs, std::size_t i) {
        double s = 0.0;
        for (const auto& r : runs) s += double(r.at(i));
        return runs.empty() ? 0.0 : s / double(runs.size());
    }
    double pipeline_mean(std::size_t i) const { return mean_at(pipeline, i); }
    double baseline_mean(std::size_t i) const { return mean_at(baseline, i); }
};

/// Evaluator whose response time is driven by one proxy with no noise. Tree
/// zoos go through the simulated oracle on every evaluation point; black-box
/// zoos use their surrogate-derived proxy score.
class ProxySignal {
public:
    ProxySignal(const zoo::ModelZoo& z, tree::Proxy p) : zoo_(&z), proxy_(p), cache_(z.size()) {}

    bayesopt::Evaluation operator()(const zoo::ModelRecord& r) {
        std::size_t slot = 0;
        while (zoo_->records[slot].id != r.id) ++slot;
        std::lock_guard lock(mu_);
        if (!cache_[slot]) {
            bayesopt::Evaluation e;
            if (r.is_tree()) {
                oracle::SimulatedOracle o(oracle::SimulatedOracleSpec::single_proxy(proxy_, 1.0), zoo_->dataset);
                auto est = oracle::estimate_prior_global(r, zoo_->eval_points.indices, o, cfg_);
                e = {est.mean_rt, est.prior, 1.0, {}};
            } else {
                const double rt = 5.0 + tree::get(r.proxies, proxy_);
                e = {rt, oracle::his(rt, cfg_), 1.0, {}};
            }
            cache_[slot] = e;
        }
        return *cache_[slot];
    }

private:
    const zoo::ModelZoo* zoo_;
    tree::Proxy proxy_;
    oracle::HisConfig cfg_;
    std::vector<std::optional<bayesopt::Evaluation>> cache_;
    std::mutex mu_;
};

inline Comparison pipeline_vs_random(const zoo::ModelZoo& z, tree::Proxy p, const ComparisonOptions& opt) {
    if (opt.k < 1 || static_cast<std::size_t>(opt.k) > z.size()) throw InvalidArgument("k must lie in [1, zoo size]");
    const auto scores = z.scores(p);
    std::map<int, std::size_t> rank;
    for (std::size_t i = 0; i < z.size(); ++i) rank[z.records[i].id] = rank_of(scores, i);
    ProxySignal signal(z, p);
    bayesopt::Evaluator eval = [&signal](const zoo::ModelRecord& r) { return signal(r); };
    Comparison c;
    c.proxy = p;
    c.pipeline.resize(opt.trials);
    parallel_for(
        opt.trials,
        [&](std::size_t t) {
            bayesopt::PipelineOptions po;
            po.iterations = opt.k;
            po.kappa = opt.kappa;
            po.restarts = opt.restarts;
            po.seed = derive_seed(opt.seed, {0x7a1, t});
            po.record_posterior = false;
            auto trace = bayesopt::run_pipeline(z, eval, po);
            std::size_t best = z.size();
            for (const auto& s : trace.steps) c.pipeline[t].push_back(best = std::min(best, rank[s.choice.model_id]));
        },
        opt.workers);
    for (std::size_t d = 0; d < opt.draws; ++d) {
        auto rng = make_rng(opt.seed, {0xd4a, d});
        auto pick = sample_without_replacement(z.size(), static_cast<std::size_t>(opt.k), rng);
        std::vector<std::size_t> run;
        std::size_t best = z.size();
        for (auto i : pick) run.push_back(best = std::min(best, rank_of(scores, i)));
        c.baseline.push_back(std::move(run));
    }
    return c;
}

// Tables ------------------------------------------------------------------

inline Table to_table(const CrossProxyGrid& g) {
    Table t{{"proxy_a", "proxy_b", "rank"}, {}};
    for (auto a : tree::kAllProxies)
        for (auto b : tree::kAllProxies)
            if (a != b) t.add({tree::to_string(a), tree::to_string(b), fmt(g[int(a)][int(b)])});
    return t;
}

inline CrossProxyGrid grid_from_table(const Table& t) {
    CrossProxyGrid g{};
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto a = tree::proxy_from_string(t.rows[r][t.column("proxy_a")]);
        auto b = tree::proxy_from_string(t.rows[r][t.column("proxy_b")]);
        g[int(a)][int(b)] = static_cast<std::size_t>(t.number(r, "rank"));
    }
    return g;
}

inline Table to_table(const std::vector<SampleCurve>& curves) {
    Table t{{"proxy", "size", "repetition", "rank"}, {}};
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.sizes.size(); ++i)
            for (std::size_t r = 0; r < c.ranks[i].size(); ++r)
                t.add({tree::to_string(c.proxy), fmt(c.sizes[i]), fmt(r), fmt(c.ranks[i][r])});
    return t;
}

inline std::vector<SampleCurve> curves_from_table(const Table& t) {
    std::vector<SampleCurve> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto p = tree::proxy_from_string(t.rows[r][t.column("proxy")]);
        if (out.empty() || out.back().proxy != p) out.push_back(SampleCurve{p, {}, {}});
        auto& c = out.back();
        auto size = static_cast<std::size_t>(t.number(r, "size"));
        if (c.sizes.empty() || c.sizes.back() != size) {
            c.sizes.push_back(size);
            c.ranks.emplace_back();
        }
        c.ranks.back().push_back(static_cast<std::size_t>(t.number(r, "rank")));
    }
    return out;
}

inline Table to_table(const std::vector<Comparison>& cs) {
    Table t{{"proxy", "method", "run", "iteration", "best_rank"}, {}};
    for (const auto& c : cs) {
        auto emit = [&](const char* method, const std::vector<std::vector<std::size_t>>& runs) {
            for (std::size_t r = 0; r < runs.size(); ++r)
                for (std::size_t i = 0; i < runs[r].size(); ++i)
                    t.add({tree::to_string(c.proxy), method, fmt(r), fmt(i + 1), fmt(runs[r][i])});
        };
        emit("pipeline", c.pipeline);
        emit("random", c.baseline);
    }
    return t;
}

inline std::vector<Comparison> comparisons_from_table(const Table& t) {
    std::vector<Comparison> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto p = tree::proxy_from_string(t.rows[r][t.column("proxy")]);
        if (out.empty() || out.back().proxy != p) out.push_back(Comparison{p, {}, {}});
        auto& runs = t.rows[r][t.column("method")] == "pipeline" ? out.back().pipeline : out.back().baseline;
        auto run = static_cast<std::size_t>(t.number(r, "run"));
        if (runs.size() <= run) runs.resize(run + 1);
        runs[run].push_back(static_cast<std::size_t>(t.number(r, "best_rank")));
    }
    return out;
}

/// Per-iteration means of both methods; the plot-ready summary.
inline Table summary_table(const std::vector<Comparison>& cs) {
    Table t{{"proxy", "iteration", "pipeline_mean", "random_mean"}, {}};
    for (const auto& c : cs) {
        const std::size_t k = c.pipeline.empty() ? 0 : c.pipeline[0].size();
        for (std::size_t i = 0; i < k; ++i)
            t.add({tree::to_string(c.proxy), fmt(i + 1), fmt(c.pipeline_mean(i)), fmt(c.baseline_mean(i))});
    }
    return t;
}

}  // namespace hipo::experiments
