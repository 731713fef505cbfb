#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hipo/blackbox/mlp.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/parallel.hpp"
#include "hipo/core/random.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/tree/fit.hpp"
#include "hipo/tree/metrics.hpp"
#include "hipo/tree/prune.hpp"
#include "hipo/tree/serialize.hpp"
#include "hipo/zoo/silf.hpp"

namespace hipo::zoo {

enum class ModelClass { tree, mlp };

inline const char* to_string(ModelClass c) { return c == ModelClass::tree ? "tree" : "mlp"; }

inline ModelClass model_class_from_string(const std::string& s) {
    if (s == "tree") return ModelClass::tree;
    if (s == "mlp") return ModelClass::mlp;
    throw InvalidArgument("unknown model class '" + s + "'");
}

using Model = std::variant<tree::TreeModel, blackbox::MlpModel>;

struct ModelRecord {
    int id = 0;
    Model model;
    double validation_accuracy = 0.0;
    double silf_likelihood = 1.0;
    std::vector<double> importance;
    tree::ProxyScores proxies;
    nlohmann::json hyperparams;
    std::uint64_t restart = 0;  // restart index that produced the model
    // black-box models only: local surrogates at the evaluation points
    std::optional<explain::BoundaryScan> boundary;

    bool is_tree() const { return std::holds_alternative<tree::TreeModel>(model); }
    const tree::TreeModel& tree() const { return std::get<tree::TreeModel>(model); }
    const blackbox::MlpModel& mlp() const { return std::get<blackbox::MlpModel>(model); }

    std::uint8_t predict(std::span<const double> x) const {
        return is_tree() ? tree().predict(x) : mlp().predict(x);
    }

    explain::BatchPredictor predictor() const {
        return is_tree() ? explain::as_predictor(tree()) : explain::as_predictor(mlp());
    }
};

struct ModelZoo {
    std::shared_ptr<const data::Dataset> dataset;
    ModelClass model_class = ModelClass::tree;
    SilfParams silf;
    std::uint64_t seed = 0;
    data::PointSet eval_points;
    std::vector<ModelRecord> records;
    std::size_t restarts = 0;  // restarts actually run
    double best_accuracy = 0.0;

    std::size_t size() const { return records.size(); }

    const ModelRecord& at(int id) const {
        for (const auto& r : records)
            if (r.id == id) return r;
        throw NotFound("no model with id " + std::to_string(id));
    }

    std::vector<double> scores(tree::Proxy p) const {
        std::vector<double> out;
        for (const auto& r : records) out.push_back(tree::get(r.proxies, p));
        return out;
    }
};

struct ZooOptions {
    std::size_t max_restarts = 0;     // 0: ten times the requested count
    std::size_t eval_points = 1000;   // clipped to the validation partition
    std::size_t local_points = 0;     // black-box boundary scan size; 0: all evaluation points
    int mlp_epochs = 50;
    explain::LocalRegionConfig region;
    unsigned workers = 0;
    bool deduplicate = true;
};

inline tree::TreeHyperparams sample_tree_hyperparams(Rng& rng, std::size_t n_features) {
    tree::TreeHyperparams hp;
    hp.max_depth = std::uniform_int_distribution<int>(1, 7)(rng);
    hp.min_samples_leaf = std::array{1, 10, 100}[std::uniform_int_distribution<int>(0, 2)(rng)];
    const int p = static_cast<int>(n_features);
    hp.max_features = std::uniform_int_distribution<int>(std::min(2, p), p)(rng);
    hp.splitter = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? tree::Splitter::best : tree::Splitter::random;
    hp.seed = rng();
    return hp;
}

namespace detail {

struct Candidate {
    bool ok = false;
    double accuracy = 0.0;
    std::optional<Model> model;
    nlohmann::json hp;
};

inline bool same_record(const ModelRecord& a, const ModelRecord& b) {
    return a.importance == b.importance && a.proxies == b.proxies;
}

}  // namespace detail

/// Random restarts over the hyperparameter menus, keeping models whose
/// validation accuracy reaches the SILF threshold. Restarts run in batches
/// but are accepted strictly in restart order, so the zoo does not depend on
/// the number of workers.
inline ModelZoo generate_zoo(std::shared_ptr<const data::Dataset> ds, ModelClass cls, std::size_t count,
                             const SilfParams& silf, std::uint64_t seed, const ZooOptions& opt = {}) {
    if (count == 0) throw InvalidArgument("zoo count must be >= 1");
    silf.validate();
    const auto& d = *ds;
    ModelZoo zoo;
    zoo.dataset = ds;
    zoo.model_class = cls;
    zoo.silf = silf;
    zoo.seed = seed;
    auto train = d.indices(data::Partition::train);
    auto val = d.indices(data::Partition::validate);
    if (val.empty()) throw InvalidArgument("dataset has no validation rows; split it first");
    zoo.eval_points = data::sample_points(d, data::Partition::validate, std::min(opt.eval_points, val.size()),
                                          derive_seed(seed, {0xe7a1}));
    const std::size_t budget = opt.max_restarts ? opt.max_restarts : 10 * count;

    std::optional<tree::TrainingSet> ts;
    if (cls == ModelClass::tree) ts.emplace(d.matrix(), d.labels, train);

    auto run = [&](std::size_t i) {
        detail::Candidate c;
        auto rng = make_rng(seed, {0x200, i});
        if (cls == ModelClass::tree) {
            auto hp = sample_tree_hyperparams(rng, d.n_features);
            auto t = tree::prune(tree::fit_tree(*ts, hp), d.matrix(), d.labels, val);
            c.accuracy = tree::accuracy(t, d.matrix(), d.labels, val);
            c.hp = hp;
            c.model = std::move(t);
        } else {
            auto hp = blackbox::sample_mlp_hyperparams(rng);
            hp.epochs = opt.mlp_epochs;
            try {
                auto m = blackbox::fit_mlp(d.matrix(), d.labels, train, hp);
                c.accuracy = blackbox::accuracy(m, d.matrix(), d.labels, val);
                c.model = std::move(m);
            } catch (const NumericError&) {
                c.accuracy = 0.0;
            }
            c.hp = hp;
        }
        c.ok = c.model.has_value() && c.accuracy >= silf.accuracy_threshold;
        return c;
    };

    std::vector<std::pair<std::size_t, detail::Candidate>> kept;
    const std::size_t batch = std::max<std::size_t>(1, opt.workers ? opt.workers : std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < budget && kept.size() < count; start += batch) {
        std::vector<detail::Candidate> out(std::min(batch, budget - start));
        parallel_for(out.size(), [&](std::size_t k) { out[k] = run(start + k); }, opt.workers);
        for (std::size_t k = 0; k < out.size(); ++k) {
            ++zoo.restarts;
            zoo.best_accuracy = std::max(zoo.best_accuracy, out[k].accuracy);
            if (out[k].ok) kept.emplace_back(start + k, std::move(out[k]));
            if (kept.size() == count) break;
        }
    }
    if (kept.empty())
        throw Error("no model reached accuracy " + std::to_string(silf.accuracy_threshold) + " in " +
                    std::to_string(zoo.restarts) + " restarts; best was " + std::to_string(zoo.best_accuracy));

    std::vector<ModelRecord> recs(kept.size());
    std::vector<std::size_t> local_pts = zoo.eval_points.indices;
    if (opt.local_points && opt.local_points < local_pts.size()) local_pts.resize(opt.local_points);
    parallel_for(
        kept.size(),
        [&](std::size_t k) {
            auto& [restart, c] = kept[k];
            ModelRecord& r = recs[k];
            r.model = std::move(*c.model);
            r.validation_accuracy = c.accuracy;
            r.silf_likelihood = likelihood(c.accuracy, silf);
            r.hyperparams = c.hp;
            r.restart = restart;
            if (r.is_tree()) {
                r.importance = tree::feature_importances(r.tree());
                r.proxies = tree::proxy_scores(r.tree(), d.matrix(), zoo.eval_points.indices, d.feature_column);
            } else {
                r.importance = blackbox::gradient_importances(r.mlp(), d.matrix(), zoo.eval_points.indices);
                r.boundary = explain::boundary_scan(r.predictor(), d, local_pts, opt.region,
                                                    derive_seed(seed, {0x10c, restart}), 1);
                r.proxies = explain::local_proxy_scores(*r.boundary, d);
            }
        },
        opt.workers);

    for (auto& r : recs) {
        if (opt.deduplicate &&
            std::any_of(zoo.records.begin(), zoo.records.end(), [&](const ModelRecord& o) { return detail::same_record(o, r); }))
            continue;
        r.id = static_cast<int>(zoo.records.size());
        zoo.records.push_back(std::move(r));
    }
    return zoo;
}

}  // namespace hipo::zoo
