#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include <unistd.h>

#include "hipo/data/synthetic.hpp"
#include "hipo/zoo/silf.hpp"
#include "hipo/zoo/store.hpp"
#include "hipo/zoo/zoo.hpp"

using namespace hipo;
using namespace hipo::zoo;

namespace {

std::shared_ptr<const data::Dataset> synthetic(std::size_t n = 4000) {
    return std::make_shared<const data::Dataset>(
        data::split(data::preprocess(data::generate_synthetic(n, 3), false, 0), 0.8, 3));
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("hipo_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Silf, BranchValues) {
    EXPECT_EQ(silf(0.05, 0.1, 0.5), 0.0);
    EXPECT_NEAR(silf(0.12, 0.1, 0.5), 0.0245, 1e-12);
    EXPECT_NEAR(silf(0.30, 0.1, 0.5), 0.20, 1e-12);
    EXPECT_THROW(silf(-0.01, 0.1, 0.5), InvalidArgument);
}

TEST(Silf, ContinuousAtBranchBoundaries) {
    for (double eps : {0.02, 0.1, 0.5})
        for (double beta : {0.1, 0.5, 1.0}) {
            const double lo = (1 - beta) * eps, hi = (1 + beta) * eps;
            EXPECT_NEAR(silf(std::nextafter(lo, 1.0), eps, beta), 0.0, 1e-12);
            EXPECT_NEAR(silf(hi, eps, beta), hi - eps, 1e-12);
            EXPECT_NEAR(silf(std::nextafter(hi, 2.0), eps, beta), (hi - lo) * (hi - lo) / (4 * beta * eps), 1e-12);
        }
}

TEST(Silf, ThresholdIdentityAndDefaults) {
    for (double thr : {0.75, 0.8, 0.9, 0.95}) {
        auto p = SilfParams::for_threshold(thr);
        EXPECT_NEAR(p.epsilon, 2 * (1 - thr), 1e-15);
        EXPECT_EQ(p.beta, 0.5);
        EXPECT_EQ(p.c, 100.0);
        EXPECT_NEAR(p.accuracy_threshold, 1 - (1 - p.beta) * p.epsilon, 1e-12);
    }
    SilfParams bad;
    bad.accuracy_threshold = 0.9;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    EXPECT_THROW(SilfParams::for_threshold(1.01), InvalidArgument);
}

TEST(Likelihood, FlatAboveThresholdAndMonotone) {
    SilfParams p;  // eps 0.1, beta 0.5, c 100, threshold 0.95
    p.validate();
    EXPECT_EQ(likelihood(0.95, p), 1.0);
    EXPECT_EQ(likelihood(1.0, p), 1.0);
    EXPECT_LT(likelihood(0.949, p), 1.0);
    EXPECT_NEAR(likelihood(0.0, p) / std::exp(-90.0), 1.0, 1e-12);
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        double l = likelihood(i / 1000.0, p);
        EXPECT_GE(l, prev);
        prev = l;
    }
}

TEST(TreeHyperparams, DrawsStayInMenus) {
    auto rng = make_rng(1);
    std::set<int> depths, leaves;
    for (int i = 0; i < 500; ++i) {
        auto hp = sample_tree_hyperparams(rng, 9);
        EXPECT_GE(hp.max_depth, 1);
        EXPECT_LE(hp.max_depth, 7);
        EXPECT_GE(hp.max_features, 2);
        EXPECT_LE(hp.max_features, 9);
        depths.insert(hp.max_depth);
        leaves.insert(hp.min_samples_leaf);
    }
    EXPECT_EQ(depths.size(), 7u);
    EXPECT_EQ(leaves, (std::set<int>{1, 10, 100}));
}

TEST(GenerateZoo, FiltersByThresholdAndIsDeterministic) {
    auto ds = synthetic();
    auto silf = SilfParams::for_threshold(0.9);
    ZooOptions opt;
    opt.eval_points = 300;
    opt.workers = 1;
    auto a = generate_zoo(ds, ModelClass::tree, 40, silf, 11, opt);
    opt.workers = 3;
    auto b = generate_zoo(ds, ModelClass::tree, 40, silf, 11, opt);
    ASSERT_GT(a.size(), 0u);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.eval_points.indices.size(), 300u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& r = a.records[i];
        EXPECT_EQ(r.id, static_cast<int>(i));
        EXPECT_GE(r.validation_accuracy, 0.9);
        EXPECT_EQ(r.silf_likelihood, 1.0);
        EXPECT_EQ(tree::tree_to_json(r.tree()), tree::tree_to_json(b.records[i].tree()));
        EXPECT_EQ(r.importance, b.records[i].importance);
        for (std::size_t j = 0; j < i; ++j)
            EXPECT_FALSE(r.importance == a.records[j].importance && r.proxies == a.records[j].proxies);
    }
}

TEST(GenerateZoo, UnreachableThresholdReportsBestAccuracy) {
    auto ds = synthetic(1000);
    auto p = SilfParams::for_threshold(0.9999);
    ZooOptions opt;
    opt.max_restarts = 5;
    try {
        generate_zoo(ds, ModelClass::tree, 3, p, 1, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("best was"), std::string::npos);
    }
}

TEST(GenerateZoo, MushroomTreesClearThreshold) {
    auto schema = data::Schema::load(std::string(HIPO_DATA_DIR) + "/mushroom.schema");
    auto ds = std::make_shared<const data::Dataset>(data::split(
        data::preprocess(data::load_csv(std::string(HIPO_DATA_DIR) + "/mushroom.csv", schema), true, 0), 0.8, 0));
    ZooOptions opt;
    opt.max_restarts = 60;
    auto z = generate_zoo(ds, ModelClass::tree, 60, SilfParams::for_threshold(0.95), 2, opt);
    EXPECT_GT(z.size(), 5u);
    for (const auto& r : z.records) {
        EXPECT_GE(r.validation_accuracy, 0.95);
        EXPECT_LE(r.proxies.nonzero_features, 22);
        EXPECT_LE(r.proxies.mean_distinct_features, r.proxies.mean_path_length);
    }
}

TEST(ZooStore, TreeZooRoundTrip) {
    auto ds = synthetic(2000);
    ZooOptions opt;
    opt.eval_points = 100;
    auto z = generate_zoo(ds, ModelClass::tree, 10, SilfParams::for_threshold(0.9), 4, opt);
    auto dir = temp_dir("tree_zoo");
    save_zoo(z, dir.string());
    auto back = load_zoo(dir.string());
    ASSERT_EQ(back.size(), z.size());
    EXPECT_EQ(back.eval_points.indices, z.eval_points.indices);
    EXPECT_EQ(back.dataset->features, z.dataset->features);
    for (std::size_t i = 0; i < z.size(); ++i) {
        EXPECT_EQ(back.records[i].importance, z.records[i].importance);
        EXPECT_EQ(back.records[i].proxies, z.records[i].proxies);
        EXPECT_EQ(tree::tree_to_json(back.records[i].tree()), tree::tree_to_json(z.records[i].tree()));
    }
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_zoo(dir.string()), NotFound);
}

TEST(ZooStore, MlpZooCarriesLocalSurrogates) {
    auto ds = synthetic(2000);
    ZooOptions opt;
    opt.eval_points = 40;
    opt.local_points = 10;
    opt.mlp_epochs = 3;
    opt.region.n_perturbations = 400;
    auto z = generate_zoo(ds, ModelClass::mlp, 2, SilfParams::for_threshold(0.6), 5, opt);
    ASSERT_GE(z.size(), 1u);
    for (const auto& r : z.records) {
        ASSERT_TRUE(r.boundary.has_value());
        EXPECT_EQ(r.boundary->explanations.size(), 10u);
        EXPECT_EQ(r.importance.size(), ds->n_features);
    }
    auto dir = temp_dir("mlp_zoo");
    save_zoo(z, dir.string());
    auto back = load_zoo(dir.string());
    ASSERT_EQ(back.size(), z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        EXPECT_EQ(back.records[i].mlp().weights[0], z.records[i].mlp().weights[0]);
        EXPECT_EQ(back.records[i].boundary->fraction, z.records[i].boundary->fraction);
        EXPECT_EQ(back.records[i].proxies, z.records[i].proxies);
    }
    std::filesystem::remove_all(dir);
}
