#include <gtest/gtest.h>

#include <sstream>

#include "hipo/blackbox/mlp.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/data/synthetic.hpp"

using namespace hipo;
using namespace hipo::blackbox;

namespace {

struct Blobs {
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    std::vector<std::size_t> rows;
    MatrixView view() const { return {x, 2}; }
};

Blobs blobs(std::size_t n, std::uint64_t seed) {
    Blobs b;
    auto rng = make_rng(seed);
    std::normal_distribution<double> z(0, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t label = i % 2;
        double c = label ? 2.0 : -2.0;
        b.x.push_back(c + z(rng));
        b.x.push_back(-c + z(rng));
        b.y.push_back(label);
        b.rows.push_back(i);
    }
    return b;
}

MlpModel random_net(std::size_t p, std::vector<int> hidden, Activation act, std::uint64_t seed) {
    MlpHyperparams hp;
    hp.hidden = std::move(hidden);
    hp.activation = act;
    hp.seed = seed;
    auto m = init_mlp(p, hp);
    auto rng = make_rng(seed, {9});
    std::normal_distribution<double> z(0, 0.3);
    for (auto& b : m.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = z(rng);
    return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(Mlp, SeparableBlobsTrainAccurately) {
    auto b = blobs(400, 1);
    MlpHyperparams hp;
    hp.hidden = {25};
    hp.batch_size = 64;
    hp.seed = 3;
    auto m = fit_mlp(b.view(), b.y, b.rows, hp);
    EXPECT_GE(accuracy(m, b.view(), b.y, b.rows), 0.99);
    EXPECT_EQ(m.loss_history.size(), 50u);
}

TEST(Mlp, DeterministicPerSeed) {
    auto b = blobs(300, 2);
    MlpHyperparams hp;
    hp.hidden = {10, 10};
    hp.activation = Activation::tanh;
    hp.l1_weight = 1e-3;
    hp.l2_weight = 1e-4;
    hp.epochs = 5;
    hp.batch_size = 32;
    hp.seed = 4;
    auto a = fit_mlp(b.view(), b.y, b.rows, hp);
    auto c = fit_mlp(b.view(), b.y, b.rows, hp);
    for (std::size_t l = 0; l < a.layers(); ++l) {
        EXPECT_EQ(a.weights[l], c.weights[l]);
        EXPECT_EQ(a.biases[l], c.biases[l]);
    }
}

TEST(Mlp, RejectsSingleClassAndDivergence) {
    auto b = blobs(20, 3);
    std::vector<std::size_t> ones;
    for (auto r : b.rows)
        if (b.y[r]) ones.push_back(r);
    EXPECT_THROW(fit_mlp(b.view(), b.y, ones, {}), InvalidArgument);
    MlpHyperparams hp;
    hp.learning_rate = std::numeric_limits<double>::infinity();
    hp.epochs = 3;
    try {
        fit_mlp(b.view(), b.y, b.rows, hp);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Mlp, LogitTieBreaksToZeroAndShiftInvariance) {
    auto m = init_mlp(3, {});
    for (auto& w : m.weights) w.setZero();
    std::vector<double> x{1, 2, 3};
    EXPECT_EQ(m.predict(x), 0);
    m.biases.back() << 2.0, -1.0;
    EXPECT_EQ(m.predict(x), 0);
    m.biases.back() << 2.0 + 7.5, -1.0 + 7.5;
    EXPECT_EQ(m.predict(x), 0);
    m.biases.back() << -1.0, 2.0;
    EXPECT_EQ(m.predict(x), 1);
    std::vector<double> bad{1, 2};
    EXPECT_THROW(m.predict(bad), InvalidArgument);
}

TEST(Mlp, WeightGradientsMatchFiniteDifferences) {
    for (auto act : {Activation::tanh, Activation::relu}) {
        auto m = random_net(4, {5, 3}, act, 11);
        m.hyperparams.l2_weight = 1e-2;
        Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 7);
        std::vector<std::uint8_t> y{0, 1, 1, 0, 1, 0, 0};
        Gradients g;
        objective(m, x, y, &g);
        const double h = 1e-6;
        for (std::size_t l = 0; l < m.layers(); ++l) {
            for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) {
                auto plus = m, minus = m;
                plus.weights[l].data()[i] += h;
                minus.weights[l].data()[i] -= h;
                double fd = (objective(plus, x, y) - objective(minus, x, y)) / (2 * h);
                EXPECT_LT(rel_err(fd, g.weights[l].data()[i]), 1e-4) << "layer " << l << " w" << i;
            }
            for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) {
                auto plus = m, minus = m;
                plus.biases[l](i) += h;
                minus.biases[l](i) -= h;
                double fd = (objective(plus, x, y) - objective(minus, x, y)) / (2 * h);
                EXPECT_LT(rel_err(fd, g.biases[l](i)), 1e-4);
            }
        }
    }
}

TEST(Mlp, InputGradientsMatchFiniteDifferences) {
    for (auto act : {Activation::tanh, Activation::relu}) {
        auto m = random_net(5, {6, 4}, act, 12);
        Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
        const double h = 1e-6;
        for (int k = 0; k < 2; ++k) {
            Eigen::MatrixXd g = m.input_gradient(x, k);
            for (Eigen::Index c = 0; c < x.cols(); ++c)
                for (Eigen::Index j = 0; j < x.rows(); ++j) {
                    Eigen::MatrixXd xp = x.col(c), xm = x.col(c);
                    xp(j) += h;
                    xm(j) -= h;
                    double fd = (m.logits(xp)(k, 0) - m.logits(xm)(k, 0)) / (2 * h);
                    double scale = std::max({1e-3, std::abs(fd), std::abs(g(j, c))});
                    EXPECT_LT(std::abs(fd - g(j, c)) / scale, 1e-4);
                }
        }
    }
}

TEST(Mlp, LinearModelImportanceConcentratesOnUsedInput) {
    auto m = init_mlp(3, {});
    m.hyperparams.hidden = {};
    m.weights = {Eigen::MatrixXd::Zero(2, 3)};
    m.weights[0](0, 0) = 3.0;
    m.weights[0](1, 0) = -1.0;
    m.biases = {Eigen::VectorXd::Zero(2)};
    std::vector<double> x{0.1, 0.2, 0.3, 1, 2, 3, -4, 5, 6};
    std::vector<std::size_t> rows{0, 1, 2};
    auto imp = gradient_importances(m, {x, 3}, rows);
    EXPECT_DOUBLE_EQ(imp[0], 1.0);
    EXPECT_EQ(imp[1], 0.0);
    EXPECT_EQ(imp[2], 0.0);
}

TEST(Mlp, ImportancesInvariantToDuplicationAndBounded) {
    auto m = random_net(4, {8}, Activation::tanh, 13);
    std::vector<double> x(4 * 10);
    auto rng = make_rng(1);
    for (auto& v : x) v = uniform01(rng) * 2 - 1;
    std::vector<std::size_t> rows(10), twice;
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (auto r : rows) twice.insert(twice.end(), {r, r});
    auto a = gradient_importances(m, {x, 4}, rows);
    auto b = gradient_importances(m, {x, 4}, twice);
    double norm = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        EXPECT_NEAR(a[j], b[j], 1e-12);
        EXPECT_GE(a[j], 0.0);
        norm += a[j] * a[j];
    }
    EXPECT_LE(std::sqrt(norm), 1.0 + 1e-12);
}

TEST(Mlp, LossDecreasesOnConvexCase) {
    auto b = blobs(256, 5);
    MlpHyperparams hp;
    hp.hidden = {};
    hp.batch_size = 1024;
    hp.epochs = 40;
    hp.learning_rate = 1e-2;
    auto m = fit_mlp(b.view(), b.y, b.rows, hp);
    for (std::size_t e = 1; e < m.loss_history.size(); ++e) EXPECT_LE(m.loss_history[e], m.loss_history[e - 1] + 1e-12);
}

TEST(Mlp, BinaryRoundTrip) {
    auto m = random_net(6, {7, 3}, Activation::relu, 14);
    m.loss_history = {0.5, 0.25};
    std::stringstream s;
    write_mlp(s, m);
    auto back = read_mlp(s);
    EXPECT_EQ(back.n_features, 6u);
    EXPECT_EQ(back.hyperparams.hidden, m.hyperparams.hidden);
    EXPECT_EQ(back.loss_history, m.loss_history);
    for (std::size_t l = 0; l < m.layers(); ++l) EXPECT_EQ(back.weights[l], m.weights[l]);
    std::string blob = s.str();
    std::stringstream bad("HIPOMLPX" + blob.substr(8));
    EXPECT_THROW(read_mlp(bad), ParseError);
}

TEST(Mlp, CovertypeStandInClearsThreshold) {
    auto raw = data::generate_covertype_like(12000, 21);
    auto ds = data::split(data::preprocess(raw, false, 0), 0.8, 21);
    MlpHyperparams hp;
    hp.hidden = {25};
    hp.seed = 1;
    auto m = fit_mlp(ds.matrix(), ds.labels, ds.indices(data::Partition::train), hp);
    EXPECT_GE(accuracy(m, ds.matrix(), ds.labels, ds.indices(data::Partition::validate)), 0.75);
}
