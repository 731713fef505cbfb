#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/binary_io.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/matrix_view.hpp"
#include "hipo/core/random.hpp"

namespace hipo::blackbox {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + s + "'");
}

inline const std::vector<std::vector<int>> kArchitectures = {{100, 100, 100}, {100, 100}, {100}, {25}, {250}};
inline constexpr std::array<double, 4> kWeightPenalties = {0.0, 1e-4, 1e-3, 1e-2};
// Input-gradient penalty menu. Only 0 is supported (no double backprop).
inline constexpr std::array<double, 1> kGradientPenalties = {0.0};

struct MlpHyperparams {
    std::vector<int> hidden{100};
    Activation activation = Activation::relu;
    double l1_weight = 0.0;
    double l2_weight = 0.0;
    double l1_gradient = 0.0;
    int epochs = 50;
    int batch_size = 512;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

inline MlpHyperparams sample_mlp_hyperparams(Rng& rng) {
    MlpHyperparams hp;
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    hp.l1_weight = kWeightPenalties[pick(kWeightPenalties.size())];
    hp.l2_weight = kWeightPenalties[pick(kWeightPenalties.size())];
    hp.l1_gradient = kGradientPenalties[pick(kGradientPenalties.size())];
    hp.activation = pick(2) == 0 ? Activation::relu : Activation::tanh;
    hp.hidden = kArchitectures[pick(kArchitectures.size())];
    hp.seed = rng();
    return hp;
}

inline void to_json(nlohmann::json& j, const MlpHyperparams& hp) {
    j = {{"hidden", hp.hidden},           {"activation", to_string(hp.activation)},
         {"l1_weight", hp.l1_weight},     {"l2_weight", hp.l2_weight},
         {"l1_gradient", hp.l1_gradient}, {"epochs", hp.epochs},
         {"batch_size", hp.batch_size},   {"learning_rate", hp.learning_rate},
         {"seed", hp.seed}};
}

inline void from_json(const nlohmann::json& j, MlpHyperparams& hp) {
    hp.hidden = j.at("hidden").get<std::vector<int>>();
    hp.activation = activation_from_string(j.at("activation").get<std::string>());
    hp.l1_weight = j.at("l1_weight").get<double>();
    hp.l2_weight = j.at("l2_weight").get<double>();
    hp.l1_gradient = j.value("l1_gradient", 0.0);
    hp.epochs = j.at("epochs").get<int>();
    hp.batch_size = j.at("batch_size").get<int>();
    hp.learning_rate = j.at("learning_rate").get<double>();
    hp.seed = j.at("seed").get<std::uint64_t>();
}

/// Activations are column-major: one column per example.
struct Forward {
    std::vector<Eigen::MatrixXd> z;  // pre-activations per layer
    std::vector<Eigen::MatrixXd> a;  // a[0] = input, a[l+1] = act(z[l]); last is the logits
};

struct MlpModel {
    MlpHyperparams hyperparams;
    std::size_t n_features = 0;
    std::vector<Eigen::MatrixXd> weights;  // out x in
    std::vector<Eigen::VectorXd> biases;
    std::vector<double> loss_history;      // mean training objective per epoch

    std::size_t layers() const { return weights.size(); }

    Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
        if (hyperparams.activation == Activation::relu) return z.cwiseMax(0.0);
        return z.array().tanh().matrix();
    }

    Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z) const {
        if (hyperparams.activation == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
        return (1.0 - z.array().tanh().square()).matrix();
    }

    Forward forward(const Eigen::MatrixXd& x) const {
        if (static_cast<std::size_t>(x.rows()) != n_features)
            throw InvalidArgument("expected " + std::to_string(n_features) + " features, got " +
                                  std::to_string(x.rows()));
        Forward f;
        f.a.push_back(x);
        for (std::size_t l = 0; l < layers(); ++l) {
            Eigen::MatrixXd z = weights[l] * f.a.back();
            z.colwise() += biases[l];
            f.a.push_back(l + 1 == layers() ? z : activate(z));
            f.z.push_back(std::move(z));
        }
        return f;
    }

    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const { return forward(x).a.back(); }

    Eigen::Vector2d logits(std::span<const double> x) const {
        Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
        if (x.size() != n_features) throw InvalidArgument("feature vector has wrong dimension");
        return logits(Eigen::MatrixXd(v)).col(0);
    }

    std::uint8_t predict(std::span<const double> x) const {
        auto l = logits(x);
        return l(1) > l(0) ? 1 : 0;
    }

    /// d logit_k / d x for every column of x (result is P x B).
    Eigen::MatrixXd input_gradient(const Eigen::MatrixXd& x, int k) const {
        auto f = forward(x);
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, x.cols());
        g.row(k).setOnes();
        for (std::size_t l = layers(); l-- > 0;) {
            g = weights[l].transpose() * g;
            if (l > 0) g = g.cwiseProduct(activation_derivative(f.z[l - 1]));
        }
        return g;
    }
};

/// Gathers rows of a row-major matrix into a column-major P x B block.
inline Eigen::MatrixXd gather_columns(MatrixView x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(x.cols), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = x(rows[i], j);
    return out;
}

inline Eigen::MatrixXd all_columns(MatrixView x) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>> m(
        x.data.data(), static_cast<Eigen::Index>(x.cols), static_cast<Eigen::Index>(x.rows()));
    return m;
}

inline std::vector<std::uint8_t> predict_rows(const MlpModel& m, MatrixView x, std::size_t chunk = 4096) {
    std::vector<std::uint8_t> out(x.rows());
    for (std::size_t s = 0; s < x.rows(); s += chunk) {
        std::size_t e = std::min(x.rows(), s + chunk);
        MatrixView part{x.data.subspan(s * x.cols, (e - s) * x.cols), x.cols};
        auto l = m.logits(all_columns(part));
        for (std::size_t i = s; i < e; ++i) out[i] = l(1, Eigen::Index(i - s)) > l(0, Eigen::Index(i - s)) ? 1 : 0;
    }
    return out;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Mean cross-entropy over the batch plus weight penalties; fills grads when given.
inline double objective(const MlpModel& m, const Eigen::MatrixXd& x, std::span<const std::uint8_t> y,
                        Gradients* grads = nullptr) {
    const auto b = static_cast<double>(x.cols());
    auto f = m.forward(x);
    const Eigen::MatrixXd& out = f.a.back();
    Eigen::MatrixXd d(2, x.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        double mx = out.col(i).maxCoeff();
        double lse = mx + std::log(std::exp(out(0, i) - mx) + std::exp(out(1, i) - mx));
        loss -= out(y[static_cast<std::size_t>(i)], i) - lse;
        for (int k = 0; k < 2; ++k) d(k, i) = (std::exp(out(k, i) - lse) - (y[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0)) / b;
    }
    loss /= b;
    const auto& hp = m.hyperparams;
    for (const auto& w : m.weights) loss += hp.l1_weight * w.cwiseAbs().sum() + hp.l2_weight * w.squaredNorm();
    if (!grads) return loss;
    grads->weights.resize(m.layers());
    grads->biases.resize(m.layers());
    for (std::size_t l = m.layers(); l-- > 0;) {
        grads->weights[l] = d * f.a[l].transpose();
        if (hp.l1_weight > 0) grads->weights[l] += hp.l1_weight * m.weights[l].cwiseSign();
        if (hp.l2_weight > 0) grads->weights[l] += 2.0 * hp.l2_weight * m.weights[l];
        grads->biases[l] = d.rowwise().sum();
        if (l > 0) d = (m.weights[l].transpose() * d).cwiseProduct(m.activation_derivative(f.z[l - 1]));
    }
    return loss;
}

/// Glorot-uniform weights, zero biases.
inline MlpModel init_mlp(std::size_t n_features, const MlpHyperparams& hp) {
    if (hp.l1_gradient != 0.0) throw InvalidArgument("input-gradient regularization is not supported (use 0)");
    MlpModel m;
    m.hyperparams = hp;
    m.n_features = n_features;
    auto rng = make_rng(hp.seed, {0x1a1});
    std::vector<int> sizes{static_cast<int>(n_features)};
    sizes.insert(sizes.end(), hp.hidden.begin(), hp.hidden.end());
    sizes.push_back(2);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l] < 1 || sizes[l + 1] < 1) throw InvalidArgument("layer sizes must be positive");
        double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
        std::uniform_real_distribution<double> u(-limit, limit);
        Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
    }
    return m;
}

/// Adam on shuffled minibatches. Deterministic per hp.seed.
inline MlpModel fit_mlp(MatrixView x, std::span<const std::uint8_t> y, std::vector<std::size_t> rows,
                        const MlpHyperparams& hp) {
    if (rows.empty()) throw InvalidArgument("empty training set");
    bool seen[2] = {false, false};
    for (auto r : rows) seen[y[r] ? 1 : 0] = true;
    if (!seen[0] || !seen[1]) throw InvalidArgument("training set must contain both classes");
    if (hp.epochs < 0 || hp.batch_size < 1) throw InvalidArgument("epochs >= 0 and batch_size >= 1 required");

    MlpModel m = init_mlp(x.cols, hp);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Gradients mw, vw;
    for (std::size_t l = 0; l < m.layers(); ++l) {
        mw.weights.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        mw.biases.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    }
    vw = mw;
    auto rng = make_rng(hp.seed, {0x5b0f});
    long step = 0;
    Gradients g;
    std::vector<std::uint8_t> yb;
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(hp.batch_size), rows.size());
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        shuffle_in_place(rows, rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t s = 0; s < rows.size(); s += bs) {
            std::span<const std::size_t> part(rows.data() + s, std::min(bs, rows.size() - s));
            Eigen::MatrixXd xb = gather_columns(x, part);
            yb.resize(part.size());
            for (std::size_t i = 0; i < part.size(); ++i) yb[i] = y[part[i]];
            double loss = objective(m, xb, yb, &g);
            if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1));
            total += loss;
            ++batches;
            ++step;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
            const double lr = hp.learning_rate * std::sqrt(c2) / c1;
            for (std::size_t l = 0; l < m.layers(); ++l) {
                mw.weights[l] = b1 * mw.weights[l] + (1 - b1) * g.weights[l];
                vw.weights[l] = b2 * vw.weights[l] + (1 - b2) * g.weights[l].cwiseAbs2();
                m.weights[l].array() -= lr * mw.weights[l].array() / (vw.weights[l].array().sqrt() + eps);
                mw.biases[l] = b1 * mw.biases[l] + (1 - b1) * g.biases[l];
                vw.biases[l] = b2 * vw.biases[l] + (1 - b2) * g.biases[l].cwiseAbs2();
                m.biases[l].array() -= lr * mw.biases[l].array() / (vw.biases[l].array().sqrt() + eps);
            }
        }
        m.loss_history.push_back(total / static_cast<double>(batches));
    }
    return m;
}

inline double accuracy(const MlpModel& m, MatrixView x, std::span<const std::uint8_t> y,
                       std::span<const std::size_t> rows) {
    if (rows.empty()) return 0.0;
    auto l = m.logits(gather_columns(x, rows));
    std::size_t ok = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        ok += (l(1, Eigen::Index(i)) > l(0, Eigen::Index(i)) ? 1 : 0) == y[rows[i]];
    return static_cast<double>(ok) / static_cast<double>(rows.size());
}

/// Mean over points and both logits of |g| / ||g||, g the input gradient.
inline std::vector<double> gradient_importances(const MlpModel& m, MatrixView x, std::span<const std::size_t> rows) {
    if (rows.empty()) throw InvalidArgument("gradient_importances needs at least one point");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.cols));
    Eigen::MatrixXd xb = gather_columns(x, rows);
    for (int k = 0; k < 2; ++k) {
        Eigen::MatrixXd g = m.input_gradient(xb, k);
        for (Eigen::Index i = 0; i < g.cols(); ++i) {
            double n = g.col(i).norm();
            if (n > 0) acc += g.col(i).cwiseAbs() / n;
        }
    }
    acc /= 2.0 * static_cast<double>(rows.size());
    return {acc.data(), acc.data() + acc.size()};
}

inline constexpr const char* kMlpMagic = "HIPOMLP1";

inline void write_mlp(std::ostream& out, const MlpModel& m) {
    out.write(kMlpMagic, 8);
    nlohmann::json h = {{"hyperparams", m.hyperparams}, {"n_features", m.n_features}, {"loss_history", m.loss_history}};
    binio::put_string(out, h.dump());
    binio::put<std::uint64_t>(out, m.layers());
    for (std::size_t l = 0; l < m.layers(); ++l) {
        binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.weights[l].rows()));
        binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.weights[l].cols()));
        out.write(reinterpret_cast<const char*>(m.weights[l].data()),
                  static_cast<std::streamsize>(m.weights[l].size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(m.biases[l].data()),
                  static_cast<std::streamsize>(m.biases[l].size() * sizeof(double)));
    }
}

inline MlpModel read_mlp(std::istream& in) {
    binio::expect_magic(in, kMlpMagic);
    auto h = nlohmann::json::parse(binio::get_string(in));
    MlpModel m;
    m.hyperparams = h.at("hyperparams").get<MlpHyperparams>();
    m.n_features = h.at("n_features").get<std::size_t>();
    m.loss_history = h.value("loss_history", std::vector<double>{});
    auto layers = binio::get<std::uint64_t>(in);
    if (layers == 0 || layers > 64) throw ParseError("bad layer count");
    std::uint64_t prev = m.n_features;
    for (std::uint64_t l = 0; l < layers; ++l) {
        auto r = binio::get<std::uint64_t>(in), c = binio::get<std::uint64_t>(in);
        if (c != prev || r == 0 || r > (1u << 20)) throw ParseError("layer " + std::to_string(l) + " has incompatible shape");
        Eigen::MatrixXd w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        Eigen::VectorXd b(static_cast<Eigen::Index>(r));
        in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw ParseError("truncated weights");
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
        prev = r;
    }
    if (prev != 2) throw ParseError("output layer must have 2 logits");
    return m;
}

inline void save_mlp(const MlpModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    write_mlp(out, m);
}

inline MlpModel load_mlp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path);
    return read_mlp(in);
}

}  // namespace hipo::blackbox
