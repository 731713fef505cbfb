#pragma once

#include <Eigen/Dense>
#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "json.hpp"

#include "hipo/core/error.hpp"
#include "hipo/core/random.hpp"

namespace hipo::bayesopt {

struct KernelParams {
    double signal_variance = 1.0;
    double length_scale = 1.0;
    double jitter = 1e-7;
};

inline void to_json(nlohmann::json& j, const KernelParams& k) {
    j = {{"signal_variance", k.signal_variance}, {"length_scale", k.length_scale}, {"jitter", k.jitter}};
}

inline void from_json(const nlohmann::json& j, KernelParams& k) {
    k.signal_variance = j.at("signal_variance").get<double>();
    k.length_scale = j.at("length_scale").get<double>();
    k.jitter = j.value("jitter", 1e-7);
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("feature vectors differ in dimension");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// signal_variance * exp(-|a - b|^2 / (2 length_scale^2))
inline double rbf(std::span<const double> a, std::span<const double> b, const KernelParams& k) {
    return k.signal_variance * std::exp(-squared_distance(a, b) / (2.0 * k.length_scale * k.length_scale));
}

using Real = long double;
using Quad = __float128;
using RealMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using RealVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct Labeled {
    int id = 0;
    std::vector<double> features;
    double y = 0.0;
};

struct Prediction {
    double mu = 0.0;
    double sigma = 0.0;
};

/// Log marginal likelihood of normalized targets and its gradient with
/// respect to (log signal_variance, log length_scale).
struct Lml {
    double value = -std::numeric_limits<double>::infinity();
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
};

inline RealMatrix kernel_matrix(const RealMatrix& d2, const KernelParams& k) {
    const Real ls = k.length_scale;
    return (-d2 / (2.0L * ls * ls)).array().exp().matrix() * static_cast<Real>(k.signal_variance);
}

inline Lml log_marginal_likelihood(const RealMatrix& d2, const RealVector& y, const KernelParams& k,
                                   bool with_grad = true) {
    const auto n = y.size();
    RealMatrix kern = kernel_matrix(d2, k);
    RealMatrix kj = kern;
    kj.diagonal().array() += static_cast<Real>(k.jitter);
    Eigen::LLT<RealMatrix> llt(kj);
    Lml out;
    if (llt.info() != Eigen::Success) return out;
    RealVector alpha = llt.solve(y);
    const RealMatrix l = llt.matrixL();
    Real logdet = 0.0L;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(l(i, i));
    out.value = static_cast<double>(-0.5L * y.dot(alpha) - logdet -
                                    0.5L * static_cast<Real>(n) * std::log(2.0L * std::numbers::pi_v<Real>));
    if (!std::isfinite(out.value)) {
        out.value = -std::numeric_limits<double>::infinity();
        return out;
    }
    if (with_grad) {
        RealMatrix inner = alpha * alpha.transpose() - llt.solve(RealMatrix::Identity(n, n));
        const Real ls = k.length_scale;
        RealMatrix dls = kern.cwiseProduct(d2) / (ls * ls);
        out.grad(0) = static_cast<double>(0.5L * inner.cwiseProduct(kern).sum());
        out.grad(1) = static_cast<double>(0.5L * inner.cwiseProduct(dls).sum());
    }
    return out;
}

struct FitOptions {
    int restarts = 10;
    double init_low = 1e-2, init_high = 1e2;
    double bound_low = 1e-4, bound_high = 1e4;
    int max_iterations = 200;
    std::uint64_t seed = 0;
};

struct RestartLog {
    KernelParams initial;
    double initial_lml = 0.0;
    KernelParams final;
    double final_lml = 0.0;
};

class GaussianProcess {
public:
    const std::vector<Labeled>& labeled() const { return labeled_; }
    const KernelParams& params() const { return params_; }
    double y_mean() const { return y_mean_; }
    double y_sd() const { return y_sd_; }
    double lml() const { return lml_; }
    const std::vector<RestartLog>& restarts() const { return restarts_; }
    std::size_t dimension() const { return labeled_.empty() ? 0 : labeled_[0].features.size(); }

    /// Conditions on the labels with fixed kernel parameters.
    static GaussianProcess condition(std::vector<Labeled> labeled, const KernelParams& k) {
        GaussianProcess gp;
        gp.setup(std::move(labeled));
        gp.params_ = k;
        gp.factorize();
        return gp;
    }

    /// Maximizes the log marginal likelihood from log-uniform restarts.
    static GaussianProcess fit(std::vector<Labeled> labeled, const FitOptions& opt = {}) {
        GaussianProcess gp;
        gp.setup(std::move(labeled));
        auto rng = make_rng(opt.seed, {0x69});
        std::uniform_real_distribution<double> u(std::log(opt.init_low), std::log(opt.init_high));
        const double lo = std::log(opt.bound_low), hi = std::log(opt.bound_high);
        KernelParams best;
        double best_lml = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < std::max(1, opt.restarts); ++r) {
            Eigen::Vector2d theta(u(rng), u(rng));
            RestartLog log;
            log.initial = gp.make_params(theta);
            Eigen::Vector2d end = gp.ascend(theta, lo, hi, opt.max_iterations, log.initial_lml, log.final_lml);
            log.final = gp.make_params(end);
            gp.restarts_.push_back(log);
            if (log.final_lml > best_lml) {
                best_lml = log.final_lml;
                best = log.final;
            }
        }
        if (!std::isfinite(best_lml)) throw NumericError("log marginal likelihood is not finite at any restart");
        gp.params_ = best;
        gp.factorize();
        return gp;
    }

    Prediction predict(std::span<const double> f) const {
        if (f.size() != dimension()) throw InvalidArgument("query has wrong dimension");
        const std::size_t n = labeled_.size();
        std::vector<Quad> ks(n);
        for (std::size_t i = 0; i < n; ++i) ks[i] = kernel(labeled_[i].features, f);
        Quad mu = 0;
        for (std::size_t i = 0; i < n; ++i) mu += ks[i] * alpha_[i];
        auto v = forward(ks);
        Quad var = params_.signal_variance;
        for (auto x : v) var -= x * x;
        if (var < 0) var = 0;
        return {static_cast<double>(mu * sd_ + mean_), static_cast<double>(sqrtq(var) * sd_)};
    }

    double log_marginal_likelihood_at(const KernelParams& k) const { return log_marginal_likelihood(d2_, yn_, k, false).value; }
    Lml lml_with_gradient(const KernelParams& k) const { return log_marginal_likelihood(d2_, yn_, k, true); }

private:
    void setup(std::vector<Labeled> labeled) {
        if (labeled.empty()) throw InvalidArgument("GP needs at least one labeled point");
        const std::size_t p = labeled[0].features.size();
        for (const auto& l : labeled) {
            if (l.features.size() != p) throw InvalidArgument("labeled feature vectors differ in dimension");
            for (double v : l.features)
                if (!std::isfinite(v)) throw InvalidArgument("labeled feature vector is not finite");
            if (!std::isfinite(l.y)) throw InvalidArgument("observation is not finite");
        }
        labeled_ = std::move(labeled);
        const auto n = static_cast<Eigen::Index>(labeled_.size());
        RealVector y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = labeled_[static_cast<std::size_t>(i)].y;
        const Real mean = y.mean();
        const Real sd = std::sqrt((y.array() - mean).square().mean());
        y_mean_ = static_cast<double>(mean);
        y_sd_ = sd > 0.0L ? static_cast<double>(sd) : 1.0;
        yn_ = (y.array() - mean) / (sd > 0.0L ? sd : 1.0L);
        d2_.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto& a = labeled_[static_cast<std::size_t>(i)].features;
                const auto& b = labeled_[static_cast<std::size_t>(j)].features;
                Real d = 0.0L;
                for (std::size_t t = 0; t < p; ++t) d += static_cast<Real>(a[t] - b[t]) * (a[t] - b[t]);
                d2_(i, j) = d;
            }
    }

    KernelParams make_params(const Eigen::Vector2d& theta) const {
        KernelParams k;
        k.signal_variance = std::exp(theta(0));
        k.length_scale = std::exp(theta(1));
        return k;
    }

    /// Projected BFGS ascent with Armijo backtracking.
    Eigen::Vector2d ascend(Eigen::Vector2d theta, double lo, double hi, int iters, double& start, double& end) const {
        auto clamp = [&](Eigen::Vector2d t) { return t.cwiseMax(lo).cwiseMin(hi).eval(); };
        theta = clamp(theta);
        Lml cur = log_marginal_likelihood(d2_, yn_, make_params(theta));
        start = cur.value;
        if (!std::isfinite(cur.value)) {
            end = cur.value;
            return theta;
        }
        Eigen::Matrix2d h = Eigen::Matrix2d::Identity();
        for (int it = 0; it < iters; ++it) {
            if ((clamp(theta + cur.grad) - theta).norm() < 1e-9) break;
            Eigen::Vector2d dir = h * cur.grad;
            if (cur.grad.dot(dir) <= 0.0) {
                h.setIdentity();
                dir = cur.grad;
            }
            bool moved = false;
            double t = 1.0;
            for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
                Eigen::Vector2d cand = clamp(theta + t * dir);
                Eigen::Vector2d delta = cand - theta;
                if (delta.norm() < 1e-14) break;
                Lml next = log_marginal_likelihood(d2_, yn_, make_params(cand));
                if (!(std::isfinite(next.value) && next.value >= cur.value + 1e-4 * cur.grad.dot(delta))) continue;
                if (bt == 0) {
                    // accepted at the full step: extrapolate while the value keeps rising
                    for (int ex = 0; ex < 40; ++ex) {
                        Eigen::Vector2d far = clamp(theta + 2.0 * t * dir);
                        if ((far - cand).norm() < 1e-14) break;
                        Lml further = log_marginal_likelihood(d2_, yn_, make_params(far));
                        if (!(std::isfinite(further.value) && further.value > next.value)) break;
                        t *= 2.0;
                        cand = far;
                        next = further;
                    }
                    delta = cand - theta;
                }
                Eigen::Vector2d y = cur.grad - next.grad;
                const double sy = delta.dot(y);
                if (sy > 1e-12 * delta.norm() * y.norm()) {
                    const Eigen::Matrix2d i2 = Eigen::Matrix2d::Identity();
                    const double rho = 1.0 / sy;
                    h = (i2 - rho * delta * y.transpose()) * h * (i2 - rho * y * delta.transpose()) +
                        rho * delta * delta.transpose();
                } else {
                    h.setIdentity();
                }
                const double gain = next.value - cur.value;
                theta = cand;
                cur = next;
                moved = gain > 1e-13 * (1.0 + std::abs(cur.value)) || delta.norm() > 1e-10;
                break;
            }
            if (!moved) break;
        }
        end = cur.value;
        return theta;
    }

    Quad kernel(std::span<const double> a, std::span<const double> b) const {
        Quad d = 0;
        for (std::size_t t = 0; t < a.size(); ++t) {
            const Quad e = static_cast<Quad>(a[t]) - b[t];
            d += e * e;
        }
        const Quad ls = params_.length_scale;
        return params_.signal_variance * expq(-d / (2 * ls * ls));
    }

    /// Solves L v = b with the lower Cholesky factor.
    std::vector<Quad> forward(const std::vector<Quad>& b) const {
        const std::size_t n = b.size();
        std::vector<Quad> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            Quad s = b[i];
            for (std::size_t j = 0; j < i; ++j) s -= chol_[i * n + j] * v[j];
            v[i] = s / chol_[i * n + i];
        }
        return v;
    }

    /// Cholesky factor and weights in quad precision.
    void factorize() {
        const std::size_t n = labeled_.size();
        chol_.assign(n * n, 0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                Quad s = kernel(labeled_[i].features, labeled_[j].features) + (i == j ? params_.jitter : 0.0);
                for (std::size_t k = 0; k < j; ++k) s -= chol_[i * n + k] * chol_[j * n + k];
                if (i == j) {
                    if (!(s > 0)) throw NumericError("kernel matrix is not positive definite");
                    chol_[i * n + i] = sqrtq(s);
                } else {
                    chol_[i * n + j] = s / chol_[j * n + j];
                }
            }
        Quad mean = 0, ss = 0;
        for (const auto& l : labeled_) mean += l.y;
        mean /= n;
        for (const auto& l : labeled_) ss += (l.y - mean) * (l.y - mean);
        const Quad sd = sqrtq(ss / n);
        mean_ = mean;
        sd_ = sd > 0 ? sd : 1;
        std::vector<Quad> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = (labeled_[i].y - mean_) / sd_;
        alpha_ = forward(y);
        for (std::size_t i = n; i-- > 0;) {
            Quad s = alpha_[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= chol_[j * n + i] * alpha_[j];
            alpha_[i] = s / chol_[i * n + i];
        }
        lml_ = log_marginal_likelihood(d2_, yn_, params_, false).value;
    }

    std::vector<Labeled> labeled_;
    RealMatrix d2_;
    RealVector yn_;
    double y_mean_ = 0.0, y_sd_ = 1.0;
    KernelParams params_;
    Quad mean_ = 0, sd_ = 1;
    std::vector<Quad> chol_;  // row-major lower factor of K + jitter I
    std::vector<Quad> alpha_;
    double lml_ = 0.0;
    std::vector<RestartLog> restarts_;
};

struct Candidate {
    int id = 0;
    std::span<const double> features;
};

struct Acquisition {
    int id = -1;
    double value = 0.0;
    Prediction prediction;
};

/// argmin over candidates of mu - kappa * sigma; ties go to the lowest id.
inline Acquisition acquire(const GaussianProcess& gp, std::span<const Candidate> candidates, double kappa = 1.0) {
    if (candidates.empty()) throw InvalidArgument("no unlabeled candidates left");
    Acquisition best;
    for (const auto& c : candidates) {
        auto p = gp.predict(c.features);
        const double a = p.mu - kappa * p.sigma;
        if (best.id < 0 || a < best.value || (a == best.value && c.id < best.id)) best = {c.id, a, p};
    }
    return best;
}

}  // namespace hipo::bayesopt
