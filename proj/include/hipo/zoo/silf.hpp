#pragma once

#include <cmath>

#include "json.hpp"

#include "hipo/core/error.hpp"

namespace hipo::zoo {

/// Soft insensitive loss: zero below (1-beta)*eps, quadratic across the band
/// of width 2*beta*eps, linear beyond.
inline double silf(double y, double epsilon, double beta) {
    if (!(y >= 0.0)) throw InvalidArgument("silf needs y >= 0");
    const double lo = (1.0 - beta) * epsilon, hi = (1.0 + beta) * epsilon;
    if (y <= lo) return 0.0;
    if (y <= hi) return (y - lo) * (y - lo) / (4.0 * beta * epsilon);
    return y - epsilon;
}

struct SilfParams {
    double epsilon = 0.1;
    double beta = 0.5;
    double c = 100.0;
    double accuracy_threshold = 0.95;

    /// beta = 0.5, eps = 2 (1 - threshold): the likelihood is flat from the threshold up.
    static SilfParams for_threshold(double threshold, double beta = 0.5, double c = 100.0) {
        if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1) to derive epsilon");
        SilfParams p;
        p.beta = beta;
        p.c = c;
        p.epsilon = (1.0 - threshold) / (1.0 - beta);
        p.accuracy_threshold = threshold;
        p.validate();
        return p;
    }

    void validate() const {
        if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
        if (!(beta > 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in (0, 1]");
        if (!(c > 0.0)) throw InvalidArgument("c must be > 0");
        if (!(accuracy_threshold > 0.0 && accuracy_threshold < 1.0))
            throw InvalidArgument("accuracy threshold must lie in (0, 1)");
        if (std::abs(accuracy_threshold - (1.0 - (1.0 - beta) * epsilon)) > 1e-12)
            throw InvalidArgument("accuracy threshold must equal 1 - (1 - beta) * epsilon");
    }
};

/// Unnormalized likelihood exp(-c * silf(1 - accuracy)).
inline double likelihood(double accuracy, const SilfParams& p) {
    return std::exp(-p.c * silf(std::max(0.0, 1.0 - accuracy), p.epsilon, p.beta));
}

inline void to_json(nlohmann::json& j, const SilfParams& p) {
    j = {{"epsilon", p.epsilon}, {"beta", p.beta}, {"c", p.c}, {"accuracy_threshold", p.accuracy_threshold}};
}

inline void from_json(const nlohmann::json& j, SilfParams& p) {
    p.epsilon = j.at("epsilon").get<double>();
    p.beta = j.at("beta").get<double>();
    p.c = j.at("c").get<double>();
    p.accuracy_threshold = j.at("accuracy_threshold").get<double>();
    p.validate();
}

}  // namespace hipo::zoo
