#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "hipo/core/error.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::experiments {

/// Lowest sorted position of the target's tie group (lower scores are better):
/// the number of models scoring strictly below it.
inline std::size_t rank_of(std::span<const double> scores, std::size_t index) {
    if (index >= scores.size()) throw NotFound("model index " + std::to_string(index) + " out of range");
    const double s = scores[index];
    return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [s](double v) { return v < s; }));
}

inline std::size_t rank_of(const zoo::ModelZoo& z, int id, std::span<const double> scores) {
    if (scores.size() != z.size()) throw InvalidArgument("one score per zoo model required");
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z.records[i].id == id) return rank_of(scores, i);
    throw NotFound("no model with id " + std::to_string(id));
}

/// Indices of the models attaining the minimum score.
inline std::vector<std::size_t> best_indices(std::span<const double> scores) {
    std::vector<std::size_t> out;
    if (scores.empty()) return out;
    const double m = *std::min_element(scores.begin(), scores.end());
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] == m) out.push_back(i);
    return out;
}

/// Rank under `target` of the best model(s) under `selector`; for a tie under
/// the selector the smallest rank is reported.
inline std::size_t cross_rank(std::span<const double> selector, std::span<const double> target) {
    if (selector.size() != target.size()) throw InvalidArgument("score vectors differ in length");
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (auto i : best_indices(selector)) best = std::min(best, rank_of(target, i));
    return best;
}

}  // namespace hipo::experiments
