#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/error.hpp"
#include "hipo/core/random.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/tree/metrics.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::oracle {

struct HisConfig {
    double max_rt = 60.0;
    int questions_per_model = 8;

    void validate() const {
        if (!(max_rt > 0.0)) throw InvalidArgument("max_rt must be > 0");
        if (questions_per_model < 1) throw InvalidArgument("questions_per_model must be >= 1");
    }
};

/// Human-interpretability score of one point: max_rt - mean_rt, floored at 0.
inline double his(double mean_rt, const HisConfig& cfg) {
    if (!(mean_rt >= 0.0)) throw InvalidArgument("mean response time must be >= 0");
    return mean_rt <= cfg.max_rt ? cfg.max_rt - mean_rt : 0.0;
}

enum class Source { simulated, human };

inline const char* to_string(Source s) { return s == Source::simulated ? "simulated" : "human"; }

struct Response {
    std::string user;
    int model = 0;
    std::size_t point = 0;
    double rt = 0.0;  // seconds
    bool correct = true;
};

struct OracleResult {
    std::size_t point = 0;
    double mean_rt = 0.0;
    double his = 0.0;
    Source source = Source::simulated;
    std::vector<Response> responses;
};

/// One forward-simulation question: a point and the explanation shown with it.
struct Question {
    std::size_t point = 0;
    const tree::TreeModel* explanation = nullptr;
};

class Oracle {
public:
    virtual ~Oracle() = default;
    /// Mean response time per question, in question order.
    virtual std::vector<OracleResult> ask(int model_id, std::span<const Question> questions, const HisConfig& cfg) = 0;
};

/// Response-time model standing in for human subjects:
/// rt = max(0, base + sum_i w_i * metric_i(explanation, x) + N(0, noise_sd)).
struct SimulatedOracleSpec {
    double base_rt = 5.0;
    std::array<double, 4> weights{0.0, 0.0, 0.0, 0.0};  // indexed by tree::Proxy
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    int draws = 1;  // simulated users per question

    void validate() const {
        if (!(base_rt >= 0.0)) throw InvalidArgument("base_rt must be >= 0");
        if (!(noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be >= 0");
        if (draws < 1) throw InvalidArgument("draws must be >= 1");
    }

    static SimulatedOracleSpec single_proxy(tree::Proxy p, double weight = 1.0, double base = 5.0) {
        SimulatedOracleSpec s;
        s.base_rt = base;
        s.weights[static_cast<int>(p)] = weight;
        return s;
    }

    /// key = value lines; '#' starts a comment. Keys: base_rt, noise_sd, seed,
    /// draws, weight.<proxy>.
    static SimulatedOracleSpec parse(const std::string& text) {
        SimulatedOracleSpec s;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            auto trim = [](std::string v) {
                const auto a = v.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                return v.substr(a, v.find_last_not_of(" \t\r") - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("oracle config line " + std::to_string(lineno) + ": expected key = value");
            const auto key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
            try {
                if (key == "base_rt") s.base_rt = std::stod(val);
                else if (key == "noise_sd") s.noise_sd = std::stod(val);
                else if (key == "seed") s.seed = std::stoull(val);
                else if (key == "draws") s.draws = std::stoi(val);
                else if (key.rfind("weight.", 0) == 0)
                    s.weights[static_cast<int>(tree::proxy_from_string(key.substr(7)))] = std::stod(val);
                else throw ParseError("unknown key '" + key + "'");
            } catch (const std::logic_error&) {
                throw ParseError("oracle config line " + std::to_string(lineno) + ": bad value '" + val + "'");
            } catch (const InvalidArgument& e) {
                throw ParseError("oracle config line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        s.validate();
        return s;
    }

    static SimulatedOracleSpec load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw NotFound("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    std::string to_text() const {
        std::ostringstream o;
        o.precision(17);
        o << "base_rt = " << base_rt << "\nnoise_sd = " << noise_sd << "\nseed = " << seed << "\ndraws = " << draws << '\n';
        for (auto p : tree::kAllProxies) o << "weight." << tree::to_string(p) << " = " << weights[static_cast<int>(p)] << '\n';
        return o.str();
    }
};

/// Simulated response time of one draw. Pure in (spec.seed, model, point, draw).
inline double simulate_response(const SimulatedOracleSpec& spec, const tree::TreeModel& explanation,
                                std::span<const double> x, std::span<const std::size_t> feature_column, int model_id,
                                std::size_t point, int draw) {
    auto pm = tree::path_metrics(explanation, x);
    const std::array<double, 4> metric{pm.path_length, pm.distinct_features, double(explanation.node_count()),
                                       double(tree::nonzero_columns(explanation, feature_column))};
    double rt = spec.base_rt;
    for (std::size_t i = 0; i < 4; ++i) rt += spec.weights[i] * metric[i];
    if (spec.noise_sd > 0.0) {
        auto rng = make_rng(spec.seed, {static_cast<std::uint64_t>(model_id), point, static_cast<std::uint64_t>(draw)});
        rt += std::normal_distribution<double>(0.0, spec.noise_sd)(rng);
    }
    return std::max(0.0, rt);
}

class SimulatedOracle : public Oracle {
public:
    SimulatedOracle(SimulatedOracleSpec spec, std::shared_ptr<const data::Dataset> ds)
        : spec_(spec), ds_(std::move(ds)) {
        spec_.validate();
    }

    std::vector<OracleResult> ask(int model_id, std::span<const Question> questions, const HisConfig& cfg) override {
        std::vector<OracleResult> out;
        out.reserve(questions.size());
        for (const auto& q : questions) {
            if (!q.explanation) throw InvalidArgument("question without an explanation");
            OracleResult r;
            r.point = q.point;
            r.source = Source::simulated;
            for (int d = 0; d < spec_.draws; ++d) {
                double rt = simulate_response(spec_, *q.explanation, ds_->row(q.point), ds_->feature_column, model_id,
                                              q.point, d);
                r.responses.push_back({"sim-" + std::to_string(d), model_id, q.point, rt, true});
                r.mean_rt += rt;
            }
            r.mean_rt /= spec_.draws;
            r.his = his(r.mean_rt, cfg);
            out.push_back(std::move(r));
        }
        return out;
    }

    const SimulatedOracleSpec& spec() const { return spec_; }

private:
    SimulatedOracleSpec spec_;
    std::shared_ptr<const data::Dataset> ds_;
};

struct PriorEstimate {
    double prior = 0.0;
    double mean_rt = 0.0;              // the quantity the GP regresses
    double boundary_fraction = 1.0;    // 1 for global estimates
    std::vector<OracleResult> points;
    std::vector<std::string> warnings;
};

/// Monte-Carlo estimate of the global prior: mean HIS over the points, each
/// answered with the model itself as the explanation.
inline PriorEstimate estimate_prior_global(const zoo::ModelRecord& model, std::span<const std::size_t> points,
                                           Oracle& oracle, const HisConfig& cfg) {
    cfg.validate();
    if (points.empty()) throw InvalidArgument("estimate_prior_global needs at least one point");
    if (!model.is_tree()) throw InvalidArgument("global prior needs a tree model");
    std::vector<Question> qs;
    for (auto p : points) qs.push_back({p, &model.tree()});
    PriorEstimate e;
    e.points = oracle.ask(model.id, qs, cfg);
    for (const auto& r : e.points) {
        e.prior += r.his;
        e.mean_rt += r.mean_rt;
    }
    e.prior /= static_cast<double>(e.points.size());
    e.mean_rt /= static_cast<double>(e.points.size());
    return e;
}

/// Boundary decomposition: q * mean HIS over boundary members + (1 - q) * max_rt.
/// The regressed response time is max_rt - prior, so off-boundary mass reads as 0 s.
inline PriorEstimate estimate_prior_local(const zoo::ModelRecord& model, const explain::BoundaryScan& scan,
                                          Oracle& oracle, const HisConfig& cfg) {
    cfg.validate();
    PriorEstimate e;
    e.boundary_fraction = scan.fraction;
    std::vector<Question> qs;
    for (const auto& ex : scan.explanations) {
        if (static_cast<int>(qs.size()) == cfg.questions_per_model) break;
        if (ex.surrogate) qs.push_back({ex.anchor, &*ex.surrogate});
    }
    if (qs.empty() && e.boundary_fraction > 0.0) {
        e.warnings.push_back("no boundary members despite boundary fraction " + std::to_string(scan.fraction) +
                             "; using 0");
        e.boundary_fraction = 0.0;
    }
    double mean_his = 0.0;
    if (!qs.empty()) {
        e.points = oracle.ask(model.id, qs, cfg);
        for (const auto& r : e.points) mean_his += r.his;
        mean_his /= static_cast<double>(e.points.size());
    }
    const double q = e.boundary_fraction;
    e.prior = q * mean_his + (1.0 - q) * cfg.max_rt;
    e.mean_rt = cfg.max_rt - e.prior;
    return e;
}

inline PriorEstimate estimate_prior_local(const zoo::ModelRecord& model, const data::Dataset& ds,
                                          std::span<const std::size_t> scan_points, Oracle& oracle,
                                          const HisConfig& cfg, const explain::LocalRegionConfig& region,
                                          std::uint64_t seed) {
    auto scan = explain::boundary_scan(model.predictor(), ds, scan_points, region, seed);
    return estimate_prior_local(model, scan, oracle, cfg);
}

}  // namespace hipo::oracle
