#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/bayesopt/gp.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/random.hpp"
#include "hipo/oracle/oracle.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::bayesopt {

struct Evaluation {
    double mean_rt = 0.0;
    double prior = 0.0;
    double boundary_fraction = 1.0;
    std::vector<std::string> warnings;
};

using Evaluator = std::function<Evaluation(const zoo::ModelRecord&)>;

/// Prior from the oracle on a fixed question set, the model as its own explanation.
inline Evaluator global_evaluator(oracle::Oracle& o, std::vector<std::size_t> points, oracle::HisConfig cfg) {
    return [&o, points = std::move(points), cfg](const zoo::ModelRecord& m) {
        auto e = oracle::estimate_prior_global(m, points, o, cfg);
        return Evaluation{e.mean_rt, e.prior, 1.0, e.warnings};
    };
}

/// Boundary-decomposed prior; reuses the record's cached boundary scan when present.
inline Evaluator local_evaluator(oracle::Oracle& o, std::shared_ptr<const data::Dataset> ds,
                                 std::vector<std::size_t> scan_points, oracle::HisConfig cfg,
                                 explain::LocalRegionConfig region, std::uint64_t seed) {
    return [&o, ds, scan_points = std::move(scan_points), cfg, region, seed](const zoo::ModelRecord& m) {
        auto e = m.boundary ? oracle::estimate_prior_local(m, *m.boundary, o, cfg)
                            : oracle::estimate_prior_local(m, *ds, scan_points, o, cfg, region,
                                                           derive_seed(seed, {static_cast<std::uint64_t>(m.id)}));
        return Evaluation{e.mean_rt, e.prior, e.boundary_fraction, e.warnings};
    };
}

struct PipelineOptions {
    int iterations = 10;
    double kappa = 1.0;
    int restarts = 10;
    std::uint64_t seed = 0;
    bool record_posterior = true;
};

struct Choice {
    int iteration = 0;
    int model_id = -1;
    std::optional<double> acquisition;  // empty for the random first pick
    Prediction prediction{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    std::optional<KernelParams> kernel;
    std::vector<int> posterior_ids;
    std::vector<double> posterior_mu, posterior_sigma;
};

struct TraceStep {
    Choice choice;
    double mean_rt = 0.0;
    double prior = 0.0;
    double likelihood = 1.0;
    double boundary_fraction = 1.0;
    bool extra = false;  // evaluated outside the budget, not a MAP candidate
};

struct PipelineTrace {
    std::vector<TraceStep> steps;
    int final_model = -1;
    double final_score = 0.0;
    bool tie = false;
    std::vector<int> tied_models;
};

inline void finalize(PipelineTrace& t) {
    t.final_model = -1;
    t.tied_models.clear();
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& s : t.steps)
        if (!s.extra) best = std::max(best, s.likelihood * s.prior);
    for (const auto& s : t.steps)
        if (!s.extra && s.likelihood * s.prior >= best - 1e-12 * std::abs(best)) t.tied_models.push_back(s.choice.model_id);
    std::sort(t.tied_models.begin(), t.tied_models.end());
    if (!t.tied_models.empty()) t.final_model = t.tied_models.front();
    t.final_score = best;
    t.tie = t.tied_models.size() > 1;
}

/// Stepwise model-based optimization over a zoo: propose() picks the next
/// model from the labels recorded so far and is a pure function of them.
class Pipeline {
public:
    Pipeline(const zoo::ModelZoo& zoo, PipelineOptions opt) : zoo_(&zoo), opt_(opt) {
        if (zoo.size() == 0) throw InvalidArgument("zoo is empty");
        if (opt.iterations < 1 || static_cast<std::size_t>(opt.iterations) > zoo.size())
            throw InvalidArgument("iterations must lie in [1, zoo size]");
    }

    bool done() const { return budget_steps() >= static_cast<std::size_t>(opt_.iterations); }
    const PipelineOptions& options() const { return opt_; }
    const std::vector<TraceStep>& steps() const { return trace_.steps; }

    bool evaluated(int id) const {
        for (const auto& s : trace_.steps)
            if (s.choice.model_id == id) return true;
        return false;
    }

    Choice propose() const {
        if (done()) throw StateError("iteration budget exhausted");
        Choice c;
        c.iteration = static_cast<int>(budget_steps()) + 1;
        std::vector<Labeled> labeled;
        for (const auto& s : trace_.steps)
            labeled.push_back({s.choice.model_id, zoo_->at(s.choice.model_id).importance, s.mean_rt});
        std::vector<Candidate> cands;
        for (const auto& r : zoo_->records)
            if (!evaluated(r.id)) cands.push_back({r.id, r.importance});
        if (cands.empty()) throw StateError("every model has been evaluated");
        if (labeled.empty()) {
            auto rng = make_rng(opt_.seed, {0xf157});
            c.model_id = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)].id;
            return c;
        }
        FitOptions fo;
        fo.restarts = opt_.restarts;
        fo.seed = derive_seed(opt_.seed, {static_cast<std::uint64_t>(c.iteration)});
        auto gp = GaussianProcess::fit(std::move(labeled), fo);
        auto a = acquire(gp, cands, opt_.kappa);
        c.model_id = a.id;
        c.acquisition = a.value;
        c.prediction = a.prediction;
        c.kernel = gp.params();
        if (opt_.record_posterior) {
            for (const auto& cd : cands) {
                auto p = gp.predict(cd.features);
                c.posterior_ids.push_back(cd.id);
                c.posterior_mu.push_back(p.mu);
                c.posterior_sigma.push_back(p.sigma);
            }
        }
        return c;
    }

    void record(const Choice& c, const Evaluation& e, bool extra = false) {
        if (evaluated(c.model_id)) throw StateError("model " + std::to_string(c.model_id) + " was already evaluated");
        if (!extra && done()) throw StateError("iteration budget exhausted");
        TraceStep s;
        s.choice = c;
        s.mean_rt = e.mean_rt;
        s.prior = e.prior;
        s.likelihood = zoo_->at(c.model_id).silf_likelihood;
        s.boundary_fraction = e.boundary_fraction;
        s.extra = extra;
        trace_.steps.push_back(std::move(s));
        finalize(trace_);
    }

    PipelineTrace trace() const { return trace_; }

private:
    std::size_t budget_steps() const {
        std::size_t n = 0;
        for (const auto& s : trace_.steps) n += s.extra ? 0 : 1;
        return n;
    }

    const zoo::ModelZoo* zoo_;
    PipelineOptions opt_;
    PipelineTrace trace_;
};

class PipelineAborted : public Error {
public:
    PipelineAborted(const std::string& what, PipelineTrace partial) : Error(what), partial(std::move(partial)) {}
    PipelineTrace partial;
};

inline PipelineTrace run_pipeline(const zoo::ModelZoo& zoo, const Evaluator& evaluate, const PipelineOptions& opt) {
    Pipeline p(zoo, opt);
    while (!p.done()) {
        auto c = p.propose();
        Evaluation e;
        try {
            e = evaluate(zoo.at(c.model_id));
        } catch (const std::exception& ex) {
            throw PipelineAborted("oracle failed on model " + std::to_string(c.model_id) + " at iteration " +
                                      std::to_string(c.iteration) + ": " + ex.what(),
                                  p.trace());
        }
        p.record(c, e);
    }
    return p.trace();
}

inline nlohmann::json step_to_json(const TraceStep& s) {
    const auto& c = s.choice;
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j = {{"iteration", c.iteration},
                        {"model", c.model_id},
                        {"acquisition", c.acquisition ? nlohmann::json(*c.acquisition) : nlohmann::json(nullptr)},
                        {"mu", num(c.prediction.mu)},
                        {"sigma", num(c.prediction.sigma)},
                        {"mean_rt", s.mean_rt},
                        {"prior", s.prior},
                        {"likelihood", s.likelihood},
                        {"boundary_fraction", s.boundary_fraction},
                        {"extra", s.extra}};
    j["kernel"] = c.kernel ? nlohmann::json(*c.kernel) : nlohmann::json(nullptr);
    if (!c.posterior_ids.empty())
        j["posterior"] = {{"ids", c.posterior_ids}, {"mu", c.posterior_mu}, {"sigma", c.posterior_sigma}};
    return j;
}

inline TraceStep step_from_json(const nlohmann::json& j) {
    TraceStep s;
    auto& c = s.choice;
    auto num = [](const nlohmann::json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); };
    c.iteration = j.at("iteration").get<int>();
    c.model_id = j.at("model").get<int>();
    if (!j.at("acquisition").is_null()) c.acquisition = j.at("acquisition").get<double>();
    c.prediction = {num(j.at("mu")), num(j.at("sigma"))};
    if (!j.at("kernel").is_null()) c.kernel = j.at("kernel").get<KernelParams>();
    if (j.contains("posterior")) {
        c.posterior_ids = j["posterior"].at("ids").get<std::vector<int>>();
        c.posterior_mu = j["posterior"].at("mu").get<std::vector<double>>();
        c.posterior_sigma = j["posterior"].at("sigma").get<std::vector<double>>();
    }
    s.mean_rt = j.at("mean_rt").get<double>();
    s.prior = j.at("prior").get<double>();
    s.likelihood = j.at("likelihood").get<double>();
    s.boundary_fraction = j.value("boundary_fraction", 1.0);
    s.extra = j.value("extra", false);
    return s;
}

inline nlohmann::json summary_json(const PipelineTrace& t) {
    return {{"final_model", t.final_model},
            {"final_score", t.final_score},
            {"tie", t.tie},
            {"tied_models", t.tied_models},
            {"iterations", t.steps.size()}};
}

/// trace.jsonl (one iteration per line) and summary.json.
inline void save_trace(const PipelineTrace& t, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "trace.jsonl", std::ios::trunc);
    if (!out) throw Error("cannot write trace in " + dir);
    for (const auto& s : t.steps) out << step_to_json(s).dump() << '\n';
    std::ofstream sum(std::filesystem::path(dir) / "summary.json", std::ios::trunc);
    sum << summary_json(t).dump(1) << '\n';
}

inline PipelineTrace load_trace(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "trace.jsonl");
    if (!in) throw NotFound("no trace.jsonl in " + dir);
    PipelineTrace t;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) t.steps.push_back(step_from_json(nlohmann::json::parse(line)));
    finalize(t);
    return t;
}

}  // namespace hipo::bayesopt
