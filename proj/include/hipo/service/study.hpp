#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"

#include "hipo/bayesopt/pipeline.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/random.hpp"
#include "hipo/oracle/oracle.hpp"
#include "hipo/oracle/quiz.hpp"
#include "hipo/tree/serialize.hpp"
#include "hipo/zoo/store.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::service {

enum class Status { awaiting_responses, advancing, complete };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::awaiting_responses: return "awaiting-responses";
        case Status::advancing: return "advancing";
        case Status::complete: return "complete";
    }
    return "?";
}

struct StudyConfig {
    std::string zoo;
    oracle::HisConfig his;
    int iterations = 10;
    double kappa = 1.0;
    int restarts = 10;
    std::uint64_t seed = 0;
    int min_users = 7;
    int practice = 3;  // per practice set; a backup set of the same size is also served
    std::vector<int> extra_models;  // evaluated after the budget, not MAP candidates
    std::optional<oracle::Exclusion> exclusion = oracle::Exclusion{};
    double rt_tolerance_ms = 2000.0;

    void validate() const {
        his.validate();
        if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
        if (min_users < 1) throw InvalidArgument("min_users must be >= 1");
        if (practice < 0) throw InvalidArgument("practice must be >= 0");
        if (rt_tolerance_ms < 0) throw InvalidArgument("rt_tolerance_ms must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const StudyConfig& c) {
    j = {{"zoo", c.zoo},
         {"max_rt", c.his.max_rt},
         {"questions_per_model", c.his.questions_per_model},
         {"iterations", c.iterations},
         {"kappa", c.kappa},
         {"restarts", c.restarts},
         {"seed", c.seed},
         {"min_users", c.min_users},
         {"practice", c.practice},
         {"extra_models", c.extra_models},
         {"rt_tolerance_ms", c.rt_tolerance_ms}};
    j["exclusion"] = c.exclusion ? nlohmann::json{{"min_rt", c.exclusion->min_rt}, {"max_rt", c.exclusion->max_rt}}
                                 : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, StudyConfig& c) {
    StudyConfig d;
    c.zoo = j.value("zoo", d.zoo);
    c.his.max_rt = j.value("max_rt", d.his.max_rt);
    c.his.questions_per_model = j.value("questions_per_model", d.his.questions_per_model);
    c.iterations = j.value("iterations", d.iterations);
    c.kappa = j.value("kappa", d.kappa);
    c.restarts = j.value("restarts", d.restarts);
    c.seed = j.value("seed", d.seed);
    c.min_users = j.value("min_users", d.min_users);
    c.practice = j.value("practice", d.practice);
    c.extra_models = j.value("extra_models", d.extra_models);
    c.rt_tolerance_ms = j.value("rt_tolerance_ms", d.rt_tolerance_ms);
    c.exclusion = d.exclusion;
    if (j.contains("exclusion")) {
        const auto& e = j["exclusion"];
        if (e.is_null()) {
            c.exclusion.reset();
        } else {
            c.exclusion = oracle::Exclusion{e.value("min_rt", d.exclusion->min_rt), e.value("max_rt", d.exclusion->max_rt)};
        }
    }
}

struct Answer {
    std::string question;
    std::size_t point = 0;
    bool practice = false;
    double rt_ms = 0.0;
    int label = 0;
    bool correct = false;
    double shown_at = 0.0;     // client wall clock, ms
    double answered_at = 0.0;
    double received_at = 0.0;  // server wall clock, ms
    bool valid = true;
};

inline void to_json(nlohmann::json& j, const Answer& a) {
    j = {{"question", a.question},   {"point", a.point},       {"practice", a.practice},
         {"rt_ms", a.rt_ms},         {"label", a.label},       {"correct", a.correct},
         {"shown_at", a.shown_at},   {"answered_at", a.answered_at}, {"received_at", a.received_at},
         {"valid", a.valid}};
}

inline void from_json(const nlohmann::json& j, Answer& a) {
    a.question = j.at("question").get<std::string>();
    a.point = j.at("point").get<std::size_t>();
    a.practice = j.at("practice").get<bool>();
    a.rt_ms = j.at("rt_ms").get<double>();
    a.label = j.at("label").get<int>();
    a.correct = j.at("correct").get<bool>();
    a.shown_at = j.at("shown_at").get<double>();
    a.answered_at = j.at("answered_at").get<double>();
    a.received_at = j.at("received_at").get<double>();
    a.valid = j.at("valid").get<bool>();
}

struct Session {
    std::string id;
    std::string pseudonym;
    int step = 0;  // index of the evaluation the session belongs to
    std::vector<std::size_t> order;  // permutation of the quiz questions
    std::map<std::string, Answer> answers;
};

struct QuizItem {
    std::string id;  // "q<k>" for quiz questions, "p<k>" for practice
    std::size_t point = 0;
    const tree::TreeModel* explanation = nullptr;
};

struct QuizSet {
    std::vector<QuizItem> questions;
    std::vector<QuizItem> practice;  // first set, then the backup set
    double boundary_fraction = 1.0;
    std::vector<std::string> warnings;

    const QuizItem* find(const std::string& id) const {
        for (const auto* v : {&questions, &practice})
            for (const auto& q : *v)
                if (q.id == id) return &q;
        return nullptr;
    }
};

/// Called with the log path and the serialized event just before it is appended.
using CommitHook = std::function<void(const std::string& log_path, const std::string& line)>;

namespace detail {

inline void append_durable(const std::string& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error("cannot open " + path);
    std::string buf = line + '\n';
    std::size_t off = 0;
    while (off < buf.size()) {
        auto n = ::write(fd, buf.data() + off, buf.size() - off);
        if (n <= 0) {
            ::close(fd);
            throw Error("write failed: " + path);
        }
        off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

/// Drops a torn final line left by an interrupted append.
inline void truncate_torn_tail(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.empty() || content.back() == '\n') return;
    auto nl = content.rfind('\n');
    std::filesystem::resize_file(path, nl == std::string::npos ? 0 : nl + 1);
}

inline double now_ms() {
    using namespace std::chrono;
    return static_cast<double>(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

}  // namespace detail

/// One study: an event-sourced state machine over a pipeline. Every state
/// change is a single appended line in events.jsonl; opening a study replays it.
class Study {
public:
    using ZooLoader = std::function<std::shared_ptr<const zoo::ModelZoo>(const std::string&)>;

    static std::unique_ptr<Study> create(const std::filesystem::path& dir, const std::string& id, StudyConfig cfg,
                                         std::shared_ptr<const zoo::ModelZoo> z, CommitHook hook = {}) {
        cfg.validate();
        std::unique_ptr<Study> s(new Study(dir, id, std::move(cfg), std::move(z)));
        s->hook_ = std::move(hook);
        const auto& eval = s->zoo_->eval_points.indices;
        const std::size_t q = static_cast<std::size_t>(s->cfg_.his.questions_per_model);
        const std::size_t p = 2 * static_cast<std::size_t>(s->cfg_.practice);
        std::vector<std::size_t> pts;
        if (s->zoo_->model_class == zoo::ModelClass::tree) {
            if (eval.size() < q + p)
                throw InvalidArgument("zoo has " + std::to_string(eval.size()) + " evaluation points, need " +
                                      std::to_string(q + p));
            auto rng = make_rng(s->cfg_.seed, {0x9e57});
            for (auto i : sample_without_replacement(eval.size(), q + p, rng)) pts.push_back(eval[i]);
        }
        for (int m : s->cfg_.extra_models) s->zoo_->at(m);
        std::filesystem::create_directories(dir);
        if (std::filesystem::exists(s->log_path())) throw StateError("study " + id + " already exists");
        s->init_points(pts);
        s->current_ = s->next_target(s->pipeline_);
        nlohmann::json ev = {{"type", "created"},
                             {"study", id},
                             {"config", s->cfg_},
                             {"points", pts},
                             {"next", s->current_->model_id}};
        s->commit(ev);
        return s;
    }

    static std::unique_ptr<Study> open(const std::filesystem::path& dir, const ZooLoader& load, CommitHook hook = {}) {
        const auto log = (dir / "events.jsonl").string();
        if (!std::filesystem::exists(log)) throw NotFound("no study in " + dir.string());
        detail::truncate_torn_tail(log);
        auto events = oracle::read_jsonl(log);
        if (events.empty() || events[0].at("type") != "created") throw ParseError(log + ": missing creation event");
        const auto& c = events[0];
        auto cfg = c.at("config").get<StudyConfig>();
        std::unique_ptr<Study> s(new Study(dir, c.at("study").get<std::string>(), cfg, load(cfg.zoo)));
        s->init_points(c.at("points").get<std::vector<std::size_t>>());
        s->current_ = s->next_target(s->pipeline_);
        s->check_next(c, "creation");
        s->events_ = 1;
        std::optional<nlohmann::json> snapshot;
        if (std::filesystem::exists(s->snapshot_path())) snapshot = zoo::detail::read_json(s->snapshot_path());
        for (std::size_t i = 1; i < events.size(); ++i) {
            s->apply(events[i], std::nullopt);
            ++s->events_;
            if (snapshot && snapshot->at("events").get<std::size_t>() == s->events_ &&
                snapshot->at("status") != s->status_json())
                throw Error("study " + s->id_ + ": replay disagrees with the snapshot at event " +
                            std::to_string(s->events_));
        }
        s->write_artifacts();
        s->hook_ = std::move(hook);
        return s;
    }

    const std::string& id() const { return id_; }
    const StudyConfig& config() const { return cfg_; }
    Status status() const { return status_; }
    bayesopt::PipelineTrace trace() const { return pipeline_.trace(); }
    std::string log_path() const { return (dir_ / "events.jsonl").string(); }
    std::string snapshot_path() const { return (dir_ / "snapshot.json").string(); }
    std::filesystem::path trace_dir() const { return dir_ / "trace"; }

    int iteration() const {
        const int done = static_cast<int>(pipeline_.steps().size());
        return status_ == Status::complete ? done : done + 1;
    }

    nlohmann::json status_json() const {
        std::lock_guard lock(mu_);
        return status_json_locked();
    }

    nlohmann::json create_session(const std::string& pseudonym) {
        std::lock_guard lock(mu_);
        require_awaiting();
        const auto set = quiz_set(current_->model_id);
        Session s;
        s.id = id_ + "-" + std::to_string(session_order_.size() + 1);
        s.pseudonym = pseudonym.empty() ? s.id : pseudonym;
        s.step = step();
        s.order.resize(set.questions.size());
        std::iota(s.order.begin(), s.order.end(), std::size_t{0});
        auto rng = make_rng(cfg_.seed, {0x5e55, static_cast<std::uint64_t>(s.step), session_order_.size()});
        std::shuffle(s.order.begin(), s.order.end(), rng);
        commit({{"type", "session"}, {"session", s.id}, {"pseudonym", s.pseudonym}, {"step", s.step}, {"order", s.order}});
        return {{"session", s.id}, {"study", id_}, {"pseudonym", s.pseudonym}, {"iteration", iteration()},
                {"questions", s.order.size()}};
    }

    nlohmann::json quiz(const std::string& session_id) const {
        std::lock_guard lock(mu_);
        require_awaiting();
        const auto& s = session(session_id);
        if (s.step != step()) throw StateError("session " + session_id + " belongs to an earlier iteration");
        const int model = current_->model_id;
        const auto set = quiz_set(model);
        const auto& ds = *zoo_->dataset;
        std::vector<const tree::TreeModel*> expl;
        nlohmann::json trees = nlohmann::json::array();
        auto expl_index = [&](const tree::TreeModel* t) {
            for (std::size_t i = 0; i < expl.size(); ++i)
                if (expl[i] == t) return i;
            expl.push_back(t);
            trees.push_back(tree::tree_to_json(*t, ds.feature_names));
            return expl.size() - 1;
        };
        auto item = [&](const QuizItem& q) {
            nlohmann::json feats = nlohmann::json::array();
            std::vector<int> used;
            for (const auto& nd : q.explanation->nodes)
                if (!nd.is_leaf()) used.push_back(nd.feature);
            std::sort(used.begin(), used.end());
            used.erase(std::unique(used.begin(), used.end()), used.end());
            for (int f : used) {
                const auto col = ds.feature_column[static_cast<std::size_t>(f)];
                feats.push_back({{"feature", f},
                                 {"name", ds.feature_names[static_cast<std::size_t>(f)]},
                                 {"value", ds.row(q.point)[static_cast<std::size_t>(f)]},
                                 {"column", ds.schema.columns[col].name},
                                 {"display", ds.display_value(q.point, col)}});
            }
            nlohmann::json j = {{"question", q.id}, {"point", q.point}, {"explanation", expl_index(q.explanation)},
                                {"features", std::move(feats)}};
            if (auto it = s.answers.find(q.id); it != s.answers.end()) j["answered"] = true;
            return j;
        };
        nlohmann::json qs = nlohmann::json::array(), practice = nlohmann::json::array(),
                       backup = nlohmann::json::array();
        for (auto k : s.order) qs.push_back(item(set.questions[k]));
        for (std::size_t k = 0; k < set.practice.size(); ++k)
            (static_cast<int>(k) < cfg_.practice ? practice : backup).push_back(item(set.practice[k]));
        return {{"study", id_},
                {"session", session_id},
                {"iteration", iteration()},
                {"model", model},
                {"labels", {0, 1}},
                {"explanations", std::move(trees)},
                {"questions", std::move(qs)},
                {"practice", std::move(practice)},
                {"backup_practice", std::move(backup)}};
    }

    /// Idempotent by (session, question): a repeated identical submission is
    /// acknowledged without a second log entry.
    nlohmann::json submit(const nlohmann::json& body, double received_at) {
        std::lock_guard lock(mu_);
        const auto sid = body.at("session").get<std::string>();
        const auto qid = body.at("question").get<std::string>();
        const auto& s = session(sid);
        Answer a;
        a.question = qid;
        a.rt_ms = body.at("rt_ms").get<double>();
        a.label = body.at("label").get<int>();
        a.shown_at = body.value("shown_at", 0.0);
        a.answered_at = body.value("answered_at", a.shown_at + a.rt_ms);
        if (!std::isfinite(a.rt_ms) || a.rt_ms < 0) throw InvalidArgument("rt_ms must be a non-negative number");
        if (a.label != 0 && a.label != 1) throw InvalidArgument("label must be 0 or 1");
        if (auto it = s.answers.find(qid); it != s.answers.end()) {
            const auto& old = it->second;
            if (old.rt_ms != a.rt_ms || old.label != a.label)
                throw StateError("question " + qid + " of session " + sid + " was already answered differently");
            return {{"stored", false}, {"duplicate", true}, {"answer", old}};
        }
        require_awaiting();
        if (s.step != step()) throw StateError("session " + sid + " belongs to an earlier iteration");
        const auto set = quiz_set(current_->model_id);
        const auto* q = set.find(qid);
        if (!q) throw NotFound("session " + sid + " has no question " + qid);
        a.point = q->point;
        a.practice = qid.front() == 'p';
        a.correct = q->explanation->predict(zoo_->dataset->row(q->point)) == a.label;
        a.received_at = received_at;
        a.valid = std::abs(a.rt_ms - (a.answered_at - a.shown_at)) <= cfg_.rt_tolerance_ms;
        commit({{"type", "response"}, {"session", sid}, {"answer", a}});
        return {{"stored", true}, {"duplicate", false}, {"answer", a}};
    }

    std::size_t completed_sessions() const {
        std::lock_guard lock(mu_);
        return completed_locked().size();
    }

    /// Aggregates the current model's quiz, labels it and selects the next
    /// model, all committed by one appended event. `expected_iteration`, when
    /// given and already past, returns that iteration's recorded outcome.
    nlohmann::json advance(std::optional<int> min_users = std::nullopt, std::optional<int> expected_iteration = std::nullopt) {
        std::lock_guard lock(mu_);
        if (expected_iteration && *expected_iteration < iteration()) {
            const auto k = static_cast<std::size_t>(*expected_iteration - 1);
            if (*expected_iteration < 1 || k >= outcomes_.size())
                throw InvalidArgument("no iteration " + std::to_string(*expected_iteration));
            return outcomes_[k];
        }
        require_awaiting();
        const int need = min_users.value_or(cfg_.min_users);
        if (need < 1) throw InvalidArgument("min_users must be >= 1");
        const int model = current_->model_id;
        const auto set = quiz_set(model);
        const auto done = completed_locked();
        if (!set.questions.empty() && static_cast<int>(done.size()) < need) {
            const int more = need - static_cast<int>(done.size());
            throw StateError(std::to_string(more) + (more == 1 ? " more session required" : " more sessions required"));
        }
        status_ = Status::advancing;
        try {
            auto eval = evaluate(model, set, done);
            const bool extra = pipeline_.done();
            auto next = pipeline_;
            next.record(*current_, eval, extra);
            auto target = next_target(next);
            std::vector<std::string> ids;
            for (const auto* s : done) ids.push_back(s->id);
            nlohmann::json ev = {{"type", "advanced"},
                                 {"step", step()},
                                 {"model", model},
                                 {"extra", extra},
                                 {"mean_rt", eval.mean_rt},
                                 {"prior", eval.prior},
                                 {"boundary_fraction", eval.boundary_fraction},
                                 {"warnings", eval.warnings},
                                 {"sessions", ids},
                                 {"next", target ? nlohmann::json(target->model_id) : nlohmann::json(nullptr)}};
            commit(ev, std::make_pair(std::move(next), std::move(target)));
        } catch (...) {
            if (status_ == Status::advancing) status_ = Status::awaiting_responses;
            throw;
        }
        return outcomes_.back();
    }

private:
    Study(std::filesystem::path dir, std::string id, StudyConfig cfg, std::shared_ptr<const zoo::ModelZoo> z)
        : dir_(std::move(dir)), id_(std::move(id)), cfg_(std::move(cfg)), zoo_(std::move(z)),
          pipeline_(*zoo_, pipeline_options(cfg_)) {}

    static bayesopt::PipelineOptions pipeline_options(const StudyConfig& c) {
        bayesopt::PipelineOptions o;
        o.iterations = c.iterations;
        o.kappa = c.kappa;
        o.restarts = c.restarts;
        o.seed = c.seed;
        return o;
    }

    int step() const { return static_cast<int>(pipeline_.steps().size()); }

    void init_points(const std::vector<std::size_t>& pts) {
        const std::size_t q = static_cast<std::size_t>(cfg_.his.questions_per_model);
        if (zoo_->model_class != zoo::ModelClass::tree) return;
        if (pts.size() < q + 2 * static_cast<std::size_t>(cfg_.practice)) throw ParseError("study question points are incomplete");
        questions_.assign(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(q));
        practice_.assign(pts.begin() + static_cast<std::ptrdiff_t>(q), pts.end());
    }

    std::optional<bayesopt::Choice> next_target(const bayesopt::Pipeline& p) const {
        if (!p.done()) return p.propose();
        for (int m : cfg_.extra_models)
            if (!p.evaluated(m)) {
                bayesopt::Choice c;
                c.iteration = static_cast<int>(p.steps().size()) + 1;
                c.model_id = m;
                return c;
            }
        return std::nullopt;
    }

    /// Trees are explained by themselves on the study's fixed points; black-box
    /// models by their cached local surrogates at boundary members.
    QuizSet quiz_set(int model) const {
        const auto& r = zoo_->at(model);
        QuizSet set;
        auto qid = [](char c, std::size_t k) { return std::string(1, c) + std::to_string(k); };
        if (r.is_tree()) {
            for (std::size_t k = 0; k < questions_.size(); ++k) set.questions.push_back({qid('q', k), questions_[k], &r.tree()});
            for (std::size_t k = 0; k < practice_.size(); ++k) set.practice.push_back({qid('p', k), practice_[k], &r.tree()});
            return set;
        }
        if (!r.boundary) throw StateError("model " + std::to_string(model) + " has no cached boundary scan");
        set.boundary_fraction = r.boundary->fraction;
        const std::size_t q = static_cast<std::size_t>(cfg_.his.questions_per_model);
        const std::size_t p = 2 * static_cast<std::size_t>(cfg_.practice);
        for (const auto& e : r.boundary->explanations) {
            if (!e.surrogate) continue;
            if (set.questions.size() < q)
                set.questions.push_back({qid('q', set.questions.size()), e.anchor, &*e.surrogate});
            else if (set.practice.size() < p)
                set.practice.push_back({qid('p', set.practice.size()), e.anchor, &*e.surrogate});
        }
        for (std::size_t k = 0; set.practice.size() < p && k < set.questions.size(); ++k)
            set.practice.push_back({qid('p', set.practice.size()), set.questions[k].point, set.questions[k].explanation});
        if (set.questions.empty() && set.boundary_fraction > 0.0) {
            set.warnings.push_back("no boundary members despite boundary fraction " +
                                   std::to_string(set.boundary_fraction) + "; using 0");
            set.boundary_fraction = 0.0;
        }
        return set;
    }

    std::vector<const Session*> completed_locked() const {
        std::vector<const Session*> out;
        if (status_ == Status::complete) return out;
        const auto set = quiz_set(current_->model_id);
        for (const auto& id : session_order_) {
            const auto& s = sessions_.at(id);
            if (s.step != step()) continue;
            bool all = true;
            for (const auto& q : set.questions) all = all && s.answers.count(q.id);
            if (all) out.push_back(&s);
        }
        return out;
    }

    bayesopt::Evaluation evaluate(int model, const QuizSet& set, const std::vector<const Session*>& done) const {
        bayesopt::Evaluation e;
        e.boundary_fraction = set.boundary_fraction;
        e.warnings = set.warnings;
        double mean_his = 0.0;
        if (!set.questions.empty()) {
            std::vector<oracle::Response> rs;
            for (const auto* s : done)
                for (const auto& q : set.questions) {
                    const auto& a = s->answers.at(q.id);
                    if (a.valid) rs.push_back({s->id, model, a.point, a.rt_ms / 1000.0, a.correct});
                }
            const auto agg = oracle::aggregate_quiz(rs, cfg_.his, cfg_.exclusion);
            const auto& m = agg.at(model);
            for (const auto& p : m.points) mean_his += p.his;
            mean_his /= static_cast<double>(m.points.size());
            e.mean_rt = m.mean_rt;
        }
        if (zoo_->model_class == zoo::ModelClass::tree) {
            e.prior = mean_his;
        } else {
            const double q = e.boundary_fraction;
            e.prior = q * mean_his + (1.0 - q) * cfg_.his.max_rt;
            e.mean_rt = cfg_.his.max_rt - e.prior;
        }
        return e;
    }

    void require_awaiting() const {
        if (status_ == Status::complete) throw StateError("study " + id_ + " is complete");
        if (status_ == Status::advancing) throw StateError("study " + id_ + " is advancing");
    }

    const Session& session(const std::string& id) const {
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFound("no session " + id + " in study " + id_);
        return it->second;
    }

    void check_next(const nlohmann::json& ev, const std::string& what) const {
        const auto& n = ev.at("next");
        const int want = n.is_null() ? -1 : n.get<int>();
        const int got = current_ ? current_->model_id : -1;
        if (want != got)
            throw Error("study " + id_ + ": replay of " + what + " selected model " + std::to_string(got) +
                        " but the log recorded " + std::to_string(want));
    }

    using Prepared = std::pair<bayesopt::Pipeline, std::optional<bayesopt::Choice>>;

    void commit(const nlohmann::json& ev, std::optional<Prepared> prepared = std::nullopt) {
        const auto line = ev.dump();
        if (hook_) hook_(log_path(), line);
        detail::append_durable(log_path(), line);
        ++events_;
        if (ev.at("type") != "created") apply(ev, std::move(prepared));
        if (ev.at("type") != "response" && ev.at("type") != "session") write_artifacts();
    }

    void apply(const nlohmann::json& ev, std::optional<Prepared> prepared) {
        const auto type = ev.at("type").get<std::string>();
        if (type == "session") {
            Session s;
            s.id = ev.at("session").get<std::string>();
            s.pseudonym = ev.at("pseudonym").get<std::string>();
            s.step = ev.at("step").get<int>();
            s.order = ev.at("order").get<std::vector<std::size_t>>();
            session_order_.push_back(s.id);
            sessions_.emplace(s.id, std::move(s));
        } else if (type == "response") {
            auto a = ev.at("answer").get<Answer>();
            auto& s = sessions_.at(ev.at("session").get<std::string>());
            s.answers.emplace(a.question, a);
        } else if (type == "advanced") {
            if (!current_ || ev.at("model").get<int>() != current_->model_id)
                throw Error("study " + id_ + ": advance event for an unexpected model");
            if (prepared) {
                pipeline_ = std::move(prepared->first);
                current_ = std::move(prepared->second);
            } else {
                bayesopt::Evaluation e{ev.at("mean_rt").get<double>(), ev.at("prior").get<double>(),
                                       ev.at("boundary_fraction").get<double>(),
                                       ev.at("warnings").get<std::vector<std::string>>()};
                pipeline_.record(*current_, e, ev.at("extra").get<bool>());
                current_ = next_target(pipeline_);
                check_next(ev, "iteration " + std::to_string(ev.at("step").get<int>() + 1));
            }
            status_ = current_ ? Status::awaiting_responses : Status::complete;
            nlohmann::json out = {{"iteration", ev.at("step").get<int>() + 1},
                                  {"model", ev.at("model")},
                                  {"mean_rt", ev.at("mean_rt")},
                                  {"prior", ev.at("prior")},
                                  {"boundary_fraction", ev.at("boundary_fraction")},
                                  {"sessions", ev.at("sessions").size()},
                                  {"next_model", ev.at("next")},
                                  {"status", to_string(status_)}};
            if (status_ == Status::complete) out["final_model"] = pipeline_.trace().final_model;
            outcomes_.push_back(std::move(out));
        } else {
            throw ParseError("unknown event type '" + type + "'");
        }
    }

    nlohmann::json status_json_locked() const {
        auto t = pipeline_.trace();
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : t.steps) steps.push_back(bayesopt::step_to_json(s));
        std::size_t sessions = 0, completed = 0;
        if (status_ != Status::complete) {
            for (const auto& [id, s] : sessions_) sessions += s.step == step();
            completed = completed_locked().size();
        }
        nlohmann::json j = {{"study", id_},
                            {"status", to_string(status_)},
                            {"iteration", iteration()},
                            {"budget", cfg_.iterations},
                            {"current_model", current_ ? nlohmann::json(current_->model_id) : nlohmann::json(nullptr)},
                            {"sessions", sessions},
                            {"completed_sessions", completed},
                            {"min_users", cfg_.min_users},
                            {"trace", std::move(steps)}};
        if (status_ == Status::complete) {
            j["final_model"] = t.final_model;
            j["final_score"] = t.final_score;
            j["tie"] = t.tie;
            j["tied_models"] = t.tied_models;
        }
        return j;
    }

    void write_artifacts() const {
        zoo::detail::write_json(snapshot_path(), {{"events", events_}, {"status", status_json_locked()}});
        bayesopt::save_trace(pipeline_.trace(), trace_dir().string());
    }

    std::filesystem::path dir_;
    std::string id_;
    StudyConfig cfg_;
    std::shared_ptr<const zoo::ModelZoo> zoo_;
    bayesopt::Pipeline pipeline_;
    std::optional<bayesopt::Choice> current_;
    Status status_ = Status::awaiting_responses;
    std::vector<std::size_t> questions_, practice_;
    std::map<std::string, Session> sessions_;
    std::vector<std::string> session_order_;
    std::vector<nlohmann::json> outcomes_;
    std::size_t events_ = 0;
    CommitHook hook_;
    mutable std::mutex mu_;
};

/// All studies under one state directory; studies found there are replayed on start.
class StudyService {
public:
    explicit StudyService(std::filesystem::path state_dir, std::string default_zoo = {}, CommitHook hook = {})
        : state_(std::move(state_dir)), default_zoo_(std::move(default_zoo)), hook_(std::move(hook)) {
        std::filesystem::create_directories(state_);
        std::vector<std::filesystem::path> dirs;
        for (const auto& e : std::filesystem::directory_iterator(state_))
            if (e.is_directory() && std::filesystem::exists(e.path() / "events.jsonl")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) {
            auto s = Study::open(d, [this](const std::string& p) { return zoo(p); }, hook_);
            studies_.emplace(s->id(), std::move(s));
        }
    }

    std::function<double()> clock = detail::now_ms;

    std::string create_study(const nlohmann::json& body) {
        auto cfg = body.get<StudyConfig>();
        if (cfg.zoo.empty()) cfg.zoo = default_zoo_;
        if (cfg.zoo.empty()) throw InvalidArgument("no zoo given and the service has no default zoo");
        auto z = zoo(cfg.zoo);
        std::lock_guard lock(mu_);
        int n = 1;
        for (const auto& [id, s] : studies_) n = std::max(n, std::stoi(id.substr(id.rfind('-') + 1)) + 1);
        char buf[32];
        std::snprintf(buf, sizeof buf, "study-%04d", n);
        auto s = Study::create(state_ / buf, buf, std::move(cfg), std::move(z), hook_);
        const std::string id = s->id();
        studies_.emplace(id, std::move(s));
        return id;
    }

    Study& study(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = studies_.find(id);
        if (it == studies_.end()) throw NotFound("no study " + id);
        return *it->second;
    }

    Study& study_of_session(const std::string& session) {
        auto dash = session.rfind('-');
        if (dash == std::string::npos) throw NotFound("no session " + session);
        return study(session.substr(0, dash));
    }

    nlohmann::json submit(const nlohmann::json& body) {
        return study_of_session(body.at("session").get<std::string>()).submit(body, clock());
    }

    std::shared_ptr<const zoo::ModelZoo> zoo(const std::string& path) {
        std::lock_guard lock(zoo_mu_);
        if (!std::filesystem::exists(std::filesystem::path(path) / "manifest.json")) throw NotFound("no zoo at " + path);
        auto key = std::filesystem::canonical(path).string();
        auto it = zoos_.find(key);
        if (it != zoos_.end()) return it->second;
        auto z = std::make_shared<const zoo::ModelZoo>(zoo::load_zoo(path));
        zoos_.emplace(key, z);
        return z;
    }

private:
    std::filesystem::path state_;
    std::string default_zoo_;
    CommitHook hook_;
    std::mutex mu_, zoo_mu_;
    std::map<std::string, std::unique_ptr<Study>> studies_;
    std::map<std::string, std::shared_ptr<const zoo::ModelZoo>> zoos_;
};

}  // namespace hipo::service
