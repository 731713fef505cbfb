#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <quadmath.h>

#include "hipo/bayesopt/gp.hpp"
#include "hipo/data/csv.hpp"
#include "hipo/data/synthetic.hpp"
#include "hipo/experiments/analyses.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/oracle/oracle.hpp"
#include "hipo/service/server.hpp"
#include "hipo/tree/prune.hpp"
#include "hipo/zoo/silf.hpp"
#include "hipo/zoo/store.hpp"

namespace fs = std::filesystem;
using namespace hipo;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Datasets and zoos ---------------------------------------------------------

using DatasetPtr = std::shared_ptr<const data::Dataset>;

DatasetPtr load_uci(const std::string& name, double train_fraction) {
    const std::string dir = HIPO_DATA_DIR;
    auto schema = data::Schema::load(dir + "/" + name + ".schema");
    auto raw = data::load_csv(dir + "/" + name + ".csv", schema);
    return std::make_shared<const data::Dataset>(
        data::split(data::preprocess(raw, true, kSeed), train_fraction, kSeed));
}

DatasetPtr mushroom() {
    static auto ds = load_uci("mushroom", 0.8);
    return ds;
}

DatasetPtr census() {
    static auto ds = load_uci("census", 0.6);
    return ds;
}

DatasetPtr synthetic() {
    static auto ds = std::make_shared<const data::Dataset>(
        data::split(data::preprocess(data::generate_synthetic(90000, kSeed), true, kSeed), 0.8, kSeed));
    return ds;
}

DatasetPtr covertype() {
    static auto ds = std::make_shared<const data::Dataset>(
        data::split(data::preprocess(data::generate_covertype_like(50000, kSeed), false, kSeed), 0.75, kSeed));
    return ds;
}

const zoo::ModelZoo& mushroom_zoo() {
    static auto z = [] {
        zoo::ZooOptions opt;
        opt.max_restarts = 500;
        return zoo::generate_zoo(mushroom(), zoo::ModelClass::tree, 500, zoo::SilfParams::for_threshold(0.95), kSeed, opt);
    }();
    return z;
}

const zoo::ModelZoo& census_zoo() {
    static auto z = zoo::generate_zoo(census(), zoo::ModelClass::tree, 500, zoo::SilfParams::for_threshold(0.8), kSeed);
    return z;
}

const zoo::ModelZoo& synthetic_zoo() {
    static auto z = zoo::generate_zoo(synthetic(), zoo::ModelClass::tree, 500, zoo::SilfParams::for_threshold(0.9), kSeed);
    return z;
}

// 1 -------------------------------------------------------------------------

Outcome silf_suite() {
    double worst = 0.0;
    auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    check(zoo::silf(0.05, 0.1, 0.5), 0.0);
    check(zoo::silf(0.12, 0.1, 0.5), 0.0245);
    check(zoo::silf(0.30, 0.1, 0.5), 0.20);
    double jump = 0.0;
    for (double eps : {0.01, 0.05, 0.1, 0.3, 0.5})
        for (double beta : {0.1, 0.25, 0.5, 0.75, 1.0}) {
            const double lo = (1 - beta) * eps, hi = (1 + beta) * eps;
            for (double b : {lo, hi}) {
                const double left = zoo::silf(std::nextafter(b, 0.0), eps, beta);
                const double at = zoo::silf(b, eps, beta);
                const double right = zoo::silf(std::nextafter(b, 2.0), eps, beta);
                jump = std::max({jump, std::abs(left - at), std::abs(right - at)});
            }
        }
    const bool ok = worst <= 1e-12 && jump <= 1e-12;
    return {ok, fmt("branch examples max error %.2e; max jump across branch boundaries %.2e", worst, jump)};
}

// 2 -------------------------------------------------------------------------

Outcome zoo_thresholds() {
    const auto& m = mushroom_zoo();
    double lowest = 1.0;
    int perfect = 0;
    for (const auto& r : m.records) {
        lowest = std::min(lowest, r.validation_accuracy);
        perfect += r.validation_accuracy == 1.0;
    }
    std::set<std::string> trees;
    for (const auto& r : m.records) trees.insert(tree::tree_to_json(r.tree()).at("nodes").dump());
    const std::size_t distinct = trees.size();
    const auto& c = census_zoo();
    const auto& s = synthetic_zoo();
    const bool ok = distinct >= 100 && lowest >= 0.95 && perfect >= 1 && c.size() > 0 && s.size() > 0;
    return {ok, fmt("mushroom: %zu distinct of %zu restarts, min accuracy %.4f, %d at 1.0; census %zu models "
                    "(best %.4f); synthetic %zu models (best %.4f)",
                    distinct, m.restarts, lowest, perfect, c.size(), c.best_accuracy, s.size(), s.best_accuracy)};
}

// 3 -------------------------------------------------------------------------

Outcome pruning_property() {
    const std::vector<std::pair<const char*, DatasetPtr>> sets = {
        {"synthetic", synthetic()}, {"mushroom", mushroom()}, {"census", census()}};
    int violations = 0, trees = 0, shrunk = 0;
    for (std::size_t d = 0; d < sets.size(); ++d) {
        const auto& ds = *sets[d].second;
        tree::TrainingSet ts(ds.matrix(), ds.labels, ds.indices(data::Partition::train));
        auto val = ds.indices(data::Partition::validate);
        auto rng = make_rng(kSeed, {0x3a, d});
        const int n = d == 2 ? 66 : 67;
        for (int i = 0; i < n; ++i, ++trees) {
            auto hp = zoo::sample_tree_hyperparams(rng, ds.n_features);
            hp.max_depth = std::uniform_int_distribution<int>(1, 10)(rng);
            auto t = tree::fit_tree(ts, hp);
            auto p = tree::prune(t, ds.matrix(), ds.labels, val);
            const double a0 = tree::accuracy(t, ds.matrix(), ds.labels, val);
            const double a1 = tree::accuracy(p, ds.matrix(), ds.labels, val);
            violations += a1 < a0 || p.node_count() > t.node_count();
            shrunk += p.node_count() < t.node_count();
        }
    }
    return {trees == 200 && violations == 0,
            fmt("%d random trees over 3 datasets, %d violations, %d trees shrunk by pruning", trees, violations, shrunk)};
}

// 4 -------------------------------------------------------------------------

using Quad = __float128;
using LVec = std::vector<Quad>;
using LMat = std::vector<LVec>;

LMat inverse(LMat a) {
    const std::size_t n = a.size();
    LMat inv(n, LVec(n, 0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (fabsq(a[r][c]) > fabsq(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(inv[c], inv[piv]);
        const Quad d = a[c][c];
        for (std::size_t j = 0; j < n; ++j) {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const Quad f = a[r][c];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[c][j];
                inv[r][j] -= f * inv[c][j];
            }
        }
    }
    return inv;
}

bayesopt::Prediction dense_posterior(const std::vector<bayesopt::Labeled>& L, const bayesopt::KernelParams& k,
                                     const std::vector<double>& f) {
    const std::size_t n = L.size();
    Quad mean = 0;
    for (const auto& l : L) mean += l.y;
    mean /= n;
    Quad var = 0;
    for (const auto& l : L) var += (l.y - mean) * (l.y - mean);
    Quad sd = sqrtq(var / n);
    if (sd == 0) sd = 1;
    const Quad ls = k.length_scale, sv = k.signal_variance;
    auto kern = [&](const std::vector<double>& a, const std::vector<double>& b) {
        Quad d = 0;
        for (std::size_t t = 0; t < a.size(); ++t) d += (Quad(a[t]) - b[t]) * (Quad(a[t]) - b[t]);
        return sv * expq(-d / (2 * ls * ls));
    };
    LMat K(n, LVec(n));
    LVec ks(n), yn(n);
    for (std::size_t i = 0; i < n; ++i) {
        yn[i] = (L[i].y - mean) / sd;
        ks[i] = kern(L[i].features, f);
        for (std::size_t j = 0; j < n; ++j) K[i][j] = kern(L[i].features, L[j].features) + (i == j ? k.jitter : 0.0);
    }
    auto Ki = inverse(K);
    Quad mu = 0, q = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            mu += ks[i] * Ki[i][j] * yn[j];
            q += ks[i] * Ki[i][j] * ks[j];
        }
    const Quad v = sv - q > 0 ? sv - q : 0;
    return {double(mu * sd + mean), double(sqrtq(v) * sd)};
}

Outcome gp_equivalence() {
    double worst_mu = 0.0, worst_sigma = 0.0, worst_interp = 0.0, worst_grad = 0.0;
    auto log_uniform = [](Rng& rng, double lo, double hi) { return std::exp(std::log(lo) + uniform01(rng) * std::log(hi / lo)); };
    for (int fx = 0; fx < 100; ++fx) {
        auto rng = make_rng(kSeed, {0x4, static_cast<std::uint64_t>(fx)});
        const std::size_t n = 2 + rng() % 11, p = 1 + rng() % 8;
        std::vector<bayesopt::Labeled> L;
        for (std::size_t i = 0; i < n; ++i) {
            bayesopt::Labeled l{static_cast<int>(i), {}, 60.0 * uniform01(rng)};
            for (std::size_t j = 0; j < p; ++j) l.features.push_back(uniform01(rng));
            L.push_back(l);
        }
        const bayesopt::KernelParams k{log_uniform(rng, 0.1, 10.0), log_uniform(rng, 0.05, 1.0)};
        auto gp = bayesopt::GaussianProcess::condition(L, k);
        for (int q = 0; q < 10; ++q) {
            std::vector<double> f;
            for (std::size_t j = 0; j < p; ++j) f.push_back(uniform01(rng));
            auto a = gp.predict(f);
            auto b = dense_posterior(L, k, f);
            worst_mu = std::max(worst_mu, std::abs(a.mu - b.mu));
            worst_sigma = std::max(worst_sigma, std::abs(a.sigma - b.sigma));
        }
        bayesopt::FitOptions fo;
        fo.seed = derive_seed(kSeed, {0x4f, static_cast<std::uint64_t>(fx)});
        auto fitted = bayesopt::GaussianProcess::fit(L, fo);
        for (const auto& l : L) worst_interp = std::max(worst_interp, std::abs(fitted.predict(l.features).mu - l.y));
        auto g = gp.lml_with_gradient(k).grad;
        const double h = 1e-5, ta = std::log(k.signal_variance), tb = std::log(k.length_scale);
        auto at = [&](double a, double b) { return gp.log_marginal_likelihood_at({std::exp(a), std::exp(b)}); };
        const double fd[2] = {(at(ta + h, tb) - at(ta - h, tb)) / (2 * h), (at(ta, tb + h) - at(ta, tb - h)) / (2 * h)};
        for (int i = 0; i < 2; ++i) worst_grad = std::max(worst_grad, std::abs(fd[i] - g(i)) / std::max(1.0, std::abs(fd[i])));
    }
    const bool ok = worst_mu <= 1e-8 && worst_sigma <= 1e-8 && worst_interp <= 1e-3 && worst_grad <= 1e-4;
    return {ok, fmt("100 fixtures: max |dmu| %.2e, max |dsigma| %.2e, interpolation %.2e, gradient rel. error %.2e",
                    worst_mu, worst_sigma, worst_interp, worst_grad)};
}

// 5 -------------------------------------------------------------------------

Outcome cross_proxy() {
    auto gm = experiments::cross_proxy_ranks(mushroom_zoo());
    auto gc = experiments::cross_proxy_ranks(census_zoo());
    auto gs = experiments::cross_proxy_ranks(synthetic_zoo());
    const auto m = experiments::max_off_diagonal(gm), c = experiments::max_off_diagonal(gc),
               s = experiments::max_off_diagonal(gs);
    bool diag = true;
    for (const auto* g : {&gm, &gc, &gs})
        for (int a = 0; a < 4; ++a) diag = diag && (*g)[a][a] == 0;
    const bool ok = diag && m >= 5 && c >= 5 && s < std::max(m, c);
    return {ok, fmt("max off-diagonal rank: mushroom %zu of %zu, census %zu of %zu, synthetic %zu of %zu",
                    m, mushroom_zoo().size(), c, census_zoo().size(), s, synthetic_zoo().size())};
}

// 6 -------------------------------------------------------------------------

Outcome sample_curves() {
    bool ok = true;
    std::string detail;
    const std::vector<std::pair<const char*, const zoo::ModelZoo*>> zoos = {
        {"mushroom", &mushroom_zoo()}, {"census", &census_zoo()}, {"synthetic", &synthetic_zoo()}};
    for (const auto& [name, z] : zoos)
        for (auto p : {tree::Proxy::path_length, tree::Proxy::distinct_features}) {
            auto c = experiments::sampled_rank_curve(*z, p, experiments::kDefaultSampleSizes, 50, kSeed);
            const double at8 = c.mean(0), at512 = c.mean(6), at1000 = c.mean(7);
            const bool full = c.sizes[7] == z->eval_points.indices.size();
            ok = ok && full && at512 <= at8 && at1000 == 0.0;
            detail += fmt("%s%s/%s %.2f->%.2f->%.0f", detail.empty() ? "" : "; ", name, tree::to_string(p), at8, at512, at1000);
        }
    return {ok, "mean rank at s=8 -> 512 -> 1000: " + detail};
}

// 7 -------------------------------------------------------------------------

Outcome pipeline_vs_random() {
    int nonneg = 0, positive = 0;
    std::string detail;
    const std::vector<std::pair<const char*, const zoo::ModelZoo*>> zoos = {{"mushroom", &mushroom_zoo()},
                                                                             {"census", &census_zoo()}};
    for (const auto& [name, z] : zoos)
        for (auto p : tree::kAllProxies) {
            experiments::ComparisonOptions opt;
            opt.trials = 100;
            opt.draws = 1000;
            opt.k = 10;
            opt.kappa = 1.0;
            opt.seed = kSeed;
            auto c = experiments::pipeline_vs_random(*z, p, opt);
            const double margin = c.baseline_mean(9) - c.pipeline_mean(9);
            nonneg += margin >= 0.0;
            positive += margin > 0.0;
            detail += fmt("%s%s/%s %.2f vs %.2f", detail.empty() ? "" : "; ", name, tree::to_string(p),
                          c.pipeline_mean(9), c.baseline_mean(9));
        }
    return {nonneg == 8 && positive >= 6,
            fmt("margin >= 0 in %d/8, > 0 in %d/8 (pipeline vs random mean best rank at 10: ", nonneg, positive) + detail + ")"};
}

// 8 -------------------------------------------------------------------------

Outcome local_surrogates() {
    auto ds = covertype();
    zoo::ZooOptions opt;
    opt.eval_points = 100;
    auto z = zoo::generate_zoo(ds, zoo::ModelClass::mlp, 1, zoo::SilfParams::for_threshold(0.75), kSeed, opt);
    const auto& r = z.records.at(0);
    std::size_t accepted = 0, bad = 0;
    double min_fid = 1.0;
    int max_depth = 0;
    for (const auto& e : r.boundary->explanations) {
        if (!e.surrogate) continue;
        ++accepted;
        min_fid = std::min(min_fid, e.fidelity);
        max_depth = std::max(max_depth, e.surrogate->depth());
        bad += e.fidelity < 0.9 || e.surrogate->depth() > 10 || e.depth > 10;
    }
    auto pts = z.eval_points.indices;
    auto flat = explain::boundary_scan(explain::constant_predictor(1), *ds, pts, opt.region, kSeed);
    oracle::SimulatedOracle o(oracle::SimulatedOracleSpec::single_proxy(tree::Proxy::path_length), ds);
    zoo::ModelRecord constant;
    constant.model = tree::TreeModel{};
    oracle::HisConfig his;
    auto est = oracle::estimate_prior_local(constant, flat, o, his);
    const bool ok = accepted > 0 && bad == 0 && flat.fraction == 0.0 && est.prior == his.max_rt;
    return {ok, fmt("MLP accuracy %.4f after %zu restarts; %zu/%zu points on the boundary, min fidelity %.4f, max depth %d, "
                    "%zu violations; constant model fraction %.1f, prior %.1f",
                    r.validation_accuracy, z.restarts, accepted, r.boundary->explanations.size(), min_fid, max_depth,
                    bad, flat.fraction, est.prior)};
}

// 9 -------------------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * double(i + j - 1);
        i = j;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ra = average_ranks(a), rb = average_ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size(),
                 mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return saa == 0 && sbb == 0 ? 1.0 : sab / std::sqrt(saa * sbb);
}

Outcome oracle_bridge() {
    double worst = 1.0;
    std::string detail;
    const std::vector<std::pair<const char*, const zoo::ModelZoo*>> zoos = {{"mushroom", &mushroom_zoo()},
                                                                             {"census", &census_zoo()}};
    for (const auto& [name, z] : zoos)
        for (auto p : tree::kAllProxies) {
            std::size_t largest = 1;
            for (const auto& r : z->records) largest = std::max(largest, r.tree().node_count());
            const oracle::HisConfig his;
            const double weight = (his.max_rt - 5.0) / static_cast<double>(largest + 1);
            oracle::SimulatedOracle o(oracle::SimulatedOracleSpec::single_proxy(p, weight), z->dataset);
            std::vector<double> neg_prior, score;
            for (const auto& r : z->records) {
                auto e = oracle::estimate_prior_global(r, z->eval_points.indices, o, his);
                neg_prior.push_back(-std::round(e.prior * 1e9) / 1e9);
                score.push_back(std::round(tree::get(r.proxies, p) * 1e9) / 1e9);
            }
            const double rho = spearman(neg_prior, score);
            worst = std::min(worst, rho);
            detail += fmt("%s%s/%s %.12f", detail.empty() ? "" : "; ", name, tree::to_string(p), rho);
        }
    return {worst == 1.0, "Spearman(prior ranking, proxy ranking): " + detail};
}

// 10 ------------------------------------------------------------------------

struct ServiceProcess {
    pid_t pid = -1;
    int port = 0;
};

/// Starts the HTTP service in a child process. With `crash_on_advance`, the
/// child dies just before committing the advance of that iteration.
ServiceProcess start_service(const fs::path& state, int crash_on_advance) {
    int fds[2];
    if (::pipe(fds) != 0) throw Error("pipe failed");
    pid_t pid = ::fork();
    if (pid == 0) {
        ::close(fds[0]);
        service::CommitHook hook;
        if (crash_on_advance > 0)
            hook = [crash_on_advance](const std::string&, const std::string& line) {
                auto ev = json::parse(line);
                if (ev.at("type") == "advanced" && ev.at("step").get<int>() + 1 == crash_on_advance) ::_exit(9);
            };
        service::StudyService svc(state, {}, hook);
        httplib::Server server;
        service::install_routes(server, svc);
        const int port = server.bind_to_any_port("127.0.0.1");
        (void)!::write(fds[1], &port, sizeof port);
        ::close(fds[1]);
        server.listen_after_bind();
        ::_exit(0);
    }
    ::close(fds[1]);
    int port = 0;
    if (::read(fds[0], &port, sizeof port) != sizeof port) throw Error("service did not start");
    ::close(fds[0]);
    return {pid, port};
}

void stop_service(ServiceProcess& p) {
    if (p.pid <= 0) return;
    ::kill(p.pid, SIGTERM);
    ::waitpid(p.pid, nullptr, 0);
    p.pid = -1;
}

/// Runs a 4-iteration study with simulated participants over HTTP; returns the
/// trace bytes and the model selected after each advance.
std::pair<std::string, std::vector<int>> simulated_study(const fs::path& state, const std::string& zoo_dir,
                                                         const zoo::ModelZoo& z, int crash_at, bool* crashed) {
    fs::remove_all(state);
    auto svc = start_service(state, crash_at);
    const auto spec = oracle::SimulatedOracleSpec::parse("base_rt = 6\nnoise_sd = 1.5\nseed = 4\nweight.node_count = 0.8\n");
    std::vector<int> next;
    std::string id;
    auto client = [&] { return std::make_unique<httplib::Client>("127.0.0.1", svc.port); };
    {
        auto res = client()->Post("/v1/studies", json{{"zoo", zoo_dir}, {"iterations", 4}, {"min_users", 3}, {"seed", 11}}.dump(),
                                  "application/json");
        if (!res || res->status != 201) throw Error("study creation failed");
        id = json::parse(res->body).at("study");
    }
    for (int it = 1; it <= 4; ++it) {
        auto cli = client();
        for (int u = 0; u < 3; ++u) {
            auto s = cli->Post("/v1/studies/" + id + "/sessions", json{{"pseudonym", "sim" + std::to_string(u)}}.dump(), "application/json");
            const auto sid = json::parse(s->body).at("session").get<std::string>();
            auto q = json::parse(cli->Get("/v1/studies/" + id + "/quiz?session=" + sid)->body);
            const int model = q.at("model");
            for (const auto& item : q.at("questions")) {
                const std::size_t pt = item.at("point");
                const double rt = 1000.0 * oracle::simulate_response(spec, z.at(model).tree(), z.dataset->row(pt),
                                                                     z.dataset->feature_column, model, pt, u);
                json r = {{"session", sid}, {"question", item.at("question")}, {"rt_ms", rt}, {"label", 1},
                          {"shown_at", 0.0}, {"answered_at", rt}};
                cli->Post("/v1/responses", r.dump(), "application/json");
            }
        }
        auto adv = cli->Post("/v1/studies/" + id + "/advance", "{}", "application/json");
        if (!adv) {
            int status = 0;
            ::waitpid(svc.pid, &status, 0);
            svc.pid = -1;
            *crashed = WIFEXITED(status) && WEXITSTATUS(status) == 9;
            svc = start_service(state, 0);
            cli = client();
            auto st = json::parse(cli->Get("/v1/studies/" + id)->body);
            if (st.at("iteration") != it || st.at("status") != "awaiting-responses") throw Error("study did not resume");
            adv = cli->Post("/v1/studies/" + id + "/advance", "{}", "application/json");
        }
        if (!adv || adv->status != 200) throw Error("advance failed: " + (adv ? adv->body : std::string("no response")));
        auto out = json::parse(adv->body);
        next.push_back(out.at("next_model").is_null() ? -1 : out.at("next_model").get<int>());
    }
    stop_service(svc);
    std::ifstream in(state / id / "trace" / "trace.jsonl", std::ios::binary);
    return {std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()), next};
}

Outcome crash_recovery() {
    const auto root = fs::temp_directory_path() / ("hipo_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    zoo::ModelZoo small = mushroom_zoo();
    small.records.resize(std::min<std::size_t>(small.size(), 40));
    zoo::save_zoo(small, (root / "zoo").string());
    auto z = zoo::load_zoo((root / "zoo").string());
    bool crashed_ref = false, crashed = false;
    auto [ref, ref_next] = simulated_study(root / "ref", (root / "zoo").string(), z, 0, &crashed_ref);
    auto [got, got_next] = simulated_study(root / "crash", (root / "zoo").string(), z, 2, &crashed);
    fs::remove_all(root);
    const bool ok = crashed && !crashed_ref && !ref.empty() && ref == got && ref_next == got_next;
    return {ok, fmt("service killed during advance 2: %s; trace %zu bytes, byte-identical: %s; next models match: %s",
                    crashed ? "yes" : "no", got.size(), ref == got ? "yes" : "no", ref_next == got_next ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"SILF unit suite", silf_suite},
        {"zoo thresholds", zoo_thresholds},
        {"pruning property", pruning_property},
        {"GP oracle equivalence", gp_equivalence},
        {"cross-proxy mis-ranking", cross_proxy},
        {"sampled-proxy curves", sample_curves},
        {"pipeline beats random", pipeline_vs_random},
        {"local surrogate suite", local_surrogates},
        {"oracle bridge", oracle_bridge},
        {"crash recovery", crash_recovery},
    };
    std::set<int> only;
    bool report_only = false;
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> report(nullptr, &std::fclose);
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--report-only") {
            report_only = true;
        } else if (a == "--report" && i + 1 < argc) {
            report.reset(std::fopen(argv[++i], "w"));
            if (!report) {
                std::fprintf(stderr, "cannot write %s\n", argv[i]);
                return 2;
            }
        } else {
            only.insert(std::stoi(a));
        }
    }
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto line = fmt("criterion %2d %s: %s (%.1fs) ", n, o.pass ? "PASS" : "FAIL", criteria[i].first, secs) + o.detail;
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (report) {
            std::fprintf(report.get(), "%s\n", line.c_str());
            std::fflush(report.get());
        }
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria failed\n", failed, only.empty() ? criteria.size() : only.size());
    return failed == 0 || report_only ? 0 : 1;
}
