#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hipo/bayesopt/pipeline.hpp"
#include "hipo/data/csv.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/data/synthetic.hpp"
#include "hipo/experiments/analyses.hpp"
#include "hipo/experiments/sensitivity.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/oracle/oracle.hpp"
#include "hipo/service/server.hpp"
#include "hipo/zoo/store.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace hipo;
using nlohmann::json;

namespace {

struct DataArgs {
    std::string input, schema, out, kind = "synthetic";
    bool balance = false;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    std::size_t rows = 90000;
};

void data_prepare(const DataArgs& a) {
    auto schema = data::Schema::load(a.schema);
    auto raw = data::load_csv(a.input, schema);
    auto ds = data::split(data::preprocess(raw, a.balance, a.seed), a.train_fraction, a.seed);
    data::save_dataset(ds, a.out);
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "rows " << ds.size() << ", encoded features " << ds.n_features << " -> " << a.out << '\n';
}

void data_synth(const DataArgs& a) {
    data::RawTable raw;
    if (a.kind == "synthetic") raw = data::generate_synthetic(a.rows, a.seed);
    else if (a.kind == "covertype") raw = data::generate_covertype_like(a.rows, a.seed);
    else throw InvalidArgument("unknown synthetic kind '" + a.kind + "'");
    auto ds = data::split(data::preprocess(raw, a.balance, a.seed), a.train_fraction, a.seed);
    data::save_dataset(ds, a.out);
    std::cout << "rows " << ds.size() << ", encoded features " << ds.n_features << " -> " << a.out << '\n';
}

struct ZooArgs {
    std::string dataset, cls = "tree", out;
    std::size_t count = 500, max_restarts = 0, eval_points = 1000, local_points = 0, perturbations = 10000;
    double threshold = 0.95;
    int epochs = 50;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

void zoo_build(const ZooArgs& a) {
    auto ds = std::make_shared<const data::Dataset>(data::load_dataset(a.dataset));
    zoo::ZooOptions opt;
    opt.max_restarts = a.max_restarts;
    opt.eval_points = a.eval_points;
    opt.local_points = a.local_points;
    opt.mlp_epochs = a.epochs;
    opt.region.n_perturbations = a.perturbations;
    opt.workers = a.workers;
    auto z = zoo::generate_zoo(ds, zoo::model_class_from_string(a.cls), a.count, zoo::SilfParams::for_threshold(a.threshold),
                               a.seed, opt);
    zoo::save_zoo(z, a.out);
    std::cout << "kept " << z.size() << " " << a.cls << " models from " << z.restarts << " restarts (best accuracy "
              << z.best_accuracy << ") -> " << a.out << '\n';
}

struct ExplainArgs {
    std::string model, dataset, out;
    std::size_t points = 100, perturbations = 10000;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

void explain_cmd(const ExplainArgs& a) {
    auto ds = data::load_dataset(a.dataset);
    explain::BatchPredictor predict;
    std::optional<blackbox::MlpModel> mlp;
    std::optional<tree::TreeModel> tree;
    if (fs::path(a.model).extension() == ".mlp") {
        mlp = blackbox::load_mlp(a.model);
        predict = explain::as_predictor(*mlp);
    } else {
        tree = tree::load_tree(a.model);
        predict = explain::as_predictor(*tree);
    }
    auto val = ds.indices(data::Partition::validate);
    auto pts = data::sample_points(ds, data::Partition::validate, std::min(a.points, val.size()), a.seed);
    explain::LocalRegionConfig cfg;
    cfg.n_perturbations = a.perturbations;
    auto scan = explain::boundary_scan(predict, ds, pts.indices, cfg, a.seed, a.workers);
    fs::create_directories(a.out);
    zoo::detail::write_json(fs::path(a.out) / "scan.json", explain::scan_to_json(scan, ds.feature_names));
    json summary = {{"points", pts.indices.size()},
                    {"boundary_fraction", scan.fraction},
                    {"members", scan.members().size()},
                    {"proxies", explain::local_proxy_scores(scan, ds)}};
    zoo::detail::write_json(fs::path(a.out) / "summary.json", summary);
    std::cout << summary.dump(1) << '\n';
}

struct PipelineArgs {
    std::string zoo, oracle, out;
    int iterations = 10, restarts = 10, min_users = 7, questions = 8;
    double kappa = 1.0, max_rt = 60.0, poll = 5.0;
    std::uint64_t seed = 0;
};

bayesopt::PipelineTrace run_service(const PipelineArgs& a, const std::string& url) {
    httplib::Client cli(url);
    cli.set_read_timeout(600, 0);
    json cfg = {{"iterations", a.iterations}, {"kappa", a.kappa}, {"restarts", a.restarts}, {"seed", a.seed},
                {"min_users", a.min_users}, {"max_rt", a.max_rt}, {"questions_per_model", a.questions}};
    if (!a.zoo.empty()) cfg["zoo"] = fs::absolute(a.zoo).string();
    auto res = cli.Post("/v1/studies", cfg.dump(), "application/json");
    if (!res) throw Error("cannot reach " + url);
    if (res->status != 201) throw Error("study creation failed: " + res->body);
    const auto id = json::parse(res->body).at("study").get<std::string>();
    std::cout << "study " << id << " created; waiting for responses" << std::endl;
    int last = 0;
    while (true) {
        auto st = cli.Get("/v1/studies/" + id);
        if (!st || st->status != 200) throw Error("lost contact with " + url);
        auto j = json::parse(st->body);
        const int it = j.at("iteration");
        if (it != last) {
            std::cout << "iteration " << it << ": model " << j.at("current_model") << ", " << j.at("completed_sessions")
                      << "/" << j.at("min_users") << " sessions" << std::endl;
            last = it;
        }
        if (j.at("status") == "complete") {
            bayesopt::PipelineTrace t;
            for (const auto& s : j.at("trace")) t.steps.push_back(bayesopt::step_from_json(s));
            bayesopt::finalize(t);
            return t;
        }
        if (j.at("status") == "awaiting-responses" && j.at("completed_sessions").get<int>() >= a.min_users)
            cli.Post("/v1/studies/" + id + "/advance", json{{"iteration", it}}.dump(), "application/json");
        std::this_thread::sleep_for(std::chrono::duration<double>(a.poll));
    }
}

void pipeline_run(const PipelineArgs& a) {
    bayesopt::PipelineOptions po;
    po.iterations = a.iterations;
    po.kappa = a.kappa;
    po.restarts = a.restarts;
    po.seed = a.seed;
    oracle::HisConfig his{a.max_rt, a.questions};
    bayesopt::PipelineTrace trace;
    if (a.oracle.rfind("service:", 0) == 0) {
        trace = run_service(a, a.oracle.substr(8));
    } else if (a.oracle.rfind("simulated:", 0) == 0) {
        auto spec = oracle::SimulatedOracleSpec::load(a.oracle.substr(10));
        auto z = zoo::load_zoo(a.zoo);
        oracle::SimulatedOracle o(spec, z.dataset);
        const auto& eval = z.eval_points.indices;
        std::vector<std::size_t> pts(eval.begin(), eval.begin() + std::min<std::ptrdiff_t>(a.questions, eval.size()));
        auto ev = z.model_class == zoo::ModelClass::tree
                      ? bayesopt::global_evaluator(o, pts, his)
                      : bayesopt::local_evaluator(o, z.dataset, eval, his, {}, a.seed);
        try {
            trace = bayesopt::run_pipeline(z, ev, po);
        } catch (const bayesopt::PipelineAborted& e) {
            bayesopt::save_trace(e.partial, a.out);
            throw;
        }
    } else {
        throw InvalidArgument("--oracle must be simulated:<config> or service:<url>");
    }
    bayesopt::save_trace(trace, a.out);
    for (const auto& s : trace.steps)
        std::printf("%2d  model %4d  mean_rt %8.3f  prior %8.3f\n", s.choice.iteration, s.choice.model_id, s.mean_rt, s.prior);
    std::cout << "final model " << trace.final_model << (trace.tie ? " (tie)" : "") << " -> " << a.out << '\n';
}

struct ExpArgs {
    std::string zoo, out, summary;
    std::vector<std::string> proxies;
    std::vector<std::size_t> sizes = experiments::kDefaultSampleSizes;
    std::size_t repetitions = 50, trials = 100, draws = 1000, points = 100, perturbations = 10000;
    int k = 10;
    double kappa = 1.0;
    std::uint64_t seed = 0;
    unsigned workers = 0;
};

std::vector<tree::Proxy> proxies_of(const ExpArgs& a) {
    if (a.proxies.empty()) return {tree::kAllProxies.begin(), tree::kAllProxies.end()};
    std::vector<tree::Proxy> out;
    for (const auto& p : a.proxies) out.push_back(tree::proxy_from_string(p));
    return out;
}

void report(const experiments::Table& t, const std::string& out) {
    experiments::export_table(t, out);
    std::cout << t.rows.size() << " rows -> " << out << '\n';
}

void exp_cross(const ExpArgs& a) {
    auto z = zoo::load_zoo(a.zoo);
    auto g = experiments::cross_proxy_ranks(z);
    report(experiments::to_table(g), a.out);
    std::cout << "max off-diagonal rank " << experiments::max_off_diagonal(g) << " of " << z.size() << " models\n";
}

void exp_curve(const ExpArgs& a) {
    auto z = zoo::load_zoo(a.zoo);
    std::vector<experiments::SampleCurve> curves;
    for (auto p : proxies_of(a)) {
        const auto n = z.model_class == zoo::ModelClass::tree ? z.eval_points.indices.size()
                                                              : z.records.at(0).boundary->explanations.size();
        std::vector<std::size_t> sizes;
        for (auto s : a.sizes)
            if (s < n) sizes.push_back(s);
        sizes.push_back(n);
        curves.push_back(experiments::sampled_rank_curve(z, p, sizes, a.repetitions, a.seed));
    }
    report(experiments::to_table(curves), a.out);
}

void exp_pvr(const ExpArgs& a) {
    auto z = zoo::load_zoo(a.zoo);
    experiments::ComparisonOptions opt;
    opt.trials = a.trials;
    opt.draws = a.draws;
    opt.k = a.k;
    opt.kappa = a.kappa;
    opt.seed = a.seed;
    opt.workers = a.workers;
    std::vector<experiments::Comparison> cs;
    for (auto p : proxies_of(a)) {
        cs.push_back(experiments::pipeline_vs_random(z, p, opt));
        std::printf("%-24s pipeline %.3f  random %.3f  (mean best rank at %d)\n", tree::to_string(p),
                    cs.back().pipeline_mean(a.k - 1), cs.back().baseline_mean(a.k - 1), a.k);
    }
    report(experiments::to_table(cs), a.out);
    if (!a.summary.empty()) report(experiments::summary_table(cs), a.summary);
}

void exp_sensitivity(const ExpArgs& a) {
    auto z = zoo::load_zoo(a.zoo);
    const auto& eval = z.eval_points.indices;
    std::vector<std::size_t> pts(eval.begin(), eval.begin() + std::min(a.points, eval.size()));
    explain::LocalRegionConfig base;
    base.n_perturbations = a.perturbations;
    auto g = experiments::sensitivity_grid(z, pts, experiments::kVarianceScales, experiments::kCategoricalMixes,
                                           proxies_of(a), base, a.seed, a.workers);
    report(experiments::to_table(g), a.out);
}

struct ServeArgs {
    std::string zoo, state = "state", host = "127.0.0.1";
    int port = 8080;
};

void serve(const ServeArgs& a) {
    service::StudyService svc(a.state, a.zoo.empty() ? std::string() : fs::absolute(a.zoo).string());
    httplib::Server server;
    service::install_routes(server, svc);
    std::cout << "listening on " << a.host << ":" << a.port << " (state " << a.state << ")" << std::endl;
    if (!server.listen(a.host, a.port)) throw Error("cannot listen on " + a.host + ":" + std::to_string(a.port));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hipo: interpretability-prior model selection"};
    app.require_subcommand(1);

    DataArgs da;
    auto* data_cmd = app.add_subcommand("data", "prepare datasets")->require_subcommand(1);
    auto* prep = data_cmd->add_subcommand("prepare", "CSV + schema -> dataset file");
    prep->add_option("--input", da.input)->required();
    prep->add_option("--schema", da.schema)->required();
    prep->add_flag("--balance", da.balance);
    prep->add_option("--train-fraction", da.train_fraction);
    prep->add_option("--seed", da.seed);
    prep->add_option("--out", da.out)->required();
    prep->callback([&] { data_prepare(da); });
    auto* synth = data_cmd->add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--kind", da.kind, "synthetic or covertype");
    synth->add_option("--rows", da.rows);
    synth->add_flag("--balance", da.balance);
    synth->add_option("--train-fraction", da.train_fraction);
    synth->add_option("--seed", da.seed);
    synth->add_option("--out", da.out)->required();
    synth->callback([&] { data_synth(da); });

    ZooArgs za;
    auto* zoo_cmd = app.add_subcommand("zoo", "build model zoos")->require_subcommand(1);
    auto zoo_opts = [&](CLI::App* c) {
        c->add_option("--dataset", za.dataset)->required();
        c->add_option("--count", za.count);
        c->add_option("--threshold", za.threshold);
        c->add_option("--seed", za.seed);
        c->add_option("--out", za.out)->required();
        c->add_option("--max-restarts", za.max_restarts, "0: ten times --count");
        c->add_option("--eval-points", za.eval_points);
        c->add_option("--local-points", za.local_points, "black-box boundary scan size; 0: all evaluation points");
        c->add_option("--perturbations", za.perturbations);
        c->add_option("--epochs", za.epochs);
        c->add_option("--workers", za.workers);
    };
    auto* build = zoo_cmd->add_subcommand("build", "train and filter a zoo");
    zoo_opts(build);
    build->add_option("--class", za.cls, "tree or mlp");
    build->callback([&] { zoo_build(za); });
    auto* train_mlp = zoo_cmd->add_subcommand("train-mlp", "train an MLP zoo");
    zoo_opts(train_mlp);
    train_mlp->callback([&] {
        za.cls = "mlp";
        if (train_mlp->count("--threshold") == 0) za.threshold = 0.75;
        zoo_build(za);
    });

    ExplainArgs ea;
    auto* ex = app.add_subcommand("explain", "local surrogates of one model");
    ex->add_option("--model", ea.model, "tree .json or .mlp file")->required();
    ex->add_option("--dataset", ea.dataset)->required();
    ex->add_option("--points", ea.points);
    ex->add_option("--perturbations", ea.perturbations);
    ex->add_option("--seed", ea.seed);
    ex->add_option("--workers", ea.workers);
    ex->add_option("--out", ea.out)->required();
    ex->callback([&] { explain_cmd(ea); });

    PipelineArgs pa;
    auto* pipe = app.add_subcommand("pipeline", "model selection loop")->require_subcommand(1);
    auto* run = pipe->add_subcommand("run", "run the loop against an oracle");
    run->add_option("--zoo", pa.zoo);
    run->add_option("--oracle", pa.oracle, "simulated:<config> or service:<url>")->required();
    run->add_option("--iterations", pa.iterations);
    run->add_option("--kappa", pa.kappa);
    run->add_option("--restarts", pa.restarts);
    run->add_option("--questions", pa.questions);
    run->add_option("--max-rt", pa.max_rt);
    run->add_option("--min-users", pa.min_users);
    run->add_option("--poll", pa.poll, "seconds between status polls (service oracle)");
    run->add_option("--seed", pa.seed);
    run->add_option("--out", pa.out)->required();
    run->callback([&] {
        if (pa.zoo.empty() && pa.oracle.rfind("simulated:", 0) == 0) throw CLI::RequiredError("--zoo");
        pipeline_run(pa);
    });

    ExpArgs xa;
    auto* exp = app.add_subcommand("exp", "experiments")->require_subcommand(1);
    auto exp_opts = [&](CLI::App* c) {
        c->add_option("--zoo", xa.zoo)->required();
        c->add_option("--seed", xa.seed);
        c->add_option("--out", xa.out)->required();
    };
    auto* cross = exp->add_subcommand("cross-proxy", "rank of each proxy's best model under the others");
    exp_opts(cross);
    cross->callback([&] { exp_cross(xa); });
    auto* curve = exp->add_subcommand("sample-curve", "rank of the sample-best model against sample size");
    exp_opts(curve);
    curve->add_option("--proxy", xa.proxies);
    curve->add_option("--sizes", xa.sizes);
    curve->add_option("--repetitions", xa.repetitions);
    curve->callback([&] { exp_curve(xa); });
    auto* pvr = exp->add_subcommand("pipeline-vs-random", "best rank found by the loop and by random draws");
    exp_opts(pvr);
    pvr->add_option("--proxy", xa.proxies);
    pvr->add_option("--trials", xa.trials);
    pvr->add_option("--draws", xa.draws);
    pvr->add_option("--k", xa.k);
    pvr->add_option("--kappa", xa.kappa);
    pvr->add_option("--workers", xa.workers);
    pvr->add_option("--summary", xa.summary, "per-iteration means");
    pvr->callback([&] { exp_pvr(xa); });
    auto* sens = exp->add_subcommand("sensitivity", "proxy ranks across local-region settings");
    exp_opts(sens);
    sens->add_option("--proxy", xa.proxies);
    sens->add_option("--points", xa.points);
    sens->add_option("--perturbations", xa.perturbations);
    sens->add_option("--workers", xa.workers);
    sens->callback([&] { exp_sensitivity(xa); });

    ServeArgs sa;
    auto* srv = app.add_subcommand("serve", "quiz service");
    srv->add_option("--zoo", sa.zoo);
    srv->add_option("--port", sa.port);
    srv->add_option("--host", sa.host);
    srv->add_option("--state", sa.state);
    srv->callback([&] { serve(sa); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
