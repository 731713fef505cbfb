#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "json.hpp"

#include "hipo/blackbox/mlp.hpp"
#include "hipo/data/dataset.hpp"
#include "hipo/explain/local.hpp"
#include "hipo/tree/serialize.hpp"
#include "hipo/zoo/zoo.hpp"

namespace hipo::zoo {

inline constexpr const char* kZooFormat = "hipo.zoo/1";

namespace detail {

inline std::string model_file(int id, ModelClass c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "model_%04d.%s", id, c == ModelClass::tree ? "json" : "mlp");
    return buf;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << j.dump(1) << '\n';
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw NotFound("cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(p.string() + ": " + e.what());
    }
}

}  // namespace detail

/// Directory layout: manifest.json, dataset.bin, one file per model, and for
/// black-box models a model_NNNN.local.json with the local surrogates.
inline void save_zoo(const ModelZoo& zoo, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    data::save_dataset(*zoo.dataset, (fs::path(dir) / "dataset.bin").string());
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : zoo.records) {
        const auto file = detail::model_file(r.id, zoo.model_class);
        if (r.is_tree()) {
            detail::write_json(fs::path(dir) / file, tree::tree_to_json(r.tree(), zoo.dataset->feature_names));
        } else {
            blackbox::save_mlp(r.mlp(), (fs::path(dir) / file).string());
        }
        nlohmann::json j = {{"id", r.id},
                            {"file", file},
                            {"validation_accuracy", r.validation_accuracy},
                            {"silf_likelihood", r.silf_likelihood},
                            {"importance", r.importance},
                            {"proxies", r.proxies},
                            {"hyperparams", r.hyperparams},
                            {"restart", r.restart}};
        if (r.boundary) {
            const auto local = "model_" + std::to_string(r.id) + ".local.json";
            detail::write_json(fs::path(dir) / local, explain::scan_to_json(*r.boundary, zoo.dataset->feature_names));
            j["local"] = local;
            j["boundary_fraction"] = r.boundary->fraction;
        }
        recs.push_back(std::move(j));
    }
    nlohmann::json m = {{"format", kZooFormat},
                        {"class", to_string(zoo.model_class)},
                        {"silf", zoo.silf},
                        {"seed", zoo.seed},
                        {"restarts", zoo.restarts},
                        {"best_accuracy", zoo.best_accuracy},
                        {"dataset", "dataset.bin"},
                        {"eval_points",
                         {{"partition", zoo.eval_points.partition == data::Partition::train ? "train" : "validate"},
                          {"seed", zoo.eval_points.seed},
                          {"indices", zoo.eval_points.indices}}},
                        {"records", recs}};
    detail::write_json(fs::path(dir) / "manifest.json", m);
}

inline ModelZoo load_zoo(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw NotFound("zoo directory not found: " + dir);
    auto m = detail::read_json(fs::path(dir) / "manifest.json");
    if (m.value("format", "") != kZooFormat) throw ParseError("not a zoo manifest: " + dir);
    ModelZoo zoo;
    zoo.dataset = std::make_shared<const data::Dataset>(
        data::load_dataset((fs::path(dir) / m.at("dataset").get<std::string>()).string()));
    zoo.model_class = model_class_from_string(m.at("class").get<std::string>());
    zoo.silf = m.at("silf").get<SilfParams>();
    zoo.seed = m.at("seed").get<std::uint64_t>();
    zoo.restarts = m.value("restarts", std::size_t{0});
    zoo.best_accuracy = m.value("best_accuracy", 0.0);
    const auto& ep = m.at("eval_points");
    zoo.eval_points.partition = ep.at("partition").get<std::string>() == "train" ? data::Partition::train
                                                                                  : data::Partition::validate;
    zoo.eval_points.seed = ep.at("seed").get<std::uint64_t>();
    zoo.eval_points.indices = ep.at("indices").get<std::vector<std::size_t>>();
    for (auto i : zoo.eval_points.indices)
        if (i >= zoo.dataset->size()) throw ParseError("evaluation point out of range");
    for (const auto& j : m.at("records")) {
        ModelRecord r;
        r.id = j.at("id").get<int>();
        const auto file = (fs::path(dir) / j.at("file").get<std::string>()).string();
        if (zoo.model_class == ModelClass::tree)
            r.model = tree::tree_from_json(detail::read_json(file));
        else
            r.model = blackbox::load_mlp(file);
        r.validation_accuracy = j.at("validation_accuracy").get<double>();
        r.silf_likelihood = j.at("silf_likelihood").get<double>();
        r.importance = j.at("importance").get<std::vector<double>>();
        r.proxies = j.at("proxies").get<tree::ProxyScores>();
        r.hyperparams = j.at("hyperparams");
        r.restart = j.value("restart", std::uint64_t{0});
        if (j.contains("local")) r.boundary = explain::scan_from_json(detail::read_json(fs::path(dir) / j.at("local").get<std::string>()));
        zoo.records.push_back(std::move(r));
    }
    return zoo;
}

}  // namespace hipo::zoo
