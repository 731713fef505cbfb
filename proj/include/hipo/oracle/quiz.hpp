#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/error.hpp"
#include "hipo/oracle/oracle.hpp"

namespace hipo::oracle {

inline void to_json(nlohmann::json& j, const Response& r) {
    j = {{"user", r.user}, {"model", r.model}, {"point", r.point}, {"rt", r.rt}, {"correct", r.correct}};
}

inline void from_json(const nlohmann::json& j, Response& r) {
    r.user = j.at("user").get<std::string>();
    r.model = j.at("model").get<int>();
    r.point = j.at("point").get<std::size_t>();
    r.rt = j.at("rt").get<double>();
    r.correct = j.value("correct", true);
}

/// Response-time exclusion window, in seconds.
struct Exclusion {
    double min_rt = 5.0;
    double max_rt = 300.0;
};

struct ModelAggregate {
    int model = 0;
    double mean_rt = 0.0;  // mean of per-point means
    std::vector<OracleResult> points;
    std::size_t incorrect = 0;
};

/// Per-point mean over users, then per-model mean over points.
inline std::map<int, ModelAggregate> aggregate_quiz(std::span<const Response> responses, const HisConfig& cfg,
                                                    std::optional<Exclusion> exclusion = std::nullopt) {
    std::map<int, std::map<std::size_t, std::vector<const Response*>>> seen;
    std::map<int, std::map<std::size_t, std::size_t>> offered;
    for (const auto& r : responses) {
        offered[r.model][r.point]++;
        if (exclusion && (r.rt < exclusion->min_rt || r.rt > exclusion->max_rt)) continue;
        seen[r.model][r.point].push_back(&r);
    }
    std::map<int, ModelAggregate> out;
    for (const auto& [model, points] : offered) {
        ModelAggregate agg;
        agg.model = model;
        std::string empty;
        for (const auto& [point, n] : points) {
            auto it = seen[model].find(point);
            if (it == seen[model].end() || it->second.empty()) {
                empty += (empty.empty() ? "" : ", ") + std::to_string(point);
                continue;
            }
            OracleResult res;
            res.point = point;
            res.source = Source::human;
            for (const auto* r : it->second) {
                res.mean_rt += r->rt;
                res.responses.push_back(*r);
                agg.incorrect += r->correct ? 0 : 1;
            }
            res.mean_rt /= static_cast<double>(it->second.size());
            res.his = his(res.mean_rt, cfg);
            agg.mean_rt += res.mean_rt;
            agg.points.push_back(std::move(res));
        }
        if (!empty.empty())
            throw InvalidArgument("model " + std::to_string(model) + ": no responses left for point(s) " + empty);
        agg.mean_rt /= static_cast<double>(agg.points.size());
        out.emplace(model, std::move(agg));
    }
    return out;
}

inline void append_jsonl(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot append to " + path);
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw Error("write failed: " + path);
}

/// Reads line-delimited JSON. A torn final line (no newline) is ignored.
inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<nlohmann::json> out;
    std::size_t start = 0, lineno = 0;
    while (start < content.size()) {
        auto nl = content.find('\n', start);
        if (nl == std::string::npos) break;
        ++lineno;
        auto line = content.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void save_responses(const std::string& path, std::span<const Response> rs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    for (const auto& r : rs) out << nlohmann::json(r).dump() << '\n';
}

inline std::vector<Response> load_responses(const std::string& path) {
    std::vector<Response> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.get<Response>());
    return out;
}

}  // namespace hipo::oracle
