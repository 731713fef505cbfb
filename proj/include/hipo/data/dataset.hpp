#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hipo/core/binary_io.hpp"
#include "hipo/core/error.hpp"
#include "hipo/core/matrix_view.hpp"
#include "hipo/core/random.hpp"
#include "hipo/data/csv.hpp"
#include "hipo/data/schema.hpp"

namespace hipo::data {

enum class Partition : std::uint8_t { train = 0, validate = 1 };

/// Where an original column lives in the encoded feature vector.
struct FeatureGroup {
    std::size_t column = 0;  // index into Schema::columns
    std::size_t begin = 0;   // first encoded index
    std::size_t end = 0;     // one past the last encoded index
    bool categorical = false;
    std::size_t continuous_slot = 0;  // index into Dataset::raw_continuous row (continuous only)
};

/// z-scoring constants of a continuous column, fitted on the train partition.
struct Standardizer {
    double mean = 0.0;
    double sd = 1.0;
    bool zero_variance = false;
};

/// Encoded dataset: continuous columns z-scored, categorical columns one-hot.
struct Dataset {
    Schema schema;
    std::size_t n_features = 0;
    std::vector<double> features;          // row-major N x n_features
    std::vector<std::uint8_t> labels;      // 0/1
    std::vector<Partition> split;          // per row
    std::vector<FeatureGroup> groups;      // one per schema column
    std::vector<std::size_t> feature_column;  // encoded index -> schema column
    std::vector<std::string> feature_names;
    std::vector<double> raw_continuous;    // row-major N x (number of continuous columns)
    std::vector<Standardizer> standardizers;  // one per continuous column
    std::vector<std::size_t> source_rows;  // row index in the originating RawTable
    std::vector<std::string> warnings;

    std::size_t size() const { return labels.size(); }
    std::size_t continuous_count() const { return standardizers.size(); }
    std::size_t column_count() const { return groups.size(); }

    MatrixView matrix() const { return {features, n_features}; }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * n_features, n_features);
    }

    std::vector<std::size_t> indices(Partition p) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == p) out.push_back(i);
        return out;
    }

    /// Original categorical value of (row, column); the inverse of one-hot encoding.
    const std::string& categorical_value(std::size_t r, std::size_t column) const {
        const auto& g = groups.at(column);
        if (!g.categorical) throw InvalidArgument("column " + schema.columns[column].name + " is continuous");
        for (std::size_t j = g.begin; j < g.end; ++j)
            if (features[r * n_features + j] == 1.0) return schema.columns[column].values[j - g.begin];
        throw Error("row " + std::to_string(r) + " has no active one-hot entry in " + schema.columns[column].name);
    }

    double continuous_value(std::size_t r, std::size_t column) const {
        const auto& g = groups.at(column);
        if (g.categorical) throw InvalidArgument("column " + schema.columns[column].name + " is categorical");
        return raw_continuous[r * continuous_count() + g.continuous_slot];
    }

    /// Human-readable value of an original column, as shown in a quiz.
    std::string display_value(std::size_t r, std::size_t column) const {
        if (groups.at(column).categorical) return categorical_value(r, column);
        std::ostringstream s;
        s << continuous_value(r, column);
        return s.str();
    }

    /// Recomputes z-scores of continuous columns from the raw values using
    /// statistics of the train partition (population standard deviation).
    void restandardize() {
        const std::size_t c = continuous_count();
        warnings.erase(std::remove_if(warnings.begin(), warnings.end(),
                                      [](const std::string& w) { return w.rfind("zero-variance", 0) == 0; }),
                       warnings.end());
        for (const auto& g : groups) {
            if (g.categorical) continue;
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r = 0; r < size(); ++r)
                if (split[r] == Partition::train) {
                    sum += raw_continuous[r * c + g.continuous_slot];
                    ++n;
                }
            if (n == 0) throw InvalidArgument("train partition is empty");
            const double mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t r = 0; r < size(); ++r)
                if (split[r] == Partition::train) {
                    double d = raw_continuous[r * c + g.continuous_slot] - mean;
                    ss += d * d;
                }
            const double sd = std::sqrt(ss / static_cast<double>(n));
            auto& st = standardizers[g.continuous_slot];
            st.mean = mean;
            st.zero_variance = !(sd > 0.0);
            st.sd = st.zero_variance ? 1.0 : sd;
            if (st.zero_variance) warnings.push_back("zero-variance column " + schema.columns[g.column].name + " encoded as zeros");
            for (std::size_t r = 0; r < size(); ++r) {
                double raw = raw_continuous[r * c + g.continuous_slot];
                features[r * n_features + g.begin] = st.zero_variance ? 0.0 : (raw - mean) / sd;
            }
        }
    }
};

/// A fixed set of row indices (global indices into the Dataset) drawn from
/// one partition.
struct PointSet {
    Partition partition = Partition::validate;
    std::vector<std::size_t> indices;
    std::uint64_t seed = 0;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
};

/// One-hot encodes categorical columns, optionally balances the classes by
/// subsampling the majority class, and z-scores continuous columns. Every row
/// starts in the train partition; `split` assigns validation rows.
inline Dataset preprocess(const RawTable& raw, bool balance, std::uint64_t seed) {
    const Schema& schema = raw.schema;
    schema.validate();
    std::size_t pos = 0;
    for (auto l : raw.labels) pos += l;
    if (pos == 0 || pos == raw.size()) throw InvalidArgument("label column has a single class");

    std::vector<std::size_t> keep(raw.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (balance) {
        std::vector<std::size_t> cls[2];
        for (std::size_t i = 0; i < raw.size(); ++i) cls[raw.labels[i]].push_back(i);
        const int major = cls[1].size() > cls[0].size() ? 1 : 0;
        auto rng = make_rng(seed, {0xba1a});
        auto pick = sample_without_replacement(cls[major].size(), cls[1 - major].size(), rng);
        keep = cls[1 - major];
        for (auto p : pick) keep.push_back(cls[major][p]);
        std::sort(keep.begin(), keep.end());
    }

    Dataset ds;
    ds.schema = schema;
    std::size_t slot = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto& col = schema.columns[c];
        FeatureGroup g;
        g.column = c;
        g.begin = ds.n_features;
        if (col.kind == ColumnKind::categorical) {
            g.categorical = true;
            for (const auto& v : col.values) {
                ds.feature_names.push_back(col.name + "=" + v);
                ds.feature_column.push_back(c);
            }
            ds.n_features += col.values.size();
        } else {
            g.continuous_slot = slot++;
            ds.feature_names.push_back(col.name);
            ds.feature_column.push_back(c);
            ds.n_features += 1;
        }
        g.end = ds.n_features;
        ds.groups.push_back(g);
    }
    ds.standardizers.resize(slot);

    const std::size_t n = keep.size();
    ds.features.assign(n * ds.n_features, 0.0);
    ds.raw_continuous.assign(n * slot, 0.0);
    ds.labels.resize(n);
    ds.split.assign(n, Partition::train);
    ds.source_rows = keep;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& src = raw.rows[keep[r]];
        ds.labels[r] = raw.labels[keep[r]];
        for (const auto& g : ds.groups) {
            if (g.categorical) {
                ds.features[r * ds.n_features + g.begin + std::get<std::uint32_t>(src[g.column])] = 1.0;
            } else {
                ds.raw_continuous[r * slot + g.continuous_slot] = std::get<double>(src[g.column]);
            }
        }
    }
    ds.restandardize();
    return ds;
}

/// Tags rows train/validate uniformly at random; round(fraction * N) rows go
/// to train. Continuous columns are re-standardized on the new train rows.
inline Dataset split(Dataset ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("train fraction must lie in (0, 1)");
    std::size_t pos = 0;
    for (auto l : ds.labels) pos += l;
    if (pos < 2 || ds.size() - pos < 2) throw InvalidArgument("split needs at least 2 rows per class");
    const std::size_t n = ds.size();
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    auto rng = make_rng(seed, {0x5b117});
    auto order = sample_without_replacement(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) ds.split[order[i]] = i < n_train ? Partition::train : Partition::validate;
    ds.restandardize();
    return ds;
}

/// n distinct rows of a partition, uniformly without replacement.
inline PointSet sample_points(const Dataset& ds, Partition part, std::size_t n, std::uint64_t seed) {
    auto pool = ds.indices(part);
    if (n > pool.size())
        throw InvalidArgument("requested " + std::to_string(n) + " points from a partition of " +
                              std::to_string(pool.size()));
    auto rng = make_rng(seed, {0x9017});
    auto pick = sample_without_replacement(pool.size(), n, rng);
    PointSet ps;
    ps.partition = part;
    ps.seed = seed;
    ps.indices.reserve(n);
    for (auto p : pick) ps.indices.push_back(pool[p]);
    return ps;
}

// Binary container: magic, JSON header (schema and layout), then raw arrays.
inline constexpr const char* kDatasetMagic = "HIPODS01";

inline void save_dataset(const Dataset& ds, const std::string& path) {
    nlohmann::json h;
    h["schema"] = ds.schema;
    h["n_rows"] = ds.size();
    h["n_features"] = ds.n_features;
    h["feature_names"] = ds.feature_names;
    h["warnings"] = ds.warnings;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset " + path);
    out.write(kDatasetMagic, 8);
    binio::put_string(out, h.dump());
    binio::put_array(out, ds.features);
    binio::put_array(out, ds.labels);
    std::vector<std::uint8_t> tags(ds.split.size());
    std::transform(ds.split.begin(), ds.split.end(), tags.begin(), [](Partition p) { return std::uint8_t(p); });
    binio::put_array(out, tags);
    binio::put_array(out, ds.raw_continuous);
    std::vector<std::uint64_t> src(ds.source_rows.begin(), ds.source_rows.end());
    binio::put_array(out, src);
    if (!out) throw Error("short write on dataset " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open dataset " + path);
    binio::expect_magic(in, kDatasetMagic);
    auto h = nlohmann::json::parse(binio::get_string(in));
    RawTable shell;
    shell.schema = h.at("schema").get<Schema>();
    // Rebuild the encoding layout from the schema, then overwrite the arrays.
    Dataset layout;
    {
        RawTable tiny;
        tiny.schema = shell.schema;
        std::vector<Cell> row;
        for (const auto& c : shell.schema.columns)
            row.push_back(c.kind == ColumnKind::categorical ? Cell{std::uint32_t{0}} : Cell{0.0});
        tiny.rows = {row, row};
        tiny.labels = {0, 1};
        layout = preprocess(tiny, false, 0);
    }
    Dataset ds = std::move(layout);
    ds.features = binio::get_array<double>(in);
    ds.labels = binio::get_array<std::uint8_t>(in);
    auto tags = binio::get_array<std::uint8_t>(in);
    ds.split.resize(tags.size());
    std::transform(tags.begin(), tags.end(), ds.split.begin(), [](std::uint8_t t) { return Partition(t); });
    ds.raw_continuous = binio::get_array<double>(in);
    auto src = binio::get_array<std::uint64_t>(in);
    ds.source_rows.assign(src.begin(), src.end());
    const std::size_t n = h.at("n_rows").get<std::size_t>();
    if (ds.n_features != h.at("n_features").get<std::size_t>() || ds.features.size() != n * ds.n_features ||
        ds.labels.size() != n || ds.split.size() != n || ds.raw_continuous.size() != n * ds.continuous_count())
        throw ParseError("dataset file " + path + " is inconsistent with its header");
    ds.restandardize();
    ds.warnings = h.value("warnings", std::vector<std::string>{});
    return ds;
}

}  // namespace hipo::data
