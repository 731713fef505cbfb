#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "hipo/data/dataset.hpp"
#include "hipo/data/synthetic.hpp"
#include "hipo/tree/fit.hpp"
#include "hipo/tree/prune.hpp"

using namespace hipo;
using namespace hipo::data;

namespace {

Schema small_schema() {
    std::istringstream in("color categorical a,b,c\nsize continuous\ny label positive=yes negative=no\n");
    return Schema::parse(in);
}

RawTable parse(const std::string& csv, const Schema& s) {
    std::istringstream in(csv);
    return read_csv(in, s);
}

}  // namespace

TEST(Schema, RejectsDuplicateAndDegenerateColumns) {
    std::istringstream dup("a continuous\na continuous\ny label positive=1\n");
    EXPECT_THROW(Schema::parse(dup), InvalidArgument);
    std::istringstream one("a categorical x\ny label positive=1\n");
    EXPECT_THROW(Schema::parse(one), InvalidArgument);
    std::istringstream nolabel("a continuous\n");
    EXPECT_THROW(Schema::parse(nolabel), InvalidArgument);
}

TEST(Schema, TextRoundTrip) {
    auto s = small_schema();
    std::istringstream again(s.to_text());
    auto t = Schema::parse(again);
    EXPECT_EQ(t.header, s.header);
    EXPECT_EQ(t.columns[0].values, s.columns[0].values);
    EXPECT_EQ(t.positive_label, "yes");
}

TEST(Csv, EmptyFileWithHeaderHasNoRows) {
    auto t = parse("color,size,y\n", small_schema());
    EXPECT_EQ(t.size(), 0u);
}

TEST(Csv, ValueOutsideSchemaNamesRow) {
    try {
        parse("color,size,y\nd,1.0,yes\n", small_schema());
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("color"), std::string::npos);
    }
}

TEST(Csv, HeaderMismatchAndBadNumbers) {
    EXPECT_THROW(parse("size,color,y\n", small_schema()), ParseError);
    EXPECT_THROW(parse("color,size,y\na,abc,yes\n", small_schema()), ParseError);
    EXPECT_THROW(parse("color,size,y\na,1,maybe\n", small_schema()), ParseError);
    EXPECT_THROW(load_csv("/nonexistent/file.csv", small_schema()), NotFound);
}

TEST(Csv, MushroomFileShape) {
    auto schema = Schema::load(std::string(HIPO_DATA_DIR) + "/mushroom.schema");
    auto t = load_csv(std::string(HIPO_DATA_DIR) + "/mushroom.csv", schema);
    EXPECT_EQ(t.size(), 8124u);
    EXPECT_EQ(schema.feature_count(), 22u);
    std::size_t values = 0;
    for (const auto& c : schema.columns) values += c.values.size();
    EXPECT_EQ(values, 126u);
}

TEST(Preprocess, OneHotAndZScore) {
    auto t = parse("color,size,y\nb,1,yes\na,2,no\nc,3,yes\n", small_schema());
    auto ds = preprocess(t, false, 0);
    ASSERT_EQ(ds.n_features, 4u);
    EXPECT_EQ(ds.row(0)[0], 0.0);
    EXPECT_EQ(ds.row(0)[1], 1.0);
    EXPECT_EQ(ds.row(0)[2], 0.0);
    // population sd of (1,2,3) is sqrt(2/3)
    EXPECT_NEAR(ds.row(0)[3], -1.224744871391589, 1e-12);
    EXPECT_NEAR(ds.row(1)[3], 0.0, 1e-12);
    EXPECT_NEAR(ds.row(2)[3], 1.224744871391589, 1e-12);
    EXPECT_EQ(ds.categorical_value(0, 0), "b");
}

TEST(Preprocess, ZeroVarianceColumnBecomesZerosWithWarning) {
    auto t = parse("color,size,y\nb,4,yes\na,4,no\n", small_schema());
    auto ds = preprocess(t, false, 0);
    EXPECT_EQ(ds.row(0)[3], 0.0);
    EXPECT_EQ(ds.row(1)[3], 0.0);
    ASSERT_FALSE(ds.warnings.empty());
}

TEST(Preprocess, SingleClassIsAnError) {
    auto t = parse("color,size,y\nb,4,yes\na,5,yes\n", small_schema());
    EXPECT_THROW(preprocess(t, false, 0), InvalidArgument);
}

TEST(Preprocess, BalanceSubsamplesMajority) {
    std::string csv = "color,size,y\n";
    for (int i = 0; i < 70; ++i) csv += "a," + std::to_string(i) + ",yes\n";
    for (int i = 0; i < 30; ++i) csv += "b," + std::to_string(i) + ",no\n";
    auto ds = preprocess(parse(csv, small_schema()), true, 3);
    std::size_t pos = 0;
    for (auto l : ds.labels) pos += l;
    EXPECT_EQ(ds.size(), 60u);
    EXPECT_EQ(pos, 30u);
}

TEST(Preprocess, OneHotDecodesBackOnMushroom) {
    auto schema = Schema::load(std::string(HIPO_DATA_DIR) + "/mushroom.schema");
    auto raw = load_csv(std::string(HIPO_DATA_DIR) + "/mushroom.csv", schema);
    auto ds = preprocess(raw, true, 1);
    std::size_t pos = 0;
    for (auto l : ds.labels) pos += l;
    EXPECT_EQ(2 * pos, ds.size());
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const auto& src = raw.rows[ds.source_rows[r]];
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const auto& g = ds.groups[c];
            double sum = 0;
            for (auto j = g.begin; j < g.end; ++j) sum += ds.row(r)[j];
            ASSERT_EQ(sum, 1.0);
            ASSERT_EQ(ds.categorical_value(r, c), schema.columns[c].values[std::get<std::uint32_t>(src[c])]);
        }
    }
}

TEST(Split, FractionsAndDeterminism) {
    std::string csv = "color,size,y\n";
    for (int i = 0; i < 100; ++i) csv += std::string(i % 2 ? "a," : "b,") + std::to_string(i) + (i % 2 ? ",yes\n" : ",no\n");
    auto ds = preprocess(parse(csv, small_schema()), false, 0);
    auto a = split(ds, 0.8, 11);
    auto b = split(ds, 0.8, 11);
    auto c = split(ds, 0.8, 12);
    EXPECT_EQ(a.indices(Partition::train).size(), 80u);
    EXPECT_EQ(a.indices(Partition::validate).size(), 20u);
    EXPECT_EQ(a.split, b.split);
    EXPECT_NE(a.split, c.split);
    EXPECT_EQ(split(ds, 0.6, 1).indices(Partition::train).size(), 60u);
    EXPECT_THROW(split(ds, 1.0, 1), InvalidArgument);
    EXPECT_THROW(split(ds, 0.0, 1), InvalidArgument);
}

TEST(Split, TrainStatisticsAreStandard) {
    auto ds = split(preprocess(generate_synthetic(2000, 5), false, 0), 0.8, 5);
    auto train = ds.indices(Partition::train);
    for (std::size_t j = 0; j < ds.n_features; ++j) {
        double s = 0, ss = 0;
        for (auto r : train) s += ds.row(r)[j];
        const double mean = s / train.size();
        for (auto r : train) ss += (ds.row(r)[j] - mean) * (ds.row(r)[j] - mean);
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(ss / train.size()), 1.0, 1e-6);
    }
}

TEST(SamplePoints, DistinctDeterministicAndBounded) {
    auto ds = split(preprocess(generate_synthetic(5000, 1), false, 0), 0.2, 2);
    auto val = ds.indices(Partition::validate);
    ASSERT_EQ(val.size(), 4000u);
    auto p = sample_points(ds, Partition::validate, 1000, 9);
    EXPECT_EQ(std::set<std::size_t>(p.indices.begin(), p.indices.end()).size(), 1000u);
    for (auto i : p.indices) EXPECT_EQ(ds.split[i], Partition::validate);
    EXPECT_EQ(sample_points(ds, Partition::validate, 1000, 9).indices, p.indices);
    auto all = sample_points(ds, Partition::validate, val.size(), 3);
    EXPECT_EQ(std::set<std::size_t>(all.indices.begin(), all.indices.end()), std::set<std::size_t>(val.begin(), val.end()));
    EXPECT_THROW(sample_points(ds, Partition::validate, val.size() + 1, 3), InvalidArgument);
}

TEST(Persistence, DatasetRoundTrip) {
    auto ds = split(preprocess(generate_synthetic(300, 1), false, 0), 0.8, 2);
    const std::string path = ::testing::TempDir() + "/ds.bin";
    save_dataset(ds, path);
    auto back = load_dataset(path);
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.split, ds.split);
    EXPECT_EQ(back.schema.header, ds.schema.header);
}

TEST(Synthetic, ShapeAndSeparation) {
    auto raw = generate_synthetic(90000, 17);
    EXPECT_EQ(raw.size(), 90000u);
    EXPECT_EQ(raw.schema.feature_count(), 6u);
    EXPECT_THROW(generate_synthetic(5, 1), InvalidArgument);
    auto ds = preprocess(raw, false, 0);
    // Best single split on each noise dimension barely moves the Gini impurity.
    for (std::size_t dim : {0u, 1u}) {
        std::vector<std::pair<double, int>> v;
        for (std::size_t r = 0; r < ds.size(); ++r) v.push_back({ds.row(r)[dim], ds.labels[r]});
        std::sort(v.begin(), v.end());
        double total1 = 0;
        for (auto& p : v) total1 += p.second;
        const double n = v.size();
        double best = 0.5, l1 = 0;
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            l1 += v[i].second;
            const double nl = i + 1, nr = n - nl, r1 = total1 - l1;
            auto g = [](double k, double m) { double p = k / m; return 1 - p * p - (1 - p) * (1 - p); };
            best = std::min(best, nl / n * g(l1, nl) + nr / n * g(r1, nr));
        }
        EXPECT_LT(0.5 - best, 0.02) << "noise dimension " << dim;
    }
}

TEST(Synthetic, InterpretableDimsCapBelowThresholdComplexDimsExceedIt) {
    auto ds = split(preprocess(generate_synthetic(20000, 4), false, 0), 0.8, 4);
    auto train = ds.indices(Partition::train);
    auto val = ds.indices(Partition::validate);
    auto restrict_to = [&](std::vector<std::size_t> dims) {
        std::vector<double> x(ds.size() * ds.n_features, 0.0);
        for (std::size_t r = 0; r < ds.size(); ++r)
            for (auto d : dims) x[r * ds.n_features + d] = ds.row(r)[d];
        return x;
    };
    auto simple = restrict_to({2, 3});
    auto complex = restrict_to({4, 5});
    for (int depth = 1; depth <= 7; ++depth) {
        tree::TreeHyperparams hp{depth, 1, 0, tree::Splitter::best, 1};
        MatrixView xs{simple, ds.n_features};
        auto t = tree::fit_tree(xs, ds.labels, train, hp);
        EXPECT_LT(tree::accuracy(t, xs, ds.labels, val), 0.9) << "depth " << depth;
    }
    tree::TreeHyperparams hp{3, 1, 0, tree::Splitter::best, 1};
    MatrixView xc{complex, ds.n_features};
    auto t = tree::fit_tree(xc, ds.labels, train, hp);
    EXPECT_GE(tree::accuracy(t, xc, ds.labels, val), 0.95);
}
