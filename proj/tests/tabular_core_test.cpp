#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"
#include "utopia/dataset.hpp"
#include "utopia/perturbation.hpp"
#include "utopia/scaler.hpp"
#include "utopia/schema.hpp"

using namespace utopia;

namespace {

Schema small_schema() {
    Schema s;
    s.num_classes = 2;
    FeatureSpec a;
    a.name = "x0";
    a.kind = FeatureKind::numeric;
    a.numeric_min = -10.0;
    a.numeric_max = 5.0;
    FeatureSpec b;
    b.name = "x1";
    b.kind = FeatureKind::numeric;
    b.numeric_min = 0.0;
    b.numeric_max = 100.0;
    FeatureSpec c;
    c.name = "color";
    c.kind = FeatureKind::categorical;
    c.tokens = {"red", "green", "black"};
    s.features = {a, b, c};
    return s;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

} // namespace

TEST(Schema, ValidationRejectsBadSpecs) {
    Schema s = small_schema();
    EXPECT_NO_THROW(validate_schema(s));

    Schema dup = s;
    dup.features[1].name = "x0";
    EXPECT_THROW(validate_schema(dup), ValidationError);

    Schema flipped = s;
    std::swap(flipped.features[0].numeric_min, flipped.features[0].numeric_max);
    EXPECT_THROW(validate_schema(flipped), ValidationError);

    Schema no_tokens = s;
    no_tokens.features[2].tokens.clear();
    EXPECT_THROW(validate_schema(no_tokens), ValidationError);

    Schema no_numeric;
    no_numeric.num_classes = 2;
    no_numeric.features = {s.features[2]};
    EXPECT_THROW(validate_schema(no_numeric), ValidationError);

    Schema one_class = s;
    one_class.num_classes = 1;
    EXPECT_THROW(validate_schema(one_class), ValidationError);
}

TEST(Schema, JsonRoundTrip) {
    const Schema s = small_schema();
    testutil::TempDir tmp("schema");
    save_schema(s, tmp.file("schema.json"));
    const Schema loaded = load_schema(tmp.file("schema.json"));
    EXPECT_TRUE(loaded == s);
}

TEST(LoadCsv, ParsesValidFile) {
    testutil::TempDir tmp("csv");
    write_file(tmp.file("d.csv"),
               "x0,x1,color,label\n"
               "1.5,20,red,0\n"
               "-2.25,0.5,green,1\n"
               "4.125,99,black,1\n");
    const Dataset d = load_csv(tmp.file("d.csv"), small_schema());
    ASSERT_EQ(d.n_rows(), 3u);
    EXPECT_DOUBLE_EQ(d.numeric(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(d.numeric(2, 1), 99.0);
    EXPECT_EQ(d.categorical(1, 0), 1);
    EXPECT_EQ(d.labels[2], 1);
}

TEST(LoadCsv, UnknownTokenNamesRow) {
    testutil::TempDir tmp("csv");
    write_file(tmp.file("d.csv"),
               "x0,x1,color,label\n"
               "1,1,red,0\n"
               "1,1,blue,1\n");
    try {
        load_csv(tmp.file("d.csv"), small_schema());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("blue"), std::string::npos);
    }
}

TEST(LoadCsv, OutOfRangeNumericRejected) {
    testutil::TempDir tmp("csv");
    write_file(tmp.file("d.csv"),
               "x0,x1,color,label\n"
               "9.9,1,red,0\n");
    EXPECT_THROW(load_csv(tmp.file("d.csv"), small_schema()), ParseError);
}

TEST(LoadCsv, HeaderMismatchAndBadRowsRejected) {
    testutil::TempDir tmp("csv");
    write_file(tmp.file("a.csv"), "x0,color,label\n1,red,0\n");
    EXPECT_THROW(load_csv(tmp.file("a.csv"), small_schema()), ParseError);

    write_file(tmp.file("b.csv"), "x0,x1,color,label\n1,1,red\n");
    EXPECT_THROW(load_csv(tmp.file("b.csv"), small_schema()), ParseError);

    write_file(tmp.file("c.csv"), "x0,x1,color,label\n1,oops,red,0\n");
    EXPECT_THROW(load_csv(tmp.file("c.csv"), small_schema()), ParseError);

    write_file(tmp.file("d.csv"), "x0,x1,color,label\n1,1,red,7\n");
    EXPECT_THROW(load_csv(tmp.file("d.csv"), small_schema()), ParseError);

    EXPECT_THROW(load_csv(tmp.file("missing.csv"), small_schema()), IoError);
}

TEST(LoadCsv, UnsetBoundsResolveToColumnRange) {
    Schema s = small_schema();
    s.features[0].numeric_min = -std::numeric_limits<double>::infinity();
    s.features[0].numeric_max = std::numeric_limits<double>::infinity();
    testutil::TempDir tmp("csv");
    write_file(tmp.file("d.csv"),
               "x0,x1,color,label\n"
               "-3,1,red,0\n"
               "7,2,red,1\n");
    const Dataset d = load_csv(tmp.file("d.csv"), s);
    EXPECT_DOUBLE_EQ(d.schema.features[0].numeric_min, -3.0);
    EXPECT_DOUBLE_EQ(d.schema.features[0].numeric_max, 7.0);
}

TEST(WriteCsv, RoundTripIsExact) {
    Rng rng(7);
    const Schema s = small_schema();
    const Dataset d = testutil::random_dataset(s, 40, rng);
    testutil::TempDir tmp("csv");
    write_csv(d, tmp.file("out.csv"));
    const Dataset back = load_csv(tmp.file("out.csv"), s);
    ASSERT_EQ(back.n_rows(), d.n_rows());
    EXPECT_EQ(back.numeric.data(), d.numeric.data()); // bitwise round-trip
    EXPECT_EQ(back.categorical.data(), d.categorical.data());
    EXPECT_EQ(back.labels, d.labels);
}

TEST(Standardizer, HandComputedMeanStd) {
    // Column [0, 2]: population mean 1, variance ((0-1)^2 + (2-1)^2)/2 = 1.
    Schema s;
    s.num_classes = 2;
    FeatureSpec f;
    f.name = "x";
    f.kind = FeatureKind::numeric;
    f.numeric_min = -5;
    f.numeric_max = 5;
    s.features = {f};
    Dataset d;
    d.schema = s;
    d.numeric = Matrix(2, 1);
    d.numeric(0, 0) = 0.0;
    d.numeric(1, 0) = 2.0;
    d.categorical = IndexMatrix(2, 0);
    d.labels = {0, 1};
    const ScalerStats st = fit_standardizer(d);
    EXPECT_DOUBLE_EQ(st.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(st.std[0], 1.0);
}

TEST(Standardizer, ConstantColumnFloored) {
    Schema s;
    s.num_classes = 2;
    FeatureSpec f;
    f.name = "x";
    f.kind = FeatureKind::numeric;
    f.numeric_min = 0;
    f.numeric_max = 10;
    s.features = {f};
    Dataset d;
    d.schema = s;
    d.numeric = Matrix(3, 1, 5.0);
    d.categorical = IndexMatrix(3, 0);
    d.labels = {0, 1, 0};
    const ScalerStats st = fit_standardizer(d);
    EXPECT_DOUBLE_EQ(st.std[0], 1e-8);
}

TEST(Standardizer, DeterministicAndRejectsSingleRow) {
    Rng rng(3);
    const Schema s = small_schema();
    const Dataset d = testutil::random_dataset(s, 10, rng);
    const ScalerStats a = fit_standardizer(d);
    const ScalerStats b = fit_standardizer(d);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std, b.std);

    const Dataset one = take_rows(d, {0});
    EXPECT_THROW(fit_standardizer(one), ValidationError);
}

TEST(Perturbation, ZeroIsIdentity) {
    Rng rng(11);
    const Dataset d = testutil::random_dataset(small_schema(), 12, rng);
    const ScalerStats st = fit_standardizer(d);
    const auto p = Perturbation::zeros(d.n_rows(), d.d_num());
    const Dataset out = apply_perturbation(d, p, st);
    EXPECT_EQ(out.numeric.data(), d.numeric.data());
    EXPECT_EQ(out.categorical.data(), d.categorical.data());
    EXPECT_EQ(out.labels, d.labels);
}

TEST(Perturbation, ClampsToDomain) {
    Rng rng(13);
    Dataset d = testutil::random_dataset(small_schema(), 4, rng);
    d.numeric(0, 0) = 4.9; // near x0's max of 5.0
    const ScalerStats st = fit_standardizer(d);
    auto p = Perturbation::zeros(d.n_rows(), d.d_num());
    p.numeric_delta(0, 0) = 100.0; // way past the bound
    const Dataset out = apply_perturbation(d, p, st);
    EXPECT_DOUBLE_EQ(out.numeric(0, 0), 5.0);
    EXPECT_NO_THROW(validate_dataset(out));
}

TEST(Perturbation, SubstitutionsRespectHammingBudget) {
    Rng rng(17);
    const Dataset d = testutil::random_dataset(small_schema(), 8, rng);
    const ScalerStats st = fit_standardizer(d);
    auto p = Perturbation::zeros(d.n_rows(), d.d_num());
    for (std::size_t r = 0; r < d.n_rows(); ++r) p.cat_subs[r].push_back({0, 2});
    const Dataset out = apply_perturbation(d, p, st);
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        int hamming = 0;
        for (std::size_t j = 0; j < d.d_cat(); ++j)
            if (out.categorical(r, j) != d.categorical(r, j)) ++hamming;
        EXPECT_LE(hamming, 1);
    }
    EXPECT_EQ(mixed_norm(p).max_hamming, 1);
}

TEST(Perturbation, BadTokenIndexRejected) {
    Rng rng(19);
    const Dataset d = testutil::random_dataset(small_schema(), 3, rng);
    const ScalerStats st = fit_standardizer(d);
    auto p = Perturbation::zeros(d.n_rows(), d.d_num());
    p.cat_subs[0].push_back({0, 99});
    EXPECT_THROW(apply_perturbation(d, p, st), ValidationError);
}

TEST(MixedNorm, BasicCases) {
    auto p = Perturbation::zeros(3, 2);
    EXPECT_DOUBLE_EQ(mixed_norm(p).linf_num, 0.0);
    EXPECT_EQ(mixed_norm(p).max_hamming, 0);

    p.numeric_delta(1, 0) = -0.03;
    EXPECT_DOUBLE_EQ(mixed_norm(p).linf_num, 0.03);
    EXPECT_EQ(mixed_norm(p).max_hamming, 0);

    p.cat_subs[2].push_back({0, 1});
    p.cat_subs[2].push_back({1, 0});
    EXPECT_EQ(mixed_norm(p).max_hamming, 2);
}

TEST(MixedNorm, MatchesIndependentRecomputationWithoutClamping) {
    Rng rng(23);
    Schema s = small_schema();
    // widen bounds so nothing clamps
    s.features[0].numeric_min = -1e6;
    s.features[0].numeric_max = 1e6;
    s.features[1].numeric_min = -1e6;
    s.features[1].numeric_max = 1e6;
    const Dataset d = testutil::random_dataset(s, 25, rng);
    const ScalerStats st = fit_standardizer(d);
    const Perturbation p = testutil::random_feasible_perturbation(d, st, 0.05, 1, rng);
    const Dataset out = apply_perturbation(d, p, st);

    double linf = 0.0;
    int max_h = 0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (std::size_t j = 0; j < d.d_num(); ++j)
            linf = std::max(linf, std::abs((out.numeric(r, j) - d.numeric(r, j)) / st.std[j]));
        int h = 0;
        for (std::size_t j = 0; j < d.d_cat(); ++j)
            if (out.categorical(r, j) != d.categorical(r, j)) ++h;
        max_h = std::max(max_h, h);
    }
    const MixedNorm mn = mixed_norm(p);
    EXPECT_NEAR(linf, mn.linf_num, 1e-12);
    EXPECT_LE(max_h, mn.max_hamming); // substitutions to the same token don't count
}

TEST(Perturbation, FuzzNeverViolatesInvariants) {
    Rng rng(29);
    for (int iter = 0; iter < 200; ++iter) {
        const Schema s = testutil::random_schema(rng);
        const Dataset d = testutil::random_dataset(s, 2 + rng.uniform_int(20), rng);
        const ScalerStats st = fit_standardizer(d);
        const Perturbation p =
            testutil::random_feasible_perturbation(d, st, rng.uniform(0.0, 0.2), 2, rng);
        const Dataset out = apply_perturbation(d, p, st);
        EXPECT_NO_THROW(validate_dataset(out));
        EXPECT_EQ(out.labels, d.labels);
    }
}

TEST(Split, StratifiedSizesAndDeterminism) {
    Schema s = small_schema();
    Rng rng(31);
    Dataset d = testutil::random_dataset(s, 100, rng);
    for (std::size_t r = 0; r < 100; ++r) d.labels[r] = static_cast<int>(r % 2);
    const auto parts = split(d, {0.8, 0.1, 0.1}, 99);
    EXPECT_EQ(parts[0].n_rows(), 80u);
    EXPECT_EQ(parts[1].n_rows(), 10u);
    EXPECT_EQ(parts[2].n_rows(), 10u);

    // stratification: each part keeps the 50/50 class balance
    for (const auto& p : parts) {
        std::size_t ones = 0;
        for (int y : p.labels) ones += static_cast<std::size_t>(y);
        EXPECT_EQ(ones * 2, p.n_rows());
    }

    const auto again = split(d, {0.8, 0.1, 0.1}, 99);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(parts[static_cast<std::size_t>(i)].numeric.data(),
                  again[static_cast<std::size_t>(i)].numeric.data());
        EXPECT_EQ(parts[static_cast<std::size_t>(i)].labels,
                  again[static_cast<std::size_t>(i)].labels);
    }

    const auto other_seed = split(d, {0.8, 0.1, 0.1}, 100);
    EXPECT_NE(parts[0].numeric.data(), other_seed[0].numeric.data());
}

TEST(Split, DisjointPartition) {
    Rng rng(37);
    const Dataset d = testutil::random_dataset(small_schema(), 60, rng);
    const auto parts = split(d, {0.6, 0.2, 0.2}, 5);
    EXPECT_EQ(parts[0].n_rows() + parts[1].n_rows() + parts[2].n_rows(), d.n_rows());
}

TEST(Split, TinyClassRejected) {
    Rng rng(41);
    Dataset d = testutil::random_dataset(small_schema(), 10, rng);
    for (std::size_t r = 0; r < 10; ++r) d.labels[r] = 0;
    d.labels[3] = 1; // a 1-row class cannot be stratified
    EXPECT_THROW(split(d, {0.8, 0.1, 0.1}, 1), ValidationError);
}

TEST(Split, FractionValidation) {
    Rng rng(43);
    const Dataset d = testutil::random_dataset(small_schema(), 30, rng);
    EXPECT_THROW(split(d, {0.5, 0.5, 0.5}, 1), ValidationError);
    EXPECT_THROW(split(d, {1.0, 0.0, 0.0}, 1), ValidationError);
}
