#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "utopia/benchmark.hpp"
#include "utopia/decoupler.hpp"
#include "utopia/model.hpp"
#include "utopia/train.hpp"

using namespace utopia;

namespace {

Dataset columns_dataset(const std::vector<std::vector<double>>& cols) {
    Schema s;
    s.num_classes = 2;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        FeatureSpec f;
        f.name = "x" + std::to_string(j);
        f.kind = FeatureKind::numeric;
        f.numeric_min = -1e6;
        f.numeric_max = 1e6;
        s.features.push_back(f);
    }
    Dataset d;
    d.schema = s;
    const std::size_t n = cols[0].size();
    d.numeric = Matrix(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t r = 0; r < n; ++r) d.numeric(r, j) = cols[j][r];
    d.categorical = IndexMatrix(n, 0);
    d.labels.assign(n, 0);
    for (std::size_t r = 0; r < n; r += 2) d.labels[r] = 1;
    return d;
}

} // namespace

TEST(Correlation, PerfectAndAntiCorrelation) {
    const std::vector<double> base = {1.0, 2.5, -0.5, 4.0, 0.25, -3.0};
    std::vector<double> doubled(base), negated(base);
    for (auto& v : doubled) v *= 2.0;
    for (auto& v : negated) v = -v;
    const Dataset d = columns_dataset({base, doubled, negated});
    const CorrelationMatrix R = correlation_matrix(d);
    EXPECT_NEAR(R.values(0, 1), 1.0, 1e-12);
    EXPECT_NEAR(R.values(0, 2), -1.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(R.values(i, i), 1.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            EXPECT_NEAR(R.values(i, j), R.values(j, i), 1e-12);
}

TEST(Correlation, MatchesIndependentPearsonOracle) {
    const std::vector<double> a = {1, 2, 3, 4};
    const std::vector<double> b = {2, 1, 4, 3};
    const std::vector<double> c = {1, 3, 2, 4};
    const Dataset d = columns_dataset({a, b, c});
    const CorrelationMatrix R = correlation_matrix(d);
    EXPECT_NEAR(R.values(0, 1), testutil::pearson(a, b), 1e-12);
    EXPECT_NEAR(R.values(0, 2), testutil::pearson(a, c), 1e-12);
    EXPECT_NEAR(R.values(1, 2), testutil::pearson(b, c), 1e-12);
}

TEST(Correlation, ConstantColumnGivesZeroOffDiagonal) {
    const Dataset d = columns_dataset({{1, 2, 3, 4}, {5, 5, 5, 5}});
    const CorrelationMatrix R = correlation_matrix(d);
    EXPECT_DOUBLE_EQ(R.values(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(R.values(1, 1), 1.0);
}

TEST(RedundantPairs, StrictThreshold) {
    const Dataset d = make_benchmark(500, 1);
    const CorrelationMatrix R = correlation_matrix(d);
    EXPECT_TRUE(redundant_pairs(R, 1.0).empty());

    const auto pairs = redundant_pairs(R, 0.5);
    // the four shipped tight pairs, lexicographically ordered
    ASSERT_EQ(pairs.size(), 4u);
    EXPECT_EQ(pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
    EXPECT_EQ(pairs[1], (std::pair<std::size_t, std::size_t>{2, 3}));
    EXPECT_EQ(pairs[2], (std::pair<std::size_t, std::size_t>{4, 5}));
    EXPECT_EQ(pairs[3], (std::pair<std::size_t, std::size_t>{6, 7}));

    EXPECT_THROW(redundant_pairs(R, -0.1), ValidationError);
    EXPECT_THROW(redundant_pairs(R, 1.1), ValidationError);
}

TEST(RedundantPairs, SingleThresholdedPair) {
    // two noisy copies plus an independent column
    Rng rng(3);
    std::vector<double> a(200), b(200), c(200);
    for (std::size_t i = 0; i < 200; ++i) {
        a[i] = rng.normal();
        b[i] = 0.8 * a[i] + 0.6 * rng.normal();
        c[i] = rng.normal();
    }
    const Dataset d = columns_dataset({a, b, c});
    const CorrelationMatrix R = correlation_matrix(d);
    ASSERT_GT(std::abs(R.values(0, 1)), 0.5);
    ASSERT_LT(std::abs(R.values(0, 2)), 0.5);
    ASSERT_LT(std::abs(R.values(1, 2)), 0.5);
    const auto pairs = redundant_pairs(R, 0.5);
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(Influence, DeadFeatureScoresZero) {
    Schema s;
    s.num_classes = 2;
    for (int j = 0; j < 3; ++j) {
        FeatureSpec f;
        f.name = "x" + std::to_string(j);
        f.kind = FeatureKind::numeric;
        f.numeric_min = -100;
        f.numeric_max = 100;
        s.features.push_back(f);
    }
    SurrogateModel m = init_model(s, {}, 4, 1);
    for (std::size_t o = 0; o < m.weights[0].rows(); ++o) m.weights[0](o, 1) = 0.0;
    Rng rng(5);
    Dataset d = testutil::random_dataset(s, 20, rng);
    m.scaler = fit_standardizer(d);
    const InfluenceScores inf = influence_scores(m, d);
    EXPECT_DOUBLE_EQ(inf.scores[1], 0.0);
    EXPECT_GT(inf.scores[0], 0.0);
}

TEST(Influence, SingleRowEqualsThatRowsGradient) {
    Rng rng(7);
    Schema s = columns_dataset({{0.0, 1.0}}).schema;
    Dataset d = testutil::random_dataset(s, 6, rng);
    SurrogateModel m = init_model(s, {4}, 4, 2);
    TrainConfig cfg;
    cfg.epochs = 2;
    train(m, d, cfg);

    const Dataset one = take_rows(d, {2});
    const Matrix xs = standardize(one, m.scaler);
    NetScratch ws;
    InputGradient ig;
    row_loss_grads(m, xs.row(0), {}, one.labels[0], nullptr, &ig, ws);
    const InfluenceScores inf = influence_scores(m, one);
    for (std::size_t j = 0; j < inf.scores.size(); ++j)
        EXPECT_DOUBLE_EQ(inf.scores[j], std::abs(ig.numeric_grad[j]));
}

TEST(Influence, MatchesFiniteDifferenceOracle) {
    // logistic model: no ReLU kinks, so central differences are clean
    Rng rng(11);
    Schema s;
    s.num_classes = 3;
    for (int j = 0; j < 4; ++j) {
        FeatureSpec f;
        f.name = "x" + std::to_string(j);
        f.kind = FeatureKind::numeric;
        f.numeric_min = -100;
        f.numeric_max = 100;
        s.features.push_back(f);
    }
    Dataset d = testutil::random_dataset(s, 30, rng);
    for (auto& y : d.labels) y = static_cast<int>(rng.uniform_int(3));
    SurrogateModel m = init_model(s, {}, 4, 3);
    TrainConfig cfg;
    cfg.epochs = 3;
    train(m, d, cfg);

    const Matrix xs = standardize(d, m.scaler);
    NetScratch ws;
    const double h = 1e-6;
    std::vector<double> fd_scores(d.d_num(), 0.0);
    std::vector<double> x(d.d_num());
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (std::size_t j = 0; j < d.d_num(); ++j) {
            for (std::size_t k = 0; k < d.d_num(); ++k) x[k] = xs(r, k);
            auto loss_at = [&](double v) {
                x[j] = v;
                return row_loss_grads(m, x, {}, d.labels[r], nullptr, nullptr, ws);
            };
            const double base = xs(r, j);
            const double fd = (loss_at(base + h) - loss_at(base - h)) / (2.0 * h);
            fd_scores[j] += std::abs(fd);
        }
    }
    for (auto& v : fd_scores) v /= static_cast<double>(d.n_rows());

    const InfluenceScores inf = influence_scores(m, d);
    for (std::size_t j = 0; j < d.d_num(); ++j)
        EXPECT_LE(std::abs(inf.scores[j] - fd_scores[j]) / std::max(1e-9, fd_scores[j]), 1e-3);
}

TEST(Masks, SinglePairFollowsInfluence) {
    InfluenceScores inf{{3.0, 1.0}};
    const MaskPair m = build_masks({{0, 1}}, inf);
    EXPECT_EQ(m.phi, (std::vector<std::uint8_t>{1, 0}));
    EXPECT_EQ(m.psi, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Masks, ChainedConflictResolvedByGlobalRank) {
    // pairs (0,1) and (1,2), scores 3 > 2 > 1: feature 1 is argmin of the
    // first pair and argmax of the second; median of {3,2,1} is 2, so the
    // >= rule sends feature 1 to phi.
    InfluenceScores inf{{3.0, 2.0, 1.0}};
    const MaskPair m = build_masks({{0, 1}, {1, 2}}, inf);
    EXPECT_EQ(m.phi, (std::vector<std::uint8_t>{1, 1, 0}));
    EXPECT_EQ(m.psi, (std::vector<std::uint8_t>{0, 0, 1}));
}

TEST(Masks, EmptyPairsGiveEmptyMasks) {
    InfluenceScores inf{{1.0, 2.0, 3.0}};
    const MaskPair m = build_masks({}, inf);
    EXPECT_EQ(m.phi, (std::vector<std::uint8_t>{0, 0, 0}));
    EXPECT_EQ(m.psi, (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(Masks, TiesBreakTowardLowerIndexAsMax) {
    InfluenceScores inf{{2.0, 2.0}};
    const MaskPair m = build_masks({{0, 1}}, inf);
    EXPECT_EQ(m.phi[0], 1);
    EXPECT_EQ(m.psi[1], 1);
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> random_pair_graph(Rng& rng, std::size_t d) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    const std::size_t np = rng.uniform_int(d * 2 + 1);
    for (std::size_t k = 0; k < np; ++k) {
        const std::size_t i = rng.uniform_int(d);
        const std::size_t j = rng.uniform_int(d);
        if (i == j) continue;
        pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

} // namespace

TEST(Masks, FuzzOrthogonalityScaleInvarianceDeterminism) {
    Rng rng(999);
    for (int iter = 0; iter < 2000; ++iter) {
        const std::size_t d = 2 + rng.uniform_int(10);
        const auto pairs = random_pair_graph(rng, d);
        InfluenceScores inf;
        inf.scores.resize(d);
        for (auto& v : inf.scores)
            v = rng.uniform01() < 0.15 ? 0.0 : rng.uniform(0.0, 5.0); // ties included
        const MaskPair m = build_masks(pairs, inf);

        for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(m.phi[k] & m.psi[k], 0);

        // support subset of pair participants
        std::vector<std::uint8_t> participant(d, 0);
        for (const auto& [i, j] : pairs) participant[i] = participant[j] = 1;
        for (std::size_t k = 0; k < d; ++k)
            if (!participant[k]) {
                EXPECT_EQ(m.phi[k], 0);
                EXPECT_EQ(m.psi[k], 0);
            }

        // positive rescaling leaves the masks unchanged
        InfluenceScores scaled = inf;
        const double c = rng.uniform(0.1, 117.0);
        for (auto& v : scaled.scores) v *= c;
        const MaskPair ms = build_masks(pairs, scaled);
        EXPECT_EQ(ms.phi, m.phi);
        EXPECT_EQ(ms.psi, m.psi);

        // determinism
        const MaskPair again = build_masks(pairs, inf);
        EXPECT_EQ(again.phi, m.phi);
        EXPECT_EQ(again.psi, m.psi);
    }
}

TEST(Masks, RandomPartitionIsOrthogonalAndCoversParticipants) {
    Rng rng(1234);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t d = 2 + rng.uniform_int(8);
        const auto pairs = random_pair_graph(rng, d);
        const MaskPair m = build_random_masks(pairs, d, iter);
        std::vector<std::uint8_t> participant(d, 0);
        for (const auto& [i, j] : pairs) participant[i] = participant[j] = 1;
        for (std::size_t k = 0; k < d; ++k) {
            EXPECT_EQ(m.phi[k] & m.psi[k], 0);
            EXPECT_EQ(static_cast<int>(m.phi[k]) + static_cast<int>(m.psi[k]),
                      participant[k] ? 1 : 0);
        }
        const MaskPair again = build_random_masks(pairs, d, iter);
        EXPECT_EQ(again.phi, m.phi);
    }
}

TEST(Audit, DumpContainsAllSections) {
    const Dataset d = make_benchmark(300, 2);
    const CorrelationMatrix R = correlation_matrix(d);
    const auto pairs = redundant_pairs(R, 0.5);
    SurrogateModel m = init_model(d.schema, {8}, 4, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    train(m, d, cfg);
    const InfluenceScores inf = influence_scores(m, d);
    const MaskPair masks = build_masks(pairs, inf);
    const nlohmann::json j = decoupling_audit(d, R, pairs, inf, masks, 0.5);
    EXPECT_TRUE(j.contains("correlation"));
    EXPECT_TRUE(j.contains("redundant_pairs"));
    EXPECT_TRUE(j.contains("influence_scores"));
    EXPECT_TRUE(j.contains("mask_phi"));
    EXPECT_TRUE(j.contains("mask_psi"));
    EXPECT_EQ(j["numeric_features"].size(), d.d_num());
}
