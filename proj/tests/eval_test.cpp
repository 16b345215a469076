#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "utopia/benchmark.hpp"
#include "utopia/defenses.hpp"
#include "utopia/eval.hpp"
#include "utopia/train.hpp"

using namespace utopia;

namespace {

// Closed-form likelihood-ratio classifier for the shipped benchmark's
// generative model (signal features plus the categorical hint; the tight
// echoes add almost no independent information and are ignored).
int benchmark_bayes(const Dataset& d, std::size_t r) {
    const double hint_pos[4] = {0.4, 0.3, 0.2, 0.1};
    const double hint_neg[4] = {0.1, 0.2, 0.3, 0.4};
    double llr = 2.0 * 0.85 * d.numeric(r, 0) + 2.0 * 0.65 * d.numeric(r, 2) +
                 2.0 * 0.50 * d.numeric(r, 4) + 2.0 * 0.30 * d.numeric(r, 8);
    const auto tok = static_cast<std::size_t>(d.categorical(r, 0));
    llr += std::log(hint_pos[tok] / hint_neg[tok]);
    return llr > 0.0 ? 1 : 0;
}

} // namespace

TEST(Benchmark, LearnableByConstruction) {
    const Dataset d = make_benchmark(4000, 21);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < d.n_rows(); ++r)
        if (benchmark_bayes(d, r) == d.labels[r]) ++hits;
    const double bayes_acc = static_cast<double>(hits) / static_cast<double>(d.n_rows());
    EXPECT_GE(bayes_acc, 0.85);
    EXPECT_LE(bayes_acc, 0.97); // classes genuinely overlap
}

TEST(TrainVictims, CleanBenchmarkAccuracyAndDeterminism) {
    const Dataset d = make_benchmark(1500, 22);
    const auto parts = split(d, {0.7, 0.15, 0.15}, 1);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 3;
    const std::vector<TrainVariant> variants = {{"clean", parts[0], {}}};
    const EvalReport a =
        train_victims(variants, parts[2], {{"logistic", {}}, {"mlp16x16", {16, 16}}}, cfg);
    EXPECT_GE(a.get("logistic", "clean"), 0.85);
    EXPECT_GE(a.get("mlp16x16", "clean"), 0.85);

    const EvalReport b =
        train_victims(variants, parts[2], {{"logistic", {}}, {"mlp16x16", {16, 16}}}, cfg);
    EXPECT_EQ(eval_report_csv(a), eval_report_csv(b)); // byte-identical
}

TEST(Defenses, GaussianZeroSigmaIsIdentity) {
    const Dataset d = make_benchmark(100, 23);
    DefenseSpec spec;
    spec.kind = DefenseKind::gaussian_noise;
    spec.strength = 0.0;
    const DefenseResult res = apply_defense(d, spec);
    ASSERT_TRUE(res.data.has_value());
    EXPECT_EQ(res.data->numeric.data(), d.numeric.data());
    EXPECT_EQ(res.data->categorical.data(), d.categorical.data());
}

TEST(Defenses, FullMaskingReplacesEverythingByColumnMeans) {
    const Dataset d = make_benchmark(200, 24);
    DefenseSpec spec;
    spec.kind = DefenseKind::feature_masking;
    spec.strength = 1.0;
    const DefenseResult res = apply_defense(d, spec);
    ASSERT_TRUE(res.data.has_value());
    for (std::size_t j = 0; j < d.d_num(); ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < d.n_rows(); ++r) mean += d.numeric(r, j);
        mean /= static_cast<double>(d.n_rows());
        for (std::size_t r = 0; r < d.n_rows(); ++r)
            EXPECT_NEAR(res.data->numeric(r, j), mean, 1e-12);
    }
}

TEST(Defenses, TwoLevelQuantizationSnapsToEndpoints) {
    Schema s;
    s.num_classes = 2;
    FeatureSpec f;
    f.name = "x";
    f.kind = FeatureKind::numeric;
    f.numeric_min = -1;
    f.numeric_max = 2;
    s.features = {f};
    Dataset d;
    d.schema = s;
    d.numeric = Matrix(5, 1);
    const double vals[5] = {0.0, 0.2, 0.49, 0.51, 1.0};
    for (int i = 0; i < 5; ++i) d.numeric(static_cast<std::size_t>(i), 0) = vals[i];
    d.categorical = IndexMatrix(5, 0);
    d.labels = {0, 1, 0, 1, 0};

    DefenseSpec spec;
    spec.kind = DefenseKind::quantization;
    spec.strength = 2.0;
    const DefenseResult res = apply_defense(d, spec);
    ASSERT_TRUE(res.data.has_value());
    for (std::size_t r = 0; r < 5; ++r) {
        const double v = res.data->numeric(r, 0);
        EXPECT_TRUE(v == 0.0 || v == 1.0) << v;
    }
    spec.strength = 1.0;
    EXPECT_THROW(apply_defense(d, spec), ValidationError);
}

TEST(Defenses, HookDefensesReturnHooks) {
    const Dataset d = make_benchmark(50, 25);
    DefenseSpec ls;
    ls.kind = DefenseKind::label_smoothing;
    const DefenseResult r1 = apply_defense(d, ls);
    EXPECT_FALSE(r1.data.has_value());
    EXPECT_DOUBLE_EQ(r1.hooks.label_smoothing, 0.1);

    DefenseSpec mx;
    mx.kind = DefenseKind::mixup;
    const DefenseResult r2 = apply_defense(d, mx);
    EXPECT_FALSE(r2.data.has_value());
    EXPECT_DOUBLE_EQ(r2.hooks.mixup_alpha, 1.0);

    ls.strength = 1.5;
    EXPECT_THROW(apply_defense(d, ls), ValidationError);
}

TEST(Defenses, AllKindsPreserveDatasetInvariants) {
    const Dataset d = make_benchmark(300, 26);
    for (DefenseKind k : {DefenseKind::feature_masking, DefenseKind::feature_squeezing,
                          DefenseKind::gaussian_noise, DefenseKind::quantization,
                          DefenseKind::swap_noise}) {
        DefenseSpec spec;
        spec.kind = k;
        spec.seed = 5;
        const DefenseResult res = apply_defense(d, spec);
        ASSERT_TRUE(res.data.has_value()) << defense_name(k);
        EXPECT_NO_THROW(validate_dataset(*res.data)) << defense_name(k);
        EXPECT_EQ(res.data->labels, d.labels) << defense_name(k);
    }
}

TEST(Defenses, MixupTargetsAreConvexCombinations) {
    // mirrors the trainer's target construction: smoothed one-hots mixed by
    // lam stay entrywise in [0,1] and sum to 1
    Rng rng(27);
    for (int iter = 0; iter < 500; ++iter) {
        const int K = 2 + static_cast<int>(rng.uniform_int(5));
        const double eps = rng.uniform(0.0, 0.5);
        const double lam = rng.uniform01();
        const int y1 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
        const int y2 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
        std::vector<double> t(static_cast<std::size_t>(K), eps / K);
        t[static_cast<std::size_t>(y1)] += 1.0 - eps;
        for (auto& v : t) v *= lam;
        for (auto& v : t) v += (1.0 - lam) * (eps / K);
        t[static_cast<std::size_t>(y2)] += (1.0 - lam) * (1.0 - eps);
        double sum = 0.0;
        for (double v : t) {
            EXPECT_GE(v, -1e-15);
            EXPECT_LE(v, 1.0 + 1e-15);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Defenses, MixupTrainingRunsAndIsDeterministic) {
    const Dataset d = make_benchmark(300, 28);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    TrainHooks hooks;
    hooks.mixup_alpha = 1.0;
    SurrogateModel a = init_model(d.schema, {8}, 4, 1);
    SurrogateModel b = init_model(d.schema, {8}, 4, 1);
    const TrainLog la = train(a, d, cfg, hooks);
    const TrainLog lb = train(b, d, cfg, hooks);
    EXPECT_EQ(la.epoch_losses, lb.epoch_losses);
    for (double v : la.epoch_losses) EXPECT_TRUE(std::isfinite(v));
}

TEST(Saliency, AblationCurveEndpoints) {
    const Dataset d = make_benchmark(400, 29);
    SurrogateModel m = init_model(d.schema, {16, 16}, 4, 2);
    TrainConfig cfg;
    cfg.epochs = 10;
    train(m, d, cfg);
    const SaliencyReport rep = saliency_report(m, d);
    const double base = accuracy(m, d);
    ASSERT_EQ(rep.topk_accuracy.size(), d.d_num() + 1);
    EXPECT_DOUBLE_EQ(rep.topk_accuracy[0], base);
    EXPECT_DOUBLE_EQ(rep.bottomk_accuracy[0], base);
    EXPECT_DOUBLE_EQ(rep.topk_accuracy[d.d_num()], rep.bottomk_accuracy[d.d_num()]);
}

TEST(Saliency, DominantFeatureHurtsMoreThanWeakest) {
    // one dominant feature carries nearly all the signal
    Schema s;
    s.num_classes = 2;
    for (int j = 0; j < 3; ++j) {
        FeatureSpec f;
        f.name = "x" + std::to_string(j);
        f.kind = FeatureKind::numeric;
        f.numeric_min = -50;
        f.numeric_max = 50;
        s.features.push_back(f);
    }
    Dataset d;
    d.schema = s;
    d.numeric = Matrix(1000, 3);
    d.categorical = IndexMatrix(1000, 0);
    d.labels.resize(1000);
    Rng rng(30);
    for (std::size_t r = 0; r < 1000; ++r) {
        const int y = static_cast<int>(r % 2);
        d.labels[r] = y;
        d.numeric(r, 0) = (y == 1 ? 1.5 : -1.5) + rng.normal();
        d.numeric(r, 1) = rng.normal();
        d.numeric(r, 2) = rng.normal();
    }
    SurrogateModel m = init_model(s, {8}, 4, 3);
    TrainConfig cfg;
    cfg.epochs = 15;
    train(m, d, cfg);
    const SaliencyReport rep = saliency_report(m, d);
    EXPECT_EQ(rep.order[0], 0u); // feature 0 is the saliency leader
    const double top1_drop = rep.topk_accuracy[0] - rep.topk_accuracy[1];
    const double bottom1_drop = rep.bottomk_accuracy[0] - rep.bottomk_accuracy[1];
    EXPECT_GT(top1_drop, bottom1_drop);
    EXPECT_GT(top1_drop, 0.2);
}

TEST(Landscape, CenterCellEqualsTrainLossAndZeroRadiusIsConstant) {
    const Dataset d = make_benchmark(200, 31);
    SurrogateModel m = init_model(d.schema, {8}, 4, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    train(m, d, cfg);

    const Matrix grid = loss_landscape(m, d, 0.5, 5);
    const Matrix xs = standardize(d, m.scaler);
    NetScratch ws;
    double center = 0.0;
    {
        double loss = 0.0;
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
            build_input(m, xs.row(r), d.categorical.row(r), ws.input);
            one_hot(d.labels[r], m.num_classes(), ws.target);
            forward_logits(m, ws.input, ws);
            loss += softmax_xent(ws.pre.back(), ws.target, ws.probs);
        }
        center = loss / static_cast<double>(d.n_rows());
    }
    EXPECT_DOUBLE_EQ(grid(2, 2), center);

    const Matrix flat = loss_landscape(m, d, 0.0, 3);
    for (double v : flat.data()) EXPECT_DOUBLE_EQ(v, flat(0, 0));

    const Matrix again = loss_landscape(m, d, 0.5, 5);
    EXPECT_EQ(grid.data(), again.data()); // fixed directions, deterministic

    EXPECT_THROW(loss_landscape(m, d, 0.5, 4), ValidationError);
}

TEST(NoiseRobustness, ZeroSigmaExactAndMonotoneOnAverage) {
    const Dataset d = make_benchmark(300, 32);
    SurrogateModel m = init_model(d.schema, {16, 16}, 4, 5);
    TrainConfig cfg;
    cfg.epochs = 20;
    train(m, d, cfg);

    const std::vector<double> grid = {0.0, 0.2, 0.5, 1.0, 2.0};
    const auto losses = noise_robustness(m, d, grid, 7, 32);
    ASSERT_EQ(losses.size(), grid.size());

    const Matrix xs = standardize(d, m.scaler);
    NetScratch ws;
    double clean = 0.0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        build_input(m, xs.row(r), d.categorical.row(r), ws.input);
        one_hot(d.labels[r], m.num_classes(), ws.target);
        forward_logits(m, ws.input, ws);
        clean += softmax_xent(ws.pre.back(), ws.target, ws.probs);
    }
    clean /= static_cast<double>(d.n_rows());
    EXPECT_DOUBLE_EQ(losses[0], clean);

    for (std::size_t i = 1; i < losses.size(); ++i)
        EXPECT_GE(losses[i], losses[i - 1] * 0.95); // 5% slack on the Monte-Carlo average

    const auto again = noise_robustness(m, d, grid, 7, 32);
    EXPECT_EQ(losses, again);
}
