#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/defenses.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/model.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"
#include "utopia/train.hpp"

namespace utopia {

struct VictimConfig {
    std::string name;
    std::vector<int> hidden;
};

inline std::vector<VictimConfig> default_victims() {
    return {{"logistic", {}}, {"mlp16x16", {16, 16}}, {"mlp64x64", {64, 64}}};
}

struct EvalRow {
    std::string victim;
    std::string variant; // clean | protected | <defense>+protected | ...
    double accuracy = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;

    double get(const std::string& victim, const std::string& variant) const {
        for (const auto& r : rows)
            if (r.victim == victim && r.variant == variant) return r.accuracy;
        throw ValidationError("eval report: no row for " + victim + " / " + variant);
    }
};

inline std::string eval_report_csv(const EvalReport& rep) {
    std::string out = "victim,variant,accuracy\n";
    char buf[64];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
        out += r.victim + "," + r.variant + "," + buf + "\n";
    }
    return out;
}

/// One dataset variant a victim can be trained on: data plus optional
/// trainer hooks (label smoothing / mixup defenses).
struct TrainVariant {
    std::string name;
    Dataset data;
    TrainHooks hooks;
};

/// Trains every victim on every variant and reports clean-test accuracy.
/// Deterministic per cfg.seed; victims and variants keep their given order.
inline EvalReport train_victims(const std::vector<TrainVariant>& variants, const Dataset& test,
                                const std::vector<VictimConfig>& victims,
                                const TrainConfig& cfg, int embed_width = 4) {
    EvalReport rep;
    for (const auto& victim : victims) {
        for (const auto& variant : variants) {
            if (!(variant.data.schema == test.schema))
                throw ValidationError("train_victims: variant '" + variant.name +
                                      "' schema differs from test schema");
            SurrogateModel model = init_model(test.schema, victim.hidden, embed_width, cfg.seed);
            train(model, variant.data, cfg, variant.hooks);
            rep.rows.push_back({victim.name, variant.name, accuracy(model, test)});
        }
    }
    return rep;
}

struct SaliencyReport {
    std::vector<double> mean_abs_grad; // per numeric feature
    std::vector<std::size_t> order;    // features by descending saliency
    std::vector<double> topk_accuracy; // K = 0..d_num
    std::vector<double> bottomk_accuracy;
};

/// Mean absolute input gradient per numeric feature plus Top-K / Bottom-K
/// ablation curves; ablated features are replaced by their column means so
/// the model shape never changes.
inline SaliencyReport saliency_report(const SurrogateModel& model, const Dataset& d) {
    validate_dataset(d);
    if (!(d.schema == model.schema))
        throw ValidationError("saliency_report: schema mismatch");
    const std::size_t dn = d.d_num();
    SaliencyReport rep;
    rep.mean_abs_grad.assign(dn, 0.0);
    {
        const Matrix xs = standardize(d, model.scaler);
        NetScratch ws;
        InputGradient ig;
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
            row_loss_grads(model, xs.row(r),
                           d.d_cat() > 0 ? d.categorical.row(r) : std::span<const std::int32_t>{},
                           d.labels[r], nullptr, &ig, ws);
            for (std::size_t j = 0; j < dn; ++j) rep.mean_abs_grad[j] += std::abs(ig.numeric_grad[j]);
        }
        for (auto& v : rep.mean_abs_grad) v /= static_cast<double>(d.n_rows());
    }

    rep.order.resize(dn);
    for (std::size_t j = 0; j < dn; ++j) rep.order[j] = j;
    std::stable_sort(rep.order.begin(), rep.order.end(), [&](std::size_t a, std::size_t b) {
        return rep.mean_abs_grad[a] > rep.mean_abs_grad[b];
    });

    std::vector<double> col_mean(dn, 0.0);
    for (std::size_t j = 0; j < dn; ++j) {
        for (std::size_t r = 0; r < d.n_rows(); ++r) col_mean[j] += d.numeric(r, j);
        col_mean[j] /= static_cast<double>(d.n_rows());
    }
    auto ablate = [&](bool top, std::size_t k) {
        Dataset ab = d;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = top ? rep.order[i] : rep.order[dn - 1 - i];
            for (std::size_t r = 0; r < d.n_rows(); ++r) ab.numeric(r, j) = col_mean[j];
        }
        return accuracy(model, ab);
    };
    for (std::size_t k = 0; k <= dn; ++k) {
        rep.topk_accuracy.push_back(ablate(true, k));
        rep.bottomk_accuracy.push_back(ablate(false, k));
    }
    return rep;
}

namespace detail {

inline std::size_t count_params(const SurrogateModel& m) {
    std::size_t n = 0;
    for (const auto& w : m.weights) n += w.data().size();
    for (const auto& b : m.biases) n += b.size();
    for (const auto& e : m.embeddings) n += e.data().size();
    return n;
}

inline void add_scaled_params(SurrogateModel& m, const std::vector<double>& dir, double a) {
    std::size_t i = 0;
    for (auto& w : m.weights)
        for (auto& v : w.data()) v += a * dir[i++];
    for (auto& b : m.biases)
        for (auto& v : b) v += a * dir[i++];
    for (auto& e : m.embeddings)
        for (auto& v : e.data()) v += a * dir[i++];
}

inline double dataset_loss(const SurrogateModel& m, const Matrix& xs, const Dataset& d) {
    NetScratch ws;
    double loss = 0.0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        build_input(m, xs.row(r),
                    d.d_cat() > 0 ? d.categorical.row(r) : std::span<const std::int32_t>{},
                    ws.input);
        one_hot(d.labels[r], m.num_classes(), ws.target);
        forward_logits(m, ws.input, ws);
        loss += softmax_xent(ws.pre.back(), ws.target, ws.probs);
    }
    return loss / static_cast<double>(d.n_rows());
}

} // namespace detail

/// Mean cross-entropy of the model on a dataset at its current parameters.
inline double dataset_mean_loss(const SurrogateModel& m, const Dataset& d) {
    validate_dataset(d);
    const Matrix xs = standardize(d, m.scaler);
    return detail::dataset_loss(m, xs, d);
}

/// Mean loss over a grid of parameter-space offsets theta* + a*u + b*v along
/// two fixed-seed random orthonormal directions. Odd grid so the center cell
/// is the unperturbed loss.
inline Matrix loss_landscape(const SurrogateModel& model, const Dataset& d, double radius,
                             int grid) {
    if (grid < 3 || grid % 2 == 0)
        throw ValidationError("loss_landscape: grid must be odd and >= 3");
    validate_dataset(d);
    const std::size_t np = detail::count_params(model);
    Rng rng(0xD1CE5EEDULL); // fixed direction seed
    std::vector<double> u(np), v(np);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    const double nu = l2_norm(u);
    for (auto& x : u) x /= nu;
    const double uv = dot(std::span<const double>(u), std::span<const double>(v));
    for (std::size_t i = 0; i < np; ++i) v[i] -= uv * u[i];
    const double nv = l2_norm(v);
    for (auto& x : v) x /= nv;

    const Matrix xs = standardize(d, model.scaler);
    Matrix out(static_cast<std::size_t>(grid), static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i) {
        const double a = radius * (2.0 * i / (grid - 1) - 1.0);
        for (int j = 0; j < grid; ++j) {
            const double b = radius * (2.0 * j / (grid - 1) - 1.0);
            SurrogateModel probe = model;
            detail::add_scaled_params(probe, u, a);
            detail::add_scaled_params(probe, v, b);
            out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                detail::dataset_loss(probe, xs, d);
        }
    }
    return out;
}

/// Mean loss under Gaussian noise of scale sigma on the standardized numeric
/// inputs, averaged over `draws` evaluations; sigma = 0 is evaluated exactly.
inline std::vector<double> noise_robustness(const SurrogateModel& model, const Dataset& d,
                                            const std::vector<double>& sigma_grid,
                                            std::uint64_t seed, int draws = 32) {
    validate_dataset(d);
    if (draws < 1) throw ValidationError("noise_robustness: draws must be >= 1");
    for (double s : sigma_grid)
        if (s < 0.0) throw ValidationError("noise_robustness: sigma must be >= 0");
    const Matrix xs = standardize(d, model.scaler);
    std::vector<double> out;
    NetScratch ws;
    std::vector<double> noisy(d.d_num());
    for (std::size_t gi = 0; gi < sigma_grid.size(); ++gi) {
        const double sigma = sigma_grid[gi];
        if (sigma == 0.0) {
            out.push_back(detail::dataset_loss(model, xs, d));
            continue;
        }
        double total = 0.0;
        for (int t = 0; t < draws; ++t) {
            Rng rng = Rng(seed).fork(gi * 1000 + static_cast<std::size_t>(t));
            double loss = 0.0;
            for (std::size_t r = 0; r < d.n_rows(); ++r) {
                const auto row = xs.row(r);
                for (std::size_t j = 0; j < d.d_num(); ++j) noisy[j] = row[j] + sigma * rng.normal();
                build_input(model, noisy,
                            d.d_cat() > 0 ? d.categorical.row(r) : std::span<const std::int32_t>{},
                            ws.input);
                one_hot(d.labels[r], model.num_classes(), ws.target);
                forward_logits(model, ws.input, ws);
                loss += softmax_xent(ws.pre.back(), ws.target, ws.probs);
            }
            total += loss / static_cast<double>(d.n_rows());
        }
        out.push_back(total / draws);
    }
    return out;
}

} // namespace utopia
