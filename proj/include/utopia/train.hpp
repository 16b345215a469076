#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/model.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"

namespace utopia {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    int batch_size = 8; // desk-scale datasets are small; small batches give
                        // the optimizer a realistic step budget at 30 epochs
    std::uint64_t seed = 0;
    LrSchedule schedule = LrSchedule::cosine;
};

/// Training-time defenses plug in here: label smoothing replaces hard targets
/// with (1-eps)*onehot + eps/K. Mixup pairs rows within a batch, mixing
/// numeric inputs and targets linearly; categorical tokens cannot be convex-
/// combined, so the row whose mixing weight dominates contributes its tokens.
struct TrainHooks {
    double label_smoothing = 0.0;
    double mixup_alpha = 0.0; // 0 disables mixup
};

struct TrainLog {
    std::vector<double> epoch_losses;
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (!(cfg.learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
    if (!(cfg.weight_decay >= 0.0)) throw ValidationError("train: weight_decay must be >= 0");
    if (cfg.batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
}

namespace detail {

// Flat view over all model parameters plus per-parameter decay flags.
// Weight matrices and embeddings decay; biases do not.
struct ParamView {
    std::vector<double*> values;
    std::vector<bool> decays;

    static ParamView of(SurrogateModel& m) {
        ParamView v;
        for (auto& w : m.weights)
            for (auto& x : w.data()) {
                v.values.push_back(&x);
                v.decays.push_back(true);
            }
        for (auto& b : m.biases)
            for (auto& x : b) {
                v.values.push_back(&x);
                v.decays.push_back(false);
            }
        for (auto& e : m.embeddings)
            for (auto& x : e.data()) {
                v.values.push_back(&x);
                v.decays.push_back(true);
            }
        return v;
    }
};

inline void flatten_grads(const ParamGrads& g, std::vector<double>& out) {
    out.clear();
    for (const auto& w : g.weights) out.insert(out.end(), w.data().begin(), w.data().end());
    for (const auto& b : g.biases) out.insert(out.end(), b.begin(), b.end());
    for (const auto& e : g.embeddings) out.insert(out.end(), e.data().begin(), e.data().end());
}

} // namespace detail

/// Trains in place with Adam + decoupled weight decay
/// (beta1=0.9, beta2=0.999, eps=1e-8) and an optional cosine schedule over the
/// epoch index. Fits the standardizer on the training data first and stores it
/// in the model. Deterministic per cfg.seed.
inline TrainLog train(SurrogateModel& model, const Dataset& data, const TrainConfig& cfg,
                      const TrainHooks& hooks = {}) {
    validate_train_config(cfg);
    validate_dataset(data);
    if (!(data.schema == model.schema))
        throw ValidationError("train: dataset schema does not match model schema");
    if (hooks.label_smoothing < 0.0 || hooks.label_smoothing >= 1.0)
        throw ValidationError("train: label_smoothing must be in [0, 1)");
    if (hooks.mixup_alpha < 0.0)
        throw ValidationError("train: mixup_alpha must be >= 0");

    model.scaler = fit_standardizer(data);
    const Matrix xs = standardize(data, model.scaler);
    const std::size_t n = data.n_rows();
    const int K = model.num_classes();

    auto params = detail::ParamView::of(model);
    std::vector<double> m1(params.values.size(), 0.0);
    std::vector<double> m2(params.values.size(), 0.0);
    std::vector<double> flat;
    long step = 0;
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    const bool full_batch = static_cast<std::size_t>(cfg.batch_size) >= n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    NetScratch ws;
    std::vector<double> target, input_a, input_b, input_grad;
    ParamGrads grads = ParamGrads::zeros_like(model);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(epoch) + 1);
        // Full-batch accumulation stays in natural row order so training is
        // row-order invariant in that mode.
        if (!full_batch) {
            std::iota(order.begin(), order.end(), 0);
            erng.shuffle(order);
        }
        const double lr = cfg.schedule == LrSchedule::cosine
                              ? cfg.learning_rate * 0.5 *
                                    (1.0 + std::cos(3.14159265358979323846 *
                                                    static_cast<double>(epoch) /
                                                    static_cast<double>(cfg.epochs)))
                              : cfg.learning_rate;

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t bsz = stop - start;
            grads = ParamGrads::zeros_like(model);
            double batch_loss = 0.0;

            double lam = 1.0;
            std::vector<std::size_t> partner;
            const bool mix = hooks.mixup_alpha > 0.0 && bsz > 1;
            if (mix) {
                lam = erng.beta(hooks.mixup_alpha, hooks.mixup_alpha);
                partner.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                               order.begin() + static_cast<std::ptrdiff_t>(stop));
                erng.shuffle(partner);
            }

            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t r = order[i];
                target.assign(static_cast<std::size_t>(K), hooks.label_smoothing /
                                                               static_cast<double>(K));
                target[static_cast<std::size_t>(data.labels[r])] += 1.0 - hooks.label_smoothing;

                if (!mix) {
                    build_input(model, xs.row(r),
                                data.d_cat() > 0 ? data.categorical.row(r)
                                                 : std::span<const std::int32_t>{},
                                input_a);
                    batch_loss += input_loss_grads(model, input_a, target, &grads,
                                                   model.d_cat() > 0 ? &input_grad : nullptr, ws);
                    for (std::size_t j = 0; j < model.d_cat(); ++j) {
                        const std::size_t off = model.embed_offset(j);
                        auto erow = grads.embeddings[j].row(
                            static_cast<std::size_t>(data.categorical(r, j)));
                        for (int w = 0; w < model.embed_width; ++w)
                            erow[static_cast<std::size_t>(w)] +=
                                input_grad[off + static_cast<std::size_t>(w)];
                    }
                } else {
                    const std::size_t q = partner[i - start];
                    const std::size_t tok_row = lam >= 0.5 ? r : q; // dominant row's tokens
                    build_input(model, xs.row(r),
                                data.d_cat() > 0 ? data.categorical.row(tok_row)
                                                 : std::span<const std::int32_t>{},
                                input_a);
                    build_input(model, xs.row(q),
                                data.d_cat() > 0 ? data.categorical.row(tok_row)
                                                 : std::span<const std::int32_t>{},
                                input_b);
                    for (std::size_t k = 0; k < model.d_num(); ++k)
                        input_a[k] = lam * input_a[k] + (1.0 - lam) * input_b[k];
                    for (double& t : target) t *= lam;
                    const double other = (1.0 - lam) *
                                         (hooks.label_smoothing / static_cast<double>(K));
                    for (double& t : target) t += other;
                    target[static_cast<std::size_t>(data.labels[q])] +=
                        (1.0 - lam) * (1.0 - hooks.label_smoothing);

                    batch_loss += input_loss_grads(model, input_a, target, &grads,
                                                   model.d_cat() > 0 ? &input_grad : nullptr, ws);
                    for (std::size_t j = 0; j < model.d_cat(); ++j) {
                        const std::size_t off = model.embed_offset(j);
                        auto ga = grads.embeddings[j].row(
                            static_cast<std::size_t>(data.categorical(tok_row, j)));
                        for (int w = 0; w < model.embed_width; ++w)
                            ga[static_cast<std::size_t>(w)] +=
                                input_grad[off + static_cast<std::size_t>(w)];
                    }
                }
            }

            batch_loss /= static_cast<double>(bsz);
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            grads.scale(1.0 / static_cast<double>(bsz));
            epoch_loss += batch_loss * static_cast<double>(bsz);

            detail::flatten_grads(grads, flat);
            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < flat.size(); ++p) {
                m1[p] = beta1 * m1[p] + (1.0 - beta1) * flat[p];
                m2[p] = beta2 * m2[p] + (1.0 - beta2) * flat[p] * flat[p];
                const double mh = m1[p] / bc1;
                const double vh = m2[p] / bc2;
                double upd = mh / (std::sqrt(vh) + adam_eps);
                if (params.decays[p]) upd += cfg.weight_decay * *params.values[p];
                *params.values[p] -= lr * upd;
            }
        }
        log.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    return log;
}

} // namespace utopia
