#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "utopia/dataset.hpp"
#include "utopia/decoupler.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/model.hpp"
#include "utopia/perturbation.hpp"
#include "utopia/scaler.hpp"
#include "utopia/train.hpp"

namespace utopia {

struct PoisonConfig {
    double eps_num = 0.03;     // standardized l-inf budget
    int eps_cat = 1;           // per-row Hamming budget
    int iterations = 20;       // PGD iterations T
    double step_size = 0.003;  // eta, defaults to eps_num / 10
    double amplification = 5.0; // lambda
    double momentum = 1.0;      // mu
    std::uint64_t seed = 0;
};

inline void validate_poison_config(const PoisonConfig& c) {
    if (!(c.eps_num >= 0.0)) throw ValidationError("poison config: eps_num must be >= 0");
    if (c.eps_cat < 0) throw ValidationError("poison config: eps_cat must be >= 0");
    if (c.iterations < 1) throw ValidationError("poison config: iterations must be >= 1");
    if (!(c.step_size > 0.0)) throw ValidationError("poison config: step_size must be > 0");
    if (!(c.amplification >= 0.0))
        throw ValidationError("poison config: amplification must be >= 0");
    if (!(c.momentum >= 0.0)) throw ValidationError("poison config: momentum must be >= 0");
}

struct DseGradient {
    std::vector<double> numeric_grad;
    std::vector<std::vector<double>> cat_scores; // raw loss gradients per token
};

/// Steering gradient of the counter-directional objective at one perturbed
/// row: phi-masked ascent minus lambda times psi-masked descent. Categorical
/// token scores are returned raw; the caller picks the accumulation sign.
inline DseGradient dse_gradient(const SurrogateModel& model,
                                std::span<const double> numeric_std_perturbed,
                                std::span<const std::int32_t> tokens, int label,
                                const MaskPair& masks, double lambda, NetScratch& ws) {
    InputGradient ig;
    row_loss_grads(model, numeric_std_perturbed, tokens, label, nullptr, &ig, ws);
    DseGradient out;
    out.numeric_grad.resize(ig.numeric_grad.size());
    for (std::size_t k = 0; k < ig.numeric_grad.size(); ++k) {
        const double g = ig.numeric_grad[k];
        if (!std::isfinite(g)) throw NumericError("dse_gradient: non-finite input gradient");
        out.numeric_grad[k] = (masks.phi[k] ? g : 0.0) - lambda * (masks.psi[k] ? g : 0.0);
    }
    out.cat_scores = std::move(ig.cat_token_scores);
    return out;
}

struct MomentumState {
    Matrix g; // n_rows x d_num accumulated normalized gradients
};

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// One sign-PGD step for a single row: l1-normalized momentum accumulation,
/// signed update, then projection onto the eps ball intersected with the
/// per-cell domain interval (both in standardized units).
inline void pgd_step_row(std::span<double> delta, std::span<const double> grad,
                         std::span<double> mom, const PoisonConfig& cfg,
                         std::span<const double> lo, std::span<const double> hi) {
    const double l1 = l1_norm(grad);
    for (std::size_t k = 0; k < delta.size(); ++k) {
        mom[k] = cfg.momentum * mom[k] + (l1 > 0.0 ? grad[k] / l1 : 0.0);
        double v = delta[k] + cfg.step_size * sign_of(mom[k]);
        v = std::clamp(v, -cfg.eps_num, cfg.eps_num);
        v = std::clamp(v, lo[k], hi[k]);
        delta[k] = v;
    }
}

inline void pgd_step(Perturbation& p, const Matrix& grad, const PoisonConfig& cfg,
                     const Matrix& lo, const Matrix& hi, MomentumState& mom) {
    for (std::size_t r = 0; r < p.numeric_delta.rows(); ++r)
        pgd_step_row(p.numeric_delta.row(r), grad.row(r), mom.g.row(r), cfg, lo.row(r),
                     hi.row(r));
}

/// Token scores accumulated over all PGD iterations, per row and categorical
/// feature (the greedy accumulated-gradient strategy for discrete columns).
struct CatAccumulator {
    std::vector<std::vector<std::vector<double>>> scores; // [row][feature][token]

    static CatAccumulator zeros(const Dataset& d) {
        CatAccumulator a;
        a.scores.resize(d.n_rows());
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
            a.scores[r].resize(d.d_cat());
            for (std::size_t j = 0; j < d.d_cat(); ++j)
                a.scores[r][j].assign(d.schema.categorical_feature(j).tokens.size(), 0.0);
        }
        return a;
    }
};

/// Greedy selection: per row, rank candidate substitutions by accumulated
/// score gain over the current token and commit the best eps_cat of them, at
/// most one per feature, skipping non-positive gains.
inline std::vector<std::vector<CatSub>> categorical_substitute(const CatAccumulator& acc,
                                                               const IndexMatrix& current,
                                                               int eps_cat) {
    const std::size_t n = acc.scores.size();
    std::vector<std::vector<CatSub>> out(n);
    if (eps_cat <= 0) return out;
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<std::tuple<double, std::int32_t, std::int32_t>> cands; // gain, feat, token
        for (std::size_t j = 0; j < acc.scores[r].size(); ++j) {
            const auto& sc = acc.scores[r][j];
            const auto cur = current(r, j);
            double best_gain = 0.0;
            std::int32_t best_tok = -1;
            for (std::size_t t = 0; t < sc.size(); ++t) {
                if (static_cast<std::int32_t>(t) == cur) continue;
                const double gain = sc[t] - sc[static_cast<std::size_t>(cur)];
                if (gain > best_gain) {
                    best_gain = gain;
                    best_tok = static_cast<std::int32_t>(t);
                }
            }
            if (best_tok >= 0)
                cands.emplace_back(best_gain, static_cast<std::int32_t>(j), best_tok);
        }
        std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
            if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
            return std::get<2>(a) < std::get<2>(b);
        });
        const std::size_t take = std::min<std::size_t>(cands.size(),
                                                       static_cast<std::size_t>(eps_cat));
        for (std::size_t i = 0; i < take; ++i)
            out[r].push_back({std::get<1>(cands[i]), std::get<2>(cands[i])});
    }
    return out;
}

/// Ablation switches. Defaults are the full method; each flag removes one
/// ingredient (the categorical channel rides on the suppression flag).
struct CraftOptions {
    bool suppression = true; // phi-channel ascent + categorical steering
    bool injection = true;   // psi-channel descent
    bool use_masks = true;   // false: unmasked ascent on every numeric feature
    int threads = 1;
};

struct CraftResult {
    Dataset protected_data;
    Perturbation perturbation;
};

namespace detail {

inline void parallel_rows(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int t = std::max(1, threads);
    if (t == 1 || n < 2) {
        fn(0, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(t), n);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace detail

/// Phase 2: runs T sign-PGD iterations of the steering objective per row
/// against the frozen surrogate, accumulating categorical token scores, then
/// commits one greedy substitution pass. Rows are independent, so threading
/// never changes the result. Feasibility is asserted at every iterate.
inline CraftResult craft_unlearnable(const Dataset& data, const SurrogateModel& model,
                                     const MaskPair& masks, const PoisonConfig& cfg,
                                     const CraftOptions& opts = {}) {
    validate_poison_config(cfg);
    validate_dataset(data);
    if (!(data.schema == model.schema))
        throw ValidationError("craft_unlearnable: dataset schema does not match model");
    if (masks.d() != data.d_num())
        throw ValidationError("craft_unlearnable: mask size does not match numeric width");
    for (std::size_t k = 0; k < masks.d(); ++k)
        if (masks.phi[k] && masks.psi[k])
            throw ValidationError("craft_unlearnable: masks are not disjoint");

    const std::size_t n = data.n_rows();
    const std::size_t dn = data.d_num();
    const ScalerStats& scaler = model.scaler;
    const Matrix xs = standardize(data, scaler);

    // Per-cell delta bounds in standardized units from the feature domains.
    Matrix lo(n, dn), hi(n, dn);
    const auto num_pos = data.schema.numeric_positions();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < dn; ++j) {
            const auto& f = data.schema.features[num_pos[j]];
            lo(r, j) = (f.numeric_min - data.numeric(r, j)) / scaler.std[j];
            hi(r, j) = (f.numeric_max - data.numeric(r, j)) / scaler.std[j];
        }

    Perturbation p = Perturbation::zeros(n, dn);
    MomentumState mom{Matrix(n, dn, 0.0)};
    CatAccumulator acc = CatAccumulator::zeros(data);
    const double lambda = cfg.amplification;
    const bool steer_cats = opts.suppression && cfg.eps_cat > 0 && data.d_cat() > 0;

    std::atomic<bool> failed{false};
    std::string fail_msg;
    std::mutex fail_mu;

    detail::parallel_rows(n, opts.threads, [&](std::size_t r0, std::size_t r1) {
        NetScratch ws;
        InputGradient ig;
        std::vector<double> xp(dn), steer(dn);
        try {
            for (std::size_t r = r0; r < r1 && !failed.load(); ++r) {
                const auto tokens = data.d_cat() > 0 ? data.categorical.row(r)
                                                     : std::span<const std::int32_t>{};
                for (int t = 0; t < cfg.iterations; ++t) {
                    for (std::size_t j = 0; j < dn; ++j) xp[j] = xs(r, j) + p.numeric_delta(r, j);
                    row_loss_grads(model, xp, tokens, data.labels[r], nullptr, &ig, ws);
                    for (std::size_t k = 0; k < dn; ++k) {
                        const double g = ig.numeric_grad[k];
                        if (!std::isfinite(g))
                            throw NumericError("craft_unlearnable: non-finite gradient at row " +
                                               std::to_string(r + 1));
                        if (!opts.use_masks) {
                            steer[k] = g;
                        } else {
                            steer[k] = (opts.suppression && masks.phi[k] ? g : 0.0) -
                                       (opts.injection && masks.psi[k] ? lambda * g : 0.0);
                        }
                    }
                    pgd_step_row(p.numeric_delta.row(r), steer, mom.g.row(r), cfg, lo.row(r),
                                 hi.row(r));
                    for (std::size_t k = 0; k < dn; ++k) {
                        const double d = p.numeric_delta(r, k);
                        if (std::abs(d) > cfg.eps_num + 1e-12 || d < lo(r, k) - 1e-9 ||
                            d > hi(r, k) + 1e-9)
                            throw NumericError("craft_unlearnable: infeasible iterate at row " +
                                               std::to_string(r + 1));
                    }
                    if (steer_cats) {
                        for (std::size_t j = 0; j < data.d_cat(); ++j)
                            for (std::size_t tok = 0; tok < ig.cat_token_scores[j].size(); ++tok)
                                acc.scores[r][j][tok] += ig.cat_token_scores[j][tok];
                    }
                }
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> g(fail_mu);
            failed = true;
            if (fail_msg.empty()) fail_msg = e.what();
        }
    });
    if (failed) throw NumericError(fail_msg);

    if (steer_cats)
        p.cat_subs = categorical_substitute(acc, data.categorical, cfg.eps_cat);

    CraftResult out{apply_perturbation(data, p, scaler), std::move(p)};
    validate_dataset(out.protected_data);
    return out;
}

/// Classic error-minimizing baseline: alternate surrogate training on the
/// current perturbed data with inner sign-PGD steps that minimize the
/// surrogate loss. Numeric-only; same projection and budgets as the main
/// method. Zero iterations returns the clean data untouched.
inline CraftResult em_baseline(const Dataset& data, const PoisonConfig& cfg,
                               const TrainConfig& tcfg, int threads = 1) {
    validate_dataset(data);
    const std::size_t n = data.n_rows();
    const std::size_t dn = data.d_num();
    if (cfg.iterations == 0)
        return {data, Perturbation::zeros(n, dn)};
    validate_poison_config(cfg);

    const ScalerStats scaler = fit_standardizer(data);
    const auto num_pos = data.schema.numeric_positions();
    Matrix lo(n, dn), hi(n, dn);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < dn; ++j) {
            const auto& f = data.schema.features[num_pos[j]];
            lo(r, j) = (f.numeric_min - data.numeric(r, j)) / scaler.std[j];
            hi(r, j) = (f.numeric_max - data.numeric(r, j)) / scaler.std[j];
        }

    Perturbation p = Perturbation::zeros(n, dn);
    MomentumState mom{Matrix(n, dn, 0.0)};
    SurrogateModel model = init_model(data.schema, {16, 16}, 4, cfg.seed);

    const int rounds = std::min(cfg.iterations, 5);
    std::vector<int> inner(static_cast<std::size_t>(rounds),
                           cfg.iterations / rounds);
    for (int i = 0; i < cfg.iterations % rounds; ++i) ++inner[static_cast<std::size_t>(i)];

    for (int round = 0; round < rounds; ++round) {
        Dataset current = apply_perturbation(data, p, scaler);
        TrainConfig rt = tcfg;
        rt.epochs = std::max(1, tcfg.epochs / rounds);
        rt.seed = tcfg.seed + static_cast<std::uint64_t>(round);
        train(model, current, rt);

        // Gradient point in the surrogate's own standardized coordinates;
        // the sign step is per-coordinate scale-invariant so the delta keeps
        // living in clean-scaler units.
        Matrix base(n, dn);
        std::vector<double> factor(dn);
        for (std::size_t j = 0; j < dn; ++j) factor[j] = scaler.std[j] / model.scaler.std[j];
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < dn; ++j)
                base(r, j) = (data.numeric(r, j) - model.scaler.mean[j]) / model.scaler.std[j];

        std::atomic<bool> failed{false};
        std::string fail_msg;
        std::mutex fail_mu;
        const int steps = inner[static_cast<std::size_t>(round)];
        detail::parallel_rows(n, threads, [&](std::size_t r0, std::size_t r1) {
            NetScratch ws;
            InputGradient ig;
            std::vector<double> xp(dn), steer(dn);
            try {
                for (std::size_t r = r0; r < r1 && !failed.load(); ++r) {
                    const auto tokens = data.d_cat() > 0 ? data.categorical.row(r)
                                                         : std::span<const std::int32_t>{};
                    for (int t = 0; t < steps; ++t) {
                        for (std::size_t j = 0; j < dn; ++j)
                            xp[j] = base(r, j) + p.numeric_delta(r, j) * factor[j];
                        row_loss_grads(model, xp, tokens, data.labels[r], nullptr, &ig, ws);
                        for (std::size_t k = 0; k < dn; ++k) {
                            if (!std::isfinite(ig.numeric_grad[k]))
                                throw NumericError("em_baseline: non-finite gradient");
                            steer[k] = -ig.numeric_grad[k]; // minimize the loss
                        }
                        pgd_step_row(p.numeric_delta.row(r), steer, mom.g.row(r), cfg,
                                     lo.row(r), hi.row(r));
                    }
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> g(fail_mu);
                failed = true;
                if (fail_msg.empty()) fail_msg = e.what();
            }
        });
        if (failed) throw NumericError(fail_msg);
    }

    CraftResult out{apply_perturbation(data, p, scaler), std::move(p)};
    validate_dataset(out.protected_data);
    return out;
}

/// Spectral diagnostic: ratio of the top covariance eigenvalue of the
/// psi-channel deltas to that of the phi-channel deltas. Returns +inf when
/// the phi channel carries no variance.
inline double kappa_hat(const Perturbation& p, const MaskPair& masks) {
    const std::size_t n = p.numeric_delta.rows();
    if (n < 2) throw ValidationError("kappa_hat: need at least 2 rows");
    auto top_eig = [&](const std::vector<std::uint8_t>& mask) {
        std::vector<std::size_t> cols;
        for (std::size_t k = 0; k < mask.size(); ++k)
            if (mask[k]) cols.push_back(k);
        if (cols.empty()) return 0.0;
        std::vector<double> mean(cols.size(), 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < cols.size(); ++c) mean[c] += p.numeric_delta(r, cols[c]);
        for (auto& m : mean) m /= static_cast<double>(n);
        Matrix cov(cols.size(), cols.size(), 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t a = 0; a < cols.size(); ++a) {
                const double da = p.numeric_delta(r, cols[a]) - mean[a];
                for (std::size_t b = a; b < cols.size(); ++b) {
                    const double db = p.numeric_delta(r, cols[b]) - mean[b];
                    cov(a, b) += da * db;
                }
            }
        for (std::size_t a = 0; a < cols.size(); ++a)
            for (std::size_t b = a; b < cols.size(); ++b) {
                cov(a, b) /= static_cast<double>(n);
                cov(b, a) = cov(a, b);
            }
        return power_iteration_sym(cov);
    };
    const double lp = top_eig(masks.psi);
    const double lc = top_eig(masks.phi);
    if (lc < 1e-300) return std::numeric_limits<double>::infinity();
    return lp / lc;
}

/// Sidecar report for the protect command.
inline nlohmann::json feasibility_report(const Perturbation& p, const PoisonConfig& cfg,
                                         const Schema& schema) {
    nlohmann::json j;
    const MixedNorm mn = mixed_norm(p);
    j["max_linf_standardized"] = mn.linf_num;
    j["max_hamming"] = mn.max_hamming;
    j["eps_num"] = cfg.eps_num;
    j["eps_cat"] = cfg.eps_cat;
    j["feasible"] = mn.linf_num <= cfg.eps_num + 1e-12 && mn.max_hamming <= cfg.eps_cat;

    const auto num_pos = schema.numeric_positions();
    nlohmann::json feats = nlohmann::json::array();
    constexpr int bins = 16;
    for (std::size_t jcol = 0; jcol < p.numeric_delta.cols(); ++jcol) {
        std::vector<std::size_t> hist(bins, 0);
        const double w = cfg.eps_num > 0 ? 2.0 * cfg.eps_num / bins : 1.0;
        for (std::size_t r = 0; r < p.numeric_delta.rows(); ++r) {
            const double v = p.numeric_delta(r, jcol);
            int b = static_cast<int>((v + cfg.eps_num) / w);
            b = std::clamp(b, 0, bins - 1);
            ++hist[static_cast<std::size_t>(b)];
        }
        nlohmann::json f;
        f["name"] = schema.features[num_pos[jcol]].name;
        f["delta_histogram"] = hist;
        feats.push_back(std::move(f));
    }
    j["numeric_features"] = feats;

    std::vector<std::size_t> sub_counts(schema.d_cat(), 0);
    for (const auto& subs : p.cat_subs)
        for (const auto& s : subs) ++sub_counts[static_cast<std::size_t>(s.feature)];
    const auto cat_pos = schema.categorical_positions();
    nlohmann::json cats = nlohmann::json::array();
    for (std::size_t jcol = 0; jcol < schema.d_cat(); ++jcol) {
        nlohmann::json f;
        f["name"] = schema.features[cat_pos[jcol]].name;
        f["substitutions"] = sub_counts[jcol];
        cats.push_back(std::move(f));
    }
    j["categorical_features"] = cats;
    return j;
}

} // namespace utopia
