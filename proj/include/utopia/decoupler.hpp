#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/model.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"

namespace utopia {

struct CorrelationMatrix {
    Matrix values; // d_num x d_num, symmetric, unit diagonal
};

/// Pearson correlations over the numeric columns. Constant columns (std at
/// the floor) get zero off-diagonal entries; the diagonal is exactly 1.
inline CorrelationMatrix correlation_matrix(const Dataset& d) {
    const std::size_t n = d.n_rows();
    if (n < 2) throw ValidationError("correlation_matrix: need at least 2 rows");
    const std::size_t k = d.d_num();
    const ScalerStats s = fit_standardizer(d);

    CorrelationMatrix out;
    out.values = Matrix(k, k, 0.0);
    for (std::size_t i = 0; i < k; ++i) out.values(i, i) = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            if (s.std[i] <= kStdFloor || s.std[j] <= kStdFloor) continue;
            double cov = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                cov += (d.numeric(r, i) - s.mean[i]) * (d.numeric(r, j) - s.mean[j]);
            cov /= static_cast<double>(n);
            const double rho = std::clamp(cov / (s.std[i] * s.std[j]), -1.0, 1.0);
            out.values(i, j) = rho;
            out.values(j, i) = rho;
        }
    }
    return out;
}

/// Pairs (i, j), i < j, with |R_ij| strictly above tau; lexicographic order.
inline std::vector<std::pair<std::size_t, std::size_t>>
redundant_pairs(const CorrelationMatrix& R, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ValidationError("redundant_pairs: tau must be in [0, 1]");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < R.values.rows(); ++i)
        for (std::size_t j = i + 1; j < R.values.cols(); ++j)
            if (std::abs(R.values(i, j)) > tau) out.emplace_back(i, j);
    return out;
}

struct InfluenceScores {
    std::vector<double> scores; // per numeric feature, non-negative
};

/// Mean absolute gradient of the per-row loss w.r.t. each standardized
/// numeric input, over all rows.
inline InfluenceScores influence_scores(const SurrogateModel& model, const Dataset& d) {
    if (!(d.schema == model.schema))
        throw ValidationError("influence_scores: dataset schema does not match model");
    if (d.n_rows() == 0) throw ValidationError("influence_scores: empty dataset");
    const Matrix xs = standardize(d, model.scaler);
    InfluenceScores out;
    out.scores.assign(d.d_num(), 0.0);
    NetScratch ws;
    InputGradient ig;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        row_loss_grads(model, xs.row(r),
                       d.d_cat() > 0 ? d.categorical.row(r) : std::span<const std::int32_t>{},
                       d.labels[r], nullptr, &ig, ws);
        for (std::size_t j = 0; j < d.d_num(); ++j) {
            if (!std::isfinite(ig.numeric_grad[j]))
                throw NumericError("influence_scores: non-finite gradient at row " +
                                   std::to_string(r + 1));
            out.scores[j] += std::abs(ig.numeric_grad[j]);
        }
    }
    for (auto& v : out.scores) v /= static_cast<double>(d.n_rows());
    return out;
}

/// Disjoint binary masks over the numeric features: phi marks the steered
/// high-influence channel, psi the redundant carrier channel.
struct MaskPair {
    std::vector<std::uint8_t> phi;
    std::vector<std::uint8_t> psi;

    std::size_t d() const { return phi.size(); }
};

/// Per pair the higher-influence member goes to phi, the lower to psi (ties
/// break toward the lower index as the max). A feature claimed by both
/// channels across different pairs goes to phi iff its score is >= the median
/// score of all pair-participating features, which keeps the masks disjoint
/// and invariant under positive rescaling of the scores.
inline MaskPair build_masks(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                            const InfluenceScores& inf) {
    const std::size_t d = inf.scores.size();
    MaskPair m;
    m.phi.assign(d, 0);
    m.psi.assign(d, 0);

    std::vector<std::uint8_t> in_phi(d, 0), in_psi(d, 0);
    std::set<std::size_t> participants;
    for (const auto& [i, j] : pairs) {
        if (i >= d || j >= d)
            throw ValidationError("build_masks: pair references feature out of range");
        const double si = inf.scores[i];
        const double sj = inf.scores[j];
        const std::size_t hi = (sj > si) ? j : i; // tie -> lower index wins the max
        const std::size_t lo = (hi == i) ? j : i;
        in_phi[hi] = 1;
        in_psi[lo] = 1;
        participants.insert(i);
        participants.insert(j);
    }

    std::vector<double> part_scores;
    part_scores.reserve(participants.size());
    for (std::size_t f : participants) part_scores.push_back(inf.scores[f]);
    std::sort(part_scores.begin(), part_scores.end());
    double median = 0.0;
    if (!part_scores.empty()) {
        const std::size_t n = part_scores.size();
        median = (n % 2 == 1) ? part_scores[n / 2]
                              : 0.5 * (part_scores[n / 2 - 1] + part_scores[n / 2]);
    }

    for (std::size_t f = 0; f < d; ++f) {
        if (in_phi[f] && in_psi[f]) {
            if (inf.scores[f] >= median)
                m.phi[f] = 1;
            else
                m.psi[f] = 1;
        } else {
            m.phi[f] = in_phi[f];
            m.psi[f] = in_psi[f];
        }
    }
    return m;
}

/// Ablation variant: influence-free random partitioning. Every feature that
/// participates in at least one redundant pair is assigned to one of the two
/// channels by a fair coin flip, so the masks stay disjoint but the per-pair
/// max/min routing is gone.
inline MaskPair build_random_masks(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                   std::size_t d_num, std::uint64_t seed) {
    MaskPair m;
    m.phi.assign(d_num, 0);
    m.psi.assign(d_num, 0);
    std::set<std::size_t> participants;
    for (const auto& [i, j] : pairs) {
        if (i >= d_num || j >= d_num)
            throw ValidationError("build_random_masks: pair references feature out of range");
        participants.insert(i);
        participants.insert(j);
    }
    Rng rng(seed);
    for (std::size_t f : participants) {
        if (rng.uniform01() < 0.5)
            m.phi[f] = 1;
        else
            m.psi[f] = 1;
    }
    return m;
}

/// Audit dump of the whole phase-1 state for the protect command.
inline nlohmann::json decoupling_audit(const Dataset& data, const CorrelationMatrix& R,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                       const InfluenceScores& inf, const MaskPair& masks,
                                       double tau) {
    nlohmann::json j;
    const auto num_pos = data.schema.numeric_positions();
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t p : num_pos) names.push_back(data.schema.features[p].name);
    j["numeric_features"] = names;
    j["tau"] = tau;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < R.values.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k < R.values.cols(); ++k) row.push_back(R.values(i, k));
        rows.push_back(std::move(row));
    }
    j["correlation"] = rows;
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& [a, b] : pairs) jp.push_back({a, b});
    j["redundant_pairs"] = jp;
    j["influence_scores"] = inf.scores;
    j["mask_phi"] = masks.phi;
    j["mask_psi"] = masks.psi;
    return j;
}

} // namespace utopia
