#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/scaler.hpp"

namespace utopia {

/// One categorical substitution: categorical feature index (0..d_cat) and the
/// replacement token index.
struct CatSub {
    std::int32_t feature = 0;
    std::int32_t token = 0;
};

/// Per-row perturbation: additive numeric deltas in standardized units plus a
/// list of token substitutions per row.
struct Perturbation {
    Matrix numeric_delta; // n_rows x d_num, standardized units
    std::vector<std::vector<CatSub>> cat_subs;

    static Perturbation zeros(std::size_t n_rows, std::size_t d_num) {
        Perturbation p;
        p.numeric_delta = Matrix(n_rows, d_num, 0.0);
        p.cat_subs.resize(n_rows);
        return p;
    }

    std::size_t n_rows() const { return cat_subs.size(); }
};

struct MixedNorm {
    double linf_num = 0.0;
    int max_hamming = 0;
};

inline MixedNorm mixed_norm(const Perturbation& p) {
    MixedNorm m;
    for (double v : p.numeric_delta.data()) m.linf_num = std::max(m.linf_num, std::abs(v));
    for (const auto& subs : p.cat_subs)
        m.max_hamming = std::max(m.max_hamming, static_cast<int>(subs.size()));
    return m;
}

/// Applies a perturbation: numeric cells become
/// clamp(raw + delta * std, numeric_min, numeric_max), categorical cells are
/// substituted, labels are untouched.
inline Dataset apply_perturbation(const Dataset& d, const Perturbation& p,
                                  const ScalerStats& s) {
    if (p.numeric_delta.rows() != d.n_rows() || p.numeric_delta.cols() != d.d_num() ||
        p.cat_subs.size() != d.n_rows() || s.d_num() != d.d_num())
        throw ValidationError("apply_perturbation: shape mismatch");

    Dataset out = d;
    const auto num_pos = d.schema.numeric_positions();
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (std::size_t j = 0; j < d.d_num(); ++j) {
            const auto& f = d.schema.features[num_pos[j]];
            const double v = d.numeric(r, j) + p.numeric_delta(r, j) * s.std[j];
            out.numeric(r, j) = std::clamp(v, f.numeric_min, f.numeric_max);
        }
        for (const auto& sub : p.cat_subs[r]) {
            if (sub.feature < 0 || static_cast<std::size_t>(sub.feature) >= d.d_cat())
                throw ValidationError("apply_perturbation: substitution feature index " +
                                      std::to_string(sub.feature) + " out of range at row " +
                                      std::to_string(r + 1));
            const auto& f = d.schema.categorical_feature(static_cast<std::size_t>(sub.feature));
            if (sub.token < 0 || static_cast<std::size_t>(sub.token) >= f.tokens.size())
                throw ValidationError("apply_perturbation: token index " +
                                      std::to_string(sub.token) + " out of range at row " +
                                      std::to_string(r + 1) + ", feature '" + f.name + "'");
            out.categorical(r, static_cast<std::size_t>(sub.feature)) = sub.token;
        }
    }
    return out;
}

} // namespace utopia
