#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"
#include "utopia/train.hpp"

namespace utopia {

enum class DefenseKind : std::uint8_t {
    feature_masking,   // per-cell Bernoulli replacement by the column mean
    feature_squeezing, // round standardized values to fixed decimals
    gaussian_noise,    // additive noise on standardized numerics
    label_smoothing,   // trainer hook
    mixup,             // trainer hook
    quantization,      // snap numerics to uniform levels over the column range
    swap_noise         // per-cell swap with a random row's value, same column
};

struct DefenseSpec {
    DefenseKind kind = DefenseKind::gaussian_noise;
    double strength = -1.0; // semantics per kind; negative selects the default
    std::uint64_t seed = 0;
};

inline const char* defense_name(DefenseKind k) {
    switch (k) {
        case DefenseKind::feature_masking: return "feature_masking";
        case DefenseKind::feature_squeezing: return "feature_squeezing";
        case DefenseKind::gaussian_noise: return "gaussian_noise";
        case DefenseKind::label_smoothing: return "label_smoothing";
        case DefenseKind::mixup: return "mixup";
        case DefenseKind::quantization: return "quantization";
        case DefenseKind::swap_noise: return "swap_noise";
    }
    return "?";
}

inline std::optional<DefenseKind> defense_from_name(const std::string& s) {
    for (DefenseKind k : {DefenseKind::feature_masking, DefenseKind::feature_squeezing,
                          DefenseKind::gaussian_noise, DefenseKind::label_smoothing,
                          DefenseKind::mixup, DefenseKind::quantization,
                          DefenseKind::swap_noise})
        if (s == defense_name(k)) return k;
    return std::nullopt;
}

/// Data-level defenses fill `data`; training-level defenses fill `hooks`.
struct DefenseResult {
    std::optional<Dataset> data;
    TrainHooks hooks;
};

// Shipped strengths: masking rate 0.1, squeezing 1 decimal, noise sigma 0.05,
// label smoothing 0.1, mixup Beta(1,1), 16 quantization levels, swap rate 0.1.
inline double default_strength(DefenseKind k) {
    switch (k) {
        case DefenseKind::feature_masking: return 0.1;
        case DefenseKind::feature_squeezing: return 1.0;
        case DefenseKind::gaussian_noise: return 0.05;
        case DefenseKind::label_smoothing: return 0.1;
        case DefenseKind::mixup: return 1.0;
        case DefenseKind::quantization: return 16.0;
        case DefenseKind::swap_noise: return 0.1;
    }
    return 0.0;
}

inline DefenseResult apply_defense(const Dataset& d, const DefenseSpec& spec) {
    const double strength = spec.strength >= 0.0 ? spec.strength : default_strength(spec.kind);
    DefenseResult out;
    switch (spec.kind) {
        case DefenseKind::label_smoothing: {
            if (strength >= 1.0)
                throw ValidationError("label_smoothing: strength must be in (0, 1)");
            out.hooks.label_smoothing = strength;
            return out;
        }
        case DefenseKind::mixup: {
            out.hooks.mixup_alpha = strength;
            return out;
        }
        default: break;
    }

    validate_dataset(d);
    Dataset def = d;
    const std::size_t n = d.n_rows();
    const auto num_pos = d.schema.numeric_positions();
    Rng rng(spec.seed);

    switch (spec.kind) {
        case DefenseKind::feature_masking: {
            if (strength > 1.0) throw ValidationError("feature_masking: rate must be <= 1");
            std::vector<double> mean(d.d_num(), 0.0);
            for (std::size_t j = 0; j < d.d_num(); ++j) {
                for (std::size_t r = 0; r < n; ++r) mean[j] += d.numeric(r, j);
                mean[j] /= static_cast<double>(n);
            }
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d.d_num(); ++j)
                    if (rng.uniform01() < strength) def.numeric(r, j) = mean[j];
            break;
        }
        case DefenseKind::feature_squeezing: {
            const int decimals = static_cast<int>(strength);
            const double scale = std::pow(10.0, decimals);
            const ScalerStats s = fit_standardizer(d);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d.d_num(); ++j) {
                    const double z = (d.numeric(r, j) - s.mean[j]) / s.std[j];
                    def.numeric(r, j) = s.mean[j] + std::round(z * scale) / scale * s.std[j];
                }
            break;
        }
        case DefenseKind::gaussian_noise: {
            const ScalerStats s = fit_standardizer(d);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d.d_num(); ++j)
                    def.numeric(r, j) += strength * s.std[j] * rng.normal();
            break;
        }
        case DefenseKind::quantization: {
            const int levels = static_cast<int>(strength);
            if (levels < 2) throw ValidationError("quantization: need at least 2 levels");
            for (std::size_t j = 0; j < d.d_num(); ++j) {
                double lo = d.numeric(0, j), hi = lo;
                for (std::size_t r = 1; r < n; ++r) {
                    lo = std::min(lo, d.numeric(r, j));
                    hi = std::max(hi, d.numeric(r, j));
                }
                if (!(hi > lo)) continue;
                const double step = (hi - lo) / static_cast<double>(levels - 1);
                for (std::size_t r = 0; r < n; ++r)
                    def.numeric(r, j) = lo + std::round((d.numeric(r, j) - lo) / step) * step;
            }
            break;
        }
        case DefenseKind::swap_noise: {
            if (strength > 1.0) throw ValidationError("swap_noise: rate must be <= 1");
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t j = 0; j < d.d_num(); ++j)
                    if (rng.uniform01() < strength) {
                        const std::size_t q = static_cast<std::size_t>(rng.uniform_int(n));
                        def.numeric(r, j) = d.numeric(q, j);
                    }
                for (std::size_t j = 0; j < d.d_cat(); ++j)
                    if (rng.uniform01() < strength) {
                        const std::size_t q = static_cast<std::size_t>(rng.uniform_int(n));
                        def.categorical(r, j) = d.categorical(q, j);
                    }
            }
            break;
        }
        default: break;
    }

    // Defended numerics must stay inside the schema's domains.
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d.d_num(); ++j) {
            const auto& f = d.schema.features[num_pos[j]];
            def.numeric(r, j) = std::clamp(def.numeric(r, j), f.numeric_min, f.numeric_max);
        }
    validate_dataset(def);
    out.data = std::move(def);
    return out;
}

} // namespace utopia
