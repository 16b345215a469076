#pragma once

#include <cmath>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"

namespace utopia {

constexpr double kStdFloor = 1e-8;

/// Per-numeric-feature mean and standard deviation in raw units.
/// Population (1/n) variance; std floored at kStdFloor so constant
/// columns never divide by zero.
struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> std;

    std::size_t d_num() const { return mean.size(); }
};

inline ScalerStats fit_standardizer(const Dataset& d) {
    const std::size_t n = d.n_rows();
    if (n < 2) throw ValidationError("fit_standardizer: need at least 2 rows");
    const std::size_t k = d.d_num();
    ScalerStats s;
    s.mean.assign(k, 0.0);
    s.std.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m += d.numeric(r, j);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double c = d.numeric(r, j) - m;
            v += c * c;
        }
        v /= static_cast<double>(n);
        s.mean[j] = m;
        s.std[j] = std::max(std::sqrt(v), kStdFloor);
    }
    return s;
}

inline Matrix standardize(const Dataset& d, const ScalerStats& s) {
    Matrix out(d.n_rows(), d.d_num());
    for (std::size_t r = 0; r < d.n_rows(); ++r)
        for (std::size_t j = 0; j < d.d_num(); ++j)
            out(r, j) = (d.numeric(r, j) - s.mean[j]) / s.std[j];
    return out;
}

} // namespace utopia
