#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace utopia {

// Dense row-major matrix. Only what the library needs; no BLAS ambitions.
template <class T>
class BasicMatrix {
public:
    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    void fill(T v) { data_.assign(data_.size(), v); }

    friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using IndexMatrix = BasicMatrix<std::int32_t>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l1_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v < 0 ? -v : v;
    return s;
}

inline double l2_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
// fixed pseudo-random start vector. Returns 0 for the zero matrix.
inline double power_iteration_sym(const Matrix& m, double tol = 1e-12,
                                  std::size_t max_iter = 20000) {
    const std::size_t n = m.rows();
    if (n == 0) return 0.0;
    std::vector<double> v(n), w(n);
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= h << 13; h ^= h >> 7; h ^= h << 17;
        v[i] = 0.5 + static_cast<double>(h % 1000) / 1000.0;
    }
    double nv = l2_norm(v);
    for (auto& x : v) x /= nv;
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) w[i] = dot(m.row(i), v);
        const double next = dot(std::span<const double>(v), std::span<const double>(w));
        const double nw = l2_norm(w);
        if (nw < 1e-300) return 0.0;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
        if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
        lambda = next;
    }
    return lambda;
}

} // namespace utopia
