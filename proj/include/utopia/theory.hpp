#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/rng.hpp"

namespace utopia {

/// Principal-branch Lambert W on x >= 0, Halley iteration. Initial guess
/// x/(1+x) for x <= e and log(x) - log(log(x)) above; converges to
/// |w e^w - x| <= 1e-13 * max(x, 1).
inline double lambert_w(double x) {
    if (!(x >= 0.0)) throw NumericError("lambert_w: argument must be >= 0");
    if (x == 0.0) return 0.0;
    const double e = 2.718281828459045235;
    double w = x <= e ? x / (1.0 + x) : std::log(x) - std::log(std::log(x));
    for (int it = 0; it < 100; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        if (std::abs(f) <= 1e-13 * std::max(x, 1.0)) return w;
        const double fp = ew * (1.0 + w);
        const double fpp = ew * (2.0 + w);
        const double denom = fp - f * fpp / (2.0 * fp);
        w -= f / denom;
    }
    return w;
}

/// Standard normal CDF via the complementary error function
/// (abs. error well below 1e-7 everywhere).
inline double gaussian_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Largest eigenvalue of a symmetric PSD matrix; rejects inputs whose
/// asymmetry exceeds 1e-9.
inline double spectral_norm(const Matrix& m) {
    if (m.rows() != m.cols()) throw ValidationError("spectral_norm: matrix must be square");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-9)
                throw ValidationError("spectral_norm: matrix is not symmetric");
    return power_iteration_sym(m, 1e-12);
}

/// Two-block Gaussian mixture: clean block x_c ~ N(y * mu_c, sigma_c) and
/// poison block x_p ~ N(y * mu_p, sigma_p) on disjoint coordinate ranges,
/// labels y in {-1, +1}. The class means are +mu for y=+1 and -mu for y=-1.
struct SpectralSpec {
    std::size_t d_c = 0, d_p = 0;
    std::vector<double> mu_c, mu_p;
    Matrix sigma_c, sigma_p;

    double lambda_c() const { return spectral_norm(sigma_c); }
    double lambda_p() const { return spectral_norm(sigma_p); }
    double kappa() const { return lambda_p() / lambda_c(); }
};

inline void validate_spectral_spec(const SpectralSpec& s) {
    if (s.d_c == 0 || s.d_p == 0)
        throw ValidationError("spectral spec: both subspaces need at least one dimension");
    if (s.mu_c.size() != s.d_c || s.mu_p.size() != s.d_p ||
        s.sigma_c.rows() != s.d_c || s.sigma_c.cols() != s.d_c ||
        s.sigma_p.rows() != s.d_p || s.sigma_p.cols() != s.d_p)
        throw ValidationError("spectral spec: shape mismatch");
}

/// Lower Cholesky factor tolerating semi-definite inputs: non-positive pivots
/// zero out their column.
inline Matrix cholesky_psd(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix l(n, n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= 1e-12) continue; // semidefinite direction
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }
    return l;
}

struct SynthData {
    Matrix x;            // n x (d_c + d_p); clean block first
    std::vector<int> y;  // +-1
};

/// Balanced two-class sample from the spec; deterministic per seed, and the
/// underlying normal draws depend only on (seed, n, dims) so rescaling the
/// covariances reuses the same noise (common random numbers across a kappa
/// sweep).
inline SynthData synth_dataset(const SpectralSpec& spec, std::size_t n, std::uint64_t seed) {
    validate_spectral_spec(spec);
    if (n < 2) throw ValidationError("synth_dataset: need n >= 2");
    if (n % 2 != 0) throw ValidationError("synth_dataset: n must be even for balanced labels");
    const Matrix lc = cholesky_psd(spec.sigma_c);
    const Matrix lp = cholesky_psd(spec.sigma_p);
    SynthData out;
    out.x = Matrix(n, spec.d_c + spec.d_p);
    out.y.resize(n);
    Rng rng(seed);
    std::vector<double> z(std::max(spec.d_c, spec.d_p));
    for (std::size_t r = 0; r < n; ++r) {
        const int y = (r % 2 == 0) ? 1 : -1;
        out.y[r] = y;
        for (std::size_t k = 0; k < spec.d_c; ++k) z[k] = rng.normal();
        for (std::size_t i = 0; i < spec.d_c; ++i) {
            double v = y * spec.mu_c[i];
            for (std::size_t k = 0; k <= i; ++k) v += lc(i, k) * z[k];
            out.x(r, i) = v;
        }
        for (std::size_t k = 0; k < spec.d_p; ++k) z[k] = rng.normal();
        for (std::size_t i = 0; i < spec.d_p; ++i) {
            double v = y * spec.mu_p[i];
            for (std::size_t k = 0; k <= i; ++k) v += lp(i, k) * z[k];
            out.x(r, spec.d_c + i) = v;
        }
    }
    return out;
}

/// Rescales the poison block so that lambda_p / lambda_c equals the requested
/// kappa: covariance and class means are multiplied by the same factor
/// c = kappa * lambda_c / lambda_p. The mean-to-noise ratio of the poison
/// block then grows like sqrt(kappa), i.e. the shortcut becomes an
/// asymptotically perfect predictor as kappa increases, which is the regime
/// the suppression law describes. (Scaling the block as one random variable
/// keeps its information content constant and the clean weights merely
/// saturate; scaling only the covariance makes the block pure noise.)
inline SpectralSpec realize_kappa(SpectralSpec spec, double kappa) {
    if (!(kappa > 0)) throw ValidationError("realize_kappa: kappa must be positive");
    const double c = kappa * spec.lambda_c() / spec.lambda_p();
    for (auto& v : spec.mu_p) v *= c;
    for (auto& v : spec.sigma_p.data()) v *= c;
    return spec;
}

namespace detail {

// log(1 + exp(u)) without overflow
inline double log1pexp(double u) {
    if (u > 33.0) return u;
    if (u < -33.0) return std::exp(u);
    return std::log1p(std::exp(u));
}

// Solves A x = b for symmetric positive definite A (in place Cholesky).
inline std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (d <= 0.0) throw NumericError("solve_spd: matrix is not positive definite");
        a(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
            a(i, j) = v / a(j, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= a(i, k) * b[k];
        b[i] = v / a(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= a(k, i) * b[k];
        b[i] = v / a(i, i);
    }
    return b;
}

} // namespace detail

/// Full-batch ridge-regularized logistic regression
///   R(w) = sum_i log(1 + exp(-y_i w.x_i)) + (gamma/2) |w|^2,
/// solved by damped Newton to gradient norm <= 1e-8 (strictly convex, unique
/// minimizer).
inline std::vector<double> ridge_logistic(const Matrix& x, const std::vector<int>& y,
                                          double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("ridge_logistic: gamma must be > 0");
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (y.size() != n) throw ValidationError("ridge_logistic: label count mismatch");

    std::vector<double> w(d, 0.0);
    auto objective = [&](const std::vector<double>& wv) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            obj += detail::log1pexp(-static_cast<double>(y[i]) * dot(x.row(i), wv));
        return obj + 0.5 * gamma * dot(std::span<const double>(wv), std::span<const double>(wv));
    };

    double obj = objective(w);
    std::vector<double> grad(d), step(d), trial(d);
    for (int it = 0; it < 200; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        Matrix hess(d, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double yi = static_cast<double>(y[i]);
            const double t = yi * dot(x.row(i), w);
            const double r = 1.0 / (1.0 + std::exp(t)); // sigma(-t)
            const double s = r * (1.0 - r);
            const auto xi = x.row(i);
            for (std::size_t a = 0; a < d; ++a) {
                grad[a] -= yi * xi[a] * r;
                for (std::size_t b = a; b < d; ++b) hess(a, b) += s * xi[a] * xi[b];
            }
        }
        for (std::size_t a = 0; a < d; ++a) {
            grad[a] += gamma * w[a];
            hess(a, a) += gamma;
            for (std::size_t b = a + 1; b < d; ++b) hess(b, a) = hess(a, b);
        }
        const double gnorm = l2_norm(grad);
        if (gnorm <= 1e-8) return w;

        step = detail::solve_spd(hess, grad);
        double alpha = 1.0;
        for (int half = 0; half < 60; ++half) {
            for (std::size_t a = 0; a < d; ++a) trial[a] = w[a] - alpha * step[a];
            const double tobj = objective(trial);
            if (tobj <= obj) {
                w = trial;
                obj = tobj;
                break;
            }
            alpha *= 0.5;
        }
    }
    // Final convergence check.
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double yi = static_cast<double>(y[i]);
        const double t = yi * dot(x.row(i), w);
        const double r = 1.0 / (1.0 + std::exp(t));
        const auto xi = x.row(i);
        for (std::size_t a = 0; a < d; ++a) grad[a] -= yi * xi[a] * r;
    }
    for (std::size_t a = 0; a < d; ++a) grad[a] += gamma * w[a];
    const double gnorm = l2_norm(grad);
    if (gnorm > 1e-8)
        throw NumericError("ridge_logistic: no convergence, |grad| = " + std::to_string(gnorm));
    return w;
}

struct SuppressionPoint {
    double kappa = 0.0;
    double w_c_norm = 0.0;
    double w_p_norm = 0.0;
};

/// Sweeps the spectral imbalance ratio: for each kappa the poison block is
/// rescaled, a fresh balanced sample is drawn (common random numbers across
/// the grid), the ridge-logistic classifier is trained, and the norm of the
/// clean-block weights is recorded.
inline std::vector<SuppressionPoint> suppression_experiment(const std::vector<double>& kappa_grid,
                                                            const SpectralSpec& base,
                                                            double gamma, std::size_t n,
                                                            std::uint64_t seed) {
    if (kappa_grid.empty()) throw ValidationError("suppression_experiment: empty grid");
    for (std::size_t i = 1; i < kappa_grid.size(); ++i)
        if (!(kappa_grid[i] > kappa_grid[i - 1]))
            throw ValidationError("suppression_experiment: kappa grid must be increasing");
    std::vector<SuppressionPoint> out;
    for (double kappa : kappa_grid) {
        const SpectralSpec spec = realize_kappa(base, kappa);
        const SynthData data = synth_dataset(spec, n, seed);
        const std::vector<double> w = ridge_logistic(data.x, data.y, gamma);
        SuppressionPoint pt;
        pt.kappa = kappa;
        pt.w_c_norm = l2_norm(std::span<const double>(w.data(), base.d_c));
        pt.w_p_norm = l2_norm(std::span<const double>(w.data() + base.d_c, base.d_p));
        out.push_back(pt);
    }
    return out;
}

enum class PsiKind { identity, exponential };

inline double psi_value(PsiKind kind, double lambda_c) {
    switch (kind) {
        case PsiKind::identity: return lambda_c;
        case PsiKind::exponential: return std::exp(lambda_c);
    }
    throw ValidationError("psi_value: unknown kind");
}

struct CertInput {
    double kappa = 1.0;
    double lambda_c = 1.0;
    double sigma = 1.0;    // weight-noise scale
    double c_const = 1.0;  // calibrated data-dependent constant
    PsiKind psi_kind = PsiKind::identity;
};

/// Certified accuracy ceiling of the noise-smoothed linear classifier:
/// Phi( (C / sigma) * W(psi(lambda_c)) / kappa ).
inline double certified_bound(const CertInput& in) {
    if (!(in.sigma > 0.0)) throw ValidationError("certified_bound: sigma must be > 0");
    if (!(in.c_const > 0.0)) throw ValidationError("certified_bound: c_const must be > 0");
    if (!(in.kappa > 0.0)) throw ValidationError("certified_bound: kappa must be > 0");
    const double w = lambert_w(psi_value(in.psi_kind, in.lambda_c));
    return gaussian_cdf(in.c_const / in.sigma * w / in.kappa);
}

struct CertifiedPoint {
    double kappa = 0.0;
    double w_c_norm = 0.0;
    double bound = 0.0;
    double empirical = 0.0;
    double mc_se = 0.0;
    bool holds = false; // empirical <= bound + 3 * mc_se
};

struct CertifiedSweep {
    double c_const = 0.0; // calibrated at the largest grid kappa
    std::vector<CertifiedPoint> points;
    bool all_hold = false;
};

/// Empirical accuracy of the randomized classifier sign((w* + delta)' x) on
/// clean-subspace test points versus the certified bound. The constant C is
/// calibrated as kappa * |w_c*| / W(psi(lambda_c)) at the grid point where
/// that product is largest; C then dominates every grid point, so
/// C * W / kappa >= |w_c*(kappa)| and the certified ceiling stays above the
/// smoothed accuracy everywhere.
inline CertifiedSweep empirical_vs_certified(const std::vector<double>& kappa_grid,
                                             const SpectralSpec& base, double gamma,
                                             double sigma, std::size_t n, std::size_t trials,
                                             std::uint64_t seed,
                                             PsiKind psi_kind = PsiKind::identity) {
    if (trials < 100) throw ValidationError("empirical_vs_certified: need trials >= 100");
    if (!(sigma > 0.0)) throw ValidationError("empirical_vs_certified: sigma must be > 0");
    const auto supp = suppression_experiment(kappa_grid, base, gamma, n, seed);
    const double lambda_c = base.lambda_c();
    const double wpsi = lambert_w(psi_value(psi_kind, lambda_c));

    CertifiedSweep sweep;
    double ref = 0.0;
    for (const auto& pt : supp) ref = std::max(ref, pt.kappa * pt.w_c_norm);
    sweep.c_const = ref / wpsi;

    // Clean-subspace test points: poison block identically zero.
    SpectralSpec clean = base;
    std::fill(clean.mu_p.begin(), clean.mu_p.end(), 0.0);
    clean.sigma_p.fill(0.0);
    const std::size_t n_test = 2000;
    const SynthData test = synth_dataset(clean, n_test, splitmix64(seed + 1));
    const std::size_t d = base.d_c + base.d_p;

    sweep.all_hold = true;
    for (std::size_t gi = 0; gi < kappa_grid.size(); ++gi) {
        const SpectralSpec spec = realize_kappa(base, kappa_grid[gi]);
        const SynthData data = synth_dataset(spec, n, seed);
        const std::vector<double> w = ridge_logistic(data.x, data.y, gamma);

        Rng trial_rng = Rng(seed).fork(1000 + gi);
        std::vector<double> wd(d);
        std::vector<double> trial_acc(trials);
        for (std::size_t t = 0; t < trials; ++t) {
            for (std::size_t k = 0; k < d; ++k) wd[k] = w[k] + sigma * trial_rng.normal();
            std::size_t hits = 0;
            for (std::size_t r = 0; r < n_test; ++r) {
                const double m = dot(test.x.row(r), wd);
                const int pred = m >= 0.0 ? 1 : -1;
                if (pred == test.y[r]) ++hits;
            }
            trial_acc[t] = static_cast<double>(hits) / static_cast<double>(n_test);
        }
        double mean = 0.0;
        for (double a : trial_acc) mean += a;
        mean /= static_cast<double>(trials);
        double var = 0.0;
        for (double a : trial_acc) var += (a - mean) * (a - mean);
        var /= static_cast<double>(trials);

        CertifiedPoint pt;
        pt.kappa = kappa_grid[gi];
        pt.w_c_norm = supp[gi].w_c_norm;
        pt.bound = certified_bound({kappa_grid[gi], lambda_c, sigma, sweep.c_const, psi_kind});
        pt.empirical = mean;
        pt.mc_se = std::sqrt(var / static_cast<double>(trials));
        pt.holds = pt.empirical <= pt.bound + 3.0 * pt.mc_se;
        sweep.all_hold = sweep.all_hold && pt.holds;
        sweep.points.push_back(pt);
    }
    return sweep;
}

/// Default synthetic spec for the theory experiments: fully symmetric blocks
/// (kappa = 1 before realize_kappa), mildly informative means.
inline SpectralSpec default_spectral_spec() {
    SpectralSpec s;
    s.d_c = 4;
    s.d_p = 4;
    s.mu_c = {0.6, 0.5, 0.4, 0.3};
    s.mu_p = {0.6, 0.5, 0.4, 0.3};
    s.sigma_c = Matrix(4, 4, 0.0);
    s.sigma_p = Matrix(4, 4, 0.0);
    const double diag[4] = {0.5, 0.4, 0.3, 0.2};
    for (std::size_t i = 0; i < 4; ++i) {
        s.sigma_c(i, i) = diag[i];
        s.sigma_p(i, i) = diag[i];
    }
    return s;
}

} // namespace utopia
