#pragma once

// Forecast-error uncertainty models: quantiles, raw moments, and the
// three-parameter versatile family with its maximum-likelihood fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "storage_pricer/errors.hpp"

namespace storage_pricer {

struct ErrorMoments {
    double mu = 0.0;     // MW
    double sigma = 0.0;  // MW, >= 0
};

inline void validate(const ErrorMoments& m) {
    if (!(m.sigma >= 0.0) || !std::isfinite(m.mu) || !std::isfinite(m.sigma))
        throw DomainError("error moments require finite mu and sigma >= 0");
}

// ---------------------------------------------------------------------------
// Gaussian

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Upper tail 1 - Phi(z), accurate far into the right tail.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

inline double normal_pdf(double z) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

/// Returns z with Phi(z) = 1 - epsilon, found by bisection on the
/// erfc-based tail function.
inline double gaussian_quantile(double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw DomainError("gaussian_quantile: epsilon must lie in (0, 1), got " +
                          std::to_string(epsilon));
    double lo = -40.0;
    double hi = 40.0;
    for (int it = 0; it < 2000 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        // normal_sf is decreasing: too large a tail means z is too small.
        if (normal_sf(mid) > epsilon)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// E[d^k] for d ~ N(mu, sigma^2). Odd central moments vanish, so only even
/// j contribute: sum_j C(k,j) mu^(k-j) sigma^j (j-1)!!.
inline double gaussian_raw_moment(const ErrorMoments& m, int k) {
    if (k < 0) throw DomainError("gaussian_raw_moment: k must be >= 0");
    validate(m);
    double total = 0.0;
    double binom = 1.0;     // C(k, j)
    double dfact = 1.0;     // (j-1)!! for even j; (-1)!! = 1
    for (int j = 0; j <= k; ++j) {
        if (j > 0) binom = binom * static_cast<double>(k - j + 1) / static_cast<double>(j);
        if (j % 2 == 0) {
            if (j >= 2) dfact *= static_cast<double>(j - 1);
            total += binom * std::pow(m.mu, k - j) * std::pow(m.sigma, j) * dfact;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Distribution-free robust multipliers (Cantelli-type bounds).

enum class RobustShape { NA, S, U, SU };

inline const char* to_string(RobustShape s) {
    switch (s) {
        case RobustShape::NA: return "NA";
        case RobustShape::S: return "S";
        case RobustShape::U: return "U";
        case RobustShape::SU: return "SU";
    }
    return "?";
}

/// Normalized robust factor F^-1(1 - epsilon) for the given shape knowledge.
/// Branch boundaries belong to the lower-epsilon branch.
inline double robust_quantile(RobustShape shape, double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw DomainError("robust_quantile: epsilon must lie in (0, 1]");
    const double e = epsilon;
    switch (shape) {
        case RobustShape::NA:
            return std::sqrt((1.0 - e) / e);
        case RobustShape::S:
            return e <= 0.5 ? std::sqrt(1.0 / (2.0 * e)) : 0.0;
        case RobustShape::U:
            if (e <= 1.0 / 6.0) return std::sqrt((4.0 - 9.0 * e) / (9.0 * e));
            return std::sqrt((3.0 - 3.0 * e) / (1.0 + 3.0 * e));
        case RobustShape::SU:
            if (e <= 1.0 / 6.0) return std::sqrt(2.0 / (9.0 * e));
            if (e <= 0.5) return std::sqrt(3.0) * (1.0 - 2.0 * e);
            return 0.0;
    }
    throw DomainError("robust_quantile: unknown shape");
}

// ---------------------------------------------------------------------------
// Versatile (generalized logistic) family: F(x) = (1 + exp(-a (x - c)))^(-b).

struct VersatileParams {
    double a = 1.0;
    double b = 1.0;
    double c = 0.0;
};

inline void validate(const VersatileParams& p) {
    if (!(p.a > 0.0) || !(p.b > 0.0) || !std::isfinite(p.c))
        throw DomainError("versatile distribution requires a > 0 and b > 0");
}

inline double versatile_cdf(const VersatileParams& p, double x) {
    validate(p);
    const double z = p.a * (x - p.c);
    // log F = -b * log(1 + exp(-z))
    const double softplus = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    return std::exp(-p.b * softplus);
}

inline double versatile_pdf(const VersatileParams& p, double x) {
    validate(p);
    const double z = p.a * (x - p.c);
    const double softplus = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    // a b e^{-z} (1+e^{-z})^{-b-1}
    return p.a * p.b * std::exp(-z - (p.b + 1.0) * softplus);
}

/// Quantile at probability u in (0, 1).
inline double versatile_quantile(const VersatileParams& p, double u) {
    validate(p);
    if (!(u > 0.0 && u < 1.0)) throw DomainError("versatile_quantile: u must lie in (0, 1)");
    // u^{-1/b} - 1 computed as expm1(-log(u)/b) for accuracy near u = 1.
    return p.c - std::log(std::expm1(-std::log(u) / p.b)) / p.a;
}

/// Closed-form F^-1(1 - epsilon | a, b, c).
inline double versatile_inverse_cdf(double a, double b, double c, double epsilon) {
    if (!(a > 0.0) || !(b > 0.0))
        throw DomainError("versatile_inverse_cdf: a and b must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw DomainError("versatile_inverse_cdf: epsilon must lie in (0, 1)");
    return c - std::log(std::expm1(-std::log1p(-epsilon) / b)) / a;
}

inline double versatile_mean(const VersatileParams& p) {
    validate(p);
    using boost::math::digamma;
    return p.c + (digamma(p.b) - digamma(1.0)) / p.a;
}

inline double versatile_stddev(const VersatileParams& p) {
    validate(p);
    using boost::math::trigamma;
    return std::sqrt(trigamma(p.b) + trigamma(1.0)) / p.a;
}

inline double versatile_sample(const VersatileParams& p, double u) { return versatile_quantile(p, u); }

struct VersatileFit {
    VersatileParams params;
    double mean_log_likelihood = 0.0;
    double gradient_norm = 0.0;  // sup-norm of the mean log-likelihood gradient in (a, b, c)
    int iterations = 0;
};

namespace detail {

// Mean log-likelihood and its gradient with respect to (a, b, c).
inline double versatile_loglik(std::span<const double> x, const VersatileParams& p,
                               std::array<double, 3>* grad) {
    const double n = static_cast<double>(x.size());
    double sum_dev = 0.0, sum_sp = 0.0, sum_dev_sig = 0.0, sum_sig = 0.0;
    for (double xi : x) {
        const double dev = xi - p.c;
        const double z = p.a * dev;
        const double sp = std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        // logistic(-z) = 1 / (1 + e^{z})
        const double sig = z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
        sum_dev += dev;
        sum_sp += sp;
        sum_dev_sig += dev * sig;
        sum_sig += sig;
    }
    const double ll = std::log(p.a) + std::log(p.b) - p.a * sum_dev / n - (p.b + 1.0) * sum_sp / n;
    if (grad) {
        (*grad)[0] = 1.0 / p.a - sum_dev / n + (p.b + 1.0) * sum_dev_sig / n;
        (*grad)[1] = 1.0 / p.b - sum_sp / n;
        (*grad)[2] = p.a - (p.b + 1.0) * p.a * sum_sig / n;
    }
    return ll;
}

inline VersatileParams from_unconstrained(const std::array<double, 3>& u) {
    return {std::exp(u[0]), std::exp(u[1]), u[2]};
}

// Negative mean log-likelihood in (log a, log b, c) coordinates.
inline double versatile_objective(std::span<const double> x, const std::array<double, 3>& u,
                                  std::array<double, 3>& g) {
    const VersatileParams p = from_unconstrained(u);
    std::array<double, 3> gp{};
    const double ll = versatile_loglik(x, p, &gp);
    g = {-gp[0] * p.a, -gp[1] * p.b, -gp[2]};
    return -ll;
}

inline double sup_norm(const std::array<double, 3>& v) {
    return std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
}

}  // namespace detail

/// Maximum-likelihood fit of the versatile family by BFGS over
/// (log a, log b, c) from three moment-matched starts, followed by a few
/// Newton polishing steps.
inline VersatileFit fit_versatile_mle(std::span<const double> samples, int iter_cap = 500) {
    if (samples.size() < 50)
        throw FitError("fit_versatile_mle: at least 50 samples required, got " +
                       std::to_string(samples.size()));
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0) || !std::isfinite(sd)) throw FitError("fit_versatile_mle: samples have zero spread");

    using boost::math::digamma;
    using boost::math::trigamma;
    auto moment_start = [&](double b) {
        const double a = std::sqrt(trigamma(b) + trigamma(1.0)) / sd;
        const double c = mean - (digamma(b) - digamma(1.0)) / a;
        return std::array<double, 3>{std::log(a), std::log(b), c};
    };

    VersatileFit best;
    best.mean_log_likelihood = -std::numeric_limits<double>::infinity();
    int total_iters = 0;

    for (double b0 : {1.0, 0.5, 2.0}) {
        std::array<double, 3> u = moment_start(b0);
        std::array<double, 3> g{};
        double f = detail::versatile_objective(samples, u, g);
        // Inverse Hessian approximation, identity scaled.
        double H[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, sd * sd}};
        int it = 0, stalled = 0;
        for (; it < iter_cap; ++it) {
            if (detail::sup_norm(g) < 1e-9) break;
            std::array<double, 3> d{};
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) d[i] -= H[i][j] * g[j];
            double slope = d[0] * g[0] + d[1] * g[1] + d[2] * g[2];
            if (!(slope < 0.0)) {
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) H[i][j] = (i == j) ? (i == 2 ? sd * sd : 1.0) : 0.0;
                d = {-g[0], -g[1], -g[2] * sd * sd};
                slope = d[0] * g[0] + d[1] * g[1] + d[2] * g[2];
            }
            double step = 1.0;
            std::array<double, 3> un{}, gn{};
            double fn = 0.0;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                for (int i = 0; i < 3; ++i) un[i] = u[i] + step * d[i];
                if (std::abs(un[0]) < 700 && std::abs(un[1]) < 700) {
                    fn = detail::versatile_objective(samples, un, gn);
                    if (std::isfinite(fn) && fn <= f + 1e-4 * step * slope) {
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!accepted) break;
            std::array<double, 3> s{}, y{};
            for (int i = 0; i < 3; ++i) {
                s[i] = un[i] - u[i];
                y[i] = gn[i] - g[i];
            }
            const double sy = s[0] * y[0] + s[1] * y[1] + s[2] * y[2];
            if (sy > 1e-300) {
                double Hy[3] = {};
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) Hy[i] += H[i][j] * y[j];
                const double yHy = y[0] * Hy[0] + y[1] * Hy[1] + y[2] * Hy[2];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        H[i][j] += ((sy + yHy) * s[i] * s[j]) / (sy * sy) - (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
            }
            // Stalled at rounding level: leave the rest to the Newton polish.
            stalled = std::abs(f - fn) <= 1e-15 * std::max(1.0, std::abs(f)) ? stalled + 1 : 0;
            u = un;
            g = gn;
            f = fn;
            if (stalled >= 5) break;
        }

        // Newton polish with a finite-difference Hessian of the analytic gradient.
        for (int polish = 0; polish < 8; ++polish) {
            if (detail::sup_norm(g) < 1e-13) break;
            double Hm[3][3];
            for (int j = 0; j < 3; ++j) {
                const double h = 1e-6 * std::max(1.0, std::abs(u[j]));
                std::array<double, 3> up = u, um = u, gp{}, gm{};
                up[j] += h;
                um[j] -= h;
                detail::versatile_objective(samples, up, gp);
                detail::versatile_objective(samples, um, gm);
                for (int i = 0; i < 3; ++i) Hm[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
            // Solve Hm d = -g by Cramer's rule (3x3).
            auto det3 = [](double M[3][3]) {
                return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                       M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                       M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
            };
            const double D = det3(Hm);
            if (!(std::abs(D) > 0.0) || !std::isfinite(D)) break;
            std::array<double, 3> d{};
            for (int k = 0; k < 3; ++k) {
                double Mk[3][3];
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) Mk[i][j] = (j == k) ? -g[i] : Hm[i][j];
                d[k] = det3(Mk) / D;
            }
            std::array<double, 3> un{}, gn{};
            for (int i = 0; i < 3; ++i) un[i] = u[i] + d[i];
            const double fn = detail::versatile_objective(samples, un, gn);
            if (!std::isfinite(fn) || detail::sup_norm(gn) >= detail::sup_norm(g)) break;
            u = un;
            g = gn;
            f = fn;
        }

        total_iters += it;
        const VersatileParams p = detail::from_unconstrained(u);
        std::array<double, 3> gp{};
        const double ll = detail::versatile_loglik(samples, p, &gp);
        if (ll > best.mean_log_likelihood) {
            best.params = p;
            best.mean_log_likelihood = ll;
            best.gradient_norm = detail::sup_norm(gp);
        }
    }
    best.iterations = total_iters;
    if (!(best.gradient_norm <= 1e-6))
        throw FitError("fit_versatile_mle: no convergence after " + std::to_string(total_iters) +
                       " iterations; best gradient norm " + std::to_string(best.gradient_norm) +
                       " at (a=" + std::to_string(best.params.a) + ", b=" + std::to_string(best.params.b) +
                       ", c=" + std::to_string(best.params.c) + ")");
    return best;
}

// ---------------------------------------------------------------------------
// Empirical

/// Order-statistic quantile with linear interpolation between the two
/// neighbouring order statistics at position (n - 1) q.
inline double empirical_quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DomainError("empirical_quantile: empty sample");
    if (!(q > 0.0 && q < 1.0)) throw DomainError("empirical_quantile: q must lie in (0, 1)");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double empirical_quantile(std::span<const double> samples, double q) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return empirical_quantile_sorted(sorted, q);
}

// ---------------------------------------------------------------------------
// Uncertainty model

struct GaussianFamily {};

struct VersatileFamily {
    VersatileParams params;
};

struct EmpiricalFamily {
    std::vector<double> sorted;  // ascending
    double mean = 0.0;
    double stddev = 0.0;
};

struct RobustFamily {
    RobustShape shape = RobustShape::NA;
};

/// Shape of the forecast error. Versatile and empirical shapes are
/// standardized to zero mean and unit variance and then rescaled by the
/// per-period (mu, sigma); the robust family is a pure multiplier on sigma.
class UncertaintyModel {
public:
    using Family = std::variant<GaussianFamily, VersatileFamily, EmpiricalFamily, RobustFamily>;

    UncertaintyModel() = default;

    static UncertaintyModel gaussian() { return UncertaintyModel(GaussianFamily{}); }

    static UncertaintyModel versatile(const VersatileParams& p) {
        validate(p);
        return UncertaintyModel(VersatileFamily{p});
    }

    static UncertaintyModel empirical(std::vector<double> samples) {
        if (samples.size() < 2) throw DomainError("empirical model requires at least 2 samples");
        std::sort(samples.begin(), samples.end());
        const double n = static_cast<double>(samples.size());
        const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : samples) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        if (!(sd > 0.0)) throw DomainError("empirical model requires samples with nonzero spread");
        return UncertaintyModel(EmpiricalFamily{std::move(samples), mean, sd});
    }

    static UncertaintyModel robust(RobustShape shape) { return UncertaintyModel(RobustFamily{shape}); }

    const Family& family() const { return family_; }

    std::string name() const {
        return std::visit(
            [](const auto& f) -> std::string {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, GaussianFamily>) return "gaussian";
                else if constexpr (std::is_same_v<F, VersatileFamily>) return "versatile";
                else if constexpr (std::is_same_v<F, EmpiricalFamily>) return "empirical";
                else return std::string("robust-") + to_string(f.shape);
            },
            family_);
    }

    /// Standardized quantiles (z_lo, z_hi) such that the per-period
    /// quantiles are mu + sigma * z. z_lo is the epsilon quantile and z_hi
    /// the (1 - epsilon) quantile.
    std::pair<double, double> standardized_tails(double epsilon) const {
        return std::visit(
            [epsilon](const auto& f) -> std::pair<double, double> {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, GaussianFamily>) {
                    const double z = gaussian_quantile(epsilon);
                    return {-z, z};
                } else if constexpr (std::is_same_v<F, VersatileFamily>) {
                    const double m = versatile_mean(f.params);
                    const double s = versatile_stddev(f.params);
                    return {(versatile_quantile(f.params, epsilon) - m) / s,
                            (versatile_quantile(f.params, 1.0 - epsilon) - m) / s};
                } else if constexpr (std::is_same_v<F, EmpiricalFamily>) {
                    return {(empirical_quantile_sorted(f.sorted, epsilon) - f.mean) / f.stddev,
                            (empirical_quantile_sorted(f.sorted, 1.0 - epsilon) - f.mean) / f.stddev};
                } else {
                    const double z = robust_quantile(f.shape, epsilon);
                    return {-z, z};
                }
            },
            family_);
    }

    /// Draw one standardized error (zero mean, unit variance). The robust
    /// family has no single distribution and is sampled as Gaussian.
    double sample_standardized(std::mt19937_64& rng, std::normal_distribution<double>& normal) const {
        return std::visit(
            [&](const auto& f) -> double {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, VersatileFamily>) {
                    std::uniform_real_distribution<double> unif(0.0, 1.0);
                    double u = unif(rng);
                    while (u <= 0.0) u = unif(rng);
                    return (versatile_quantile(f.params, u) - versatile_mean(f.params)) /
                           versatile_stddev(f.params);
                } else if constexpr (std::is_same_v<F, EmpiricalFamily>) {
                    std::uniform_int_distribution<std::size_t> pick(0, f.sorted.size() - 1);
                    return (f.sorted[pick(rng)] - f.mean) / f.stddev;
                } else {
                    return normal(rng);
                }
            },
            family_);
    }

    /// CDF of the standardized error, where a closed form exists.
    double standardized_cdf(double z) const {
        return std::visit(
            [z](const auto& f) -> double {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, VersatileFamily>) {
                    return versatile_cdf(f.params, versatile_mean(f.params) + z * versatile_stddev(f.params));
                } else if constexpr (std::is_same_v<F, EmpiricalFamily>) {
                    const double x = f.mean + z * f.stddev;
                    const auto it = std::upper_bound(f.sorted.begin(), f.sorted.end(), x);
                    return static_cast<double>(it - f.sorted.begin()) / static_cast<double>(f.sorted.size());
                } else {
                    return normal_cdf(z);
                }
            },
            family_);
    }

private:
    explicit UncertaintyModel(Family f) : family_(std::move(f)) {}
    Family family_ = GaussianFamily{};
};

struct QuantilePair {
    double lo = 0.0;  // d_hat
    double hi = 0.0;  // d_tilde
};

/// Lower and upper epsilon_i quantiles of the forecast error. Gaussian and
/// robust models give mu -/+ F^-1(1 - eps) sigma; versatile and empirical
/// models use their own (asymmetric) tails.
inline QuantilePair quantile_pair(const ErrorMoments& m, double epsilon_i, const UncertaintyModel& model) {
    validate(m);
    if (!(epsilon_i > 0.0 && epsilon_i <= 0.5))
        throw DomainError("quantile_pair: epsilon_i must lie in (0, 0.5], got " + std::to_string(epsilon_i));
    if (m.sigma == 0.0) return {m.mu, m.mu};
    const auto [zlo, zhi] = model.standardized_tails(epsilon_i);
    return {m.mu + zlo * m.sigma, m.mu + zhi * m.sigma};
}

}  // namespace storage_pricer
