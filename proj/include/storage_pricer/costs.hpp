#pragma once

// Generator cost models: a polynomial for dispatch (with exact expectation
// under Gaussian moments) and an exact merit-order curve for ex-post metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "storage_pricer/distributions.hpp"
#include "storage_pricer/errors.hpp"

namespace storage_pricer {

constexpr int kMaxCostDegree = 4;

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
    return r;
}

/// G(x) = sum_i C_i x^i with degree <= 4. When an operating domain is
/// given, the marginal cost must be non-negative on it.
class CostPolynomial {
public:
    CostPolynomial() : coeffs_{0.0} {}

    explicit CostPolynomial(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) { check_degree(); }

    CostPolynomial(std::vector<double> coeffs, double g_min, double g_max)
        : coeffs_(std::move(coeffs)), g_min_(g_min), g_max_(g_max), has_domain_(true) {
        check_degree();
        if (!(g_min <= g_max)) throw DomainError("CostPolynomial: empty operating domain");
        check_monotone();
    }

    const std::vector<double>& coeffs() const { return coeffs_; }
    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    double coeff(int i) const { return i < static_cast<int>(coeffs_.size()) ? coeffs_[i] : 0.0; }
    bool has_domain() const { return has_domain_; }
    double g_min() const { return g_min_; }
    double g_max() const { return g_max_; }

    double value(double x) const {
        double r = 0.0;
        for (int i = degree(); i >= 0; --i) r = r * x + coeffs_[i];
        return r;
    }

    double marginal(double x) const {
        double r = 0.0;
        for (int i = degree(); i >= 1; --i) r = r * x + i * coeffs_[i];
        return r;
    }

    double second_derivative(double x) const {
        double r = 0.0;
        for (int i = degree(); i >= 2; --i) r = r * x + i * (i - 1) * coeffs_[i];
        return r;
    }

private:
    void check_degree() const {
        if (coeffs_.empty()) throw CostModelError("CostPolynomial: no coefficients");
        if (coeffs_.size() > kMaxCostDegree + 1)
            throw CostModelError("CostPolynomial: degree " + std::to_string(coeffs_.size() - 1) +
                                 " exceeds the supported maximum of 4");
        for (double c : coeffs_)
            if (!std::isfinite(c)) throw CostModelError("CostPolynomial: non-finite coefficient");
    }

    // Sample the marginal cost, and also check it at the interior stationary
    // points of the marginal (roots of G''), which is where it can dip.
    void check_monotone() const {
        std::vector<double> pts;
        const int n = 400;
        for (int k = 0; k <= n; ++k) pts.push_back(g_min_ + (g_max_ - g_min_) * k / n);
        const double a = coeff(4) * 12.0, b = coeff(3) * 6.0, c = coeff(2) * 2.0;
        if (a != 0.0) {
            const double disc = b * b - 4 * a * c;
            if (disc >= 0) {
                pts.push_back((-b + std::sqrt(disc)) / (2 * a));
                pts.push_back((-b - std::sqrt(disc)) / (2 * a));
            }
        } else if (b != 0.0) {
            pts.push_back(-c / b);
        }
        const double scale = std::max({1.0, std::abs(marginal(g_min_)), std::abs(marginal(g_max_))});
        for (double x : pts) {
            if (x < g_min_ || x > g_max_) continue;
            if (marginal(x) < -1e-9 * scale)
                throw CostModelError("CostPolynomial: marginal cost " + std::to_string(marginal(x)) +
                                     " is negative at x=" + std::to_string(x));
        }
    }

    std::vector<double> coeffs_;
    double g_min_ = 0.0;
    double g_max_ = 0.0;
    bool has_domain_ = false;
};

/// Expected generator cost E[G(g + phi d)] expanded as a polynomial in
/// (g, phi): sum of coef * g^a * phi^k with the Gaussian raw moments folded
/// into coef. Gives value, gradient and Hessian exactly.
class ExpectedCostTerms {
public:
    struct Monomial {
        double coef;
        int pow_g;
        int pow_phi;
    };

    ExpectedCostTerms(const CostPolynomial& poly, const ErrorMoments& m) {
        std::array<double, kMaxCostDegree + 1> mom{};
        for (int k = 0; k <= poly.degree(); ++k) mom[k] = gaussian_raw_moment(m, k);
        for (int i = 0; i <= poly.degree(); ++i) {
            const double ci = poly.coeff(i);
            if (ci == 0.0) continue;
            for (int k = 0; k <= i; ++k) {
                const double c = ci * binomial(i, k) * mom[k];
                if (c != 0.0) terms_.push_back({c, i - k, k});
            }
        }
    }

    double value(double g, double phi) const {
        double r = 0.0;
        for (const auto& t : terms_) r += t.coef * ipow(g, t.pow_g) * ipow(phi, t.pow_phi);
        return r;
    }

    std::array<double, 2> gradient(double g, double phi) const {
        std::array<double, 2> r{};
        for (const auto& t : terms_) {
            if (t.pow_g > 0) r[0] += t.coef * t.pow_g * ipow(g, t.pow_g - 1) * ipow(phi, t.pow_phi);
            if (t.pow_phi > 0) r[1] += t.coef * t.pow_phi * ipow(g, t.pow_g) * ipow(phi, t.pow_phi - 1);
        }
        return r;
    }

    // [d2/dg2, d2/dgdphi, d2/dphi2]
    std::array<double, 3> hessian(double g, double phi) const {
        std::array<double, 3> r{};
        for (const auto& t : terms_) {
            const int a = t.pow_g, k = t.pow_phi;
            if (a > 1) r[0] += t.coef * a * (a - 1) * ipow(g, a - 2) * ipow(phi, k);
            if (a > 0 && k > 0) r[1] += t.coef * a * k * ipow(g, a - 1) * ipow(phi, k - 1);
            if (k > 1) r[2] += t.coef * k * (k - 1) * ipow(g, a) * ipow(phi, k - 2);
        }
        return r;
    }

    const std::vector<Monomial>& terms() const { return terms_; }

private:
    static double ipow(double x, int n) {
        double r = 1.0;
        for (int i = 0; i < n; ++i) r *= x;
        return r;
    }
    std::vector<Monomial> terms_;
};

inline void check_phi(double phi) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw DomainError("phi must lie in [0, 1]");
}

/// E[G(g + phi d)] with d ~ N(mu, sigma^2).
inline double expected_gen_cost(const CostPolynomial& poly, double g, double phi, const ErrorMoments& m) {
    check_phi(phi);
    return ExpectedCostTerms(poly, m).value(g, phi);
}

/// d/dg E[G(g + phi d)] = E[G'(g + phi d)].
inline double marginal_expected_cost(const CostPolynomial& poly, double g, double phi, const ErrorMoments& m) {
    check_phi(phi);
    return ExpectedCostTerms(poly, m).gradient(g, phi)[0];
}

// ---------------------------------------------------------------------------
// Storage

struct StorageSpec {
    double p_max = 0.0;          // MW
    double e_max = 0.0;          // MWh
    double eta = 1.0;            // one-way efficiency
    double marginal_cost = 0.0;  // $/MWh discharged
    double e_init = 0.0;         // MWh

    bool enabled() const { return p_max > 0.0; }
};

/// Validates a storage spec. A zero power rating means "no storage" and
/// is accepted as such.
inline void validate(const StorageSpec& s) {
    if (!(s.eta > 0.0 && s.eta <= 1.0)) throw DomainError("storage efficiency must lie in (0, 1]");
    if (!(s.p_max >= 0.0)) throw DomainError("storage power rating must be >= 0");
    if (s.p_max > 0.0 && !(s.e_max > 0.0)) throw DomainError("storage energy rating must be > 0");
    if (!(s.marginal_cost >= 0.0)) throw DomainError("storage marginal cost must be >= 0");
    if (!(s.e_init >= 0.0 && s.e_init <= s.e_max)) throw DomainError("initial SoC must lie in [0, e_max]");
}

/// M (p + psi mu).
inline double expected_storage_cost(const StorageSpec& s, double p, double psi, double mu) {
    if (!(psi >= 0.0 && psi <= 1.0)) throw DomainError("psi must lie in [0, 1]");
    if (!(p >= 0.0)) throw DomainError("discharge power must be >= 0");
    return s.marginal_cost * (p + psi * mu);
}

/// Hessian of E[G(g + phi d)] in (g, phi) must be PSD on a grid over the
/// operating box, for every supplied moment pair.
inline void check_convexity(const CostPolynomial& poly, double g_lo, double g_hi,
                            const std::vector<ErrorMoments>& moments, int grid = 25) {
    std::vector<ErrorMoments> ms = moments;
    if (ms.empty()) ms.push_back({});
    for (const auto& m : ms) {
        ExpectedCostTerms terms(poly, m);
        double scale = 0.0;
        for (int i = 0; i <= grid; ++i)
            scale = std::max(scale, std::abs(poly.second_derivative(g_lo + (g_hi - g_lo) * i / grid)));
        const double tol = 1e-9 * std::max(scale, 1e-12) * std::max(1.0, m.sigma * m.sigma);
        for (int i = 0; i <= grid; ++i) {
            const double g = g_lo + (g_hi - g_lo) * i / grid;
            for (int j = 0; j <= grid; ++j) {
                const double phi = static_cast<double>(j) / grid;
                const auto h = terms.hessian(g, phi);
                const double tr = h[0] + h[2];
                const double det = h[0] * h[2] - h[1] * h[1];
                const double lam_min = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4 * det)));
                if (lam_min < -tol * std::max(1.0, std::abs(tr)))
                    throw CostModelError("convexity gate: expected-cost Hessian not PSD at g=" +
                                         std::to_string(g) + ", phi=" + std::to_string(phi) +
                                         " (min eigenvalue " + std::to_string(lam_min) + ")");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Merit-order fleet

struct FleetSegment {
    double capacity = 0.0;  // MW
    double c0 = 0.0;        // $/h
    double c1 = 0.0;        // $/MWh
    double c2 = 0.0;        // $/MWh^2

    double cost(double x) const { return c0 + (c1 + c2 * x) * x; }
    double marginal(double x) const { return c1 + 2.0 * c2 * x; }
};

/// Generators stacked by marginal cost. Fixed costs c0 of every unit are
/// always incurred, so the cumulative curve is continuous.
class FleetCurve {
public:
    FleetCurve() = default;

    explicit FleetCurve(std::vector<FleetSegment> segs) : segments_(std::move(segs)) {
        std::stable_sort(segments_.begin(), segments_.end(),
                         [](const FleetSegment& a, const FleetSegment& b) { return a.c1 < b.c1; });
        for (std::size_t k = 0; k < segments_.size(); ++k) {
            const auto& s = segments_[k];
            if (!(s.capacity > 0.0)) throw DomainError("fleet segment capacity must be > 0");
            if (s.c2 < 0.0) throw DomainError("fleet segment must have c2 >= 0");
            if (k > 0) {
                const auto& prev = segments_[k - 1];
                const double end_mc = prev.marginal(prev.capacity);
                if (s.marginal(0.0) < end_mc - 1e-9 * std::max(1.0, std::abs(end_mc)))
                    throw DomainError("fleet is not in merit order: segment " + std::to_string(k) +
                                      " starts at marginal cost " + std::to_string(s.marginal(0.0)) +
                                      " below the previous segment's " + std::to_string(end_mc));
            }
            total_ += s.capacity;
            fixed_ += s.c0;
        }
    }

    const std::vector<FleetSegment>& segments() const { return segments_; }
    double total_capacity() const { return total_; }
    double fixed_cost() const { return fixed_; }

private:
    std::vector<FleetSegment> segments_;
    double total_ = 0.0;
    double fixed_ = 0.0;
};

/// Exact cost of serving q MW from the merit-ordered fleet.
inline double merit_order_cost(const FleetCurve& fleet, double q) {
    const double cap = fleet.total_capacity();
    const double slack = 1e-9 * std::max(1.0, cap);
    if (!(q >= -slack && q <= cap + slack))
        throw DomainError("merit_order_cost: q=" + std::to_string(q) + " outside [0, " + std::to_string(cap) + "]");
    q = std::clamp(q, 0.0, cap);
    double cost = fleet.fixed_cost();
    double remaining = q;
    for (const auto& s : fleet.segments()) {
        if (remaining <= 0.0) break;
        const double x = std::min(remaining, s.capacity);
        cost += (s.c1 + s.c2 * x) * x;
        remaining -= x;
    }
    return cost;
}

/// Marginal cost of the fleet at q (right derivative inside the stack).
inline double merit_order_marginal(const FleetCurve& fleet, double q) {
    double remaining = std::clamp(q, 0.0, fleet.total_capacity());
    for (const auto& s : fleet.segments()) {
        if (remaining <= s.capacity) return s.marginal(remaining);
        remaining -= s.capacity;
    }
    const auto& last = fleet.segments().back();
    return last.marginal(last.capacity);
}

struct PolynomialFit {
    CostPolynomial poly;
    double rmse = 0.0;  // $/h on the fitting grid
};

/// Least-squares fit of the cumulative merit-order cost on a uniform
/// 200-point grid over [0, total capacity].
inline PolynomialFit fit_polynomial_to_merit_curve(const FleetCurve& fleet, int degree, int grid_points = 200) {
    if (degree < 1 || degree > kMaxCostDegree)
        throw CostModelError("fit_polynomial_to_merit_curve: degree must be 1..4, got " + std::to_string(degree));
    const double cap = fleet.total_capacity();
    if (!(cap > 0.0)) throw DomainError("fit_polynomial_to_merit_curve: fleet has zero capacity");
    const int n = grid_points;
    Eigen::MatrixXd A(n, degree + 1);
    Eigen::VectorXd y(n);
    for (int k = 0; k < n; ++k) {
        const double q = cap * k / (n - 1);
        const double s = q / cap;  // scaled abscissa for conditioning
        double pw = 1.0;
        for (int i = 0; i <= degree; ++i) {
            A(k, i) = pw;
            pw *= s;
        }
        y(k) = merit_order_cost(fleet, q);
    }
    const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(y);
    std::vector<double> coeffs(degree + 1);
    for (int i = 0; i <= degree; ++i) coeffs[i] = beta(i) / std::pow(cap, i);
    const Eigen::VectorXd resid = A * beta - y;
    return {CostPolynomial(coeffs), std::sqrt(resid.squaredNorm() / n)};
}

}  // namespace storage_pricer
