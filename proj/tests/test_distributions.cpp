#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "storage_pricer/distributions.hpp"
#include "storage_pricer/rng.hpp"

using namespace storage_pricer;

namespace {

// Independent oracle: Phi via erf, inverted by plain bisection.
double oracle_normal_quantile(double p) {
    double lo = -10, hi = 10;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * (1 + std::erf(mid / std::sqrt(2.0))) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Simpson integration of x^k against the N(mu, sigma^2) density.
double oracle_gaussian_moment(double mu, double sigma, int k) {
    const int n = 20000;
    const double a = mu - 12 * sigma, b = mu + 12 * sigma, h = (b - a) / n;
    double s = 0;
    for (int i = 0; i <= n; ++i) {
        const double x = a + i * h;
        const double f = std::pow(x, k) * std::exp(-0.5 * std::pow((x - mu) / sigma, 2)) / (sigma * std::sqrt(2 * M_PI));
        s += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
    }
    return s * h / 3;
}

}  // namespace

TEST(GaussianQuantile, MatchesErfOracle) {
    EXPECT_NEAR(gaussian_quantile(0.5), 0.0, 1e-12);
    EXPECT_NEAR(gaussian_quantile(0.05), 1.6449, 1e-4);
    EXPECT_NEAR(gaussian_quantile(0.025), 1.9600, 1e-4);
    for (double eps : {0.001, 0.01, 0.05, 0.2, 0.5, 0.7, 0.99}) {
        const double z = gaussian_quantile(eps);
        EXPECT_NEAR(z, oracle_normal_quantile(1 - eps), 1e-9);
        EXPECT_NEAR(normal_cdf(z), 1 - eps, 1e-10);
    }
}

TEST(GaussianQuantile, RejectsOutOfDomain) {
    EXPECT_THROW(gaussian_quantile(0.0), DomainError);
    EXPECT_THROW(gaussian_quantile(1.0), DomainError);
    EXPECT_THROW(gaussian_quantile(-0.1), DomainError);
}

TEST(RobustQuantile, TableValues) {
    EXPECT_NEAR(robust_quantile(RobustShape::NA, 0.05), std::sqrt(0.95 / 0.05), 1e-12);
    EXPECT_NEAR(robust_quantile(RobustShape::NA, 0.05), 4.3589, 1e-4);
    EXPECT_NEAR(robust_quantile(RobustShape::S, 0.05), 3.1623, 1e-4);
    EXPECT_NEAR(robust_quantile(RobustShape::U, 0.05), 2.8087, 1e-4);
    EXPECT_NEAR(robust_quantile(RobustShape::SU, 0.05), 2.1082, 1e-4);
    EXPECT_EQ(robust_quantile(RobustShape::S, 0.6), 0.0);
    EXPECT_EQ(robust_quantile(RobustShape::SU, 0.75), 0.0);
    EXPECT_NEAR(robust_quantile(RobustShape::SU, 0.3), std::sqrt(3.0) * 0.4, 1e-12);
    EXPECT_NEAR(robust_quantile(RobustShape::U, 0.5), std::sqrt(1.5 / 2.5), 1e-12);
}

TEST(RobustQuantile, BoundaryUsesLowerBranch) {
    EXPECT_NEAR(robust_quantile(RobustShape::S, 0.5), 1.0, 1e-12);  // sqrt(1/(2*0.5))
    EXPECT_NEAR(robust_quantile(RobustShape::U, 1.0 / 6.0), std::sqrt((4 - 1.5) / 1.5), 1e-12);
    EXPECT_NEAR(robust_quantile(RobustShape::SU, 1.0 / 6.0), std::sqrt(2 / 1.5), 1e-12);
    EXPECT_NEAR(robust_quantile(RobustShape::SU, 0.5), 0.0, 1e-12);
    EXPECT_THROW(robust_quantile(RobustShape::NA, 0.0), DomainError);
    EXPECT_NO_THROW(robust_quantile(RobustShape::NA, 1.0));
}

TEST(Quantiles, ConservatismChainAndMonotonicity) {
    const double e = 0.05;
    EXPECT_GE(robust_quantile(RobustShape::NA, e), robust_quantile(RobustShape::S, e));
    EXPECT_GE(robust_quantile(RobustShape::S, e), robust_quantile(RobustShape::U, e));
    EXPECT_GE(robust_quantile(RobustShape::U, e), robust_quantile(RobustShape::SU, e));
    EXPECT_GE(robust_quantile(RobustShape::SU, e), gaussian_quantile(e));
    for (auto shape : {RobustShape::NA, RobustShape::S, RobustShape::U, RobustShape::SU}) {
        double prev = robust_quantile(shape, 0.001);
        for (int i = 2; i <= 999; ++i) {
            const double v = robust_quantile(shape, i / 1000.0);
            EXPECT_LE(v, prev + 1e-12);
            prev = v;
        }
    }
    double prev = gaussian_quantile(0.001);
    for (int i = 2; i <= 999; ++i) {
        const double v = gaussian_quantile(i / 1000.0);
        EXPECT_LE(v, prev);
        prev = v;
    }
}

TEST(Versatile, InverseCdfValuesAndRoundTrip) {
    EXPECT_NEAR(versatile_inverse_cdf(1, 1, 0, 0.5), 0.0, 1e-14);
    EXPECT_NEAR(versatile_inverse_cdf(1, 1, 0, 0.05), std::log(19.0), 1e-12);
    EXPECT_NEAR(versatile_inverse_cdf(1, 1, 0, 0.05), 2.9444, 1e-4);
    EXPECT_NEAR(versatile_inverse_cdf(2, 1, 3, 0.5), 3.0, 1e-14);
    EXPECT_THROW(versatile_inverse_cdf(0, 1, 0, 0.1), DomainError);
    EXPECT_THROW(versatile_inverse_cdf(1, -1, 0, 0.1), DomainError);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ua(0.2, 5), uc(-5, 5), ue(1e-4, 1 - 1e-4);
    for (int i = 0; i < 1000; ++i) {
        const VersatileParams p{ua(rng), ua(rng), uc(rng)};
        const double eps = ue(rng);
        const double x = versatile_inverse_cdf(p.a, p.b, p.c, eps);
        EXPECT_NEAR(versatile_cdf(p, x), 1 - eps, 1e-9);
    }
}

TEST(Versatile, NumericInversionOracle) {
    // Bisection on the CDF as an independent check of the closed form.
    const VersatileParams p{1.3, 2.2, -0.4};
    for (double eps : {0.01, 0.05, 0.3}) {
        double lo = -100, hi = 100;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (versatile_cdf(p, mid) < 1 - eps ? lo : hi) = mid;
        }
        EXPECT_NEAR(versatile_inverse_cdf(p.a, p.b, p.c, eps), 0.5 * (lo + hi), 1e-9);
    }
}

TEST(Versatile, MomentsMatchNumericIntegration) {
    const VersatileParams p{1.7, 0.6, 0.8};
    const int n = 400000;
    const double a = -60, b = 60, h = (b - a) / n;
    double m0 = 0, m1 = 0, m2 = 0;
    for (int i = 0; i <= n; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * versatile_pdf(p, x);
        m0 += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    m0 *= h / 3;
    m1 *= h / 3;
    m2 *= h / 3;
    EXPECT_NEAR(m0, 1.0, 1e-8);
    EXPECT_NEAR(versatile_mean(p), m1, 1e-7);
    EXPECT_NEAR(versatile_stddev(p), std::sqrt(m2 - m1 * m1), 1e-7);
}

TEST(Versatile, MleRecoversTruth) {
    struct Case {
        VersatileParams truth;
        double tol;
    };
    for (const auto& cs : {Case{{1, 1, 0}, 0.05}, Case{{2, 3, -1}, 0.1}}) {
        auto rng = make_stream(11, 0);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = versatile_quantile(cs.truth, uniform_open(rng));
        const auto fit = fit_versatile_mle(xs);
        EXPECT_NEAR(fit.params.a, cs.truth.a, cs.tol);
        EXPECT_NEAR(fit.params.b, cs.truth.b, cs.tol);
        EXPECT_NEAR(fit.params.c, cs.truth.c, cs.tol);
        EXPECT_LE(fit.gradient_norm, 1e-6);
    }
}

TEST(Versatile, MleRejectsTooFewSamples) {
    std::vector<double> xs(10, 1.0);
    for (int i = 0; i < 10; ++i) xs[i] = i;
    EXPECT_THROW(fit_versatile_mle(xs), FitError);
}

TEST(Empirical, Type7Interpolation) {
    const std::vector<double> a{3, 1, 2};
    EXPECT_DOUBLE_EQ(empirical_quantile(a, 0.5), 2.0);
    const std::vector<double> b{0, 10};
    EXPECT_DOUBLE_EQ(empirical_quantile(b, 0.25), 2.5);
    const std::vector<double> c{5};
    EXPECT_DOUBLE_EQ(empirical_quantile(c, 0.3), 5.0);
    EXPECT_THROW(empirical_quantile(std::vector<double>{}, 0.5), DomainError);
    EXPECT_THROW(empirical_quantile(b, 0.0), DomainError);
}

TEST(QuantilePair, SpecExamples) {
    for (const auto& model : {UncertaintyModel::gaussian(), UncertaintyModel::robust(RobustShape::U),
                              UncertaintyModel::versatile({1, 2, 0})}) {
        const auto q = quantile_pair({3.0, 0.0}, 0.05, model);
        EXPECT_EQ(q.lo, 3.0);
        EXPECT_EQ(q.hi, 3.0);
    }
    const auto g = quantile_pair({0, 1}, 0.05, UncertaintyModel::gaussian());
    EXPECT_NEAR(g.lo, -1.6449, 1e-4);
    EXPECT_NEAR(g.hi, 1.6449, 1e-4);
    const auto r = quantile_pair({10, 2}, 0.05, UncertaintyModel::robust(RobustShape::SU));
    EXPECT_NEAR(r.lo, 5.7836, 1e-4);
    EXPECT_NEAR(r.hi, 14.2164, 1e-4);
}

TEST(QuantilePair, AsymmetricFamiliesUseOwnTails) {
    const VersatileParams p{1.0, 0.3, 0.0};  // strongly skewed
    const auto model = UncertaintyModel::versatile(p);
    const auto q = quantile_pair({2, 3}, 0.05, model);
    const double m = versatile_mean(p), s = versatile_stddev(p);
    EXPECT_NEAR(q.lo, 2 + 3 * (versatile_quantile(p, 0.05) - m) / s, 1e-12);
    EXPECT_NEAR(q.hi, 2 + 3 * (versatile_quantile(p, 0.95) - m) / s, 1e-12);
    EXPECT_LT(q.lo, q.hi);
    EXPECT_GT(std::abs(q.lo - 2), std::abs(q.hi - 2));  // long left tail

    std::vector<double> xs;
    for (int i = 0; i <= 100; ++i) xs.push_back(i * i);
    const auto emp = UncertaintyModel::empirical(xs);
    const auto qe = quantile_pair({0, 1}, 0.1, emp);
    EXPECT_LT(qe.lo, qe.hi);
    EXPECT_THROW(UncertaintyModel::empirical({1.0}), DomainError);
}

TEST(RawMoment, ClosedFormAgainstIntegration) {
    EXPECT_DOUBLE_EQ(gaussian_raw_moment({1.5, 2}, 1), 1.5);
    EXPECT_NEAR(gaussian_raw_moment({1, 2}, 2), 5.0, 1e-14);
    EXPECT_NEAR(gaussian_raw_moment({0, 1}, 4), 3.0, 1e-14);
    EXPECT_THROW(gaussian_raw_moment({0, 1}, -1), DomainError);
    for (double mu : {-1.5, 0.0, 0.7}) {
        for (double sigma : {0.5, 1.0, 2.0}) {
            for (int k = 0; k <= 6; ++k) {
                const double exact = gaussian_raw_moment({mu, sigma}, k);
                const double num = oracle_gaussian_moment(mu, sigma, k);
                EXPECT_NEAR(exact, num, 1e-8 * std::max(1.0, std::abs(num))) << mu << " " << sigma << " " << k;
            }
        }
    }
}

TEST(RawMoment, MonteCarloWithinThreeStandardErrors) {
    const ErrorMoments m{0.3, 1.2};
    auto rng = make_stream(5, 1);
    std::normal_distribution<double> nd(m.mu, m.sigma);
    const int n = 1000000;
    std::vector<double> sum(7, 0.0), sum2(7, 0.0);
    for (int i = 0; i < n; ++i) {
        const double x = nd(rng);
        double p = 1;
        for (int k = 0; k <= 6; ++k) {
            sum[k] += p;
            sum2[k] += p * p;
            p *= x;
        }
    }
    for (int k = 1; k <= 6; ++k) {
        const double mean = sum[k] / n;
        const double se = std::sqrt((sum2[k] / n - mean * mean) / n);
        EXPECT_LE(std::abs(mean - gaussian_raw_moment(m, k)), 3 * se) << "k=" << k;
    }
}
