#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "storage_pricer/reformulation.hpp"

using namespace storage_pricer;

namespace {

StorageSpec unit_storage(double p_max, double e_max, double eta) {
    StorageSpec s;
    s.p_max = p_max;
    s.e_max = e_max;
    s.eta = eta;
    s.e_init = 0.5 * e_max;
    return s;
}

double coef(const LinearRow& r, int var) {
    double c = 0.0;
    for (const auto& [j, v] : r.coeffs)
        if (j == var) c += v;
    return c;
}

const LinearRow& row_of(const LinearConstraintSet& set, RowKind k, int t) {
    const auto i = set.find(k, t);
    EXPECT_TRUE(i.has_value()) << to_string(k) << "[" << t << "]";
    return set.rows[*i];
}

}  // namespace

TEST(AllocateRisk, Examples) {
    const auto eq = allocate_risk(0.05, 5);
    ASSERT_EQ(eq.eps.size(), 5u);
    for (double e : eq.eps) EXPECT_DOUBLE_EQ(e, 0.01);
    const auto cu = allocate_risk(0.05, 2, RiskPolicy::Custom, {0.8, 0.2});
    EXPECT_NEAR(cu.eps[0], 0.04, 1e-15);
    EXPECT_NEAR(cu.eps[1], 0.01, 1e-15);
    EXPECT_THROW(allocate_risk(0.05, 0), DomainError);
    EXPECT_THROW(allocate_risk(0.05, 2, RiskPolicy::Custom, {0.5, 0.6}), DomainError);
    EXPECT_THROW(allocate_risk(0.05, 2, RiskPolicy::Custom, {1.2, -0.2}), DomainError);
    EXPECT_THROW(allocate_risk(1.5, 2), DomainError);
}

TEST(AllocateRisk, BudgetNeverExceeded) {
    for (int n = 1; n <= 12; ++n) {
        const auto r = allocate_risk(0.07, n);
        double s = 0;
        for (double e : r.eps) s += e;
        EXPECT_LE(s, 0.07 * (1 + 1e-14));
    }
}

TEST(DeterministicConstraints, DischargeRowExample) {
    const VariableLayout L{1, true, 50.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    const std::vector<PeriodQuantiles> q{period_quantiles({0, 10}, plan, UncertaintyModel::gaussian())};
    const auto set = build_deterministic_constraints(L, 0, 1000, unit_storage(50, 100, 1.0), q);
    const auto& r = row_of(set, RowKind::DischargeUpper, 1);
    EXPECT_EQ(coef(r, L.p(1)), 1.0);
    EXPECT_NEAR(coef(r, L.psi(1)), 16.448536269514722, 1e-9);
    EXPECT_EQ(r.rhs, 50.0);
}

TEST(DeterministicConstraints, SocUpperRowSigns) {
    // With power quantiles at 0.05, the SoC rows use 0.025 on each side.
    const VariableLayout L{2, true, 50.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    const auto Q = period_quantiles({0, 10}, plan, UncertaintyModel::gaussian());
    const auto set = build_deterministic_constraints(L, 0, 1000, unit_storage(50, 100, 1.0), {Q, Q});
    const double z = 10 * 1.959963984540054;
    EXPECT_NEAR(Q.soc.lo, -z, 1e-8);
    EXPECT_NEAR(Q.soc.hi, z, 1e-8);
    // Period 2: e_2 + b_2 + psi_2 * z <= 100 in variable form.
    const auto& up = row_of(set, RowKind::SocUpper, 2);
    EXPECT_EQ(coef(up, L.e_next(1)), 1.0);
    EXPECT_EQ(coef(up, L.b(2)), 1.0);
    EXPECT_NEAR(coef(up, L.psi(2)), z, 1e-8);
    EXPECT_EQ(up.rhs, 100.0);
    // Period 1 folds the initial SoC datum into the right-hand side.
    const auto& up1 = row_of(set, RowKind::SocUpper, 1);
    EXPECT_EQ(up1.rhs, 50.0);
    const auto& lo1 = row_of(set, RowKind::SocLower, 1);
    EXPECT_EQ(lo1.rhs, 50.0);
    EXPECT_NEAR(coef(lo1, L.psi(1)), z, 1e-8);
}

TEST(DeterministicConstraints, ZeroSigmaCollapsesToNominalBounds) {
    const VariableLayout L{3, true, 20.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    std::vector<PeriodQuantiles> q(3, period_quantiles({0, 0}, plan, UncertaintyModel::gaussian()));
    const auto set = build_deterministic_constraints(L, 10, 500, unit_storage(40, 80, 0.9), q);
    for (const auto& r : set.rows) {
        EXPECT_EQ(coef(r, L.phi(r.tag.t)), 0.0) << r.tag.str();
        EXPECT_EQ(coef(r, L.psi(r.tag.t)), 0.0) << r.tag.str();
    }
    EXPECT_EQ(row_of(set, RowKind::GenLower, 2).rhs, -10.0);
    EXPECT_EQ(row_of(set, RowKind::GenUpper, 2).rhs, 500.0);
    EXPECT_EQ(row_of(set, RowKind::ChargeUpper, 3).rhs, 40.0);
    EXPECT_EQ(row_of(set, RowKind::DischargeUpper, 1).rhs, 40.0);
    EXPECT_EQ(row_of(set, RowKind::SocUpper, 3).rhs, 80.0);
    EXPECT_NEAR(coef(row_of(set, RowKind::SocLower, 3), L.p(3)), 1 / 0.9, 1e-15);
}

TEST(DeterministicConstraints, LargerSigmaTightensEveryRow) {
    // With phi, psi >= 0 each row's left side can only grow when sigma grows.
    const VariableLayout L{1, true, 20.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    double prev_max = -1;
    for (double sigma : {0.0, 1.0, 5.0, 20.0}) {
        const auto Q = period_quantiles({0, sigma}, plan, UncertaintyModel::gaussian());
        const auto set = build_deterministic_constraints(L, 0, 500, unit_storage(40, 80, 0.9), {Q});
        double mx = 0;
        for (const auto& r : set.rows) {
            EXPECT_GE(coef(r, L.phi(1)), -1e-15);
            EXPECT_GE(coef(r, L.psi(1)), -1e-15);
            mx = std::max(mx, coef(r, L.psi(1)));
        }
        EXPECT_GE(mx, prev_max);
        prev_max = mx;
    }
}

TEST(DeterministicConstraints, TagAuditAndQuantileLevels) {
    const int T = 4;
    const VariableLayout L{T, true, 10.0};
    const double eps = 0.08;
    const RiskPlan plan = RiskPlan::make(eps);
    EXPECT_DOUBLE_EQ(plan.gen.eps[0], eps / 2);
    EXPECT_DOUBLE_EQ(plan.soc.eps[1], eps / 2);
    const ErrorMoments m{0, 3};
    const auto Q = period_quantiles(m, plan, UncertaintyModel::gaussian());
    EXPECT_NEAR(Q.gen.hi, 3 * gaussian_quantile(eps / 2), 1e-12);
    EXPECT_NEAR(Q.power.hi, 3 * gaussian_quantile(eps), 1e-12);
    const auto set = build_deterministic_constraints(L, 0, 100, unit_storage(5, 20, 0.95), std::vector(T, Q));
    std::map<RowKind, int> count;
    for (const auto& r : set.rows) count[r.tag.kind]++;
    for (RowKind k : {RowKind::GenLower, RowKind::GenUpper, RowKind::ChargeLower, RowKind::ChargeUpper,
                      RowKind::DischargeLower, RowKind::DischargeUpper, RowKind::SocLower, RowKind::SocUpper})
        EXPECT_EQ(count[k], T) << to_string(k);
    EXPECT_EQ(set.rows.size(), 8u * T);
}

TEST(DeterministicConstraints, RejectsBadInput) {
    const VariableLayout L{2, true, 10.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    const auto Q = period_quantiles({0, 1}, plan, UncertaintyModel::gaussian());
    EXPECT_THROW(build_deterministic_constraints(L, 0, 100, unit_storage(5, 20, 0.95), {Q}), DomainError);
    auto bad = Q;
    bad.soc.hi = std::nan("");
    EXPECT_THROW(build_deterministic_constraints(L, 0, 100, unit_storage(5, 20, 0.95), {Q, bad}), DomainError);

    LinearConstraintSet set;
    set.num_vars = 1;
    set.add({{{0, 1.0}}, Sense::LessEqual, 1.0, {RowKind::Other, 1}});
    set.add({{{0, 1.0}}, Sense::LessEqual, 2.0, {RowKind::Other, 1}});
    EXPECT_THROW(set.validate(), DomainError);
    LinearConstraintSet undeclared;
    undeclared.num_vars = 1;
    undeclared.add({{{3, 1.0}}, Sense::LessEqual, 1.0, {RowKind::Other, 1}});
    EXPECT_THROW(undeclared.validate(), DomainError);
}

TEST(DeterministicConstraints, NoStorageEmitsGeneratorRowsOnly) {
    const VariableLayout L{2, false, 0.0};
    const RiskPlan plan = RiskPlan::make(0.05);
    const auto Q = period_quantiles({0, 2}, plan, UncertaintyModel::gaussian());
    const auto set = build_deterministic_constraints(L, 10, 100, StorageSpec{}, {Q, Q});
    ASSERT_EQ(set.rows.size(), 4u);
    // phi is the constant 1: the quantile moves into the right-hand side.
    const auto& up = row_of(set, RowKind::GenUpper, 1);
    EXPECT_NEAR(up.rhs, 100 - Q.gen.hi, 1e-12);
    const auto& lo = row_of(set, RowKind::GenLower, 1);
    EXPECT_NEAR(lo.rhs, -10 + Q.gen.lo, 1e-12);
}
