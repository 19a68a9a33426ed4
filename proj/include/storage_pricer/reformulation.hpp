#pragma once

// Bonferroni risk allocation and the quantile substitution that turns the
// chance constraints on generation, storage power and SoC into linear rows.

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "storage_pricer/costs.hpp"
#include "storage_pricer/distributions.hpp"
#include "storage_pricer/errors.hpp"

namespace storage_pricer {

enum class RiskPolicy { EqualSplit, Custom };

struct RiskAllocation {
    double epsilon_total = 0.05;
    std::vector<double> eps;
    RiskPolicy policy = RiskPolicy::EqualSplit;
};

inline RiskAllocation allocate_risk(double epsilon, int n, RiskPolicy policy = RiskPolicy::EqualSplit,
                                    const std::vector<double>& weights = {}) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("allocate_risk: epsilon must lie in (0, 1)");
    if (n < 1) throw DomainError("allocate_risk: need at least one constraint");
    RiskAllocation r;
    r.epsilon_total = epsilon;
    r.policy = policy;
    if (policy == RiskPolicy::EqualSplit) {
        r.eps.assign(static_cast<std::size_t>(n), epsilon / n);
        return r;
    }
    if (static_cast<int>(weights.size()) != n)
        throw DomainError("allocate_risk: expected " + std::to_string(n) + " weights, got " +
                          std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw DomainError("allocate_risk: weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("allocate_risk: weights must sum to 1");
    for (double w : weights) r.eps.push_back(w * epsilon / sum);
    return r;
}

/// Identity of each emitted row; doubles as the name of its dual variable.
enum class RowKind {
    Balance,       // lambda
    SocRecursion,  // theta
    ReserveSplit,  // pi
    GenLower,      // nu_lo
    GenUpper,      // nu_hi
    ChargeLower,   // alpha_lo  (b >= 0)
    ChargeUpper,   // alpha_hi
    DischargeLower,  // beta_lo (p >= 0)
    DischargeUpper,  // beta_hi
    SocLower,      // iota_lo
    SocUpper,      // iota_hi
    PhiLower,      // kappa_phi
    PsiLower,      // kappa_psi
    PsiFixed,      // psi = 0 (storage kept out of reserve)
    Terminal,      // terminal SoC equality
    TerminalLower,
    TerminalUpper,
    BidEpigraph,
    Other,
};

inline const char* to_string(RowKind k) {
    switch (k) {
        case RowKind::Balance: return "lambda";
        case RowKind::SocRecursion: return "theta";
        case RowKind::ReserveSplit: return "pi";
        case RowKind::GenLower: return "nu_lo";
        case RowKind::GenUpper: return "nu_hi";
        case RowKind::ChargeLower: return "alpha_lo";
        case RowKind::ChargeUpper: return "alpha_hi";
        case RowKind::DischargeLower: return "beta_lo";
        case RowKind::DischargeUpper: return "beta_hi";
        case RowKind::SocLower: return "iota_lo";
        case RowKind::SocUpper: return "iota_hi";
        case RowKind::PhiLower: return "kappa_phi";
        case RowKind::PsiLower: return "kappa_psi";
        case RowKind::PsiFixed: return "psi_fixed";
        case RowKind::Terminal: return "terminal";
        case RowKind::TerminalLower: return "terminal_lo";
        case RowKind::TerminalUpper: return "terminal_hi";
        case RowKind::BidEpigraph: return "bid_epigraph";
        case RowKind::Other: return "other";
    }
    return "?";
}

struct RowTag {
    RowKind kind = RowKind::Other;
    int t = 0;    // 1-based period; 0 for horizon-level rows
    int sub = 0;  // disambiguates several rows of one kind in one period

    std::string str() const {
        std::string s = std::string(to_string(kind)) + "[" + std::to_string(t) + "]";
        if (sub) s += "#" + std::to_string(sub);
        return s;
    }
    bool operator<(const RowTag& o) const {
        if (kind != o.kind) return kind < o.kind;
        if (t != o.t) return t < o.t;
        return sub < o.sub;
    }
};

enum class Sense { LessEqual, Equal };

struct LinearRow {
    std::vector<std::pair<int, double>> coeffs;  // (variable index, coefficient)
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;
    RowTag tag;
};

struct LinearConstraintSet {
    int num_vars = 0;
    std::vector<LinearRow> rows;

    void add(LinearRow r) { rows.push_back(std::move(r)); }

    void validate() const {
        std::set<RowTag> seen;
        for (const auto& r : rows) {
            for (const auto& [j, c] : r.coeffs)
                if (j < 0 || j >= num_vars)
                    throw DomainError("constraint " + r.tag.str() + " references undeclared variable " +
                                      std::to_string(j));
            if (!seen.insert(r.tag).second) throw DomainError("duplicate constraint tag " + r.tag.str());
        }
    }

    std::optional<std::size_t> find(RowKind kind, int t) const {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].tag.kind == kind && rows[i].tag.t == t) return i;
        return std::nullopt;
    }
};

/// Column layout of the dispatch program. With storage, each period owns
/// [g, p, b, phi, psi, e_next]; without storage only g is a variable and
/// phi = 1, psi = 0 are constants. e_1 is the initial SoC datum.
struct VariableLayout {
    int T = 1;
    bool storage = true;
    double e_init = 0.0;

    static constexpr int kPerPeriod = 6;

    int num_vars() const { return storage ? kPerPeriod * T : T; }
    // t is 1-based throughout.
    int g(int t) const { return storage ? kPerPeriod * (t - 1) : t - 1; }
    int p(int t) const { return storage ? kPerPeriod * (t - 1) + 1 : -1; }
    int b(int t) const { return storage ? kPerPeriod * (t - 1) + 2 : -1; }
    int phi(int t) const { return storage ? kPerPeriod * (t - 1) + 3 : -1; }
    int psi(int t) const { return storage ? kPerPeriod * (t - 1) + 4 : -1; }
    // Variable holding e_{t+1}; e_1 is not a variable.
    int e_next(int t) const { return storage ? kPerPeriod * (t - 1) + 5 : -1; }
    // Beginning-of-period stock e_t: -1 when it is the datum e_init.
    int e_begin(int t) const { return t == 1 ? -1 : e_next(t - 1); }
};

/// Quantiles used by each constraint family in one period.
struct PeriodQuantiles {
    QuantilePair gen;    // generation limits
    QuantilePair power;  // storage power limits
    QuantilePair soc;    // SoC limits
};

/// Bonferroni split of the per-period risk budget: the generation and SoC
/// joint constraints each hold two one-sided rows; the storage power rows
/// are individual constraints at the full level.
struct RiskPlan {
    RiskAllocation gen;    // two entries: lower, upper
    RiskAllocation soc;    // two entries: lower, upper
    double power = 0.05;

    static RiskPlan make(double epsilon, RiskPolicy policy = RiskPolicy::EqualSplit,
                         const std::vector<double>& weights = {}) {
        RiskPlan r;
        r.gen = allocate_risk(epsilon, 2, policy, weights);
        r.soc = allocate_risk(epsilon, 2, policy, weights);
        r.power = epsilon;
        return r;
    }
};

/// Lower quantile at eps_lo and upper quantile at eps_hi.
inline QuantilePair split_quantiles(const ErrorMoments& m, double eps_lo, double eps_hi,
                                    const UncertaintyModel& model) {
    return {quantile_pair(m, eps_lo, model).lo, quantile_pair(m, eps_hi, model).hi};
}

inline PeriodQuantiles period_quantiles(const ErrorMoments& m, const RiskPlan& plan, const UncertaintyModel& model) {
    PeriodQuantiles q;
    q.gen = split_quantiles(m, plan.gen.eps[0], plan.gen.eps[1], model);
    q.soc = split_quantiles(m, plan.soc.eps[0], plan.soc.eps[1], model);
    q.power = quantile_pair(m, plan.power, model);
    return q;
}

namespace detail {

// Adds coef * var to a row, folding fixed values into the right-hand side.
struct RowBuilder {
    LinearRow row;
    void term(int var, double coef, double fixed_value = 0.0) {
        if (coef == 0.0) return;
        if (var >= 0)
            row.coeffs.emplace_back(var, coef);
        else
            row.rhs -= coef * fixed_value;
    }
};

}  // namespace detail

/// Deterministic linear rows for generation, storage power and SoC limits,
/// in "<=" form with signed quantiles exactly as substituted.
inline LinearConstraintSet build_deterministic_constraints(const VariableLayout& L, double g_min, double g_max,
                                                           const StorageSpec& s,
                                                           const std::vector<PeriodQuantiles>& q) {
    if (static_cast<int>(q.size()) != L.T)
        throw DomainError("build_deterministic_constraints: quantiles supplied for " + std::to_string(q.size()) +
                          " periods, horizon is " + std::to_string(L.T));
    LinearConstraintSet set;
    set.num_vars = L.num_vars();
    for (int t = 1; t <= L.T; ++t) {
        const auto& Q = q[t - 1];
        for (double v : {Q.gen.lo, Q.gen.hi, Q.power.lo, Q.power.hi, Q.soc.lo, Q.soc.hi})
            if (!std::isfinite(v))
                throw DomainError("build_deterministic_constraints: missing quantile in period " + std::to_string(t));
        // phi and psi are constants 1 and 0 without storage.
        const double phi_fixed = 1.0;
        {
            detail::RowBuilder r;  // G_min <= g + phi d_hat
            r.row.tag = {RowKind::GenLower, t};
            r.row.rhs = -g_min;
            r.term(L.g(t), -1.0);
            r.term(L.phi(t), -Q.gen.lo, phi_fixed);
            set.add(std::move(r.row));
        }
        {
            detail::RowBuilder r;  // g + phi d_tilde <= G_max
            r.row.tag = {RowKind::GenUpper, t};
            r.row.rhs = g_max;
            r.term(L.g(t), 1.0);
            r.term(L.phi(t), Q.gen.hi, phi_fixed);
            set.add(std::move(r.row));
        }
        if (!L.storage) continue;
        const double eta = s.eta;
        set.add({{{L.b(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::ChargeLower, t}});
        set.add({{{L.b(t), 1.0}, {L.psi(t), -Q.power.lo}}, Sense::LessEqual, s.p_max, {RowKind::ChargeUpper, t}});
        set.add({{{L.p(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::DischargeLower, t}});
        set.add({{{L.p(t), 1.0}, {L.psi(t), Q.power.hi}}, Sense::LessEqual, s.p_max, {RowKind::DischargeUpper, t}});
        {
            detail::RowBuilder r;  // (psi d_tilde + p)/eta <= e_t
            r.row.tag = {RowKind::SocLower, t};
            r.term(L.p(t), 1.0 / eta);
            r.term(L.psi(t), Q.soc.hi / eta);
            r.term(L.e_begin(t), -1.0, L.e_init);
            set.add(std::move(r.row));
        }
        {
            detail::RowBuilder r;  // e_t <= E_max - (b - psi d_hat) eta
            r.row.tag = {RowKind::SocUpper, t};
            r.row.rhs = s.e_max;
            r.term(L.e_begin(t), 1.0, L.e_init);
            r.term(L.b(t), eta);
            r.term(L.psi(t), -Q.soc.lo * eta);
            set.add(std::move(r.row));
        }
    }
    set.validate();
    return set;
}

}  // namespace storage_pricer
