#pragma once

// Chance-constrained economic dispatch with storage: assembly, solution,
// price extraction and equilibrium certification.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "storage_pricer/costs.hpp"
#include "storage_pricer/distributions.hpp"
#include "storage_pricer/errors.hpp"
#include "storage_pricer/reformulation.hpp"
#include "storage_pricer/solver.hpp"

namespace storage_pricer {

struct NetLoadModel {
    std::vector<double> forecast;        // D_t, MW
    std::vector<ErrorMoments> moments;   // per period
    UncertaintyModel model = UncertaintyModel::gaussian();
    double renewable_ratio = 0.0;
    double storage_ratio = 0.0;

    int horizon() const { return static_cast<int>(forecast.size()); }
};

enum class TerminalPolicy { Periodic, Fixed, Free };

struct TerminalSoc {
    TerminalPolicy policy = TerminalPolicy::Periodic;
    double value = 0.0;  // MWh, used by Fixed
};

struct SystemSpec {
    int T = 24;
    NetLoadModel load;
    CostPolynomial cost;
    FleetCurve fleet;
    StorageSpec storage;
    double g_min = 0.0;
    double g_max = 0.0;
    double epsilon = 0.05;
    RiskPolicy risk_policy = RiskPolicy::EqualSplit;
    std::vector<double> risk_weights;
    TerminalSoc terminal;
    bool storage_reserve = true;  // false: psi fixed at 0 (energy-only storage)
    double tol = 1e-8;
    int iter_cap = 200;
};

inline void validate(const SystemSpec& s) {
    if (s.T < 1) throw DomainError("system horizon must be >= 1");
    if (s.load.horizon() != s.T || static_cast<int>(s.load.moments.size()) != s.T)
        throw DomainError("net-load model covers " + std::to_string(s.load.horizon()) + " periods, horizon is " +
                          std::to_string(s.T));
    if (!(s.g_min <= s.g_max)) throw DomainError("generator bounds require g_min <= g_max");
    if (!(s.g_max > 0.0)) throw DomainError("generator capacity must be positive");
    for (int t = 0; t < s.T; ++t) {
        if (!std::isfinite(s.load.forecast[t])) throw DomainError("non-finite load in period " + std::to_string(t + 1));
        validate(s.load.moments[t]);
    }
    if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
    validate(s.storage);
    if (s.terminal.policy == TerminalPolicy::Fixed &&
        !(s.terminal.value >= 0.0 && s.terminal.value <= s.storage.e_max))
        throw DomainError("fixed terminal SoC must lie in [0, e_max]");
}

/// Assembled program plus the scaling needed to read physical prices.
/// Powers are divided by S (the generator capacity) and costs by S * rho.
struct DispatchProgram {
    ConvexProgram program;
    VariableLayout layout;
    std::vector<PeriodQuantiles> quantiles;  // physical MW
    RiskPlan risk;
    double power_base = 1.0;  // S, MW
    double price_base = 1.0;  // rho, $/MWh
};

namespace detail {

inline PeriodQuantiles scale(const PeriodQuantiles& q, double S) {
    return {{q.gen.lo / S, q.gen.hi / S}, {q.power.lo / S, q.power.hi / S}, {q.soc.lo / S, q.soc.hi / S}};
}

inline CostPolynomial scaled_cost(const CostPolynomial& c, double S, double rho) {
    std::vector<double> k(c.coeffs().size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = c.coeffs()[i] * std::pow(S, static_cast<double>(i)) / (S * rho);
    return CostPolynomial(k);
}

}  // namespace detail

inline DispatchProgram build_dispatch(const SystemSpec& sys) {
    validate(sys);
    check_convexity(sys.cost, sys.g_min, sys.g_max, sys.load.moments);

    DispatchProgram dp;
    const int T = sys.T;
    const bool storage = sys.storage.enabled();
    const double S = sys.g_max;
    double mean_load = 0.0;
    for (double d : sys.load.forecast) mean_load += d / T;
    const double rho = std::max(1.0, std::abs(sys.cost.marginal(std::clamp(mean_load, sys.g_min, sys.g_max))));
    dp.power_base = S;
    dp.price_base = rho;
    dp.layout = {T, storage, sys.storage.e_init / S};
    const VariableLayout& L = dp.layout;

    dp.risk = RiskPlan::make(sys.epsilon, sys.risk_policy, sys.risk_weights);
    dp.quantiles.resize(T);
    std::vector<PeriodQuantiles> scaled(T);
    for (int t = 0; t < T; ++t) {
        dp.quantiles[t] = period_quantiles(sys.load.moments[t], dp.risk, sys.load.model);
        scaled[t] = detail::scale(dp.quantiles[t], S);
    }
    StorageSpec ss = sys.storage;
    ss.p_max /= S;
    ss.e_max /= S;
    ss.e_init /= S;
    LinearConstraintSet rows = build_deterministic_constraints(L, sys.g_min / S, sys.g_max / S, ss, scaled);

    for (int t = 1; t <= T; ++t) {
        LinearRow bal{{{L.g(t), 1.0}}, Sense::Equal, sys.load.forecast[t - 1] / S, {RowKind::Balance, t}};
        if (storage) {
            bal.coeffs.emplace_back(L.p(t), 1.0);
            bal.coeffs.emplace_back(L.b(t), -1.0);
        }
        rows.add(bal);
        if (!storage) continue;
        detail::RowBuilder soc;  // e_t - e_{t+1} - p/eta + b eta = 0
        soc.row.sense = Sense::Equal;
        soc.row.tag = {RowKind::SocRecursion, t};
        soc.term(L.e_begin(t), 1.0, L.e_init);
        soc.term(L.e_next(t), -1.0);
        soc.term(L.p(t), -1.0 / ss.eta);
        soc.term(L.b(t), ss.eta);
        rows.add(soc.row);
        rows.add({{{L.phi(t), 1.0}, {L.psi(t), 1.0}}, Sense::Equal, 1.0, {RowKind::ReserveSplit, t}});
        rows.add({{{L.phi(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::PhiLower, t}});
        if (sys.storage_reserve)
            rows.add({{{L.psi(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::PsiLower, t}});
        else
            rows.add({{{L.psi(t), 1.0}}, Sense::Equal, 0.0, {RowKind::PsiFixed, t}});
    }
    if (storage) {
        const int last = L.e_next(T);
        switch (sys.terminal.policy) {
            case TerminalPolicy::Periodic:
                rows.add({{{last, 1.0}}, Sense::Equal, ss.e_init, {RowKind::Terminal, T}});
                break;
            case TerminalPolicy::Fixed:
                rows.add({{{last, 1.0}}, Sense::Equal, sys.terminal.value / S, {RowKind::Terminal, T}});
                break;
            case TerminalPolicy::Free:
                rows.add({{{last, -1.0}}, Sense::LessEqual, 0.0, {RowKind::TerminalLower, T}});
                rows.add({{{last, 1.0}}, Sense::LessEqual, ss.e_max, {RowKind::TerminalUpper, T}});
                break;
        }
    }
    rows.validate();

    // Objective on scaled variables.
    const CostPolynomial cs = detail::scaled_cost(sys.cost, S, rho);
    std::vector<ExpectedCostTerms> terms;
    std::vector<double> mu_s(T);
    for (int t = 0; t < T; ++t) {
        const ErrorMoments m{sys.load.moments[t].mu / S, sys.load.moments[t].sigma / S};
        terms.emplace_back(cs, m);
        mu_s[t] = m.mu;
    }
    const double Ms = sys.storage.marginal_cost / rho;
    const int n = L.num_vars();

    ConvexProgram& prog = dp.program;
    prog.n = n;
    prog.quadratic = sys.cost.degree() <= 2;
    prog.objective = [terms, mu_s, Ms, L](const VectorXd& x) {
        double f = 0.0;
        for (int t = 1; t <= L.T; ++t) {
            const double phi = L.storage ? x(L.phi(t)) : 1.0;
            f += terms[t - 1].value(x(L.g(t)), phi);
            if (L.storage) f += Ms * (x(L.p(t)) + x(L.psi(t)) * mu_s[t - 1]);
        }
        return f;
    };
    prog.gradient = [terms, mu_s, Ms, L, n](const VectorXd& x) {
        VectorXd g = VectorXd::Zero(n);
        for (int t = 1; t <= L.T; ++t) {
            const double phi = L.storage ? x(L.phi(t)) : 1.0;
            const auto gr = terms[t - 1].gradient(x(L.g(t)), phi);
            g(L.g(t)) += gr[0];
            if (L.storage) {
                g(L.phi(t)) += gr[1];
                g(L.p(t)) += Ms;
                g(L.psi(t)) += Ms * mu_s[t - 1];
            }
        }
        return g;
    };
    prog.hessian = [terms, L, n](const VectorXd& x) {
        MatrixXd H = MatrixXd::Zero(n, n);
        for (int t = 1; t <= L.T; ++t) {
            const double phi = L.storage ? x(L.phi(t)) : 1.0;
            const auto h = terms[t - 1].hessian(x(L.g(t)), phi);
            H(L.g(t), L.g(t)) += h[0];
            if (L.storage) {
                H(L.g(t), L.phi(t)) += h[1];
                H(L.phi(t), L.g(t)) += h[1];
                H(L.phi(t), L.phi(t)) += h[2];
            }
        }
        return H;
    };
    prog.constraints = std::move(rows);
    prog.constraints.num_vars = n;

    VectorXd x0 = VectorXd::Zero(n);
    for (int t = 1; t <= T; ++t) {
        x0(L.g(t)) = std::clamp(sys.load.forecast[t - 1] / S, sys.g_min / S, sys.g_max / S);
        if (storage) {
            x0(L.phi(t)) = sys.storage_reserve ? 0.5 : 1.0;
            x0(L.psi(t)) = sys.storage_reserve ? 0.5 : 0.0;
            x0(L.e_next(t)) = 0.5 * ss.e_max;
            x0(L.p(t)) = 0.01 * ss.p_max;
            x0(L.b(t)) = 0.01 * ss.p_max;
        }
    }
    prog.x0 = x0;
    return dp;
}

struct InequalityDuals {
    std::vector<double> nu_lo, nu_hi;        // generation limits, $/MWh
    std::vector<double> alpha_lo, alpha_hi;  // charge limits, $/MWh
    std::vector<double> beta_lo, beta_hi;    // discharge limits, $/MWh
    std::vector<double> iota_lo, iota_hi;    // SoC limits, $/MWh
    std::vector<double> kappa_phi, kappa_psi;  // phi, psi >= 0, $/h
    std::vector<double> psi_fixed;             // psi = 0 rows, $/h
    double terminal = 0.0;                     // $/MWh
    double terminal_lo = 0.0, terminal_hi = 0.0;
};

struct EquilibriumRow {
    std::string name;
    int t = 0;
    double residual = 0.0;
    double threshold = 0.0;
    bool pass = true;
};

struct EquilibriumReport {
    std::vector<EquilibriumRow> rows;
    bool all_pass = true;
    double max_price_residual = 0.0;  // $/MWh rows
    double max_reserve_residual = 0.0;  // $/h rows
    double max_quantity_residual = 0.0;  // MW / MWh rows
};

struct DispatchSolution {
    SolveStatus status = SolveStatus::IterLimit;
    std::string message;
    int T = 0;
    bool storage = false;
    std::vector<double> g, p, b, phi, psi;
    std::vector<double> e;  // T + 1 entries: e_1 (initial) .. e_{T+1}
    std::vector<double> lambda, theta, pi;
    InequalityDuals duals;
    std::vector<PeriodQuantiles> quantiles;
    double objective = 0.0;  // $ over the horizon
    Residuals residuals;     // solver residuals on the scaled program
    bool degenerate = false;
    int iterations = 0;
    double power_base = 1.0;
    double price_base = 1.0;
    EquilibriumReport equilibrium;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

struct ComplementarityReport {
    std::vector<int> flagged;  // 1-based periods with b p / S^2 above tol
    double max_product = 0.0;  // MW^2
    double max_scaled = 0.0;   // b p / S^2, S the power base
    bool clean() const { return flagged.empty(); }
};

inline ComplementarityReport check_complementarity(const DispatchSolution& s, double tol = 1e-6) {
    ComplementarityReport r;
    if (!s.storage) return r;
    for (int t = 0; t < s.T; ++t) {
        const double prod = s.b[t] * s.p[t];
        const double scaled = prod / (s.power_base * s.power_base);
        r.max_product = std::max(r.max_product, prod);
        r.max_scaled = std::max(r.max_scaled, scaled);
        if (scaled > tol) r.flagged.push_back(t + 1);
    }
    return r;
}

/// Independent check of market clearing and of every participant's
/// first-order optimality at the posted prices, in physical units.
inline EquilibriumReport verify_equilibrium(const DispatchSolution& s, const SystemSpec& sys) {
    EquilibriumReport rep;
    const double tol = sys.tol;
    const double rho = s.price_base, S = s.power_base;
    const double price_thr = 10 * tol * rho, reserve_thr = 10 * tol * rho * S, qty_thr = 10 * tol * S;
    auto add = [&](const std::string& name, int t, double r, double thr, double* tracker) {
        EquilibriumRow row{name, t, std::abs(r), thr, std::abs(r) <= thr};
        rep.all_pass = rep.all_pass && row.pass;
        *tracker = std::max(*tracker, row.residual);
        rep.rows.push_back(row);
    };
    const StorageSpec& st = sys.storage;
    const auto& D = s.duals;
    for (int i = 0; i < s.T; ++i) {
        const int t = i + 1;
        const ErrorMoments& m = sys.load.moments[i];
        const PeriodQuantiles& q = s.quantiles[i];
        const double phi = s.storage ? s.phi[i] : 1.0;
        // Clearing.
        const double flows = s.storage ? s.p[i] - s.b[i] : 0.0;
        add("balance", t, s.g[i] + flows - sys.load.forecast[i], qty_thr, &rep.max_quantity_residual);
        // Generator profit maximization.
        const double mc = marginal_expected_cost(sys.cost, s.g[i], phi, m);
        add("generator", t, mc - (s.lambda[i] + D.nu_lo[i] - D.nu_hi[i]), price_thr, &rep.max_price_residual);
        // Reserve allocation, generator side.
        const double dphi = ExpectedCostTerms(sys.cost, m).gradient(s.g[i], phi)[1];
        add("reserve_generator", t, dphi - s.pi[i] - D.nu_lo[i] * q.gen.lo + D.nu_hi[i] * q.gen.hi - (s.storage ? D.kappa_phi[i] : 0.0),
            reserve_thr, &rep.max_reserve_residual);
        if (!s.storage) continue;
        const double eta = st.eta;
        add("soc_recursion", t, s.e[i + 1] - (s.e[i] - s.p[i] / eta + s.b[i] * eta), qty_thr, &rep.max_quantity_residual);
        add("reserve_split", t, s.phi[i] + s.psi[i] - 1.0, 10 * tol, &rep.max_quantity_residual);
        add("storage_discharge", t,
            st.marginal_cost - s.lambda[i] + s.theta[i] / eta - D.beta_lo[i] + D.beta_hi[i] + D.iota_lo[i] / eta,
            price_thr, &rep.max_price_residual);
        add("storage_charge", t,
            s.lambda[i] - s.theta[i] * eta - D.alpha_lo[i] + D.alpha_hi[i] + D.iota_hi[i] * eta, price_thr,
            &rep.max_price_residual);
        const double soc_next = (t < s.T) ? s.theta[i] - s.theta[i + 1] - D.iota_lo[i + 1] + D.iota_hi[i + 1]
                                          : s.theta[i] - D.terminal + D.terminal_lo * -1.0 + D.terminal_hi;
        add("storage_soc", t, soc_next, price_thr, &rep.max_price_residual);
        add("reserve_storage", t,
            st.marginal_cost * m.mu - s.pi[i] - D.alpha_hi[i] * q.power.lo + D.beta_hi[i] * q.power.hi +
                D.iota_lo[i] * q.soc.hi / eta - D.iota_hi[i] * q.soc.lo * eta - D.kappa_psi[i] - D.psi_fixed[i],
            reserve_thr, &rep.max_reserve_residual);
    }
    return rep;
}

inline DispatchSolution extract_solution(const DispatchProgram& dp, const SolveResult& r, const SystemSpec& sys,
                                         bool certify = true) {
    DispatchSolution s;
    const VariableLayout& L = dp.layout;
    const double S = dp.power_base, rho = dp.price_base;
    s.status = r.status;
    s.message = "dispatch: " + r.message;
    s.T = L.T;
    s.storage = L.storage;
    s.quantiles = dp.quantiles;
    s.power_base = S;
    s.price_base = rho;
    s.residuals = r.residuals;
    s.degenerate = r.degenerate;
    s.iterations = r.iterations;
    s.objective = r.primal_objective * S * rho;
    const int T = L.T;
    auto vec = [T]() { return std::vector<double>(T, 0.0); };
    s.g = vec();
    s.p = vec();
    s.b = vec();
    s.phi = std::vector<double>(T, 1.0);
    s.psi = vec();
    s.e = std::vector<double>(T + 1, sys.storage.e_init);
    s.lambda = vec();
    s.theta = vec();
    s.pi = vec();
    InequalityDuals& D = s.duals;
    for (auto* v : {&D.nu_lo, &D.nu_hi, &D.alpha_lo, &D.alpha_hi, &D.beta_lo, &D.beta_hi, &D.iota_lo, &D.iota_hi,
                    &D.kappa_phi, &D.kappa_psi, &D.psi_fixed})
        *v = vec();
    for (int t = 1; t <= T; ++t) {
        s.g[t - 1] = r.x(L.g(t)) * S;
        if (L.storage) {
            s.p[t - 1] = r.x(L.p(t)) * S;
            s.b[t - 1] = r.x(L.b(t)) * S;
            s.phi[t - 1] = r.x(L.phi(t));
            s.psi[t - 1] = r.x(L.psi(t));
            s.e[t] = r.x(L.e_next(t)) * S;
        }
    }
    const auto& rows = dp.program.constraints.rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double y = r.duals(static_cast<Eigen::Index>(i));
        const int k = rows[i].tag.t - 1;
        switch (rows[i].tag.kind) {
            case RowKind::Balance: s.lambda[k] = rho * y; break;
            case RowKind::SocRecursion: s.theta[k] = rho * y; break;
            case RowKind::ReserveSplit: s.pi[k] = S * rho * y; break;
            case RowKind::GenLower: D.nu_lo[k] = rho * y; break;
            case RowKind::GenUpper: D.nu_hi[k] = rho * y; break;
            case RowKind::ChargeLower: D.alpha_lo[k] = rho * y; break;
            case RowKind::ChargeUpper: D.alpha_hi[k] = rho * y; break;
            case RowKind::DischargeLower: D.beta_lo[k] = rho * y; break;
            case RowKind::DischargeUpper: D.beta_hi[k] = rho * y; break;
            case RowKind::SocLower: D.iota_lo[k] = rho * y; break;
            case RowKind::SocUpper: D.iota_hi[k] = rho * y; break;
            case RowKind::PhiLower: D.kappa_phi[k] = S * rho * y; break;
            case RowKind::PsiLower: D.kappa_psi[k] = S * rho * y; break;
            case RowKind::PsiFixed: D.psi_fixed[k] = S * rho * y; break;
            case RowKind::Terminal: D.terminal = rho * y; break;
            case RowKind::TerminalLower: D.terminal_lo = rho * y; break;
            case RowKind::TerminalUpper: D.terminal_hi = rho * y; break;
            default: break;
        }
    }
    if (!L.storage) {
        // phi is pinned at 1, so the reserve price follows from the
        // generator-side allocation condition.
        for (int i = 0; i < T; ++i) {
            const double dphi = ExpectedCostTerms(sys.cost, sys.load.moments[i]).gradient(s.g[i], 1.0)[1];
            s.pi[i] = dphi - D.nu_lo[i] * s.quantiles[i].gen.lo + D.nu_hi[i] * s.quantiles[i].gen.hi;
        }
    }
    if (certify && s.optimal()) s.equilibrium = verify_equilibrium(s, sys);
    return s;
}

inline DispatchSolution solve_dispatch(const SystemSpec& sys) {
    const DispatchProgram dp = build_dispatch(sys);
    const SolveResult r = solve_convex(dp.program, sys.tol, sys.iter_cap);
    return extract_solution(dp, r, sys);
}

/// Price of energy carried into period 1 (the SoC multiplier one step
/// before the horizon). Equals -d(cost)/d(e_init) when the terminal SoC does
/// not itself depend on e_init (Free or Fixed terminal policy).
inline double initial_stock_value(const DispatchSolution& s) {
    if (!s.storage) return 0.0;
    return s.theta[0] + s.duals.iota_lo[0] - s.duals.iota_hi[0];
}

}  // namespace storage_pricer
