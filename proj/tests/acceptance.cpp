// Acceptance harness: one PASS/FAIL line per criterion, exit code 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "storage_pricer/storage_pricer.hpp"
#include "toy_systems.hpp"

using namespace storage_pricer;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<double> grid(double top, int n) {
    std::vector<double> g;
    for (int k = 0; k < n; ++k) g.push_back(top * k / (n - 1));
    return g;
}

// Optimal dispatches at epsilon = 0.05 from the random batch, reused for the
// violation check.
struct Solved {
    SystemSpec sys;
    DispatchSolution sol;
};
std::vector<Solved> solved_at_5pct;

// ---------------------------------------------------------------------------

Outcome kkt_certification() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eps[] = {0.01, 0.05, 0.1};
    int built = 0, rejected = 0, optimal = 0, bad_resid = 0, bad_agree = 0;
    double worst_resid = 0.0, worst_ratio = 1.0;
    // Below this both residuals are rounding noise and their ratio means nothing.
    const double floor = 1e-12;
    for (int k = 0; built < 50; ++k) {
        SynthParams p;
        p.seed = static_cast<std::uint64_t>(k + 1);
        p.epsilon = eps[k % 3];
        p.storage_ratio = 0.05 + 0.15 * u(rng);
        p.renewable_ratio = 0.1 + 0.3 * u(rng);
        p.sigma_scale = 0.5 + u(rng);
        p.eta = 0.85 + 0.12 * u(rng);
        p.M = 30 * u(rng);
        p.e_init_ratio = 0.2 + 0.6 * u(rng);
        p.fit_degree = 2 + k % 2;
        SystemSpec sys;
        try {
            sys = synth_test_system(p);
        } catch (const DomainError&) {
            ++rejected;  // e.g. net load dips below the fleet minimum; draw again
            continue;
        }
        ++built;
        const DispatchProgram dp = build_dispatch(sys);
        const SolveResult r = solve_convex(dp.program, sys.tol, sys.iter_cap);
        if (!r.optimal()) continue;
        ++optimal;
        worst_resid = std::max(worst_resid, r.residuals.max());
        bad_resid += r.residuals.max() > 1e-7;
        const KktReport kr = verify_kkt(dp.program, r);
        const double pairs[3][2] = {{r.residuals.stationarity, kr.sup.stationarity},
                                    {r.residuals.primal, kr.sup.primal},
                                    {r.residuals.complementarity, kr.sup.complementarity}};
        bool agree = true;
        for (const auto& pr : pairs) {
            const double a = std::max(pr[0], floor), b = std::max(pr[1], floor);
            worst_ratio = std::max({worst_ratio, a / b, b / a});
            agree = agree && a <= 10 * b && b <= 10 * a;
        }
        bad_agree += !agree;
        if (p.epsilon == 0.05) solved_at_5pct.push_back({sys, extract_solution(dp, r, sys)});
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = optimal > 0 && bad_resid == 0 && bad_agree == 0 && secs <= 60.0;
    o.detail = fmt("%d/50 optimal (%d invalid draws replaced), max residual %.2e, worst solver/verify_kkt ratio %.2f, "
                   "%.1f s",
                   optimal, rejected, worst_resid, worst_ratio, secs);
    return o;
}

// ---------------------------------------------------------------------------

// Minimum cost over storage schedules on a uniform net-flow grid, T = 3,
// sigma = 0, free terminal SoC.
double brute_cost(const SystemSpec& s, double e0, int levels) {
    const StorageSpec& st = s.storage;
    std::vector<double> u;
    for (int k = 0; k < levels; ++k) u.push_back(-st.p_max + 2 * st.p_max * k / (levels - 1));
    double best = std::numeric_limits<double>::infinity();
    auto step = [&](double e, double x) { return x >= 0 ? e - x / st.eta : e - x * st.eta; };
    auto stage = [&](int t, double x) {
        return s.cost.value(s.load.forecast[t] - x) + (x > 0 ? st.marginal_cost * x : 0.0);
    };
    for (double a : u) {
        const double e1 = step(e0, a);
        if (e1 < -1e-9 || e1 > st.e_max + 1e-9) continue;
        const double ca = stage(0, a);
        for (double b : u) {
            const double e2 = step(e1, b);
            if (e2 < -1e-9 || e2 > st.e_max + 1e-9) continue;
            const double cb = ca + stage(1, b);
            for (double c : u) {
                const double e3 = step(e2, c);
                if (e3 < -1e-9 || e3 > st.e_max + 1e-9) continue;
                best = std::min(best, cb + stage(2, c));
            }
        }
    }
    return best;
}

int sign(double x, double tol) { return x > tol ? 1 : (x < -tol ? -1 : 0); }

Outcome soc_monotonicity() {
    SynthParams p;
    p.fit_degree = 3;
    SystemSpec s = synth_test_system(p);
    s.terminal.policy = TerminalPolicy::Free;
    const SweepResult r = soc_sweep(s, grid(s.storage.e_max, 21));
    double mx = 0.0;
    for (const auto& pt : r.points) mx = std::max(mx, std::abs(pt.theta));
    const double first = r.points.front().theta, last = r.points.back().theta;
    const bool drained = last < 0.05 * first;

    SystemSpec toy3 = toy::system({150, 320, 260}, {0.0, 10.0, 0.02, 1e-4}, 0.0, 500.0,
                                  toy::battery(60, 120, 1.0, 0.0, 0), 0.0);
    toy3.terminal.policy = TerminalPolicy::Free;
    const std::vector<double> levels = grid(toy3.storage.e_max, 5);
    const double h = toy3.storage.e_max / 16;
    std::vector<double> dt, bt;
    for (double e0 : levels) {
        SystemSpec k = toy3;
        k.storage.e_init = e0;
        const DispatchSolution sol = solve_dispatch(k);
        if (!sol.optimal()) return {false, "T=3 toy dispatch not optimal: " + sol.message};
        dt.push_back(initial_stock_value(sol));
        const double lo = std::max(0.0, e0 - h), hi = std::min(toy3.storage.e_max, e0 + h);
        bt.push_back(-(brute_cost(toy3, hi, 121) - brute_cost(toy3, lo, 121)) / (hi - lo));
    }
    bool order = true;
    for (std::size_t k = 1; k < levels.size(); ++k) {
        const int a = sign(dt[k] - dt[k - 1], 1e-3), b = sign(bt[k] - bt[k - 1], 1e-3);
        order = order && a == b && a <= 0;
    }
    Outcome o;
    o.pass = r.verdict && order && drained;
    o.detail = fmt("max violation %.2e (limit %.2e), theta %.3f -> %.3f $/MWh, brute-force ordering %s",
                   r.max_violation, 1e-6 * mx, first, last, order ? "matches" : "differs");
    return o;
}

// ---------------------------------------------------------------------------

Outcome sigma_monotonicity() {
    const std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    SynthParams p;
    p.fit_degree = 2;
    SystemSpec quad = synth_test_system(p);
    quad.storage_reserve = false;
    const SweepResult rq = sigma_sweep(quad, scales, true);
    const bool quad_ok = rq.max_violation <= 1e-6;
    p.fit_degree = 3;
    SystemSpec cub = synth_test_system(p);
    cub.storage_reserve = false;
    const SweepResult rc = sigma_sweep(cub, scales, false);

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    bool fd_ok = true;
    for (int k = 0; k < 1000; ++k) {
        const int deg = 2 + k % 3;
        std::vector<double> c(deg + 1);
        for (auto& v : c) v = 0.01 + u(rng);
        const CostPolynomial poly(c);
        const double g = 0.5 + 2 * u(rng), phi = u(rng), eta = 0.5 + 0.5 * u(rng);
        const ErrorMoments m{u(rng) - 0.5, 0.1 + u(rng)};
        const double h = 1e-3 * m.sigma;
        const double fd = (slack_charging_theta(poly, g, phi, {m.mu, m.sigma + h}, eta) -
                           slack_charging_theta(poly, g, phi, {m.mu, m.sigma - h}, eta)) /
                          (2 * h);
        const double cf = theta_sigma_derivative(poly, g, phi, m, eta);
        if (deg == 2) {
            fd_ok = fd_ok && cf == 0.0 && std::abs(fd) <= 1e-9;
        } else {
            const double rel = std::abs(fd - cf) / std::abs(cf);
            worst = std::max(worst, rel);
            fd_ok = fd_ok && rel <= 1e-6;
        }
    }
    Outcome o;
    o.pass = quad_ok && rc.verdict && fd_ok;
    o.detail = fmt("quadratic spread %.2e, cubic %s (%s), worst closed-form rel. error %.2e", rq.max_violation,
                   rc.verdict ? "strictly increasing" : "not increasing", rc.note.empty() ? "all points used" : rc.note.c_str(),
                   worst);
    return o;
}

// ---------------------------------------------------------------------------

// Jensen gap at the peak-load period with the full error routed through the
// generators (phi = 1), where the curvature of the marginal cost shows.
JensenGap peak_gap(int degree) {
    SynthParams p;
    p.fit_degree = degree;
    const SystemSpec s = synth_test_system(p);
    const DispatchSolution sol = solve_dispatch(s);
    if (!sol.optimal()) throw SolverError("jensen dispatch: " + sol.message);
    int peak = 0;
    for (int t = 1; t < s.T; ++t)
        if (sol.g[t] > sol.g[peak]) peak = t;
    return jensen_gap(s.cost, sol.g[peak], 1.0, s.load.moments[peak], s.storage.eta, 100000, 1);
}

Outcome jensen() {
    const JensenGap c = peak_gap(3), q = peak_gap(2);
    Outcome o;
    o.pass = c.gap > 3 * c.standard_error && std::abs(q.gap) <= 3 * q.standard_error;
    o.detail = fmt("cubic gap %.4g (%.1f SE), quadratic gap %.3g (%.2f SE)", c.gap, c.gap / c.standard_error, q.gap,
                   q.gap / q.standard_error);
    return o;
}

// ---------------------------------------------------------------------------

SystemSpec cubic_toy(double eta, double M, double sigma) {
    SystemSpec s = toy::system({120, 260, 330, 180}, {0.0, 10.0, 0.02, 1e-4}, 0.0, 500.0,
                               toy::battery(60, 180, eta, M, 90), sigma);
    s.terminal.policy = TerminalPolicy::Free;
    return s;
}

std::vector<SystemSpec> battery() {
    std::vector<SystemSpec> out;
    // Small storage cannot cover the reserve at 1.5x sigma, so that pair is left out.
    const std::pair<double, double> pairs[] = {{0.02, 0.5}, {0.02, 0.75}, {0.02, 1.0}, {0.05, 0.5}, {0.05, 1.0},
                                               {0.05, 1.5}, {0.2, 0.5},   {0.2, 1.0},   {0.2, 1.5}};
    for (const auto& [ratio, scale] : pairs) {
        SynthParams p;
        p.storage_ratio = ratio;
        p.sigma_scale = scale;
        p.seed = static_cast<std::uint64_t>(10 * ratio + scale);
        out.push_back(synth_test_system(p));
    }
    SynthParams p;
    p.storage_ratio = 0.05;
    p.M = 5.0;
    p.epsilon = 0.01;
    out.push_back(synth_test_system(p));
    out.push_back(cubic_toy(0.9, 2.0, 10.0));
    SystemSpec biased = cubic_toy(0.85, 4.0, 12.0);
    for (auto& m : biased.load.moments) m.mu = 3.0;
    out.push_back(biased);
    return out;
}

Outcome coupling_and_bounds() {
    int systems = 0, coupling_rows = 0, bound_rows = 0, failed = 0;
    double worst_rel = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const SystemSpec& s : battery()) {
        const DispatchSolution sol = solve_dispatch(s);
        if (!sol.optimal()) return {false, "battery system " + std::to_string(systems) + " not optimal: " + sol.message};
        ++systems;
        const CouplingReport c = check_price_coupling(sol, s);
        coupling_rows += c.checked;
        worst_rel = std::max(worst_rel, c.max_rel_error);
        failed += !c.all_pass;
        const BoundsReport b = check_price_bounds(sol, s);
        failed += !b.all_pass;
        for (const auto& row : b.rows) {
            ++bound_rows;
            lo = std::min(lo, row.theta_prev);
            hi = std::max(hi, row.theta_prev);
        }
    }
    Outcome o;
    o.pass = failed == 0 && coupling_rows > 0;
    o.detail = fmt("%d systems, %d coupling rows (max rel. error %.2e), %d bound rows, theta in [%.2f, %.2f] $/MWh",
                   systems, coupling_rows, worst_rel, bound_rows, lo, hi);
    return o;
}

// ---------------------------------------------------------------------------

Outcome ideal_storage_gap() {
    SynthParams p;
    p.eta = 1.0;
    p.M = 0.0;
    SystemSpec s = synth_test_system(p);
    s.terminal.policy = TerminalPolicy::Free;
    const double gap_syn = ideal_slope_gap(soc_sweep(s, grid(s.storage.e_max, 21)));
    const SystemSpec t = cubic_toy(1.0, 0.0, 10.0);
    const double gap_toy = ideal_slope_gap(soc_sweep(t, grid(t.storage.e_max, 21)));
    Outcome o;
    o.pass = gap_syn <= 1e-6 && gap_toy <= 1e-6;
    o.detail = fmt("slope gap %.2e (synthetic), %.2e (cubic toy)", gap_syn, gap_toy);
    return o;
}

// ---------------------------------------------------------------------------

Outcome chance_validity() {
    const int n = 10000;
    const double se = std::sqrt(0.05 * 0.95 / n);
    const double limit = 0.05 + 2 * se;
    std::vector<Solved> cases = solved_at_5pct;
    const SystemSpec def = synth_test_system(SynthParams{});
    cases.push_back({def, solve_dispatch(def)});
    int checked = 0, over = 0, over_single = 0;
    double worst = 0.0, worst_single = 0.0, single_limit = 0.0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        if (!cases[k].sol.optimal()) continue;
        ++checked;
        const ViolationReport r = empirical_violation_rate(cases[k].sol, cases[k].sys, n, 100 + k);
        worst = std::max(worst, r.worst_joint());
        over += r.worst_joint() > limit;
        // The storage power rows are individual constraints that bind at
        // exactly epsilon, 2T of them per solution: the largest of their
        // rates is held to a family-wise 5% limit instead.
        const double rows = 2.0 * cases[k].sys.T;
        single_limit = 0.05 + gaussian_quantile(0.05 / rows) * se;
        const double w = std::max(r.worst(r.charge_hi), r.worst(r.discharge_hi));
        worst_single = std::max(worst_single, w);
        over_single += w > single_limit;
    }
    const double e = 0.05;
    const double na = robust_quantile(RobustShape::NA, e), s = robust_quantile(RobustShape::S, e),
                 un = robust_quantile(RobustShape::U, e), su = robust_quantile(RobustShape::SU, e);
    const bool table = std::abs(na - 4.3589) <= 1e-4 && std::abs(s - 3.1623) <= 1e-4 && std::abs(un - 2.8087) <= 1e-4 &&
                       std::abs(su - 2.1082) <= 1e-4 && na >= s && s >= un && un >= su;
    Outcome o;
    o.pass = checked > 0 && over == 0 && over_single == 0 && table;
    o.detail = fmt("%d solutions, worst joint rate %.4f (limit %.4f), worst storage power row %.4f (family-wise limit "
                   "%.4f); quantiles %.4f >= %.4f >= %.4f >= %.4f",
                   checked, worst, limit, worst_single, single_limit, na, s, un, su);
    return o;
}

// ---------------------------------------------------------------------------

struct RiskPoint {
    double cost = 0.0, mean_lambda = 0.0, reserve = 0.0;
    // Resolution of each metric: the solver recovers per-unit duals to about
    // 1e-6, so a reserve price that is zero up to that level reads as flat.
    double cost_tol = 0.0, lambda_tol = 0.0, reserve_tol = 0.0;
};

std::vector<RiskPoint> risk_path(SynthParams p, const std::vector<double>& eps) {
    std::vector<RiskPoint> out;
    for (double e : eps) {
        p.epsilon = e;
        const SystemSpec s = synth_test_system(p);
        const DispatchSolution sol = solve_dispatch(s);
        if (!sol.optimal()) throw SolverError("risk sweep at epsilon " + std::to_string(e) + ": " + sol.message);
        RiskPoint r;
        r.cost = sol.objective;
        r.cost_tol = 1e-6 * std::abs(sol.objective);
        r.lambda_tol = 1e-6 * sol.price_base;
        r.reserve_tol = 1e-6 * sol.price_base * sol.power_base * s.T;
        for (int t = 0; t < s.T; ++t) {
            r.mean_lambda += sol.lambda[t] / s.T;
            r.reserve += sol.pi[t];
        }
        out.push_back(r);
    }
    return out;
}

bool weakly_increasing(const std::vector<RiskPoint>& v, double RiskPoint::*f, double RiskPoint::*tol) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k].*f < v[k - 1].*f - std::max(v[k].*tol, v[k - 1].*tol)) return false;
    return true;
}

Outcome risk_direction() {
    // Decreasing epsilon, so every metric should be non-decreasing along the path.
    const std::vector<double> eps{0.1, 0.075, 0.05, 0.025, 0.01};
    std::string detail;
    bool pass = true;
    for (double ratio : {0.2, 0.05}) {
        SynthParams p;
        p.storage_ratio = ratio;
        const auto v = risk_path(p, eps);
        const bool c = weakly_increasing(v, &RiskPoint::cost, &RiskPoint::cost_tol);
        const bool l = weakly_increasing(v, &RiskPoint::mean_lambda, &RiskPoint::lambda_tol);
        const bool r = weakly_increasing(v, &RiskPoint::reserve, &RiskPoint::reserve_tol);
        pass = pass && c && l && r;
        detail += fmt("%sstorage %.2f: cost %.0f->%.0f %s, mean lambda %.3f->%.3f %s, sum pi %.2f->%.2f %s",
                      detail.empty() ? "" : "; ", ratio, v.front().cost, v.back().cost, c ? "ok" : "NOT monotone",
                      v.front().mean_lambda, v.back().mean_lambda, l ? "ok" : "NOT monotone", v.front().reserve,
                      v.back().reserve, r ? "ok" : "NOT monotone");
    }
    return {pass, detail};
}

// ---------------------------------------------------------------------------

double enumerate_best(const std::vector<double>& prices, const StorageSpec& s, int knots, int start) {
    const double step = s.e_max / (knots - 1);
    const int T = static_cast<int>(prices.size());
    double best = -std::numeric_limits<double>::infinity();
    std::function<void(int, int, double)> walk = [&](int t, int k, double acc) {
        if (t == T) {
            best = std::max(best, acc);
            return;
        }
        for (int j = 0; j < knots; ++j) {
            const double de = (j - k) * step;
            const double b = de > 0 ? de / s.eta : 0.0;
            const double p = de < 0 ? -de * s.eta : 0.0;
            if (b > s.p_max * (1 + 1e-12) || p > s.p_max * (1 + 1e-12)) continue;
            if (p > 0 && prices[t] < 0) continue;
            walk(t + 1, j, acc + prices[t] * (p - b) - s.marginal_cost * p);
        }
    };
    walk(0, start, 0.0);
    return best;
}

Outcome dp_baseline() {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> price(-20, 80), knots(2, 5), horizon(1, 3);
    int toys = 0, mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int T = horizon(rng), G = knots(rng);
        std::vector<double> prices(T);
        for (auto& p : prices) p = price(rng);
        // Integer data keeps both sides exact.
        const StorageSpec s = toy::battery(8.0 * (G - 1), 4.0 * (G - 1), 1.0, trial % 4, 0);
        const ValueFunction vf = dp_value_function(prices, s, G);
        ++toys;
        for (int k = 0; k < G; ++k) mismatches += vf.V[0][k] != enumerate_best(prices, s, G, k);
    }

    const StorageSpec big = toy::battery(2600, 10400, 0.95, 20, 5200);
    const int G = grid_size_for_levels(big);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int concave = 0;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> prices(24);
        for (auto& p : prices) p = 15 + 50 * u(rng);
        const ValueFunction vf = dp_value_function(prices, big, G);
        concave += vf.concave;
        worst = std::max(worst, vf.max_concavity_violation);
    }

    // Negative prices: the DP never discharges, and neither does clearing.
    const StorageSpec s = toy::battery(10, 40, 0.9, 0, 20);
    const std::vector<double> prices{30, -5, 60, -1, 40};
    const ValueFunction vf = dp_value_function(prices, s, grid_size_for_levels(s));
    bool dp_rule = true;
    for (int t = 0; t < 5; ++t)
        if (prices[t] < 0)
            for (int k = 0; k < vf.knots(); ++k) dp_rule = dp_rule && vf.policy[t][k] >= k;
    SystemSpec sys = toy::system({50, 200, 300}, {0.0, 10.0, 0.05}, 80.0, 500.0, toy::battery(40, 200, 0.9, 0.0, 20.0));
    sys.storage_reserve = false;
    sys.terminal.policy = TerminalPolicy::Free;
    BidCurve bc;
    bc.periods.push_back({20, {{18, 15}}, {{40, -10}}});
    bc.periods.push_back({50, {{40, 30}}, {{40, 5}}});
    bc.periods.push_back({50, {{40, 30}}, {{40, 5}}});
    const DispatchSolution c = clear_with_bids(sys, bc);
    const bool clear_rule = c.optimal() && c.lambda[0] < 0 && std::abs(c.p[0]) <= 1e-6 * sys.storage.p_max;

    Outcome o;
    o.pass = mismatches == 0 && concave == 100 && dp_rule && clear_rule;
    o.detail = fmt("%d toys, %d enumeration mismatches; %d/100 concave (worst %.2e); negative-price rule %s/%s",
                   toys, mismatches, concave, worst, dp_rule ? "ok" : "violated", clear_rule ? "ok" : "violated");
    return o;
}

// ---------------------------------------------------------------------------

Outcome welfare_dominance() {
    const auto t0 = Clock::now();
    SynthParams p;
    p.retire_frac = 0.2;
    const SystemSpec s = synth_test_system(p);
    const ComparisonResult r = compare_mechanisms(s, 200, 1);
    const double secs = seconds_since(t0);
    const bool cost_ok = r.mean_welfare.system_cost <= r.mean_bids.system_cost;
    const bool pay_ok = r.batches > 0 && r.batches_payment_lower >= 0.8 * r.batches;
    Outcome o;
    o.pass = cost_ok && pay_ok && r.failures == 0 && secs <= 600.0;
    o.detail = fmt("welfare vs bids reduction: system cost %.2f%%, payment %.2f%%, storage profit %.2f%%, gen cost "
                   "%.2f%%; payment lower in %d/%d batches; %d failures; %.0f s",
                   r.system_cost_delta_pct, r.payment_delta_pct, r.profit_delta_pct, r.gen_cost_delta_pct,
                   r.batches_payment_lower, r.batches, r.failures, secs);
    return o;
}

// ---------------------------------------------------------------------------

Outcome distribution_fit() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int recovered = 0;
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        VersatileParams truth;
        truth.a = 0.5 + 2.5 * u(rng);
        truth.b = 0.5 + 2.5 * u(rng);
        // Location measured in units of the scale 1/a, kept away from 0 so a
        // relative tolerance on it is meaningful.
        truth.c = (u(rng) < 0.5 ? -1.0 : 1.0) * (1.0 + 2.0 * u(rng)) / truth.a;
        auto srng = make_stream(500 + k, 0);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = versatile_quantile(truth, uniform_open(srng));
        const VersatileFit f = fit_versatile_mle(xs);
        const double e = std::max({std::abs(f.params.a / truth.a - 1), std::abs(f.params.b / truth.b - 1),
                                   std::abs(f.params.c / truth.c - 1)});
        worst = std::max(worst, e);
        recovered += e <= 0.05;
    }
    double round_trip = 0.0;
    for (double a : {0.3, 1.0, 4.0})
        for (double b : {0.4, 1.0, 6.0})
            for (double c : {-2.0, 0.0, 1.5})
                for (int i = 1; i < 100; ++i) {
                    const double eps = i / 100.0;
                    const double x = versatile_inverse_cdf(a, b, c, eps);
                    round_trip = std::max(round_trip, std::abs(versatile_cdf({a, b, c}, x) - (1 - eps)));
                }
    Outcome o;
    o.pass = recovered == 10 && round_trip <= 1e-9;
    o.detail = fmt("%d/10 truths within 5%% (worst %.2f%%), CDF round-trip error %.2e", recovered, 100 * worst,
                   round_trip);
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"KKT certification", kkt_certification},
        {"SoC monotonicity", soc_monotonicity},
        {"sigma monotonicity", sigma_monotonicity},
        {"Jensen gap", jensen},
        {"price coupling and bounds", coupling_and_bounds},
        {"ideal storage slope gap", ideal_storage_gap},
        {"chance-constraint validity", chance_validity},
        {"risk-aversion direction", risk_direction},
        {"DP baseline", dp_baseline},
        {"welfare dominance", welfare_dominance},
        {"distribution fitting", distribution_fit},
    };
    int failed = 0, k = 0;
    for (const auto& [name, run] : criteria) {
        ++k;
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("CRITERION %2d %s: %s (%s) [%.1f s]\n", k, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", k - failed, k);
    return failed ? 1 : 0;
}
