#pragma once

// Profit-maximizing storage benchmark: Monte Carlo price simulation, SoC-grid
// dynamic programming, bids from the value function, bid-based clearing and
// the metric comparison against welfare-maximizing dispatch.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "storage_pricer/costs.hpp"
#include "storage_pricer/csv.hpp"
#include "storage_pricer/dispatch.hpp"
#include "storage_pricer/errors.hpp"
#include "storage_pricer/parallel.hpp"
#include "storage_pricer/scenarios.hpp"
#include "storage_pricer/solver.hpp"

namespace storage_pricer {

// ---------------------------------------------------------------------------
// Price scenarios

struct PriceScenarioSet {
    Eigen::MatrixXd lambda;  // scenario x period, $/MWh
    Eigen::MatrixXd load;    // realized net load used for each scenario, MW
    std::vector<int> clipped;  // periods clipped to the fleet range, per scenario
    std::uint64_t seed = 0;
    std::string source;

    int size() const { return static_cast<int>(lambda.rows()); }
    std::vector<double> mean_path() const {
        std::vector<double> m(static_cast<std::size_t>(lambda.cols()));
        for (int t = 0; t < lambda.cols(); ++t) m[t] = lambda.col(t).mean();
        return m;
    }
};

namespace detail {

// Deterministic copy of the system on one realized load path.
inline SystemSpec realized_system(const SystemSpec& sys, const Eigen::RowVectorXd& load) {
    SystemSpec s = sys;
    for (int t = 0; t < s.T; ++t) {
        s.load.forecast[t] = load(t);
        s.load.moments[t] = {0.0, 0.0};
    }
    return s;
}

}  // namespace detail

/// Draws net-load paths and prices each with a deterministic dispatch of
/// the fleet alone (storage left out, so the prices are the ones a
/// price-taking bidder forecasts). Loads outside [G_min, G_max] are clipped
/// and counted.
inline PriceScenarioSet simulate_price_scenarios(const SystemSpec& sys, int n, std::uint64_t seed, int threads = 0) {
    if (n < 1) throw DomainError("simulate_price_scenarios: need at least one scenario");
    PriceScenarioSet set;
    set.seed = seed;
    set.source = "monte-carlo net load (" + sys.load.model.name() + "), fleet-only deterministic dispatch";
    set.load = sample_net_load(sys.load, n, seed, threads);
    set.lambda.resize(n, sys.T);
    set.clipped.assign(n, 0);
    parallel_for(
        n,
        [&](int i) {
            for (int t = 0; t < sys.T; ++t) {
                const double x = set.load(i, t);
                const double c = std::clamp(x, sys.g_min, sys.g_max);
                if (c != x) ++set.clipped[i];
                set.load(i, t) = c;
            }
            SystemSpec s = detail::realized_system(sys, set.load.row(i));
            s.storage.p_max = 0.0;
            s.storage.e_max = 0.0;
            s.storage.e_init = 0.0;
            const DispatchSolution sol = solve_dispatch(s);
            if (!sol.optimal()) throw SolverError("price scenario " + std::to_string(i) + ": " + sol.message);
            for (int t = 0; t < sys.T; ++t) set.lambda(i, t) = sol.lambda[t];
        },
        threads);
    return set;
}

// ---------------------------------------------------------------------------
// Value function

struct ValueFunction {
    std::vector<double> grid;                // SoC knots, MWh
    std::vector<std::vector<double>> V;      // V[t][k]: value-to-go before period t+1 acts, t = 0..T
    std::vector<std::vector<int>> policy;    // policy[t][k]: knot reached after period t+1
    double step = 0.0;
    bool concave = true;
    double max_concavity_violation = 0.0;  // $/MWh
    bool monotone = true;                   // non-decreasing in e at every stage

    int T() const { return static_cast<int>(V.size()) - 1; }
    int knots() const { return static_cast<int>(grid.size()); }

    /// Slope of V[t] on the piece between knots j and j+1.
    double slope(int t, int j) const { return (V[t][j + 1] - V[t][j]) / step; }

    double value(int t, double e) const {
        const double x = std::clamp(e / step, 0.0, static_cast<double>(knots() - 1));
        const int j = std::min(static_cast<int>(x), knots() - 2);
        return V[t][j] + (x - j) * (V[t][j + 1] - V[t][j]);
    }
};

/// Knots needed for `levels` charge steps of one SoC grid spacing each.
inline int grid_size_for_levels(const StorageSpec& s, int levels = 21) {
    if (!s.enabled()) throw ConfigError("grid_size_for_levels: storage is disabled");
    const double step = s.p_max * s.eta / levels;
    return static_cast<int>(std::ceil(s.e_max / step - 1e-9)) + 1;
}

/// Backward recursion V_{t-1}(e) = max lambda_t (p - b) - M p + V_t(e')
/// over moves between SoC knots that respect the power limits; no
/// discharge when lambda_t < 0. Every knot move is a candidate, so the
/// result is exact for schedules on the grid. Ending below
/// min_terminal_soc costs more per MWh than any trade can earn.
inline ValueFunction dp_value_function(const std::vector<double>& prices, const StorageSpec& s, int grid_size,
                                       double terminal_value = 0.0, double min_terminal_soc = 0.0) {
    validate(s);
    if (!s.enabled()) throw ConfigError("dp_value_function: storage is disabled");
    if (prices.empty()) throw DomainError("dp_value_function: empty price path");
    if (grid_size < 2) throw ConfigError("dp_value_function: need at least 2 SoC knots");
    for (double p : prices)
        if (!std::isfinite(p)) throw DomainError("dp_value_function: non-finite price");
    ValueFunction vf;
    const int G = grid_size, T = static_cast<int>(prices.size());
    vf.step = s.e_max / (G - 1);
    if (vf.step > s.p_max * s.eta * (1 + 1e-12))
        throw ConfigError("dp_value_function: SoC grid step " + fmt(vf.step) + " MWh exceeds the largest charge step " +
                          fmt(s.p_max * s.eta) + " MWh; use at least " +
                          std::to_string(grid_size_for_levels(s, 1)) + " knots");
    for (int k = 0; k < G; ++k) vf.grid.push_back(vf.step * k);
    vf.V.assign(T + 1, std::vector<double>(G, 0.0));
    vf.policy.assign(T, std::vector<int>(G, 0));
    double top = std::abs(terminal_value);
    for (double p : prices) top = std::max(top, std::abs(p));
    const double penalty = 2.0 * (top / s.eta + s.marginal_cost) + 1.0;
    const double floor_e = std::clamp(min_terminal_soc, 0.0, s.e_max) - 1e-9 * std::max(1.0, s.e_max);
    for (int k = 0; k < G; ++k)
        vf.V[T][k] = terminal_value * vf.grid[k] - penalty * std::max(0.0, floor_e - vf.grid[k]);
    const double slack = 1 + 1e-12;
    const int up = static_cast<int>(std::floor(s.p_max * s.eta / vf.step * slack));
    const int down = static_cast<int>(std::floor(s.p_max / (s.eta * vf.step) * slack));
    for (int t = T - 1; t >= 0; --t) {
        const double lam = prices[t];
        for (int k = 0; k < G; ++k) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = k;
            const int lo = lam < 0.0 ? k : std::max(0, k - down);
            const int hi = std::min(G - 1, k + up);
            // Visit the idle move first so ties keep the storage still.
            auto consider = [&](int j) {
                const double de = (j - k) * vf.step;
                double reward = 0.0;
                if (de > 0)
                    reward = -lam * de / s.eta;
                else if (de < 0)
                    reward = (lam - s.marginal_cost) * (-de * s.eta);
                const double v = reward + vf.V[t + 1][j];
                if (v > best) {
                    best = v;
                    arg = j;
                }
            };
            consider(k);
            for (int j = lo; j <= hi; ++j)
                if (j != k) consider(j);
            vf.V[t][k] = best;
            vf.policy[t][k] = arg;
        }
        double scale = 1.0;
        for (double v : vf.V[t]) scale = std::max(scale, std::abs(v) / std::max(1.0, s.e_max));
        for (int j = 0; j + 2 < G; ++j) {
            const double viol = vf.slope(t, j + 1) - vf.slope(t, j);
            vf.max_concavity_violation = std::max(vf.max_concavity_violation, viol);
            if (viol > 1e-9 * scale) vf.concave = false;
        }
        bool nonneg = true;
        for (int u = t; u < T; ++u) nonneg = nonneg && prices[u] >= 0.0;
        if (nonneg)
            for (int j = 0; j + 1 < G; ++j)
                if (vf.slope(t, j) < -1e-9 * scale) vf.monotone = false;
    }
    return vf;
}

/// Lowest ending SoC the market clearing accepts under the system's
/// terminal policy.
inline double terminal_soc_floor(const SystemSpec& sys) {
    switch (sys.terminal.policy) {
        case TerminalPolicy::Periodic: return sys.storage.e_init;
        case TerminalPolicy::Fixed: return sys.terminal.value;
        case TerminalPolicy::Free: return 0.0;
    }
    return 0.0;
}

/// SoC path (T + 1 entries) obtained by following the DP policy from the
/// knot nearest to e_init.
inline std::vector<double> reference_trajectory(const ValueFunction& vf, double e_init) {
    int k = static_cast<int>(std::lround(std::clamp(e_init / vf.step, 0.0, static_cast<double>(vf.knots() - 1))));
    std::vector<double> path{vf.grid[k]};
    for (int t = 0; t < vf.T(); ++t) {
        k = vf.policy[t][k];
        path.push_back(vf.grid[k]);
    }
    return path;
}

// ---------------------------------------------------------------------------
// Bids

struct BidStep {
    double quantity = 0.0;  // MW
    double price = 0.0;     // $/MWh
};

struct PeriodBids {
    double anchor_soc = 0.0;        // SoC the steps are read from, MWh
    std::vector<BidStep> offer;     // discharge offer O_t, in dispatch order
    std::vector<BidStep> bid;       // charge bid B_t, in dispatch order
};

struct BidCurve {
    std::vector<PeriodBids> periods;
};

/// Step offers/bids read off the value function along SoC depletion and
/// accumulation from each anchor: O = M + v/eta, B = eta v, where v is the
/// slope of the value-to-go after the period acts. Anchors default to the
/// DP reference trajectory.
inline BidCurve bids_from_value(const ValueFunction& vf, const StorageSpec& s, std::vector<double> anchors = {}) {
    const int T = vf.T();
    if (anchors.empty()) anchors = reference_trajectory(vf, s.e_init);
    if (static_cast<int>(anchors.size()) < T) throw DomainError("bids_from_value: need one anchor per period");
    BidCurve bc;
    const double tiny = 1e-12 * std::max(1.0, s.e_max);
    for (int t = 1; t <= T; ++t) {
        PeriodBids pb;
        const double ea = std::clamp(anchors[t - 1], 0.0, s.e_max);
        pb.anchor_soc = ea;
        // Discharge: walk the SoC down.
        double e = ea, sold = 0.0;
        while (e > tiny && sold < s.p_max - 1e-12 * s.p_max) {
            int j = static_cast<int>(std::ceil(e / vf.step - 1e-9)) - 1;  // piece [j, j+1] below e
            j = std::clamp(j, 0, vf.knots() - 2);
            const double floor_e = vf.grid[j];
            double de = e - floor_e;
            double q = de * s.eta;
            if (sold + q > s.p_max) {
                q = s.p_max - sold;
                de = q / s.eta;
            }
            if (q <= 0.0) break;
            pb.offer.push_back({q, s.marginal_cost + vf.slope(t, j) / s.eta});
            sold += q;
            e -= de;
        }
        // Charge: walk the SoC up.
        e = ea;
        double bought = 0.0;
        while (e < s.e_max - tiny && bought < s.p_max - 1e-12 * s.p_max) {
            int j = static_cast<int>(std::floor(e / vf.step + 1e-9));
            j = std::clamp(j, 0, vf.knots() - 2);
            const double ceil_e = vf.grid[j + 1];
            double de = ceil_e - e;
            double q = de / s.eta;
            if (bought + q > s.p_max) {
                q = s.p_max - bought;
                de = q * s.eta;
            }
            if (q <= 0.0) break;
            pb.bid.push_back({q, s.eta * vf.slope(t, j)});
            bought += q;
            e += de;
        }
        bc.periods.push_back(std::move(pb));
    }
    return bc;
}

/// Single-step curves at given opportunity prices: O = M + theta/eta and
/// B = eta theta for the full power rating.
inline BidCurve bids_from_prices(const std::vector<double>& theta, const StorageSpec& s) {
    BidCurve bc;
    for (double th : theta) {
        PeriodBids pb;
        pb.offer.push_back({s.p_max, s.marginal_cost + th / s.eta});
        pb.bid.push_back({s.p_max, s.eta * th});
        bc.periods.push_back(pb);
    }
    return bc;
}

/// Clears the market with storage represented by its bids: generator
/// expected cost plus offer cost minus bid value, subject to balance, SoC
/// dynamics and the chance-constrained limits with reserve carried by
/// generators (phi = 1, psi = 0). Offer cost and bid value enter through
/// epigraph variables. Returns a dispatch-shaped solution; lambda is the
/// balance dual. No equilibrium certificate is attached.
inline DispatchSolution clear_with_bids(const SystemSpec& sys_in, const BidCurve& bids) {
    SystemSpec sys = sys_in;
    sys.storage_reserve = false;
    if (!sys.storage.enabled()) return solve_dispatch(sys);
    if (static_cast<int>(bids.periods.size()) != sys.T)
        throw DomainError("clear_with_bids: bids cover " + std::to_string(bids.periods.size()) + " periods, horizon is " +
                          std::to_string(sys.T));
    DispatchProgram dp = build_dispatch(sys);
    const VariableLayout& L = dp.layout;
    const double S = dp.power_base, rho = dp.price_base;
    const int n0 = dp.program.n, T = sys.T;
    const int n = n0 + 2 * T;  // + offer-cost and negated bid-value epigraph variables
    auto co = [n0](int t) { return n0 + 2 * (t - 1); };
    auto cb = [n0](int t) { return n0 + 2 * (t - 1) + 1; };

    LinearConstraintSet rows = dp.program.constraints;
    rows.num_vars = n;
    for (int t = 1; t <= T; ++t) {
        const auto& pb = bids.periods[t - 1];
        double q0 = 0.0, cost = 0.0;
        int sub = 0;
        // c_o >= A_k + O_k (p - Q_k) for every offer step; p <= offered quantity.
        if (pb.offer.empty()) rows.add({{{co(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::BidEpigraph, t, ++sub}});
        for (const auto& st : pb.offer) {
            const double a = st.price / rho;
            rows.add({{{L.p(t), a}, {co(t), -1.0}}, Sense::LessEqual, a * q0 / S - cost / (S * rho),
                      {RowKind::BidEpigraph, t, ++sub}});
            q0 += st.quantity;
            cost += st.price * st.quantity;
        }
        rows.add({{{L.p(t), 1.0}}, Sense::LessEqual, q0 / S, {RowKind::BidEpigraph, t, ++sub}});
        // c_b >= -(A_k + B_k (b - Q_k)) for every bid step; b <= bid quantity.
        q0 = 0.0;
        double value = 0.0;
        if (pb.bid.empty()) rows.add({{{cb(t), -1.0}}, Sense::LessEqual, 0.0, {RowKind::BidEpigraph, t, ++sub}});
        for (const auto& st : pb.bid) {
            const double a = st.price / rho;
            rows.add({{{L.b(t), -a}, {cb(t), -1.0}}, Sense::LessEqual, -a * q0 / S + value / (S * rho),
                      {RowKind::BidEpigraph, t, ++sub}});
            q0 += st.quantity;
            value += st.price * st.quantity;
        }
        rows.add({{{L.b(t), 1.0}}, Sense::LessEqual, q0 / S, {RowKind::BidEpigraph, t, ++sub}});
    }
    rows.validate();

    // Replace the storage marginal cost by the epigraph variables.
    const double Ms = sys.storage.marginal_cost / rho;
    ConvexProgram prog;
    prog.n = n;
    prog.quadratic = dp.program.quadratic;
    const auto f0 = dp.program.objective;
    const auto g0 = dp.program.gradient;
    const auto h0 = dp.program.hessian;
    prog.objective = [f0, Ms, L, n0, T](const VectorXd& x) {
        double f = f0(x.head(n0));
        for (int t = 1; t <= T; ++t) f += -Ms * x(L.p(t)) + x(n0 + 2 * (t - 1)) + x(n0 + 2 * (t - 1) + 1);
        return f;
    };
    prog.gradient = [g0, Ms, L, n0, n, T](const VectorXd& x) {
        VectorXd g = VectorXd::Zero(n);
        g.head(n0) = g0(x.head(n0));
        for (int t = 1; t <= T; ++t) {
            g(L.p(t)) -= Ms;
            g(n0 + 2 * (t - 1)) = 1.0;
            g(n0 + 2 * (t - 1) + 1) = 1.0;
        }
        return g;
    };
    prog.hessian = [h0, n0, n](const VectorXd& x) {
        MatrixXd H = MatrixXd::Zero(n, n);
        H.topLeftCorner(n0, n0) = h0(x.head(n0));
        return H;
    };
    prog.constraints = std::move(rows);
    VectorXd x0 = VectorXd::Zero(n);
    x0.head(n0) = *dp.program.x0;
    for (int t = 1; t <= T; ++t) {
        x0(co(t)) = 1.0;
        x0(cb(t)) = 1.0;
    }
    prog.x0 = x0;

    const SolveResult r = solve_convex(prog, sys.tol, sys.iter_cap);
    DispatchProgram view = dp;
    view.program.constraints = prog.constraints;
    DispatchSolution s = extract_solution(view, r, sys, false);
    s.message = "bid clearing: " + r.message;
    return s;
}

// ---------------------------------------------------------------------------
// Mechanism comparison

struct MechanismMetrics {
    double storage_profit = 0.0;  // sum lambda (p - b) - M p
    double gen_cost = 0.0;        // merit-order cost of realized output
    double system_cost = 0.0;     // gen_cost + M sum p
    double payment = 0.0;         // sum lambda D
};

inline MechanismMetrics settle(const DispatchSolution& s, const SystemSpec& sys) {
    MechanismMetrics m;
    for (int t = 0; t < s.T; ++t) {
        const double p = s.storage ? s.p[t] : 0.0, b = s.storage ? s.b[t] : 0.0;
        m.storage_profit += s.lambda[t] * (p - b) - sys.storage.marginal_cost * p;
        m.gen_cost += merit_order_cost(sys.fleet, std::clamp(s.g[t], 0.0, sys.fleet.total_capacity()));
        m.system_cost += sys.storage.marginal_cost * p;
        m.payment += s.lambda[t] * sys.load.forecast[t];
    }
    m.system_cost += m.gen_cost;
    return m;
}

struct ComparisonOptions {
    int grid_size = 0;  // 0: 21 charge levels
    int batches = 10;
    bool per_scenario_dp = false;  // average value functions built per scenario
    int threads = 0;
    std::optional<BidCurve> bids;  // use these bids instead of the DP-derived ones
};

struct ComparisonRow {
    std::string mechanism;  // "welfare" or "bids"
    int scenario = 0;
    MechanismMetrics m;
};

struct ComparisonResult {
    std::vector<ComparisonRow> rows;
    MechanismMetrics mean_welfare, mean_bids;
    // Reduction of the welfare mechanism relative to bid-based clearing, %.
    double profit_delta_pct = 0.0, gen_cost_delta_pct = 0.0, system_cost_delta_pct = 0.0, payment_delta_pct = 0.0;
    int batches = 0;
    int batches_payment_lower = 0;
    int batches_system_cost_not_higher = 0;
    int failures = 0;
    int clipped_periods = 0;
    std::vector<std::string> failure_messages;
};

namespace detail {

inline void accumulate(MechanismMetrics& acc, const MechanismMetrics& m, double w) {
    acc.storage_profit += w * m.storage_profit;
    acc.gen_cost += w * m.gen_cost;
    acc.system_cost += w * m.system_cost;
    acc.payment += w * m.payment;
}

inline double reduction_pct(double bids, double welfare) {
    return bids == 0.0 ? 0.0 : 100.0 * (bids - welfare) / std::abs(bids);
}

}  // namespace detail

/// For each simulated net-load path, operates the system (a) by
/// welfare-maximizing dispatch with energy-only storage and (b) by clearing
/// bids derived from the DP value function of the forecast prices, then
/// settles both at their own energy prices.
inline ComparisonResult compare_mechanisms(const SystemSpec& base, int n, std::uint64_t seed,
                                           const ComparisonOptions& opt = {}) {
    if (!base.storage.enabled()) throw DomainError("compare_mechanisms: storage is disabled");
    SystemSpec sys = base;
    sys.storage_reserve = false;
    const PriceScenarioSet prices = simulate_price_scenarios(sys, n, seed, opt.threads);
    const int G = opt.grid_size > 0 ? opt.grid_size : grid_size_for_levels(sys.storage);
    const double floor = terminal_soc_floor(sys);

    BidCurve bids;
    if (opt.bids) {
        bids = *opt.bids;
    } else if (!opt.per_scenario_dp) {
        bids = bids_from_value(dp_value_function(prices.mean_path(), sys.storage, G, 0.0, floor), sys.storage);
    } else {
        ValueFunction avg;
        for (int i = 0; i < n; ++i) {
            std::vector<double> path(sys.T);
            for (int t = 0; t < sys.T; ++t) path[t] = prices.lambda(i, t);
            const ValueFunction vf = dp_value_function(path, sys.storage, G, 0.0, floor);
            if (i == 0) {
                avg = vf;
                for (auto& row : avg.V) std::fill(row.begin(), row.end(), 0.0);
            }
            for (std::size_t t = 0; t < vf.V.size(); ++t)
                for (int k = 0; k < vf.knots(); ++k) avg.V[t][k] += vf.V[t][k] / n;
        }
        // Anchors follow the mean-price policy.
        const ValueFunction ref = dp_value_function(prices.mean_path(), sys.storage, G, 0.0, floor);
        bids = bids_from_value(avg, sys.storage, reference_trajectory(ref, sys.storage.e_init));
    }

    std::vector<MechanismMetrics> wel(n), bid(n);
    std::vector<std::string> err(n);
    parallel_for(
        n,
        [&](int i) {
            const SystemSpec s = detail::realized_system(sys, prices.load.row(i));
            const DispatchSolution w = solve_dispatch(s);
            const DispatchSolution b = clear_with_bids(s, bids);
            if (!w.optimal()) err[i] = "scenario " + std::to_string(i) + " welfare: " + w.message;
            else if (!b.optimal()) err[i] = "scenario " + std::to_string(i) + " bids: " + b.message;
            if (!err[i].empty()) return;
            wel[i] = settle(w, s);
            bid[i] = settle(b, s);
        },
        opt.threads);

    ComparisonResult res;
    for (int c : prices.clipped) res.clipped_periods += c;
    std::vector<int> ok;
    for (int i = 0; i < n; ++i) {
        if (!err[i].empty()) {
            ++res.failures;
            res.failure_messages.push_back(err[i]);
            continue;
        }
        ok.push_back(i);
        res.rows.push_back({"welfare", i, wel[i]});
        res.rows.push_back({"bids", i, bid[i]});
    }
    if (ok.empty()) return res;
    for (int i : ok) {
        detail::accumulate(res.mean_welfare, wel[i], 1.0 / ok.size());
        detail::accumulate(res.mean_bids, bid[i], 1.0 / ok.size());
    }
    res.profit_delta_pct = detail::reduction_pct(res.mean_bids.storage_profit, res.mean_welfare.storage_profit);
    res.gen_cost_delta_pct = detail::reduction_pct(res.mean_bids.gen_cost, res.mean_welfare.gen_cost);
    res.system_cost_delta_pct = detail::reduction_pct(res.mean_bids.system_cost, res.mean_welfare.system_cost);
    res.payment_delta_pct = detail::reduction_pct(res.mean_bids.payment, res.mean_welfare.payment);

    // Contiguous batches of the successful scenarios.
    const int nb = std::max(1, std::min(opt.batches, static_cast<int>(ok.size())));
    res.batches = nb;
    for (int b = 0; b < nb; ++b) {
        const std::size_t lo = ok.size() * b / nb, hi = ok.size() * (b + 1) / nb;
        double pw = 0, pb = 0, cw = 0, cb = 0;
        for (std::size_t k = lo; k < hi; ++k) {
            pw += wel[ok[k]].payment;
            pb += bid[ok[k]].payment;
            cw += wel[ok[k]].system_cost;
            cb += bid[ok[k]].system_cost;
        }
        if (pw < pb) ++res.batches_payment_lower;
        if (cw <= cb * (1 + 1e-9)) ++res.batches_system_cost_not_higher;
    }
    return res;
}

inline void write_comparison_csv(const ComparisonResult& r, const std::string& path) {
    CsvWriter w(path, {"mechanism", "scenario", "storage_profit", "gen_cost", "system_cost", "payment"});
    for (const auto& row : r.rows)
        w.row(row.mechanism, row.scenario, row.m.storage_profit, row.m.gen_cost, row.m.system_cost, row.m.payment);
}

}  // namespace storage_pricer
