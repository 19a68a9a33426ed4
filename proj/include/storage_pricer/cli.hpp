#pragma once

// Command-line front end. Every subcommand shares one flag set, so a
// key=value config file can carry any flag; flags given on the command
// line override the file.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "storage_pricer/baseline.hpp"
#include "storage_pricer/csv.hpp"
#include "storage_pricer/dispatch.hpp"
#include "storage_pricer/distributions.hpp"
#include "storage_pricer/errors.hpp"
#include "storage_pricer/parallel.hpp"
#include "storage_pricer/scenarios.hpp"
#include "storage_pricer/solver.hpp"
#include "storage_pricer/theory.hpp"

namespace storage_pricer::cli {

using json = nlohmann::ordered_json;

enum Exit : int { Ok = 0, ConfigFailure = 1, SolverFailure = 2, CheckFailure = 3 };

struct RunConfig {
    std::string command;
    std::string config_file;

    // System source: synthetic parameters, or a CSV trio.
    bool synthetic = false;
    std::string fleet_csv, load_csv, errors_csv;
    SynthParams synth;
    double p_max = 0.0, e_max = 0.0;  // storage rating for CSV systems
    double eta = 0.95, storage_cost = 20.0, e_init_ratio = 0.5;

    double epsilon = 0.05;
    std::string family = "gaussian";  // gaussian | versatile | empirical | robust-na | robust-s | robust-u | robust-su
    double va = 2.0, vb = 3.0, vc = 0.0;
    std::string terminal = "periodic";  // periodic | fixed | free
    double terminal_soc = 0.0;
    bool energy_only = false;

    std::uint64_t seed = 1;
    int threads = 0;
    std::string out = "out";

    int scenarios = 200;
    int batches = 10;
    bool per_scenario_dp = false;
    int dp_levels = 21;
    int samples = 0;  // 0: the subcommand default

    std::string axis = "soc";  // soc | sigma | capacity | renewable
    int points = 0;            // 0: the axis default
    double axis_from = std::numeric_limits<double>::quiet_NaN();
    double axis_to = std::numeric_limits<double>::quiet_NaN();

    std::string input;  // error samples (error_mw column) for fit-dist / empirical
};

// ---------------------------------------------------------------------------
// Config to system

namespace detail {

inline bool csv_source(const RunConfig& c) {
    return !c.fleet_csv.empty() || !c.load_csv.empty() || !c.errors_csv.empty();
}

inline UncertaintyModel make_model(const RunConfig& c) {
    if (c.family == "gaussian") return UncertaintyModel::gaussian();
    if (c.family == "versatile") return UncertaintyModel::versatile({c.va, c.vb, c.vc});
    if (c.family == "empirical") {
        if (c.input.empty()) throw ConfigError("--family empirical needs --input with an error_mw column");
        return UncertaintyModel::empirical(read_error_samples(c.input));
    }
    if (c.family == "robust-na") return UncertaintyModel::robust(RobustShape::NA);
    if (c.family == "robust-s") return UncertaintyModel::robust(RobustShape::S);
    if (c.family == "robust-u") return UncertaintyModel::robust(RobustShape::U);
    if (c.family == "robust-su") return UncertaintyModel::robust(RobustShape::SU);
    throw ConfigError("unknown uncertainty family '" + c.family + "'");
}

inline TerminalSoc make_terminal(const RunConfig& c) {
    if (c.terminal == "periodic") return {TerminalPolicy::Periodic, 0.0};
    if (c.terminal == "free") return {TerminalPolicy::Free, 0.0};
    if (c.terminal == "fixed") return {TerminalPolicy::Fixed, c.terminal_soc};
    throw ConfigError("unknown terminal policy '" + c.terminal + "'");
}

inline SynthParams synth_params(const RunConfig& c) {
    SynthParams p = c.synth;
    p.epsilon = c.epsilon;
    p.eta = c.eta;
    p.M = c.storage_cost;
    p.e_init_ratio = c.e_init_ratio;
    return p;
}

}  // namespace detail

inline SystemSpec build_system(const RunConfig& c) {
    SystemSpec s;
    if (detail::csv_source(c)) {
        if (c.synthetic) throw ConfigError("choose one system source: --synthetic or the CSV trio");
        if (c.fleet_csv.empty() || c.load_csv.empty() || c.errors_csv.empty())
            throw ConfigError("a CSV system needs --fleet, --load and --errors");
        CsvSystemOptions o;
        o.fit_degree = c.synth.fit_degree;
        o.g_min_ratio = c.synth.g_min_ratio;
        o.storage.p_max = c.p_max;
        o.storage.e_max = c.e_max;
        o.storage.eta = c.eta;
        o.storage.marginal_cost = c.storage_cost;
        o.storage.e_init = c.e_init_ratio * c.e_max;
        o.epsilon = c.epsilon;
        o.model = detail::make_model(c);
        o.terminal = detail::make_terminal(c);
        s = load_system_csv(c.fleet_csv, c.load_csv, c.errors_csv, o);
        for (auto& m : s.load.moments) m.sigma *= c.synth.sigma_scale;
    } else {
        s = synth_test_system(detail::synth_params(c));
        s.load.model = detail::make_model(c);
        s.terminal = detail::make_terminal(c);
    }
    s.storage_reserve = !c.energy_only;
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Output helpers

namespace detail {

inline void write_json(const std::filesystem::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

inline json residuals_json(const Residuals& r) {
    return {{"stationarity", r.stationarity}, {"primal", r.primal}, {"complementarity", r.complementarity}};
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

inline void write_solution_csv(const DispatchSolution& s, const std::string& path) {
    CsvWriter w(path, {"t", "g", "p", "b", "e", "phi", "psi", "lambda", "theta", "pi"});
    for (int t = 0; t < s.T; ++t) {
        const bool st = s.storage;
        w.row(t + 1, s.g[t], st ? s.p[t] : 0.0, st ? s.b[t] : 0.0, st ? s.e[t] : 0.0, s.phi[t], st ? s.psi[t] : 0.0,
              s.lambda[t], st ? s.theta[t] : 0.0, s.pi[t]);
    }
}

inline json coupling_json(const CouplingReport& c) {
    json rows = json::array();
    for (const auto& r : c.rows)
        rows.push_back({{"t", r.t},
                        {"case", to_string(r.kind)},
                        {"theta_prev", r.theta_prev},
                        {"charge_expr", r.charge_expr},
                        {"discharge_expr", r.discharge_expr},
                        {"error", r.error},
                        {"pass", r.pass}});
    return {{"pass", c.all_pass}, {"checked", c.checked}, {"max_rel_error", c.max_rel_error}, {"rows", rows}};
}

inline json bounds_json(const BoundsReport& b) {
    json rows = json::array();
    for (const auto& r : b.rows)
        rows.push_back({{"t", r.t}, {"theta_prev", r.theta_prev}, {"lo", r.allowed.lo}, {"hi", r.allowed.hi},
                        {"pass", r.pass}});
    return {{"pass", b.all_pass},
            {"lambda_range", {b.lam_lo, b.lam_hi}},
            {"pi_range", {b.pi_lo, b.pi_hi}},
            {"rows", rows}};
}

inline json sweep_json(const SweepResult& r) {
    json pts = json::array();
    for (const auto& p : r.points)
        pts.push_back({{"axis", p.axis}, {"theta", p.theta}, {"sup_theta", p.sup_theta}, {"inf_theta", p.inf_theta},
                       {"case", p.case_label}, {"excluded", p.excluded}});
    return {{"axis", r.axis_name}, {"pass", r.verdict}, {"max_violation", r.max_violation}, {"note", r.note},
            {"points", pts}};
}

inline std::vector<double> linspace(double a, double b, int n) {
    if (n < 2) throw ConfigError("a sweep needs at least 2 points");
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = a + (b - a) * k / (n - 1);
    return v;
}

inline double pick(double v, double fallback) { return std::isnan(v) ? fallback : v; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands. Each returns an exit code and fills `summary` for the manifest.

namespace detail {

using Artifacts = std::vector<std::string>;

inline int cmd_dispatch(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    const SystemSpec sys = build_system(c);
    const DispatchProgram dp = build_dispatch(sys);
    const SolveResult r = solve_convex(dp.program, sys.tol, sys.iter_cap);
    const DispatchSolution sol = extract_solution(dp, r, sys);
    summary["status"] = to_string(sol.status);

    json audit;
    audit["status"] = to_string(sol.status);
    audit["message"] = sol.message;
    audit["iterations"] = sol.iterations;
    audit["objective"] = sol.objective;
    audit["power_base"] = sol.power_base;
    audit["price_base"] = sol.price_base;
    audit["solver_residuals"] = residuals_json(sol.residuals);
    audit["duality_gap"] = std::abs(r.primal_objective - r.dual_objective);
    if (r.x.size() == dp.program.n && r.duals.size() == static_cast<Eigen::Index>(dp.program.constraints.rows.size())) {
        const KktReport k = verify_kkt(dp.program, r);
        audit["kkt_recomputed"] = residuals_json(k.sup);
        audit["min_inequality_dual"] = k.min_inequality_dual;
    }
    if (!sol.optimal()) {
        write_json(out / "dual_audit.json", audit);
        files.push_back("dual_audit.json");
        std::cerr << "dispatch: solver returned " << to_string(sol.status) << ": " << sol.message << '\n';
        return SolverFailure;
    }

    write_solution_csv(sol, (out / "solution.csv").string());
    files.push_back("solution.csv");

    json eq = json::array();
    for (const auto& row : sol.equilibrium.rows)
        if (!row.pass) eq.push_back({{"name", row.name}, {"t", row.t}, {"residual", row.residual}, {"threshold", row.threshold}});
    audit["equilibrium"] = {{"pass", sol.equilibrium.all_pass},
                            {"rows_checked", sol.equilibrium.rows.size()},
                            {"max_price_residual", sol.equilibrium.max_price_residual},
                            {"max_reserve_residual", sol.equilibrium.max_reserve_residual},
                            {"max_quantity_residual", sol.equilibrium.max_quantity_residual},
                            {"failing_rows", eq}};
    const ComplementarityReport comp = check_complementarity(sol);
    audit["charge_discharge_overlap"] = {{"clean", comp.clean()}, {"max_scaled", comp.max_scaled},
                                         {"flagged_periods", comp.flagged}};
    const auto& d = sol.duals;
    audit["inequality_duals"] = {{"nu_lo", d.nu_lo},       {"nu_hi", d.nu_hi},         {"alpha_lo", d.alpha_lo},
                                 {"alpha_hi", d.alpha_hi}, {"beta_lo", d.beta_lo},     {"beta_hi", d.beta_hi},
                                 {"iota_lo", d.iota_lo},   {"iota_hi", d.iota_hi},     {"kappa_phi", d.kappa_phi},
                                 {"kappa_psi", d.kappa_psi}, {"psi_fixed", d.psi_fixed}, {"terminal", d.terminal}};
    if (sol.storage) {
        audit["coupling"] = coupling_json(check_price_coupling(sol, sys));
        audit["bounds"] = bounds_json(check_price_bounds(sol, sys));
    }
    write_json(out / "dual_audit.json", audit);
    files.push_back("dual_audit.json");

    summary["objective"] = sol.objective;
    summary["mean_lambda"] = mean(sol.lambda);
    summary["equilibrium_pass"] = sol.equilibrium.all_pass;
    std::cout << "dispatch: " << to_string(sol.status) << ", cost " << fmt(sol.objective) << " $, mean lambda "
              << fmt(mean(sol.lambda)) << " $/MWh, residual " << fmt(sol.residuals.max()) << '\n';
    return Ok;
}

inline int cmd_verify_theory(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    const SystemSpec sys = build_system(c);
    if (!sys.storage.enabled()) throw ConfigError("verify-theory needs a storage unit");
    json report;
    report["seed"] = c.seed;
    json suites = json::array();
    bool all = true;
    auto add = [&](const std::string& name, bool pass, json detail) {
        all = all && pass;
        suites.push_back({{"suite", name}, {"pass", pass}, {"detail", std::move(detail)}});
        std::cout << (pass ? "PASS " : "FAIL ") << name << '\n';
    };

    const DispatchSolution sol = solve_dispatch(sys);
    if (!sol.optimal()) {
        std::cerr << "verify-theory: dispatch " << to_string(sol.status) << ": " << sol.message << '\n';
        return SolverFailure;
    }
    add("equilibrium", sol.equilibrium.all_pass,
        {{"max_price_residual", sol.equilibrium.max_price_residual}, {"residuals", residuals_json(sol.residuals)}});
    add("price_coupling", check_price_coupling(sol, sys).all_pass, coupling_json(check_price_coupling(sol, sys)));
    add("price_bounds", check_price_bounds(sol, sys).all_pass, bounds_json(check_price_bounds(sol, sys)));

    const int n = c.points > 0 ? c.points : 11;
    SystemSpec free = sys;
    free.terminal = {TerminalPolicy::Free, 0.0};
    const SweepResult soc = soc_sweep(free, linspace(0.0, sys.storage.e_max, n), 1, c.threads);
    add("soc_monotonicity", soc.verdict, sweep_json(soc));

    SystemSpec energy = sys;
    energy.storage_reserve = false;
    const bool quadratic = sys.cost.degree() <= 2;
    const SweepResult sig = sigma_sweep(energy, {0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0}, quadratic, c.threads);
    json sd = sweep_json(sig);
    sd["expect"] = quadratic ? "constant" : "increasing";
    add("sigma_monotonicity", sig.verdict, sd);

    // Jensen gap at the peak-period output, with the fleet carrying the whole
    // error: the solved phi is often near 0, which hides the curvature.
    int peak = 0;
    for (int t = 1; t < sys.T; ++t)
        if (sys.load.forecast[t] > sys.load.forecast[peak]) peak = t;
    const int draws = c.samples > 0 ? c.samples : 100000;
    const JensenGap jg =
        jensen_gap(sys.cost, sol.g[peak], 1.0, sys.load.moments[peak], sys.storage.eta, draws, c.seed);
    const bool jpass = quadratic ? std::abs(jg.gap) <= 3.0 * jg.standard_error
                                 : (sys.cost.coeff(3) > 0.0 ? jg.gap > 3.0 * jg.standard_error
                                                            : jg.gap < -3.0 * jg.standard_error);
    add("jensen_gap", jpass,
        {{"period", peak + 1}, {"phi", 1.0}, {"gap", jg.gap}, {"standard_error", jg.standard_error}, {"samples", jg.samples}});

    SystemSpec ideal = free;
    ideal.storage.eta = 1.0;
    ideal.storage.marginal_cost = 0.0;
    const SweepResult is = soc_sweep(ideal, linspace(0.0, sys.storage.e_max, n), 1, c.threads);
    const double gap = ideal_slope_gap(is);
    add("ideal_storage_slope_gap", gap <= 1e-6, {{"gap", gap}});

    report["suites"] = suites;
    report["pass"] = all;
    write_json(out / "theory_report.json", report);
    files.push_back("theory_report.json");
    summary["pass"] = all;
    return all ? Ok : CheckFailure;
}

inline int cmd_baseline(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    SystemSpec sys = build_system(c);
    sys.storage_reserve = false;
    if (!sys.storage.enabled()) throw ConfigError("baseline needs a storage unit");
    const PriceScenarioSet set = simulate_price_scenarios(sys, c.scenarios, c.seed, c.threads);
    const std::vector<double> path = set.mean_path();
    const int G = grid_size_for_levels(sys.storage, c.dp_levels);
    const ValueFunction vf = dp_value_function(path, sys.storage, G, 0.0, terminal_soc_floor(sys));
    const BidCurve bids = bids_from_value(vf, sys.storage);

    {
        CsvWriter w((out / "price_scenarios.csv").string(), {"scenario", "t", "lambda", "net_load"});
        for (int i = 0; i < set.size(); ++i)
            for (int t = 0; t < sys.T; ++t) w.row(i + 1, t + 1, set.lambda(i, t), set.load(i, t));
    }
    {
        CsvWriter w((out / "value_function.csv").string(), {"t", "soc_mwh", "value", "next_soc_mwh"});
        for (int t = 0; t <= vf.T(); ++t)
            for (int k = 0; k < vf.knots(); ++k)
                w.row(t + 1, vf.grid[k], vf.V[t][k], t < vf.T() ? vf.grid[vf.policy[t][k]] : vf.grid[k]);
    }
    {
        CsvWriter w((out / "bids.csv").string(), {"t", "anchor_soc_mwh", "side", "step", "quantity_mw", "price"});
        for (std::size_t t = 0; t < bids.periods.size(); ++t) {
            const auto& pb = bids.periods[t];
            for (std::size_t k = 0; k < pb.offer.size(); ++k)
                w.row(t + 1, pb.anchor_soc, "offer", k + 1, pb.offer[k].quantity, pb.offer[k].price);
            for (std::size_t k = 0; k < pb.bid.size(); ++k)
                w.row(t + 1, pb.anchor_soc, "bid", k + 1, pb.bid[k].quantity, pb.bid[k].price);
        }
    }
    files.insert(files.end(), {"price_scenarios.csv", "value_function.csv", "bids.csv"});
    int clipped = 0;
    for (int k : set.clipped) clipped += k;
    summary["knots"] = vf.knots();
    summary["step_mwh"] = vf.step;
    summary["concave"] = vf.concave;
    summary["max_concavity_violation"] = vf.max_concavity_violation;
    summary["monotone"] = vf.monotone;
    summary["expected_profit"] = vf.value(0, sys.storage.e_init);
    summary["clipped_periods"] = clipped;
    std::cout << "baseline: " << vf.knots() << " SoC knots, expected profit " << fmt(vf.value(0, sys.storage.e_init))
              << " $, concave " << (vf.concave ? "yes" : "no") << '\n';
    return Ok;
}

inline json metrics_json(const MechanismMetrics& m) {
    return {{"storage_profit", m.storage_profit}, {"gen_cost", m.gen_cost}, {"system_cost", m.system_cost},
            {"payment", m.payment}};
}

inline int cmd_compare(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    const SystemSpec sys = build_system(c);
    ComparisonOptions opt;
    opt.grid_size = grid_size_for_levels(sys.storage, c.dp_levels);
    opt.batches = c.batches;
    opt.per_scenario_dp = c.per_scenario_dp;
    opt.threads = c.threads;
    const ComparisonResult r = compare_mechanisms(sys, c.scenarios, c.seed, opt);
    write_comparison_csv(r, (out / "comparison.csv").string());
    json s;
    s["scenarios"] = c.scenarios;
    s["failures"] = r.failures;
    s["failure_messages"] = r.failure_messages;
    s["clipped_periods"] = r.clipped_periods;
    s["mean"] = {{"welfare", metrics_json(r.mean_welfare)}, {"bids", metrics_json(r.mean_bids)}};
    s["reduction_pct"] = {{"storage_profit", r.profit_delta_pct},
                          {"gen_cost", r.gen_cost_delta_pct},
                          {"system_cost", r.system_cost_delta_pct},
                          {"payment", r.payment_delta_pct}};
    s["batches"] = {{"count", r.batches},
                    {"payment_lower", r.batches_payment_lower},
                    {"system_cost_not_higher", r.batches_system_cost_not_higher}};
    write_json(out / "comparison_summary.json", s);
    files.insert(files.end(), {"comparison.csv", "comparison_summary.json"});
    summary = s;
    summary.erase("failure_messages");
    std::cout << "compare: system cost reduction " << fmt(r.system_cost_delta_pct) << " %, payment reduction "
              << fmt(r.payment_delta_pct) << " %, payment lower in " << r.batches_payment_lower << "/" << r.batches
              << " batches\n";
    if (r.failures == c.scenarios) return SolverFailure;
    return Ok;
}

inline int cmd_sweep(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    const SystemSpec sys = build_system(c);
    if (c.axis == "soc" || c.axis == "sigma") {
        SweepResult r;
        if (c.axis == "soc") {
            SystemSpec free = sys;
            free.terminal = {TerminalPolicy::Free, 0.0};
            const int n = c.points > 0 ? c.points : 21;
            r = soc_sweep(free,
                          linspace(pick(c.axis_from, 0.0), pick(c.axis_to, sys.storage.e_max), n), 1, c.threads);
            summary["ideal_storage_slope_gap"] = ideal_slope_gap(r);
        } else {
            SystemSpec energy = sys;
            energy.storage_reserve = false;
            const int n = c.points > 0 ? c.points : 7;
            r = sigma_sweep(energy, linspace(pick(c.axis_from, 0.5), pick(c.axis_to, 2.0), n), sys.cost.degree() <= 2,
                            c.threads);
        }
        write_sweep_csv(r, (out / "sweep.csv").string());
        files.push_back("sweep.csv");
        summary["verdict"] = r.verdict;
        summary["max_violation"] = r.max_violation;
        summary["note"] = r.note;
        std::cout << "sweep " << c.axis << ": " << (r.verdict ? "pass" : "fail") << ", max violation "
                  << fmt(r.max_violation) << '\n';
        return r.verdict ? Ok : CheckFailure;
    }
    if (c.axis != "capacity" && c.axis != "renewable") throw ConfigError("unknown sweep axis '" + c.axis + "'");
    if (detail::csv_source(c)) throw ConfigError("capacity and renewable sweeps need the synthetic system");
    const bool cap = c.axis == "capacity";
    const int n = c.points > 0 ? c.points : 5;
    const std::vector<double> xs =
        linspace(pick(c.axis_from, cap ? 0.02 : 0.0), pick(c.axis_to, cap ? 0.2 : 0.4), n);
    struct Row {
        std::string status;
        double cost = 0, lam = 0, theta = 0, reserve = 0;
    };
    std::vector<Row> rows(xs.size());
    parallel_for(
        n,
        [&](int k) {
            RunConfig ck = c;
            (cap ? ck.synth.storage_ratio : ck.synth.renewable_ratio) = xs[k];
            const SystemSpec s = build_system(ck);
            const DispatchSolution sol = solve_dispatch(s);
            rows[k].status = to_string(sol.status);
            if (!sol.optimal()) return;
            rows[k].cost = sol.objective;
            rows[k].lam = mean(sol.lambda);
            rows[k].theta = sol.storage ? mean(sol.theta) : 0.0;
            rows[k].reserve = sum(sol.pi);
        },
        c.threads);
    CsvWriter w((out / "sweep.csv").string(),
                {"axis_value", "status", "system_cost", "mean_lambda", "mean_theta", "reserve_cost"});
    int solved = 0;
    for (int k = 0; k < n; ++k) {
        w.row(xs[k], rows[k].status, rows[k].cost, rows[k].lam, rows[k].theta, rows[k].reserve);
        solved += rows[k].status == "Optimal";
    }
    files.push_back("sweep.csv");
    summary["solved"] = solved;
    summary["points"] = n;
    std::cout << "sweep " << c.axis << ": " << solved << "/" << n << " points solved\n";
    return solved == n ? Ok : SolverFailure;
}

inline int cmd_violations(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    const SystemSpec sys = build_system(c);
    const DispatchSolution sol = solve_dispatch(sys);
    if (!sol.optimal()) {
        std::cerr << "violations: dispatch " << to_string(sol.status) << ": " << sol.message << '\n';
        return SolverFailure;
    }
    const int n = c.samples > 0 ? c.samples : 10000;
    const ViolationReport r = empirical_violation_rate(sol, sys, n, c.seed, c.threads);
    CsvWriter w((out / "violations.csv").string(), {"t", "gen_lo", "gen_hi", "gen_joint", "charge_hi", "discharge_hi",
                                                    "soc_lo", "soc_hi", "soc_joint"});
    for (int t = 0; t < sys.T; ++t)
        w.row(t + 1, r.gen_lo[t], r.gen_hi[t], r.gen_joint[t], r.charge_hi[t], r.discharge_hi[t], r.soc_lo[t],
              r.soc_hi[t], r.soc_joint[t]);
    files.push_back("violations.csv");
    const double se = std::sqrt(sys.epsilon * (1.0 - sys.epsilon) / n);
    const double limit = sys.epsilon + 2.0 * se;
    const double worst = std::max({r.worst_joint(), r.worst(r.charge_hi), r.worst(r.discharge_hi)});
    summary["samples"] = n;
    summary["worst_rate"] = worst;
    summary["limit"] = limit;
    summary["pass"] = worst <= limit;
    std::cout << "violations: worst rate " << fmt(worst) << " against limit " << fmt(limit) << '\n';
    return worst <= limit ? Ok : CheckFailure;
}

inline int cmd_fit_dist(const RunConfig& c, const std::filesystem::path& out, Artifacts& files, json& summary) {
    std::vector<double> x;
    json truth;
    if (!c.input.empty()) {
        x = read_error_samples(c.input);
    } else {
        const VersatileParams p{c.va, c.vb, c.vc};
        validate(p);
        const int n = c.samples > 0 ? c.samples : 100000;
        auto rng = make_stream(c.seed, 0);
        x.resize(n);
        for (auto& v : x) v = versatile_quantile(p, uniform_open(rng));
        truth = {{"a", p.a}, {"b", p.b}, {"c", p.c}};
    }
    const VersatileFit f = fit_versatile_mle(x);
    json j;
    j["samples"] = x.size();
    j["params"] = {{"a", f.params.a}, {"b", f.params.b}, {"c", f.params.c}};
    j["mean_log_likelihood"] = f.mean_log_likelihood;
    j["gradient_norm"] = f.gradient_norm;
    j["iterations"] = f.iterations;
    if (!truth.is_null()) j["truth"] = truth;
    write_json(out / "fit.json", j);
    files.push_back("fit.json");
    summary = j;
    std::cout << "fit-dist: a " << fmt(f.params.a) << ", b " << fmt(f.params.b) << ", c " << fmt(f.params.c) << '\n';
    return Ok;
}

inline json config_json(const RunConfig& c) {
    const SynthParams p = synth_params(c);
    json j;
    j["command"] = c.command;
    j["config_file"] = c.config_file;
    j["source"] = csv_source(c) ? "csv" : "synthetic";
    if (csv_source(c)) {
        j["csv"] = {{"fleet", c.fleet_csv}, {"load", c.load_csv}, {"errors", c.errors_csv}};
        j["storage"] = {{"p_max", c.p_max}, {"e_max", c.e_max}};
    }
    j["synthetic"] = {{"n_gens", p.n_gens},           {"total_cap_mw", p.total_cap_mw},
                      {"avg_load_mw", p.avg_load_mw}, {"renewable_ratio", p.renewable_ratio},
                      {"storage_ratio", p.storage_ratio}, {"duration_h", p.duration_h},
                      {"eta", p.eta},                 {"M", p.M},
                      {"e_init_ratio", p.e_init_ratio}, {"T", p.T},
                      {"day_seed", p.seed},           {"fit_degree", p.fit_degree},
                      {"g_min_ratio", p.g_min_ratio}, {"mc_min", p.mc_min},
                      {"mc_max", p.mc_max},           {"load_error", p.load_error},
                      {"renewable_error", p.renewable_error}, {"sigma_scale", p.sigma_scale},
                      {"retire_frac", p.retire_frac}};
    j["epsilon"] = c.epsilon;
    j["family"] = c.family;
    j["versatile"] = {c.va, c.vb, c.vc};
    j["terminal"] = c.terminal;
    j["terminal_soc"] = c.terminal_soc;
    j["energy_only"] = c.energy_only;
    j["seed"] = c.seed;
    j["scenarios"] = c.scenarios;
    j["batches"] = c.batches;
    j["per_scenario_dp"] = c.per_scenario_dp;
    j["dp_levels"] = c.dp_levels;
    j["samples"] = c.samples;
    j["axis"] = c.axis;
    j["points"] = c.points;
    j["axis_from"] = std::isnan(c.axis_from) ? json(nullptr) : json(c.axis_from);
    j["axis_to"] = std::isnan(c.axis_to) ? json(nullptr) : json(c.axis_to);
    j["input"] = c.input;
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Argument parsing

inline void add_options(CLI::App& app, RunConfig& c) {
    app.set_config("--config", "", "key=value file; command-line flags override it")->check(CLI::ExistingFile);
    app.allow_config_extras(CLI::config_extras_mode::error);

    app.add_flag("--synthetic", c.synthetic, "use the synthetic test system (default when no CSV is given)");
    app.add_option("--fleet", c.fleet_csv, "fleet CSV (gen_id, capacity_mw, c0, c1, c2)");
    app.add_option("--load", c.load_csv, "load CSV (t, d_mw)");
    app.add_option("--errors", c.errors_csv, "forecast-error CSV (t, mu_mw, sigma_mw or sample columns)");
    app.add_option("--p-max", c.p_max, "storage power rating for CSV systems, MW");
    app.add_option("--e-max", c.e_max, "storage energy rating for CSV systems, MWh");
    app.add_option("--eta", c.eta, "storage one-way efficiency");
    app.add_option("--storage-cost", c.storage_cost, "storage discharge cost M, $/MWh");
    app.add_option("--e-init-ratio", c.e_init_ratio, "initial SoC as a share of e_max");

    auto& p = c.synth;
    app.add_option("--retire-frac", p.retire_frac, "share of synthetic units retired");
    app.add_option("--storage-ratio", p.storage_ratio, "synthetic storage power / average load");
    app.add_option("--renewable-ratio", p.renewable_ratio, "synthetic renewable energy / load energy");
    app.add_option("--duration", p.duration_h, "synthetic storage duration, h");
    app.add_option("--avg-load", p.avg_load_mw, "synthetic average load, MW");
    app.add_option("--day-seed", p.seed, "synthetic day jitter seed (0: nominal profile)");
    app.add_option("--fit-degree", c.synth.fit_degree, "cost polynomial degree (2-4)");
    app.add_option("--g-min-ratio", c.synth.g_min_ratio, "fleet minimum output as a share of capacity");
    app.add_option("--sigma-scale", c.synth.sigma_scale, "multiplier on every sigma_t");

    app.add_option("--epsilon", c.epsilon, "chance-constraint risk level");
    app.add_option("--family", c.family, "gaussian | versatile | empirical | robust-na | robust-s | robust-u | robust-su");
    app.add_option("--versatile-a", c.va, "versatile shape a");
    app.add_option("--versatile-b", c.vb, "versatile shape b");
    app.add_option("--versatile-c", c.vc, "versatile location c");
    app.add_option("--terminal", c.terminal, "terminal SoC policy: periodic | fixed | free");
    app.add_option("--terminal-soc", c.terminal_soc, "terminal SoC for the fixed policy, MWh");
    app.add_flag("--energy-only", c.energy_only, "storage provides no reserve (psi = 0)");

    app.add_option("--seed", c.seed, "random seed");
    app.add_option("--threads", c.threads, "worker cap (default: STORAGE_PRICER_THREADS, then all cores)");
    app.add_option("--out", c.out, "output directory");

    app.add_option("--scenarios", c.scenarios, "Monte Carlo scenarios (baseline, compare)");
    app.add_option("--batches", c.batches, "contiguous scenario batches (compare)");
    app.add_flag("--per-scenario-dp", c.per_scenario_dp, "average DP value functions over price scenarios");
    app.add_option("--dp-levels", c.dp_levels, "DP charge levels per full-power step");
    app.add_option("--samples", c.samples, "sample count (violations, fit-dist, Jensen gap)");

    app.add_option("--axis", c.axis, "sweep axis: soc | sigma | capacity | renewable");
    app.add_option("--points", c.points, "sweep grid points");
    app.add_option("--from", c.axis_from, "first sweep value");
    app.add_option("--to", c.axis_to, "last sweep value");
    app.add_option("--input", c.input, "error-sample CSV with an error_mw column");
}

/// Parses argv, runs one subcommand and writes its artifacts plus
/// manifest.json into --out. Returns the process exit code.
inline int run_command(int argc, const char* const* argv) {
    CLI::App app{"Storage opportunity-cost pricing under chance-constrained dispatch", "storage-pricer"};
    RunConfig cfg;
    add_options(app, cfg);
    app.require_subcommand(1, 1);
    const std::vector<std::pair<std::string, std::string>> commands{
        {"dispatch", "solve the dispatch and export prices"},
        {"verify-theory", "check the pricing results on the configured system"},
        {"baseline", "profit-maximizing DP bidder: value function and bid curves"},
        {"compare", "welfare prices against bid-based clearing over Monte Carlo scenarios"},
        {"sweep", "SoC, sigma, storage capacity or renewable share sweep"},
        {"violations", "empirical chance-constraint violation rates"},
        {"fit-dist", "maximum-likelihood versatile distribution fit"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.get_formatter()->make_help(&app, "storage-pricer", CLI::AppFormatMode::Normal);
        return ConfigFailure;
    }
    cfg.command = app.get_subcommands().front()->get_name();
    if (app["--config"]->count()) cfg.config_file = app["--config"]->as<std::string>();
    if (!(cfg.threads >= 0)) {
        std::cerr << "error: --threads must be >= 0\n";
        return ConfigFailure;
    }
    cfg.threads = resolve_threads(cfg.threads);

    namespace fs = std::filesystem;
    const fs::path out(cfg.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        std::cerr << "error: cannot create " << out << ": " << ec.message() << '\n';
        return ConfigFailure;
    }

    detail::Artifacts files;
    json summary = json::object();
    std::string error;
    int code = Ok;
    try {
        if (cfg.scenarios < 1) throw ConfigError("--scenarios must be >= 1");
        if (cfg.command == "dispatch") code = detail::cmd_dispatch(cfg, out, files, summary);
        else if (cfg.command == "verify-theory") code = detail::cmd_verify_theory(cfg, out, files, summary);
        else if (cfg.command == "baseline") code = detail::cmd_baseline(cfg, out, files, summary);
        else if (cfg.command == "compare") code = detail::cmd_compare(cfg, out, files, summary);
        else if (cfg.command == "sweep") code = detail::cmd_sweep(cfg, out, files, summary);
        else if (cfg.command == "violations") code = detail::cmd_violations(cfg, out, files, summary);
        else code = detail::cmd_fit_dist(cfg, out, files, summary);
    } catch (const SolverError& e) {
        error = e.what();
        code = SolverFailure;
    } catch (const std::exception& e) {
        // Domain, configuration, cost-model and fitting errors.
        error = e.what();
        code = ConfigFailure;
    }
    if (!error.empty()) std::cerr << "error: " << error << '\n';

    json manifest;
    manifest["tool"] = "storage-pricer";
    manifest["config"] = detail::config_json(cfg);
    manifest["threads"] = cfg.threads;
    manifest["exit_code"] = code;
    if (!error.empty()) manifest["error"] = error;
    manifest["artifacts"] = files;
    manifest["summary"] = summary;
    try {
        detail::write_json(out / "manifest.json", manifest);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code == Ok ? ConfigFailure : code;
    }
    return code;
}

}  // namespace storage_pricer::cli
