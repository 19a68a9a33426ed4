#pragma once

// Synthetic test systems, CSV ingestion/export, net-load sampling and
// Monte Carlo checks of the chance constraints.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "storage_pricer/costs.hpp"
#include "storage_pricer/csv.hpp"
#include "storage_pricer/dispatch.hpp"
#include "storage_pricer/distributions.hpp"
#include "storage_pricer/errors.hpp"
#include "storage_pricer/parallel.hpp"
#include "storage_pricer/rng.hpp"

namespace storage_pricer {

struct SynthParams {
    int n_gens = 76;
    double total_cap_mw = 23100.0;
    double avg_load_mw = 13000.0;
    double renewable_ratio = 0.3;  // renewable energy / load energy
    double storage_ratio = 0.2;    // storage power / average load
    double duration_h = 4.0;
    double eta = 0.95;
    double M = 20.0;
    double e_init_ratio = 0.5;
    double epsilon = 0.05;
    int T = 24;
    std::uint64_t seed = 0;  // 0: the nominal profile; otherwise a jittered day

    int fit_degree = 3;
    double g_min_ratio = 0.2;            // G_min as a share of fleet capacity
    double mc_min = 10.0, mc_max = 120.0;  // $/MWh, log-spaced across units
    double load_error = 0.02;            // sigma share of load
    double renewable_error = 0.15;       // sigma share of renewable output
    double sigma_scale = 1.0;
    double retire_frac = 0.0;            // share of units removed, evenly across the merit order
};

/// Normalized 24-hour load profile (synthetic, mean 1).
inline const std::array<double, 24>& diurnal_load_shape() {
    static const std::array<double, 24> shape = [] {
        std::array<double, 24> s{0.78, 0.74, 0.72, 0.71, 0.72, 0.77, 0.86, 0.96, 1.03, 1.07, 1.09, 1.10,
                                 1.10, 1.09, 1.09, 1.10, 1.14, 1.21, 1.24, 1.21, 1.15, 1.06, 0.95, 0.85};
        const double m = std::accumulate(s.begin(), s.end(), 0.0) / 24.0;
        for (double& v : s) v /= m;
        return s;
    }();
    return shape;
}

/// Normalized renewable output: steady wind plus a solar bump (mean 1).
inline const std::array<double, 24>& diurnal_renewable_shape() {
    static const std::array<double, 24> shape = [] {
        std::array<double, 24> s{};
        for (int h = 0; h < 24; ++h) s[h] = std::max(0.0, std::sin(M_PI * (h - 6) / 12.0));
        const double solar = std::accumulate(s.begin(), s.end(), 0.0) / 24.0;
        for (double& v : s) v = 0.75 + 0.25 * v / solar;
        return s;
    }();
    return shape;
}

/// Units with log-spaced marginal costs, equal capacity and a small slope
/// that keeps the stack in merit order.
inline FleetCurve synth_fleet(int n, double total_cap, double mc_min, double mc_max) {
    if (n < 1) throw DomainError("synthetic fleet needs at least one unit");
    if (!(total_cap > 0.0)) throw DomainError("synthetic fleet capacity must be positive");
    if (!(mc_min > 0.0 && mc_max >= mc_min)) throw DomainError("synthetic fleet cost range is invalid");
    const double cap = total_cap / n;
    const double step = n > 1 ? std::pow(mc_max / mc_min, 1.0 / (n - 1)) : 1.0;
    std::vector<FleetSegment> segs;
    for (int k = 0; k < n; ++k) {
        const double c1 = mc_min * std::pow(step, k);
        const double gap = c1 * (step - 1.0);
        segs.push_back({cap, 0.0, c1, 0.25 * gap / cap});
    }
    return FleetCurve(segs);
}

/// Removes round(frac * n) units spread evenly through the merit order
/// (frac = 0.2 drops every fifth unit).
inline FleetCurve retire_units(const FleetCurve& fleet, double frac) {
    if (!(frac >= 0.0 && frac < 1.0)) throw DomainError("retirement fraction must lie in [0, 1)");
    if (frac == 0.0) return fleet;
    std::vector<FleetSegment> kept;
    const auto& segs = fleet.segments();
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const bool drop = std::floor((i + 1) * frac + 1e-12) > std::floor(i * frac + 1e-12);
        if (!drop) kept.push_back(segs[i]);
    }
    if (kept.empty()) throw DomainError("retirement removes every unit");
    return FleetCurve(kept);
}

inline void validate(const SynthParams& p) {
    if (p.T < 1) throw DomainError("synthetic horizon must be >= 1");
    if (!(p.avg_load_mw > 0.0)) throw DomainError("average load must be positive");
    if (!(p.renewable_ratio >= 0.0 && p.storage_ratio >= 0.0)) throw DomainError("capacity ratios must be >= 0");
    if (!(p.duration_h > 0.0)) throw DomainError("storage duration must be positive");
    if (!(p.e_init_ratio >= 0.0 && p.e_init_ratio <= 1.0)) throw DomainError("initial SoC ratio must lie in [0, 1]");
    if (!(p.g_min_ratio >= 0.0 && p.g_min_ratio < 1.0)) throw DomainError("G_min ratio must lie in [0, 1)");
    if (!(p.sigma_scale >= 0.0 && p.load_error >= 0.0 && p.renewable_error >= 0.0))
        throw DomainError("error shares must be >= 0");
}

/// Net-load model of the synthetic day: forecast load minus renewables,
/// with sigma_t combining load and renewable forecast errors.
inline NetLoadModel synth_net_load(const SynthParams& p) {
    const auto& ls = diurnal_load_shape();
    const auto& rs = diurnal_renewable_shape();
    auto rng = make_stream(p.seed, 0x10AD);
    std::normal_distribution<double> nd;
    NetLoadModel m;
    m.renewable_ratio = p.renewable_ratio;
    m.storage_ratio = p.storage_ratio;
    for (int t = 0; t < p.T; ++t) {
        double lf = ls[t % 24], rf = rs[t % 24];
        if (p.seed != 0) {
            lf *= 1.0 + 0.03 * std::clamp(nd(rng), -3.0, 3.0);
            rf *= std::max(0.0, 1.0 + 0.15 * std::clamp(nd(rng), -3.0, 3.0));
        }
        const double load = p.avg_load_mw * lf;
        const double ren = p.renewable_ratio * p.avg_load_mw * rf;
        const double sigma = p.sigma_scale * std::hypot(p.load_error * load, p.renewable_error * ren);
        m.forecast.push_back(load - ren);
        m.moments.push_back({0.0, sigma});
    }
    return m;
}

inline SystemSpec synth_test_system(const SynthParams& p) {
    validate(p);
    SystemSpec s;
    s.T = p.T;
    s.fleet = retire_units(synth_fleet(p.n_gens, p.total_cap_mw, p.mc_min, p.mc_max), p.retire_frac);
    s.g_max = s.fleet.total_capacity();
    s.g_min = p.g_min_ratio * s.g_max;
    s.cost = CostPolynomial(fit_polynomial_to_merit_curve(s.fleet, p.fit_degree).poly.coeffs(), s.g_min, s.g_max);
    s.load = synth_net_load(p);
    s.storage.p_max = p.storage_ratio * p.avg_load_mw;
    s.storage.e_max = p.duration_h * s.storage.p_max;
    s.storage.eta = p.eta;
    s.storage.marginal_cost = p.M;
    s.storage.e_init = p.e_init_ratio * s.storage.e_max;
    s.epsilon = p.epsilon;
    const auto [lo, hi] = std::minmax_element(s.load.forecast.begin(), s.load.forecast.end());
    if (*hi > s.g_max)
        throw DomainError("peak net load " + fmt(*hi) + " MW exceeds fleet capacity " + fmt(s.g_max) + " MW");
    if (*lo < s.g_min)
        throw DomainError("minimum net load " + fmt(*lo) + " MW is below the fleet minimum " + fmt(s.g_min) + " MW");
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// CSV ingestion and export

/// Settings a CSV trio does not carry.
struct CsvSystemOptions {
    int fit_degree = 3;
    double g_min_ratio = 0.2;
    StorageSpec storage;
    double epsilon = 0.05;
    UncertaintyModel model = UncertaintyModel::gaussian();
    TerminalSoc terminal;
};

inline FleetCurve read_fleet_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int cap = t.require("capacity_mw"), c0 = t.require("c0"), c1 = t.require("c1"), c2 = t.require("c2");
    t.require("gen_id");
    std::vector<FleetSegment> segs;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        FleetSegment s{t.number(r, cap), t.number(r, c0), t.number(r, c1), t.number(r, c2)};
        if (!(s.capacity > 0.0))
            throw ConfigError(path + ":" + std::to_string(t.line[r]) + ": capacity_mw must be > 0");
        if (s.c2 < 0.0) throw ConfigError(path + ":" + std::to_string(t.line[r]) + ": c2 must be >= 0");
        segs.push_back(s);
    }
    if (segs.empty()) throw ConfigError(path + ": no generators");
    return FleetCurve(segs);
}

namespace detail {

// Checks that column t runs 1..n in order.
inline void check_periods(const CsvTable& t) {
    const int c = t.require("t");
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        if (t.number(r, c) != static_cast<double>(r + 1))
            throw ConfigError(t.path + ":" + std::to_string(t.line[r]) + ": expected t=" + std::to_string(r + 1));
}

}  // namespace detail

inline std::vector<double> read_load_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    detail::check_periods(t);
    const int d = t.require("d_mw");
    std::vector<double> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(t.number(r, d));
    return out;
}

/// Per-period error moments: columns (t, mu_mw, sigma_mw), or t followed by
/// raw error samples from which mean and sample standard deviation are
/// estimated.
inline std::vector<ErrorMoments> read_errors_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    detail::check_periods(t);
    std::vector<ErrorMoments> out;
    const int mu = t.column("mu_mw"), sd = t.column("sigma_mw");
    if (mu >= 0 && sd >= 0) {
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const ErrorMoments m{t.number(r, mu), t.number(r, sd)};
            if (!(m.sigma >= 0.0))
                throw ConfigError(path + ":" + std::to_string(t.line[r]) + ": sigma_mw must be >= 0");
            out.push_back(m);
        }
        return out;
    }
    const int tc = t.require("t");
    std::vector<int> cols;
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c)
        if (c != tc) cols.push_back(c);
    if (cols.size() < 2)
        throw ConfigError(path + ": need columns mu_mw and sigma_mw, or at least two raw sample columns");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        double s = 0.0, ss = 0.0;
        for (int c : cols) s += t.number(r, c);
        const double n = static_cast<double>(cols.size());
        const double mean = s / n;
        for (int c : cols) ss += (t.number(r, c) - mean) * (t.number(r, c) - mean);
        out.push_back({mean, std::sqrt(ss / (n - 1.0))});
    }
    return out;
}

/// Single-column historical error samples (header error_mw).
inline std::vector<double> read_error_samples(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c = t.require("error_mw");
    std::vector<double> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(t.number(r, c));
    return out;
}

inline SystemSpec load_system_csv(const std::string& fleet_path, const std::string& load_path,
                                  const std::string& errors_path, const CsvSystemOptions& opt = {}) {
    SystemSpec s;
    s.fleet = read_fleet_csv(fleet_path);
    const auto load = read_load_csv(load_path);
    const auto errs = read_errors_csv(errors_path);
    if (load.size() != errs.size())
        throw ConfigError("horizon mismatch: " + load_path + " has " + std::to_string(load.size()) + " periods, " +
                          errors_path + " has " + std::to_string(errs.size()));
    if (load.empty()) throw ConfigError(load_path + ": no periods");
    s.T = static_cast<int>(load.size());
    s.g_max = s.fleet.total_capacity();
    s.g_min = opt.g_min_ratio * s.g_max;
    s.cost = CostPolynomial(fit_polynomial_to_merit_curve(s.fleet, opt.fit_degree).poly.coeffs(), s.g_min, s.g_max);
    s.load.forecast = load;
    s.load.moments = errs;
    s.load.model = opt.model;
    s.storage = opt.storage;
    s.epsilon = opt.epsilon;
    s.terminal = opt.terminal;
    validate(s);
    return s;
}

/// Writes fleet.csv, load.csv and errors.csv into dir.
inline void export_system_csv(const SystemSpec& s, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        CsvWriter w(dir + "/fleet.csv", {"gen_id", "capacity_mw", "c0", "c1", "c2"});
        int id = 0;
        for (const auto& g : s.fleet.segments()) w.row(++id, g.capacity, g.c0, g.c1, g.c2);
    }
    {
        CsvWriter w(dir + "/load.csv", {"t", "d_mw"});
        for (int t = 0; t < s.T; ++t) w.row(t + 1, s.load.forecast[t]);
    }
    CsvWriter w(dir + "/errors.csv", {"t", "mu_mw", "sigma_mw"});
    for (int t = 0; t < s.T; ++t) w.row(t + 1, s.load.moments[t].mu, s.load.moments[t].sigma);
}

// ---------------------------------------------------------------------------
// Sampling

/// n x T matrix of forecast errors d_t, drawn independently per period.
/// Row i uses its own RNG stream, so results do not depend on threading.
inline Eigen::MatrixXd sample_forecast_errors(const NetLoadModel& m, int n, std::uint64_t seed, int threads = 0) {
    if (n < 1) throw DomainError("sample count must be >= 1");
    const int T = m.horizon();
    Eigen::MatrixXd out(n, T);
    parallel_for(
        n,
        [&](int i) {
            auto rng = make_stream(seed, static_cast<std::uint64_t>(i));
            std::normal_distribution<double> nd;
            for (int t = 0; t < T; ++t) {
                const double z = m.model.sample_standardized(rng, nd);
                out(i, t) = m.moments[t].mu + m.moments[t].sigma * z;
            }
        },
        threads);
    return out;
}

/// n trajectories of realized net load D_t + d_t.
inline Eigen::MatrixXd sample_net_load(const NetLoadModel& m, int n, std::uint64_t seed, int threads = 0) {
    Eigen::MatrixXd x = sample_forecast_errors(m, n, seed, threads);
    for (int t = 0; t < m.horizon(); ++t) x.col(t).array() += m.forecast[t];
    return x;
}

// ---------------------------------------------------------------------------
// Empirical chance-constraint validation

struct ViolationReport {
    int samples = 0;
    // Per period (0-based), share of samples violating each one-sided row.
    std::vector<double> gen_lo, gen_hi, charge_hi, discharge_hi, soc_lo, soc_hi;
    // Per period, share violating either side of each joint constraint.
    std::vector<double> gen_joint, soc_joint;

    double worst(const std::vector<double>& v) const { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }
    double worst_joint() const { return std::max(worst(gen_joint), worst(soc_joint)); }
};

/// Evaluates the original chance constraints at the fixed first-stage
/// decisions over n sampled error trajectories.
inline ViolationReport empirical_violation_rate(const DispatchSolution& s, const SystemSpec& sys, int n,
                                                std::uint64_t seed, int threads = 0) {
    const Eigen::MatrixXd d = sample_forecast_errors(sys.load, n, seed, threads);
    const int T = s.T;
    ViolationReport r;
    r.samples = n;
    for (auto* v : {&r.gen_lo, &r.gen_hi, &r.charge_hi, &r.discharge_hi, &r.soc_lo, &r.soc_hi, &r.gen_joint,
                    &r.soc_joint})
        v->assign(T, 0.0);
    const double gslack = 1e-9 * std::max(1.0, sys.g_max);
    const double pmax = sys.storage.p_max, emax = sys.storage.e_max, eta = sys.storage.eta;
    for (int t = 0; t < T; ++t) {
        const double phi = s.storage ? s.phi[t] : 1.0;
        const double psi = s.storage ? s.psi[t] : 0.0;
        int glo = 0, ghi = 0, gj = 0, chi = 0, dhi = 0, slo = 0, shi = 0, sj = 0;
        for (int i = 0; i < n; ++i) {
            const double x = d(i, t);
            const double out = s.g[t] + phi * x;
            const bool a = out < sys.g_min - gslack, b = out > sys.g_max + gslack;
            glo += a;
            ghi += b;
            gj += a || b;
            if (!s.storage) continue;
            chi += s.b[t] - psi * x > pmax + gslack;
            dhi += s.p[t] + psi * x > pmax + gslack;
            const bool lo = (psi * x + s.p[t]) / eta > s.e[t] + gslack;
            const bool hi = s.e[t] > emax - (s.b[t] - psi * x) * eta + gslack;
            slo += lo;
            shi += hi;
            sj += lo || hi;
        }
        const double N = n;
        r.gen_lo[t] = glo / N;
        r.gen_hi[t] = ghi / N;
        r.gen_joint[t] = gj / N;
        r.charge_hi[t] = chi / N;
        r.discharge_hi[t] = dhi / N;
        r.soc_lo[t] = slo / N;
        r.soc_hi[t] = shi / N;
        r.soc_joint[t] = sj / N;
    }
    return r;
}

}  // namespace storage_pricer
