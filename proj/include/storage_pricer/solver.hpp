#pragma once

// Dense primal-dual interior-point solver for smooth convex objectives
// under linear equality and inequality constraints.
//
// Sign convention: L(x, y, z) = f(x) - y'(A x - b) + z'(C x - d), z >= 0,
// so stationarity reads grad f - A'y + C'z = 0. For min (x-1)^2 s.t. x = 3
// the equality dual is +4; for min x^2 s.t. x >= 1 the inequality dual is 2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "storage_pricer/errors.hpp"
#include "storage_pricer/reformulation.hpp"

namespace storage_pricer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ConvexProgram {
    int n = 0;
    std::function<double(const VectorXd&)> objective;
    std::function<VectorXd(const VectorXd&)> gradient;
    std::function<MatrixXd(const VectorXd&)> hessian;
    bool quadratic = true;  // objective of degree <= 2: plain Newton steps
    LinearConstraintSet constraints;
    std::optional<VectorXd> x0;
};

/// Convenience builder for 0.5 x'Qx + c'x.
inline ConvexProgram make_quadratic_program(const MatrixXd& Q, const VectorXd& c, LinearConstraintSet rows) {
    ConvexProgram p;
    p.n = static_cast<int>(c.size());
    p.objective = [Q, c](const VectorXd& x) { return 0.5 * x.dot(Q * x) + c.dot(x); };
    p.gradient = [Q, c](const VectorXd& x) -> VectorXd { return Q * x + c; };
    p.hessian = [Q](const VectorXd&) -> MatrixXd { return Q; };
    rows.num_vars = p.n;
    p.constraints = std::move(rows);
    return p;
}

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "Optimal";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::Unbounded: return "Unbounded";
        case SolveStatus::IterLimit: return "IterLimit";
    }
    return "?";
}

struct Residuals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;

    double max() const { return std::max({stationarity, primal, complementarity}); }
};

struct SolveResult {
    VectorXd x;
    VectorXd duals;  // one per constraint row, aligned with program.constraints.rows
    SolveStatus status = SolveStatus::IterLimit;
    Residuals residuals;
    int iterations = 0;
    bool degenerate = false;  // some row has both slack and dual <= sqrt(tol)
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    std::string message;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

struct KktReport {
    VectorXd stationarity;     // per variable
    VectorXd primal;           // per row: |Ax-b| or max(Cx-d, 0)
    VectorXd complementarity;  // per row: |z (d - Cx)|, 0 for equalities
    double min_inequality_dual = 0.0;
    Residuals sup;
};

namespace detail {

struct DenseRows {
    MatrixXd A, C;
    VectorXd b, d;
    std::vector<int> eq_rows, in_rows;  // map back to constraint-set row index
    std::vector<std::vector<std::pair<int, double>>> c_sparse;
};

inline DenseRows densify(const ConvexProgram& prog) {
    DenseRows D;
    const auto& rows = prog.constraints.rows;
    for (std::size_t i = 0; i < rows.size(); ++i)
        (rows[i].sense == Sense::Equal ? D.eq_rows : D.in_rows).push_back(static_cast<int>(i));
    const int n = prog.n;
    D.A = MatrixXd::Zero(static_cast<Eigen::Index>(D.eq_rows.size()), n);
    D.b = VectorXd::Zero(static_cast<Eigen::Index>(D.eq_rows.size()));
    D.C = MatrixXd::Zero(static_cast<Eigen::Index>(D.in_rows.size()), n);
    D.d = VectorXd::Zero(static_cast<Eigen::Index>(D.in_rows.size()));
    D.c_sparse.resize(D.in_rows.size());
    for (std::size_t k = 0; k < D.eq_rows.size(); ++k) {
        const auto& r = rows[D.eq_rows[k]];
        for (const auto& [j, c] : r.coeffs) D.A(static_cast<Eigen::Index>(k), j) += c;
        D.b(static_cast<Eigen::Index>(k)) = r.rhs;
    }
    for (std::size_t k = 0; k < D.in_rows.size(); ++k) {
        const auto& r = rows[D.in_rows[k]];
        for (const auto& [j, c] : r.coeffs) D.C(static_cast<Eigen::Index>(k), j) += c;
        D.d(static_cast<Eigen::Index>(k)) = r.rhs;
        for (int j = 0; j < n; ++j)
            if (D.C(static_cast<Eigen::Index>(k), j) != 0.0) D.c_sparse[k].emplace_back(j, D.C(static_cast<Eigen::Index>(k), j));
    }
    return D;
}

inline void check_dims(const ConvexProgram& prog) {
    if (prog.n <= 0) throw DomainError("convex program has no variables");
    if (!prog.objective || !prog.gradient || !prog.hessian)
        throw DomainError("convex program is missing objective callbacks");
    if (prog.constraints.num_vars != prog.n)
        throw DomainError("constraint set declares " + std::to_string(prog.constraints.num_vars) +
                          " variables, program has " + std::to_string(prog.n));
    prog.constraints.validate();
}

// Residuals measured from x directly (not from the internal slacks).
inline Residuals measure(const DenseRows& D, const VectorXd& grad, const VectorXd& x, const VectorXd& y,
                         const VectorXd& z) {
    Residuals r;
    const VectorXd stat = grad - D.A.transpose() * y + D.C.transpose() * z;
    r.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
    double prim = 0.0;
    if (D.A.rows()) prim = (D.A * x - D.b).cwiseAbs().maxCoeff();
    double comp = 0.0;
    if (D.C.rows()) {
        const VectorXd slack = D.d - D.C * x;
        prim = std::max(prim, std::max(0.0, -slack.minCoeff()));
        comp = slack.cwiseProduct(z).cwiseAbs().maxCoeff();
    }
    r.primal = prim;
    r.complementarity = comp;
    return r;
}

inline double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
}

struct IpmOutcome {
    VectorXd x, y, z, s;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    Residuals res;
};

inline IpmOutcome run_ipm(const ConvexProgram& prog, const DenseRows& D, double tol, int iter_cap) {
    const int n = prog.n;
    const auto me = D.A.rows();
    const auto mi = D.C.rows();
    IpmOutcome o;
    o.x = prog.x0 ? *prog.x0 : VectorXd::Zero(n);
    if (o.x.size() != n) throw DomainError("initial point has wrong dimension");
    o.y = VectorXd::Zero(me);
    o.s = VectorXd::Ones(mi);
    o.z = VectorXd::Ones(mi);
    if (mi) {
        const VectorXd slack = D.d - D.C * o.x;
        for (Eigen::Index i = 0; i < mi; ++i) o.s(i) = std::max(slack(i), 1.0);
    }

    auto kkt_norm = [&](const VectorXd& x, const VectorXd& y, const VectorXd& z, const VectorXd& s, double target) {
        const VectorXd rd = prog.gradient(x) - D.A.transpose() * y + D.C.transpose() * z;
        double v = rd.squaredNorm();
        if (me) v += (D.A * x - D.b).squaredNorm();
        if (mi) {
            v += (D.C * x + s - D.d).squaredNorm();
            v += (s.cwiseProduct(z).array() - target).matrix().squaredNorm();
        }
        return std::sqrt(v);
    };

    for (int it = 0; it < iter_cap; ++it) {
        o.iterations = it;
        const VectorXd grad = prog.gradient(o.x);
        o.res = measure(D, grad, o.x, o.y, o.z);
        // Per-row complementarity alone lets the duality gap grow with the
        // row count, so the aggregate gap is required to be small as well.
        const double gap = mi ? std::abs((D.d - D.C * o.x).dot(o.z)) : 0.0;
        if (o.res.max() <= tol && gap <= tol * (1.0 + std::abs(prog.objective(o.x)))) {
            o.converged = true;
            return o;
        }
        if (!std::isfinite(o.res.max()) || o.x.cwiseAbs().maxCoeff() > 1e12 ||
            (mi && o.z.maxCoeff() > 1e14)) {
            o.diverged = true;
            return o;
        }
        const MatrixXd H = prog.hessian(o.x);
        const VectorXd rd = grad - D.A.transpose() * o.y + D.C.transpose() * o.z;
        const VectorXd rp = me ? VectorXd(D.A * o.x - D.b) : VectorXd();
        const VectorXd rs = mi ? VectorXd(D.C * o.x + o.s - D.d) : VectorXd();
        const double mu = mi ? o.s.dot(o.z) / static_cast<double>(mi) : 0.0;

        MatrixXd K = H;
        const VectorXd w = mi ? VectorXd(o.z.cwiseQuotient(o.s)) : VectorXd();
        for (Eigen::Index k = 0; k < mi; ++k)
            for (const auto& [i, ci] : D.c_sparse[k])
                for (const auto& [j, cj] : D.c_sparse[k]) K(i, j) += w(k) * ci * cj;
        MatrixXd M = MatrixXd::Zero(n + me, n + me);
        M.topLeftCorner(n, n) = K;
        if (me) {
            M.topRightCorner(n, me) = -D.A.transpose();
            M.bottomLeftCorner(me, n) = D.A;
        }
        // Factor a slightly regularized copy; refine against the exact matrix.
        MatrixXd Mreg = M;
        const double reg = 1e-13 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        Mreg.topLeftCorner(n, n).diagonal().array() += reg;
        if (me) Mreg.bottomRightCorner(me, me).diagonal().array() -= reg;
        const Eigen::PartialPivLU<MatrixXd> lu(Mreg);

        struct Dir {
            VectorXd dx, dy, ds, dz;
        };
        auto solve_dir = [&](const VectorXd& rc) {
            VectorXd rhs(n + me);
            VectorXd top = -rd;
            if (mi) top -= D.C.transpose() * ((rc + o.z.cwiseProduct(rs)).cwiseQuotient(o.s));
            rhs.head(n) = top;
            if (me) rhs.tail(me) = -rp;
            VectorXd sol = lu.solve(rhs);
            for (int refine = 0; refine < 2; ++refine) sol += lu.solve(rhs - M * sol);
            Dir dir;
            dir.dx = sol.head(n);
            dir.dy = sol.tail(me);
            if (mi) {
                dir.ds = -rs - D.C * dir.dx;
                dir.dz = (rc - o.z.cwiseProduct(dir.ds)).cwiseQuotient(o.s);
            }
            return dir;
        };

        Dir dir;
        if (mi) {
            const VectorXd rc_aff = -o.s.cwiseProduct(o.z);
            const Dir aff = solve_dir(rc_aff);
            const double ap = max_step(o.s, aff.ds);
            const double ad = max_step(o.z, aff.dz);
            const double mu_aff =
                (o.s + ap * aff.ds).dot(o.z + ad * aff.dz) / static_cast<double>(mi);
            const double sigma = std::pow(std::clamp(mu_aff / std::max(mu, 1e-300), 0.0, 1.0), 3);
            const VectorXd rc =
                (-o.s.cwiseProduct(o.z) - aff.ds.cwiseProduct(aff.dz)).array() + sigma * mu;
            dir = solve_dir(rc);
        } else {
            dir = solve_dir(VectorXd());
        }
        if (!dir.dx.allFinite() || (me && !dir.dy.allFinite())) {
            o.diverged = true;
            return o;
        }

        const double tau = 0.995;
        double alpha = 1.0;
        if (mi) alpha = std::min(1.0, tau * std::min(max_step(o.s, dir.ds), max_step(o.z, dir.dz)));

        if (!prog.quadratic) {
            // Damped Newton: backtrack until the KKT residual decreases.
            const double target = mi ? 0.1 * mu : 0.0;
            const double base = kkt_norm(o.x, o.y, o.z, o.s, target);
            for (int ls = 0; ls < 30; ++ls) {
                const double trial = kkt_norm(o.x + alpha * dir.dx, o.y + alpha * dir.dy, mi ? VectorXd(o.z + alpha * dir.dz) : o.z,
                                              mi ? VectorXd(o.s + alpha * dir.ds) : o.s, target);
                if (std::isfinite(trial) && trial <= (1.0 - 1e-4 * alpha) * base) break;
                alpha *= 0.5;
            }
        }

        o.x += alpha * dir.dx;
        if (me) o.y += alpha * dir.dy;
        if (mi) {
            o.s += alpha * dir.ds;
            o.z += alpha * dir.dz;
            // Guard against underflow to exactly zero.
            for (Eigen::Index i = 0; i < mi; ++i) {
                o.s(i) = std::max(o.s(i), 1e-300);
                o.z(i) = std::max(o.z(i), 1e-300);
            }
        }
    }
    o.iterations = iter_cap;
    o.res = measure(D, prog.gradient(o.x), o.x, o.y, o.z);
    o.converged = o.res.max() <= tol;
    return o;
}

// Minimizes total constraint violation; returns the optimal violation.
inline double phase_one(const ConvexProgram& prog, const DenseRows& D, double tol, int iter_cap) {
    const int n = prog.n;
    const int me = static_cast<int>(D.A.rows());
    const int mi = static_cast<int>(D.C.rows());
    const int nv = n + 2 * me + mi;
    LinearConstraintSet rows;
    rows.num_vars = nv;
    int sub = 0;
    for (int k = 0; k < me; ++k) {
        LinearRow r;
        r.sense = Sense::Equal;
        r.rhs = D.b(k);
        r.tag = {RowKind::Other, 0, ++sub};
        for (int j = 0; j < n; ++j)
            if (D.A(k, j) != 0.0) r.coeffs.emplace_back(j, D.A(k, j));
        r.coeffs.emplace_back(n + k, 1.0);
        r.coeffs.emplace_back(n + me + k, -1.0);
        rows.add(std::move(r));
    }
    for (int k = 0; k < mi; ++k) {
        LinearRow r;
        r.rhs = D.d(k);
        r.tag = {RowKind::Other, 0, ++sub};
        for (const auto& [j, c] : D.c_sparse[k]) r.coeffs.emplace_back(j, c);
        r.coeffs.emplace_back(n + 2 * me + k, -1.0);
        rows.add(std::move(r));
    }
    for (int j = n; j < nv; ++j) rows.add({{{j, -1.0}}, Sense::LessEqual, 0.0, {RowKind::Other, 0, ++sub}});
    VectorXd c = VectorXd::Zero(nv);
    c.tail(nv - n).setOnes();
    MatrixXd Q = MatrixXd::Zero(nv, nv);
    Q.topLeftCorner(n, n).diagonal().setConstant(1e-10);
    ConvexProgram p1 = make_quadratic_program(Q, c, std::move(rows));
    const DenseRows D1 = densify(p1);
    const IpmOutcome o = run_ipm(p1, D1, tol, iter_cap);
    return o.x.tail(nv - n).sum();
}

}  // namespace detail

/// Recomputes the KKT residuals of a candidate primal-dual pair.
inline KktReport verify_kkt(const ConvexProgram& prog, const SolveResult& res) {
    detail::check_dims(prog);
    const auto& rows = prog.constraints.rows;
    if (res.x.size() != prog.n || res.duals.size() != static_cast<Eigen::Index>(rows.size()))
        throw DomainError("verify_kkt: result dimensions do not match the program");
    KktReport rep;
    rep.stationarity = prog.gradient(res.x);
    rep.primal = VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    rep.complementarity = VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    rep.min_inequality_dual = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double mult = res.duals(static_cast<Eigen::Index>(i));
        double lhs = 0.0;
        for (const auto& [j, c] : r.coeffs) lhs += c * res.x(j);
        if (r.sense == Sense::Equal) {
            for (const auto& [j, c] : r.coeffs) rep.stationarity(j) -= mult * c;
            rep.primal(static_cast<Eigen::Index>(i)) = std::abs(lhs - r.rhs);
        } else {
            for (const auto& [j, c] : r.coeffs) rep.stationarity(j) += mult * c;
            rep.primal(static_cast<Eigen::Index>(i)) = std::max(0.0, lhs - r.rhs);
            rep.complementarity(static_cast<Eigen::Index>(i)) = std::abs(mult * (r.rhs - lhs));
            rep.min_inequality_dual = std::min(rep.min_inequality_dual, mult);
        }
    }
    auto sup = [](const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
    rep.sup = {sup(rep.stationarity), sup(rep.primal), sup(rep.complementarity)};
    if (!std::isfinite(rep.min_inequality_dual)) rep.min_inequality_dual = 0.0;
    return rep;
}

inline SolveResult solve_convex(const ConvexProgram& prog, double tol = 1e-8, int iter_cap = 200) {
    if (!(tol > 0.0)) throw DomainError("solve_convex: tol must be positive");
    detail::check_dims(prog);
    const detail::DenseRows D = detail::densify(prog);
    const detail::IpmOutcome o = detail::run_ipm(prog, D, tol, iter_cap);

    SolveResult r;
    r.x = o.x;
    r.iterations = o.iterations;
    r.residuals = o.res;
    r.duals = VectorXd::Zero(static_cast<Eigen::Index>(prog.constraints.rows.size()));
    for (std::size_t k = 0; k < D.eq_rows.size(); ++k) r.duals(D.eq_rows[k]) = o.y(static_cast<Eigen::Index>(k));
    for (std::size_t k = 0; k < D.in_rows.size(); ++k) r.duals(D.in_rows[k]) = o.z(static_cast<Eigen::Index>(k));
    r.primal_objective = prog.objective(o.x);
    const VectorXd grad = prog.gradient(o.x);
    r.dual_objective = r.primal_objective - grad.dot(o.x) + (D.A.rows() ? D.b.dot(o.y) : 0.0) -
                       (D.C.rows() ? D.d.dot(o.z) : 0.0);

    if (o.converged) {
        r.status = SolveStatus::Optimal;
        const double thr = std::sqrt(tol);
        if (D.C.rows()) {
            const VectorXd slack = D.d - D.C * o.x;
            for (Eigen::Index i = 0; i < slack.size(); ++i)
                if (std::abs(slack(i)) <= thr && o.z(i) <= thr) r.degenerate = true;
        }
        r.message = "optimal after " + std::to_string(o.iterations) + " iterations";
        return r;
    }

    const double violation = detail::phase_one(prog, D, std::max(tol, 1e-9), iter_cap);
    const double scale = 1.0 + (D.b.size() ? D.b.cwiseAbs().maxCoeff() : 0.0) +
                         (D.d.size() ? D.d.cwiseAbs().maxCoeff() : 0.0);
    if (violation > 1e-6 * scale) {
        r.status = SolveStatus::Infeasible;
        r.message = "constraints infeasible (minimum total violation " + std::to_string(violation) + ")";
    } else if (o.diverged && o.x.cwiseAbs().maxCoeff() > 1e10) {
        r.status = SolveStatus::Unbounded;
        r.message = "objective unbounded below along the feasible set";
    } else {
        r.status = SolveStatus::IterLimit;
        r.message = "no convergence within " + std::to_string(iter_cap) + " iterations (max residual " +
                    std::to_string(o.res.max()) + ")";
    }
    return r;
}

}  // namespace storage_pricer
