#pragma once
// ESDIRK (PTC per implicit stage) and ROW (one preconditioned GMRES solve per stage) steppers.

#include <functional>
#include <string>
#include <vector>

#include "pmgflow/newton_krylov.hpp"
#include "pmgflow/tableau.hpp"

namespace pmgflow {

/// Raised when a stage solve misses its tolerance; the step's stats are already recorded.
class ConvergenceFailure : public SolverError {
public:
    using SolverError::SolverError;
};

struct StepSettings {
    PtcConfig ptc;
    KrylovConfig krylov;
    int step_index = 0;
    /// ESDIRK: keep going with the best iterate when PTC exhausts its budget.
    bool tolerate_ptc_failure = false;
    /// ESDIRK stage solver replacing ptc_solve (e.g. the pMG solver); receives the stage operator.
    std::function<PtcResult(const StageOperator&, Field&, const PtcConfig&, const ResidualCallback&)> stage_solver;
};

/// Explicit part of the ESDIRK stage equation: (q^n + dt sum_{j<i} a_ij R_j) / (a_ii dt).
inline void stage_rhs(const Tableau& t, int i, double dt, const Field& qn, const std::vector<Field>& R, Field& rhs) {
    if (!rhs.same_layout(qn)) rhs = qn.zeros_like();
    const double inv = 1.0 / (t.a(i, i) * dt);
    auto& o = rhs.data();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = qn.data()[k];
    for (int j = 0; j < i; ++j)
        if (t.a(i, j) != 0.0) vec::axpy(dt * t.a(i, j), R[j].data(), o);
    vec::scale(inv, o);
}

/// Stage function F(q) for stage i of an ESDIRK scheme, given the residuals of earlier stages.
inline Field stage_function(const SemiDiscrete& sys, const Field& q, const Tableau& t, int i, double dt, const Field& qn,
                            const std::vector<Field>& R) {
    Field rhs;
    stage_rhs(t, i, dt, qn, R, rhs);
    StageOperator op;
    op.sys = sys;
    op.inv_adt = 1.0 / (t.a(i, i) * dt);
    op.rhs = &rhs;
    return op.eval(q);
}

namespace detail {

struct StageClock {
    Stopwatch sw;
    int vc0 = 0, fb0 = 0;
    explicit StageClock(const Preconditioner* pc) : vc0(pc ? pc->vcycles : 0), fb0(pc ? pc->fallbacks : 0) {}
    void finish(StageRecord& r, const Preconditioner* pc) const {
        r.wall_time = sw.seconds();
        if (pc) {
            r.vcycles = pc->vcycles - vc0;
            r.fallbacks = pc->fallbacks - fb0;
        }
    }
};

}  // namespace detail

/// One ESDIRK step; q holds q^n on entry and q^{n+1} on exit.
inline void esdirk_step(const SemiDiscrete& sys, Field& q, double dt, const Tableau& t, const StepSettings& set,
                        Preconditioner* pc, SolverStats& stats) {
    if (t.kind != SchemeKind::Esdirk) throw ConfigError("esdirk_step needs an ESDIRK tableau");
    if (!(dt > 0.0)) throw ConfigError("time.dt must be > 0");
    const Stopwatch total;
    const int s = t.stages();
    const Field qn = q;
    std::vector<Field> R(s, q.zeros_like());
    sys.residual(qn, R[0]);
    if (pc && sys.disc) pc->refresh(*sys.disc, qn);

    PtcConfig pcfg = set.ptc;
    if (!pcfg.steady) pcfg.dtau_init = pcfg.dtau_ratio * dt;
    Field qi = qn, rhs;
    for (int i = 1; i < s; ++i) {
        detail::StageClock clock(pc);
        stage_rhs(t, i, dt, qn, R, rhs);
        StageOperator op;
        op.sys = sys;
        op.inv_adt = 1.0 / (t.a(i, i) * dt);
        op.rhs = &rhs;
        StageRecord rec;
        rec.step = set.step_index;
        rec.stage = i;
        const ResidualCallback log = [&](int k, double a, double r, double dtau) {
            stats.history.push_back({set.step_index, i, k, a, r, dtau});
        };
        const auto res = set.stage_solver ? set.stage_solver(op, qi, pcfg, log)
                                          : ptc_solve(op, qi, pcfg, set.krylov, sys.disc ? pc : nullptr, log);
        rec.ptc_iters = res.iterations;
        rec.gmres_iters = res.gmres_iterations;
        rec.converged = res.converged;
        rec.final_residual = res.final_norm;
        clock.finish(rec, pc);
        rec.vcycles += res.vcycles;
        stats.stages.push_back(rec);
        if (!res.converged && !set.tolerate_ptc_failure)
            throw ConvergenceFailure("PTC did not converge in step " + std::to_string(set.step_index) + ", stage " +
                                     std::to_string(i) + " (" + std::to_string(res.iterations) + " iterations)");
        sys.residual(qi, R[i]);
    }
    for (int i = 0; i < s; ++i)
        if (t.b(i) != 0.0) vec::axpy(dt * t.b(i), R[i].data(), q.data());
    stats.total_time += total.seconds();
}

/// One ROW step with the Jacobian frozen at q^n (finite-difference matvec).
inline void row_step(const SemiDiscrete& sys, Field& q, double dt, const Tableau& t, const StepSettings& set,
                     Preconditioner* pc, SolverStats& stats) {
    if (t.kind != SchemeKind::Row) throw ConfigError("row_step needs a ROW tableau");
    if (!(dt > 0.0)) throw ConfigError("time.dt must be > 0");
    const Stopwatch total;
    const int s = t.stages();
    const Field qn = q;
    Field Rn = q.zeros_like();
    sys.residual(qn, Rn);
    const double shift = 1.0 / (t.gamma * dt);
    Preconditioner* P = sys.disc ? pc : nullptr;
    if (P) {
        P->refresh(*sys.disc, qn);
        P->prepare(*sys.disc, qn, Rn, shift, 0.0);
    }
    const double eps = set.ptc.fd_eps;
    LinearOperator A = [&](ConstSpan X, MutSpan Y) { sys.shifted_jacobian(qn, Rn, shift, eps, X, Y); };
    LinearOperator M;
    if (P) M = [&](ConstSpan X, MutSpan Y) { P->apply(X, Y); };

    std::vector<Vec> U(s, Vec(q.size(), 0.0));
    Field qa = qn, Ra = q.zeros_like();
    Vec b(q.size());
    bool failed = false;
    for (int i = 0; i < s; ++i) {
        detail::StageClock clock(P);
        const Field* Rarg = &Rn;
        if (i > 0) {
            qa.data() = qn.data();
            for (int j = 0; j < i; ++j)
                if (t.a(i, j) != 0.0) vec::axpy(t.a(i, j), U[j], qa.data());
            sys.residual(qa, Ra);
            Rarg = &Ra;
        }
        vec::copy(Rarg->data(), b);
        for (int j = 0; j < i; ++j)
            if (t.c(i, j) != 0.0) vec::axpy(t.c(i, j) / dt, U[j], b);
        const auto lin = gmres_solve(A, b, U[i], M, set.krylov);
        StageRecord rec;
        rec.step = set.step_index;
        rec.stage = i;
        rec.gmres_iters = lin.iterations;
        rec.converged = lin.converged;
        rec.final_residual = lin.rel_residual;
        clock.finish(rec, P);
        stats.stages.push_back(rec);
        stats.history.push_back({set.step_index, i, lin.iterations, lin.rel_residual * vec::norm2(b), lin.rel_residual, 0.0});
        if (!lin.converged) {
            failed = true;
            break;
        }
    }
    stats.total_time += total.seconds();
    if (failed)
        throw ConvergenceFailure("GMRES did not reach rtol " + std::to_string(set.krylov.rtol) + " within K_dim = " +
                                 std::to_string(set.krylov.kdim) + " in step " + std::to_string(set.step_index));
    for (int j = 0; j < s; ++j) vec::axpy(t.b(j), U[j], q.data());
}

/// Dispatch on the scheme kind.
inline void time_step(const SemiDiscrete& sys, Field& q, double dt, const Tableau& t, const StepSettings& set,
                      Preconditioner* pc, SolverStats& stats) {
    if (t.kind == SchemeKind::Esdirk)
        esdirk_step(sys, q, dt, t, set, pc, stats);
    else
        row_step(sys, q, dt, t, set, pc, stats);
}

}  // namespace pmgflow
