#pragma once
// Pseudo-transient continuation with JFNK/GMRES inner solves, SER time-step growth and the
// preconditioner interface (identity, element-Jacobi).

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "pmgflow/gmres.hpp"
#include "pmgflow/jacobian.hpp"
#include "pmgflow/stats.hpp"

namespace pmgflow {

struct PtcConfig {
    double dtau_init = 1.0;
    double dtau_max = std::numeric_limits<double>::infinity();
    double dtau_ratio = 1.0;  ///< dtau / dt in unsteady runs
    bool ser = false;
    bool ser_as_printed = false;
    int max_iters = 100;
    double rtol = 1e-4;
    double atol = 0.0;  ///< 0 disables the absolute test
    bool steady = false;
    int refresh_every = 0;  ///< refresh the preconditioner every N iterations (0: never inside a solve)
    double fd_eps = kDefaultFdEps;

    void validate() const {
        if (!(dtau_init > 0.0)) throw ConfigError("ptc.dtau_init must be > 0");
        if (!(dtau_max > 0.0)) throw ConfigError("ptc.dtau_max must be > 0");
        if (!(dtau_ratio > 0.0)) throw ConfigError("ptc.dtau_ratio must be > 0");
        if (max_iters < 1) throw ConfigError("ptc.max_iters must be >= 1");
        if (rtol < 0.0 || atol < 0.0) throw ConfigError("ptc tolerances must be >= 0");
        if (rtol == 0.0 && atol == 0.0) throw ConfigError("ptc.rtol or ptc.atol must be set");
        if (refresh_every < 0) throw ConfigError("ptc.refresh_every must be >= 0");
    }
};

/// Next pseudo-time step from successive residual norms.
inline double ser_update(double dtau, double fnorm_old, double fnorm_new, double dtau_max, bool as_printed = false) {
    if (fnorm_old == 0.0 || fnorm_new == 0.0) return dtau_max;
    const double ratio = as_printed ? fnorm_new / fnorm_old : fnorm_old / fnorm_new;
    return std::min(dtau * ratio, dtau_max);
}

using ResidualFn = std::function<void(const Field&, Field&)>;

/// dq/dt = R(q): either the FR residual of `disc` or a custom callback (ODE oracles).
/// `jacobian`, when set, gives the exact action X -> (dR/dq) X and replaces finite differences.
struct SemiDiscrete {
    const Discretization* disc = nullptr;
    ResidualFn custom;
    LinearOperator jacobian;

    SemiDiscrete() = default;
    explicit SemiDiscrete(const Discretization& d) : disc(&d) {}
    explicit SemiDiscrete(ResidualFn f) : custom(std::move(f)) {}

    bool valid() const { return disc || custom; }

    void residual(const Field& q, Field& R) const {
        if (custom) {
            if (!R.same_layout(q)) R = q.zeros_like();
            custom(q, R);
        } else {
            disc->residual(q, R);
        }
    }

    /// Y = shift X - (dR/dq) X at q, with R(q) = Rq.
    void shifted_jacobian(const Field& q, const Field& Rq, double shift, double eps, ConstSpan X, MutSpan Y) const {
        if (jacobian) {
            jacobian(X, Y);
            for (std::size_t i = 0; i < X.size(); ++i) Y[i] = shift * X[i] - Y[i];
            return;
        }
        jfnk_matvec_with([this](const Field& a, Field& r) { residual(a, r); }, q, Rq, shift, eps, X, Y);
    }
};

/// F(q) = inv_adt q - R(q) - rhs. Steady problems use inv_adt = 0 and no rhs.
struct StageOperator {
    SemiDiscrete sys;
    double inv_adt = 0.0;
    const Field* rhs = nullptr;

    void residual(const Field& q, Field& R) const { sys.residual(q, R); }

    void eval(const Field& q, const Field& Rq, Field& F) const {
        if (!F.same_layout(q)) F = q.zeros_like();
        const auto& qd = q.data();
        const auto& rd = Rq.data();
        auto& fd = F.data();
        for (std::size_t i = 0; i < qd.size(); ++i) fd[i] = inv_adt * qd[i] - rd[i];
        if (rhs)
            for (std::size_t i = 0; i < qd.size(); ++i) fd[i] -= rhs->data()[i];
    }

    Field eval(const Field& q) const {
        Field R = q.zeros_like(), F;
        residual(q, R);
        eval(q, R, F);
        return F;
    }
};

/// Approximates the inverse of (shift I - dR/dq) at the current outer iterate.
class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual std::string name() const = 0;
    /// Re-linearize at q (start of a physical step, or periodically in steady runs).
    virtual void refresh(const Discretization& d, const Field& q) = 0;
    /// Called before each linear solve. dtau_inv is the pseudo-time part of shift (0 for ROW).
    virtual void prepare(const Discretization& d, const Field& q, const Field& Rq, double shift, double dtau_inv) = 0;
    virtual void apply(ConstSpan X, MutSpan Y) = 0;

    int vcycles = 0;
    int fallbacks = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    std::string name() const override { return "none"; }
    void refresh(const Discretization&, const Field&) override {}
    void prepare(const Discretization&, const Field&, const Field&, double, double) override {}
    void apply(ConstSpan X, MutSpan Y) override { vec::copy(X, Y); }
};

/// Y = D^{-1} X with factorized shifted element blocks.
inline void ej_apply(const BlockDiagonal& blocks, ConstSpan X, MutSpan Y) { blocks.solve(X, Y); }

class ElementJacobiPreconditioner final : public Preconditioner {
public:
    explicit ElementJacobiPreconditioner(double eps = kDefaultFdEps) : eps_(eps) {}
    std::string name() const override { return "ej"; }

    void refresh(const Discretization& d, const Field& q) override {
        const Field Rq = d.residual(q);
        blocks_ = assemble_element_blocks(d, q, Rq, eps_);
        fresh_ = true;
    }

    void prepare(const Discretization& d, const Field& q, const Field&, double shift, double) override {
        if (blocks_.size() == 0 || !blocks_.layout().same_layout(q)) refresh(d, q);
        if (fresh_ || !blocks_.factored() || blocks_.shift() != shift) blocks_.factorize(shift);
        fresh_ = false;
    }

    void apply(ConstSpan X, MutSpan Y) override { ej_apply(blocks_, X, Y); }

    const BlockDiagonal& blocks() const { return blocks_; }

private:
    double eps_;
    BlockDiagonal blocks_;
    bool fresh_ = false;
};

struct PtcResult {
    bool converged = false;
    int iterations = 0;
    int gmres_iterations = 0;
    int vcycles = 0;  ///< solver-mode V-cycles
    double initial_norm = 0.0;
    double final_norm = 0.0;
    double final_dtau = 0.0;
};

using ResidualCallback = std::function<void(int iter, double abs, double rel, double dtau)>;

/// Solve F(q) = 0 by PTC; q holds the initial guess and receives the best iterate.
inline PtcResult ptc_solve(const StageOperator& op, Field& q, const PtcConfig& cfg, const KrylovConfig& kcfg,
                           Preconditioner* pc = nullptr, const ResidualCallback& log = {}) {
    cfg.validate();
    kcfg.validate();
    if (pc && !op.sys.disc) throw ConfigError("preconditioner requires a discretization");
    if (!op.sys.valid()) throw ConfigError("stage operator has no residual");
    PtcResult res;

    Field Rq = q.zeros_like(), F;
    op.residual(q, Rq);
    op.eval(q, Rq, F);
    double fnorm = vec::norm2(F.data());
    res.initial_norm = res.final_norm = fnorm;
    double dtau = cfg.dtau_init;
    res.final_dtau = dtau;
    if (log) log(0, fnorm, fnorm == 0.0 ? 0.0 : 1.0, dtau);
    auto done = [&](double fn) { return fn <= cfg.rtol * res.initial_norm || (cfg.atol > 0.0 && fn <= cfg.atol); };
    if (fnorm == 0.0 || done(fnorm)) {
        res.converged = true;
        return res;
    }

    Field best = q, qn = q.zeros_like(), Rn = q.zeros_like(), Fn;
    double best_norm = fnorm;
    Vec b(F.size()), dq(F.size());
    for (int k = 1; k <= cfg.max_iters; ++k) {
        if (pc && cfg.refresh_every > 0 && k > 1 && (k - 1) % cfg.refresh_every == 0) pc->refresh(*op.sys.disc, q);
        bool retried = false;
        while (true) {
            const double dtau_inv = std::isinf(dtau) ? 0.0 : 1.0 / dtau;
            const double shift = dtau_inv + op.inv_adt;
            try {
                if (pc) pc->prepare(*op.sys.disc, q, Rq, shift, dtau_inv);
                for (std::size_t i = 0; i < b.size(); ++i) b[i] = -F.data()[i];
                vec::fill(dq, 0.0);
                LinearOperator A = [&](ConstSpan X, MutSpan Y) {
                    op.sys.shifted_jacobian(q, Rq, shift, cfg.fd_eps, X, Y);
                };
                LinearOperator M;
                if (pc) M = [&](ConstSpan X, MutSpan Y) { pc->apply(X, Y); };
                const auto lin = gmres_solve(A, b, dq, M, kcfg);
                res.gmres_iterations += lin.iterations;
                for (std::size_t i = 0; i < dq.size(); ++i) qn.data()[i] = q.data()[i] + dq[i];
                op.residual(qn, Rn);
                break;
            } catch (const NonPhysicalState&) {
                if (retried) throw SolverError("PTC: non-physical update persists after halving the pseudo-time step");
                retried = true;
                dtau = std::isinf(dtau) ? (std::isinf(cfg.dtau_max) ? cfg.dtau_init : cfg.dtau_max) : 0.5 * dtau;
            }
        }
        std::swap(q, qn);
        std::swap(Rq, Rn);
        op.eval(q, Rq, Fn);
        std::swap(F, Fn);
        const double fold = fnorm;
        fnorm = vec::norm2(F.data());
        res.iterations = k;
        if (!std::isfinite(fnorm)) throw SolverError("PTC: non-finite residual at iteration " + std::to_string(k));
        if (cfg.ser) dtau = ser_update(dtau, fold, fnorm, cfg.dtau_max, cfg.ser_as_printed);
        res.final_dtau = dtau;
        if (log) log(k, fnorm, fnorm / res.initial_norm, dtau);
        if (fnorm < best_norm) {
            best_norm = fnorm;
            best = q;
        }
        if (done(fnorm)) {
            res.converged = true;
            res.final_norm = fnorm;
            return res;
        }
    }
    q = best;
    res.final_norm = best_norm;
    return res;
}

}  // namespace pmgflow
