#pragma once
// Polynomial multigrid: per-element nested level hierarchies, EJ and MBNK smoothers, the FAS
// V-cycle, the PTC-driven pMG solver and the nonlinear pMG preconditioner.
//
// Level operators come in two forms on level l (degree map from nest_hierarchy):
//   full:  F_l(y) = a y - R_l(y)                              (solver mode, y is the state)
//   delta: F_l(y) = a y - (R_l(b_l + y) - R_l(b_l))           (preconditioner mode, y = q_hat - q)
// with b_l the linearization state restricted to level l. Smoothers use the frozen blocks of
// -dR_l/dq at the last setup, shifted by the smoother shift.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pmgflow/newton_krylov.hpp"
#include "pmgflow/p_adapt.hpp"

namespace pmgflow {

enum class SmootherKind { EJ, MBNK };

inline std::string to_string(SmootherKind k) { return k == SmootherKind::EJ ? "ej" : "mbnk"; }

/// "3-1-0" -> {3, 1, 0}; errors name the config key.
inline std::vector<int> parse_dash_ints(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (tok.empty() || used != tok.size()) throw ConfigError(key + ": cannot parse '" + s + "' as a dash-separated integer list");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

inline std::vector<SmootherKind> parse_smoothers(const std::string& s, const std::string& key) {
    std::vector<SmootherKind> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
        if (tok == "ej")
            out.push_back(SmootherKind::EJ);
        else if (tok == "mbnk")
            out.push_back(SmootherKind::MBNK);
        else
            throw ConfigError(key + ": unknown smoother '" + tok + "' (expected ej or mbnk)");
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

struct PmgConfig {
    std::vector<int> levels{3, 1};  ///< hierarchy for p_max elements, strictly decreasing
    std::vector<int> smooth{2, 2};  ///< sweeps per level (pre and post); the coarsest level is smoothed once with its count
    std::vector<SmootherKind> smoother{SmootherKind::EJ};  ///< one per level, or one for all
    int switch_after = 0;  ///< outer iterations before switching to `switch_to` (0: never)
    std::vector<SmootherKind> switch_to{SmootherKind::MBNK};
    double mbnk_rtol = 0.1;
    int mbnk_maxiter = 5;
    double omega = 1.0;
    int m_max = 1;             ///< pseudo-steps per preconditioner application
    bool pseudo_shift = true;  ///< add 1/dtau* = 1/dtau to the preconditioner operator
    double precond_scale = 1e-3;  ///< > 0: run the cycle on X scaled to this 2-norm and unscale Y
    double fd_eps = kDefaultFdEps;

    int num_levels() const { return static_cast<int>(levels.size()); }
    int sweeps(int l) const { return smooth.size() == 1 ? smooth[0] : smooth[l]; }
    SmootherKind kind(int l, bool switched) const {
        const auto& v = switched ? switch_to : smoother;
        return v.size() == 1 ? v[0] : v[l];
    }

    void validate() const {
        if (levels.empty()) throw ConfigError("pmg.levels: empty hierarchy");
        for (std::size_t l = 0; l < levels.size(); ++l) {
            if (levels[l] < 0 || levels[l] > kMaxDegree) throw ConfigError("pmg.levels: degree out of range");
            if (l > 0 && levels[l] >= levels[l - 1]) throw ConfigError("pmg.levels: degrees must strictly decrease");
        }
        if (smooth.size() != 1 && smooth.size() != levels.size())
            throw ConfigError("pmg.smooth: need one count per level (" + std::to_string(levels.size()) + ")");
        for (int n : smooth)
            if (n < 1) throw ConfigError("pmg.smooth: counts must be >= 1");
        for (const auto* v : {&smoother, &switch_to})
            if (v->size() != 1 && v->size() != levels.size())
                throw ConfigError("pmg.smoother: need one smoother per level (" + std::to_string(levels.size()) + ")");
        if (switch_after < 0) throw ConfigError("pmg.switch_after must be >= 0");
        if (!(mbnk_rtol > 0.0)) throw ConfigError("pmg.mbnk.rtol must be > 0");
        if (mbnk_maxiter < 1) throw ConfigError("pmg.mbnk.maxiter must be >= 1");
        if (!(omega > 0.0)) throw ConfigError("pmg.omega must be > 0");
        if (precond_scale < 0.0) throw ConfigError("pmg.precond_scale must be >= 0");
        if (m_max < 1) throw ConfigError("pmg.m_max must be >= 1");
    }

    std::string label() const { return format_hierarchy(levels); }
};

class PMultigrid {
public:
    enum class Form { Full, Delta };

    explicit PMultigrid(PmgConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const PmgConfig& config() const { return cfg_; }
    int num_levels() const { return cfg_.num_levels(); }
    bool ready_for(const Field& q) const { return !levels_.empty() && levels_[0].degrees == q.degrees() && d_; }
    const std::vector<int>& degrees(int l) const { return levels_.at(l).degrees; }
    const BlockDiagonal& blocks(int l) const { return levels_.at(l).blocks; }
    const Discretization& discretization() const { return *d_; }
    bool switched() const { return switched_; }
    SmootherKind kind(int l) const { return cfg_.kind(l, switched_); }
    Form form() const { return form_; }
    double coefficient() const { return a_; }
    double smoother_shift() const { return sshift_; }

    /// Degree maps and frozen smoother linearization at q (restricted level by level).
    void setup(const Discretization& d, const Field& q) {
        d_ = &d;
        const auto maps = level_degree_maps(cfg_.levels, q.degrees());
        levels_.assign(maps.size(), Level{});
        for (std::size_t l = 0; l < maps.size(); ++l) {
            Level& L = levels_[l];
            L.degrees = maps[l];
            L.lin = l == 0 ? q : transfer_field(levels_[l - 1].lin, L.degrees);
            L.Rlin = d.residual(L.lin);
            L.blocks = assemble_element_blocks(d, L.lin, L.Rlin, cfg_.fd_eps);
            if (kind(static_cast<int>(l)) == SmootherKind::MBNK) assemble_sparse(L);
        }
        has_base_ = false;
    }

    void set_switched(bool s) { switched_ = s; }

    /// Full form with coefficient a; smoother blocks shifted by a + extra.
    void use_full(double a, double extra_shift) {
        form_ = Form::Full;
        set_shifts(a, a + extra_shift);
    }

    /// Delta form around q (with R(q) = Rq when given); coefficient and smoother shift both c.
    void use_delta(const Field& q, const Field* Rq, double c) {
        require_setup(q);
        form_ = Form::Delta;
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            Level& L = levels_[l];
            L.base = l == 0 ? q : transfer_field(levels_[l - 1].base, L.degrees);
            if (l == 0 && Rq)
                L.Rbase = *Rq;
            else
                L.Rbase = d_->residual(L.base);
        }
        has_base_ = true;
        set_shifts(c, c);
    }

    /// F_l(y) in the current form.
    void level_operator(int l, const Field& y, Field& F) {
        Level& L = levels_.at(l);
        if (!F.same_layout(y)) F = y.zeros_like();
        auto& f = F.data();
        const auto& yd = y.data();
        if (form_ == Form::Delta) {
            if (!has_base_) throw SolverError("pMG: delta form used before use_delta");
            if (!L.arg.same_layout(y)) L.arg = y.zeros_like();
            for (std::size_t i = 0; i < yd.size(); ++i) L.arg.data()[i] = L.base.data()[i] + yd[i];
            d_->residual(L.arg, L.R);
            for (std::size_t i = 0; i < yd.size(); ++i) f[i] = a_ * yd[i] - (L.R.data()[i] - L.Rbase.data()[i]);
        } else {
            d_->residual(y, L.R);
            for (std::size_t i = 0; i < yd.size(); ++i) f[i] = a_ * yd[i] - L.R.data()[i];
        }
    }

    /// n damped block-Jacobi sweeps: y += omega D^{-1} (S - F(y)).
    void smooth_ej(int l, Field& y, const Field& S, int n) {
        Level& L = levels_.at(l);
        factor_blocks(L);
        Field F, r = y.zeros_like();
        Vec dy(y.size());
        for (int s = 0; s < n; ++s) {
            level_operator(l, y, F);
            for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = S.data()[i] - F.data()[i];
            L.blocks.solve(r.data(), dy);
            vec::axpy(cfg_.omega, dy, y.data());
        }
    }

    /// n Newton updates, each solved by ILU0-preconditioned matrix-based GMRES.
    void smooth_mbnk(int l, Field& y, const Field& S, int n) {
        Level& L = levels_.at(l);
        if (!L.jac) assemble_sparse(L);
        if (!L.ilu || L.ilu_shift != sshift_) {
            L.shifted = *L.jac;
            L.shifted.add_to_diagonal(sshift_);
            L.ilu.emplace(L.shifted);
            L.ilu_shift = sshift_;
        }
        KrylovConfig kc;
        kc.kdim = cfg_.mbnk_maxiter;
        kc.rtol = cfg_.mbnk_rtol;
        const LinearOperator A = [&L](ConstSpan X, MutSpan Y) { L.shifted.multiply(X, Y); };
        const LinearOperator M = [&L](ConstSpan X, MutSpan Y) { L.ilu->apply(X, Y); };
        Field F, r = y.zeros_like();
        Vec dy(y.size());
        for (int s = 0; s < n; ++s) {
            level_operator(l, y, F);
            for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = S.data()[i] - F.data()[i];
            vec::fill(dy, 0.0);
            const auto res = gmres_solve(A, r.data(), dy, M, kc);
            mbnk_iterations += res.iterations;
            vec::axpy(1.0, dy, y.data());
        }
    }

    void smooth(int l, Field& y, const Field& S, int n) {
        if (kind(l) == SmootherKind::EJ)
            smooth_ej(l, y, S, n);
        else
            smooth_mbnk(l, y, S, n);
    }

    /// Factorize level l's blocks at the current smoother shift (no-op when already done).
    void factor(int l) { factor_blocks(levels_.at(l)); }

    Field restrict_to(int l, const Field& y) const { return transfer_field(y, levels_.at(l + 1).degrees); }
    Field prolong_to(int l, const Field& yc) const { return transfer_field(yc, levels_.at(l).degrees); }

    /// One V-cycle on F_0(y) = S starting from y.
    void vcycle(Field& y, const Field& S) { cycle(0, y, S); }

    int mbnk_iterations = 0;

private:
    struct Level {
        std::vector<int> degrees;
        Field lin, Rlin;    // smoother linearization state
        Field base, Rbase;  // delta-form base
        BlockDiagonal blocks;
        std::optional<SparseBlockMatrix> jac;
        SparseBlockMatrix shifted;
        std::optional<BlockILU0> ilu;
        double ilu_shift = std::numeric_limits<double>::quiet_NaN();
        Field R, arg;
    };

    void require_setup(const Field& q) const {
        if (!ready_for(q)) throw SolverError("pMG: hierarchy not set up for this degree map");
    }

    void assemble_sparse(Level& L) {
        L.jac = assemble_sparse_jacobian(*d_, L.lin, L.Rlin, cfg_.fd_eps);
        L.ilu.reset();
    }

    void factor_blocks(Level& L) {
        if (!L.blocks.factored() || L.blocks.shift() != sshift_) L.blocks.factorize(sshift_);
    }

    void set_shifts(double a, double s) {
        if (levels_.empty()) throw SolverError("pMG: setup has not been called");
        a_ = a;
        sshift_ = s;
    }

    void cycle(int l, Field& y, const Field& S) {
        const int n = cfg_.sweeps(l);
        if (l == num_levels() - 1) {
            smooth(l, y, S, n);
            return;
        }
        smooth(l, y, S, n);
        Field F;
        level_operator(l, y, F);
        Field d = S;
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] -= F.data()[i];
        Field yc = restrict_to(l, y);
        const Field yb = yc;
        Field Sc;
        level_operator(l + 1, yc, Sc);
        const Field dc = restrict_to(l, d);
        for (std::size_t i = 0; i < Sc.size(); ++i) Sc.data()[i] += dc.data()[i];
        cycle(l + 1, yc, Sc);
        for (std::size_t i = 0; i < yc.size(); ++i) yc.data()[i] -= yb.data()[i];
        const Field C = prolong_to(l, yc);
        vec::axpy(1.0, C.data(), y.data());
        smooth(l, y, S, n);
    }

    PmgConfig cfg_;
    const Discretization* d_ = nullptr;
    std::vector<Level> levels_;
    Form form_ = Form::Full;
    bool has_base_ = false;
    bool switched_ = false;
    double a_ = 0.0, sshift_ = 0.0;
};

/// Nonlinear pMG preconditioner: m_max backward-Euler pseudo-steps on
///   c Y - (R(q + Y) - R(q)) = X,  c = shift (+ 1/dtau* when pseudo_shift),
/// each approximated by one V-cycle from Y = 0.
class PmgPreconditioner final : public Preconditioner {
public:
    explicit PmgPreconditioner(PmgConfig cfg = {}) : mg_(std::move(cfg)) {}
    std::string name() const override { return "pmg " + mg_.config().label(); }

    void refresh(const Discretization& d, const Field& q) override {
        mg_.setup(d, q);
        outer_ = 0;
    }

    void prepare(const Discretization& d, const Field& q, const Field& Rq, double shift, double dtau_inv) override {
        if (!mg_.ready_for(q)) refresh(d, q);
        const auto& c = mg_.config();
        mg_.set_switched(c.switch_after > 0 && outer_ >= c.switch_after);
        ++outer_;
        dtau_inv_ = c.pseudo_shift ? dtau_inv : 0.0;
        mg_.use_delta(q, &Rq, shift + dtau_inv_);
    }

    void apply(ConstSpan X, MutSpan Y) override {
        const Field& layout = mg_.blocks(0).layout();
        Field y = layout.zeros_like(), S = layout.zeros_like();
        const double xn = vec::norm2(X);
        const double ps = mg_.config().precond_scale;
        const double s = ps > 0.0 && xn > 0.0 ? ps / xn : 1.0;
        try {
            for (int m = 0; m < mg_.config().m_max; ++m) {
                for (std::size_t i = 0; i < S.size(); ++i) S.data()[i] = s * X[i] + dtau_inv_ * y.data()[i];
                mg_.vcycle(y, S);
                ++vcycles;
            }
            for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = y.data()[i] / s;
        } catch (const NonPhysicalState&) {
            ++fallbacks;
            mg_.factor(0);
            mg_.blocks(0).solve(X, Y);
        }
    }

    PMultigrid& multigrid() { return mg_; }

private:
    PMultigrid mg_;
    double dtau_inv_ = 0.0;
    int outer_ = 0;
};

/// One-shot preconditioner application at q (builds the hierarchy, then applies it once).
inline void pmg_precondition(const Discretization& d, const Field& q, const PmgConfig& cfg, double shift,
                             double dtau_inv, ConstSpan X, MutSpan Y) {
    PmgPreconditioner pc(cfg);
    pc.refresh(d, q);
    pc.prepare(d, q, d.residual(q), shift, dtau_inv);
    pc.apply(X, Y);
}

/// Nonlinear pMG solver: PTC outer loop, one V-cycle on
///   (inv_adt + 1/dtau) q - R(q) = rhs + q^k / dtau
/// per iteration. Uses the frozen linearization of the last mg.setup (redone when the degree map
/// changes or every cfg.refresh_every iterations).
inline PtcResult pmg_solve(const StageOperator& op, Field& q, const PtcConfig& cfg, PMultigrid& mg,
                           const ResidualCallback& log = {}) {
    cfg.validate();
    if (!op.sys.disc) throw ConfigError("pmg solver requires a discretization");
    const Discretization& d = *op.sys.disc;
    if (!mg.ready_for(q)) mg.setup(d, q);
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

    const int sw = mg.config().switch_after;
    Field best = q, y, S = q.zeros_like();
    double best_norm = fnorm;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        if (cfg.refresh_every > 0 && k > 1 && (k - 1) % cfg.refresh_every == 0) mg.setup(d, q);
        mg.set_switched(sw > 0 && k > sw);
        bool retried = false;
        while (true) {
            const double dtau_inv = std::isinf(dtau) ? 0.0 : 1.0 / dtau;
            try {
                mg.use_full(op.inv_adt + dtau_inv, 0.0);
                for (std::size_t i = 0; i < S.size(); ++i)
                    S.data()[i] = dtau_inv * q.data()[i] + (op.rhs ? op.rhs->data()[i] : 0.0);
                y = q;
                mg.vcycle(y, S);
                op.residual(y, Rq);
                break;
            } catch (const NonPhysicalState&) {
                if (retried) throw SolverError("pMG: non-physical update persists after halving the pseudo-time step");
                retried = true;
                dtau = std::isinf(dtau) ? (std::isinf(cfg.dtau_max) ? cfg.dtau_init : cfg.dtau_max) : 0.5 * dtau;
            }
        }
        std::swap(q, y);
        op.eval(q, Rq, F);
        const double fold = fnorm;
        fnorm = vec::norm2(F.data());
        res.iterations = res.vcycles = k;
        if (!std::isfinite(fnorm)) throw SolverError("pMG: non-finite residual at V-cycle " + std::to_string(k));
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
