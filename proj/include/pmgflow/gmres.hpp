#pragma once
// Restarted, right-preconditioned GMRES with modified Gram-Schmidt and Givens rotations.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pmgflow/core.hpp"

namespace pmgflow {

using LinearOperator = std::function<void(ConstSpan, MutSpan)>;

struct KrylovConfig {
    int kdim = 30;          ///< maximum Krylov dimension per cycle
    int max_restarts = 0;   ///< extra cycles after the first
    double rtol = 1e-3;     ///< on ||b - A x|| / ||b||
    void validate() const {
        if (kdim < 1) throw ConfigError("gmres.kdim must be >= 1");
        if (max_restarts < 0) throw ConfigError("gmres.max_restarts must be >= 0");
        if (!(rtol > 0.0)) throw ConfigError("gmres.rtol must be > 0");
    }
};

struct GmresResult {
    int iterations = 0;
    double rel_residual = 0.0;
    bool converged = false;
    std::vector<double> history;  ///< relative residual estimate after each inner iteration
};

/// Solve A x = b; x holds the initial guess on entry. `precond` (may be empty) applies M^{-1}.
inline GmresResult gmres_solve(const LinearOperator& A, ConstSpan b, MutSpan x, const LinearOperator& precond,
                               const KrylovConfig& cfg) {
    cfg.validate();
    const std::size_t n = b.size();
    const int m = cfg.kdim;
    GmresResult res;
    const double bnorm = vec::norm2(b);
    if (!std::isfinite(bnorm)) throw SolverError("GMRES: non-finite right-hand side");
    if (bnorm == 0.0) {
        vec::fill(x, 0.0);
        res.converged = true;
        return res;
    }

    std::vector<Vec> V(m + 1, Vec(n));
    std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
    std::vector<double> cs(m), sn(m), g(m + 1), y(m);
    Vec w(n), z(n), r(n);

    auto residual = [&](MutSpan out) {
        A(x, out);
        for (std::size_t i = 0; i < n; ++i) out[i] = b[i] - out[i];
    };
    auto apply_precond = [&](ConstSpan in, MutSpan out) {
        if (precond) {
            precond(in, out);
        } else {
            vec::copy(in, out);
        }
    };

    if (vec::norm_inf(x) == 0.0) {
        vec::copy(b, r);
    } else {
        residual(r);
    }
    double beta = vec::norm2(r);
    res.rel_residual = beta / bnorm;
    if (res.rel_residual <= cfg.rtol) {
        res.converged = true;
        return res;
    }

    for (int cycle = 0; cycle <= cfg.max_restarts; ++cycle) {
        for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        int j = 0;
        bool done = false;
        for (; j < m; ++j) {
            apply_precond(V[j], z);
            A(z, w);
            const double wn0 = vec::norm2(w);
            for (int i = 0; i <= j; ++i) {
                H[i][j] = vec::dot(w, V[i]);
                vec::axpy(-H[i][j], V[i], w);
            }
            const double hn = vec::norm2(w);
            H[j + 1][j] = hn;
            if (!std::isfinite(hn)) throw SolverError("GMRES: NaN in Arnoldi at iteration " + std::to_string(res.iterations + 1));
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
                H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
                H[i][j] = t;
            }
            const double den = std::hypot(H[j][j], H[j + 1][j]);
            cs[j] = den == 0.0 ? 1.0 : H[j][j] / den;
            sn[j] = den == 0.0 ? 0.0 : H[j + 1][j] / den;
            H[j][j] = den;
            H[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            ++res.iterations;
            res.rel_residual = std::abs(g[j + 1]) / bnorm;
            res.history.push_back(res.rel_residual);
            const bool breakdown = hn <= 1e-14 * wn0;
            if (res.rel_residual <= cfg.rtol || breakdown) {
                done = true;
                ++j;
                break;
            }
            for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / hn;
        }
        // Back substitution and update x += M^{-1} V y.
        for (int i = j - 1; i >= 0; --i) {
            double s = g[i];
            for (int k = i + 1; k < j; ++k) s -= H[i][k] * y[k];
            y[i] = H[i][i] == 0.0 ? 0.0 : s / H[i][i];
        }
        vec::fill(w, 0.0);
        for (int i = 0; i < j; ++i) vec::axpy(y[i], V[i], w);
        apply_precond(w, z);
        vec::axpy(1.0, z, x);
        if (done) {
            res.converged = true;
            return res;
        }
        if (cycle < cfg.max_restarts) {
            residual(r);
            beta = vec::norm2(r);
            res.rel_residual = beta / bnorm;
            if (res.rel_residual <= cfg.rtol) {
                res.converged = true;
                return res;
            }
        }
    }
    return res;
}

}  // namespace pmgflow
