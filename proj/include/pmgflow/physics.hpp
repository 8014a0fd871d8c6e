#pragma once
// Point-wise physics: Euler / Navier-Stokes and a scalar advection-diffusion model.
//
// Non-dimensionalisation: rho_inf = 1, |U_inf| = 1, p_inf = 1 / (gamma Ma^2),
// mu = rho_inf |U_inf| L_ref / Re.

#include <array>
#include <cmath>
#include <string>

#include "pmgflow/core.hpp"
#include "pmgflow/mesh.hpp"

namespace pmgflow {

enum class EquationKind { Euler, NavierStokes, AdvectionDiffusion };

inline EquationKind parse_equation_kind(const std::string& s) {
    if (s == "euler") return EquationKind::Euler;
    if (s == "navier-stokes") return EquationKind::NavierStokes;
    if (s == "advection-diffusion") return EquationKind::AdvectionDiffusion;
    throw ConfigError("unknown equation kind '" + s + "'");
}

inline std::string to_string(EquationKind k) {
    switch (k) {
        case EquationKind::Euler: return "euler";
        case EquationKind::NavierStokes: return "navier-stokes";
        case EquationKind::AdvectionDiffusion: return "advection-diffusion";
    }
    return "?";
}

struct EquationSpec {
    EquationKind kind = EquationKind::Euler;
    double gamma = 1.4;
    double prandtl = 0.72;
    double mach = 0.5;
    double reynolds = 1000.0;
    double ref_length = 1.0;
    double rho_inf = 1.0;
    double u_inf = 1.0;
    double v_inf = 0.0;
    // scalar model
    double adv_x = 1.0, adv_y = 0.0;
    double diffusivity = 0.0;
    double source = 0.0;
    double bc_value = 0.0;  ///< Dirichlet value on far-field faces

    int nvar() const { return kind == EquationKind::AdvectionDiffusion ? 1 : 4; }
    bool viscous() const {
        return kind == EquationKind::NavierStokes || (kind == EquationKind::AdvectionDiffusion && diffusivity != 0.0);
    }
    double p_inf() const { return rho_inf * (u_inf * u_inf + v_inf * v_inf) / (gamma * mach * mach); }
    double mu() const { return rho_inf * std::hypot(u_inf, v_inf) * ref_length / reynolds; }

    std::array<double, 4> free_stream() const {
        const double E = p_inf() / (gamma - 1.0) + 0.5 * rho_inf * (u_inf * u_inf + v_inf * v_inf);
        return {rho_inf, rho_inf * u_inf, rho_inf * v_inf, E};
    }

    void validate() const {
        if (kind != EquationKind::AdvectionDiffusion) {
            if (!(mach > 0.0)) throw ConfigError("equation.mach must be > 0");
            if (kind == EquationKind::NavierStokes && !(reynolds > 0.0))
                throw ConfigError("equation.reynolds must be > 0");
        } else if (diffusivity < 0.0) {
            throw ConfigError("equation.diffusivity must be >= 0");
        }
    }
};

inline double pressure(const double* q, double gamma) {
    return (gamma - 1.0) * (q[3] - 0.5 * (q[1] * q[1] + q[2] * q[2]) / q[0]);
}

/// Compressible Euler / Navier-Stokes point physics on conserved (rho, rho u, rho v, E).
struct GasPhysics {
    static constexpr int NV = 4;
    double gamma = 1.4;
    double mu = 0.0;
    double kappa = 0.0;  ///< mu gamma / Pr, multiplies grad(e_int)
    bool viscous = false;
    std::array<double, 4> qinf{};

    explicit GasPhysics(const EquationSpec& s)
        : gamma(s.gamma), viscous(s.kind == EquationKind::NavierStokes), qinf(s.free_stream()) {
        if (viscous) {
            mu = s.mu();
            kappa = mu * gamma / s.prandtl;
        }
    }

    double check(const double* q, std::size_t elem) const {
        const double p = pressure(q, gamma);
        if (!(q[0] > 0.0) || !(p > 0.0) || !std::isfinite(q[3]))
            throw NonPhysicalState(elem, "rho=" + std::to_string(q[0]) + " p=" + std::to_string(p));
        return p;
    }

    void inviscid_flux(const double* q, std::size_t elem, double* fx, double* fy) const {
        const double p = check(q, elem);
        const double u = q[1] / q[0], v = q[2] / q[0];
        fx[0] = q[1];
        fx[1] = q[1] * u + p;
        fx[2] = q[1] * v;
        fx[3] = (q[3] + p) * u;
        fy[0] = q[2];
        fy[1] = q[2] * u;
        fy[2] = q[2] * v + p;
        fy[3] = (q[3] + p) * v;
    }

    /// Roe flux (no entropy fix) along unit normal n, from L to R.
    void riemann(const double* qL, const double* qR, double nx, double ny, std::size_t elem, double* fn) const {
        const double pL = check(qL, elem), pR = check(qR, elem);
        const double rL = qL[0], rR = qR[0];
        const double uL = qL[1] / rL, vL = qL[2] / rL, uR = qR[1] / rR, vR = qR[2] / rR;
        const double HL = (qL[3] + pL) / rL, HR = (qR[3] + pR) / rR;
        const double vnL = uL * nx + vL * ny, vnR = uR * nx + vR * ny;

        const double sL = std::sqrt(rL), sR = std::sqrt(rR), sw = 1.0 / (sL + sR);
        const double rt = sL * sR;
        const double ut = (sL * uL + sR * uR) * sw;
        const double vt = (sL * vL + sR * vR) * sw;
        const double Ht = (sL * HL + sR * HR) * sw;
        const double q2 = 0.5 * (ut * ut + vt * vt);
        const double c2 = (gamma - 1.0) * (Ht - q2);
        if (!(c2 > 0.0)) throw NonPhysicalState(elem, "Roe average sound speed");
        const double ct = std::sqrt(c2);
        const double vnt = ut * nx + vt * ny;

        const double dr = rR - rL, dp = pR - pL, dvn = vnR - vnL, du = uR - uL, dv = vR - vL;
        const double a1 = std::abs(vnt - ct) * (dp - rt * ct * dvn) / (2.0 * c2);
        const double a2 = std::abs(vnt) * (dr - dp / c2);
        const double a3 = std::abs(vnt + ct) * (dp + rt * ct * dvn) / (2.0 * c2);
        const double as = std::abs(vnt) * rt;
        const double dut = du - dvn * nx, dvt = dv - dvn * ny;

        double diss[4];
        diss[0] = a1 + a2 + a3;
        diss[1] = a1 * (ut - ct * nx) + a2 * ut + a3 * (ut + ct * nx) + as * dut;
        diss[2] = a1 * (vt - ct * ny) + a2 * vt + a3 * (vt + ct * ny) + as * dvt;
        diss[3] = a1 * (Ht - ct * vnt) + a2 * q2 + a3 * (Ht + ct * vnt) + as * (ut * du + vt * dv - vnt * dvn);

        const double mL = rL * vnL, mR = rR * vnR;
        fn[0] = 0.5 * (mL + mR - diss[0]);
        fn[1] = 0.5 * (mL * uL + pL * nx + mR * uR + pR * nx - diss[1]);
        fn[2] = 0.5 * (mL * vL + pL * ny + mR * vR + pR * ny - diss[2]);
        fn[3] = 0.5 * (mL * HL + mR * HR - diss[3]);
    }

    /// Viscous flux (to be subtracted from the inviscid one) from conserved-variable gradients.
    void viscous_flux(const double* q, const double* gx, const double* gy, double* fx, double* fy) const {
        const double r = q[0], ir = 1.0 / r;
        const double u = q[1] * ir, v = q[2] * ir, et = q[3] * ir;
        const double ux = (gx[1] - u * gx[0]) * ir, uy = (gy[1] - u * gy[0]) * ir;
        const double vx = (gx[2] - v * gx[0]) * ir, vy = (gy[2] - v * gy[0]) * ir;
        const double ex = (gx[3] - et * gx[0]) * ir - u * ux - v * vx;
        const double ey = (gy[3] - et * gy[0]) * ir - u * uy - v * vy;
        const double div = ux + vy;
        const double txx = mu * (2.0 * ux - 2.0 / 3.0 * div);
        const double tyy = mu * (2.0 * vy - 2.0 / 3.0 * div);
        const double txy = mu * (uy + vx);
        fx[0] = 0.0;
        fx[1] = txx;
        fx[2] = txy;
        fx[3] = u * txx + v * txy + kappa * ex;
        fy[0] = 0.0;
        fy[1] = txy;
        fy[2] = tyy;
        fy[3] = u * txy + v * tyy + kappa * ey;
    }

    void ghost(const double* q, double nx, double ny, BoundaryTag tag, double* g) const {
        switch (tag) {
            case BoundaryTag::WallSlip: {
                const double mn = q[1] * nx + q[2] * ny;
                g[0] = q[0];
                g[1] = q[1] - 2.0 * mn * nx;
                g[2] = q[2] - 2.0 * mn * ny;
                g[3] = q[3];
                break;
            }
            case BoundaryTag::WallAdiabatic:
                g[0] = q[0];
                g[1] = -q[1];
                g[2] = -q[2];
                g[3] = q[3];
                break;
            case BoundaryTag::FarField:
                for (int v = 0; v < 4; ++v) g[v] = qinf[v];
                break;
        }
    }

    /// Zero the heat flux through an adiabatic wall (the work term vanishes with u = 0).
    void wall_viscous_fix(BoundaryTag tag, double* fvn) const {
        if (tag == BoundaryTag::WallAdiabatic) fvn[3] = 0.0;
    }
};

/// Linear advection-diffusion of a scalar with constant velocity, diffusivity and source.
struct ScalarPhysics {
    static constexpr int NV = 1;
    double ax = 1.0, ay = 0.0, nu = 0.0, bc = 0.0;
    bool viscous = false;

    explicit ScalarPhysics(const EquationSpec& s)
        : ax(s.adv_x), ay(s.adv_y), nu(s.diffusivity), bc(s.bc_value), viscous(s.diffusivity != 0.0) {}

    void inviscid_flux(const double* q, std::size_t, double* fx, double* fy) const {
        fx[0] = ax * q[0];
        fy[0] = ay * q[0];
    }
    void riemann(const double* qL, const double* qR, double nx, double ny, std::size_t, double* fn) const {
        const double an = ax * nx + ay * ny;
        fn[0] = an >= 0.0 ? an * qL[0] : an * qR[0];
    }
    void viscous_flux(const double*, const double* gx, const double* gy, double* fx, double* fy) const {
        fx[0] = nu * gx[0];
        fy[0] = nu * gy[0];
    }
    void ghost(const double* q, double, double, BoundaryTag tag, double* g) const {
        g[0] = tag == BoundaryTag::FarField ? bc : q[0];
    }
    void wall_viscous_fix(BoundaryTag tag, double* fvn) const {
        if (is_wall(tag)) fvn[0] = 0.0;
    }
};

}  // namespace pmgflow
