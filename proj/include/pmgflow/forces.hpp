#pragma once
// Surface forces on wall boundaries: pressure plus viscous traction at the flux points.

#include <cmath>

#include "pmgflow/residual.hpp"

namespace pmgflow {

struct Forces {
    double fx = 0.0, fy = 0.0;
    double drag = 0.0, lift = 0.0;
    double cd = 0.0, cl = 0.0;
};

/// C = 2 F / (rho U^2 A); in 2D the reference area A is the reference length.
inline double drag_coefficient(double force, double rho, double speed, double area) {
    return 2.0 * force / (rho * speed * speed * area);
}

inline Forces compute_forces(const Discretization& d, const Field& q) {
    const Mesh& m = d.mesh();
    const EquationSpec& s = d.equation();
    if (s.nvar() != 4) throw SolverError("forces require a gas-dynamics field");
    if (!m.has_wall()) throw SolverError("no wall faces for force integration");

    const GasPhysics ph(s);
    Field gx, gy;
    if (s.viscous()) std::tie(gx, gy) = d.gradients(q);

    Forces out;
    for (const auto& b : m.boundary_faces) {
        if (!is_wall(b.tag)) continue;
        const int p = q.degree(b.elem), n = p + 1;
        const auto& bs = basis(p);
        const auto& g = d.geometry(p);
        // Interpolation weights from solution points to the face points.
        for (int k = 0; k < n; ++k) {
            std::vector<std::pair<int, double>> wts;
            for (int m2 = 0; m2 < n; ++m2) {
                int i, j;
                double w;
                switch (b.face) {
                    case 0: i = k; j = m2; w = bs.left_values()[m2]; break;
                    case 1: i = m2; j = k; w = bs.right_values()[m2]; break;
                    case 2: i = k; j = m2; w = bs.right_values()[m2]; break;
                    default: i = m2; j = k; w = bs.left_values()[m2]; break;
                }
                wts.emplace_back(j * n + i, w);
            }
            double qf[4] = {0, 0, 0, 0}, gxf[4] = {0, 0, 0, 0}, gyf[4] = {0, 0, 0, 0};
            for (const auto& [pt, w] : wts)
                for (int v = 0; v < 4; ++v) {
                    qf[v] += w * q.point(b.elem, pt)[v];
                    if (s.viscous()) {
                        gxf[v] += w * gx.point(b.elem, pt)[v];
                        gyf[v] += w * gy.point(b.elem, pt)[v];
                    }
                }
            const std::size_t fi = (b.elem * 4 + b.face) * n + k;
            const double nx = g.fnx[fi], ny = g.fny[fi], ds = g.fsj[fi] * bs.weights()[k];
            const double pr = pressure(qf, s.gamma);
            double tx = pr * nx, ty = pr * ny;
            if (s.viscous()) {
                double fvx[4], fvy[4];
                ph.viscous_flux(qf, gxf, gyf, fvx, fvy);
                tx -= fvx[1] * nx + fvy[1] * ny;
                ty -= fvx[2] * nx + fvy[2] * ny;
            }
            out.fx += tx * ds;
            out.fy += ty * ds;
        }
    }
    const double speed = std::hypot(s.u_inf, s.v_inf);
    const double ex = s.u_inf / speed, ey = s.v_inf / speed;
    out.drag = out.fx * ex + out.fy * ey;
    out.lift = -out.fx * ey + out.fy * ex;
    out.cd = drag_coefficient(out.drag, s.rho_inf, speed, s.ref_length);
    out.cl = drag_coefficient(out.lift, s.rho_inf, speed, s.ref_length);
    return out;
}

}  // namespace pmgflow
