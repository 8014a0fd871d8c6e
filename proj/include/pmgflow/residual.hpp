#pragma once
// Flux-reconstruction residual R(q) with dq/dt = R(q).
//
// DG-equivalent correction functions, Roe interface flux, BR1 viscous coupling.
// Interfaces between elements of different degree are evaluated on a mortar at the
// higher-degree face points; the lower-degree side receives the L2 projection of the
// common values, which keeps the scheme conservative.

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "pmgflow/core.hpp"
#include "pmgflow/field.hpp"
#include "pmgflow/mesh.hpp"
#include "pmgflow/operators.hpp"
#include "pmgflow/physics.hpp"

namespace pmgflow {

class Discretization {
public:
    Discretization(Mesh mesh, EquationSpec eqn) : mesh_(std::move(mesh)), eqn_(eqn) {
        eqn_.validate();
        for (int a = 0; a <= kMaxDegree; ++a)
            for (int b = 0; b <= kMaxDegree; ++b) {
                if (a < b) interp_[a][b] = interpolation_matrix(a, b);
                if (a > b) project_[a][b] = restriction_operator(a, b);
            }
    }

    const Mesh& mesh() const noexcept { return mesh_; }
    const EquationSpec& equation() const noexcept { return eqn_; }
    int nvar() const noexcept { return eqn_.nvar(); }
    std::size_t num_elements() const noexcept { return mesh_.num_elements(); }

    const ElementGeometry& geometry(int p) const {
        detail::check_degree(p);
        std::lock_guard lock(geo_mutex_);
        auto& g = geo_[p];
        if (!g) g = std::make_unique<ElementGeometry>(mesh_, p);
        return *g;
    }

    Field make_field(const std::vector<int>& degrees) const {
        if (degrees.size() != num_elements()) throw std::invalid_argument("degree map size mismatch");
        return Field(nvar(), degrees);
    }
    Field make_field(int p) const { return Field(nvar(), num_elements(), p); }

    Field free_stream(const std::vector<int>& degrees) const {
        Field f = make_field(degrees);
        if (nvar() == 4) {
            const auto s = eqn_.free_stream();
            f.fill_state(s);
        } else {
            const double s = eqn_.bc_value;
            f.fill_state(ConstSpan(&s, 1));
        }
        return f;
    }
    Field free_stream(int p) const { return free_stream(std::vector<int>(num_elements(), p)); }

    /// Sample fn(x, y, out[nvar]) at every solution point.
    Field sample(const std::vector<int>& degrees, const std::function<void(double, double, double*)>& fn) const {
        Field f = make_field(degrees);
        for (std::size_t e = 0; e < num_elements(); ++e) {
            const auto& g = geometry(f.degree(e));
            for (int k = 0; k < f.points(e); ++k) fn(g.x[e * g.np + k], g.y[e * g.np + k], f.point(e, k));
        }
        return f;
    }

    void residual(const Field& q, Field& r) const {
        if (q.nvar() != nvar() || q.num_elements() != num_elements())
            throw std::invalid_argument("residual: field does not match discretization");
        if (!r.same_layout(q)) r = q.zeros_like();
        if (nvar() == 4) {
            residual_impl(GasPhysics(eqn_), q, r);
        } else {
            residual_impl(ScalarPhysics(eqn_), q, r);
        }
    }

    Field residual(const Field& q) const {
        Field r = q.zeros_like();
        residual(q, r);
        return r;
    }

    /// BR1-corrected physical gradients of the conserved variables (zero for inviscid equations).
    std::pair<Field, Field> gradients(const Field& q) const {
        Field gx = q.zeros_like(), gy = q.zeros_like();
        if (!eqn_.viscous()) return {gx, gy};
        Field dummy;
        if (nvar() == 4) {
            residual_impl(GasPhysics(eqn_), q, dummy, &gx, &gy);
        } else {
            residual_impl(ScalarPhysics(eqn_), q, dummy, &gx, &gy);
        }
        return {gx, gy};
    }

    /// Quadrature weight (w_i w_j det J) of each solution point, in field layout without the variable index.
    Vec point_weights(const std::vector<int>& degrees) const {
        std::size_t total = 0;
        for (int p : degrees) total += (p + 1) * (p + 1);
        Vec w(total);
        std::size_t k = 0;
        for (std::size_t e = 0; e < num_elements(); ++e) {
            const int p = degrees[e], n = p + 1;
            const auto& g = geometry(p);
            const auto& b = basis(p);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) w[k++] = b.weights()[i] * b.weights()[j] * g.detj[e * g.np + j * n + i];
        }
        return w;
    }

    /// Integral of each variable over the domain.
    Vec integrate(const Field& f) const {
        const Vec w = point_weights(f.degrees());
        Vec s(f.nvar(), 0.0);
        for (std::size_t k = 0; k < w.size(); ++k)
            for (int v = 0; v < f.nvar(); ++v) s[v] += w[k] * f.data()[k * f.nvar() + v];
        return s;
    }

    /// L2 norm of (f - exact) for variable var, using the solution-point quadrature.
    double l2_error(const Field& f, int var, const std::function<double(double, double)>& exact) const {
        double s = 0.0;
        for (std::size_t e = 0; e < num_elements(); ++e) {
            const int p = f.degree(e), n = p + 1;
            const auto& g = geometry(p);
            const auto& b = basis(p);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const std::size_t k = e * g.np + j * n + i;
                    const double d = f.point(e, j * n + i)[var] - exact(g.x[k], g.y[k]);
                    s += b.weights()[i] * b.weights()[j] * g.detj[k] * d * d;
                }
        }
        return std::sqrt(s);
    }

private:
    struct Workspace {
        std::vector<std::size_t> foff;
        Vec qf, qc, gfx, gfy, fn, gx, gy;
        Vec ml, mr, mc, mgl, mgr, mgl2, mgr2, mf;
        Vec fxi, feta;
    };

    const Mat& interp(int from, int to) const { return interp_[from][to]; }
    const Mat& project(int from, int to) const { return project_[from][to]; }

    // Face trace of side (p, rev) to the mortar of degree pm (points in the left side's direction).
    template <int NV>
    void to_mortar(const double* t, int p, int pm, bool rev, double* out) const {
        const int n = p + 1, nm = pm + 1;
        if (p == pm) {
            for (int m = 0; m < nm; ++m) {
                const int k = rev ? n - 1 - m : m;
                for (int v = 0; v < NV; ++v) out[m * NV + v] = t[k * NV + v];
            }
            return;
        }
        const Mat& I = interp(p, pm);
        for (int m = 0; m < nm; ++m)
            for (int v = 0; v < NV; ++v) {
                double s = 0.0;
                for (int k = 0; k < n; ++k) s += I(m, k) * t[(rev ? n - 1 - k : k) * NV + v];
                out[m * NV + v] = s;
            }
    }

    template <int NV>
    void from_mortar(const double* in, int pm, int p, bool rev, double scale, double* t) const {
        const int n = p + 1, nm = pm + 1;
        if (p == pm) {
            for (int m = 0; m < nm; ++m) {
                const int k = rev ? n - 1 - m : m;
                for (int v = 0; v < NV; ++v) t[k * NV + v] = scale * in[m * NV + v];
            }
            return;
        }
        const Mat& G = project(pm, p);
        for (int k = 0; k < n; ++k)
            for (int v = 0; v < NV; ++v) {
                double s = 0.0;
                for (int m = 0; m < nm; ++m) s += G(k, m) * in[m * NV + v];
                t[(rev ? n - 1 - k : k) * NV + v] = scale * s;
            }
    }

    // Interpolate a point-major element array to its four face traces.
    template <int NV>
    static void element_traces(const double* Q, const Basis1D& b, double* T) {
        const int n = b.size();
        const auto& L = b.left_values();
        const auto& R = b.right_values();
        for (int k = 0; k < n; ++k)
            for (int v = 0; v < NV; ++v) {
                double f0 = 0, f1 = 0, f2 = 0, f3 = 0;
                for (int m = 0; m < n; ++m) {
                    const double a = Q[(m * n + k) * NV + v];  // column k (fixed xi), along eta
                    const double c = Q[(k * n + m) * NV + v];  // row k (fixed eta), along xi
                    f0 += L[m] * a;
                    f2 += R[m] * a;
                    f1 += R[m] * c;
                    f3 += L[m] * c;
                }
                T[(0 * n + k) * NV + v] = f0;
                T[(1 * n + k) * NV + v] = f1;
                T[(2 * n + k) * NV + v] = f2;
                T[(3 * n + k) * NV + v] = f3;
            }
    }

    template <class Phys>
    void residual_impl(const Phys& ph, const Field& q, Field& r, Field* gx_out = nullptr,
                       Field* gy_out = nullptr) const {
        constexpr int NV = Phys::NV;
        thread_local Workspace ws;
        const std::size_t ne = num_elements();
        const bool visc = ph.viscous;

        ws.foff.resize(ne + 1);
        ws.foff[0] = 0;
        for (std::size_t e = 0; e < ne; ++e) ws.foff[e + 1] = ws.foff[e] + 4 * (q.degree(e) + 1) * NV;
        const std::size_t ftot = ws.foff[ne];
        ws.qf.resize(ftot);
        ws.fn.resize(ftot);
        if (visc) {
            ws.qc.resize(ftot);
            ws.gfx.resize(ftot);
            ws.gfy.resize(ftot);
            ws.gx.resize(q.size());
            ws.gy.resize(q.size());
        }
        const int pmax = q.max_degree();
        const std::size_t mort = static_cast<std::size_t>(pmax + 1) * NV;
        for (auto* v : {&ws.ml, &ws.mr, &ws.mc, &ws.mgl, &ws.mgr, &ws.mgl2, &ws.mgr2, &ws.mf}) v->resize(mort);
        const std::size_t elmax = static_cast<std::size_t>((pmax + 1) * (pmax + 1)) * NV;
        ws.fxi.resize(elmax);
        ws.feta.resize(elmax);

        const double* Qd = q.data().data();
        auto face_ptr = [&](Vec& a, std::size_t e, int f) { return a.data() + ws.foff[e] + f * (q.degree(e) + 1) * NV; };

        for (std::size_t e = 0; e < ne; ++e) element_traces<NV>(Qd + q.offset(e), basis(q.degree(e)), ws.qf.data() + ws.foff[e]);

        auto face_geo = [&](std::size_t e, int f, double& nx, double& ny, double& sj) {
            const auto& g = geometry(q.degree(e));
            const std::size_t idx = (e * 4 + f) * g.n;
            nx = g.fnx[idx];
            ny = g.fny[idx];
            sj = g.fsj[idx];
        };

        if (visc) {
            // BR1 common solution.
            for (const auto& F : mesh_.interior_faces) {
                const int pL = q.degree(F.elem_l), pR = q.degree(F.elem_r), pm = std::max(pL, pR);
                to_mortar<NV>(face_ptr(ws.qf, F.elem_l, F.face_l), pL, pm, false, ws.ml.data());
                to_mortar<NV>(face_ptr(ws.qf, F.elem_r, F.face_r), pR, pm, F.reversed, ws.mr.data());
                for (int m = 0; m < (pm + 1) * NV; ++m) ws.mc[m] = 0.5 * (ws.ml[m] + ws.mr[m]);
                from_mortar<NV>(ws.mc.data(), pm, pL, false, 1.0, face_ptr(ws.qc, F.elem_l, F.face_l));
                from_mortar<NV>(ws.mc.data(), pm, pR, F.reversed, 1.0, face_ptr(ws.qc, F.elem_r, F.face_r));
            }
            for (const auto& B : mesh_.boundary_faces) {
                const int n = q.degree(B.elem) + 1;
                double nx, ny, sj;
                face_geo(B.elem, B.face, nx, ny, sj);
                const double* t = face_ptr(ws.qf, B.elem, B.face);
                double* c = face_ptr(ws.qc, B.elem, B.face);
                double g[NV] = {};
                for (int k = 0; k < n; ++k) {
                    ph.ghost(t + k * NV, nx, ny, B.tag, g);
                    for (int v = 0; v < NV; ++v)
                        c[k * NV + v] = B.tag == BoundaryTag::FarField ? g[v] : 0.5 * (t[k * NV + v] + g[v]);
                }
            }
            // Corrected gradients and their face traces.
            for (std::size_t e = 0; e < ne; ++e) {
                const int p = q.degree(e), n = p + 1, np = n * n;
                const auto& b = basis(p);
                const auto& g = geometry(p);
                const Mat& D = b.derivative();
                const auto& dl = b.dg_left();
                const auto& dr = b.dg_right();
                const double* Q = Qd + q.offset(e);
                const double* T = ws.qf.data() + ws.foff[e];
                const double* C = ws.qc.data() + ws.foff[e];
                double* GX = ws.gx.data() + q.offset(e);
                double* GY = ws.gy.data() + q.offset(e);
                for (int j = 0; j < n; ++j)
                    for (int i = 0; i < n; ++i) {
                        const std::size_t gk = e * np + j * n + i;
                        const double ix = g.sxi_x[gk], iy = g.sxi_y[gk], ex = g.seta_x[gk], ey = g.seta_y[gk];
                        const double idet = 1.0 / g.detj[gk];
                        for (int v = 0; v < NV; ++v) {
                            double dxi = 0.0, deta = 0.0;
                            for (int m = 0; m < n; ++m) {
                                dxi += D(i, m) * Q[(j * n + m) * NV + v];
                                deta += D(j, m) * Q[(m * n + i) * NV + v];
                            }
                            dxi += dr[i] * (C[(1 * n + j) * NV + v] - T[(1 * n + j) * NV + v]) +
                                   dl[i] * (C[(3 * n + j) * NV + v] - T[(3 * n + j) * NV + v]);
                            deta += dr[j] * (C[(2 * n + i) * NV + v] - T[(2 * n + i) * NV + v]) +
                                    dl[j] * (C[(0 * n + i) * NV + v] - T[(0 * n + i) * NV + v]);
                            GX[(j * n + i) * NV + v] = (ix * dxi + ex * deta) * idet;
                            GY[(j * n + i) * NV + v] = (iy * dxi + ey * deta) * idet;
                        }
                    }
                element_traces<NV>(GX, b, ws.gfx.data() + ws.foff[e]);
                element_traces<NV>(GY, b, ws.gfy.data() + ws.foff[e]);
            }
            if (gx_out) {
                std::copy(ws.gx.begin(), ws.gx.begin() + q.size(), gx_out->data().begin());
                std::copy(ws.gy.begin(), ws.gy.begin() + q.size(), gy_out->data().begin());
                return;
            }
        }

        // Common normal fluxes, stored outward and scaled by the surface Jacobian.
        double fvL[2][NV], fvR[2][NV];
        for (const auto& F : mesh_.interior_faces) {
            const int pL = q.degree(F.elem_l), pR = q.degree(F.elem_r), pm = std::max(pL, pR);
            double nx, ny, sjL, sjR, tx, ty;
            face_geo(F.elem_l, F.face_l, nx, ny, sjL);
            face_geo(F.elem_r, F.face_r, tx, ty, sjR);
            to_mortar<NV>(face_ptr(ws.qf, F.elem_l, F.face_l), pL, pm, false, ws.ml.data());
            to_mortar<NV>(face_ptr(ws.qf, F.elem_r, F.face_r), pR, pm, F.reversed, ws.mr.data());
            if (visc) {
                to_mortar<NV>(face_ptr(ws.gfx, F.elem_l, F.face_l), pL, pm, false, ws.mgl.data());
                to_mortar<NV>(face_ptr(ws.gfy, F.elem_l, F.face_l), pL, pm, false, ws.mgl2.data());
                to_mortar<NV>(face_ptr(ws.gfx, F.elem_r, F.face_r), pR, pm, F.reversed, ws.mgr.data());
                to_mortar<NV>(face_ptr(ws.gfy, F.elem_r, F.face_r), pR, pm, F.reversed, ws.mgr2.data());
            }
            for (int m = 0; m <= pm; ++m) {
                double* fh = ws.mf.data() + m * NV;
                ph.riemann(ws.ml.data() + m * NV, ws.mr.data() + m * NV, nx, ny, F.elem_l, fh);
                if (visc) {
                    ph.viscous_flux(ws.ml.data() + m * NV, ws.mgl.data() + m * NV, ws.mgl2.data() + m * NV, fvL[0], fvL[1]);
                    ph.viscous_flux(ws.mr.data() + m * NV, ws.mgr.data() + m * NV, ws.mgr2.data() + m * NV, fvR[0], fvR[1]);
                    for (int v = 0; v < NV; ++v)
                        fh[v] -= 0.5 * ((fvL[0][v] + fvR[0][v]) * nx + (fvL[1][v] + fvR[1][v]) * ny);
                }
            }
            from_mortar<NV>(ws.mf.data(), pm, pL, false, sjL, face_ptr(ws.fn, F.elem_l, F.face_l));
            from_mortar<NV>(ws.mf.data(), pm, pR, F.reversed, -sjR, face_ptr(ws.fn, F.elem_r, F.face_r));
        }
        for (const auto& B : mesh_.boundary_faces) {
            const int n = q.degree(B.elem) + 1;
            double nx, ny, sj;
            face_geo(B.elem, B.face, nx, ny, sj);
            const double* t = face_ptr(ws.qf, B.elem, B.face);
            double* out = face_ptr(ws.fn, B.elem, B.face);
            double g[NV] = {}, fh[NV], fvn[NV];
            for (int k = 0; k < n; ++k) {
                ph.ghost(t + k * NV, nx, ny, B.tag, g);
                ph.riemann(t + k * NV, g, nx, ny, B.elem, fh);
                if (visc) {
                    const double* c = face_ptr(ws.qc, B.elem, B.face) + k * NV;
                    ph.viscous_flux(c, face_ptr(ws.gfx, B.elem, B.face) + k * NV,
                                    face_ptr(ws.gfy, B.elem, B.face) + k * NV, fvL[0], fvL[1]);
                    for (int v = 0; v < NV; ++v) fvn[v] = fvL[0][v] * nx + fvL[1][v] * ny;
                    ph.wall_viscous_fix(B.tag, fvn);
                    for (int v = 0; v < NV; ++v) fh[v] -= fvn[v];
                }
                for (int v = 0; v < NV; ++v) out[k * NV + v] = sj * fh[v];
            }
        }

        // Divergence of the corrected transformed flux.
        const double src = nvar() == 1 ? eqn_.source : 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            const int p = q.degree(e), n = p + 1, np = n * n;
            const auto& b = basis(p);
            const auto& g = geometry(p);
            const Mat& D = b.derivative();
            const auto& L = b.left_values();
            const auto& Rv = b.right_values();
            const auto& dl = b.dg_left();
            const auto& dr = b.dg_right();
            const double* Q = Qd + q.offset(e);
            const double* FN = ws.fn.data() + ws.foff[e];
            double* Fx = ws.fxi.data();
            double* Fe = ws.feta.data();
            double fx[NV], fy[NV], vx[NV], vy[NV];
            for (int k = 0; k < np; ++k) {
                ph.inviscid_flux(Q + k * NV, e, fx, fy);
                if (visc) {
                    ph.viscous_flux(Q + k * NV, ws.gx.data() + q.offset(e) + k * NV, ws.gy.data() + q.offset(e) + k * NV, vx,
                                    vy);
                    for (int v = 0; v < NV; ++v) {
                        fx[v] -= vx[v];
                        fy[v] -= vy[v];
                    }
                }
                const std::size_t gk = e * np + k;
                for (int v = 0; v < NV; ++v) {
                    Fx[k * NV + v] = g.sxi_x[gk] * fx[v] + g.sxi_y[gk] * fy[v];
                    Fe[k * NV + v] = g.seta_x[gk] * fx[v] + g.seta_y[gk] * fy[v];
                }
            }
            double* Rout = r.data().data() + r.offset(e);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double idet = 1.0 / g.detj[e * np + j * n + i];
                    for (int v = 0; v < NV; ++v) {
                        double div = 0.0;
                        double xl = 0.0, xr = 0.0, el = 0.0, er = 0.0;
                        for (int m = 0; m < n; ++m) {
                            const double a = Fx[(j * n + m) * NV + v];
                            const double c = Fe[(m * n + i) * NV + v];
                            div += D(i, m) * a + D(j, m) * c;
                            xl += L[m] * a;
                            xr += Rv[m] * a;
                            el += L[m] * c;
                            er += Rv[m] * c;
                        }
                        div += dr[i] * (FN[(1 * n + j) * NV + v] - xr) + dl[i] * (-FN[(3 * n + j) * NV + v] - xl) +
                               dr[j] * (FN[(2 * n + i) * NV + v] - er) + dl[j] * (-FN[(0 * n + i) * NV + v] - el);
                        Rout[(j * n + i) * NV + v] = -div * idet + src;
                    }
                }
        }
    }

    Mesh mesh_;
    EquationSpec eqn_;
    std::array<std::array<Mat, kMaxDegree + 1>, kMaxDegree + 1> interp_, project_;
    mutable std::mutex geo_mutex_;
    mutable std::array<std::unique_ptr<ElementGeometry>, kMaxDegree + 1> geo_;
};

/// Move a field to a new degree map: L2 projection when lowering, exact injection when raising.
inline Field transfer_field(const Field& src, const std::vector<int>& degrees) {
    Field out(src.nvar(), degrees);
    const int nv = src.nvar();
    for (std::size_t e = 0; e < src.num_elements(); ++e) {
        const int ps = src.degree(e), pt = degrees[e];
        const double* in = src.data().data() + src.offset(e);
        double* o = out.data().data() + out.offset(e);
        if (ps == pt) {
            std::copy(in, in + src.elem_size(e), o);
            continue;
        }
        const Mat& T = ps > pt ? transfer_operators(ps, pt).restriction : transfer_operators(pt, ps).prolongation;
        for (Eigen::Index k = 0; k < T.rows(); ++k)
            for (int v = 0; v < nv; ++v) {
                double s = 0.0;
                for (Eigen::Index m = 0; m < T.cols(); ++m) s += T(k, m) * in[m * nv + v];
                o[k * nv + v] = s;
            }
    }
    return out;
}

}  // namespace pmgflow
