#pragma once
// 2D bilinear quadrilateral meshes.
//
// Element nodes are counter-clockwise n0..n3 mapped to the reference corners
// (-1,-1), (1,-1), (1,1), (-1,1). Faces are numbered counter-clockwise from the
// (n0, n1) edge: 0 -> eta=-1, 1 -> xi=+1, 2 -> eta=+1, 3 -> xi=-1. Face points
// are ordered along increasing xi (faces 0, 2) or increasing eta (faces 1, 3).

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pmgflow/core.hpp"
#include "pmgflow/operators.hpp"

namespace pmgflow {

enum class BoundaryTag { WallAdiabatic, WallSlip, FarField };

inline std::string to_string(BoundaryTag t) {
    switch (t) {
        case BoundaryTag::WallAdiabatic: return "wall-adiabatic";
        case BoundaryTag::WallSlip: return "wall-slip";
        case BoundaryTag::FarField: return "far-field";
    }
    return "?";
}

inline BoundaryTag parse_boundary_tag(const std::string& s) {
    if (s == "wall-adiabatic") return BoundaryTag::WallAdiabatic;
    if (s == "wall-slip") return BoundaryTag::WallSlip;
    if (s == "far-field") return BoundaryTag::FarField;
    throw MeshError("unknown boundary tag '" + s + "'");
}

inline bool is_wall(BoundaryTag t) { return t == BoundaryTag::WallAdiabatic || t == BoundaryTag::WallSlip; }

struct InteriorFace {
    int elem_l = -1, face_l = -1;
    int elem_r = -1, face_r = -1;
    bool reversed = false;  ///< face-point ordering of the right side runs opposite to the left
    bool periodic = false;
};

struct BoundaryFace {
    int elem = -1, face = -1;
    BoundaryTag tag = BoundaryTag::FarField;
};

/// Which record a local element face belongs to.
struct FaceRef {
    bool interior = false;
    int index = -1;  ///< into interior_faces or boundary_faces
};

/// A pair of faces identified through periodicity (no shared nodes).
struct PeriodicPair {
    int elem_a, face_a, elem_b, face_b;
};

struct Mesh {
    std::vector<std::array<double, 2>> nodes;
    std::vector<std::array<int, 4>> elements;
    std::vector<InteriorFace> interior_faces;
    std::vector<BoundaryFace> boundary_faces;
    std::vector<std::array<FaceRef, 4>> element_faces;

    std::size_t num_elements() const noexcept { return elements.size(); }

    /// Element across local face f, or -1 on a boundary.
    int neighbor(int e, int f) const {
        const FaceRef r = element_faces[e][f];
        if (!r.interior) return -1;
        const auto& F = interior_faces[r.index];
        return (F.elem_l == e && F.face_l == f) ? F.elem_r : F.elem_l;
    }

    /// Distinct face neighbours of each element (excluding the element itself).
    std::vector<std::vector<int>> adjacency() const {
        std::vector<std::vector<int>> adj(num_elements());
        for (const auto& F : interior_faces) {
            if (F.elem_l == F.elem_r) continue;
            adj[F.elem_l].push_back(F.elem_r);
            adj[F.elem_r].push_back(F.elem_l);
        }
        for (auto& a : adj) {
            std::sort(a.begin(), a.end());
            a.erase(std::unique(a.begin(), a.end()), a.end());
        }
        return adj;
    }

    bool has_wall() const {
        return std::any_of(boundary_faces.begin(), boundary_faces.end(),
                           [](const BoundaryFace& b) { return is_wall(b.tag); });
    }

    /// Minimum edge length over all elements.
    double h_min() const {
        double h = std::numeric_limits<double>::max();
        for (const auto& el : elements)
            for (int k = 0; k < 4; ++k) {
                const auto& a = nodes[el[k]];
                const auto& b = nodes[el[(k + 1) % 4]];
                h = std::min(h, std::hypot(b[0] - a[0], b[1] - a[1]));
            }
        return h;
    }
};

namespace detail {

/// Start and end node of a face in its natural (increasing reference coordinate) direction.
inline std::array<int, 2> face_nodes(const std::array<int, 4>& el, int f) {
    switch (f) {
        case 0: return {el[0], el[1]};
        case 1: return {el[1], el[2]};
        case 2: return {el[3], el[2]};
        default: return {el[0], el[3]};
    }
}

inline std::array<double, 2> face_tangent(const Mesh& m, int e, int f) {
    const auto fn = face_nodes(m.elements[e], f);
    const auto& a = m.nodes[fn[0]];
    const auto& b = m.nodes[fn[1]];
    return {b[0] - a[0], b[1] - a[1]};
}

/// det J of the bilinear map at reference point (xi, eta).
inline double bilinear_detj(const Mesh& m, int e, double xi, double eta) {
    const auto& el = m.elements[e];
    const auto& p0 = m.nodes[el[0]];
    const auto& p1 = m.nodes[el[1]];
    const auto& p2 = m.nodes[el[2]];
    const auto& p3 = m.nodes[el[3]];
    const double xx = 0.25 * (-(1 - eta) * p0[0] + (1 - eta) * p1[0] + (1 + eta) * p2[0] - (1 + eta) * p3[0]);
    const double yx = 0.25 * (-(1 - eta) * p0[1] + (1 - eta) * p1[1] + (1 + eta) * p2[1] - (1 + eta) * p3[1]);
    const double xe = 0.25 * (-(1 - xi) * p0[0] - (1 + xi) * p1[0] + (1 + xi) * p2[0] + (1 - xi) * p3[0]);
    const double ye = 0.25 * (-(1 - xi) * p0[1] - (1 + xi) * p1[1] + (1 + xi) * p2[1] + (1 - xi) * p3[1]);
    return xx * ye - xe * yx;
}

}  // namespace detail

/// Build face connectivity from shared edges, explicit periodic pairs and boundary tags, then
/// validate: positive Jacobians, every face covered exactly once.
inline void finalize_mesh(Mesh& m, const std::vector<PeriodicPair>& periodic,
                          const std::vector<BoundaryFace>& boundary) {
    const int ne = static_cast<int>(m.elements.size());
    for (int e = 0; e < ne; ++e) {
        for (int k = 0; k < 4; ++k) {
            const int n = m.elements[e][k];
            if (n < 0 || n >= static_cast<int>(m.nodes.size()))
                throw MeshError("element " + std::to_string(e) + " references missing node " + std::to_string(n));
        }
        // det J is affine in (xi, eta) for bilinear maps, so the corners bound it.
        for (double xi : {-1.0, 1.0})
            for (double eta : {-1.0, 1.0})
                if (!(detail::bilinear_detj(m, e, xi, eta) > 0.0))
                    throw MeshError("non-positive Jacobian in element " + std::to_string(e));
    }

    m.interior_faces.clear();
    m.boundary_faces.clear();
    m.element_faces.assign(ne, {});
    std::vector<std::array<bool, 4>> used(ne, {false, false, false, false});

    auto orient = [&](InteriorFace& F) {
        const auto ta = detail::face_tangent(m, F.elem_l, F.face_l);
        const auto tb = detail::face_tangent(m, F.elem_r, F.face_r);
        F.reversed = (ta[0] * tb[0] + ta[1] * tb[1]) < 0.0;
    };
    auto claim = [&](int e, int f) {
        if (e < 0 || e >= ne || f < 0 || f > 3)
            throw MeshError("face reference out of range: element " + std::to_string(e) + " face " + std::to_string(f));
        if (used[e][f])
            throw MeshError("face " + std::to_string(f) + " of element " + std::to_string(e) + " assigned twice");
        used[e][f] = true;
    };

    for (const auto& pp : periodic) {
        claim(pp.elem_a, pp.face_a);
        claim(pp.elem_b, pp.face_b);
        InteriorFace F{pp.elem_a, pp.face_a, pp.elem_b, pp.face_b, false, true};
        orient(F);
        const int idx = static_cast<int>(m.interior_faces.size());
        m.interior_faces.push_back(F);
        m.element_faces[pp.elem_a][pp.face_a] = {true, idx};
        m.element_faces[pp.elem_b][pp.face_b] = {true, idx};
    }
    for (const auto& b : boundary) {
        claim(b.elem, b.face);
        const int idx = static_cast<int>(m.boundary_faces.size());
        m.boundary_faces.push_back(b);
        m.element_faces[b.elem][b.face] = {false, idx};
    }

    std::map<std::pair<int, int>, std::pair<int, int>> open;
    for (int e = 0; e < ne; ++e) {
        for (int f = 0; f < 4; ++f) {
            if (used[e][f]) continue;
            auto fn = detail::face_nodes(m.elements[e], f);
            const std::pair<int, int> key{std::min(fn[0], fn[1]), std::max(fn[0], fn[1])};
            auto it = open.find(key);
            if (it == open.end()) {
                open.emplace(key, std::make_pair(e, f));
                continue;
            }
            const auto [e0, f0] = it->second;
            open.erase(it);
            used[e0][f0] = used[e][f] = true;
            InteriorFace F{e0, f0, e, f, false, false};
            orient(F);
            const int idx = static_cast<int>(m.interior_faces.size());
            m.interior_faces.push_back(F);
            m.element_faces[e0][f0] = {true, idx};
            m.element_faces[e][f] = {true, idx};
        }
    }
    if (!open.empty()) {
        const auto [e, f] = open.begin()->second;
        throw MeshError("face " + std::to_string(f) + " of element " + std::to_string(e) +
                        " has no neighbour and no boundary tag");
    }
}

/// Uniform nx x ny box on [x0, x0+lx] x [y0, y0+ly]; non-periodic sides get `side_tag`.
inline Mesh generate_box(int nx, int ny, double lx, double ly, bool periodic, double x0 = 0.0,
                         double y0 = 0.0, BoundaryTag side_tag = BoundaryTag::FarField) {
    if (nx < 1 || ny < 1) throw MeshError("generate_box: nx, ny must be >= 1");
    Mesh m;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) m.nodes.push_back({x0 + lx * i / nx, y0 + ly * j / ny});
    auto node = [&](int i, int j) { return j * (nx + 1) + i; };
    auto elem = [&](int i, int j) { return j * nx + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            m.elements.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)});

    std::vector<PeriodicPair> pp;
    std::vector<BoundaryFace> bf;
    if (periodic) {
        for (int j = 0; j < ny; ++j) pp.push_back({elem(nx - 1, j), 1, elem(0, j), 3});
        for (int i = 0; i < nx; ++i) pp.push_back({elem(i, ny - 1), 2, elem(i, 0), 0});
    } else {
        for (int i = 0; i < nx; ++i) {
            bf.push_back({elem(i, 0), 0, side_tag});
            bf.push_back({elem(i, ny - 1), 2, side_tag});
        }
        for (int j = 0; j < ny; ++j) {
            bf.push_back({elem(0, j), 3, side_tag});
            bf.push_back({elem(nx - 1, j), 1, side_tag});
        }
    }
    finalize_mesh(m, pp, bf);
    return m;
}

/// Height of the first radial layer for geometric spacing with ratio `stretch`.
inline double first_layer_height(double r_wall, double r_far, int n_rad, double stretch) {
    if (stretch == 1.0) return (r_far - r_wall) / n_rad;
    return (r_far - r_wall) * (stretch - 1.0) / (std::pow(stretch, n_rad) - 1.0);
}

/// Geometric ratio giving the requested first-layer height (bisection).
inline double stretch_for_first_layer(double r_wall, double r_far, int n_rad, double h1) {
    if (!(h1 > 0.0)) throw MeshError("first-layer height must be positive");
    if (h1 > (r_far - r_wall) / n_rad) throw MeshError("first-layer height exceeds uniform spacing");
    double lo = 1.0, hi = 2.0;
    while (first_layer_height(r_wall, r_far, n_rad, hi) > h1) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (first_layer_height(r_wall, r_far, n_rad, mid) > h1 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// O-grid around a cylinder centred at the origin. Innermost ring is wall, outermost far-field.
inline Mesh generate_cylinder_omesh(int n_circ, int n_rad, double r_wall, double r_far, double stretch,
                                    BoundaryTag wall_tag = BoundaryTag::WallAdiabatic) {
    if (n_circ < 8 || n_circ % 2 != 0) throw MeshError("generate_cylinder_omesh: n_circ must be even and >= 8");
    if (n_rad < 2) throw MeshError("generate_cylinder_omesh: n_rad must be >= 2");
    if (!(r_far > r_wall) || !(r_wall > 0.0)) throw MeshError("generate_cylinder_omesh: need 0 < r_wall < r_far");
    if (!(stretch >= 1.0)) throw MeshError("generate_cylinder_omesh: stretch must be >= 1");
    if (!(first_layer_height(r_wall, r_far, n_rad, stretch) > 0.0))
        throw MeshError("generate_cylinder_omesh: non-positive first-layer height");

    Mesh m;
    std::vector<double> r(n_rad + 1);
    r[0] = r_wall;
    const double h1 = first_layer_height(r_wall, r_far, n_rad, stretch);
    double h = h1;
    for (int k = 1; k <= n_rad; ++k) {
        r[k] = r[k - 1] + h;
        h *= stretch;
    }
    r[n_rad] = r_far;
    for (int k = 0; k <= n_rad; ++k)
        for (int i = 0; i < n_circ; ++i) {
            const double th = 2.0 * std::numbers::pi * i / n_circ;
            m.nodes.push_back({r[k] * std::cos(th), r[k] * std::sin(th)});
        }
    auto node = [&](int i, int k) { return k * n_circ + (i % n_circ); };
    std::vector<BoundaryFace> bf;
    for (int k = 0; k < n_rad; ++k)
        for (int i = 0; i < n_circ; ++i) {
            const int e = static_cast<int>(m.elements.size());
            m.elements.push_back({node(i, k), node(i, k + 1), node(i + 1, k + 1), node(i + 1, k)});
            if (k == 0) bf.push_back({e, 3, wall_tag});
            if (k == n_rad - 1) bf.push_back({e, 1, BoundaryTag::FarField});
        }
    finalize_mesh(m, {}, bf);
    return m;
}

/// Parse the native `pmgmesh 1` text format.
inline Mesh read_mesh(std::istream& in) {
    Mesh m;
    std::vector<BoundaryFace> bf;
    std::vector<PeriodicPair> pp;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> MeshError {
        return MeshError("mesh parse error at line " + std::to_string(lineno) + ": " + msg);
    };
    auto next = [&](std::istringstream& ls) -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ls.clear();
            ls.str(line);
            return true;
        }
        return false;
    };
    std::istringstream ls;
    if (!next(ls)) throw fail("empty file");
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != "pmgmesh" || version != 1) throw fail("expected header 'pmgmesh 1'");

    bool have_nodes = false, have_elements = false;
    while (next(ls)) {
        std::string kw;
        ls >> kw;
        if (kw == "nodes") {
            long n = -1;
            if (!(ls >> n) || n < 0) throw fail("bad node count");
            m.nodes.resize(n);
            for (long i = 0; i < n; ++i) {
                if (!next(ls)) throw fail("unexpected end of file in nodes");
                if (!(ls >> m.nodes[i][0] >> m.nodes[i][1])) throw fail("expected 'x y'");
            }
            have_nodes = true;
        } else if (kw == "elements") {
            long n = -1;
            if (!(ls >> n) || n < 0) throw fail("bad element count");
            m.elements.resize(n);
            for (long i = 0; i < n; ++i) {
                if (!next(ls)) throw fail("unexpected end of file in elements");
                auto& el = m.elements[i];
                if (!(ls >> el[0] >> el[1] >> el[2] >> el[3])) throw fail("expected 'n0 n1 n2 n3'");
                for (int k = 0; k < 4; ++k)
                    if (!have_nodes || el[k] < 0 || el[k] >= static_cast<int>(m.nodes.size()))
                        throw fail("element " + std::to_string(i) + " references missing node " + std::to_string(el[k]));
            }
            have_elements = true;
        } else if (kw == "boundary") {
            std::string tag;
            long n = -1;
            if (!(ls >> tag >> n) || n < 0) throw fail("expected 'boundary TAG K'");
            BoundaryTag t;
            try {
                t = parse_boundary_tag(tag);
            } catch (const MeshError& e) {
                throw fail(e.what());
            }
            for (long i = 0; i < n; ++i) {
                if (!next(ls)) throw fail("unexpected end of file in boundary");
                BoundaryFace b;
                b.tag = t;
                if (!(ls >> b.elem >> b.face)) throw fail("expected 'elem face'");
                if (b.face < 0 || b.face > 3 || b.elem < 0 || b.elem >= static_cast<int>(m.elements.size()))
                    throw fail("boundary face reference out of range");
                bf.push_back(b);
            }
        } else if (kw == "periodic") {
            long n = -1;
            if (!(ls >> n) || n < 0) throw fail("expected 'periodic K'");
            for (long i = 0; i < n; ++i) {
                if (!next(ls)) throw fail("unexpected end of file in periodic");
                PeriodicPair p{};
                if (!(ls >> p.elem_a >> p.face_a >> p.elem_b >> p.face_b)) throw fail("expected 'ea fa eb fb'");
                pp.push_back(p);
            }
        } else {
            throw fail("unknown section '" + kw + "'");
        }
    }
    if (!have_nodes || !have_elements) throw MeshError("mesh file lacks nodes or elements section");
    finalize_mesh(m, pp, bf);
    return m;
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MeshError("cannot open mesh file '" + path + "'");
    return read_mesh(f);
}

inline void write_mesh(const Mesh& m, std::ostream& out) {
    out << "pmgmesh 1\n";
    out.precision(17);
    out << "nodes " << m.nodes.size() << "\n";
    for (const auto& n : m.nodes) out << n[0] << " " << n[1] << "\n";
    out << "elements " << m.elements.size() << "\n";
    for (const auto& e : m.elements) out << e[0] << " " << e[1] << " " << e[2] << " " << e[3] << "\n";
    for (BoundaryTag t : {BoundaryTag::WallAdiabatic, BoundaryTag::WallSlip, BoundaryTag::FarField}) {
        std::vector<const BoundaryFace*> sel;
        for (const auto& b : m.boundary_faces)
            if (b.tag == t) sel.push_back(&b);
        if (sel.empty()) continue;
        out << "boundary " << to_string(t) << " " << sel.size() << "\n";
        for (const auto* b : sel) out << b->elem << " " << b->face << "\n";
    }
    std::vector<const InteriorFace*> per;
    for (const auto& f : m.interior_faces)
        if (f.periodic) per.push_back(&f);
    if (!per.empty()) {
        out << "periodic " << per.size() << "\n";
        for (const auto* f : per) out << f->elem_l << " " << f->face_l << " " << f->elem_r << " " << f->face_r << "\n";
    }
}

/// Mapping metrics of every element sampled at the degree-p solution and flux points.
///
/// Solution-point arrays are indexed e*np + (j*n + i); face arrays (e*4 + f)*n + k.
/// sxi = detJ * grad(xi) = (y_eta, -x_eta), seta = detJ * grad(eta) = (-y_xi, x_xi).
struct ElementGeometry {
    int p = 0;
    int n = 1, np = 1;
    std::vector<double> x, y, detj, sxi_x, sxi_y, seta_x, seta_y;
    std::vector<double> fx, fy, fnx, fny, fsj;

    ElementGeometry() = default;
    ElementGeometry(const Mesh& m, int degree) : p(degree), n(degree + 1), np((degree + 1) * (degree + 1)) {
        const auto& b = basis(degree);
        const std::size_t ne = m.num_elements();
        for (auto* v : {&x, &y, &detj, &sxi_x, &sxi_y, &seta_x, &seta_y}) v->resize(ne * np);
        for (auto* v : {&fx, &fy, &fnx, &fny, &fsj}) v->resize(ne * 4 * n);
        for (std::size_t e = 0; e < ne; ++e) {
            const auto& el = m.elements[e];
            const auto& p0 = m.nodes[el[0]];
            const auto& p1 = m.nodes[el[1]];
            const auto& p2 = m.nodes[el[2]];
            const auto& p3 = m.nodes[el[3]];
            auto eval = [&](double xi, double eta, double* out) {
                const double N0 = 0.25 * (1 - xi) * (1 - eta), N1 = 0.25 * (1 + xi) * (1 - eta);
                const double N2 = 0.25 * (1 + xi) * (1 + eta), N3 = 0.25 * (1 - xi) * (1 + eta);
                out[0] = N0 * p0[0] + N1 * p1[0] + N2 * p2[0] + N3 * p3[0];
                out[1] = N0 * p0[1] + N1 * p1[1] + N2 * p2[1] + N3 * p3[1];
                out[2] = 0.25 * (-(1 - eta) * p0[0] + (1 - eta) * p1[0] + (1 + eta) * p2[0] - (1 + eta) * p3[0]);
                out[3] = 0.25 * (-(1 - eta) * p0[1] + (1 - eta) * p1[1] + (1 + eta) * p2[1] - (1 + eta) * p3[1]);
                out[4] = 0.25 * (-(1 - xi) * p0[0] - (1 + xi) * p1[0] + (1 + xi) * p2[0] + (1 - xi) * p3[0]);
                out[5] = 0.25 * (-(1 - xi) * p0[1] - (1 + xi) * p1[1] + (1 + xi) * p2[1] + (1 - xi) * p3[1]);
            };
            double g[6];
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    eval(b.points()[i], b.points()[j], g);
                    const std::size_t k = e * np + j * n + i;
                    x[k] = g[0];
                    y[k] = g[1];
                    const double xx = g[2], yx = g[3], xe = g[4], ye = g[5];
                    detj[k] = xx * ye - xe * yx;
                    if (!(detj[k] > 0.0)) throw MeshError("non-positive Jacobian in element " + std::to_string(e));
                    sxi_x[k] = ye;
                    sxi_y[k] = -xe;
                    seta_x[k] = -yx;
                    seta_y[k] = xx;
                }
            for (int f = 0; f < 4; ++f)
                for (int k = 0; k < n; ++k) {
                    const double s = b.points()[k];
                    double xi = 0, eta = 0, sign = 1;
                    bool xi_face = false;
                    switch (f) {
                        case 0: xi = s; eta = -1; sign = -1; break;
                        case 1: xi = 1; eta = s; sign = 1; xi_face = true; break;
                        case 2: xi = s; eta = 1; sign = 1; break;
                        default: xi = -1; eta = s; sign = -1; xi_face = true; break;
                    }
                    eval(xi, eta, g);
                    double Nx, Ny;
                    if (xi_face) {
                        Nx = sign * g[5];
                        Ny = -sign * g[4];
                    } else {
                        Nx = -sign * g[3];
                        Ny = sign * g[2];
                    }
                    const double sj = std::hypot(Nx, Ny);
                    const std::size_t idx = (e * 4 + f) * n + k;
                    fx[idx] = g[0];
                    fy[idx] = g[1];
                    fnx[idx] = Nx / sj;
                    fny[idx] = Ny / sj;
                    fsj[idx] = sj;
                }
        }
    }
};

}  // namespace pmgflow
