#pragma once
// Finite-difference Jacobian pieces: the JFNK matrix-free product and coloured assembly of
// element diagonal blocks and block-sparse (face-neighbour) Jacobians. Stored blocks hold
// -dR/dq; shifts are added when factorizing.

#include <algorithm>
#include <vector>

#include "pmgflow/linalg.hpp"
#include "pmgflow/residual.hpp"

namespace pmgflow {

inline constexpr double kDefaultFdEps = 1e-6;

/// Y = shift X - (R(q + eps X) - R(q)) / eps, with R(q) supplied; `res(q, r)` evaluates R.
template <class ResidualEval>
void jfnk_matvec_with(const ResidualEval& res, const Field& q, const Field& Rq, double shift, double eps, ConstSpan X,
                      MutSpan Y) {
    thread_local Field qp, Rp;
    if (!qp.same_layout(q)) {
        qp = q.zeros_like();
        Rp = q.zeros_like();
    }
    const auto& qd = q.data();
    auto& pd = qp.data();
    for (std::size_t i = 0; i < qd.size(); ++i) pd[i] = qd[i] + eps * X[i];
    res(qp, Rp);
    const auto& r0 = Rq.data();
    const auto& r1 = Rp.data();
    for (std::size_t i = 0; i < qd.size(); ++i) Y[i] = shift * X[i] - (r1[i] - r0[i]) / eps;
}

inline void jfnk_matvec(const Discretization& d, const Field& q, const Field& Rq, double shift, double eps, ConstSpan X,
                        MutSpan Y) {
    jfnk_matvec_with([&d](const Field& a, Field& r) { d.residual(a, r); }, q, Rq, shift, eps, X, Y);
}

namespace detail {

/// Perturb one local unknown of every element in a colour at once and hand each response to `sink`.
template <class Sink>
void coloured_fd(const Discretization& d, const Field& q, double eps, int distance, Sink&& sink) {
    const auto adj = d.mesh().adjacency();
    const auto color = distance_coloring(adj, distance);
    const int ncolor = color.empty() ? 0 : *std::max_element(color.begin(), color.end()) + 1;
    std::vector<std::vector<int>> members(ncolor);
    for (std::size_t e = 0; e < color.size(); ++e) members[color[e]].push_back(static_cast<int>(e));
    std::size_t max_local = 0;
    for (std::size_t e = 0; e < q.num_elements(); ++e) max_local = std::max(max_local, q.elem_size(e));

    Field qp = q;
    Field Rp = q.zeros_like();
    for (int c = 0; c < ncolor; ++c)
        for (std::size_t k = 0; k < max_local; ++k) {
            bool any = false;
            for (int e : members[c])
                if (k < q.elem_size(e)) {
                    qp.data()[q.offset(e) + k] += eps;
                    any = true;
                }
            if (!any) continue;
            d.residual(qp, Rp);
            for (int e : members[c])
                if (k < q.elem_size(e)) {
                    qp.data()[q.offset(e) + k] = q.data()[q.offset(e) + k];
                    sink(e, k, Rp);
                }
        }
}

inline int coupling_radius(const Discretization& d) { return d.equation().viscous() ? 2 : 1; }

}  // namespace detail

/// Raw element diagonal blocks -dR_e/dq_e by coloured finite differences.
inline BlockDiagonal assemble_element_blocks(const Discretization& d, const Field& q, const Field& Rq,
                                             double eps = kDefaultFdEps) {
    BlockDiagonal B(q);
    detail::coloured_fd(d, q, eps, detail::coupling_radius(d), [&](int e, std::size_t k, const Field& Rp) {
        Mat& blk = B.block(e);
        const std::size_t off = q.offset(e);
        for (Eigen::Index i = 0; i < blk.rows(); ++i)
            blk(i, static_cast<Eigen::Index>(k)) = -(Rp.data()[off + i] - Rq.data()[off + i]) / eps;
    });
    return B;
}

/// Diagonal-plus-face-neighbour sparsity pattern of the mesh.
inline std::vector<std::vector<int>> face_neighbour_pattern(const Mesh& m) {
    auto adj = m.adjacency();
    for (std::size_t e = 0; e < adj.size(); ++e) adj[e].push_back(static_cast<int>(e));
    return adj;
}

/// Every element within `radius` face hops (including itself).
inline std::vector<std::vector<int>> neighbour_pattern(const Mesh& m, int radius) {
    const auto adj = m.adjacency();
    std::vector<std::vector<int>> out(adj.size());
    std::vector<int> seen(adj.size(), -1);
    for (std::size_t e = 0; e < adj.size(); ++e) {
        std::vector<int> front{static_cast<int>(e)};
        seen[e] = static_cast<int>(e);
        out[e].push_back(static_cast<int>(e));
        for (int r = 0; r < radius; ++r) {
            std::vector<int> next;
            for (int a : front)
                for (int b : adj[a])
                    if (seen[b] != static_cast<int>(e)) {
                        seen[b] = static_cast<int>(e);
                        next.push_back(b);
                        out[e].push_back(b);
                    }
            front = std::move(next);
        }
        std::sort(out[e].begin(), out[e].end());
    }
    return out;
}

/// Raw block-sparse Jacobian -dR/dq on the full coupling stencil of the scheme (face neighbours
/// for inviscid residuals, two face hops with BR1 viscous terms).
inline SparseBlockMatrix assemble_sparse_jacobian(const Discretization& d, const Field& q, const Field& Rq,
                                                  double eps = kDefaultFdEps) {
    const int radius = detail::coupling_radius(d);
    SparseBlockMatrix A(q, neighbour_pattern(d.mesh(), radius));
    detail::coloured_fd(d, q, eps, 2 * radius, [&](int e, std::size_t k, const Field& Rp) {
        // Column k of element e feeds block (r, e) for every row element r in the pattern of e.
        for (std::size_t kk = A.row_begin(e); kk < A.row_end(e); ++kk) {
            const int r = A.col(kk);
            const std::size_t idx = A.find(r, e);
            Mat& blk = A.value(idx);
            const std::size_t off = q.offset(r);
            for (Eigen::Index i = 0; i < blk.rows(); ++i)
                blk(i, static_cast<Eigen::Index>(k)) = -(Rp.data()[off + i] - Rq.data()[off + i]) / eps;
        }
    });
    return A;
}

}  // namespace pmgflow
