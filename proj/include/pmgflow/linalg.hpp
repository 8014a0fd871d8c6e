#pragma once
// Element-block linear algebra: block-diagonal LU, block-CSR matrices and block ILU(0).

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmgflow/core.hpp"
#include "pmgflow/field.hpp"
#include "pmgflow/operators.hpp"

namespace pmgflow {

/// Per-element dense blocks, with optional LU factors of (shift I + block).
class BlockDiagonal {
public:
    BlockDiagonal() = default;
    explicit BlockDiagonal(const Field& layout) : layout_(layout.zeros_like()) {
        blocks_.resize(layout.num_elements());
        for (std::size_t e = 0; e < blocks_.size(); ++e) {
            const auto n = static_cast<Eigen::Index>(layout.elem_size(e));
            blocks_[e] = Mat::Zero(n, n);
        }
    }

    std::size_t size() const noexcept { return blocks_.size(); }
    Mat& block(std::size_t e) { return blocks_[e]; }
    const Mat& block(std::size_t e) const { return blocks_[e]; }
    const Field& layout() const noexcept { return layout_; }

    /// LU-factorize shift*I + block for every element.
    void factorize(double shift) {
        lu_.resize(blocks_.size());
        for (std::size_t e = 0; e < blocks_.size(); ++e) {
            Mat A = blocks_[e];
            A.diagonal().array() += shift;
            lu_[e].compute(A);
            const double d = lu_[e].matrixLU().diagonal().cwiseAbs().minCoeff();
            if (!(d > 1e-300) || !std::isfinite(d))
                throw SolverError("singular element block in element " + std::to_string(e));
        }
        shift_ = shift;
        factored_ = true;
    }

    bool factored() const noexcept { return factored_; }
    double shift() const noexcept { return shift_; }

    /// Y = (shift I + B)^{-1} X, element by element.
    void solve(ConstSpan X, MutSpan Y) const {
        if (!factored_) throw SolverError("block-diagonal solve before factorization");
        for (std::size_t e = 0; e < blocks_.size(); ++e) {
            const auto off = layout_.offset(e);
            const auto n = static_cast<Eigen::Index>(layout_.elem_size(e));
            Eigen::Map<const Eigen::VectorXd> x(X.data() + off, n);
            Eigen::Map<Eigen::VectorXd> y(Y.data() + off, n);
            y = lu_[e].solve(x);
        }
    }

    /// Y = (shift I + B) X with the given shift.
    void multiply(ConstSpan X, MutSpan Y, double shift) const {
        for (std::size_t e = 0; e < blocks_.size(); ++e) {
            const auto off = layout_.offset(e);
            const auto n = static_cast<Eigen::Index>(layout_.elem_size(e));
            Eigen::Map<const Eigen::VectorXd> x(X.data() + off, n);
            Eigen::Map<Eigen::VectorXd> y(Y.data() + off, n);
            y = blocks_[e] * x + shift * x;
        }
    }

private:
    Field layout_;
    std::vector<Mat> blocks_;
    std::vector<Eigen::PartialPivLU<Mat>> lu_;
    double shift_ = 0.0;
    bool factored_ = false;
};

/// Block-CSR matrix over element adjacency.
class SparseBlockMatrix {
public:
    SparseBlockMatrix() = default;

    /// pattern[e] lists the column elements of block row e (must include e).
    SparseBlockMatrix(const Field& layout, std::vector<std::vector<int>> pattern) : layout_(layout.zeros_like()) {
        const std::size_t ne = layout.num_elements();
        if (pattern.size() != ne) throw std::invalid_argument("pattern size mismatch");
        row_start_.assign(ne + 1, 0);
        for (std::size_t e = 0; e < ne; ++e) {
            auto& p = pattern[e];
            std::sort(p.begin(), p.end());
            p.erase(std::unique(p.begin(), p.end()), p.end());
            if (!std::binary_search(p.begin(), p.end(), static_cast<int>(e)))
                throw std::invalid_argument("pattern row lacks its diagonal block");
            row_start_[e + 1] = row_start_[e] + p.size();
        }
        for (std::size_t e = 0; e < ne; ++e)
            for (int c : pattern[e])
                if (!std::binary_search(pattern[c].begin(), pattern[c].end(), static_cast<int>(e)))
                    throw std::invalid_argument("asymmetric block sparsity pattern at (" + std::to_string(e) + "," +
                                                std::to_string(c) + ")");
        for (std::size_t e = 0; e < ne; ++e)
            for (int c : pattern[e]) {
                col_.push_back(c);
                blocks_.push_back(Mat::Zero(static_cast<Eigen::Index>(layout.elem_size(e)),
                                            static_cast<Eigen::Index>(layout.elem_size(c))));
                if (c == static_cast<int>(e)) diag_.push_back(col_.size() - 1);
            }
    }

    std::size_t rows() const noexcept { return row_start_.empty() ? 0 : row_start_.size() - 1; }
    const Field& layout() const noexcept { return layout_; }
    std::size_t row_begin(std::size_t e) const { return row_start_[e]; }
    std::size_t row_end(std::size_t e) const { return row_start_[e + 1]; }
    int col(std::size_t k) const { return col_[k]; }
    Mat& value(std::size_t k) { return blocks_[k]; }
    const Mat& value(std::size_t k) const { return blocks_[k]; }
    std::size_t diag_index(std::size_t e) const { return diag_[e]; }

    /// Index of block (r, c) or npos.
    std::size_t find(std::size_t r, int c) const {
        auto b = col_.begin() + row_start_[r], en = col_.begin() + row_start_[r + 1];
        auto it = std::lower_bound(b, en, c);
        if (it == en || *it != c) return npos;
        return static_cast<std::size_t>(it - col_.begin());
    }

    void add_to_diagonal(double s) {
        for (std::size_t e = 0; e < rows(); ++e) blocks_[diag_[e]].diagonal().array() += s;
    }

    void multiply(ConstSpan X, MutSpan Y) const {
        for (std::size_t e = 0; e < rows(); ++e) {
            const auto n = static_cast<Eigen::Index>(layout_.elem_size(e));
            Eigen::Map<Eigen::VectorXd> y(Y.data() + layout_.offset(e), n);
            y.setZero();
            for (std::size_t k = row_start_[e]; k < row_start_[e + 1]; ++k) {
                const int c = col_[k];
                Eigen::Map<const Eigen::VectorXd> x(X.data() + layout_.offset(c),
                                                    static_cast<Eigen::Index>(layout_.elem_size(c)));
                y.noalias() += blocks_[k] * x;
            }
        }
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    Field layout_;
    std::vector<std::size_t> row_start_;
    std::vector<int> col_;
    std::vector<Mat> blocks_;
    std::vector<std::size_t> diag_;
};

/// Block ILU(0) factors on the pattern of a SparseBlockMatrix (natural element order).
class BlockILU0 {
public:
    BlockILU0() = default;
    explicit BlockILU0(const SparseBlockMatrix& A) : f_(A) {
        const std::size_t ne = f_.rows();
        inv_.resize(ne);
        for (std::size_t i = 0; i < ne; ++i) {
            for (std::size_t ik = f_.row_begin(i); ik < f_.row_end(i); ++ik) {
                const int k = f_.col(ik);
                if (k >= static_cast<int>(i)) break;
                // L_ik = A_ik U_kk^{-1}
                f_.value(ik) = f_.value(ik) * inv_[k];
                for (std::size_t ij = ik + 1; ij < f_.row_end(i); ++ij) {
                    const int j = f_.col(ij);
                    const std::size_t kj = f_.find(k, j);
                    if (kj == SparseBlockMatrix::npos) continue;
                    f_.value(ij) -= f_.value(ik) * f_.value(kj);
                }
            }
            Eigen::PartialPivLU<Mat> lu(f_.value(f_.diag_index(i)));
            const double d = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
            if (!(d > 1e-300) || !std::isfinite(d))
                throw SolverError("singular ILU0 pivot block in element " + std::to_string(i));
            inv_[i] = lu.inverse();
        }
    }

    /// Y = (LU)^{-1} X
    void apply(ConstSpan X, MutSpan Y) const {
        const Field& L = f_.layout();
        const std::size_t ne = f_.rows();
        for (std::size_t i = 0; i < ne; ++i) {
            const auto n = static_cast<Eigen::Index>(L.elem_size(i));
            Eigen::Map<Eigen::VectorXd> y(Y.data() + L.offset(i), n);
            y = Eigen::Map<const Eigen::VectorXd>(X.data() + L.offset(i), n);
            for (std::size_t ik = f_.row_begin(i); ik < f_.row_end(i); ++ik) {
                const int k = f_.col(ik);
                if (k >= static_cast<int>(i)) break;
                y.noalias() -= f_.value(ik) *
                               Eigen::Map<const Eigen::VectorXd>(Y.data() + L.offset(k), static_cast<Eigen::Index>(L.elem_size(k)));
            }
        }
        for (std::size_t i = ne; i-- > 0;) {
            const auto n = static_cast<Eigen::Index>(L.elem_size(i));
            Eigen::Map<Eigen::VectorXd> y(Y.data() + L.offset(i), n);
            for (std::size_t ij = f_.row_end(i); ij-- > f_.row_begin(i);) {
                const int j = f_.col(ij);
                if (j <= static_cast<int>(i)) break;
                y.noalias() -= f_.value(ij) *
                               Eigen::Map<const Eigen::VectorXd>(Y.data() + L.offset(j), static_cast<Eigen::Index>(L.elem_size(j)));
            }
            y = inv_[i] * Eigen::VectorXd(y);
        }
    }

private:
    SparseBlockMatrix f_;
    std::vector<Mat> inv_;  // inverted pivot blocks U_ii^{-1}
};

/// Greedy colouring such that elements sharing a colour are more than `distance` face hops apart.
inline std::vector<int> distance_coloring(const std::vector<std::vector<int>>& adj, int distance) {
    const std::size_t ne = adj.size();
    std::vector<int> color(ne, -1);
    std::vector<int> mark(ne, -1), seen(ne, -1);
    std::vector<int> frontier, next, nbhd;
    for (std::size_t e = 0; e < ne; ++e) {
        // Collect elements within `distance` hops.
        nbhd.clear();
        frontier.assign(1, static_cast<int>(e));
        seen[e] = static_cast<int>(e);
        for (int d = 0; d < distance; ++d) {
            next.clear();
            for (int a : frontier)
                for (int b : adj[a])
                    if (seen[b] != static_cast<int>(e)) {
                        seen[b] = static_cast<int>(e);
                        next.push_back(b);
                        nbhd.push_back(b);
                    }
            frontier.swap(next);
        }
        for (int b : nbhd)
            if (color[b] >= 0) mark[color[b]] = static_cast<int>(e);
        int c = 0;
        while (mark[c] == static_cast<int>(e)) ++c;
        color[e] = c;
    }
    return color;
}

}  // namespace pmgflow
