#pragma once
// Reference-element machinery on [-1, 1]: Gauss-Legendre solution points,
// Lagrange bases, mass matrices and L2 transfer operators between degrees.
// 2D quad operators are tensor products with the xi index running fastest.

#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pmgflow/core.hpp"

namespace pmgflow {

using Mat = Eigen::MatrixXd;

inline constexpr int kMaxDegree = 8;

/// Legendre polynomial P_n and its derivative at x.
inline std::pair<double, double> legendre(int n, double x) {
    if (n == 0) return {1.0, 0.0};
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    // P'_n from the standard recurrence; the endpoint limit is n(n+1)/2 * (+-1)^(n+1).
    double dp;
    if (std::abs(1.0 - x * x) < 1e-14) {
        dp = 0.5 * n * (n + 1.0) * (x > 0 ? 1.0 : (n % 2 == 0 ? -1.0 : 1.0));
    } else {
        dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    return {p1, dp};
}

struct Quadrature {
    std::vector<double> points;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule, points ascending.
inline Quadrature gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    Quadrature q;
    q.points.resize(n);
    q.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev guess then Newton on P_n.
        double x = -std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(n, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const auto [p, dp] = legendre(n, x);
        (void)p;
        q.points[i] = x;
        q.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    if (n % 2 == 1) q.points[n / 2] = 0.0;
    // Enforce exact symmetry of the rule.
    for (int i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (q.points[n - 1 - i] - q.points[i]);
        const double w = 0.5 * (q.weights[n - 1 - i] + q.weights[i]);
        q.points[i] = -x;
        q.points[n - 1 - i] = x;
        q.weights[i] = q.weights[n - 1 - i] = w;
    }
    return q;
}

/// Orthonormal Legendre mode phi_k = sqrt((2k+1)/2) P_k on [-1, 1].
inline double orthonormal_legendre(int k, double x) {
    return std::sqrt((2.0 * k + 1.0) / 2.0) * legendre(k, x).first;
}

/// 1D nodal Lagrange basis at the p+1 Gauss-Legendre points.
class Basis1D {
public:
    explicit Basis1D(int p) : p_(p) {
        if (p < 0) throw std::invalid_argument("Basis1D: negative degree");
        const auto q = gauss_legendre(p + 1);
        x_ = q.points;
        w_ = q.weights;
        const int n = p + 1;
        bary_.assign(n, 1.0);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                if (k != j) bary_[j] /= (x_[j] - x_[k]);

        D_ = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            double diag = 0.0;
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                D_(i, j) = (bary_[j] / bary_[i]) / (x_[i] - x_[j]);
                diag -= D_(i, j);
            }
            D_(i, i) = diag;
        }
        left_ = values(-1.0);
        right_ = values(1.0);

        // DG-equivalent FR corrections: g_L = (-1)^(p+1)/2 (P_{p+1} - P_p), g_R = (P_{p+1} + P_p)/2.
        dgl_.resize(n);
        dgr_.resize(n);
        const double sgn = ((p + 1) % 2 == 0) ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) {
            const double d1 = legendre(p + 1, x_[i]).second;
            const double d0 = legendre(p, x_[i]).second;
            dgl_[i] = 0.5 * sgn * (d1 - d0);
            dgr_[i] = 0.5 * (d1 + d0);
        }
    }

    int degree() const noexcept { return p_; }
    int size() const noexcept { return p_ + 1; }
    const std::vector<double>& points() const noexcept { return x_; }
    const std::vector<double>& weights() const noexcept { return w_; }
    /// D(i, j) = l_j'(x_i)
    const Mat& derivative() const noexcept { return D_; }
    const std::vector<double>& left_values() const noexcept { return left_; }
    const std::vector<double>& right_values() const noexcept { return right_; }
    /// Correction-function derivatives at the solution points.
    const std::vector<double>& dg_left() const noexcept { return dgl_; }
    const std::vector<double>& dg_right() const noexcept { return dgr_; }

    /// l_j(x) for all j (barycentric form; exact at the nodes).
    std::vector<double> values(double x) const {
        const int n = size();
        std::vector<double> l(n, 0.0);
        for (int j = 0; j < n; ++j) {
            if (x == x_[j]) {
                l[j] = 1.0;
                return l;
            }
        }
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            l[j] = bary_[j] / (x - x_[j]);
            denom += l[j];
        }
        for (double& v : l) v /= denom;
        return l;
    }

private:
    int p_;
    std::vector<double> x_, w_, bary_;
    Mat D_;
    std::vector<double> left_, right_, dgl_, dgr_;
};

namespace detail {
struct BasisTable {
    std::array<std::unique_ptr<Basis1D>, kMaxDegree + 1> b;
    BasisTable() {
        for (int p = 0; p <= kMaxDegree; ++p) b[p] = std::make_unique<Basis1D>(p);
    }
};
inline const BasisTable& basis_table() {
    static const BasisTable t;
    return t;
}
inline void check_degree(int p) {
    if (p < 0 || p > kMaxDegree)
        throw std::invalid_argument("polynomial degree out of range: " + std::to_string(p));
}
}  // namespace detail

inline const Basis1D& basis(int p) {
    detail::check_degree(p);
    return *detail::basis_table().b[p];
}

/// Interpolation from the degree-`from` solution points to the degree-`to` points.
inline Mat interpolation_matrix(int from, int to) {
    const auto& bf = basis(from);
    const auto& bt = basis(to);
    Mat I(bt.size(), bf.size());
    for (int i = 0; i < bt.size(); ++i) {
        const auto l = bf.values(bt.points()[i]);
        for (int j = 0; j < bf.size(); ++j) I(i, j) = l[j];
    }
    return I;
}

/// M(i, j) = int l_i^{p_row} l_j^{p_col}, Gauss-Legendre with ceil((p_row+p_col)/2)+1 points.
inline Mat cross_mass_matrix(int p_row, int p_col) {
    const auto& br = basis(p_row);
    const auto& bc = basis(p_col);
    const int nq = (p_row + p_col + 1) / 2 + 1;
    const auto q = gauss_legendre(nq);
    Mat M = Mat::Zero(br.size(), bc.size());
    for (int k = 0; k < nq; ++k) {
        const auto lr = br.values(q.points[k]);
        const auto lc = bc.values(q.points[k]);
        for (int i = 0; i < br.size(); ++i)
            for (int j = 0; j < bc.size(); ++j) M(i, j) += q.weights[k] * lr[i] * lc[j];
    }
    return M;
}

inline Mat mass_matrix(int p) { return cross_mass_matrix(p, p); }

/// 1D L2 projection from degree p0 (fine) to p1 (coarse): (M^{p1})^{-1} M^{p1 p0}.
inline Mat restriction_operator(int p0, int p1) {
    if (p1 >= p0 || p1 < 0)
        throw std::invalid_argument("restriction_operator: need 0 <= coarse < fine");
    return mass_matrix(p1).ldlt().solve(cross_mass_matrix(p1, p0));
}

/// 1D prolongation from degree p1 (coarse) to p0 (fine): (M^{p0})^{-1} M^{p0 p1}.
inline Mat prolongation_operator(int p0, int p1) {
    if (p1 >= p0 || p1 < 0)
        throw std::invalid_argument("prolongation_operator: need 0 <= coarse < fine");
    return mass_matrix(p0).ldlt().solve(cross_mass_matrix(p0, p1));
}

/// Tensor product A (eta) x B (xi) for xi-fastest nodal ordering.
inline Mat tensor2d(const Mat& a) {
    const Eigen::Index r = a.rows(), c = a.cols();
    Mat K(r * r, c * c);
    for (Eigen::Index jr = 0; jr < r; ++jr)
        for (Eigen::Index jc = 0; jc < c; ++jc)
            K.block(jr * r, jc * c, r, c) = a(jr, jc) * a;
    return K;
}

/// Dense 2D restriction/prolongation pair between two degrees on the reference quad.
struct TransferOperators {
    int p_fine = 0;
    int p_coarse = 0;
    Mat restriction;   ///< (p_coarse+1)^2 x (p_fine+1)^2
    Mat prolongation;  ///< (p_fine+1)^2 x (p_coarse+1)^2
};

namespace detail {
struct TransferTable {
    std::mutex m;
    std::array<std::array<std::unique_ptr<TransferOperators>, kMaxDegree + 1>, kMaxDegree + 1> t;
};
inline TransferTable& transfer_table() {
    static TransferTable t;
    return t;
}
}  // namespace detail

inline const TransferOperators& transfer_operators(int p_fine, int p_coarse) {
    detail::check_degree(p_fine);
    detail::check_degree(p_coarse);
    if (p_coarse >= p_fine) throw std::invalid_argument("transfer_operators: need coarse < fine");
    auto& tab = detail::transfer_table();
    std::lock_guard lock(tab.m);
    auto& slot = tab.t[p_fine][p_coarse];
    if (!slot) {
        auto op = std::make_unique<TransferOperators>();
        op->p_fine = p_fine;
        op->p_coarse = p_coarse;
        op->restriction = tensor2d(restriction_operator(p_fine, p_coarse));
        op->prolongation = tensor2d(prolongation_operator(p_fine, p_coarse));
        slot = std::move(op);
    }
    return *slot;
}

/// V(i, k) = phi_k(x_i), orthonormal Legendre modes at the solution points.
inline Mat vandermonde(int p) {
    const auto& b = basis(p);
    Mat V(b.size(), b.size());
    for (int i = 0; i < b.size(); ++i)
        for (int k = 0; k < b.size(); ++k) V(i, k) = orthonormal_legendre(k, b.points()[i]);
    return V;
}

/// Orthonormal tensor-Legendre coefficients of a 2D nodal field (mode (a, b) at index b*(p+1)+a).
inline Vec modal_coefficients(ConstSpan nodal, int p) {
    const int n = p + 1;
    if (static_cast<int>(nodal.size()) != n * n)
        throw std::invalid_argument("modal_coefficients: size mismatch");
    const Mat Vinv = vandermonde(p).inverse();
    Eigen::Map<const Mat> U(nodal.data(), n, n);  // U(i, j): xi index i, eta index j
    const Mat C = Vinv * U * Vinv.transpose();
    return Vec(C.data(), C.data() + n * n);
}

inline Vec nodal_values(ConstSpan modal, int p) {
    const int n = p + 1;
    if (static_cast<int>(modal.size()) != n * n) throw std::invalid_argument("nodal_values: size mismatch");
    const Mat V = vandermonde(p);
    Eigen::Map<const Mat> C(modal.data(), n, n);
    const Mat U = V * C * V.transpose();
    return Vec(U.data(), U.data() + n * n);
}

}  // namespace pmgflow
