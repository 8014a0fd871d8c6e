#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "pmgflow/newton_krylov.hpp"
#include "test_util.hpp"

using namespace pmgflow;
using namespace testutil;

namespace {

Mat random_matrix(int n, unsigned seed) {
    const Vec v = random_vec(static_cast<std::size_t>(n * n), seed);
    return Eigen::Map<const Mat>(v.data(), n, n);
}

LinearOperator dense_op(const Mat& A) {
    return [&A](ConstSpan X, MutSpan Y) {
        Eigen::Map<Eigen::VectorXd>(Y.data(), A.rows()) = A * Eigen::Map<const Eigen::VectorXd>(X.data(), A.cols());
    };
}

}  // namespace

// ---------------------------------------------------------------- GMRES

TEST(Gmres, IdentityConvergesInOneIteration) {
    const Vec b = random_vec(17, 1);
    Vec x(17, 0.0);
    const auto r = gmres_solve([](ConstSpan X, MutSpan Y) { vec::copy(X, Y); }, b, x, {}, KrylovConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1);
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(x[i], b[i], 1e-14);
}

TEST(Gmres, DenseSystemMatchesLU) {
    const int n = 20;
    const Mat A = Mat::Identity(n, n) * 4.0 + random_matrix(n, 7);
    const Vec b = random_vec(n, 8);
    const Eigen::VectorXd ref = A.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
    KrylovConfig cfg;
    cfg.rtol = 1e-10;
    Vec x(n, 0.0);
    const auto r = gmres_solve(dense_op(A), b, x, {}, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 20);
    const double err = (Eigen::Map<const Eigen::VectorXd>(x.data(), n) - ref).norm() / ref.norm();
    EXPECT_LE(err, 1e-9);
    Vec Ax(n);
    dense_op(A)(x, Ax);
    for (int i = 0; i < n; ++i) Ax[i] -= b[i];
    EXPECT_LE(vec::norm2(Ax) / vec::norm2(b), 1e-10 * 10);
}

TEST(Gmres, ExactPreconditionerOneIteration) {
    const int n = 15;
    const Mat A = Mat::Identity(n, n) + 3.0 * random_matrix(n, 3);
    const Mat Ainv = A.inverse();
    const Vec b = random_vec(n, 4);
    Vec x(n, 0.0);
    const auto r = gmres_solve(dense_op(A), b, x, dense_op(Ainv), KrylovConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Gmres, ResidualHistoryMonotoneWithinCycle) {
    const int n = 40;
    const Mat A = Mat::Identity(n, n) * 2.0 + random_matrix(n, 11);
    const Vec b = random_vec(n, 12);
    KrylovConfig cfg;
    cfg.kdim = 40;
    cfg.rtol = 1e-12;
    Vec x(n, 0.0);
    const auto r = gmres_solve(dense_op(A), b, x, {}, cfg);
    ASSERT_GE(r.history.size(), 2u);
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1] * (1 + 1e-12));
}

TEST(Gmres, RestartsReachTolerance) {
    const int n = 30;
    const Mat A = Mat::Identity(n, n) * 3.0 + random_matrix(n, 21);
    const Vec b = random_vec(n, 22);
    KrylovConfig cfg;
    cfg.kdim = 5;
    cfg.max_restarts = 50;
    cfg.rtol = 1e-9;
    Vec x(n, 0.0);
    const auto r = gmres_solve(dense_op(A), b, x, {}, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_GT(r.iterations, 5);
    Vec Ax(n);
    dense_op(A)(x, Ax);
    for (int i = 0; i < n; ++i) Ax[i] -= b[i];
    EXPECT_LE(vec::norm2(Ax) / vec::norm2(b), 1e-9);
}

TEST(Gmres, BudgetExhaustedIsReported) {
    const int n = 30;
    const Mat A = Mat::Identity(n, n) + 2.0 * random_matrix(n, 31);
    const Vec b = random_vec(n, 32);
    KrylovConfig cfg;
    cfg.kdim = 3;
    cfg.rtol = 1e-12;
    Vec x(n, 0.0);
    const auto r = gmres_solve(dense_op(A), b, x, {}, cfg);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 3);
    EXPECT_GT(r.rel_residual, 1e-12);
}

TEST(Gmres, ZeroRhsGivesZero) {
    Vec b(5, 0.0), x(5, 1.0);
    const auto r = gmres_solve([](ConstSpan X, MutSpan Y) { vec::copy(X, Y); }, b, x, {}, KrylovConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_EQ(vec::norm_inf(x), 0.0);
}

TEST(Gmres, NaNInArnoldiNamesIteration) {
    Vec b(4, 1.0), x(4, 0.0);
    int calls = 0;
    LinearOperator bad = [&](ConstSpan X, MutSpan Y) {
        vec::copy(X, Y);
        Y[0] += 0.5 * X[1];
        if (++calls == 2) Y[1] = std::numeric_limits<double>::quiet_NaN();
    };
    KrylovConfig cfg;
    cfg.rtol = 1e-14;
    try {
        gmres_solve(bad, b, x, {}, cfg);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration 2"), std::string::npos) << e.what();
    }
}

TEST(Gmres, InvalidConfigRejected) {
    KrylovConfig cfg;
    cfg.kdim = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------- element blocks

TEST(ElementJacobi, IdentityBlocksReturnInput) {
    const Field layout(4, 3, 1);
    BlockDiagonal B(layout);
    B.factorize(1.0);
    const Vec X = random_vec(layout.size(), 5);
    Vec Y(X.size());
    ej_apply(B, X, Y);
    for (std::size_t i = 0; i < X.size(); ++i) EXPECT_DOUBLE_EQ(Y[i], X[i]);
}

TEST(ElementJacobi, RandomBlocksInvertExactly) {
    const Field layout(4, std::vector<int>{2, 1, 0, 3});
    BlockDiagonal B(layout);
    for (std::size_t e = 0; e < B.size(); ++e) {
        const auto n = static_cast<int>(B.block(e).rows());
        const Mat R = random_matrix(n, 40 + static_cast<unsigned>(e));
        B.block(e) = R * R.transpose() + Mat::Identity(n, n);
    }
    B.factorize(0.0);
    const Vec X = random_vec(layout.size(), 6);
    Vec BX(X.size()), Y(X.size());
    B.multiply(X, BX, 0.0);
    ej_apply(B, BX, Y);
    for (std::size_t i = 0; i < X.size(); ++i) EXPECT_NEAR(Y[i], X[i], 1e-12);
}

TEST(ElementJacobi, ExactPreconditionerForBlockDiagonalSystem) {
    const Field layout(1, 5, 2);
    BlockDiagonal B(layout);
    for (std::size_t e = 0; e < B.size(); ++e) B.block(e) = random_matrix(9, 60 + static_cast<unsigned>(e));
    const double shift = 5.0;
    B.factorize(shift);
    const Vec b = random_vec(layout.size(), 7);
    Vec x(b.size(), 0.0);
    const auto r = gmres_solve([&](ConstSpan X, MutSpan Y) { B.multiply(X, Y, shift); }, b, x,
                               [&](ConstSpan X, MutSpan Y) { ej_apply(B, X, Y); }, KrylovConfig{});
    EXPECT_EQ(r.iterations, 1);
}

TEST(ElementJacobi, SingularBlockNamesElement) {
    const Field layout(1, 3, 1);
    BlockDiagonal B(layout);
    B.block(2) = -Mat::Identity(4, 4);
    try {
        B.factorize(1.0);
        FAIL();
    } catch (const SolverError& e) {
        EXPECT_NE(std::string(e.what()).find("element 2"), std::string::npos);
    }
}

TEST(ElementJacobi, ZeroResidualGivesShiftedIdentity) {
    const Discretization d(generate_box(3, 3, 1.0, 1.0, true), scalar(0.0, 0.0, 0.0));
    const Field q = d.sample(std::vector<int>(9, 2), [](double x, double y, double* o) { o[0] = x * y; });
    const Field Rq = d.residual(q);
    EXPECT_EQ(vec::norm_inf(Rq.span()), 0.0);
    BlockDiagonal B = assemble_element_blocks(d, q, Rq);
    const double shift = 2.5;
    B.factorize(shift);
    const Vec X = random_vec(q.size(), 9);
    Vec Y(X.size());
    ej_apply(B, X, Y);
    for (std::size_t i = 0; i < X.size(); ++i) EXPECT_DOUBLE_EQ(Y[i], X[i] / shift);
}

TEST(ElementJacobi, BlocksMatchGlobalColumnProbe) {
    for (auto spec : {scalar(0.0, 0.0, 0.3), scalar(1.0, 0.4, 0.05)}) {
        const Discretization d(generate_box(3, 3, 1.0, 1.0, true), spec);
        const Field q = d.sample(std::vector<int>(9, 2), [](double x, double y, double* o) { o[0] = std::sin(3 * x + y); });
        const Field Rq = d.residual(q);
        const BlockDiagonal B = assemble_element_blocks(d, q, Rq);
        const Mat J = column_probe_jacobian(d, q);
        for (std::size_t e = 0; e < 9; ++e) {
            const auto off = static_cast<Eigen::Index>(q.offset(e));
            const auto n = static_cast<Eigen::Index>(q.elem_size(e));
            const Mat ref = J.block(off, off, n, n);
            EXPECT_LE((B.block(e) - ref).norm(), 1e-6 * ref.norm()) << "element " << e;
        }
    }
}

TEST(ElementJacobi, NavierStokesBlocksMatchColumnProbe) {
    const Discretization d(generate_box(3, 3, 1.0, 1.0, true), gas(EquationKind::NavierStokes, 0.5, 50.0));
    const Field q = d.sample(std::vector<int>(9, 1), wavy_state);
    const Field Rq = d.residual(q);
    const BlockDiagonal B = assemble_element_blocks(d, q, Rq);
    const Mat J = column_probe_jacobian(d, q);
    for (std::size_t e = 0; e < 9; ++e) {
        const auto off = static_cast<Eigen::Index>(q.offset(e));
        const auto n = static_cast<Eigen::Index>(q.elem_size(e));
        const Mat ref = J.block(off, off, n, n);
        EXPECT_LE((B.block(e) - ref).norm(), 1e-5 * ref.norm()) << "element " << e;
    }
}

TEST(ElementJacobi, DoublingShiftMovesDiagonal) {
    const Field layout(1, 2, 1);
    BlockDiagonal B(layout);
    B.block(0) = random_matrix(4, 70);
    B.block(1) = random_matrix(4, 71);
    const Vec X = random_vec(layout.size(), 72);
    Vec Y1(X.size()), Y2(X.size());
    B.multiply(X, Y1, 1.5);
    B.multiply(X, Y2, 3.0);
    for (std::size_t i = 0; i < X.size(); ++i) EXPECT_NEAR(Y2[i] - Y1[i], 1.5 * X[i], 1e-14);
}

// ---------------------------------------------------------------- sparse blocks and ILU0

TEST(SparseJacobian, FaceNeighbourBlocksMatchColumnProbe) {
    const Discretization d(generate_box(4, 4, 1.0, 1.0, true), scalar(1.0, 0.5, 0.05));
    const Field q = d.sample(std::vector<int>(16, 2), [](double x, double y, double* o) { o[0] = std::cos(2 * x - y); });
    const Field Rq = d.residual(q);
    const SparseBlockMatrix A = assemble_sparse_jacobian(d, q, Rq);
    const Mat J = column_probe_jacobian(d, q);
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t k = A.row_begin(r); k < A.row_end(r); ++k) {
            const int c = A.col(k);
            const Mat ref = J.block(static_cast<Eigen::Index>(q.offset(r)), static_cast<Eigen::Index>(q.offset(c)),
                                    A.value(k).rows(), A.value(k).cols());
            EXPECT_LE((A.value(k) - ref).norm(), 1e-6 * std::max(1.0, ref.norm())) << r << "," << c;
        }
}

TEST(SparseJacobian, AsymmetricPatternRejected) {
    const Field layout(1, 3, 0);
    EXPECT_THROW(SparseBlockMatrix(layout, {{0, 1}, {1}, {2}}), std::invalid_argument);
    EXPECT_THROW(SparseBlockMatrix(layout, {{1}, {0, 1}, {2}}), std::invalid_argument);
}

TEST(Ilu0, BlockDiagonalIsExact) {
    const Field layout(2, 4, 1);
    SparseBlockMatrix A(layout, {{0}, {1}, {2}, {3}});
    BlockDiagonal B(layout);
    for (std::size_t e = 0; e < 4; ++e) {
        A.value(A.diag_index(e)) = Mat::Identity(8, 8) * 3.0 + random_matrix(8, 80 + static_cast<unsigned>(e));
        B.block(e) = A.value(A.diag_index(e));
    }
    B.factorize(0.0);
    const BlockILU0 ilu(A);
    const Vec X = random_vec(layout.size(), 81);
    Vec Y1(X.size()), Y2(X.size());
    ilu.apply(X, Y1);
    B.solve(X, Y2);
    for (std::size_t i = 0; i < X.size(); ++i) EXPECT_NEAR(Y1[i], Y2[i], 1e-12);
}

TEST(Ilu0, BlockTridiagonalChainIsExact) {
    const int ne = 6, nb = 4;
    const Field layout(1, ne, 1);
    std::vector<std::vector<int>> pat(ne);
    for (int e = 0; e < ne; ++e) {
        pat[e].push_back(e);
        if (e > 0) pat[e].push_back(e - 1);
        if (e + 1 < ne) pat[e].push_back(e + 1);
    }
    SparseBlockMatrix A(layout, pat);
    Mat dense = Mat::Zero(ne * nb, ne * nb);
    unsigned seed = 90;
    for (int r = 0; r < ne; ++r)
        for (std::size_t k = A.row_begin(r); k < A.row_end(r); ++k) {
            const int c = A.col(k);
            Mat blk = random_matrix(nb, seed++);
            if (c == r) blk += Mat::Identity(nb, nb) * 6.0;
            A.value(k) = blk;
            dense.block(r * nb, c * nb, nb, nb) = blk;
        }
    const BlockILU0 ilu(A);
    const Vec X = random_vec(layout.size(), 99);
    Vec Y(X.size());
    ilu.apply(X, Y);
    const Eigen::VectorXd ref = dense.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(X.data(), ne * nb));
    for (int i = 0; i < ne * nb; ++i) EXPECT_NEAR(Y[i], ref[i], 1e-12);
}

TEST(Ilu0, SingularPivotNamesElement) {
    const Field layout(1, 2, 0);
    SparseBlockMatrix A(layout, {{0, 1}, {0, 1}});
    A.value(A.find(0, 0))(0, 0) = 1.0;
    A.value(A.find(0, 1))(0, 0) = 1.0;
    A.value(A.find(1, 0))(0, 0) = 1.0;
    A.value(A.find(1, 1))(0, 0) = 1.0;  // pivot 1 - 1*1 = 0
    try {
        BlockILU0 ilu(A);
        FAIL();
    } catch (const SolverError& e) {
        EXPECT_NE(std::string(e.what()).find("element 1"), std::string::npos) << e.what();
    }
}

TEST(Coloring, DistanceTwoSeparation) {
    const Mesh m = generate_box(6, 5, 1.0, 1.0, true);
    const auto adj = m.adjacency();
    for (int dist : {1, 2, 3}) {
        const auto col = distance_coloring(adj, dist);
        for (std::size_t e = 0; e < adj.size(); ++e) {
            // breadth-first ball of radius dist
            std::vector<int> depth(adj.size(), -1);
            std::vector<int> frontier{static_cast<int>(e)};
            depth[e] = 0;
            for (int d = 1; d <= dist; ++d) {
                std::vector<int> next;
                for (int a : frontier)
                    for (int b : adj[a])
                        if (depth[b] < 0) {
                            depth[b] = d;
                            next.push_back(b);
                        }
                frontier = next;
            }
            for (std::size_t o = 0; o < adj.size(); ++o) {
                if (o != e && depth[o] > 0) {
                    EXPECT_NE(col[o], col[e]);
                }
            }
        }
    }
}

// ---------------------------------------------------------------- JFNK matvec

TEST(Jfnk, ZeroDirectionGivesZero) {
    const Discretization d(generate_box(2, 2, 1.0, 1.0, true), gas(EquationKind::NavierStokes));
    const Field q = d.sample(std::vector<int>(4, 2), wavy_state);
    const Field Rq = d.residual(q);
    Vec X(q.size(), 0.0), Y(q.size(), 7.0);
    jfnk_matvec(d, q, Rq, 3.0, kDefaultFdEps, X, Y);
    for (double y : Y) EXPECT_EQ(y, 0.0);
}

TEST(Jfnk, ExactForLinearScalarOperator) {
    const Discretization d(generate_box(3, 3, 1.0, 1.0, false), scalar(1.0, 0.3, 0.02, 0.5));
    const std::vector<int> deg(9, 2);
    const Field q = d.sample(deg, [](double x, double y, double* o) { o[0] = x - y * y; });
    const Field Rq = d.residual(q);
    const Vec X = random_vec(q.size(), 3);
    const double shift = 4.0;
    Vec Y(X.size());
    jfnk_matvec(d, q, Rq, shift, kDefaultFdEps, X, Y);
    // Affine R: R(q + X) - R(q) is the exact linear part.
    Field qx = q;
    for (std::size_t i = 0; i < X.size(); ++i) qx.data()[i] += X[i];
    const Field Rx = d.residual(qx);
    Vec ref(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) ref[i] = shift * X[i] - (Rx.data()[i] - Rq.data()[i]);
    EXPECT_LE(rel_diff(Y, ref), 1e-9);
}

TEST(Jfnk, NavierStokesMatchesColumnProbe) {
    const Discretization d(generate_box(2, 2, 1.0, 1.0, true), gas(EquationKind::NavierStokes, 0.5, 100.0));
    const Field q = d.sample(std::vector<int>(4, 2), wavy_state);
    const Field Rq = d.residual(q);
    const Mat J = column_probe_jacobian(d, q);
    Vec X = random_vec(q.size(), 17);
    vec::scale(1.0 / vec::norm2(X), X);
    const double shift = 2.0;
    Vec Y(X.size());
    jfnk_matvec(d, q, Rq, shift, kDefaultFdEps, X, Y);
    const Eigen::VectorXd ref =
        shift * Eigen::Map<const Eigen::VectorXd>(X.data(), J.cols()) + J * Eigen::Map<const Eigen::VectorXd>(X.data(), J.cols());
    EXPECT_LE(rel_diff(Y, Vec(ref.data(), ref.data() + ref.size())), 1e-5);
}

// ---------------------------------------------------------------- SER and PTC

TEST(Ser, DefaultGrowsWithFallingResidual) {
    EXPECT_DOUBLE_EQ(ser_update(0.1, 1.0, 0.5, 10.0), 0.2);
    EXPECT_DOUBLE_EQ(ser_update(0.1, 0.7, 0.7, 10.0), 0.1);
    EXPECT_DOUBLE_EQ(ser_update(0.9, 1.0, 0.5, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(ser_update(0.3, 0.0, 0.5, 7.0), 7.0);
}

TEST(Ser, AsPrintedShrinks) { EXPECT_DOUBLE_EQ(ser_update(0.1, 1.0, 0.5, 10.0, true), 0.05); }

TEST(Ser, MonotoneInResidualDecrease) {
    for (double ratio = 1.0; ratio < 50.0; ratio *= 1.7)
        EXPECT_GE(ser_update(0.2, ratio, 1.0, 1e9), 0.2);
}

namespace {

/// Pointwise scalar system R(q) = c - q - beta q^3 on a one-value-per-element layout.
StageOperator cubic_system(double beta, const Vec& c) {
    StageOperator op;
    op.sys.custom = [beta, c](const Field& q, Field& R) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            const double v = q.data()[i];
            R.data()[i] = c[i] - v - beta * v * v * v;
        }
    };
    return op;
}

}  // namespace

TEST(Ptc, ZeroResidualTakesNoIterations) {
    const Discretization d(generate_box(3, 3, 1.0, 1.0, true), scalar(1.0, 0.0, 0.0));
    StageOperator op;
    op.sys.disc = &d;
    Field q = d.make_field(2);
    const auto r = ptc_solve(op, q, PtcConfig{}, KrylovConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 0);
}

TEST(Ptc, AffineProblemOneNewtonStep) {
    const Discretization d(generate_box(4, 4, 1.0, 1.0, false), scalar(1.0, 0.5, 0.05, 1.0));
    StageOperator op;
    op.sys.disc = &d;
    Field q = d.make_field(2);
    PtcConfig cfg;
    cfg.dtau_init = std::numeric_limits<double>::infinity();
    cfg.rtol = 1e-7;
    cfg.steady = true;
    KrylovConfig k;
    k.kdim = static_cast<int>(q.size());
    k.rtol = 1e-12;
    const auto r = ptc_solve(op, q, cfg, k);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Ptc, CubicSystemMatchesBisection) {
    const Vec c = {0.5, 1.0, 2.0, 3.0, -1.0};
    const double beta = 0.3;
    StageOperator op = cubic_system(beta, c);
    Field q(1, c.size(), 0);
    PtcConfig cfg;
    cfg.dtau_init = 1.0;
    cfg.ser = true;
    cfg.rtol = 1e-12;
    KrylovConfig k;
    k.rtol = 1e-12;
    const auto r = ptc_solve(op, q, cfg, k);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.iterations, cfg.max_iters);
    for (std::size_t i = 0; i < c.size(); ++i) {
        double lo = -10, hi = 10;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (c[i] - mid - beta * mid * mid * mid > 0 ? lo : hi) = mid;
        }
        EXPECT_NEAR(q.data()[i], 0.5 * (lo + hi), 1e-9);
    }
}

TEST(Ptc, BudgetExhaustedReturnsBestIterate) {
    const Vec c = {5.0, -4.0};
    StageOperator op = cubic_system(1.0, c);
    Field q(1, c.size(), 0);
    PtcConfig cfg;
    cfg.dtau_init = 1e-3;
    cfg.max_iters = 3;
    cfg.rtol = 1e-12;
    const auto r = ptc_solve(op, q, cfg, KrylovConfig{});
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 3);
    EXPECT_LT(r.final_norm, r.initial_norm);
    EXPECT_NEAR(vec::norm2(op.eval(q).data()), r.final_norm, 1e-12);
}

TEST(Ptc, NonPhysicalUpdateHalvesPseudoStepOnce) {
    // R = 2 - q with a forbidden band around q = 1.5, entered by the first update at dtau = 3.
    StageOperator op;
    op.sys.custom = [](const Field& q, Field& R) {
        const double v = q.data()[0];
        if (v > 1.45 && v < 1.55) throw NonPhysicalState(0, "forbidden band");
        R.data()[0] = 2.0 - v;
    };
    Field q(1, 1, 0);
    PtcConfig cfg;
    cfg.dtau_init = 3.0;
    cfg.rtol = 1e-8;
    KrylovConfig k;
    k.rtol = 1e-12;
    std::vector<double> dtaus;
    const auto r = ptc_solve(op, q, cfg, k, nullptr, [&](int, double, double, double dt) { dtaus.push_back(dt); });
    EXPECT_TRUE(r.converged);
    ASSERT_GE(dtaus.size(), 2u);
    EXPECT_DOUBLE_EQ(dtaus[0], 3.0);
    EXPECT_DOUBLE_EQ(dtaus[1], 1.5);
    EXPECT_NEAR(q.data()[0], 2.0, 1e-7);
}

TEST(Ptc, PersistentNonPhysicalStateAborts) {
    StageOperator op;
    op.sys.custom = [](const Field& q, Field& R) {
        const double v = q.data()[0];
        if (v > 1.0) throw NonPhysicalState(0, "q > 1");
        R.data()[0] = 2.0 - v;
    };
    Field q(1, 1, 0);
    PtcConfig cfg;
    cfg.dtau_init = 100.0;
    EXPECT_THROW(ptc_solve(op, q, cfg, KrylovConfig{}), SolverError);
}

TEST(Ptc, ElementJacobiPreconditionerCutsIterations) {
    const Discretization d(generate_box(4, 4, 1.0, 1.0, false), scalar(1.0, 0.5, 0.02, 1.0));
    StageOperator op;
    op.sys.disc = &d;
    PtcConfig cfg;
    cfg.dtau_init = 0.05;
    cfg.ser = true;
    cfg.rtol = 1e-8;
    KrylovConfig k;
    k.rtol = 1e-3;
    Field q0 = d.make_field(2), q1 = d.make_field(2);
    const auto plain = ptc_solve(op, q0, cfg, k);
    ElementJacobiPreconditioner ej;
    const auto pre = ptc_solve(op, q1, cfg, k, &ej);
    EXPECT_TRUE(plain.converged);
    EXPECT_TRUE(pre.converged);
    EXPECT_LT(pre.gmres_iterations, plain.gmres_iterations);
    EXPECT_LE(rel_diff(q1.data(), q0.data()), 1e-6);
}

TEST(Ptc, EulerSteadyFreeStreamPerturbationDecays) {
    const Discretization d(generate_box(3, 3, 1.0, 1.0, true), gas(EquationKind::Euler));
    StageOperator op;
    op.sys.disc = &d;
    Field q = d.free_stream(2);
    for (std::size_t i = 0; i < q.size(); i += 4) q.data()[i] *= 1.0 + 1e-3 * std::sin(0.37 * static_cast<double>(i));
    PtcConfig cfg;
    cfg.dtau_init = 0.1;
    cfg.max_iters = 5;
    ElementJacobiPreconditioner ej;
    std::vector<double> norms;
    ptc_solve(op, q, cfg, KrylovConfig{}, &ej, [&](int, double a, double, double) { norms.push_back(a); });
    ASSERT_GE(norms.size(), 2u);
    EXPECT_LT(norms.back(), norms.front());
}
