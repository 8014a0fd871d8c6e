#pragma once
// Built-in ESDIRK and Rosenbrock-Wanner coefficient tables and their algebraic checks.
//
// ROW schemes are stored in the transformed form
//   (I/(gamma dt) - J) U_i = R(q^n + sum_j a_ij U_j) + (1/dt) sum_j c_ij U_j,  q^{n+1} = q^n + sum_j m_j U_j.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmgflow/core.hpp"

namespace pmgflow {

enum class SchemeKind { Esdirk, Row };

struct Tableau {
    std::string name;
    SchemeKind kind = SchemeKind::Esdirk;
    int order = 0;
    double gamma = 0.0;
    Eigen::MatrixXd a;  ///< s x s; ROW: strictly lower a_ij of the transformed form
    Eigen::MatrixXd c;  ///< ROW only: strictly lower c_ij
    Eigen::VectorXd b;  ///< ESDIRK weights b_i or ROW weights m_i

    int stages() const { return static_cast<int>(b.size()); }
};

namespace detail {

inline Eigen::MatrixXd lower(int s, std::initializer_list<std::initializer_list<double>> rows) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s, s);
    int i = 0;
    for (const auto& r : rows) {
        int j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace detail

inline Tableau esdirk2() {
    const double g = 1.0 - 1.0 / std::sqrt(2.0);
    const double w = std::sqrt(2.0) / 4.0;
    Tableau t;
    t.name = "esdirk2";
    t.order = 2;
    t.gamma = g;
    t.a = detail::lower(3, {{0.0}, {g, g}, {w, w, g}});
    t.b = Eigen::Vector3d(w, w, g);
    return t;
}

/// ARK4(3)6L[2]SA, implicit part.
inline Tableau esdirk4() {
    Tableau t;
    t.name = "esdirk4";
    t.order = 4;
    t.gamma = 0.25;
    t.a = detail::lower(6, {{0.0},
                            {0.25, 0.25},
                            {8611.0 / 62500.0, -1743.0 / 31250.0, 0.25},
                            {5012029.0 / 34652500.0, -654441.0 / 2922500.0, 174375.0 / 388108.0, 0.25},
                            {15267082809.0 / 155376265600.0, -71443401.0 / 120774400.0, 730878875.0 / 902184768.0,
                             2285395.0 / 8070912.0, 0.25},
                            {82889.0 / 524892.0, 0.0, 15625.0 / 83664.0, 69875.0 / 102672.0, -2260.0 / 8211.0, 0.25}});
    t.b = t.a.row(5).transpose();
    return t;
}

/// Two-stage L-stable ROS2 with gamma = 1 + 1/sqrt(2).
inline Tableau row2() {
    const double g = 1.0 + 1.0 / std::sqrt(2.0);
    Tableau t;
    t.name = "row2";
    t.kind = SchemeKind::Row;
    t.order = 2;
    t.gamma = g;
    t.a = detail::lower(2, {{}, {1.0 / g}});
    t.c = detail::lower(2, {{}, {-2.0 / g}});
    t.b = Eigen::Vector2d(1.5 / g, 0.5 / g);
    return t;
}

/// Shampine's four-stage, fourth-order ROS4 (gamma = 1/2).
inline Tableau row4() {
    Tableau t;
    t.name = "row4";
    t.kind = SchemeKind::Row;
    t.order = 4;
    t.gamma = 0.5;
    t.a = detail::lower(4, {{}, {2.0}, {48.0 / 25.0, 6.0 / 25.0}, {48.0 / 25.0, 6.0 / 25.0, 0.0}});
    t.c = detail::lower(4, {{}, {-8.0}, {372.0 / 25.0, 12.0 / 5.0}, {-112.0 / 125.0, -54.0 / 125.0, -2.0 / 5.0}});
    t.b = Eigen::Vector4d(19.0 / 9.0, 0.5, 25.0 / 108.0, 125.0 / 108.0);
    return t;
}

inline Tableau scheme_by_name(const std::string& name) {
    if (name == "esdirk2") return esdirk2();
    if (name == "esdirk4") return esdirk4();
    if (name == "row2") return row2();
    if (name == "row4") return row4();
    throw ConfigError("time.scheme: unknown scheme '" + name + "' (expected esdirk2, esdirk4, row2 or row4)");
}

struct TableauCheck {
    std::string name;
    bool passed = false;
    double defect = 0.0;
};

struct TableauReport {
    std::vector<TableauCheck> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return !checks.empty();
    }
    bool passed(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return c.passed;
        return false;
    }
};

/// ROW coefficients in the classical (alpha, Gamma, b) form recovered from the transformed table.
struct RowClassical {
    Eigen::MatrixXd alpha, Gamma;
    Eigen::VectorXd b;
};

inline RowClassical row_classical(const Tableau& t) {
    const int s = t.stages();
    const Eigen::MatrixXd Ginv = Eigen::MatrixXd::Identity(s, s) / t.gamma - t.c;
    RowClassical r;
    r.Gamma = Ginv.inverse();
    r.alpha = t.a * r.Gamma;
    r.b = (t.b.transpose() * r.Gamma).transpose();
    return r;
}

/// Structural and order-condition checks up to min(order, 4).
inline TableauReport validate_tableau(const Tableau& t, double tol = 1e-12) {
    TableauReport rep;
    auto add = [&](const std::string& name, double defect) { rep.checks.push_back({name, std::abs(defect) <= tol, defect}); };
    const int s = t.stages();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(s);

    double upper = 0.0;
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j) upper = std::max(upper, std::abs(t.a(i, j)));

    if (t.kind == SchemeKind::Esdirk) {
        double diag = std::abs(t.a(0, 0));
        for (int i = 1; i < s; ++i) diag = std::max(diag, std::abs(t.a(i, i) - t.gamma));
        add("lower_triangular", upper);
        add("diagonal", t.gamma > 0.0 ? diag : 1.0);
        const Eigen::MatrixXd& A = t.a;
        const Eigen::VectorXd& b = t.b;
        const Eigen::VectorXd c = A * one;
        const Eigen::VectorXd c2 = c.cwiseProduct(c);
        add("order1", b.sum() - 1.0);
        if (t.order >= 2) add("order2", b.dot(c) - 0.5);
        if (t.order >= 3) {
            add("order3a", b.dot(c2) - 1.0 / 3.0);
            add("order3b", b.dot(A * c) - 1.0 / 6.0);
        }
        if (t.order >= 4) {
            add("order4a", b.dot(c2.cwiseProduct(c)) - 0.25);
            add("order4b", b.dot(c.cwiseProduct(A * c)) - 0.125);
            add("order4c", b.dot(A * c2) - 1.0 / 12.0);
            add("order4d", b.dot(A * (A * c)) - 1.0 / 24.0);
        }
        return rep;
    }

    double cup = 0.0;
    for (int i = 0; i < s; ++i)
        for (int j = i; j < s; ++j) cup = std::max(cup, std::abs(t.c(i, j)));
    add("lower_triangular", std::max(upper, cup) + (t.a.diagonal().cwiseAbs().maxCoeff()));
    if (!(t.gamma > 0.0)) {
        rep.checks.push_back({"diagonal", false, t.gamma});
        return rep;
    }
    add("diagonal", 0.0);
    const RowClassical r = row_classical(t);
    const double g = t.gamma;
    const Eigen::MatrixXd beta = r.alpha + r.Gamma - g * Eigen::MatrixXd::Identity(s, s);  // strictly lower
    const Eigen::VectorXd al = r.alpha * one;
    const Eigen::VectorXd bp = beta * one;
    const Eigen::VectorXd al2 = al.cwiseProduct(al);
    add("order1", r.b.sum() - 1.0);
    if (t.order >= 2) add("order2", r.b.dot(bp) - (0.5 - g));
    if (t.order >= 3) {
        add("order3a", r.b.dot(al2) - 1.0 / 3.0);
        add("order3b", r.b.dot(beta * bp) - (1.0 / 6.0 - g + g * g));
    }
    if (t.order >= 4) {
        add("order4a", r.b.dot(al2.cwiseProduct(al)) - 0.25);
        add("order4b", r.b.dot(al.cwiseProduct(r.alpha * bp)) - (0.125 - g / 3.0));
        add("order4c", r.b.dot(beta * al2) - (1.0 / 12.0 - g / 3.0));
        add("order4d", r.b.dot(beta * (beta * bp)) - (1.0 / 24.0 - g / 2.0 + 1.5 * g * g - g * g * g));
    }
    return rep;
}

}  // namespace pmgflow
