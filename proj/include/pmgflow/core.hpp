#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmgflow {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

/// Thrown when a state with non-positive density or pressure reaches a flux.
class NonPhysicalState : public std::runtime_error {
public:
    NonPhysicalState(std::size_t element, const std::string& what)
        : std::runtime_error("non-physical state in element " + std::to_string(element) + ": " + what),
          element_(element) {}
    std::size_t element() const noexcept { return element_; }

private:
    std::size_t element_;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace vec {

// Reductions run in index order so results are reproducible bit for bit.
inline double dot(ConstSpan a, ConstSpan b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(ConstSpan a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(ConstSpan a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

/// y += alpha * x
inline void axpy(double alpha, ConstSpan x, MutSpan y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, MutSpan x) {
    for (double& v : x) v *= alpha;
}

inline void copy(ConstSpan src, MutSpan dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
}

inline void fill(MutSpan x, double v) {
    for (double& e : x) e = v;
}

inline bool all_finite(ConstSpan x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace vec
}  // namespace pmgflow
