#pragma once
// Per-element nodal storage with a per-element polynomial degree.
// Layout is point-major: data[offset(e) + (j*n + i)*nvar + v], xi index i fastest.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "pmgflow/core.hpp"

namespace pmgflow {

class Field {
public:
    Field() = default;
    Field(int nvar, std::vector<int> degrees) : nvar_(nvar), degree_(std::move(degrees)) {
        offset_.resize(degree_.size() + 1, 0);
        for (std::size_t e = 0; e < degree_.size(); ++e) {
            const std::size_t n = degree_[e] + 1;
            offset_[e + 1] = offset_[e] + n * n * nvar_;
        }
        data_.assign(offset_.back(), 0.0);
    }
    Field(int nvar, std::size_t num_elements, int p) : Field(nvar, std::vector<int>(num_elements, p)) {}

    int nvar() const noexcept { return nvar_; }
    std::size_t num_elements() const noexcept { return degree_.size(); }
    int degree(std::size_t e) const { return degree_[e]; }
    const std::vector<int>& degrees() const noexcept { return degree_; }
    int max_degree() const { return degree_.empty() ? 0 : *std::max_element(degree_.begin(), degree_.end()); }
    int points(std::size_t e) const { return (degree_[e] + 1) * (degree_[e] + 1); }
    std::size_t offset(std::size_t e) const { return offset_[e]; }
    std::size_t elem_size(std::size_t e) const { return offset_[e + 1] - offset_[e]; }
    std::size_t size() const noexcept { return data_.size(); }

    Vec& data() noexcept { return data_; }
    const Vec& data() const noexcept { return data_; }
    MutSpan span() noexcept { return data_; }
    ConstSpan span() const noexcept { return data_; }
    MutSpan elem(std::size_t e) { return MutSpan(data_.data() + offset_[e], elem_size(e)); }
    ConstSpan elem(std::size_t e) const { return ConstSpan(data_.data() + offset_[e], elem_size(e)); }
    double* point(std::size_t e, int k) { return data_.data() + offset_[e] + static_cast<std::size_t>(k) * nvar_; }
    const double* point(std::size_t e, int k) const {
        return data_.data() + offset_[e] + static_cast<std::size_t>(k) * nvar_;
    }

    bool same_layout(const Field& o) const { return nvar_ == o.nvar_ && degree_ == o.degree_; }
    Field zeros_like() const { return Field(nvar_, degree_); }

    /// Set every point of every element to the given state.
    void fill_state(ConstSpan state) {
        for (std::size_t k = 0; k < data_.size(); k += nvar_)
            for (int v = 0; v < nvar_; ++v) data_[k + v] = state[v];
    }

private:
    int nvar_ = 1;
    std::vector<int> degree_;
    std::vector<std::size_t> offset_{0};
    Vec data_;
};

}  // namespace pmgflow
