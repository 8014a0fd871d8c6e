#pragma once
// Spectral-decay smoothness indicator, per-element degree adaptation and nested pMG hierarchies.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pmgflow/residual.hpp"

namespace pmgflow {

struct AdaptConfig {
    bool enable = false;
    int variable = 1;  ///< conserved variable index; 1 is x-momentum
    double nu_max = 0.2;
    double nu_min = 0.001;
    int p_min = 1;
    int p_max = 4;
    int every_n_steps = 10;

    void validate() const {
        if (!(nu_min > 0.0 && nu_min < nu_max && nu_max < 1.0))
            throw ConfigError("adapt: need 0 < adapt.nu_min < adapt.nu_max < 1");
        if (p_min < 0 || p_min > p_max) throw ConfigError("adapt: need 0 <= adapt.p_min <= adapt.p_max");
        if (p_max > kMaxDegree) throw ConfigError("adapt.p_max exceeds the supported degree");
        if (every_n_steps < 1) throw ConfigError("adapt.every_n_steps must be >= 1");
        if (variable < 0) throw ConfigError("adapt.variable must be >= 0");
    }
};

/// eta = ||s_p - s_{p-1}|| / ||s_p|| with s_{p-1} dropping every mode whose larger index equals p.
inline double smoothness_indicator(const Field& f, std::size_t e, int var) {
    const int p = f.degree(e);
    if (p < 1) return 0.0;
    if (var < 0 || var >= f.nvar()) throw std::invalid_argument("smoothness_indicator: variable out of range");
    const int n = p + 1, nv = f.nvar();
    Vec nodal(static_cast<std::size_t>(n * n));
    const double* u = f.data().data() + f.offset(e);
    for (int k = 0; k < n * n; ++k) nodal[k] = u[k * nv + var];
    const Vec c = modal_coefficients(nodal, p);
    double top = 0.0, all = 0.0;
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a) {
            const double v = c[b * n + a] * c[b * n + a];
            all += v;
            if (std::max(a, b) == p) top += v;
        }
    if (all == 0.0) return 0.0;
    return std::min(1.0, std::sqrt(top / all));
}

inline std::vector<double> smoothness_indicators(const Field& f, int var) {
    std::vector<double> eta(f.num_elements());
    for (std::size_t e = 0; e < eta.size(); ++e) eta[e] = smoothness_indicator(f, e, var);
    return eta;
}

/// New degrees from indicators: +1 above nu_max * eta_max, -1 below nu_min * eta_max, clamped.
inline std::vector<int> adapt_degrees(const std::vector<int>& degrees, const std::vector<double>& eta,
                                      const AdaptConfig& cfg) {
    const double emax = eta.empty() ? 0.0 : *std::max_element(eta.begin(), eta.end());
    std::vector<int> out = degrees;
    for (std::size_t e = 0; e < out.size(); ++e) {
        if (eta[e] > cfg.nu_max * emax)
            out[e] = std::min(degrees[e] + 1, cfg.p_max);
        else if (eta[e] < cfg.nu_min * emax)
            out[e] = std::max(degrees[e] - 1, cfg.p_min);
    }
    return out;
}

struct AdaptResult {
    std::vector<int> degrees;
    std::vector<double> eta;
    Field field;
    int raised = 0;
    int lowered = 0;
    bool changed() const { return raised + lowered > 0; }
};

/// One adaptation event: indicators on the current field, then L2 transfer to the new degrees.
inline AdaptResult adapt(const Field& f, const AdaptConfig& cfg) {
    cfg.validate();
    AdaptResult r;
    r.eta = smoothness_indicators(f, cfg.variable);
    r.degrees = adapt_degrees(f.degrees(), r.eta, cfg);
    for (std::size_t e = 0; e < r.degrees.size(); ++e) {
        if (r.degrees[e] > f.degree(e)) ++r.raised;
        if (r.degrees[e] < f.degree(e)) ++r.lowered;
    }
    r.field = transfer_field(f, r.degrees);
    return r;
}

/// Degrees of one element on every level of a hierarchy defined for p_max elements.
inline std::vector<int> nest_hierarchy(int p_e, int p_max, const std::vector<int>& levels_of_pmax) {
    if (levels_of_pmax.empty()) throw std::invalid_argument("nest_hierarchy: empty hierarchy");
    if (levels_of_pmax.front() != p_max) throw std::invalid_argument("nest_hierarchy: finest level must equal p_max");
    if (p_e < 0 || p_e > p_max) throw std::invalid_argument("nest_hierarchy: element degree outside [0, p_max]");
    const int L = static_cast<int>(levels_of_pmax.size());
    std::vector<int> d(L);
    d[0] = p_e;
    for (int l = 1; l < L; ++l) {
        const int offset = p_max - levels_of_pmax[l];
        d[l] = std::max(0, std::min(d[l - 1] - 1, std::max(p_e - offset, L - 1 - l)));
    }
    return d;
}

/// Per-level degree maps for a (possibly adapted) field; level 0 is the field's own map.
inline std::vector<std::vector<int>> level_degree_maps(const std::vector<int>& levels_of_pmax,
                                                       const std::vector<int>& element_degrees) {
    const int pmax = levels_of_pmax.front();
    std::vector<std::vector<int>> maps(levels_of_pmax.size(), std::vector<int>(element_degrees.size()));
    for (std::size_t e = 0; e < element_degrees.size(); ++e) {
        if (element_degrees[e] > pmax)
            throw ConfigError("pmg.levels: element degree " + std::to_string(element_degrees[e]) +
                              " exceeds the finest hierarchy level " + std::to_string(pmax));
        const auto h = nest_hierarchy(element_degrees[e], pmax, levels_of_pmax);
        for (std::size_t l = 0; l < h.size(); ++l) maps[l][e] = h[l];
    }
    return maps;
}

inline std::string format_hierarchy(const std::vector<int>& d) {
    std::string s = "p{";
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "-" : "") + std::to_string(d[i]);
    return s + "}";
}

}  // namespace pmgflow
