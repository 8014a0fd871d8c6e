#pragma once
// Per-stage solver counters and the residual history log.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <vector>

namespace pmgflow {

struct StageRecord {
    int step = 0;
    int stage = 0;
    int ptc_iters = 0;
    int gmres_iters = 0;
    int vcycles = 0;
    int fallbacks = 0;  ///< preconditioner applications that fell back to EJ
    double wall_time = 0.0;
    double final_residual = 0.0;
    bool converged = true;
};

struct ResidualRecord {
    int step = 0;
    int stage = 0;
    int iter = 0;
    double abs = 0.0;
    double rel = 0.0;
    double dtau = 0.0;
};

struct SolverStats {
    std::vector<StageRecord> stages;
    std::vector<ResidualRecord> history;
    int kdim = 0;
    double total_time = 0.0;

    std::size_t implicit_stages() const { return stages.size(); }

    double avg_ptc() const {
        if (stages.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : stages) s += r.ptc_iters;
        return s / static_cast<double>(stages.size());
    }

    double avg_gmres() const {
        if (stages.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : stages) s += r.gmres_iters;
        return s / static_cast<double>(stages.size());
    }

    int max_gmres() const {
        int m = 0;
        for (const auto& r : stages) m = std::max(m, r.gmres_iters);
        return m;
    }

    bool all_converged() const {
        for (const auto& r : stages)
            if (!r.converged) return false;
        return true;
    }

    int total_fallbacks() const {
        int n = 0;
        for (const auto& r : stages) n += r.fallbacks;
        return n;
    }

    void append(const SolverStats& o) {
        stages.insert(stages.end(), o.stages.begin(), o.stages.end());
        history.insert(history.end(), o.history.begin(), o.history.end());
        total_time += o.total_time;
    }
};

class Stopwatch {
public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace pmgflow
