#pragma once
// Case orchestration: config -> mesh, equation and solver objects; steady and unsteady runs with
// residual/stats/force CSVs and a summary line; order-of-accuracy studies; preconditioner benches.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pmgflow/config.hpp"
#include "pmgflow/forces.hpp"
#include "pmgflow/p_adapt.hpp"
#include "pmgflow/pmg.hpp"
#include "pmgflow/time_integration.hpp"

namespace pmgflow {

struct MeshSpec {
    std::string kind = "box";
    std::string file;
    int nx = 4, ny = 4;
    double lx = 1.0, ly = 1.0, x0 = 0.0, y0 = 0.0;
    bool periodic = true;
    int n_circ = 40, n_rad = 20;
    double r_wall = 0.5, r_far = 15.0, first_layer = 0.02;
};

struct VortexSpec {
    double strength = 5.0, xc = 5.0, yc = 5.0, u = 1.0, v = 1.0;
};

struct CaseConfig {
    std::string name = "case";
    bool steady = false;
    int seed = 0;
    MeshSpec mesh;
    EquationSpec equation;
    std::string init = "freestream";
    std::string restart_in;
    double init_value = 0.0;
    VortexSpec vortex;
    int p = 3;
    std::string scheme = "esdirk2";
    double dt = 0.05;
    int steps = 1;
    double t_end = 0.0;
    bool pmg_solver = false;
    std::string preconditioner = "ej";
    bool tolerate_ptc_failure = false;
    PtcConfig ptc;
    KrylovConfig gmres;
    PmgConfig pmg;
    AdaptConfig adapt;
    std::string out_dir = "out";
    std::string restart_out;
    bool forces = true;

    int num_steps() const { return t_end > 0.0 ? static_cast<int>(std::ceil(t_end / dt - 1e-9)) : steps; }

    /// Method label: JFNK-EJ, JFNK-pMG, JFNK, pMG.
    std::string method() const {
        if (pmg_solver) return "pMG";
        if (preconditioner == "ej") return "JFNK-EJ";
        if (preconditioner == "pmg") return "JFNK-pMG";
        return "JFNK";
    }
    std::string hierarchy() const { return pmg_solver || preconditioner == "pmg" ? format_hierarchy(pmg.levels) : "-"; }

    static CaseConfig from(const Config& c) {
        CaseConfig k;
        k.name = c.str("case.name");
        const std::string mode = c.str("case.mode");
        if (mode != "steady" && mode != "unsteady") throw ConfigError("case.mode: expected steady or unsteady, got '" + mode + "'");
        k.steady = mode == "steady";
        k.seed = c.integer("case.seed");

        auto& m = k.mesh;
        m.kind = c.str("mesh.kind");
        if (m.kind != "box" && m.kind != "cylinder" && m.kind != "file")
            throw ConfigError("mesh.kind: expected box, cylinder or file, got '" + m.kind + "'");
        m.file = c.str("mesh.file");
        if (m.kind == "file" && m.file.empty()) throw ConfigError("mesh.file: required for mesh.kind = file");
        m.nx = c.integer("mesh.nx");
        m.ny = c.integer("mesh.ny");
        if (m.nx < 1 || m.ny < 1) throw ConfigError("mesh.nx, mesh.ny: must be >= 1");
        m.lx = c.real("mesh.lx");
        m.ly = c.real("mesh.ly");
        if (!(m.lx > 0.0 && m.ly > 0.0)) throw ConfigError("mesh.lx, mesh.ly: must be > 0");
        m.x0 = c.real("mesh.x0");
        m.y0 = c.real("mesh.y0");
        m.periodic = c.boolean("mesh.periodic");
        m.n_circ = c.integer("mesh.n_circ");
        m.n_rad = c.integer("mesh.n_rad");
        m.r_wall = c.real("mesh.r_wall");
        m.r_far = c.real("mesh.r_far");
        m.first_layer = c.real("mesh.first_layer");
        if (m.first_layer < 0.0) throw ConfigError("mesh.first_layer: must be >= 0");

        auto& e = k.equation;
        try {
            e.kind = parse_equation_kind(c.str("equation.kind"));
        } catch (const ConfigError& err) {
            throw ConfigError(std::string("equation.kind: ") + err.what());
        }
        e.mach = c.real("equation.mach");
        e.reynolds = c.real("equation.reynolds");
        e.gamma = c.real("equation.gamma");
        e.prandtl = c.real("equation.prandtl");
        e.ref_length = c.real("equation.ref_length");
        e.adv_x = c.real("equation.adv_x");
        e.adv_y = c.real("equation.adv_y");
        e.diffusivity = c.real("equation.diffusivity");
        e.source = c.real("equation.source");
        e.bc_value = c.real("equation.bc_value");
        if (!(e.mach > 0.0)) throw ConfigError("equation.mach: must be > 0");
        if (!(e.reynolds > 0.0)) throw ConfigError("equation.reynolds: must be > 0");
        if (!(e.gamma > 1.0)) throw ConfigError("equation.gamma: must be > 1");
        if (e.diffusivity < 0.0) throw ConfigError("equation.diffusivity: must be >= 0");

        k.init = c.str("init.kind");
        if (k.init != "freestream" && k.init != "vortex" && k.init != "sine" && k.init != "uniform" && k.init != "restart")
            throw ConfigError("init.kind: expected freestream, vortex, sine, uniform or restart, got '" + k.init + "'");
        k.restart_in = c.str("init.restart");
        if (k.init == "restart" && k.restart_in.empty()) throw ConfigError("init.restart: required for init.kind = restart");
        const bool gas = e.kind != EquationKind::AdvectionDiffusion;
        if (k.init == "vortex" && !gas) throw ConfigError("init.kind: vortex needs a gas-dynamics equation");
        if ((k.init == "sine" || k.init == "uniform") && gas) throw ConfigError("init.kind: " + k.init + " needs the scalar equation");
        k.init_value = c.real("init.value");
        k.vortex = {c.real("init.vortex_strength"), c.real("init.vortex_x"), c.real("init.vortex_y"), c.real("init.vortex_u"),
                    c.real("init.vortex_v")};

        k.p = c.integer("discretization.p");
        if (k.p < 0 || k.p > kMaxDegree) throw ConfigError("discretization.p: must be in [0, " + std::to_string(kMaxDegree) + "]");

        k.scheme = c.str("time.scheme");
        scheme_by_name(k.scheme);
        k.dt = c.real("time.dt");
        k.steps = c.integer("time.steps");
        k.t_end = c.real("time.end");
        if (!k.steady) {
            if (!(k.dt > 0.0)) throw ConfigError("time.dt: must be > 0");
            if (k.t_end <= 0.0 && k.steps < 1) throw ConfigError("time.steps: must be >= 1");
        }

        const std::string solver = c.str("solver.kind");
        if (solver != "jfnk" && solver != "pmg-solver")
            throw ConfigError("solver.kind: expected jfnk or pmg-solver, got '" + solver + "'");
        k.pmg_solver = solver == "pmg-solver";
        k.preconditioner = c.str("solver.preconditioner");
        if (k.preconditioner != "ej" && k.preconditioner != "pmg" && k.preconditioner != "none")
            throw ConfigError("solver.preconditioner: expected ej, pmg or none, got '" + k.preconditioner + "'");
        if (k.pmg_solver && !k.steady && scheme_by_name(k.scheme).kind != SchemeKind::Esdirk)
            throw ConfigError("solver.kind: pmg-solver needs an ESDIRK scheme or case.mode = steady");
        k.tolerate_ptc_failure = c.boolean("solver.tolerate_ptc_failure");

        auto& t = k.ptc;
        t.rtol = c.real("ptc.rtol");
        t.atol = c.real("ptc.atol");
        t.max_iters = c.integer("ptc.max_iters");
        t.dtau_init = c.real("ptc.dtau_init");
        t.dtau_ratio = c.real("ptc.dtau_ratio");
        t.dtau_max = c.real("ptc.dtau_max");
        t.ser = c.boolean("ptc.ser");
        t.ser_as_printed = c.boolean("ptc.ser_as_printed");
        t.refresh_every = c.integer("ptc.refresh_every");
        t.fd_eps = c.real("ptc.fd_eps");
        t.steady = k.steady;
        t.validate();
        if (!(t.fd_eps > 0.0)) throw ConfigError("ptc.fd_eps: must be > 0");

        k.gmres.kdim = c.integer("gmres.kdim");
        k.gmres.max_restarts = c.integer("gmres.max_restarts");
        k.gmres.rtol = c.real("gmres.rtol");
        k.gmres.validate();

        auto& g = k.pmg;
        g.levels = parse_dash_ints(c.str("pmg.levels"), "pmg.levels");
        g.smooth = parse_dash_ints(c.str("pmg.smooth"), "pmg.smooth");
        g.smoother = parse_smoothers(c.str("pmg.smoother"), "pmg.smoother");
        g.switch_after = c.integer("pmg.switch_after");
        g.switch_to = parse_smoothers(c.str("pmg.switch_to"), "pmg.switch_to");
        g.mbnk_rtol = c.real("pmg.mbnk_rtol");
        g.mbnk_maxiter = c.integer("pmg.mbnk_maxiter");
        g.omega = c.real("pmg.omega");
        g.m_max = c.integer("pmg.m_max");
        g.pseudo_shift = c.boolean("pmg.pseudo_shift");
        g.precond_scale = c.real("pmg.precond_scale");
        g.fd_eps = t.fd_eps;
        g.validate();

        auto& a = k.adapt;
        a.enable = c.boolean("adapt.enable");
        a.variable = c.integer("adapt.variable");
        a.nu_max = c.real("adapt.nu_max");
        a.nu_min = c.real("adapt.nu_min");
        a.p_min = c.integer("adapt.p_min");
        a.p_max = c.integer("adapt.p_max");
        a.every_n_steps = c.integer("adapt.every_n_steps");
        if (a.enable) {
            a.validate();
            if (a.variable >= e.nvar()) throw ConfigError("adapt.variable: out of range for this equation");
        }

        const bool uses_pmg = k.pmg_solver || k.preconditioner == "pmg";
        if (uses_pmg) {
            const int top = a.enable ? std::max(a.p_max, k.p) : k.p;
            if (g.levels.front() < top)
                throw ConfigError("pmg.levels: finest level " + std::to_string(g.levels.front()) + " is below the top degree " +
                                  std::to_string(top));
        }

        k.out_dir = c.str("output.dir");
        k.restart_out = c.str("output.restart");
        k.forces = c.boolean("output.forces");
        return k;
    }
};

inline CaseConfig load_case(const std::string& path) { return CaseConfig::from(Config::load(path)); }

// ---------------------------------------------------------------- set-up

inline Mesh build_mesh(const MeshSpec& m) {
    if (m.kind == "box") return generate_box(m.nx, m.ny, m.lx, m.ly, m.periodic, m.x0, m.y0);
    if (m.kind == "cylinder") {
        const double stretch = m.first_layer > 0.0 ? stretch_for_first_layer(m.r_wall, m.r_far, m.n_rad, m.first_layer) : 1.0;
        return generate_cylinder_omesh(m.n_circ, m.n_rad, m.r_wall, m.r_far, stretch);
    }
    return load_mesh(m.file);
}

/// Isentropic vortex convected with (u, v) on a periodic box; pressure and density scale with the free stream.
inline void isentropic_vortex(const VortexSpec& v, const EquationSpec& s, const MeshSpec& m, double x, double y, double t,
                              double* q) {
    auto wrap = [](double d, double L) { return d - L * std::round(d / L); };
    const double dx = wrap(x - v.xc - v.u * t, m.lx), dy = wrap(y - v.yc - v.v * t, m.ly);
    const double r2 = dx * dx + dy * dy, g = s.gamma;
    const double f = std::exp(0.5 * (1.0 - r2));
    const double dT = -(g - 1.0) * v.strength * v.strength / (8.0 * g * std::numbers::pi * std::numbers::pi) * f * f;
    const double rho = std::pow(1.0 + dT, 1.0 / (g - 1.0));
    const double p = rho * (1.0 + dT);
    const double u = v.u - v.strength / (2.0 * std::numbers::pi) * dy * f;
    const double w = v.v + v.strength / (2.0 * std::numbers::pi) * dx * f;
    q[0] = rho;
    q[1] = rho * u;
    q[2] = rho * w;
    q[3] = p / (g - 1.0) + 0.5 * rho * (u * u + w * w);
}

/// sin(kx (x - a_x t)) sin(ky (y - a_y t)) exp(-nu (kx^2 + ky^2) t), one period per box side.
inline double advected_sine(const EquationSpec& s, const MeshSpec& m, double x, double y, double t) {
    const double kx = 2.0 * std::numbers::pi / m.lx, ky = 2.0 * std::numbers::pi / m.ly;
    return std::sin(kx * (x - m.x0 - s.adv_x * t)) * std::sin(ky * (y - m.y0 - s.adv_y * t)) *
           std::exp(-s.diffusivity * (kx * kx + ky * ky) * t);
}

inline bool has_exact_solution(const CaseConfig& c) {
    return (c.init == "vortex" || c.init == "sine") && c.mesh.kind == "box" && c.mesh.periodic && c.equation.source == 0.0 &&
           (c.init == "sine" || c.equation.kind == EquationKind::Euler);
}

inline Field exact_field(const CaseConfig& c, const Discretization& d, const std::vector<int>& degrees, double t) {
    if (c.init == "vortex")
        return d.sample(degrees, [&](double x, double y, double* q) { isentropic_vortex(c.vortex, c.equation, c.mesh, x, y, t, q); });
    return d.sample(degrees, [&](double x, double y, double* q) { q[0] = advected_sine(c.equation, c.mesh, x, y, t); });
}

// ---------------------------------------------------------------- restart files

struct RestartData {
    Field q;
    double time = 0.0;
    int step = 0;
};

inline void write_restart(const std::string& path, const Field& q, double time, int step) {
    std::ofstream out(path);
    if (!out) throw SolverError("cannot write restart file '" + path + "'");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", time);
    out << "pmgflow-restart 1\n";
    out << "nvar " << q.nvar() << " elements " << q.num_elements() << " time " << buf << " step " << step << "\n";
    out << "degrees";
    for (int p : q.degrees()) out << ' ' << p;
    out << "\n";
    for (double v : q.data()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << '\n';
    }
}

inline RestartData read_restart(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("init.restart: cannot open '" + path + "'");
    std::string magic, tag;
    int version = 0, nvar = 0;
    std::size_t ne = 0;
    RestartData r;
    in >> magic >> version;
    if (magic != "pmgflow-restart" || version != 1) throw ConfigError("init.restart: '" + path + "' is not a restart file");
    in >> tag >> nvar >> tag >> ne >> tag >> r.time >> tag >> r.step >> tag;
    if (!in || tag != "degrees") throw ConfigError("init.restart: malformed header in '" + path + "'");
    std::vector<int> deg(ne);
    for (auto& p : deg) in >> p;
    r.q = Field(nvar, deg);
    for (auto& v : r.q.data()) in >> v;
    if (!in) throw ConfigError("init.restart: truncated data in '" + path + "'");
    return r;
}

inline RestartData initial_state(const CaseConfig& c, const Discretization& d) {
    const std::vector<int> deg(d.num_elements(), c.p);
    RestartData r;
    if (c.init == "restart") {
        r = read_restart(c.restart_in);
        if (r.q.nvar() != d.nvar() || r.q.num_elements() != d.num_elements())
            throw ConfigError("init.restart: file does not match the mesh and equation");
        for (int p : r.q.degrees())
            if (p > kMaxDegree) throw ConfigError("init.restart: degree out of range");
        return r;
    }
    if (c.init == "vortex" || c.init == "sine")
        r.q = exact_field(c, d, deg, 0.0);
    else if (c.init == "uniform")
        r.q = d.sample(deg, [&](double, double, double* q) { q[0] = c.init_value; });
    else
        r.q = d.free_stream(deg);
    return r;
}

// ---------------------------------------------------------------- CSV output

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_residual_csv(std::ostream& out, const SolverStats& s) {
    out << "# pmgflow residuals v1\nstep,stage,iter,abs,rel,dtau\n";
    for (const auto& h : s.history)
        out << h.step << ',' << h.stage << ',' << h.iter << ',' << fmt(h.abs) << ',' << fmt(h.rel) << ',' << fmt(h.dtau) << '\n';
}

inline void write_stats_csv(std::ostream& out, const SolverStats& s) {
    out << "# pmgflow stats v1\nstep,stage,ptc_iters,gmres_iters,vcycles,fallbacks,wall_time,final_residual,converged\n";
    for (const auto& r : s.stages)
        out << r.step << ',' << r.stage << ',' << r.ptc_iters << ',' << r.gmres_iters << ',' << r.vcycles << ',' << r.fallbacks
            << ',' << fmt(r.wall_time) << ',' << fmt(r.final_residual) << ',' << (r.converged ? 1 : 0) << '\n';
}

struct ForceRecord {
    double t = 0.0, cd = 0.0, cl = 0.0;
};

inline void write_force_csv(std::ostream& out, const std::vector<ForceRecord>& f) {
    out << "# pmgflow forces v1\nt,cd,cl\n";
    for (const auto& r : f) out << fmt(r.t) << ',' << fmt(r.cd) << ',' << fmt(r.cl) << '\n';
}

// ---------------------------------------------------------------- runs

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitSolver = 3 };

struct RunResult {
    int exit_code = kExitOk;
    std::string message;
    SolverStats stats;
    Field q;
    double time = 0.0;
    int steps_done = 0;
    bool converged = true;
    double final_residual = 0.0;
    std::optional<double> l2_error;  ///< variable 0 against the exact solution, when one exists
    std::vector<ForceRecord> forces;
    std::vector<int> adapt_events;   ///< steps after which the degree map changed
    std::string summary;
};

/// One key=value line per run: method, hierarchy, dt, runtime and iteration averages.
inline std::string summary_line(const CaseConfig& c, const RunResult& r) {
    std::ostringstream s;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "case=%s method=%s hierarchy=%s scheme=%s dt=%s steps=%d runtime=%.3f nptc_avg=%.2f ngmres_avg=%.2f kdim=%d "
                  "converged=%s final_residual=%.6e",
                  c.name.c_str(), c.method().c_str(), c.hierarchy().c_str(), c.steady ? "steady" : c.scheme.c_str(),
                  c.steady ? "-" : fmt(c.dt).c_str(),
                  r.steps_done, r.stats.total_time, r.stats.avg_ptc(), r.stats.avg_gmres(), c.pmg_solver ? 0 : c.gmres.kdim,
                  r.converged ? "true" : "false", r.final_residual);
    s << buf;
    if (r.l2_error) s << " l2_error=" << fmt(*r.l2_error);
    if (!r.forces.empty()) s << " cd=" << fmt(r.forces.back().cd) << " cl=" << fmt(r.forces.back().cl);
    if (r.exit_code != kExitOk) s << " status=aborted";
    return s.str();
}

inline std::unique_ptr<Preconditioner> make_preconditioner(const CaseConfig& c) {
    if (c.preconditioner == "ej") return std::make_unique<ElementJacobiPreconditioner>(c.ptc.fd_eps);
    if (c.preconditioner == "pmg") return std::make_unique<PmgPreconditioner>(c.pmg);
    return std::make_unique<IdentityPreconditioner>();
}

/// Runs a validated case. Artifacts go to out_dir (none when empty); a solver abort flushes what exists.
inline RunResult run_case(const CaseConfig& c, const std::string& out_dir) {
    RunResult r;
    const Discretization d(build_mesh(c.mesh), c.equation);
    RestartData init = initial_state(c, d);
    Field q = std::move(init.q);
    r.time = init.time;
    const bool walls = c.forces && d.mesh().has_wall() && d.nvar() == 4;
    auto record_forces = [&](double t) {
        if (!walls) return;
        const Forces f = compute_forces(d, q);
        r.forces.push_back({t, f.cd, f.cl});
    };

    std::unique_ptr<Preconditioner> pc = c.pmg_solver ? nullptr : make_preconditioner(c);
    std::unique_ptr<PMultigrid> mg = c.pmg_solver ? std::make_unique<PMultigrid>(c.pmg) : nullptr;
    const SemiDiscrete sys(d);

    try {
        if (c.steady) {
            StageOperator op;
            op.sys = sys;
            StageRecord rec;
            const Stopwatch sw;
            const int v0 = pc ? pc->vcycles : 0;
            const ResidualCallback log = [&](int k, double a, double rel, double dtau) {
                r.stats.history.push_back({0, 0, k, a, rel, dtau});
            };
            PtcResult res;
            if (mg) {
                res = pmg_solve(op, q, c.ptc, *mg, log);
            } else {
                pc->refresh(d, q);
                res = ptc_solve(op, q, c.ptc, c.gmres, pc.get(), log);
            }
            rec.ptc_iters = res.iterations;
            rec.gmres_iters = res.gmres_iterations;
            rec.vcycles = res.vcycles + (pc ? pc->vcycles - v0 : 0);
            rec.fallbacks = pc ? pc->fallbacks : 0;
            rec.final_residual = res.final_norm;
            rec.converged = res.converged;
            rec.wall_time = sw.seconds();
            r.stats.stages.push_back(rec);
            r.stats.total_time = rec.wall_time;
            r.converged = res.converged;
            r.final_residual = res.final_norm;
            record_forces(0.0);
            if (!res.converged) {
                r.exit_code = kExitSolver;
                r.message = "steady solve did not converge in " + std::to_string(res.iterations) + " iterations";
            }
        } else {
            const Tableau t = scheme_by_name(c.scheme);
            StepSettings set;
            set.ptc = c.ptc;
            set.krylov = c.gmres;
            set.tolerate_ptc_failure = c.tolerate_ptc_failure;
            int mg_step = -1;
            if (mg)
                set.stage_solver = [&](const StageOperator& op, Field& qi, const PtcConfig& pcfg, const ResidualCallback& log) {
                    if (mg_step != set.step_index || !mg->ready_for(qi)) {
                        mg->setup(d, qi);
                        mg_step = set.step_index;
                    }
                    return pmg_solve(op, qi, pcfg, *mg, log);
                };
            record_forces(r.time);
            const int n = c.num_steps();
            for (int k = 0; k < n; ++k) {
                set.step_index = init.step + k;
                const double h = c.t_end > 0.0 ? std::min(c.dt, c.t_end - (r.time - init.time)) : c.dt;
                time_step(sys, q, h, t, set, pc.get(), r.stats);
                r.time += h;
                ++r.steps_done;
                record_forces(r.time);
                if (c.adapt.enable && (k + 1) % c.adapt.every_n_steps == 0) {
                    AdaptResult a = adapt(q, c.adapt);
                    if (a.changed()) {
                        q = std::move(a.field);
                        r.adapt_events.push_back(set.step_index);
                    }
                }
            }
            r.converged = r.stats.all_converged();
            r.final_residual = r.stats.stages.empty() ? 0.0 : r.stats.stages.back().final_residual;
        }
    } catch (const ConvergenceFailure& e) {
        r.exit_code = kExitSolver;
        r.converged = false;
        r.message = e.what();
    } catch (const SolverError& e) {
        r.exit_code = kExitSolver;
        r.converged = false;
        r.message = e.what();
    } catch (const NonPhysicalState& e) {
        r.exit_code = kExitSolver;
        r.converged = false;
        r.message = e.what();
    }

    if (r.exit_code == kExitOk && has_exact_solution(c)) {
        const Field ex = exact_field(c, d, q.degrees(), r.time);
        double s = 0.0;
        const Vec w = d.point_weights(q.degrees());
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double e = q.data()[k * q.nvar()] - ex.data()[k * q.nvar()];
            s += w[k] * e * e;
        }
        r.l2_error = std::sqrt(s);
    }
    r.q = std::move(q);
    r.summary = summary_line(c, r);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream res(out_dir + "/residuals.csv"), st(out_dir + "/stats.csv"), sum(out_dir + "/summary.txt");
        write_residual_csv(res, r.stats);
        write_stats_csv(st, r.stats);
        sum << r.summary << '\n';
        if (!r.message.empty()) sum << "error: " << r.message << '\n';
        if (walls) {
            std::ofstream f(out_dir + "/forces.csv");
            write_force_csv(f, r.forces);
        }
    }
    if (!c.restart_out.empty() && r.exit_code == kExitOk) write_restart(c.restart_out, r.q, r.time, init.step + r.steps_done);
    return r;
}

// ---------------------------------------------------------------- order-of-accuracy study

struct OoaRow {
    int level = 0;
    int nx = 0;
    double h = 0.0;
    double dt = 0.0;
    double error = 0.0;
    std::optional<double> order;
};

enum class OoaKind { Space, Time };

/// Space: mesh and dt halved together, error against the exact solution.
/// Time: dt halved on a fixed mesh, error against a run with a quarter of the finest dt.
inline std::vector<OoaRow> ooa_study(const CaseConfig& base, int levels, OoaKind kind = OoaKind::Space) {
    if (levels < 2) throw ConfigError("ooa: need at least 2 refinement levels");
    if (base.steady) throw ConfigError("case.mode: ooa studies need an unsteady case");
    if (base.t_end <= 0.0) throw ConfigError("time.end: ooa studies need a fixed end time");
    if (kind == OoaKind::Space && !has_exact_solution(base))
        throw ConfigError("init.kind: spatial ooa needs an exact solution (vortex or sine on a periodic box)");
    std::vector<OoaRow> rows;
    std::optional<Field> ref;
    if (kind == OoaKind::Time) {
        CaseConfig c = base;
        c.dt = base.dt / std::pow(2.0, levels + 1);
        c.restart_out.clear();
        RunResult r = run_case(c, "");
        if (r.exit_code != kExitOk) throw SolverError("ooa reference run failed: " + r.message);
        ref = std::move(r.q);
    }
    for (int l = 0; l < levels; ++l) {
        CaseConfig c = base;
        c.restart_out.clear();
        const double f = std::pow(2.0, l);
        if (kind == OoaKind::Space) {
            c.mesh.nx = base.mesh.nx * static_cast<int>(f);
            c.mesh.ny = base.mesh.ny * static_cast<int>(f);
        }
        c.dt = base.dt / f;
        RunResult r = run_case(c, "");
        if (r.exit_code != kExitOk) throw SolverError("ooa level " + std::to_string(l) + " failed: " + r.message);
        OoaRow row;
        row.level = l;
        row.nx = c.mesh.nx;
        row.h = c.mesh.lx / c.mesh.nx;
        row.dt = c.dt;
        if (kind == OoaKind::Space) {
            row.error = *r.l2_error;
        } else {
            Vec diff(r.q.size());
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = r.q.data()[i] - ref->data()[i];
            row.error = vec::norm_inf(diff);
        }
        if (!rows.empty()) row.order = std::log2(rows.back().error / row.error);
        rows.push_back(row);
    }
    return rows;
}

inline void write_ooa_csv(std::ostream& out, const std::vector<OoaRow>& rows) {
    out << "# pmgflow ooa v1\nlevel,nx,h,dt,error,order\n";
    for (const auto& r : rows)
        out << r.level << ',' << r.nx << ',' << fmt(r.h) << ',' << fmt(r.dt) << ',' << fmt(r.error) << ','
            << (r.order ? fmt(*r.order) : "") << '\n';
}

// ---------------------------------------------------------------- preconditioner bench

struct Variant {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
};

/// `[name]` headers followed by `key = value` overrides of the base config.
inline std::vector<Variant> parse_variants(std::istream& in, const std::string& source = "variants") {
    std::vector<Variant> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        line = line.substr(a, line.find_last_not_of(" \t\r") - a + 1);
        const std::string where = source + ":" + std::to_string(n);
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed variant header");
            out.push_back({line.substr(1, line.size() - 2), {}});
            continue;
        }
        if (out.empty()) throw ConfigError(where + ": override before the first [variant] header");
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, s.find_last_not_of(" \t") - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (!find_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
        out.back().overrides.emplace_back(key, trim(line.substr(eq + 1)));
    }
    if (out.empty()) throw ConfigError(source + ": no variants");
    return out;
}

inline std::vector<Variant> load_variants(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open variants file '" + path + "'");
    return parse_variants(in, path);
}

struct BenchRow {
    std::string variant, method, hierarchy;
    double dt = 0.0;
    double runtime = 0.0;
    double nptc = 0.0, ngmres = 0.0;
    int kdim = 0;
    bool dnf = false;
    std::optional<double> speedup;
    int max_gmres = 0;
    std::string message;
};

/// Validates every variant first, then runs them in order. Aborted variants become DNF rows.
inline std::vector<BenchRow> precond_bench(const Config& base, const std::vector<Variant>& variants, const std::string& out_dir = "") {
    std::vector<CaseConfig> cases;
    for (const auto& v : variants) {
        Config c = base;
        for (const auto& [k, val] : v.overrides) c.set(k, val, "variant " + v.name);
        CaseConfig cc = CaseConfig::from(c);
        cc.restart_out.clear();
        cases.push_back(std::move(cc));
    }
    std::vector<BenchRow> rows;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const CaseConfig& c = cases[i];
        const RunResult r = run_case(c, out_dir.empty() ? "" : out_dir + "/" + variants[i].name);
        BenchRow row;
        row.variant = variants[i].name;
        row.method = c.method();
        row.hierarchy = c.hierarchy();
        row.dt = c.dt;
        row.runtime = r.stats.total_time;
        row.nptc = r.stats.avg_ptc();
        row.ngmres = r.stats.avg_gmres();
        row.max_gmres = r.stats.max_gmres();
        row.kdim = c.pmg_solver ? 0 : c.gmres.kdim;
        row.dnf = r.exit_code != kExitOk || !r.converged;
        row.message = r.message;
        rows.push_back(row);
    }
    if (!rows.empty() && !rows.front().dnf)
        for (auto& row : rows)
            if (!row.dnf && row.runtime > 0.0) row.speedup = rows.front().runtime / row.runtime;
    return rows;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "# pmgflow bench v1\nvariant,method,hierarchy,dt,runtime,nptc_avg,ngmres_avg,kdim,speedup,status\n";
    for (const auto& r : rows)
        out << r.variant << ',' << r.method << ',' << r.hierarchy << ',' << fmt(r.dt) << ',' << fmt(r.runtime) << ','
            << fmt(r.nptc) << ',' << fmt(r.ngmres) << ',' << r.kdim << ',' << (r.speedup ? fmt(*r.speedup) : "") << ','
            << (r.dnf ? "DNF" : "ok") << '\n';
}

inline std::string format_bench_table(const std::vector<BenchRow>& rows) {
    std::string s;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %-9s %-10s %8s %10s %9s %11s %5s %8s\n", "Variant", "Method", "p-hier", "dt", "Runtime",
                  "N_ptc^avg", "N_gmres^avg", "K_dim", "Speedup");
    s += buf;
    for (const auto& r : rows) {
        if (r.dnf) {
            std::snprintf(buf, sizeof buf, "%-16s %-9s %-10s %8g %10s %9s %11s %5d %8s\n", r.variant.c_str(), r.method.c_str(),
                          r.hierarchy.c_str(), r.dt, "DNF", "-", "-", r.kdim, "-");
        } else {
            std::snprintf(buf, sizeof buf, "%-16s %-9s %-10s %8g %10.2f %9.2f %11.1f %5d %8s\n", r.variant.c_str(),
                          r.method.c_str(), r.hierarchy.c_str(), r.dt, r.runtime, r.nptc, r.ngmres, r.kdim,
                          r.speedup ? fmt(std::round(*r.speedup * 100.0) / 100.0).c_str() : "-");
        }
        s += buf;
    }
    return s;
}

}  // namespace pmgflow
