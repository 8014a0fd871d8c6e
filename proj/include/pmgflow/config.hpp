#pragma once
// Line-oriented `section.key = value` case files with a fixed schema.

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pmgflow/core.hpp"

namespace pmgflow {

enum class ValueType { String, Int, Real, Bool, IntList };

struct ConfigKey {
    std::string key;
    ValueType type;
    std::string fallback;
    std::string help;
};

inline const std::vector<ConfigKey>& config_schema() {
    static const std::vector<ConfigKey> keys = {
        {"case.name", ValueType::String, "case", "label used in summaries"},
        {"case.mode", ValueType::String, "unsteady", "unsteady | steady"},
        {"case.seed", ValueType::Int, "0", "seed for randomized inputs"},

        {"mesh.kind", ValueType::String, "box", "box | cylinder | file"},
        {"mesh.file", ValueType::String, "", "mesh file for mesh.kind = file"},
        {"mesh.nx", ValueType::Int, "4", "box elements in x"},
        {"mesh.ny", ValueType::Int, "4", "box elements in y"},
        {"mesh.lx", ValueType::Real, "1", "box length"},
        {"mesh.ly", ValueType::Real, "1", "box height"},
        {"mesh.x0", ValueType::Real, "0", "box origin x"},
        {"mesh.y0", ValueType::Real, "0", "box origin y"},
        {"mesh.periodic", ValueType::Bool, "true", "periodic box (false: far-field sides)"},
        {"mesh.n_circ", ValueType::Int, "40", "O-mesh elements around the cylinder"},
        {"mesh.n_rad", ValueType::Int, "20", "O-mesh elements in the radial direction"},
        {"mesh.r_wall", ValueType::Real, "0.5", "cylinder radius"},
        {"mesh.r_far", ValueType::Real, "15", "far-field radius"},
        {"mesh.first_layer", ValueType::Real, "0.02", "radial height of the wall layer (0: uniform)"},

        {"equation.kind", ValueType::String, "euler", "euler | navier-stokes | advection-diffusion"},
        {"equation.mach", ValueType::Real, "0.5", "free-stream Mach number"},
        {"equation.reynolds", ValueType::Real, "1000", "Reynolds number on the reference length"},
        {"equation.gamma", ValueType::Real, "1.4", "ratio of specific heats"},
        {"equation.prandtl", ValueType::Real, "0.72", "Prandtl number"},
        {"equation.ref_length", ValueType::Real, "1", "reference length (cylinder: diameter)"},
        {"equation.adv_x", ValueType::Real, "1", "scalar advection velocity x"},
        {"equation.adv_y", ValueType::Real, "0", "scalar advection velocity y"},
        {"equation.diffusivity", ValueType::Real, "0", "scalar diffusivity"},
        {"equation.source", ValueType::Real, "0", "constant scalar source"},
        {"equation.bc_value", ValueType::Real, "0", "scalar Dirichlet value on far-field faces"},

        {"init.kind", ValueType::String, "freestream", "freestream | vortex | sine | uniform | restart"},
        {"init.restart", ValueType::String, "", "restart file for init.kind = restart"},
        {"init.value", ValueType::Real, "0", "scalar value for init.kind = uniform"},
        {"init.vortex_strength", ValueType::Real, "5", "isentropic vortex strength"},
        {"init.vortex_x", ValueType::Real, "5", "vortex centre x"},
        {"init.vortex_y", ValueType::Real, "5", "vortex centre y"},
        {"init.vortex_u", ValueType::Real, "1", "vortex convection velocity x"},
        {"init.vortex_v", ValueType::Real, "1", "vortex convection velocity y"},

        {"discretization.p", ValueType::Int, "3", "polynomial degree"},

        {"time.scheme", ValueType::String, "esdirk2", "esdirk2 | esdirk4 | row2 | row4"},
        {"time.dt", ValueType::Real, "0.05", "physical time step"},
        {"time.steps", ValueType::Int, "1", "number of steps (ignored when time.end > 0)"},
        {"time.end", ValueType::Real, "0", "end time (0: use time.steps)"},

        {"solver.kind", ValueType::String, "jfnk", "jfnk | pmg-solver"},
        {"solver.preconditioner", ValueType::String, "ej", "ej | pmg | none (jfnk only)"},
        {"solver.tolerate_ptc_failure", ValueType::Bool, "false", "continue with the best iterate when PTC stalls"},

        {"ptc.rtol", ValueType::Real, "1e-4", "relative tolerance on the stage residual"},
        {"ptc.atol", ValueType::Real, "0", "absolute tolerance (0: off)"},
        {"ptc.max_iters", ValueType::Int, "100", "pseudo-time iterations per stage"},
        {"ptc.dtau_init", ValueType::Real, "1", "initial pseudo-time step (steady runs)"},
        {"ptc.dtau_ratio", ValueType::Real, "1", "initial dtau / dt (unsteady runs)"},
        {"ptc.dtau_max", ValueType::Real, "inf", "pseudo-time step cap"},
        {"ptc.ser", ValueType::Bool, "false", "grow dtau by the residual ratio"},
        {"ptc.ser_as_printed", ValueType::Bool, "false", "use the inverted SER ratio"},
        {"ptc.refresh_every", ValueType::Int, "0", "re-linearize the preconditioner every N iterations"},
        {"ptc.fd_eps", ValueType::Real, "1e-6", "finite-difference step"},

        {"gmres.kdim", ValueType::Int, "30", "Krylov dimension"},
        {"gmres.max_restarts", ValueType::Int, "0", "restarts after the first cycle"},
        {"gmres.rtol", ValueType::Real, "1e-3", "relative tolerance"},

        {"pmg.levels", ValueType::IntList, "3-1", "hierarchy for the top degree, e.g. 3-1-0"},
        {"pmg.smooth", ValueType::IntList, "2-2", "sweeps per level"},
        {"pmg.smoother", ValueType::String, "ej", "ej | mbnk, one per level or one for all"},
        {"pmg.switch_after", ValueType::Int, "0", "outer iterations before switching smoothers (0: never)"},
        {"pmg.switch_to", ValueType::String, "mbnk", "smoothers after the switch"},
        {"pmg.mbnk_rtol", ValueType::Real, "0.1", "MBNK inner GMRES tolerance"},
        {"pmg.mbnk_maxiter", ValueType::Int, "5", "MBNK inner GMRES iterations"},
        {"pmg.omega", ValueType::Real, "1", "EJ damping"},
        {"pmg.m_max", ValueType::Int, "1", "pseudo-steps per preconditioner application"},
        {"pmg.pseudo_shift", ValueType::Bool, "true", "include 1/dtau in the preconditioner"},
        {"pmg.precond_scale", ValueType::Real, "1e-3", "input norm for the preconditioner cycle (0: raw)"},

        {"adapt.enable", ValueType::Bool, "false", "p-adaptation on/off"},
        {"adapt.variable", ValueType::Int, "1", "indicator variable index"},
        {"adapt.nu_max", ValueType::Real, "0.2", "raise threshold relative to the largest indicator"},
        {"adapt.nu_min", ValueType::Real, "0.001", "lower threshold relative to the largest indicator"},
        {"adapt.p_min", ValueType::Int, "1", "lowest degree"},
        {"adapt.p_max", ValueType::Int, "4", "highest degree"},
        {"adapt.every_n_steps", ValueType::Int, "10", "adaptation cadence in steps"},

        {"output.dir", ValueType::String, "out", "artifact directory"},
        {"output.restart", ValueType::String, "", "write a restart file here at the end of the run"},
        {"output.forces", ValueType::Bool, "true", "write forces.csv when the mesh has walls"},
    };
    return keys;
}

inline const ConfigKey* find_key(const std::string& key) {
    for (const auto& k : config_schema())
        if (k.key == key) return &k;
    return nullptr;
}

class Config {
public:
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys and malformed values are errors.
    static Config parse(std::istream& in, const std::string& source = "config") {
        Config c;
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(n) + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            c.set(key, trim(line.substr(eq + 1)), source + ":" + std::to_string(n));
        }
        return c;
    }

    static Config parse_string(const std::string& text, const std::string& source = "config") {
        std::istringstream in(text);
        return parse(in, source);
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value, const std::string& where = "override") {
        const ConfigKey* k = find_key(key);
        if (!k) throw ConfigError(where + ": unknown key '" + key + "'");
        check(*k, value);
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key) const { return raw(key); }
    int integer(const std::string& key) const { return std::stoi(raw(key)); }
    double real(const std::string& key) const { return to_real(raw(key)); }
    bool boolean(const std::string& key) const { return to_bool(raw(key)); }

    /// Canonical text form: every schema key with its effective value.
    std::string dump() const {
        std::string out;
        for (const auto& k : config_schema()) out += k.key + " = " + raw(k.key) + "\n";
        return out;
    }

private:
    std::map<std::string, std::string> values_;

    std::string raw(const std::string& key) const {
        const ConfigKey* k = find_key(key);
        if (!k) throw ConfigError("unknown key '" + key + "'");
        const auto it = values_.find(key);
        return it == values_.end() ? k->fallback : it->second;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    }

    static double to_real(const std::string& v) {
        if (v == "inf") return std::numeric_limits<double>::infinity();
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    }

    static bool to_bool(const std::string& v) {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument(v);
    }

    static void check(const ConfigKey& k, const std::string& v) {
        const char* what = nullptr;
        try {
            switch (k.type) {
                case ValueType::String: return;
                case ValueType::Int: {
                    what = "an integer";
                    std::size_t used = 0;
                    std::stoi(v, &used);
                    if (used != v.size()) throw std::invalid_argument(v);
                    return;
                }
                case ValueType::Real:
                    what = "a number";
                    to_real(v);
                    return;
                case ValueType::Bool:
                    what = "true or false";
                    to_bool(v);
                    return;
                case ValueType::IntList: {
                    what = "a dash-separated integer list";
                    std::stringstream ss(v);
                    std::string tok;
                    int count = 0;
                    while (std::getline(ss, tok, '-')) {
                        std::size_t used = 0;
                        std::stoi(tok, &used);
                        if (tok.empty() || used != tok.size()) throw std::invalid_argument(v);
                        ++count;
                    }
                    if (count == 0) throw std::invalid_argument(v);
                    return;
                }
            }
        } catch (const std::exception&) {
            throw ConfigError(k.key + ": expected " + what + ", got '" + v + "'");
        }
    }
};

}  // namespace pmgflow
