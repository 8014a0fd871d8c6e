#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pmgflow/harness.hpp"

using namespace pmgflow;

namespace {

Config load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
    Config c = Config::load(path);
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + s + "'");
        c.set(s.substr(0, eq), s.substr(eq + 1), "--set");
    }
    return c;
}

int cmd_run(const std::string& config, const std::string& out, const std::vector<std::string>& sets) {
    const Config raw = load_with_overrides(config, sets);
    CaseConfig c = CaseConfig::from(raw);
    const std::string dir = out.empty() ? c.out_dir : out;
    std::filesystem::create_directories(dir);
    std::ofstream(dir + "/config.effective") << raw.dump();
    const RunResult r = run_case(c, dir);
    std::cout << r.summary << '\n';
    if (r.exit_code != kExitOk) std::cerr << "error: " << r.message << '\n';
    return r.exit_code;
}

int cmd_ooa(const std::string& config, int levels, bool temporal, const std::string& out, const std::vector<std::string>& sets) {
    const CaseConfig c = CaseConfig::from(load_with_overrides(config, sets));
    const auto rows = ooa_study(c, levels, temporal ? OoaKind::Time : OoaKind::Space);
    write_ooa_csv(std::cout, rows);
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream f(out + "/ooa.csv");
        write_ooa_csv(f, rows);
    }
    return kExitOk;
}

int cmd_bench(const std::string& config, const std::string& variants, const std::string& out,
              const std::vector<std::string>& sets) {
    const Config base = load_with_overrides(config, sets);
    const auto rows = precond_bench(base, load_variants(variants), out);
    std::cout << format_bench_table(rows);
    if (!out.empty()) {
        std::ofstream f(out + "/bench.csv");
        write_bench_csv(f, rows);
    }
    for (const auto& r : rows)
        if (r.dnf) std::cerr << r.variant << ": DNF: " << r.message << '\n';
    return kExitOk;
}

int cmd_mesh_gen(const MeshSpec& m, const std::string& output) {
    if (m.kind == "file") throw ConfigError("mesh-gen: --kind must be box or cylinder");
    const Mesh mesh = build_mesh(m);
    if (output.empty() || output == "-") {
        write_mesh(mesh, std::cout);
    } else {
        std::ofstream f(output);
        if (!f) throw ConfigError("mesh-gen: cannot write '" + output + "'");
        write_mesh(mesh, f);
    }
    std::cerr << mesh.elements.size() << " elements, " << mesh.nodes.size() << " nodes\n";
    return kExitOk;
}

int cmd_keys() {
    for (const auto& k : config_schema()) std::printf("%-28s %-10s %s\n", k.key.c_str(), k.fallback.c_str(), k.help.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pmgflow: high-order FR solver with p-multigrid preconditioning"};
    app.require_subcommand(1);
    std::string config, out, variants, output;
    std::vector<std::string> sets;
    int levels = 3;
    bool temporal = false;
    MeshSpec mesh;

    auto* run = app.add_subcommand("run", "run a case");
    run->add_option("--config", config, "case file")->required();
    run->add_option("--out", out, "artifact directory (default: output.dir)");
    run->add_option("--set", sets, "override key=value (repeatable)");

    auto* ooa = app.add_subcommand("ooa", "order-of-accuracy study");
    ooa->add_option("--config", config, "case file")->required();
    ooa->add_option("--levels", levels, "number of refinement levels (>= 2)")->required();
    ooa->add_flag("--time", temporal, "refine dt only on the fixed mesh");
    ooa->add_option("--out", out, "write ooa.csv here");
    ooa->add_option("--set", sets, "override key=value (repeatable)");

    auto* bench = app.add_subcommand("bench", "compare solver/preconditioner variants");
    bench->add_option("--config", config, "base case file")->required();
    bench->add_option("--variants", variants, "variants file ([name] headers with overrides)")->required();
    bench->add_option("--out", out, "write bench.csv and per-variant artifacts here");
    bench->add_option("--set", sets, "override key=value on the base (repeatable)");

    auto* gen = app.add_subcommand("mesh-gen", "write a generated mesh");
    gen->add_option("--kind", mesh.kind, "box | cylinder")->required();
    gen->add_option("--nx", mesh.nx);
    gen->add_option("--ny", mesh.ny);
    gen->add_option("--lx", mesh.lx);
    gen->add_option("--ly", mesh.ly);
    gen->add_option("--periodic", mesh.periodic);
    gen->add_option("--n-circ", mesh.n_circ);
    gen->add_option("--n-rad", mesh.n_rad);
    gen->add_option("--r-wall", mesh.r_wall);
    gen->add_option("--r-far", mesh.r_far);
    gen->add_option("--first-layer", mesh.first_layer);
    gen->add_option("-o,--output", output, "output file (default: stdout)");

    auto* keys = app.add_subcommand("keys", "list config keys with defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) return cmd_run(config, out, sets);
        if (*ooa) return cmd_ooa(config, levels, temporal, out, sets);
        if (*bench) return cmd_bench(config, variants, out, sets);
        if (*gen) return cmd_mesh_gen(mesh, output);
        if (*keys) return cmd_keys();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const MeshError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    }
    return kExitOk;
}
