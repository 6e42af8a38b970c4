// Command-line front end: probabilistic discretization dumps, single PDE
// solves, and benchmark sweeps with CSV output.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pnmol/pnmol.hpp"

namespace {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config(const std::string& path) {
    ConfigMap out;
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) out[key] = value;
    }
    return out;
}

// Config-file values apply only where the flag was not given on the command
// line; flags override the file.
void apply_config(const CLI::App& cmd, const ConfigMap& cfg, const std::string& key,
                  double& target) {
    const auto* opt = cmd.get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) return;
    if (auto it = cfg.find(key); it != cfg.end()) target = std::stod(it->second);
}

void apply_config(const CLI::App& cmd, const ConfigMap& cfg, const std::string& key,
                  int& target) {
    const auto* opt = cmd.get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) return;
    if (auto it = cfg.find(key); it != cfg.end()) target = std::stoi(it->second);
}

void apply_config(const CLI::App& cmd, const ConfigMap& cfg, const std::string& key,
                  std::string& target) {
    const auto* opt = cmd.get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) return;
    if (auto it = cfg.find(key); it != cfg.end()) target = it->second;
}

double cfg_or(const ConfigMap& cfg, const std::string& key, double fallback) {
    if (auto it = cfg.find(key); it != cfg.end()) return std::stod(it->second);
    return fallback;
}

pnmol::problems::PdeProblem make_problem(const std::string& name, const ConfigMap& cfg) {
    using namespace pnmol::problems;
    if (name == "heat") {
        HeatParams prm;
        prm.alpha = cfg_or(cfg, "heat_alpha", prm.alpha);
        prm.t_max = cfg_or(cfg, "t_max", prm.t_max);
        if (auto it = cfg.find("heat_boundary"); it != cfg.end())
            prm.boundary = it->second == "neumann" ? BoundaryKind::Neumann : BoundaryKind::Dirichlet;
        return heat_1d(prm);
    }
    if (name == "lotka-volterra") {
        LotkaVolterraParams prm;
        prm.a = cfg_or(cfg, "lv_a", prm.a);
        prm.b = cfg_or(cfg, "lv_b", prm.b);
        prm.c = cfg_or(cfg, "lv_c", prm.c);
        prm.e = cfg_or(cfg, "lv_e", prm.e);
        prm.delta_u = cfg_or(cfg, "lv_delta_u", prm.delta_u);
        prm.delta_v = cfg_or(cfg, "lv_delta_v", prm.delta_v);
        prm.t_max = cfg_or(cfg, "t_max", prm.t_max);
        return lotka_volterra_spatial(prm);
    }
    if (name == "sir") {
        SirParams prm;
        prm.beta = cfg_or(cfg, "sir_beta", prm.beta);
        prm.gamma_r = cfg_or(cfg, "sir_gamma_r", prm.gamma_r);
        prm.delta = cfg_or(cfg, "sir_delta", prm.delta);
        prm.t_max = cfg_or(cfg, "t_max", prm.t_max);
        return sir_spatial(prm);
    }
    throw CLI::ValidationError("--problem", "unknown problem: " + name);
}

pnmol::kernels::Kernel make_kernel(const std::string& name, double input_scale, int degree) {
    if (name == "se") return pnmol::kernels::Kernel::squared_exponential(input_scale, 1);
    if (name == "poly" || name == "polynomial")
        return pnmol::kernels::Kernel::polynomial(degree, 1);
    throw CLI::ValidationError("--kernel", "unknown kernel: " + name);
}

Eigen::Index parse_radius(const std::string& radius) {
    if (radius == "global") return pnmol::solver::SolverConfig::kGlobalStencil;
    return static_cast<Eigen::Index>(std::stol(radius));
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CLI::ValidationError("--out", "cannot open output file: " + path);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic numerical method of lines"};
    app.require_subcommand(1);

    // ---- discretize -------------------------------------------------------
    auto* d_cmd = app.add_subcommand("discretize", "dump differentiation matrix and error covariance");
    std::string d_kernel = "se", d_operator = "laplacian", d_radius = "1", d_out = "d_and_e.csv";
    std::string d_config;
    double d_input_scale = 0.25;
    int d_degree = 2, d_grid_n = 25;
    d_cmd->add_option("--kernel", d_kernel, "kernel family: se|poly");
    d_cmd->add_option("--input-scale", d_input_scale, "SE kernel input scale r");
    d_cmd->add_option("--degree", d_degree, "polynomial kernel degree");
    d_cmd->add_option("--operator", d_operator, "identity|laplacian|derivative");
    d_cmd->add_option("--grid-n", d_grid_n, "number of grid points on [0,1]");
    d_cmd->add_option("--radius", d_radius, "stencil radius or 'global'");
    d_cmd->add_option("--out", d_out, "output CSV");
    d_cmd->add_option("--config", d_config, "key=value config file; flags override");

    // ---- solve ------------------------------------------------------------
    auto* s_cmd = app.add_subcommand("solve", "solve a PDE problem and dump grid-time marginals");
    std::string s_problem = "heat", s_variant = "latent", s_kernel = "se", s_radius = "1";
    std::string s_out = "solution.csv", s_config;
    double s_dx = 0.2, s_dt = 1e-2, s_input_scale = 0.25;
    int s_nu = 1, s_degree = 2, s_calibrate = 1;
    s_cmd->add_option("--problem", s_problem, "heat|lotka-volterra|sir");
    s_cmd->add_option("--variant", s_variant, "latent|white|mol");
    s_cmd->add_option("--dx", s_dx, "spatial step");
    s_cmd->add_option("--dt", s_dt, "time step");
    s_cmd->add_option("--nu", s_nu, "integrated Wiener process order (1 or 2)");
    s_cmd->add_option("--kernel", s_kernel, "kernel family: se|poly");
    s_cmd->add_option("--input-scale", s_input_scale, "SE kernel input scale r");
    s_cmd->add_option("--degree", s_degree, "polynomial kernel degree");
    s_cmd->add_option("--radius", s_radius, "stencil radius or 'global'");
    s_cmd->add_option("--calibrate", s_calibrate, "1: quasi-MLE output scale, 0: gamma=1");
    s_cmd->add_option("--out", s_out, "output CSV");
    s_cmd->add_option("--config", s_config, "key=value config file; flags override");

    // ---- bench ------------------------------------------------------------
    auto* b_cmd = app.add_subcommand("bench", "metric sweep over variants and resolutions");
    std::string b_problem = "sir", b_kernel = "se", b_radius = "1", b_out = "metrics.csv";
    std::string b_chi2_out, b_config;
    std::vector<std::string> b_variants{"latent", "white", "mol"};
    std::vector<double> b_dxs{0.2}, b_dts{1e-2};
    double b_input_scale = 0.25;
    int b_nu = 1, b_degree = 2, b_ref_refine = 10;
    unsigned b_seed = 0;
    b_cmd->add_option("--problem", b_problem, "heat|lotka-volterra|sir");
    b_cmd->add_option("--variants", b_variants, "comma-separated: latent,white,mol")
        ->delimiter(',');
    b_cmd->add_option("--dx", b_dxs, "comma-separated spatial steps")->delimiter(',');
    b_cmd->add_option("--dt", b_dts, "comma-separated time steps")->delimiter(',');
    b_cmd->add_option("--nu", b_nu, "integrated Wiener process order");
    b_cmd->add_option("--ref-refine", b_ref_refine, "reference mesh refinement factor");
    b_cmd->add_option("--seed", b_seed, "seed recorded in the CSV header");
    b_cmd->add_option("--kernel", b_kernel, "kernel family: se|poly");
    b_cmd->add_option("--input-scale", b_input_scale, "SE kernel input scale r");
    b_cmd->add_option("--degree", b_degree, "polynomial kernel degree");
    b_cmd->add_option("--radius", b_radius, "stencil radius or 'global'");
    b_cmd->add_option("--out", b_out, "metrics CSV");
    b_cmd->add_option("--chi2-out", b_chi2_out, "optional per-step chi-squared curve CSV");
    b_cmd->add_option("--config", b_config, "key=value config file; flags override");

    try {
        app.parse(argc, argv);

        if (*d_cmd) {
            ConfigMap cfg = d_config.empty() ? ConfigMap{} : load_config(d_config);
            apply_config(*d_cmd, cfg, "kernel", d_kernel);
            apply_config(*d_cmd, cfg, "input-scale", d_input_scale);
            apply_config(*d_cmd, cfg, "degree", d_degree);
            apply_config(*d_cmd, cfg, "operator", d_operator);
            apply_config(*d_cmd, cfg, "grid-n", d_grid_n);
            apply_config(*d_cmd, cfg, "radius", d_radius);
            apply_config(*d_cmd, cfg, "out", d_out);

            const auto kernel = make_kernel(d_kernel, d_input_scale, d_degree);
            pnmol::kernels::DiffOperator op = pnmol::kernels::DiffOperator::laplacian();
            if (d_operator == "identity") op = pnmol::kernels::DiffOperator::identity();
            else if (d_operator == "derivative")
                op = pnmol::kernels::DiffOperator::directional(Eigen::VectorXd::Ones(1));
            else if (d_operator != "laplacian")
                throw CLI::ValidationError("--operator", "unknown operator: " + d_operator);

            const auto grid = pnmol::discretize::Grid::equispaced_1d(0.0, 1.0, d_grid_n);
            const Eigen::Index radius = parse_radius(d_radius);
            const auto approx = radius == pnmol::solver::SolverConfig::kGlobalStencil
                                    ? pnmol::discretize::collocate_global(kernel, op, grid)
                                    : pnmol::discretize::collocate_local(kernel, op, grid, radius);
            auto out = open_out(d_out);
            pnmol::bench::write_operator_csv(approx, out);
        } else if (*s_cmd) {
            ConfigMap cfg = s_config.empty() ? ConfigMap{} : load_config(s_config);
            apply_config(*s_cmd, cfg, "problem", s_problem);
            apply_config(*s_cmd, cfg, "variant", s_variant);
            apply_config(*s_cmd, cfg, "dx", s_dx);
            apply_config(*s_cmd, cfg, "dt", s_dt);
            apply_config(*s_cmd, cfg, "nu", s_nu);
            apply_config(*s_cmd, cfg, "kernel", s_kernel);
            apply_config(*s_cmd, cfg, "input-scale", s_input_scale);
            apply_config(*s_cmd, cfg, "degree", s_degree);
            apply_config(*s_cmd, cfg, "radius", s_radius);
            apply_config(*s_cmd, cfg, "calibrate", s_calibrate);
            apply_config(*s_cmd, cfg, "out", s_out);

            const auto problem = make_problem(s_problem, cfg);
            pnmol::solver::SolverConfig scfg;
            scfg.variant = pnmol::bench::variant_by_name(s_variant);
            scfg.kernel = make_kernel(s_kernel, s_input_scale, s_degree);
            scfg.nu = s_nu;
            scfg.stencil_radius = parse_radius(s_radius);
            scfg.dx = s_dx;
            scfg.dt = s_dt;
            scfg.calibrate = s_calibrate != 0;
            const auto post = pnmol::solver::solve(problem, scfg);
            auto out = open_out(s_out);
            pnmol::bench::write_solution_csv(post, out);
        } else if (*b_cmd) {
            ConfigMap cfg = b_config.empty() ? ConfigMap{} : load_config(b_config);
            apply_config(*b_cmd, cfg, "problem", b_problem);
            apply_config(*b_cmd, cfg, "nu", b_nu);
            apply_config(*b_cmd, cfg, "ref-refine", b_ref_refine);
            apply_config(*b_cmd, cfg, "kernel", b_kernel);
            apply_config(*b_cmd, cfg, "input-scale", b_input_scale);
            apply_config(*b_cmd, cfg, "degree", b_degree);
            apply_config(*b_cmd, cfg, "radius", b_radius);
            apply_config(*b_cmd, cfg, "out", b_out);

            pnmol::bench::SweepSpec spec;
            spec.problem = b_problem;
            spec.variants.clear();
            for (const auto& v : b_variants) spec.variants.push_back(pnmol::bench::variant_by_name(v));
            spec.dxs = b_dxs;
            spec.dts = b_dts;
            spec.nu = b_nu;
            spec.seed = b_seed;
            spec.ref_refine = b_ref_refine;
            spec.kernel = b_kernel;
            spec.input_scale = b_input_scale;
            spec.degree = b_degree;
            spec.stencil_radius = parse_radius(b_radius);

            const auto rows = pnmol::bench::sweep(spec);
            auto out = open_out(b_out);
            pnmol::bench::write_metrics_csv(rows, spec, out);

            if (!b_chi2_out.empty()) {
                const auto problem = make_problem(b_problem, cfg);
                auto curve_out = open_out(b_chi2_out);
                curve_out << "variant,dx,dt,t,chi2\n";
                for (const auto variant : spec.variants) {
                    for (const double dx : spec.dxs) {
                        const auto ref = pnmol::problems::reference_solve(problem, b_ref_refine, dx);
                        for (const double dt : spec.dts) {
                            pnmol::solver::SolverConfig scfg;
                            scfg.variant = variant;
                            scfg.kernel = make_kernel(b_kernel, b_input_scale, b_degree);
                            scfg.nu = b_nu;
                            scfg.stencil_radius = parse_radius(b_radius);
                            scfg.dx = dx;
                            scfg.dt = dt;
                            const auto post = pnmol::solver::solve(problem, scfg);
                            const auto curve = pnmol::bench::chi2_curve(post, ref);
                            for (std::size_t k = 0; k < curve.size(); ++k)
                                curve_out << pnmol::bench::variant_name(variant) << ','
                                          << pnmol::bench::detail::fmt(dx) << ','
                                          << pnmol::bench::detail::fmt(dt) << ','
                                          << pnmol::bench::detail::fmt(post.times[k]) << ','
                                          << pnmol::bench::detail::fmt(curve[k]) << '\n';
                        }
                    }
                }
            }
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage error
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
