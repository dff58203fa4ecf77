// tldd: command-line driver for the two-level DD studies.
//
//   tldd sweep-kappa --config run.json --h-minus 0.0015625 -o out/
//   tldd nonlinear --curve-a a.csv --curve-b b.csv --sweep-kappa-plus-b 0.1:0.8:8

#include "tldd/tldd.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace tldd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Flags that override config-file keys of the same name.
struct Overrides {
    std::string config;
    std::optional<int> dim, m, max_iters, seed;
    std::optional<Real> h_plus, kappa_plus, tol, solver_rel_tol, alpha;
    std::vector<Real> h_minus, kappa_minus, theta;
    std::optional<std::string> solver, refinement, output_dir;

    void attach(CLI::App* app)
    {
        app->add_option("-c,--config", config, "JSON config; keys mirror ExperimentConfig")->check(CLI::ExistingFile);
        app->add_option("--dim", dim, "2 or 3");
        app->add_option("-m,--degree", m, "polynomial degree (1 or 2)");
        app->add_option("--h-plus", h_plus);
        app->add_option("--h-minus", h_minus, "one or more local mesh sizes");
        app->add_option("--kappa-plus", kappa_plus);
        app->add_option("--kappa-minus", kappa_minus, "one or more kappa_- values");
        app->add_option("--theta", theta, "one or more relaxation factors");
        app->add_option("--alpha", alpha, "penalty (default 1e6 max(1,kappa_-)/h_-)");
        app->add_option("--tol", tol, "DD relative-change tolerance");
        app->add_option("--max-iters", max_iters);
        app->add_option("--solver", solver, "sparse-direct | dense-direct | cg | gmres");
        app->add_option("--solver-rel-tol", solver_rel_tol);
        app->add_option("--refinement", refinement, "uniform-fine | graded");
        app->add_option("--seed", seed);
        app->add_option("-o,--output-dir", output_dir);
    }

    [[nodiscard]] ExperimentConfig resolve() const
    {
        json j = json::object();
        if (!config.empty()) {
            std::ifstream is(config);
            try {
                j = json::parse(is);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::InvalidConfig, config + ": " + e.what());
            }
        }
        auto set = [&](const char* key, const auto& v) {
            if (v)
                j[key] = *v;
        };
        set("dim", dim);
        set("m", m);
        set("max_iters", max_iters);
        set("seed", seed);
        set("h_plus", h_plus);
        set("kappa_plus", kappa_plus);
        set("tol", tol);
        set("solver_rel_tol", solver_rel_tol);
        set("alpha", alpha);
        set("solver", solver);
        set("refinement", refinement);
        set("output_dir", output_dir);
        if (!h_minus.empty())
            j["h_minus"] = h_minus;
        if (!kappa_minus.empty())
            j["kappa_minus"] = kappa_minus;
        if (!theta.empty())
            j["theta"] = theta;
        return config_from_json(j);
    }
};

json manifest(const ExperimentConfig& cfg, const std::string& command)
{
    json j = to_json(cfg);
    j["command"] = command;
    return j;
}

void write_json(const fs::path& p, const json& j)
{
    std::ofstream os(p);
    TLDD_THROW_IF(!os, ErrorCode::IoError, "cannot write '" + p.string() + "'");
    os << j.dump(2) << '\n';
}

fs::path prepare(const ExperimentConfig& cfg)
{
    fs::create_directories(cfg.output_dir);
    return cfg.output_dir;
}

CouplingParams params(const ExperimentConfig& cfg, Real km, Real hm)
{
    CouplingParams p;
    p.kappa_plus = cfg.kappa_plus;
    p.kappa_minus = km;
    p.alpha = cfg.alpha_for(km, hm);
    return p;
}

template <int Dim>
int run_solve(const ExperimentConfig& cfg)
{
    const Real hm = cfg.h_minus.front(), km = cfg.kappa_minus.front();
    const auto d = make_discretization<Dim>(cfg.geom, cfg.h_plus, hm, cfg.m);
    const auto ops = build_coupled_operators(d, laser_problem<Dim>(cfg.geom), params(cfg, km, hm));
    DDConfig dd = cfg.dd;
    dd.theta = cfg.theta.front();
    const auto rep = run_two_level_dd(ops, dd);

    SweepRecord r;
    r.case_id = case_id(Dim, cfg.m, h_ratio(cfg.h_plus, hm));
    r.dim = Dim;
    r.m = cfg.m;
    r.h_ratio = h_ratio(cfg.h_plus, hm);
    r.kappa_ratio = km / cfg.kappa_plus;
    r.theta = dd.theta;
    r.rho_measured = rep.rho_estimate.value_or(std::numeric_limits<Real>::quiet_NaN());
    r.iterations = rep.iterations;
    r.converged = rep.converged;
    r.status = rep.status;
    r.time_s = rep.time_s;
    if (rep.converged)
        r.block_residual = block_residual(ops, rep.T_plus, rep.T_minus);

    const auto out = prepare(cfg);
    emit_reports(std::span<const SweepRecord>(&r, 1), {}, manifest(cfg, "solve"), out);
    json rj = to_json(rep);
    rj["block_residual"] = rep.converged ? json(r.block_residual) : json(nullptr);
    write_json(out / "report.json", rj);
    std::ofstream sp(out / "T_plus.csv"), sm(out / "T_minus.csv");
    write_solution_csv(sp, d.global_dofs, rep.T_plus);
    if (rep.T_minus.size() > 0)
        write_solution_csv(sm, d.local_dofs, rep.T_minus);
    std::cout << r.case_id << " kappa_-/kappa_+ " << r.kappa_ratio << " theta " << r.theta << ": "
              << to_string(rep.status) << " after " << rep.iterations << " iterations";
    if (rep.converged)
        std::cout << ", block residual " << r.block_residual << ", max T_+ " << rep.T_plus.maxCoeff();
    std::cout << '\n';
    return rep.converged ? 0 : 3;
}

template <int Dim>
int run_spectrum(const ExperimentConfig& cfg, bool dense)
{
    const Real hm = cfg.h_minus.front();
    const auto d = make_discretization<Dim>(cfg.geom, cfg.h_plus, hm, cfg.m);
    const auto data = laser_problem<Dim>(cfg.geom);
    const auto out = prepare(cfg);
    std::ofstream os(out / "spectrum.csv");
    os.precision(17);
    os << "kappa_ratio,theta,rho_power,rayleigh,power_iterations,power_converged,rho_dense\n";
    for (Real km : cfg.kappa_minus) {
        const auto ops = build_coupled_operators(d, data, params(cfg, km, hm));
        const SubdomainSolvers s(ops, cfg.dd.inner);
        std::optional<DenseMatrix> M;
        if (dense) {
            TLDD_THROW_IF(ops.n_plus() > kDenseSpectralLimit, ErrorCode::InvalidConfig,
                          "dense oracle limited to n_+ <= " + std::to_string(kDenseSpectralLimit));
            M = dense_iteration_matrix(ops.K_plus, ops.S, ops.K_minus, ops.D);
        }
        for (Real t : cfg.theta) {
            const auto pr = estimate_rho(s, t, cfg.power_tol, cfg.power_max_iters, cfg.seed);
            os << km / cfg.kappa_plus << ',' << t << ',' << pr.rho << ',' << pr.rayleigh << ',' << pr.iterations
               << ',' << pr.converged << ',';
            std::cout << "kappa_-/kappa_+ " << km / cfg.kappa_plus << " theta " << t << ": rho " << pr.rho;
            if (M) {
                const DenseMatrix R = (1.0 - t) * DenseMatrix::Identity(M->rows(), M->cols()) + t * *M;
                const Real rd = dense_spectral_radius(R);
                os << rd;
                std::cout << " (dense " << rd << ")";
            }
            os << '\n';
            std::cout << '\n';
        }
    }
    write_json(out / "manifest.json", manifest(cfg, "spectrum"));
    return 0;
}

int run_sweep_kappa(const ExperimentConfig& cfg)
{
    std::vector<SweepRecord> recs;
    std::vector<NamedFit> fits;
    for (Real hm : cfg.h_minus) {
        const auto res = sweep_kappa(cfg, hm);
        recs.insert(recs.end(), res.records.begin(), res.records.end());
        for (const auto& w : res.warnings)
            std::cerr << res.case_id << ": " << w << '\n';
        if (res.fit) {
            fits.push_back({res.case_id, *res.fit});
            std::cout << res.case_id << ": a0 " << res.fit->a0 << ", a1 " << res.fit->a1 << ", C~ "
                      << res.fit->C_tilde << ", R2 " << res.fit->r2_linear << ", divergence above kappa_-/kappa_+ "
                      << predict_divergence_threshold(*res.fit) << '\n';
        }
    }
    emit_reports(recs, fits, manifest(cfg, "sweep-kappa"), prepare(cfg));
    return 0;
}

int run_sweep_mesh(const ExperimentConfig& cfg)
{
    const auto res = sweep_mesh_ratio(cfg);
    std::vector<SweepRecord> recs;
    std::vector<NamedFit> fits;
    for (const auto& c : res.cases) {
        recs.insert(recs.end(), c.records.begin(), c.records.end());
        if (c.fit)
            fits.push_back({c.case_id, *c.fit});
    }
    json man = manifest(cfg, "sweep-mesh");
    man["growth"] = {{"ratios", res.growth.ratios},         {"C_tilde", res.growth.C_tilde},
                     {"increments", res.growth.increments}, {"slope", res.growth.slope},
                     {"intercept", res.growth.intercept}};
    emit_reports(recs, fits, man, prepare(cfg));
    for (std::size_t i = 0; i < res.growth.ratios.size(); ++i)
        std::cout << "h_+/h_- " << res.growth.ratios[i] << ": C~ " << res.growth.C_tilde[i] << '\n';
    std::cout << "C~ ~ " << res.growth.intercept << " + " << res.growth.slope << " log2(h_+/h_-)\n";
    return 0;
}

int run_relax(const ExperimentConfig& cfg, Real kappa_ratio, bool presets)
{
    std::vector<Real> thetas = cfg.theta;
    if (presets) {
        thetas.push_back(theta_empirical(kappa_ratio));
        thetas.push_back(theta_parabola(kappa_ratio));
    }
    const Real hm = cfg.h_minus.front();
    const auto rows = relaxation_study(cfg, hm, kappa_ratio * cfg.kappa_plus, thetas);
    const auto out = prepare(cfg);
    std::ofstream os(out / "relaxation.csv");
    os.precision(17);
    os << "kappa_ratio,theta,rho_relaxed,iterations,status,best\n";
    for (const auto& r : rows) {
        os << kappa_ratio << ',' << r.theta << ',' << r.rho_relaxed << ',' << r.iterations << ','
           << to_string(r.status) << ',' << r.best << '\n';
        std::cout << "theta " << r.theta << ": rho " << r.rho_relaxed << ", " << to_string(r.status) << " in "
                  << r.iterations << (r.best ? " (best)" : "") << '\n';
    }
    json man = manifest(cfg, "relax-study");
    man["relax_kappa_ratio"] = kappa_ratio;
    write_json(out / "manifest.json", man);
    return 0;
}

template <int Dim>
int run_compare(const ExperimentConfig& cfg, const SolverConfig& krylov)
{
    const auto rows = compare_monolithic<Dim>(cfg, krylov);
    const auto out = prepare(cfg);
    std::ofstream os(out / "monolithic.csv");
    os.precision(17);
    os << "kappa_ratio,h_ratio,dd_iterations,dd_status,dd_local_inner,dd_global_inner,dd_time_s,"
          "mono_iterations,mono_converged,mono_dofs,mono_time_s,l2_difference\n";
    for (const auto& r : rows) {
        os << r.kappa_ratio << ',' << r.h_ratio << ',' << r.dd_iterations << ',' << to_string(r.dd_status) << ','
           << r.dd_local_inner << ',' << r.dd_global_inner << ',' << r.dd_time_s << ',' << r.mono_iterations << ','
           << r.mono_converged << ',' << r.mono_dofs << ',' << r.mono_time_s << ',' << r.l2_difference << '\n';
        std::cout << "h_+/h_- " << r.h_ratio << " kappa_-/kappa_+ " << r.kappa_ratio << ": DD "
                  << to_string(r.dd_status) << " (" << r.dd_global_inner << " global inner), monolithic "
                  << (r.mono_converged ? "converged" : "not converged") << " (" << r.mono_iterations
                  << "), relative L2 gap " << r.l2_difference << '\n';
    }
    json man = manifest(cfg, "compare-monolithic");
    man["krylov"] = {{"method", to_string(krylov.method)},
                     {"preconditioner", krylov.preconditioner == Preconditioner::None ? "none" : "jacobi"},
                     {"rel_tol", krylov.rel_tol},
                     {"max_iters", krylov.max_iters},
                     {"restart", krylov.restart}};
    write_json(out / "manifest.json", man);
    return 0;
}

struct NonlinearArgs {
    std::string curve_a, curve_b, sweep;
    NonlinearConfig nl;
    bool monolithic = false;
};

MaterialCurve curve_or_default(const std::string& path, MaterialCurve fallback)
{
    return path.empty() ? fallback : read_curve_csv(path);
}

template <int Dim>
int run_nonlinear(const ExperimentConfig& cfg, const NonlinearArgs& a)
{
    const Real TD = kAmbientTemperature;
    const auto ka = curve_or_default(a.curve_a, MaterialCurve::linear(1.0, 1e-4, TD, 5000.0));
    const auto kb = curve_or_default(a.curve_b, MaterialCurve::linear(0.25, 8e-4, TD, 5000.0));
    const Real hm = cfg.h_minus.front();
    const auto d = make_discretization<Dim>(cfg.geom, cfg.h_plus, hm, cfg.m);
    const auto data = laser_problem<Dim>(cfg.geom);
    const auto out = prepare(cfg);
    json man = manifest(cfg, "nonlinear");
    man["curve_a"] = a.curve_a.empty() ? "synthetic-linear" : a.curve_a;
    man["curve_b"] = a.curve_b.empty() ? "synthetic-linear" : a.curve_b;
    man["picard_tol"] = a.nl.picard_tol;
    man["picard_max"] = a.nl.picard_max;
    man["damping"] = a.nl.damping;
    man["inner_sweeps"] = a.nl.inner_sweeps;

    if (!a.sweep.empty()) {
        Real lo = 0, hi = 0;
        int n = 0;
        char c1 = 0, c2 = 0;
        std::istringstream ss(a.sweep);
        TLDD_THROW_IF(!(ss >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1, ErrorCode::InvalidConfig,
                      "--sweep-kappa-plus-b expects lo:hi:n");
        const auto grid = linspace(lo, hi, n);
        const auto rows = sweep_kappa_plus_B(d, data, ka, kb, grid, a.nl, cfg.dd);
        std::ofstream os(out / "kappa_plus_b.csv");
        os.precision(17);
        os << "kappa_plus_B,picard_iterations,converged,mean_global_inner,time_s\n";
        for (const auto& r : rows) {
            os << r.kappa_plus_B << ',' << r.picard_iterations << ',' << r.converged << ',' << r.mean_global_inner
               << ',' << r.time_s << '\n';
            std::cout << "kappa_+B " << r.kappa_plus_B << ": " << r.picard_iterations << " Picard steps"
                      << (r.converged ? "" : " (not converged)") << '\n';
        }
        man["kappa_plus_B_grid"] = grid;
        write_json(out / "manifest.json", man);
        return 0;
    }

    const auto res = picard_two_level(d, data, ka, kb, a.nl, cfg.dd);
    json rj = {{"picard_iterations", res.picard_iterations},
               {"converged", res.converged},
               {"change_history", res.change_history},
               {"dd_iterations", res.dd_iterations},
               {"mean_global_inner", res.mean_global_inner()},
               {"time_s", res.time_s}};
    std::cout << "Picard two-level: " << res.picard_iterations << " steps, max T_+ " << res.T_plus.maxCoeff() << '\n';
    if (a.monolithic) {
        const auto mono = picard_monolithic<Dim>(cfg.geom, cfg.h_plus, hm, cfg.m, cfg.refinement, data, ka, kb, a.nl);
        const Real n = l2_error<Dim>(mono.fitted.mesh, mono.fitted.dofs, mono.fitted.solution,
                                     [](const Point<Dim>&) { return 0.0; });
        const Real gap = composite_l2_distance<Dim>(d, res.T_plus, res.T_minus, mono.fitted.mesh, mono.fitted.dofs,
                                                    mono.fitted.solution) / n;
        rj["monolithic"] = {{"picard_iterations", mono.picard_iterations},
                            {"converged", mono.converged},
                            {"relative_l2_gap", gap},
                            {"strip_mean_kappa_B", strip_mean_conductivity(mono.fitted, cfg.geom, kb)}};
        std::cout << "Picard monolithic: " << mono.picard_iterations << " steps, relative L2 gap " << gap << '\n';
    }
    write_json(out / "nonlinear.json", rj);
    std::ofstream sp(out / "T_plus.csv"), sm(out / "T_minus.csv");
    write_solution_csv(sp, d.global_dofs, res.T_plus);
    write_solution_csv(sm, d.local_dofs, res.T_minus);
    write_json(out / "manifest.json", man);
    return 0;
}

template <class F>
int by_dim(const ExperimentConfig& cfg, F&& f)
{
    return cfg.geom.dim == 2 ? f(std::integral_constant<int, 2>{}) : f(std::integral_constant<int, 3>{});
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Two-level Dirichlet-Neumann / fictitious-domain solver for piecewise-constant diffusion"};
    app.require_subcommand(1);

    Overrides ov_solve, ov_spec, ov_sk, ov_sm, ov_rx, ov_cm, ov_nl;
    auto* solve = app.add_subcommand("solve", "one DD run (first h_-, kappa_-, theta)");
    ov_solve.attach(solve);

    auto* spectrum = app.add_subcommand("spectrum", "spectral radius of the DD iteration operator");
    ov_spec.attach(spectrum);
    bool dense = false;
    spectrum->add_flag("--dense", dense, "also compute the dense-eigenvalue oracle");

    auto* sk = app.add_subcommand("sweep-kappa", "kappa_- sweep and linear spectral fit per h_-");
    ov_sk.attach(sk);

    auto* sm = app.add_subcommand("sweep-mesh", "growth of C~ with h_+/h_-");
    ov_sm.attach(sm);

    auto* rx = app.add_subcommand("relax-study", "relaxation factors at one kappa_-/kappa_+");
    ov_rx.attach(rx);
    Real relax_ratio = 3.2;
    bool presets = false;
    rx->add_option("--kappa-ratio", relax_ratio, "kappa_-/kappa_+")->required();
    rx->add_flag("--presets", presets, "add theta = kappa_+/kappa_- and the parabola minimizer");

    auto* cm = app.add_subcommand("compare-monolithic", "DD against a fitted monolithic Krylov solve");
    ov_cm.attach(cm);
    std::string method = "gmres", precond = "none";
    SolverConfig krylov;
    krylov.rel_tol = 1e-10;
    cm->add_option("--method", method, "cg | gmres")->check(CLI::IsMember({"cg", "gmres"}));
    cm->add_option("--preconditioner", precond, "none | jacobi")->check(CLI::IsMember({"none", "jacobi"}));
    cm->add_option("--krylov-tol", krylov.rel_tol);
    cm->add_option("--krylov-max-iters", krylov.max_iters);
    cm->add_option("--restart", krylov.restart);

    auto* nl = app.add_subcommand("nonlinear", "Picard two-level solve with temperature-dependent kappa");
    ov_nl.attach(nl);
    NonlinearArgs na;
    nl->add_option("--curve-a", na.curve_a, "CSV T,kappa for Omega_A (default: synthetic)")->check(CLI::ExistingFile);
    nl->add_option("--curve-b", na.curve_b, "CSV T,kappa for Omega_B (default: synthetic)")->check(CLI::ExistingFile);
    nl->add_option("--kappa-plus-b", na.nl.kappa_plus_B);
    nl->add_option("--sweep-kappa-plus-b", na.sweep, "lo:hi:n");
    nl->add_option("--picard-tol", na.nl.picard_tol);
    nl->add_option("--picard-max", na.nl.picard_max);
    nl->add_option("--damping", na.nl.damping);
    nl->add_option("--inner-sweeps", na.nl.inner_sweeps, "DD sweeps per Picard step (0: to convergence)");
    nl->add_flag("--monolithic", na.monolithic, "also run the monolithic Picard oracle");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            const auto cfg = ov_solve.resolve();
            return by_dim(cfg, [&](auto d) { return run_solve<decltype(d)::value>(cfg); });
        }
        if (spectrum->parsed()) {
            const auto cfg = ov_spec.resolve();
            return by_dim(cfg, [&](auto d) { return run_spectrum<decltype(d)::value>(cfg, dense); });
        }
        if (sk->parsed())
            return run_sweep_kappa(ov_sk.resolve());
        if (sm->parsed())
            return run_sweep_mesh(ov_sm.resolve());
        if (rx->parsed())
            return run_relax(ov_rx.resolve(), relax_ratio, presets);
        if (cm->parsed()) {
            const auto cfg = ov_cm.resolve();
            krylov.method = parse_solver_method(method);
            krylov.preconditioner = precond == "none" ? Preconditioner::None : Preconditioner::Diagonal;
            return by_dim(cfg, [&](auto d) { return run_compare<decltype(d)::value>(cfg, krylov); });
        }
        if (nl->parsed()) {
            const auto cfg = ov_nl.resolve();
            na.nl.validate();
            return by_dim(cfg, [&](auto d) { return run_nonlinear<decltype(d)::value>(cfg, na); });
        }
    } catch (const Error& e) {
        std::cerr << "tldd: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "tldd: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
