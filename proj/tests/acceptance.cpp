// Acceptance gate: `acceptance N` checks criterion N (1..12), `acceptance`
// checks all. One PASS/FAIL line per criterion; exit status 1 on any FAIL.

#include "tldd/tldd.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace tldd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

CoupledOperators laser_ops(const Discretization<2>& d, Real kappa_minus)
{
    CouplingParams p;
    p.kappa_minus = kappa_minus;
    return build_coupled_operators(d, laser_problem<2>(d.geom), p);
}

std::vector<DenseVector> dd_iterates(const CoupledOperators& ops, Real theta, int n)
{
    std::vector<DenseVector> it;
    DDConfig cfg;
    cfg.theta = theta;
    cfg.max_iters = n;
    cfg.tol = std::numeric_limits<Real>::min();
    DDOptions opts;
    opts.observer = [&](int, const DenseVector& T) { it.push_back(T); };
    run_two_level_dd(ops, cfg, opts);
    return it;
}

// 1. first 10 iterates (theta = .8) against the block Gauss-Seidel recurrence
// built from dense blocks of the assembled block matrix.
Outcome criterion_1()
{
    const auto t0 = Clock::now();
    GeometryConfig g;
    const auto d = make_discretization<2>(g, 1.0 / 160.0, 1.0 / 320.0, 1);
    const auto ops = laser_ops(d, 0.5);
    const DenseMatrix A = DenseMatrix(block_matrix(ops));
    const DenseVector b = block_rhs(ops);
    const auto np = ops.n_plus(), nm = ops.n_minus();
    const auto Kp = A.topLeftCorner(np, np).fullPivLu();
    const auto Km = A.bottomRightCorner(nm, nm).fullPivLu();
    const DenseMatrix S = A.topRightCorner(np, nm), D = A.bottomLeftCorner(nm, np);
    const Real theta = 0.8;
    std::vector<DenseVector> gs{Kp.solve(b.head(np))};
    for (int k = 0; k < 10; ++k) {
        const DenseVector tm = Km.solve(b.tail(nm) - D * gs.back());
        gs.push_back(theta * Kp.solve(b.head(np) - S * tm) + (1.0 - theta) * gs.back());
    }
    const auto dd = dd_iterates(ops, theta, 10);
    Real worst_scaled = 0.0, worst_abs = 0.0;
    for (std::size_t k = 0; k < gs.size(); ++k) {
        const Real diff = (dd.at(k) - gs[k]).cwiseAbs().maxCoeff();
        worst_abs = std::max(worst_abs, diff);
        worst_scaled = std::max(worst_scaled, diff / std::max(1.0, gs[k].cwiseAbs().maxCoeff()));
    }
    const double t = seconds_since(t0);
    return {worst_abs <= 1e-12 && t < 10.0,
            "max |DD - GS| = " + fmt("%.2e", worst_abs) + " (relative " + fmt("%.2e", worst_scaled) +
                ") over iterates 0..10, tol 1e-12 absolute; " + fmt("%.2f", t) + " s (limit 10 s)"};
}

// 2. Neumann partial sums k = 1..5 against unrelaxed iterates, relative L2.
Outcome criterion_2()
{
    const auto t0 = Clock::now();
    GeometryConfig g;
    const auto d = make_discretization<2>(g, 1.0 / 160.0, 1.0 / 320.0, 1);
    const auto ops = laser_ops(d, 0.5);
    const auto it = dd_iterates(ops, 1.0, 5);
    const SubdomainSolvers s(ops, SolverConfig{});
    Real worst = 0.0;
    for (int k = 1; k <= 5; ++k) {
        const DenseVector ns = neumann_partial_sum(s, k, it.at(0));
        const Real e = l2_error<2>(d.global, d.global_dofs, DenseVector(ns - it[k]),
                                   [](const Point<2>&) { return 0.0; });
        const Real n = l2_error<2>(d.global, d.global_dofs, it[k], [](const Point<2>&) { return 0.0; });
        worst = std::max(worst, e / n);
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-10 && t < 10.0, "max relative L2 gap over k=1..5 = " + fmt("%.2e", worst) +
                                            " (tol 1e-10); " + fmt("%.2f", t) + " s (limit 10 s)"};
}

ExperimentConfig standard_sweep(int m, Real ratio)
{
    ExperimentConfig cfg;
    cfg.m = m;
    cfg.h_minus = {cfg.h_plus / ratio};
    return cfg;
}

// 3. block residual of every converged point of the six kappa sweeps.
Outcome criterion_3()
{
    int points = 0, converged = 0, bad = 0;
    Real worst = 0.0;
    for (int m : {1, 2})
        for (Real r : {2.0, 4.0, 8.0}) {
            const auto cfg = standard_sweep(m, r);
            for (const auto& rec : sweep_kappa(cfg, cfg.h_minus[0]).records) {
                ++points;
                if (!rec.converged)
                    continue;
                ++converged;
                worst = std::max(worst, rec.block_residual);
                bad += !(rec.block_residual <= 1e-7);
            }
        }
    return {bad == 0 && converged > 0, std::to_string(converged) + "/" + std::to_string(points) +
                                           " sweep points converged; max relative block residual " +
                                           fmt("%.2e", worst) + " (tol 1e-7)"};
}

// 4. power iteration against the dense spectral radius on every small mesh.
Outcome criterion_4()
{
    int cases = 0, bad = 0;
    Real worst = 0.0;
    auto run = [&]<int Dim>(const Discretization<Dim>& d) {
        for (Real x : {0.5, 0.25, 2.0}) {
            CouplingParams p;
            p.kappa_minus = x;
            const auto ops = build_coupled_operators(d, laser_problem<Dim>(d.geom), p);
            const SubdomainSolvers s(ops, SolverConfig{});
            const DenseMatrix M = dense_iteration_matrix(ops.K_plus, ops.S, ops.K_minus, ops.D);
            for (Real theta : {1.0, 0.5}) {
                const DenseMatrix R =
                    (1.0 - theta) * DenseMatrix::Identity(M.rows(), M.cols()) + theta * M;
                const Real dense = dense_spectral_radius(R);
                const auto pw = estimate_rho(s, theta, 1e-12, 20000);
                const Real e = std::abs(pw.rho - dense) / std::max(dense, 1e-300);
                worst = std::max(worst, e);
                bad += !(e <= 1e-6);
                ++cases;
            }
        }
    };
    for (int m : {1, 2})
        for (Real hp : {1.0 / 160.0, 1.0 / 320.0, 1.0 / 640.0})
            for (Real r : {2.0, 4.0, 8.0}) {
                GeometryConfig g;
                const auto d2 = make_discretization<2>(g, hp, hp / r, m);
                if (d2.global_dofs.n_dofs <= 500)
                    run(d2);
                g.dim = 3;
                if (hp == 1.0 / 160.0) {
                    const auto d3 = make_discretization<3>(g, hp, hp / r, m);
                    if (d3.global_dofs.n_dofs <= 500)
                        run(d3);
                }
            }
    return {bad == 0 && cases > 0, std::to_string(cases) + " (mesh, kappa, theta) cases with n_+ <= 500; max "
                                                            "relative |rho_power - rho_dense| = " +
                                       fmt("%.2e", worst) + " (tol 1e-6)"};
}

// 5. linear law of the six kappa sweeps.
Outcome criterion_5()
{
    std::ostringstream os;
    bool pass = true;
    for (int m : {1, 2})
        for (Real r : {2.0, 4.0, 8.0}) {
            const auto t0 = Clock::now();
            const auto cfg = standard_sweep(m, r);
            const auto res = sweep_kappa(cfg, cfg.h_minus[0]);
            const double t = seconds_since(t0);
            if (!res.fit) {
                pass = false;
                os << res.case_id << " no fit; ";
                continue;
            }
            const auto& f = *res.fit;
            const bool ok = std::abs(f.b2) <= 1e-2 * std::abs(f.b1) && std::abs(f.a0 + f.a1) <= 1e-2 * std::abs(f.a1) &&
                            f.r2_linear >= 0.999 && t < 300.0;
            pass = pass && ok;
            os << res.case_id << (ok ? " ok" : " BAD") << " (|b2/b1| " << fmt("%.1e", std::abs(f.b2 / f.b1))
               << ", |a0+a1|/|a1| " << fmt("%.1e", std::abs(f.a0 + f.a1) / std::abs(f.a1)) << ", R2 "
               << fmt("%.6f", f.r2_linear) << ", C~ " << fmt("%.4f", f.C_tilde) << ", " << fmt("%.1f", t)
               << " s); ";
        }
    return {pass, os.str() + "tols 1e-2, 1e-2, R2 >= 0.999, 300 s per case"};
}

SpectralFit reference_case_fit()
{
    const auto cfg = standard_sweep(2, 8.0);
    return *sweep_kappa(cfg, cfg.h_minus[0]).fit;
}

struct ThresholdRun {
    Real target = 0.0;
    Real kappa_ratio = 0.0;
    Real rho = 0.0;
    DDReport rep;
};

ThresholdRun threshold_run(const SpectralFit& fit, Real target, Real theta = 1.0)
{
    GeometryConfig g;
    const auto d = make_discretization<2>(g, 1.0 / 160.0, 1.0 / 1280.0, 2);
    ThresholdRun r;
    r.target = target;
    r.kappa_ratio = kappa_ratio_for_rho(fit, target);
    const auto ops = laser_ops(d, r.kappa_ratio);
    const SubdomainSolvers s(ops, SolverConfig{});
    r.rho = estimate_rho(s, theta).rho;
    DDConfig cfg;
    cfg.theta = theta;
    r.rep = run_two_level_dd(s, cfg);
    return r;
}

// 6. convergence threshold pattern on the d=2, m=2, h_+/h_- = 8 case.
Outcome criterion_6()
{
    const auto fit = reference_case_fit();
    std::ostringstream os;
    os << "C~ " << fmt("%.4f", fit.C_tilde) << "; ";
    bool all_conv = true, increasing = true, band = true;
    int prev = -1;
    for (Real target : {0.25, 0.5, 0.75, 0.95}) {
        const auto r = threshold_run(fit, target);
        all_conv = all_conv && r.rep.converged;
        increasing = increasing && r.rep.iterations > prev;
        prev = r.rep.iterations;
        const Real model = std::log(1e-8) / std::log(r.rho);
        const Real dev = (r.rep.iterations - model) / model;
        const bool in_band = !(r.rho >= 0.2 && r.rho <= 0.97) || std::abs(dev) <= 0.3;
        band = band && in_band;
        os << "rho " << target << ": x " << fmt("%.3f", r.kappa_ratio) << ", rho_meas " << fmt("%.4f", r.rho) << ", "
           << r.rep.iterations << " its vs model " << fmt("%.1f", model) << " (" << fmt("%+.0f%%", 100 * dev)
           << (in_band ? "" : " OUT") << "); ";
    }
    const auto div = threshold_run(fit, 1.05);
    const bool diverged = div.rep.status == DDStatus::Diverged;
    os << "rho 1.05: x " << fmt("%.3f", div.kappa_ratio) << " -> " << to_string(div.rep.status) << "; converged "
       << (all_conv ? "yes" : "no") << ", strictly increasing " << (increasing ? "yes" : "no")
       << ", +-30% band " << (band ? "yes" : "no");
    return {all_conv && increasing && diverged && band, os.str()};
}

// 7. theta = kappa_+/kappa_- just above the unrelaxed threshold.
Outcome criterion_7()
{
    const auto fit = reference_case_fit();
    std::ostringstream os;
    bool pass = true;
    for (Real target : {1.02, 1.05, 1.1}) {
        const Real x = kappa_ratio_for_rho(fit, target);
        const auto plain = threshold_run(fit, target, 1.0);
        const auto relaxed = threshold_run(fit, target, theta_empirical(x));
        const bool ok = relaxed.rep.converged && relaxed.rep.iterations <= 50;
        pass = pass && ok;
        os << "predicted rho " << target << " (x " << fmt("%.3f", x) << "): theta=1 " << to_string(plain.rep.status)
           << ", theta " << fmt("%.3f", 1.0 / x) << " " << to_string(relaxed.rep.status) << " in "
           << relaxed.rep.iterations << " its; ";
    }
    return {pass, os.str() + "limit 50 iterations"};
}

// 8. per-doubling increments of C~ for m = 1.
Outcome criterion_8()
{
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.m = 1;
    cfg.h_minus.clear();
    for (Real r : {2.0, 4.0, 8.0, 16.0})
        cfg.h_minus.push_back(cfg.h_plus / r);
    const auto res = sweep_mesh_ratio(cfg);
    const double t = seconds_since(t0);
    const auto& gfit = res.growth;
    std::ostringstream os;
    os << "C~ at ratios 2/4/8/16: ";
    for (Real c : gfit.C_tilde)
        os << fmt("%.4f", c) << " ";
    os << "; increments ";
    for (Real dc : gfit.increments)
        os << fmt("%.4f", dc) << " ";
    const Real spread = gfit.increment_spread();
    os << "; max/min after the first doubling " << fmt("%.3f", spread) << " (limit 1.25); slope vs log2 ratio "
       << fmt("%.4f", gfit.slope) << "; " << fmt("%.1f", t) << " s (limit 900 s)";
    return {spread <= 1.25 && t < 900.0, os.str()};
}

// 9. energy seminorm of homogeneous-data iterates decreases at every step.
Outcome criterion_9()
{
    bool pass = true;
    Real worst = 0.0;
    int steps = 0;
    for (int m : {1, 2})
        for (Real x : {0.5, 1.5}) {
            GeometryConfig g;
            const auto d = make_discretization<2>(g, 1.0 / 160.0, 1.0 / 640.0, m);
            ProblemData<2> data;
            data.T_D = 0.0;
            CouplingParams p;
            p.kappa_minus = x;
            const auto ops = build_coupled_operators(d, data, p);
            const SparseMatrix K = assemble_stiffness(d.global, d.global_dofs, 1.0);
            std::mt19937 rng(1000 + m);
            std::uniform_real_distribution<Real> u(-1.0, 1.0);
            DenseVector T0(ops.n_plus());
            for (int i = 0; i < T0.size(); ++i)
                T0[i] = u(rng);
            for (int i : ops.dirichlet_plus)
                T0[i] = 0.0;
            DDConfig cfg;
            cfg.max_iters = 30;
            cfg.tol = std::numeric_limits<Real>::min();
            DDOptions opts;
            opts.initial_guess = T0;
            std::vector<Real> e;
            opts.observer = [&](int, const DenseVector& T) { e.push_back(std::sqrt(T.dot(K * T))); };
            run_two_level_dd(ops, cfg, opts);
            for (std::size_t k = 1; k < e.size() && e[k - 1] > 1e-250; ++k) {
                const Real ratio = e[k] / e[k - 1];
                worst = std::max(worst, ratio);
                pass = pass && ratio < 1.0;
                ++steps;
            }
        }
    return {pass, std::to_string(steps) + " steps over m=1,2 and x=0.5,1.5; max energy ratio " + fmt("%.4f", worst) +
                      " (must be < 1)"};
}

// 10. smooth manufactured solution on the monolithic (fitted) solver.
Outcome criterion_10()
{
    const auto t0 = Clock::now();
    GeometryConfig g;
    const Real L = g.L, H = g.H, pi = std::numbers::pi;
    ProblemData<2> data;
    data.T_D = 0.0;
    // T = sin(pi x/L) y exp(y/H): zero on the sides and bottom
    data.source = [=](const Point<2>& x) {
        const Real s = std::sin(pi * x[0] / L), y = x[1], e = std::exp(y / H);
        return s * e * (pi * pi / (L * L) * y - 2.0 / H - y / (H * H));
    };
    data.flux = [=](const Point<2>& x) { return std::sin(pi * x[0] / L) * 2.0 * std::exp(1.0); };
    auto exact = [=](const Point<2>& x) { return std::sin(pi * x[0] / L) * x[1] * std::exp(x[1] / H); };
    std::ostringstream os;
    bool pass = true;
    for (int m : {1, 2}) {
        std::vector<Real> err;
        for (Real h : {1.0 / 320.0, 1.0 / 640.0, 1.0 / 1280.0, 1.0 / 2560.0}) {
            const auto r = run_fitted_reference<2>(g, h, h, 1.0, 1.0, m, RefinementMode::UniformFine, data);
            err.push_back(l2_error<2>(r.mesh, r.dofs, r.solution, exact));
        }
        os << "m=" << m << " orders";
        for (std::size_t i = 1; i < err.size(); ++i) {
            const Real o = std::log2(err[i - 1] / err[i]);
            pass = pass && o >= m + 0.9;
            os << " " << fmt("%.3f", o);
        }
        os << " (min " << m + 0.9 << "); ";
    }
    const double t = seconds_since(t0);
    os << fmt("%.1f", t) << " s (limit 120 s)";
    return {pass && t < 120.0, os.str()};
}

// 11. nonlinear: oracle agreement and the kappa_{+,B} trend.
Outcome criterion_11()
{
    GeometryConfig g;
    const auto data = laser_problem<2>(g);
    const Real TD = data.T_D, hp = 1.0 / 160.0, hm = hp / 2.0;
    const int m = 1;
    struct Curves {
        const char* name;
        MaterialCurve a, b;
    };
    const std::vector<Curves> suite{
        {"linear", MaterialCurve::linear(1.0, 1e-4, TD, 5000.0), MaterialCurve::linear(0.25, 8e-4, TD, 5000.0)},
        {"steep", MaterialCurve::linear(1.0, 1e-4, TD, 5000.0), MaterialCurve::linear(0.25, 2e-3, TD, 5000.0)},
        {"piecewise", MaterialCurve({{TD, 1.0}, {600, 1.1}, {2000, 1.5}}),
         MaterialCurve({{TD, 0.2}, {400, 0.3}, {700, 0.4}})}};
    const auto d = make_discretization<2>(g, hp, hm, m);
    const auto grid = linspace(0.1, 0.8, 8);
    const Real step = grid[1] - grid[0];
    std::ostringstream os;
    bool pass = true;
    for (const auto& c : suite) {
        NonlinearConfig nl;
        const auto dd = picard_two_level(d, data, c.a, c.b, nl, DDConfig{});
        const auto mono = picard_monolithic<2>(g, hp, hm, m, RefinementMode::UniformFine, data, c.a, c.b, nl);
        auto rel = [&](const FittedResult<2>& f, const DenseVector& Tp, const DenseVector& Tm) {
            const Real n = l2_error<2>(f.mesh, f.dofs, f.solution, [](const Point<2>&) { return 0.0; });
            return composite_l2_distance<2>(d, Tp, Tm, f.mesh, f.dofs, f.solution) / n;
        };
        CouplingParams p;
        p.kappa_plus = c.a(TD);
        p.kappa_minus = c.b(TD);
        const auto [Tp, Tm] = run_coupled_direct(build_coupled_operators(d, data, p));
        const auto lin = run_fitted_reference<2>(g, hp, hm, p.kappa_plus, p.kappa_minus, m,
                                                 RefinementMode::UniformFine, data);
        const Real bound = 10.0 * nl.picard_tol + 2.0 * rel(lin, Tp, Tm);
        const Real gap = rel(mono.fitted, dd.T_plus, dd.T_minus);
        const bool agree = gap <= bound;

        const Real mu = strip_mean_conductivity(mono.fitted, g, c.b);
        nl.inner_sweeps = 1;
        const auto rows = sweep_kappa_plus_B(d, data, c.a, c.b, grid, nl, DDConfig{});
        std::size_t nearest = 0, first_min = 0;
        int global_min = 1 << 30;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (std::abs(grid[i] - mu) < std::abs(grid[nearest] - mu))
                nearest = i;
            if (rows[i].converged && rows[i].picard_iterations < global_min) {
                global_min = rows[i].picard_iterations;
                first_min = i;
            }
        }
        int window_min = 1 << 30;
        for (std::size_t i = nearest > 0 ? nearest - 1 : 0; i <= std::min(nearest + 1, rows.size() - 1); ++i)
            if (rows[i].converged)
                window_min = std::min(window_min, rows[i].picard_iterations);
        const bool trend = window_min == global_min;
        pass = pass && agree && trend;
        os << c.name << ": DD-vs-mono " << fmt("%.2e", gap) << " <= " << fmt("%.2e", bound) << (agree ? "" : " NO")
           << ", Picard its " << dd.picard_iterations << "/" << mono.picard_iterations << ", mu " << fmt("%.3f", mu)
           << " (nearest " << fmt("%.1f", grid[nearest]) << ", step " << fmt("%.1f", step) << "), counts";
        for (const auto& r : rows)
            os << " " << r.picard_iterations << (r.converged ? "" : "x");
        os << ", first argmin " << fmt("%.1f", grid[first_min]) << (trend ? "" : " NO") << "; ";
    }
    return {pass, os.str()};
}

// 12. 3D smoke test.
Outcome criterion_12()
{
    const auto t0 = Clock::now();
    GeometryConfig g;
    g.dim = 3;
    const auto d = make_discretization<3>(g, 1.0 / 160.0, 1.0 / 320.0, 1);
    CouplingParams p;
    p.kappa_minus = 0.5;
    const auto ops = build_coupled_operators(d, laser_problem<3>(g), p);
    const auto rep = run_two_level_dd(ops, DDConfig{});
    const Real res = rep.converged ? block_residual(ops, rep.T_plus, rep.T_minus) : 1.0;
    const double t = seconds_since(t0);
    return {rep.converged && res <= 1e-7 && t < 300.0,
            std::string(to_string(rep.status)) + " in " + std::to_string(rep.iterations) + " its (n_+ " +
                std::to_string(ops.n_plus()) + ", n_- " + std::to_string(ops.n_minus()) + "), block residual " +
                fmt("%.2e", res) + " (tol 1e-7); " + fmt("%.1f", t) + " s (limit 300 s)"};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3,  criterion_4,
                                                         criterion_5, criterion_6, criterion_7,  criterion_8,
                                                         criterion_9, criterion_10, criterion_11, criterion_12};
    std::vector<int> which;
    if (argc > 1) {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::cerr << "usage: acceptance [1-12]\n";
            return 2;
        }
        which.push_back(n);
    } else {
        for (int i = 1; i <= static_cast<int>(criteria.size()); ++i)
            which.push_back(i);
    }
    bool all = true;
    for (int n : which) {
        Outcome o;
        try {
            o = criteria[n - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail << std::endl;
    }
    return all ? 0 : 1;
}
