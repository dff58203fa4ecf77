// Laser-heated block with a thin low-conductivity layer under the top
// surface: solve it with the two-level DD, check against the coupled direct
// solve, then relax a case that diverges without relaxation.

#include "tldd/tldd.hpp"

#include <iostream>

using namespace tldd;

int main()
{
    GeometryConfig geom; // 1/40 x 1/40 block, layer of height 1/160
    const auto disc = make_discretization<2>(geom, 1.0 / 160.0, 1.0 / 640.0, 2);
    const auto data = laser_problem<2>(geom);

    CouplingParams p;
    p.kappa_plus = 1.0;
    p.kappa_minus = 0.25;
    const auto ops = build_coupled_operators(disc, data, p);

    const auto rep = run_two_level_dd(ops, DDConfig{});
    const auto [Tp, Tm] = run_coupled_direct(ops);
    const SubdomainSolvers solvers(ops, SolverConfig{});
    std::cout << "kappa_-/kappa_+ = 0.25: " << to_string(rep.status) << " in " << rep.iterations
              << " iterations, rho = " << estimate_rho(solvers, 1.0).rho
              << ", |T_dd - T_direct| = " << (rep.T_plus - Tp).cwiseAbs().maxCoeff()
              << ", peak temperature " << rep.T_plus.maxCoeff() << " K\n";

    // kappa_- = 4 kappa_+ is past the divergence threshold for this mesh pair
    p.kappa_minus = 4.0;
    const auto hot = build_coupled_operators(disc, data, p);
    for (Real theta : {1.0, theta_empirical(4.0)}) {
        DDConfig cfg;
        cfg.theta = theta;
        const auto r = run_two_level_dd(hot, cfg);
        std::cout << "kappa_-/kappa_+ = 4, theta = " << theta << ": " << to_string(r.status) << " after "
                  << r.iterations << " iterations\n";
    }
}
