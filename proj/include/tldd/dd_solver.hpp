#pragma once

#include "tldd/common.hpp"
#include "tldd/coupling.hpp"
#include "tldd/linalg.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace tldd {

struct DDConfig {
    Real theta = 1.0;
    Real tol = 1e-8;
    int max_iters = 5000;
    Real divergence_guard = 1e6;
    SolverConfig inner;

    void validate() const
    {
        TLDD_THROW_IF(!(theta > 0.0 && theta <= 1.0), ErrorCode::InvalidConfig, "theta must lie in (0,1]");
        TLDD_THROW_IF(!(tol > 0.0), ErrorCode::InvalidConfig, "tol must be positive");
        TLDD_THROW_IF(max_iters < 1, ErrorCode::InvalidConfig, "max_iters must be positive");
        TLDD_THROW_IF(!(divergence_guard > 1.0), ErrorCode::InvalidConfig, "divergence_guard must exceed 1");
    }
};

enum class DDStatus { Converged, Diverged, MaxIters };

inline const char* to_string(DDStatus s)
{
    switch (s) {
    case DDStatus::Converged: return "converged";
    case DDStatus::Diverged: return "diverged";
    case DDStatus::MaxIters: return "max-iters";
    }
    return "?";
}

struct DDReport {
    DDStatus status = DDStatus::MaxIters;
    bool converged = false;
    int iterations = 0;
    std::vector<Real> residual_history; ///< ||T_+^{k+1} - T_+^k|| / ||T_+^{k+1}||
    std::vector<Real> change_history;   ///< ||T_+^{k+1} - T_+^k||
    DenseVector T_plus;
    DenseVector T_minus; ///< local solve driven by the returned T_plus
    std::optional<Real> rho_estimate; ///< geometric mean ratio of the last changes
    long local_inner_iterations = 0;
    long global_inner_iterations = 0;
    double time_s = 0.0;
};

/// Factorized (or preconditioned) solvers for K_+ and K_-, reused across steps.
class SubdomainSolvers {
public:
    SubdomainSolvers(const CoupledOperators& ops, const SolverConfig& cfg)
        : ops_(&ops)
        , plus_(ops.K_plus, cfg, true)
        , minus_(ops.K_minus, cfg, true)
    {
    }

    /// Step 0: K_+ x = f_+.
    [[nodiscard]] DenseVector step0() const { return plus_.solve(ops_->f_plus).x; }

    /// K_- x = f_- - D T_+.
    [[nodiscard]] DenseVector local_step(const DenseVector& T_plus, const DenseVector* guess = nullptr) const
    {
        TLDD_THROW_IF(T_plus.size() != ops_->n_plus(), ErrorCode::DimensionMismatch, "T_plus size mismatch");
        return solve_from(minus_, ops_->f_minus - ops_->D * T_plus, guess);
    }

    /// K_+ x = f_+ - S T_-.
    [[nodiscard]] DenseVector global_step(const DenseVector& T_minus, const DenseVector* guess = nullptr) const
    {
        TLDD_THROW_IF(T_minus.size() != ops_->n_minus(), ErrorCode::DimensionMismatch, "T_minus size mismatch");
        return solve_from(plus_, ops_->f_plus - ops_->S * T_minus, guess);
    }

    /// M v = K_+^{-1} S K_-^{-1} D v.
    [[nodiscard]] DenseVector apply_iteration_operator(const DenseVector& v) const
    {
        return plus_(ops_->S * minus_(ops_->D * v));
    }

    [[nodiscard]] const LinearSolver& plus() const { return plus_; }
    [[nodiscard]] const LinearSolver& minus() const { return minus_; }
    [[nodiscard]] const CoupledOperators& ops() const { return *ops_; }

private:
    /// A warm start is applied as a correction: the solver sees the defect
    /// b - A guess, so a relative tolerance follows the size of the DD update
    /// rather than the penalty-scaled right-hand side.
    static DenseVector solve_from(const LinearSolver& s, const DenseVector& b, const DenseVector* guess)
    {
        if (!guess)
            return s.solve(b).x;
        return *guess + s.solve(b - s.matrix() * *guess).x;
    }

    const CoupledOperators* ops_;
    LinearSolver plus_;
    LinearSolver minus_;
};

inline DenseVector step0(const CoupledOperators& ops, const SolverConfig& cfg = {})
{
    return SubdomainSolvers(ops, cfg).step0();
}

inline DenseVector local_step(const CoupledOperators& ops, const DenseVector& T_plus, const SolverConfig& cfg = {})
{
    return SubdomainSolvers(ops, cfg).local_step(T_plus);
}

inline DenseVector global_step(const CoupledOperators& ops, const DenseVector& T_minus, const SolverConfig& cfg = {})
{
    return SubdomainSolvers(ops, cfg).global_step(T_minus);
}

struct DDOptions {
    std::optional<DenseVector> initial_guess; ///< default: step 0
    std::function<void(int, const DenseVector&)> observer;
};

/// T_+^{k+1} = theta G(L(T_+^k)) + (1 - theta) T_+^k until the relative change
/// drops below tol. Divergence is declared when the absolute change exceeds
/// divergence_guard times the first one.
inline DDReport run_two_level_dd(const SubdomainSolvers& solvers, const DDConfig& cfg, const DDOptions& opts = {})
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    solvers.plus().reset_counters();
    solvers.minus().reset_counters();
    DDReport rep;
    DenseVector T = opts.initial_guess ? *opts.initial_guess : solvers.step0();
    TLDD_THROW_IF(T.size() != solvers.ops().n_plus(), ErrorCode::DimensionMismatch, "initial guess size mismatch");
    if (opts.observer)
        opts.observer(0, T);
    DenseVector Tm;
    Real first_change = 0.0;
    bool iterative = solvers.plus().config().method == SolverMethod::ConjugateGradient ||
                     solvers.plus().config().method == SolverMethod::Gmres;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        Tm = solvers.local_step(T, iterative && Tm.size() ? &Tm : nullptr);
        const DenseVector Tt = solvers.global_step(Tm, iterative ? &T : nullptr);
        DenseVector Tn = cfg.theta * Tt + (1.0 - cfg.theta) * T;
        const Real change = (Tn - T).norm();
        const Real nrm = Tn.norm();
        const Real rel = change / (nrm > 0.0 ? nrm : 1.0);
        rep.residual_history.push_back(rel);
        rep.change_history.push_back(change);
        rep.iterations = k;
        T = std::move(Tn);
        if (opts.observer)
            opts.observer(k, T);
        if (k == 1)
            first_change = change;
        if (rel < cfg.tol) {
            rep.status = DDStatus::Converged;
            break;
        }
        if (!std::isfinite(rel) || (first_change > 0.0 && change > cfg.divergence_guard * first_change)) {
            rep.status = DDStatus::Diverged;
            break;
        }
    }
    rep.converged = rep.status == DDStatus::Converged;
    const auto& h = rep.change_history;
    if (h.size() >= 4) {
        const std::size_t n = std::min<std::size_t>(5, h.size() - 2);
        const std::size_t last = h.size() - 1;
        if (h[last - n] > 0.0 && h[last] > 0.0)
            rep.rho_estimate = std::pow(h[last] / h[last - n], 1.0 / static_cast<Real>(n));
    }
    rep.T_plus = T;
    if (std::isfinite(T.norm()))
        rep.T_minus = solvers.local_step(T);
    rep.local_inner_iterations = solvers.minus().total_iterations();
    rep.global_inner_iterations = solvers.plus().total_iterations();
    rep.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline DDReport run_two_level_dd(const CoupledOperators& ops, const DDConfig& cfg, const DDOptions& opts = {})
{
    const SubdomainSolvers solvers(ops, cfg.inner);
    return run_two_level_dd(solvers, cfg, opts);
}

/// Direct solve of the full block system.
inline std::pair<DenseVector, DenseVector> run_coupled_direct(const CoupledOperators& ops)
{
    const SparseMatrix A = block_matrix(ops);
    SolverConfig cfg;
    cfg.method = SolverMethod::SparseDirect;
    const DenseVector x = LinearSolver(A, cfg).solve(block_rhs(ops)).x;
    return {x.head(ops.n_plus()), x.tail(ops.n_minus())};
}

/// sum_{j<k} M^j K_+^{-1}(f_+ - S K_-^{-1} f_-) + M^k T_+^0  with
/// M = K_+^{-1} S K_-^{-1} D, evaluated by operator applications.
inline DenseVector neumann_partial_sum(const SubdomainSolvers& solvers, int k, const DenseVector& T_plus_0)
{
    TLDD_THROW_IF(k < 1, ErrorCode::InvalidConfig, "k must be at least 1");
    const auto& ops = solvers.ops();
    const DenseVector c = solvers.plus()(ops.f_plus - ops.S * solvers.minus()(ops.f_minus));
    DenseVector term = c;
    DenseVector acc = c;
    for (int j = 1; j < k; ++j) {
        term = solvers.apply_iteration_operator(term);
        acc += term;
    }
    DenseVector tail = T_plus_0;
    for (int j = 0; j < k; ++j)
        tail = solvers.apply_iteration_operator(tail);
    return acc + tail;
}

inline DenseVector neumann_partial_sum(const CoupledOperators& ops, int k, const DenseVector& T_plus_0)
{
    return neumann_partial_sum(SubdomainSolvers(ops, SolverConfig{}), k, T_plus_0);
}

/// Power-iteration estimate of rho((1-theta) I + theta M).
inline PowerIterationResult estimate_rho(const SubdomainSolvers& solvers, Real theta, Real tol = 1e-10,
                                         int max_iters = 5000, std::uint64_t seed = kDefaultPowerSeed)
{
    const auto n = static_cast<int>(solvers.ops().n_plus());
    return power_iteration_rho(
        [&](const DenseVector& v, DenseVector& out) { out = solvers.apply_iteration_operator(v); }, n, theta, tol,
        max_iters, seed);
}

} // namespace tldd
