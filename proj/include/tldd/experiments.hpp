#pragma once

#include "tldd/common.hpp"
#include "tldd/coupling.hpp"
#include "tldd/dd_solver.hpp"
#include "tldd/fitted.hpp"
#include "tldd/linalg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tldd {

/// kappa_-^l = 0.5^l, l = 1..8
inline std::vector<Real> default_kappa_sweep()
{
    std::vector<Real> k;
    for (int l = 1; l <= 8; ++l)
        k.push_back(std::pow(0.5, l));
    return k;
}

struct ExperimentConfig {
    GeometryConfig geom;
    int m = 1;
    Real h_plus = 1.0 / 160.0;
    std::vector<Real> h_minus{1.0 / 320.0};
    Real kappa_plus = 1.0;
    std::vector<Real> kappa_minus = default_kappa_sweep();
    std::vector<Real> theta{1.0};
    /// alpha = alpha_factor * max(1, kappa_-) / h_-, unless alpha is set
    Real alpha_factor = 1e6;
    std::optional<Real> alpha;
    DDConfig dd;
    Real power_tol = 1e-10;
    int power_max_iters = 5000;
    std::uint64_t seed = kDefaultPowerSeed;
    RefinementMode refinement = RefinementMode::UniformFine;
    std::string output_dir = "results";

    void validate() const
    {
        geom.validate();
        TLDD_THROW_IF(h_minus.empty() || kappa_minus.empty() || theta.empty(), ErrorCode::InvalidConfig,
                      "h_minus, kappa_minus and theta lists must be non-empty");
        TLDD_THROW_IF(!(h_plus > 0.0) || !(kappa_plus > 0.0) || !(alpha_factor > 0.0), ErrorCode::InvalidConfig,
                      "h_plus, kappa_plus and alpha_factor must be positive");
        for (Real h : h_minus)
            TLDD_THROW_IF(!(h > 0.0), ErrorCode::InvalidConfig, "h_minus entries must be positive");
        for (Real k : kappa_minus)
            TLDD_THROW_IF(!(k > 0.0), ErrorCode::InvalidConfig, "kappa_minus entries must be positive");
        for (Real t : theta)
            TLDD_THROW_IF(!(t > 0.0 && t <= 1.0), ErrorCode::InvalidConfig, "theta entries must lie in (0,1]");
        TLDD_THROW_IF(m != 1 && m != 2, ErrorCode::UnsupportedDegree, "m must be 1 or 2");
        dd.validate();
    }

    [[nodiscard]] Real alpha_for(Real kappa_minus_value, Real h_minus_value) const
    {
        return alpha ? *alpha : alpha_factor * std::max(1.0, kappa_minus_value) / h_minus_value;
    }
};

inline Real h_ratio(Real h_plus, Real h_minus) { return std::round(h_plus / h_minus * 1e9) / 1e9; }

inline std::string case_id(int dim, int m, Real ratio)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "d%d_m%d_r%g", dim, m, ratio);
    return buf;
}

struct SweepRecord {
    std::string case_id;
    int dim = 2;
    int m = 1;
    Real h_ratio = 1.0;
    Real kappa_ratio = 1.0; ///< kappa_- / kappa_+
    Real theta = 1.0;
    Real rho_measured = 0.0;
    Real rho_predicted = std::numeric_limits<Real>::quiet_NaN();
    Real rayleigh = 0.0; ///< signed dominant eigenvalue estimate
    int iterations = 0;
    bool converged = false;
    DDStatus status = DDStatus::MaxIters;
    Real block_residual = std::numeric_limits<Real>::quiet_NaN();
    double time_s = 0.0;
};

/// What a backend reports for one (h_-, kappa_-, theta) point.
struct SweepPoint {
    Real rho = 0.0;
    Real rayleigh = 0.0;
    int iterations = 0;
    DDStatus status = DDStatus::MaxIters;
    Real block_residual = std::numeric_limits<Real>::quiet_NaN();
};

using SweepBackend = std::function<SweepPoint(const ExperimentConfig&, Real h_minus, Real kappa_minus, Real theta)>;

namespace detail {

template <int Dim>
SweepPoint assembled_point(const ExperimentConfig& cfg, Real h_minus, Real kappa_minus, Real theta)
{
    const auto disc = make_discretization<Dim>(cfg.geom, cfg.h_plus, h_minus, cfg.m);
    CouplingParams p;
    p.kappa_plus = cfg.kappa_plus;
    p.kappa_minus = kappa_minus;
    p.alpha = cfg.alpha_for(kappa_minus, h_minus);
    const auto ops = build_coupled_operators(disc, laser_problem<Dim>(cfg.geom), p);
    const SubdomainSolvers solvers(ops, cfg.dd.inner);
    SweepPoint pt;
    const auto pr = estimate_rho(solvers, theta, cfg.power_tol, cfg.power_max_iters, cfg.seed);
    pt.rho = pr.rho;
    pt.rayleigh = pr.rayleigh;
    DDConfig dd = cfg.dd;
    dd.theta = theta;
    const auto rep = run_two_level_dd(solvers, dd);
    pt.iterations = rep.iterations;
    pt.status = rep.status;
    if (rep.converged)
        pt.block_residual = tldd::block_residual(ops, rep.T_plus, rep.T_minus);
    return pt;
}

} // namespace detail

/// Assemble the laser problem, estimate rho by power iteration and run the DD.
inline SweepPoint assembled_backend(const ExperimentConfig& cfg, Real h_minus, Real kappa_minus, Real theta)
{
    return cfg.geom.dim == 2 ? detail::assembled_point<2>(cfg, h_minus, kappa_minus, theta)
                             : detail::assembled_point<3>(cfg, h_minus, kappa_minus, theta);
}

struct SweepResult {
    std::string case_id;
    Real h_ratio = 1.0;
    std::vector<SweepRecord> records;
    std::optional<SpectralFit> fit;
    std::vector<std::string> warnings;
};

/// Predicted rho((1-theta) I + theta M) from the fitted signed eigenvalue
/// a0 + a1 x; the kernel of M contributes |1 - theta|.
inline Real predict_relaxed_rho(const SpectralFit& fit, Real kappa_ratio, Real theta)
{
    const Real lam = fit.a0 + fit.a1 * kappa_ratio;
    return std::max(std::abs(1.0 - theta + theta * lam), std::abs(1.0 - theta));
}

/// kappa_- sweep for one h_-: records for every (kappa_-, theta) and the fit of
/// the theta = 1 points with kappa_-/kappa_+ in (0, 1].
inline SweepResult sweep_kappa(const ExperimentConfig& cfg, Real h_minus, const SweepBackend& backend = assembled_backend)
{
    cfg.validate();
    SweepResult out;
    out.h_ratio = h_ratio(cfg.h_plus, h_minus);
    out.case_id = case_id(cfg.geom.dim, cfg.m, out.h_ratio);
    std::vector<Real> kappas = cfg.kappa_minus;
    std::sort(kappas.begin(), kappas.end(), std::greater<>());
    std::vector<std::pair<Real, Real>> pts;
    for (Real km : kappas)
        for (Real theta : cfg.theta) {
            const auto t0 = std::chrono::steady_clock::now();
            const SweepPoint p = backend(cfg, h_minus, km, theta);
            SweepRecord r;
            r.case_id = out.case_id;
            r.dim = cfg.geom.dim;
            r.m = cfg.m;
            r.h_ratio = out.h_ratio;
            r.kappa_ratio = km / cfg.kappa_plus;
            r.theta = theta;
            r.rho_measured = p.rho;
            r.rayleigh = p.rayleigh;
            r.iterations = p.iterations;
            r.status = p.status;
            r.converged = p.status == DDStatus::Converged;
            r.block_residual = p.block_residual;
            r.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (theta == 1.0 && r.kappa_ratio <= 1.0)
                pts.emplace_back(r.kappa_ratio, r.rho_measured);
            out.records.push_back(r);
        }
    try {
        out.fit = fit_spectral_law(pts);
        for (auto& r : out.records)
            r.rho_predicted = predict_relaxed_rho(*out.fit, r.kappa_ratio, r.theta);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient)
            throw;
        out.warnings.push_back(std::string("fit skipped: ") + e.what());
    }
    return out;
}

/// kappa_-/kappa_+ at which the unrelaxed iteration stops converging.
inline Real predict_divergence_threshold(const SpectralFit& fit)
{
    TLDD_THROW_IF(!(fit.C_tilde > 0.0), ErrorCode::NonpositiveConstant, "C_tilde must be positive");
    return 1.0 / fit.C_tilde + 1.0;
}

/// kappa_-/kappa_+ > 1 for which the fitted law predicts rho.
inline Real kappa_ratio_for_rho(const SpectralFit& fit, Real rho)
{
    TLDD_THROW_IF(!(fit.C_tilde > 0.0), ErrorCode::NonpositiveConstant, "C_tilde must be positive");
    return 1.0 + rho / fit.C_tilde;
}

/// Growth of C_tilde with h_+/h_-: increments per doubling and the slope of
/// C_tilde against log2(h_+/h_-).
struct LogGrowthFit {
    std::vector<Real> ratios;
    std::vector<Real> C_tilde;
    std::vector<Real> increments; ///< C(r_{i+1}) - C(r_i)
    Real slope = 0.0;
    Real intercept = 0.0;

    /// max/min of the increments, skipping the first doubling
    [[nodiscard]] Real increment_spread() const
    {
        TLDD_THROW_IF(increments.size() < 2, ErrorCode::InsufficientRatios, "need at least two later increments");
        const auto [lo, hi] = std::minmax_element(increments.begin() + 1, increments.end());
        return *hi / *lo;
    }
};

inline LogGrowthFit fit_log_growth(std::span<const std::pair<Real, Real>> ratio_c)
{
    TLDD_THROW_IF(ratio_c.size() < 3, ErrorCode::InsufficientRatios, "need at least three mesh ratios");
    LogGrowthFit f;
    std::vector<std::pair<Real, Real>> pts;
    for (const auto& [r, c] : ratio_c) {
        f.ratios.push_back(r);
        f.C_tilde.push_back(c);
        pts.emplace_back(std::log2(r), c);
    }
    for (std::size_t i = 1; i < f.C_tilde.size(); ++i)
        f.increments.push_back(f.C_tilde[i] - f.C_tilde[i - 1]);
    const DenseVector c = least_squares_fit(pts, 1);
    f.intercept = c[0];
    f.slope = c[1];
    return f;
}

struct MeshSweepResult {
    std::vector<SweepResult> cases;
    LogGrowthFit growth;
};

inline MeshSweepResult sweep_mesh_ratio(const ExperimentConfig& cfg, const SweepBackend& backend = assembled_backend)
{
    TLDD_THROW_IF(cfg.h_minus.size() < 3, ErrorCode::InsufficientRatios, "need at least three mesh ratios");
    MeshSweepResult out;
    std::vector<Real> hs = cfg.h_minus;
    std::sort(hs.begin(), hs.end(), std::greater<>());
    std::vector<std::pair<Real, Real>> rc;
    for (Real h : hs) {
        out.cases.push_back(sweep_kappa(cfg, h, backend));
        const auto& c = out.cases.back();
        TLDD_THROW_IF(!c.fit, ErrorCode::RankDeficient, "no spectral fit for " + c.case_id);
        rc.emplace_back(c.h_ratio, c.fit->C_tilde);
    }
    out.growth = fit_log_growth(rc);
    return out;
}

/// theta = kappa_+/kappa_- for ratios >= 1 (the empirical rule), 1 otherwise.
inline Real theta_empirical(Real kappa_ratio) { return kappa_ratio > 1.0 ? 1.0 / kappa_ratio : 1.0; }

/// Minimizer of ((x-1)^2 + 1) theta^2 - 2 theta + 1, x = kappa_-/kappa_+.
inline Real theta_parabola(Real kappa_ratio)
{
    const Real d = kappa_ratio - 1.0;
    return 1.0 / (d * d + 1.0);
}

struct RelaxationRow {
    Real theta = 1.0;
    Real rho_relaxed = 0.0;
    int iterations = 0;
    DDStatus status = DDStatus::MaxIters;
    bool best = false;
};

/// For each theta: relaxed spectral radius and a DD run at one kappa_-. The
/// best row converges in the fewest iterations (ties: smaller rho).
inline std::vector<RelaxationRow> relaxation_study(const ExperimentConfig& cfg, Real h_minus, Real kappa_minus,
                                                   std::span<const Real> thetas,
                                                   const SweepBackend& backend = assembled_backend)
{
    TLDD_THROW_IF(thetas.empty(), ErrorCode::InvalidConfig, "theta list must be non-empty");
    std::vector<RelaxationRow> rows;
    int best = -1;
    for (Real t : thetas) {
        TLDD_THROW_IF(!(t > 0.0 && t <= 1.0), ErrorCode::InvalidConfig, "theta entries must lie in (0,1]");
        const SweepPoint p = backend(cfg, h_minus, kappa_minus, t);
        rows.push_back({t, p.rho, p.iterations, p.status, false});
        const auto& r = rows.back();
        if (r.status != DDStatus::Converged)
            continue;
        if (best < 0 || r.iterations < rows[best].iterations ||
            (r.iterations == rows[best].iterations && r.rho_relaxed < rows[best].rho_relaxed))
            best = static_cast<int>(rows.size()) - 1;
    }
    if (best >= 0)
        rows[best].best = true;
    return rows;
}

struct MonolithicRow {
    Real kappa_ratio = 1.0;
    Real h_ratio = 1.0;
    int dd_iterations = 0;
    DDStatus dd_status = DDStatus::MaxIters;
    long dd_local_inner = 0;
    long dd_global_inner = 0;
    double dd_time_s = 0.0;
    int mono_iterations = 0;
    bool mono_converged = false;
    int mono_dofs = 0;
    double mono_time_s = 0.0;
    Real l2_difference = std::numeric_limits<Real>::quiet_NaN(); ///< ||T_dd - T_fit|| / ||T_fit||
};

/// DD (inner Krylov solves) against the fitted monolithic Krylov solve at the
/// same tolerance, one row per (h_-, kappa_-).
template <int Dim>
std::vector<MonolithicRow> compare_monolithic(const ExperimentConfig& cfg, const SolverConfig& krylov)
{
    cfg.validate();
    std::vector<MonolithicRow> rows;
    const auto data = laser_problem<Dim>(cfg.geom);
    for (Real hm : cfg.h_minus) {
        const auto disc = make_discretization<Dim>(cfg.geom, cfg.h_plus, hm, cfg.m);
        for (Real km : cfg.kappa_minus) {
            MonolithicRow row;
            row.kappa_ratio = km / cfg.kappa_plus;
            row.h_ratio = h_ratio(cfg.h_plus, hm);
            const auto t0 = std::chrono::steady_clock::now();
            CouplingParams p;
            p.kappa_plus = cfg.kappa_plus;
            p.kappa_minus = km;
            p.alpha = cfg.alpha_for(km, hm);
            const auto ops = build_coupled_operators(disc, data, p);
            DDConfig dd = cfg.dd;
            dd.inner = krylov;
            DDReport rep;
            bool inner_failed = false;
            try {
                rep = run_two_level_dd(ops, dd);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoConvergence)
                    throw;
                inner_failed = true;
            }
            row.dd_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.dd_iterations = rep.iterations;
            row.dd_status = inner_failed ? DDStatus::MaxIters : rep.status;
            row.dd_local_inner = rep.local_inner_iterations;
            row.dd_global_inner = rep.global_inner_iterations;

            const auto t1 = std::chrono::steady_clock::now();
            auto fit = run_fitted_reference<Dim>(cfg.geom, cfg.h_plus, hm, cfg.kappa_plus, km, cfg.m, cfg.refinement,
                                                 data, krylov);
            row.mono_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
            row.mono_iterations = fit.iterations;
            row.mono_converged = fit.converged;
            row.mono_dofs = fit.dofs.n_dofs;
            if (fit.converged && rep.converged) {
                const Real d = composite_l2_distance<Dim>(disc, rep.T_plus, rep.T_minus, fit.mesh, fit.dofs,
                                                          fit.solution);
                const Real n = l2_error<Dim>(fit.mesh, fit.dofs, fit.solution, [](const Point<Dim>&) { return 0.0; });
                row.l2_difference = d / n;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace tldd
