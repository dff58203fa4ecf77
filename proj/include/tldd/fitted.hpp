#pragma once

#include "tldd/common.hpp"
#include "tldd/coupling.hpp"
#include "tldd/fem.hpp"
#include "tldd/linalg.hpp"
#include "tldd/mesh.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tldd {

enum class RefinementMode { UniformFine, Graded };

inline const char* to_string(RefinementMode m) { return m == RefinementMode::UniformFine ? "uniform-fine" : "graded"; }

inline RefinementMode parse_refinement_mode(const std::string& s)
{
    if (s == "uniform-fine")
        return RefinementMode::UniformFine;
    if (s == "graded")
        return RefinementMode::Graded;
    throw Error(ErrorCode::InvalidConfig, "unknown refinement mode '" + s + "'");
}

namespace detail {

/// 2D conforming mesh: rows of height h_minus in the strip, a band of
/// transition rows below gamma_i in which every row doubles the cell size
/// (one fine midpoint per coarse cell on its upper edge), and uniform rows of
/// width h_plus further down.
inline StructuredMesh<2> build_graded_mesh_2d(const GeometryConfig& geom, Real h_plus, Real h_minus)
{
    const int nx_fine = checked_divisions(geom.L, h_minus, "L");
    const int nx_coarse = checked_divisions(geom.L, h_plus, "L");
    const int n_strip = checked_divisions(geom.H_minus, h_minus, "H_minus");
    TLDD_THROW_IF(nx_fine % nx_coarse != 0, ErrorCode::NonDivisibleSpacing, "h_plus must be a multiple of h_minus");
    int levels = 0;
    for (int r = nx_fine / nx_coarse; r > 1; r /= 2) {
        TLDD_THROW_IF(r % 2 != 0, ErrorCode::NonDivisibleSpacing, "graded mode needs h_plus/h_minus = 2^k");
        ++levels;
    }
    const Real y_gamma = geom.interface_height();
    const Real band = h_minus * (std::pow(2.0, levels + 1) - 2.0);
    const Real rest = y_gamma - band;
    TLDD_THROW_IF(rest <= 1e-12 * geom.H, ErrorCode::InvalidGeometry, "transition band does not fit below gamma_i");

    // horizontal lines from the bottom: (y, nx)
    std::vector<std::pair<Real, int>> lines;
    const int n_rest = std::max(1, static_cast<int>(std::ceil(rest / h_plus - 1e-9)));
    for (int j = 0; j <= n_rest; ++j)
        lines.emplace_back(rest * j / n_rest, nx_coarse);
    Real y = rest;
    for (int l = levels - 1; l >= 0; --l) {
        y += h_minus * std::pow(2.0, l + 1);
        lines.emplace_back(l == 0 ? y_gamma : y, nx_coarse << (levels - l));
    }
    for (int j = 1; j <= n_strip; ++j)
        lines.emplace_back(j == n_strip ? geom.H : y_gamma + geom.H_minus * j / n_strip, nx_fine);

    StructuredMesh<2> mesh;
    mesh.h = h_minus;
    std::vector<int> first(lines.size());
    for (std::size_t j = 0; j < lines.size(); ++j) {
        first[j] = mesh.n_vertices();
        const int nx = lines[j].second;
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.emplace_back(geom.L * i / nx, lines[j].first);
    }
    auto add = [&](int a, int b, int c) {
        mesh.cells.push_back({a, b, c});
        if (cell_geometry(mesh, mesh.n_cells() - 1).det < 0.0)
            std::swap(mesh.cells.back()[1], mesh.cells.back()[2]);
    };
    for (std::size_t j = 0; j + 1 < lines.size(); ++j) {
        const int nb = lines[j].second, nt = lines[j + 1].second;
        const int b = first[j], t = first[j + 1];
        if (nb == nt) {
            for (int i = 0; i < nb; ++i) {
                add(b + i, b + i + 1, t + i + 1);
                add(b + i, t + i + 1, t + i);
            }
        } else {
            for (int i = 0; i < nb; ++i) {
                const int b0 = b + i, b1 = b + i + 1, t0 = t + 2 * i, t1 = t0 + 1, t2 = t0 + 2;
                add(b0, b1, t1);
                add(b0, t1, t0);
                add(b1, t2, t1);
            }
        }
    }
    const Real top = geom.H, scale = geom.H;
    finalize_boundary<2>(mesh, [=](const Point<2>& c) {
        return near(c[1], top, scale) ? FacetTag::NeumannTop : FacetTag::DirichletOuter;
    });
    return mesh;
}

} // namespace detail

/// Conforming mesh of Omega_+ resolving gamma_i: h_minus everywhere
/// (uniform-fine) or h_minus in the strip with a transition band (graded, 2D).
template <int Dim>
StructuredMesh<Dim> build_fitted_mesh(const GeometryConfig& geom, Real h_plus, Real h_minus, RefinementMode mode)
{
    geom.validate();
    if (mode == RefinementMode::UniformFine) {
        auto mesh = build_global_mesh<Dim>(geom, h_minus);
        detail::checked_divisions(geom.interface_height(), h_minus, "H - H_minus");
        return mesh;
    }
    if constexpr (Dim == 2)
        return detail::build_graded_mesh_2d(geom, h_plus, h_minus);
    else
        throw Error(ErrorCode::InvalidConfig, "graded fitted meshes are only available in 2D");
}

template <int Dim>
bool in_strip(const StructuredMesh<Dim>& mesh, const GeometryConfig& geom, int cell)
{
    return cell_centroid(mesh, cell)[Dim - 1] > geom.interface_height();
}

/// kappa_A below gamma_i, kappa_B above (by cell centroid).
template <int Dim>
std::vector<Real> piecewise_kappa(const StructuredMesh<Dim>& mesh, const GeometryConfig& geom, Real kappa_A,
                                  Real kappa_B)
{
    std::vector<Real> k(mesh.cells.size());
    for (int c = 0; c < mesh.n_cells(); ++c)
        k[c] = in_strip(mesh, geom, c) ? kappa_B : kappa_A;
    return k;
}

template <int Dim>
struct FittedResult {
    StructuredMesh<Dim> mesh;
    DofMap<Dim> dofs;
    std::vector<Real> kappa;
    DenseVector solution;
    int iterations = 0;
    bool converged = true;
    double time_s = 0.0;
};

/// Solve the original problem on a fitted mesh with per-cell coefficients.
template <int Dim>
void solve_fitted(FittedResult<Dim>& r, const ProblemData<Dim>& data, const SolverConfig& solver,
                  const LoadOptions& load_opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    SparseMatrix K = assemble_stiffness(r.mesh, r.dofs, std::span<const Real>(r.kappa));
    DenseVector b = assemble_load<Dim>(r.mesh, r.dofs, data.source, data.flux, load_opts);
    const auto dir = boundary_dofs(r.mesh, r.dofs, FacetTag::DirichletOuter);
    apply_dirichlet(K, b, dir, data.T_D);
    r.converged = true;
    try {
        DenseVector guess = DenseVector::Constant(b.size(), data.T_D);
        const auto res = LinearSolver(K, solver, true).solve(b, &guess);
        r.solution = res.x;
        r.iterations = res.iterations;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoConvergence)
            throw;
        r.converged = false;
        r.iterations = solver.max_iters;
        r.solution = DenseVector::Constant(b.size(), std::nan(""));
    }
    r.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <int Dim>
FittedResult<Dim> run_fitted_reference(const GeometryConfig& geom, Real h_plus, Real h_minus, Real kappa_A,
                                       Real kappa_B, int degree, RefinementMode mode, const ProblemData<Dim>& data,
                                       const SolverConfig& solver = {}, const LoadOptions& load_opts = {})
{
    TLDD_THROW_IF(!(kappa_A > 0.0) || !(kappa_B > 0.0), ErrorCode::NonpositiveCoefficient,
                  "coefficients must be positive");
    FittedResult<Dim> r;
    r.mesh = build_fitted_mesh<Dim>(geom, h_plus, h_minus, mode);
    r.dofs = build_dofmap(r.mesh, degree);
    r.kappa = piecewise_kappa(r.mesh, geom, kappa_A, kappa_B);
    solve_fitted(r, data, solver, load_opts);
    return r;
}

/// L2 distance, over the fitted mesh, between v and the DD field that takes
/// T_- in Omega_B and T_+ elsewhere.
template <int Dim>
Real composite_l2_distance(const Discretization<Dim>& d, const DenseVector& T_plus, const DenseVector& T_minus,
                           const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, const DenseVector& v)
{
    const Real yi = d.geom.interface_height();
    return l2_error<Dim>(mesh, dm, v, [&](const Point<Dim>& x) {
        return x[Dim - 1] > yi ? evaluate<Dim>(d.local, d.local_dofs, T_minus, x)
                               : evaluate<Dim>(d.global, d.global_dofs, T_plus, x);
    });
}

} // namespace tldd
