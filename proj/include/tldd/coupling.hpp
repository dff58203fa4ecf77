#pragma once

#include "tldd/common.hpp"
#include "tldd/fem.hpp"
#include "tldd/mesh.hpp"
#include "tldd/quadrature.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

namespace tldd {

/// Meshes and dof maps of the global box and the local strip.
template <int Dim>
struct Discretization {
    GeometryConfig geom;
    int degree = 1;
    Real h_plus = 0.0;
    Real h_minus = 0.0;
    StructuredMesh<Dim> global;
    StructuredMesh<Dim> local;
    DofMap<Dim> global_dofs;
    DofMap<Dim> local_dofs;
};

template <int Dim>
Discretization<Dim> make_discretization(const GeometryConfig& geom, Real h_plus, Real h_minus, int degree)
{
    Discretization<Dim> d;
    d.geom = geom;
    d.degree = degree;
    d.h_plus = h_plus;
    d.h_minus = h_minus;
    d.global = build_global_mesh<Dim>(geom, h_plus);
    d.local = build_local_mesh<Dim>(geom, h_minus);
    d.global_dofs = build_dofmap(d.global, degree);
    d.local_dofs = build_dofmap(d.local, degree);
    return d;
}

/// Volume source f and top flux q of the original problem, Dirichlet value T_D.
template <int Dim>
struct ProblemData {
    std::function<Real(const Point<Dim>&)> source;
    std::function<Real(const Point<Dim>&)> flux;
    Real T_D = kAmbientTemperature;
};

/// Zero source, laser flux on the top, T_D = 293.15.
template <int Dim>
ProblemData<Dim> laser_problem(const GeometryConfig& geom)
{
    ProblemData<Dim> p;
    const Real L = geom.L, W = geom.W;
    p.flux = [L, W](const Point<Dim>& x) { return laser_flux<Dim>(x, L, W); };
    return p;
}

struct CouplingParams {
    Real kappa_plus = 1.0;
    Real kappa_minus = 0.5;
    std::optional<Real> alpha; ///< unset: default_alpha(kappa_minus, h_minus)
    int interface_subdivisions = 1;
};

inline Real default_alpha(Real kappa_minus, Real h_minus) { return 1e6 * std::max(1.0, kappa_minus) / h_minus; }

namespace detail {

template <int Dim>
void check_interface_facet(const StructuredMesh<Dim>& local, const BoundaryFacet<Dim>& bf)
{
    bool ok = bf.cell >= 0 && bf.cell < local.n_cells();
    if (ok) {
        const auto& cell = local.cells[bf.cell];
        for (int v : bf.vertices)
            ok = ok && std::find(cell.begin(), cell.end(), v) != cell.end();
    }
    TLDD_THROW_IF(!ok, ErrorCode::OrphanInterfaceFacet, "interface facet has no adjacent local cell");
}

/// Calls visit(local_lam, x, weight) at every quadrature point of an interface facet.
template <int Dim, class Visit>
void for_each_interface_point(const StructuredMesh<Dim>& local, const BoundaryFacet<Dim>& bf,
                              const QuadratureRule<Dim - 1>& rule, Visit&& visit)
{
    const Real ref_measure = Dim == 2 ? 1.0 : 0.5;
    const Real meas = facet_measure(local, bf.vertices);
    const auto& cell = local.cells[bf.cell];
    for (std::size_t k = 0; k < rule.size(); ++k) {
        Point<Dim> x = Point<Dim>::Zero();
        for (int a = 0; a < Dim; ++a)
            x += rule.points[k][a] * local.vertices[bf.vertices[a]];
        visit(facet_point_in_cell<Dim>(bf, cell, rule.points[k]), x, rule.weights[k] * meas / ref_measure);
    }
}

} // namespace detail

/// Flux-jump operator, rows = global dofs, cols = local dofs:
///   S_ij = -jump_e * int_e (grad phi_j . n) v_i,  n pointing out of Omega_-,
/// so that the global equation reads K_+ T_+ + S T_- = f_+. `jump(e)` returns
/// (kappa_+ - kappa_-) for the e-th interface facet. The normal gradient comes
/// from the local cell owning the facet.
template <int Dim, class JumpFn>
SparseMatrix assemble_flux_jump_S(const StructuredMesh<Dim>& global, const DofMap<Dim>& gdm,
                                  const StructuredMesh<Dim>& local, const DofMap<Dim>& ldm, JumpFn&& jump,
                                  int subdivisions = 1)
{
    const int m = std::max(gdm.degree, ldm.degree);
    const auto rule = composite_rule<Dim - 1>(simplex_rule<Dim - 1>(2 * m + 1), std::max(1, subdivisions));
    std::vector<Eigen::Triplet<Real>> trip;
    int e = 0;
    for (const auto& bf : local.boundary_facets) {
        if (bf.tag != FacetTag::InterfaceGamma)
            continue;
        detail::check_interface_facet(local, bf);
        const Real jmp = jump(e++);
        if (jmp == 0.0)
            continue;
        const Point<Dim> n = facet_outward_normal(local, bf);
        const auto geo = cell_geometry(local, bf.cell);
        const auto glam = geo.barycentric_gradients();
        const auto ldofs = ldm.dofs_of(bf.cell);
        detail::for_each_interface_point<Dim>(local, bf, rule, [&](const auto& lam, const Point<Dim>& x, Real w) {
            const auto grads = basis_gradients<Dim>(ldm.degree, lam, glam);
            const auto gl = locate_point(global, x);
            const auto phi = basis_values<Dim>(gdm.degree, gl.barycentric);
            const auto gdofs = gdm.dofs_of(gl.cell);
            for (int j = 0; j < ldm.dofs_per_cell; ++j) {
                const Real dn = grads[j].dot(n);
                if (dn == 0.0)
                    continue;
                for (int i = 0; i < gdm.dofs_per_cell; ++i)
                    if (phi[i] != 0.0)
                        trip.emplace_back(gdofs[i], ldofs[j], -jmp * w * dn * phi[i]);
            }
        });
    }
    return detail::from_triplets(gdm.n_dofs, ldm.n_dofs, trip);
}

template <int Dim>
SparseMatrix assemble_flux_jump_S(const StructuredMesh<Dim>& global, const DofMap<Dim>& gdm,
                                  const StructuredMesh<Dim>& local, const DofMap<Dim>& ldm, Real kappa_plus,
                                  Real kappa_minus, int subdivisions = 1)
{
    TLDD_THROW_IF(!(kappa_plus > 0.0) || !(kappa_minus > 0.0), ErrorCode::NonpositiveCoefficient,
                  "coefficients must be positive");
    const Real jmp = kappa_plus - kappa_minus;
    return assemble_flux_jump_S(global, gdm, local, ldm, [jmp](int) { return jmp; }, subdivisions);
}

/// Penalty trace operator, rows = local dofs, cols = global dofs:
///   D_ij = -alpha int_{gamma_i} phi_j^+ w_i.
template <int Dim>
SparseMatrix assemble_penalty_D(const StructuredMesh<Dim>& local, const DofMap<Dim>& ldm,
                                const StructuredMesh<Dim>& global, const DofMap<Dim>& gdm, Real alpha,
                                int subdivisions = 1)
{
    TLDD_THROW_IF(alpha < 0.0, ErrorCode::InvalidConfig, "penalty must be non-negative");
    if (alpha == 0.0)
        return SparseMatrix(ldm.n_dofs, gdm.n_dofs);
    const int m = std::max(gdm.degree, ldm.degree);
    const auto rule = composite_rule<Dim - 1>(simplex_rule<Dim - 1>(2 * m + 1), std::max(1, subdivisions));
    std::vector<Eigen::Triplet<Real>> trip;
    for (const auto& bf : local.boundary_facets) {
        if (bf.tag != FacetTag::InterfaceGamma)
            continue;
        detail::check_interface_facet(local, bf);
        const auto ldofs = ldm.dofs_of(bf.cell);
        detail::for_each_interface_point<Dim>(local, bf, rule, [&](const auto& lam, const Point<Dim>& x, Real w) {
            const auto psi = basis_values<Dim>(ldm.degree, lam);
            const auto gl = locate_point(global, x);
            const auto phi = basis_values<Dim>(gdm.degree, gl.barycentric);
            const auto gdofs = gdm.dofs_of(gl.cell);
            for (int i = 0; i < ldm.dofs_per_cell; ++i) {
                if (psi[i] == 0.0)
                    continue;
                for (int j = 0; j < gdm.dofs_per_cell; ++j)
                    if (phi[j] != 0.0)
                        trip.emplace_back(ldofs[i], gdofs[j], -alpha * w * psi[i] * phi[j]);
            }
        });
    }
    return detail::from_triplets(ldm.n_dofs, gdm.n_dofs, trip);
}

/// Blocks of  [K_+ S; D K_-] [T_+; T_-] = [f_+; f_-]  after Dirichlet elimination.
struct CoupledOperators {
    SparseMatrix K_plus;
    SparseMatrix K_minus;
    SparseMatrix S;
    SparseMatrix D;
    DenseVector f_plus;
    DenseVector f_minus;
    std::vector<int> dirichlet_plus;
    std::vector<int> dirichlet_minus;
    Real alpha = 0.0;

    [[nodiscard]] Eigen::Index n_plus() const { return K_plus.rows(); }
    [[nodiscard]] Eigen::Index n_minus() const { return K_minus.rows(); }
};

/// Cellwise / facetwise frozen coefficients. The constant-coefficient problem
/// and every Picard step of the nonlinear solver are special cases.
struct FrozenCoefficients {
    std::vector<Real> kappa_plus;   ///< per global cell
    std::vector<Real> kappa_minus;  ///< per local cell
    std::vector<Real> jump;         ///< per interface facet: kappa_+ - kappa_-
    std::vector<Real> flux_ratio;   ///< per global boundary facet: q~ / q on top facets
    std::vector<Real> source_ratio; ///< per global cell: f~ / f inside Omega_B
};

template <int Dim>
FrozenCoefficients constant_coefficients(const Discretization<Dim>& disc, Real kappa_plus, Real kappa_minus)
{
    TLDD_THROW_IF(!(kappa_plus > 0.0) || !(kappa_minus > 0.0), ErrorCode::NonpositiveCoefficient,
                  "coefficients must be positive");
    FrozenCoefficients c;
    c.kappa_plus.assign(disc.global.cells.size(), kappa_plus);
    c.kappa_minus.assign(disc.local.cells.size(), kappa_minus);
    c.jump.assign(interface_facets(disc.local).size(), kappa_plus - kappa_minus);
    c.flux_ratio.assign(disc.global.boundary_facets.size(), kappa_plus / kappa_minus);
    c.source_ratio.assign(disc.global.cells.size(), kappa_plus / kappa_minus);
    return c;
}

template <int Dim>
CoupledOperators build_coupled_operators(const Discretization<Dim>& disc, const ProblemData<Dim>& data,
                                         const FrozenCoefficients& coef, Real alpha, int subdivisions = 1,
                                         const LoadOptions& load_opts = {})
{
    const auto& G = disc.global;
    const auto& Lm = disc.local;
    const auto& gdm = disc.global_dofs;
    const auto& ldm = disc.local_dofs;
    TLDD_THROW_IF(static_cast<int>(coef.kappa_plus.size()) != G.n_cells() ||
                      static_cast<int>(coef.kappa_minus.size()) != Lm.n_cells() ||
                      coef.flux_ratio.size() != G.boundary_facets.size() ||
                      static_cast<int>(coef.source_ratio.size()) != G.n_cells(),
                  ErrorCode::DimensionMismatch, "frozen coefficient arrays do not match the meshes");
    const Real y_gamma = disc.geom.interface_height();
    CoupledOperators ops;
    ops.alpha = alpha;

    ops.K_plus = assemble_stiffness(G, gdm, std::span<const Real>(coef.kappa_plus));
    ops.f_plus = assemble_load_indexed(
        G, gdm,
        [&](const Point<Dim>& x, int c) {
            if (!data.source)
                return 0.0;
            const Real f = data.source(x);
            return x[Dim - 1] > y_gamma ? coef.source_ratio[c] * f : f;
        },
        [&](const Point<Dim>& x, int fi) { return data.flux ? coef.flux_ratio[fi] * data.flux(x) : 0.0; },
        load_opts);
    ops.dirichlet_plus = boundary_dofs(G, gdm, FacetTag::DirichletOuter);
    apply_dirichlet(ops.K_plus, ops.f_plus, ops.dirichlet_plus, data.T_D);

    ops.K_minus = assemble_stiffness(Lm, ldm, std::span<const Real>(coef.kappa_minus));
    const auto gamma = facets_with_tag(Lm, FacetTag::InterfaceGamma);
    ops.K_minus += assemble_boundary_mass(Lm, ldm, std::span<const BoundaryFacet<Dim>>(gamma), alpha);
    ops.f_minus = assemble_load_indexed(
        Lm, ldm, [&](const Point<Dim>& x, int) { return data.source ? data.source(x) : 0.0; },
        [&](const Point<Dim>& x, int) { return data.flux ? data.flux(x) : 0.0; }, load_opts);
    ops.dirichlet_minus = boundary_dofs(Lm, ldm, FacetTag::DirichletOuter);
    apply_dirichlet(ops.K_minus, ops.f_minus, ops.dirichlet_minus, data.T_D);

    ops.S = assemble_flux_jump_S(G, gdm, Lm, ldm, [&](int e) { return coef.jump.at(e); }, subdivisions);
    zero_rows(ops.S, ops.dirichlet_plus);
    ops.D = assemble_penalty_D(Lm, ldm, G, gdm, alpha, subdivisions);
    zero_rows(ops.D, ops.dirichlet_minus);
    return ops;
}

template <int Dim>
CoupledOperators build_coupled_operators(const Discretization<Dim>& disc, const ProblemData<Dim>& data,
                                         const CouplingParams& params, const LoadOptions& load_opts = {})
{
    const Real alpha = params.alpha ? *params.alpha : default_alpha(params.kappa_minus, disc.h_minus);
    return build_coupled_operators(disc, data, constant_coefficients(disc, params.kappa_plus, params.kappa_minus),
                                   alpha, params.interface_subdivisions, load_opts);
}

/// Full block matrix [K_+ S; D K_-] and right-hand side [f_+; f_-].
inline SparseMatrix block_matrix(const CoupledOperators& ops)
{
    const auto np = static_cast<int>(ops.n_plus()), nm = static_cast<int>(ops.n_minus());
    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(ops.K_plus.nonZeros() + ops.K_minus.nonZeros() + ops.S.nonZeros() + ops.D.nonZeros());
    auto add = [&](const SparseMatrix& A, int r0, int c0) {
        for (int r = 0; r < A.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(A, r); it; ++it)
                trip.emplace_back(r0 + r, c0 + static_cast<int>(it.col()), it.value());
    };
    add(ops.K_plus, 0, 0);
    add(ops.S, 0, np);
    add(ops.D, np, 0);
    add(ops.K_minus, np, np);
    return detail::from_triplets(np + nm, np + nm, trip);
}

inline DenseVector block_rhs(const CoupledOperators& ops)
{
    DenseVector b(ops.n_plus() + ops.n_minus());
    b << ops.f_plus, ops.f_minus;
    return b;
}

/// ||A x - b|| / ||b|| of the block system.
inline Real block_residual(const CoupledOperators& ops, const DenseVector& T_plus, const DenseVector& T_minus)
{
    const DenseVector r1 = ops.K_plus * T_plus + ops.S * T_minus - ops.f_plus;
    const DenseVector r2 = ops.D * T_plus + ops.K_minus * T_minus - ops.f_minus;
    const Real bn = std::sqrt(ops.f_plus.squaredNorm() + ops.f_minus.squaredNorm());
    return std::sqrt(r1.squaredNorm() + r2.squaredNorm()) / (bn > 0.0 ? bn : 1.0);
}

} // namespace tldd
