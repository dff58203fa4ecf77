#pragma once

#include "tldd/common.hpp"
#include "tldd/mesh.hpp"
#include "tldd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace tldd {

/// Maximum local dof count (P2 tetrahedron).
inline constexpr int kMaxLocalDofs = 10;

/// Local edge order used for P2 edge dofs.
///   triangle:    (0,1) (1,2) (0,2)
///   tetrahedron: (0,1) (1,2) (0,2) (0,3) (1,3) (2,3)
template <int Dim>
constexpr auto local_edges()
{
    if constexpr (Dim == 2)
        return std::array<std::array<int, 2>, 3>{{{0, 1}, {1, 2}, {0, 2}}};
    else
        return std::array<std::array<int, 2>, 6>{{{0, 1}, {1, 2}, {0, 2}, {0, 3}, {1, 3}, {2, 3}}};
}

template <int Dim>
constexpr int local_dof_count(int degree)
{
    return degree == 1 ? Dim + 1 : (Dim + 1) * (Dim + 2) / 2;
}

template <int Dim>
struct DofMap {
    int degree = 1;
    int n_dofs = 0;
    int dofs_per_cell = 0;
    std::vector<int> cell_dofs; ///< n_cells * dofs_per_cell, vertices first then edges
    std::vector<Point<Dim>> dof_coords;
    std::unordered_map<long long, int> edge_dof; ///< key: edge_key(a,b)

    [[nodiscard]] std::span<const int> dofs_of(int cell) const
    {
        return {cell_dofs.data() + static_cast<std::size_t>(cell) * dofs_per_cell,
                static_cast<std::size_t>(dofs_per_cell)};
    }

    static long long edge_key(int a, int b)
    {
        if (a > b)
            std::swap(a, b);
        return (static_cast<long long>(a) << 32) | static_cast<unsigned>(b);
    }
};

template <int Dim>
DofMap<Dim> build_dofmap(const StructuredMesh<Dim>& mesh, int degree)
{
    TLDD_THROW_IF(degree != 1 && degree != 2, ErrorCode::UnsupportedDegree,
                  "only P1 and P2 are supported, got degree " + std::to_string(degree));
    DofMap<Dim> dm;
    dm.degree = degree;
    dm.dofs_per_cell = local_dof_count<Dim>(degree);
    dm.n_dofs = mesh.n_vertices();
    dm.dof_coords = mesh.vertices;
    dm.cell_dofs.resize(static_cast<std::size_t>(mesh.n_cells()) * dm.dofs_per_cell);
    constexpr auto edges = local_edges<Dim>();
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& cell = mesh.cells[c];
        int* out = dm.cell_dofs.data() + static_cast<std::size_t>(c) * dm.dofs_per_cell;
        for (int k = 0; k <= Dim; ++k)
            out[k] = cell[k];
        if (degree == 2) {
            for (std::size_t e = 0; e < edges.size(); ++e) {
                const int a = cell[edges[e][0]], b = cell[edges[e][1]];
                const auto key = DofMap<Dim>::edge_key(a, b);
                auto it = dm.edge_dof.find(key);
                if (it == dm.edge_dof.end()) {
                    it = dm.edge_dof.emplace(key, dm.n_dofs++).first;
                    dm.dof_coords.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
                }
                out[Dim + 1 + e] = it->second;
            }
        }
    }
    return dm;
}

/// Lagrange basis values at barycentric coordinates lam.
template <int Dim>
std::array<Real, kMaxLocalDofs> basis_values(int degree, const std::array<Real, Dim + 1>& lam)
{
    std::array<Real, kMaxLocalDofs> v{};
    if (degree == 1) {
        for (int k = 0; k <= Dim; ++k)
            v[k] = lam[k];
        return v;
    }
    for (int k = 0; k <= Dim; ++k)
        v[k] = lam[k] * (2.0 * lam[k] - 1.0);
    constexpr auto edges = local_edges<Dim>();
    for (std::size_t e = 0; e < edges.size(); ++e)
        v[Dim + 1 + e] = 4.0 * lam[edges[e][0]] * lam[edges[e][1]];
    return v;
}

template <int Dim>
std::array<Point<Dim>, kMaxLocalDofs> basis_gradients(int degree, const std::array<Real, Dim + 1>& lam,
                                                      const std::array<Point<Dim>, Dim + 1>& glam)
{
    std::array<Point<Dim>, kMaxLocalDofs> g;
    if (degree == 1) {
        for (int k = 0; k <= Dim; ++k)
            g[k] = glam[k];
        return g;
    }
    for (int k = 0; k <= Dim; ++k)
        g[k] = (4.0 * lam[k] - 1.0) * glam[k];
    constexpr auto edges = local_edges<Dim>();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const int a = edges[e][0], b = edges[e][1];
        g[Dim + 1 + e] = 4.0 * (lam[a] * glam[b] + lam[b] * glam[a]);
    }
    return g;
}

/// Value of the finite-element field u at x.
template <int Dim>
Real evaluate(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, const DenseVector& u, const Point<Dim>& x)
{
    const auto loc = locate_point(mesh, x);
    const auto phi = basis_values<Dim>(dm.degree, loc.barycentric);
    const auto dofs = dm.dofs_of(loc.cell);
    Real s = 0.0;
    for (int i = 0; i < dm.dofs_per_cell; ++i)
        s += phi[i] * u[dofs[i]];
    return s;
}

namespace detail {

inline SparseMatrix from_triplets(int rows, int cols, const std::vector<Eigen::Triplet<Real>>& t)
{
    SparseMatrix A(rows, cols);
    A.setFromTriplets(t.begin(), t.end());
    A.makeCompressed();
    return A;
}

template <int Dim>
std::vector<int> facet_dofs(const DofMap<Dim>& dm, const std::type_identity_t<std::array<int, Dim>>& f)
{
    std::vector<int> out(f.begin(), f.end());
    if (dm.degree == 2) {
        for (int a = 0; a < Dim; ++a)
            for (int b = a + 1; b < Dim; ++b)
                out.push_back(dm.edge_dof.at(DofMap<Dim>::edge_key(f[a], f[b])));
    }
    return out;
}

/// Barycentric coordinates (in the owning cell) of a facet quadrature point.
template <int Dim>
std::array<Real, Dim + 1> facet_point_in_cell(const BoundaryFacet<Dim>& bf, const std::array<int, Dim + 1>& cell,
                                              const std::array<Real, Dim>& facet_bary)
{
    std::array<Real, Dim + 1> lam{};
    for (int k = 0; k < Dim; ++k) {
        const auto it = std::find(cell.begin(), cell.end(), bf.vertices[k]);
        lam[static_cast<std::size_t>(it - cell.begin())] = facet_bary[k];
    }
    return lam;
}

template <int Dim>
void check_facet(const StructuredMesh<Dim>& mesh, const BoundaryFacet<Dim>& bf)
{
    TLDD_THROW_IF(bf.cell < 0 || bf.cell >= mesh.n_cells(), ErrorCode::ForeignFacet, "facet owner not in mesh");
    const auto& cell = mesh.cells[bf.cell];
    for (int v : bf.vertices)
        TLDD_THROW_IF(std::find(cell.begin(), cell.end(), v) == cell.end(), ErrorCode::ForeignFacet,
                      "facet vertices do not belong to the owning cell");
}

} // namespace detail

/// Sorted, unique dofs lying on boundary facets with the given tag.
template <int Dim>
std::vector<int> boundary_dofs(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, FacetTag tag)
{
    std::vector<int> out;
    for (const auto& bf : mesh.boundary_facets)
        if (bf.tag == tag)
            for (int d : detail::facet_dofs(dm, bf.vertices))
                out.push_back(d);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

template <int Dim>
std::vector<BoundaryFacet<Dim>> facets_with_tag(const StructuredMesh<Dim>& mesh, FacetTag tag)
{
    std::vector<BoundaryFacet<Dim>> out;
    for (const auto& bf : mesh.boundary_facets)
        if (bf.tag == tag)
            out.push_back(bf);
    return out;
}

/// Stiffness matrix of  int kappa grad u . grad v  with one coefficient per cell.
template <int Dim>
SparseMatrix assemble_stiffness(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm,
                                std::span<const Real> kappa_per_cell)
{
    TLDD_THROW_IF(static_cast<int>(kappa_per_cell.size()) != mesh.n_cells(), ErrorCode::DimensionMismatch,
                  "one coefficient per cell expected");
    for (Real k : kappa_per_cell)
        TLDD_THROW_IF(!(k > 0.0), ErrorCode::NonpositiveCoefficient, "diffusion coefficient must be positive");
    const auto rule = simplex_rule<Dim>(2 * dm.degree);
    const int nl = dm.dofs_per_cell;
    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.n_cells()) * nl * nl);
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> Ke(nl, nl);
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto geo = cell_geometry(mesh, c);
        const auto glam = geo.barycentric_gradients();
        const Real vol_ref = std::abs(geo.det);
        Ke.setZero();
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto g = basis_gradients<Dim>(dm.degree, rule.points[q], glam);
            const Real w = rule.weights[q] * vol_ref * kappa_per_cell[c];
            for (int i = 0; i < nl; ++i)
                for (int j = 0; j < nl; ++j)
                    Ke(i, j) += w * g[i].dot(g[j]);
        }
        const auto dofs = dm.dofs_of(c);
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j)
                trip.emplace_back(dofs[i], dofs[j], Ke(i, j));
    }
    return detail::from_triplets(dm.n_dofs, dm.n_dofs, trip);
}

template <int Dim>
SparseMatrix assemble_stiffness(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, Real kappa)
{
    const std::vector<Real> k(static_cast<std::size_t>(mesh.n_cells()), kappa);
    return assemble_stiffness(mesh, dm, std::span<const Real>(k));
}

/// Boundary mass  weight * int_F u v  over the given facets of `mesh`.
template <int Dim>
SparseMatrix assemble_boundary_mass(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm,
                                    std::span<const BoundaryFacet<Dim>> facets, Real weight)
{
    const auto rule = simplex_rule<Dim - 1>(2 * dm.degree + 1);
    const Real ref_measure = Dim == 2 ? 1.0 : 0.5;
    const int nl = dm.dofs_per_cell;
    std::vector<Eigen::Triplet<Real>> trip;
    for (const auto& bf : facets) {
        detail::check_facet(mesh, bf);
        const Real meas = facet_measure(mesh, bf.vertices);
        const auto& cell = mesh.cells[bf.cell];
        const auto dofs = dm.dofs_of(bf.cell);
        Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic> Me = Eigen::MatrixXd::Zero(nl, nl);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const auto lam = detail::facet_point_in_cell<Dim>(bf, cell, rule.points[q]);
            const auto phi = basis_values<Dim>(dm.degree, lam);
            const Real w = weight * rule.weights[q] * meas / ref_measure;
            for (int i = 0; i < nl; ++i)
                for (int j = 0; j < nl; ++j)
                    Me(i, j) += w * phi[i] * phi[j];
        }
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j)
                if (Me(i, j) != 0.0)
                    trip.emplace_back(dofs[i], dofs[j], Me(i, j));
    }
    return detail::from_triplets(dm.n_dofs, dm.n_dofs, trip);
}

struct LoadOptions {
    /// Target sub-panel size for boundary data; boundary facets are split into
    /// composite rules so that narrow flux profiles are resolved.
    Real boundary_resolution = 1e-4;
    int max_subdivisions = 64;
    /// Lower bound on the exactness of the boundary base rule.
    int min_boundary_degree = 9;
};

/// Load vector  int f v + int_{NeumannTop} q v. The indexed callables receive
/// the cell (resp. boundary facet) index alongside the point.
template <int Dim, class VolumeFn, class BoundaryFn>
DenseVector assemble_load_indexed(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, VolumeFn&& f,
                                  BoundaryFn&& q, const LoadOptions& opts = {})
{
    DenseVector b = DenseVector::Zero(dm.n_dofs);
    const auto vrule = simplex_rule<Dim>(2 * dm.degree);
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto geo = cell_geometry(mesh, c);
        const auto dofs = dm.dofs_of(c);
        const Real jac = std::abs(geo.det);
        for (std::size_t k = 0; k < vrule.size(); ++k) {
            const Real fv = f(geo.map(vrule.points[k]), c);
            if (fv == 0.0)
                continue;
            const auto phi = basis_values<Dim>(dm.degree, vrule.points[k]);
            for (int i = 0; i < dm.dofs_per_cell; ++i)
                b[dofs[i]] += vrule.weights[k] * jac * fv * phi[i];
        }
    }
    const auto base = simplex_rule<Dim - 1>(std::max(2 * dm.degree + 1, opts.min_boundary_degree));
    const Real ref_measure = Dim == 2 ? 1.0 : 0.5;
    for (int fi = 0; fi < static_cast<int>(mesh.boundary_facets.size()); ++fi) {
        const auto& bf = mesh.boundary_facets[fi];
        if (bf.tag != FacetTag::NeumannTop)
            continue;
        Real diam = 0.0;
        for (int a = 0; a < Dim; ++a)
            for (int c2 = a + 1; c2 < Dim; ++c2)
                diam = std::max(diam, (mesh.vertices[bf.vertices[a]] - mesh.vertices[bf.vertices[c2]]).norm());
        const int nsub = std::clamp(static_cast<int>(std::ceil(diam / opts.boundary_resolution)), 1,
                                    opts.max_subdivisions);
        const auto rule = composite_rule<Dim - 1>(base, nsub);
        const Real meas = facet_measure(mesh, bf.vertices);
        const auto& cell = mesh.cells[bf.cell];
        const auto dofs = dm.dofs_of(bf.cell);
        for (std::size_t k = 0; k < rule.size(); ++k) {
            Point<Dim> x = Point<Dim>::Zero();
            for (int a = 0; a < Dim; ++a)
                x += rule.points[k][a] * mesh.vertices[bf.vertices[a]];
            const Real qv = q(x, fi);
            if (qv == 0.0)
                continue;
            const auto lam = detail::facet_point_in_cell<Dim>(bf, cell, rule.points[k]);
            const auto phi = basis_values<Dim>(dm.degree, lam);
            for (int i = 0; i < dm.dofs_per_cell; ++i)
                b[dofs[i]] += rule.weights[k] * meas / ref_measure * qv * phi[i];
        }
    }
    return b;
}

template <int Dim>
DenseVector assemble_load(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm,
                          const std::function<Real(const Point<Dim>&)>& f,
                          const std::function<Real(const Point<Dim>&)>& q, const LoadOptions& opts = {})
{
    return assemble_load_indexed(
        mesh, dm, [&](const Point<Dim>& x, int) { return f ? f(x) : 0.0; },
        [&](const Point<Dim>& x, int) { return q ? q(x) : 0.0; }, opts);
}

/// Top-surface heat flux: a flat-topped super-Gaussian spot centred at L/2
/// (and W/2 in 3D), peak value 4e4.
template <int Dim>
Real laser_flux(const Point<Dim>& x, Real L, Real W = 1.0 / 40.0)
{
    const Real dx = L / 2.0 - x[0];
    Real e = dx * dx * dx * dx;
    if constexpr (Dim == 3) {
        const Real dy = W / 2.0 - x[1];
        e += dy * dy * dy * dy;
    }
    return 0.4e5 * std::exp(-e / 1e-12);
}

/// Symmetric strong elimination of dofs: constrained rows and columns are
/// zeroed (known contributions moved to the right-hand side), the diagonal
/// set to one and the right-hand side to the prescribed value.
inline void apply_dirichlet(SparseMatrix& A, DenseVector& b, std::span<const int> dofs, std::span<const Real> values)
{
    const int n = static_cast<int>(A.rows());
    TLDD_THROW_IF(A.rows() != A.cols() || b.size() != n, ErrorCode::DimensionMismatch, "square system expected");
    TLDD_THROW_IF(dofs.size() != values.size(), ErrorCode::DimensionMismatch, "one value per constrained dof");
    if (dofs.empty())
        return;
    std::vector<char> fixed(static_cast<std::size_t>(n), 0);
    DenseVector g = DenseVector::Zero(n);
    for (std::size_t i = 0; i < dofs.size(); ++i) {
        TLDD_THROW_IF(dofs[i] < 0 || dofs[i] >= n, ErrorCode::IndexOutOfRange, "Dirichlet dof out of range");
        fixed[dofs[i]] = 1;
        g[dofs[i]] = values[i];
    }
    for (int r = 0; r < n; ++r) {
        for (SparseMatrix::InnerIterator it(A, r); it; ++it) {
            const int c = static_cast<int>(it.col());
            if (fixed[r]) {
                it.valueRef() = (r == c) ? 1.0 : 0.0;
            } else if (fixed[c]) {
                b[r] -= it.value() * g[c];
                it.valueRef() = 0.0;
            }
        }
    }
    A.prune([](int r, int c, Real v) { return v != 0.0 || r == c; });
    for (int d : dofs) {
        A.coeffRef(d, d) = 1.0;
        b[d] = g[d];
    }
    A.makeCompressed();
}

inline void apply_dirichlet(SparseMatrix& A, DenseVector& b, std::span<const int> dofs, Real value)
{
    const std::vector<Real> v(dofs.size(), value);
    apply_dirichlet(A, b, dofs, std::span<const Real>(v));
}

/// Zero the given rows of a (rectangular) operator.
inline void zero_rows(SparseMatrix& A, std::span<const int> rows)
{
    std::vector<char> mask(static_cast<std::size_t>(A.rows()), 0);
    for (int r : rows) {
        TLDD_THROW_IF(r < 0 || r >= A.rows(), ErrorCode::IndexOutOfRange, "row out of range");
        mask[r] = 1;
    }
    A.prune([&](int r, int, Real) { return !mask[r]; });
    A.makeCompressed();
}

/// L2 norm of (u_h - exact) computed with a rule of degree 2m+2.
template <int Dim>
Real l2_error(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, const DenseVector& u,
              const std::function<Real(const Point<Dim>&)>& exact)
{
    const auto rule = simplex_rule<Dim>(2 * dm.degree + 2);
    Real s = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto geo = cell_geometry(mesh, c);
        const auto dofs = dm.dofs_of(c);
        for (std::size_t k = 0; k < rule.size(); ++k) {
            const auto phi = basis_values<Dim>(dm.degree, rule.points[k]);
            Real uh = 0.0;
            for (int i = 0; i < dm.dofs_per_cell; ++i)
                uh += phi[i] * u[dofs[i]];
            const Real e = uh - exact(geo.map(rule.points[k]));
            s += rule.weights[k] * std::abs(geo.det) * e * e;
        }
    }
    return std::sqrt(s);
}

/// L2 distance between u (on mesh a) and v (on mesh b), integrated over a.
template <int Dim>
Real l2_distance(const StructuredMesh<Dim>& mesh_a, const DofMap<Dim>& dm_a, const DenseVector& u,
                 const StructuredMesh<Dim>& mesh_b, const DofMap<Dim>& dm_b, const DenseVector& v)
{
    return l2_error<Dim>(mesh_a, dm_a, u,
                         [&](const Point<Dim>& x) { return evaluate<Dim>(mesh_b, dm_b, v, x); });
}

} // namespace tldd
