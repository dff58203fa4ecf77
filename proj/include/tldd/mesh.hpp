#pragma once

#include "tldd/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <type_traits>
#include <unordered_map>
#include <vector>

namespace tldd {

/// Box Omega_+ = [0,L] x [0,H] (2D) or [0,L] x [0,W] x [0,H] (3D). The last
/// coordinate is vertical; the local strip Omega_- occupies its top H_minus.
struct GeometryConfig {
    int dim = 2;
    Real L = 1.0 / 40.0;
    Real H = 1.0 / 40.0;
    Real W = 1.0 / 40.0;
    Real H_minus = 1.0 / 160.0;

    void validate() const
    {
        TLDD_THROW_IF(dim != 2 && dim != 3, ErrorCode::InvalidGeometry, "dim must be 2 or 3");
        TLDD_THROW_IF(!(L > 0.0) || !(H > 0.0), ErrorCode::InvalidGeometry, "L and H must be positive");
        TLDD_THROW_IF(dim == 3 && !(W > 0.0), ErrorCode::InvalidGeometry, "W must be positive in 3D");
        TLDD_THROW_IF(!(H_minus > 0.0) || !(H_minus < H), ErrorCode::InvalidGeometry,
                      "H_minus must satisfy 0 < H_minus < H");
    }

    /// Vertical coordinate of the interface gamma_i.
    [[nodiscard]] Real interface_height() const { return H - H_minus; }
};

enum class FacetTag { DirichletOuter, NeumannTop, InterfaceGamma };

inline const char* to_string(FacetTag t)
{
    switch (t) {
    case FacetTag::DirichletOuter: return "DirichletOuter";
    case FacetTag::NeumannTop: return "NeumannTop";
    case FacetTag::InterfaceGamma: return "InterfaceGamma";
    }
    return "?";
}

template <int Dim>
struct BoundaryFacet {
    std::array<int, Dim> vertices{};
    FacetTag tag = FacetTag::DirichletOuter;
    int cell = -1;       ///< owning cell
    int local_face = -1; ///< index of the cell vertex opposite to this facet
};

/// Uniform tensor grid behind a structured mesh; enables O(1) point location.
template <int Dim>
struct GridInfo {
    Point<Dim> origin = Point<Dim>::Zero();
    Point<Dim> spacing = Point<Dim>::Zero();
    std::array<int, Dim> n{};
};

template <int Dim>
struct StructuredMesh {
    static constexpr int dim = Dim;
    std::vector<Point<Dim>> vertices;
    std::vector<std::array<int, Dim + 1>> cells;
    std::vector<BoundaryFacet<Dim>> boundary_facets;
    Real h = 0.0;
    std::optional<GridInfo<Dim>> grid;

    [[nodiscard]] int n_vertices() const { return static_cast<int>(vertices.size()); }
    [[nodiscard]] int n_cells() const { return static_cast<int>(cells.size()); }
};

template <int Dim>
struct PointLocation {
    int cell = -1;
    std::array<Real, Dim + 1> barycentric{};
};

/// Affine map x = v0 + J xi of one simplex.
template <int Dim>
struct CellGeometry {
    using Mat = Eigen::Matrix<Real, Dim, Dim>;
    Point<Dim> v0;
    Mat J;
    Mat Jinv;
    Real det = 0.0;

    [[nodiscard]] Real volume() const
    {
        Real fact = 1.0;
        for (int k = 2; k <= Dim; ++k)
            fact *= k;
        return std::abs(det) / fact;
    }

    [[nodiscard]] std::array<Real, Dim + 1> barycentric(const Point<Dim>& x) const
    {
        const Point<Dim> xi = Jinv * (x - v0);
        std::array<Real, Dim + 1> lam{};
        Real s = 0.0;
        for (int k = 0; k < Dim; ++k) {
            lam[k + 1] = xi[k];
            s += xi[k];
        }
        lam[0] = 1.0 - s;
        return lam;
    }

    [[nodiscard]] Point<Dim> map(const std::array<Real, Dim + 1>& lam) const
    {
        Point<Dim> x = v0;
        for (int k = 0; k < Dim; ++k)
            x += lam[k + 1] * J.col(k);
        return x;
    }

    /// Gradients of the barycentric coordinates (constant on the cell).
    [[nodiscard]] std::array<Point<Dim>, Dim + 1> barycentric_gradients() const
    {
        std::array<Point<Dim>, Dim + 1> g{};
        g[0] = Point<Dim>::Zero();
        for (int k = 0; k < Dim; ++k) {
            g[k + 1] = Jinv.row(k).transpose();
            g[0] -= g[k + 1];
        }
        return g;
    }
};

template <int Dim>
CellGeometry<Dim> cell_geometry(const StructuredMesh<Dim>& mesh, int c)
{
    CellGeometry<Dim> g;
    const auto& cell = mesh.cells[c];
    g.v0 = mesh.vertices[cell[0]];
    for (int k = 0; k < Dim; ++k)
        g.J.col(k) = mesh.vertices[cell[k + 1]] - g.v0;
    g.det = g.J.determinant();
    g.Jinv = g.J.inverse();
    return g;
}

template <int Dim>
Real cell_volume(const StructuredMesh<Dim>& mesh, int c)
{
    return cell_geometry(mesh, c).volume();
}

template <int Dim>
Point<Dim> cell_centroid(const StructuredMesh<Dim>& mesh, int c)
{
    Point<Dim> x = Point<Dim>::Zero();
    for (int v : mesh.cells[c])
        x += mesh.vertices[v];
    return x / (Dim + 1);
}

template <int Dim>
Point<Dim> facet_centroid(const StructuredMesh<Dim>& mesh, const std::type_identity_t<std::array<int, Dim>>& f)
{
    Point<Dim> x = Point<Dim>::Zero();
    for (int v : f)
        x += mesh.vertices[v];
    return x / Dim;
}

template <int Dim>
Real facet_measure(const StructuredMesh<Dim>& mesh, const std::type_identity_t<std::array<int, Dim>>& f)
{
    if constexpr (Dim == 2) {
        return (mesh.vertices[f[1]] - mesh.vertices[f[0]]).norm();
    } else {
        const Point<3> a = mesh.vertices[f[1]] - mesh.vertices[f[0]];
        const Point<3> b = mesh.vertices[f[2]] - mesh.vertices[f[0]];
        return 0.5 * a.cross(b).norm();
    }
}

/// Unit normal of a boundary facet pointing away from its owning cell.
template <int Dim>
Point<Dim> facet_outward_normal(const StructuredMesh<Dim>& mesh, const BoundaryFacet<Dim>& bf)
{
    Point<Dim> n;
    if constexpr (Dim == 2) {
        const Point<2> t = mesh.vertices[bf.vertices[1]] - mesh.vertices[bf.vertices[0]];
        n << t[1], -t[0];
    } else {
        const Point<3> a = mesh.vertices[bf.vertices[1]] - mesh.vertices[bf.vertices[0]];
        const Point<3> b = mesh.vertices[bf.vertices[2]] - mesh.vertices[bf.vertices[0]];
        n = a.cross(b);
    }
    n.normalize();
    const Point<Dim> inward = mesh.vertices[mesh.cells[bf.cell][bf.local_face]] - mesh.vertices[bf.vertices[0]];
    if (n.dot(inward) > 0.0)
        n = -n;
    return n;
}

namespace detail {

template <int Dim>
std::array<int, Dim> face_of(const std::array<int, Dim + 1>& cell, int opposite)
{
    std::array<int, Dim> f{};
    int k = 0;
    for (int i = 0; i <= Dim; ++i)
        if (i != opposite)
            f[k++] = cell[i];
    return f;
}

template <int Dim>
struct FaceKeyHash {
    std::size_t operator()(const std::array<int, Dim>& a) const noexcept
    {
        std::size_t h = 1469598103934665603ull;
        for (int v : a)
            h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
        return h;
    }
};

template <int Dim>
std::array<int, Dim> sorted(std::array<int, Dim> a)
{
    std::sort(a.begin(), a.end());
    return a;
}

/// Detect boundary facets (faces owned by exactly one cell) in cell traversal
/// order and tag them by their centroid.
template <int Dim>
void finalize_boundary(StructuredMesh<Dim>& mesh, const std::function<FacetTag(const Point<Dim>&)>& tagger)
{
    std::unordered_map<std::array<int, Dim>, int, FaceKeyHash<Dim>> count;
    count.reserve(mesh.cells.size() * (Dim + 1));
    for (const auto& cell : mesh.cells)
        for (int f = 0; f <= Dim; ++f)
            ++count[sorted<Dim>(face_of<Dim>(cell, f))];
    mesh.boundary_facets.clear();
    for (int c = 0; c < mesh.n_cells(); ++c)
        for (int f = 0; f <= Dim; ++f) {
            const auto face = face_of<Dim>(mesh.cells[c], f);
            if (count[sorted<Dim>(face)] != 1)
                continue;
            BoundaryFacet<Dim> bf;
            bf.vertices = face;
            bf.cell = c;
            bf.local_face = f;
            bf.tag = tagger(facet_centroid(mesh, face));
            mesh.boundary_facets.push_back(bf);
        }
}

inline int checked_divisions(Real extent, Real h, const char* what)
{
    TLDD_THROW_IF(!(h > 0.0), ErrorCode::NonDivisibleSpacing, "mesh size must be positive");
    const Real r = extent / h;
    const Real n = std::round(r);
    TLDD_THROW_IF(n < 1.0 || std::abs(r - n) > 1e-12 * std::max(1.0, r), ErrorCode::NonDivisibleSpacing,
                  std::string("spacing does not tile ") + what);
    return static_cast<int>(n);
}

/// Axis permutations of the Kuhn split (2 triangles per square, 6 tetrahedra
/// per cube), ordered; simplex k contains the points whose local coordinates
/// satisfy s[perm[0]] >= s[perm[1]] >= ...
template <int Dim>
const std::vector<std::array<int, Dim>>& kuhn_permutations()
{
    static const std::vector<std::array<int, Dim>> perms = [] {
        std::array<int, Dim> p{};
        for (int i = 0; i < Dim; ++i)
            p[i] = i;
        std::vector<std::array<int, Dim>> all;
        do {
            all.push_back(p);
        } while (std::next_permutation(p.begin(), p.end()));
        return all;
    }();
    return perms;
}

template <int Dim>
StructuredMesh<Dim> build_box(const Point<Dim>& origin, const std::array<int, Dim>& n, const Point<Dim>& spacing,
                              Real h, const std::function<FacetTag(const Point<Dim>&)>& tagger)
{
    StructuredMesh<Dim> mesh;
    mesh.h = h;
    GridInfo<Dim> grid;
    grid.origin = origin;
    grid.spacing = spacing;
    grid.n = n;
    mesh.grid = grid;

    std::array<int, Dim> nv{};
    for (int d = 0; d < Dim; ++d)
        nv[d] = n[d] + 1;
    auto vid = [&](const std::array<int, Dim>& idx) {
        int id = 0, stride = 1;
        for (int d = 0; d < Dim; ++d) {
            id += idx[d] * stride;
            stride *= nv[d];
        }
        return id;
    };

    int total_v = 1, total_c = 1;
    for (int d = 0; d < Dim; ++d) {
        total_v *= nv[d];
        total_c *= n[d];
    }
    mesh.vertices.resize(total_v);
    for (int id = 0; id < total_v; ++id) {
        int rem = id;
        Point<Dim> x;
        for (int d = 0; d < Dim; ++d) {
            const int i = rem % nv[d];
            rem /= nv[d];
            x[d] = origin[d] + i * spacing[d];
        }
        mesh.vertices[id] = x;
    }

    const auto& perms = kuhn_permutations<Dim>();
    mesh.cells.reserve(static_cast<std::size_t>(total_c) * perms.size());
    for (int gid = 0; gid < total_c; ++gid) {
        std::array<int, Dim> base{};
        int rem = gid;
        for (int d = 0; d < Dim; ++d) {
            base[d] = rem % n[d];
            rem /= n[d];
        }
        for (const auto& p : perms) {
            std::array<int, Dim + 1> cell{};
            std::array<int, Dim> idx = base;
            cell[0] = vid(idx);
            for (int k = 0; k < Dim; ++k) {
                ++idx[p[k]];
                cell[k + 1] = vid(idx);
            }
            mesh.cells.push_back(cell);
            // orientation: positive determinant
            if (cell_geometry(mesh, mesh.n_cells() - 1).det < 0.0)
                std::swap(mesh.cells.back()[Dim - 1], mesh.cells.back()[Dim]);
        }
    }
    finalize_boundary<Dim>(mesh, tagger);
    return mesh;
}

inline bool near(Real a, Real b, Real scale) { return std::abs(a - b) <= 1e-10 * scale; }

} // namespace detail

/// Uniform mesh of Omega_+. The top face is Neumann, every other boundary
/// facet carries the Dirichlet tag.
template <int Dim>
StructuredMesh<Dim> build_global_mesh(const GeometryConfig& geom, Real h_plus)
{
    geom.validate();
    TLDD_THROW_IF(geom.dim != Dim, ErrorCode::InvalidGeometry, "geometry dimension mismatch");
    std::array<int, Dim> n{};
    Point<Dim> spacing;
    n[0] = detail::checked_divisions(geom.L, h_plus, "L");
    if constexpr (Dim == 3)
        n[1] = detail::checked_divisions(geom.W, h_plus, "W");
    n[Dim - 1] = detail::checked_divisions(geom.H, h_plus, "H");
    spacing[0] = geom.L / n[0];
    if constexpr (Dim == 3)
        spacing[1] = geom.W / n[1];
    spacing[Dim - 1] = geom.H / n[Dim - 1];
    const Real top = geom.H;
    const Real scale = geom.H;
    return detail::build_box<Dim>(Point<Dim>::Zero(), n, spacing, h_plus, [=](const Point<Dim>& c) {
        return detail::near(c[Dim - 1], top, scale) ? FacetTag::NeumannTop : FacetTag::DirichletOuter;
    });
}

/// Uniform fitted mesh of the top strip Omega_-. Bottom facets form the
/// interface gamma_i; lateral facets lie on the outer Dirichlet boundary.
template <int Dim>
StructuredMesh<Dim> build_local_mesh(const GeometryConfig& geom, Real h_minus)
{
    geom.validate();
    TLDD_THROW_IF(geom.dim != Dim, ErrorCode::InvalidGeometry, "geometry dimension mismatch");
    std::array<int, Dim> n{};
    Point<Dim> spacing;
    Point<Dim> origin = Point<Dim>::Zero();
    n[0] = detail::checked_divisions(geom.L, h_minus, "L");
    if constexpr (Dim == 3)
        n[1] = detail::checked_divisions(geom.W, h_minus, "W");
    n[Dim - 1] = detail::checked_divisions(geom.H_minus, h_minus, "H_minus");
    spacing[0] = geom.L / n[0];
    if constexpr (Dim == 3)
        spacing[1] = geom.W / n[1];
    spacing[Dim - 1] = geom.H_minus / n[Dim - 1];
    origin[Dim - 1] = geom.interface_height();
    const Real top = geom.H;
    const Real bottom = geom.interface_height();
    const Real scale = geom.H;
    return detail::build_box<Dim>(origin, n, spacing, h_minus, [=](const Point<Dim>& c) {
        if (detail::near(c[Dim - 1], top, scale))
            return FacetTag::NeumannTop;
        if (detail::near(c[Dim - 1], bottom, scale))
            return FacetTag::InterfaceGamma;
        return FacetTag::DirichletOuter;
    });
}

/// Cell containing x with barycentric coordinates. Structured meshes use index
/// arithmetic; on ties the lowest cell index wins.
template <int Dim>
PointLocation<Dim> locate_point(const StructuredMesh<Dim>& mesh, const Point<Dim>& x)
{
    constexpr Real kTol = 1e-12;
    PointLocation<Dim> loc;
    if (mesh.grid) {
        const auto& g = *mesh.grid;
        std::array<int, Dim> idx{};
        Point<Dim> s;
        for (int d = 0; d < Dim; ++d) {
            const Real extent = g.n[d] * g.spacing[d];
            const Real rel = x[d] - g.origin[d];
            TLDD_THROW_IF(rel < -kTol * std::max(1.0, extent) || rel > extent + kTol * std::max(1.0, extent),
                          ErrorCode::OutOfDomain, "point outside mesh bounding box");
            const Real r = rel / g.spacing[d];
            const Real rr = std::round(r);
            int i = std::abs(r - rr) < 1e-9 ? static_cast<int>(rr) - 1 : static_cast<int>(std::floor(r));
            i = std::clamp(i, 0, g.n[d] - 1);
            idx[d] = i;
            s[d] = r - i;
        }
        int gid = 0, stride = 1;
        for (int d = 0; d < Dim; ++d) {
            gid += idx[d] * stride;
            stride *= g.n[d];
        }
        const auto& perms = detail::kuhn_permutations<Dim>();
        int k = 0;
        for (; k < static_cast<int>(perms.size()); ++k) {
            bool ok = true;
            for (int a = 0; a + 1 < Dim; ++a)
                ok = ok && s[perms[k][a]] >= s[perms[k][a + 1]] - 1e-9;
            if (ok)
                break;
        }
        loc.cell = gid * static_cast<int>(perms.size()) + k;
        loc.barycentric = cell_geometry(mesh, loc.cell).barycentric(x);
        return loc;
    }
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto lam = cell_geometry(mesh, c).barycentric(x);
        if (*std::min_element(lam.begin(), lam.end()) >= -1e-9) {
            loc.cell = c;
            loc.barycentric = lam;
            return loc;
        }
    }
    throw Error(ErrorCode::OutOfDomain, "point not contained in any cell");
}

template <int Dim>
struct InterfaceFacet {
    int facet = -1; ///< index into boundary_facets
    std::array<int, Dim> vertices{};
    int cell = -1;
    Point<Dim> normal;
    Real measure = 0.0;
};

/// InterfaceGamma facets with normals pointing out of Omega_-.
template <int Dim>
std::vector<InterfaceFacet<Dim>> interface_facets(const StructuredMesh<Dim>& local)
{
    std::vector<InterfaceFacet<Dim>> out;
    for (int i = 0; i < static_cast<int>(local.boundary_facets.size()); ++i) {
        const auto& bf = local.boundary_facets[i];
        if (bf.tag != FacetTag::InterfaceGamma)
            continue;
        InterfaceFacet<Dim> f;
        f.facet = i;
        f.vertices = bf.vertices;
        f.cell = bf.cell;
        f.normal = facet_outward_normal(local, bf);
        f.measure = facet_measure(local, bf.vertices);
        out.push_back(f);
    }
    return out;
}

/// Plain-text dump: dim / nv / vertex lines / nc / cell lines / nb / facet+tag lines.
template <int Dim>
void write_mesh_text(std::ostream& os, const StructuredMesh<Dim>& mesh)
{
    os.precision(17);
    os << Dim << '\n' << mesh.n_vertices() << '\n';
    for (const auto& v : mesh.vertices) {
        for (int d = 0; d < Dim; ++d)
            os << (d ? " " : "") << v[d];
        os << '\n';
    }
    os << mesh.n_cells() << '\n';
    for (const auto& c : mesh.cells) {
        for (int k = 0; k <= Dim; ++k)
            os << (k ? " " : "") << c[k];
        os << '\n';
    }
    os << mesh.boundary_facets.size() << '\n';
    for (const auto& f : mesh.boundary_facets) {
        for (int k = 0; k < Dim; ++k)
            os << f.vertices[k] << ' ';
        os << to_string(f.tag) << '\n';
    }
}

} // namespace tldd
