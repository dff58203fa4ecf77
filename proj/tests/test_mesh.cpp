#include "tldd/mesh.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

using namespace tldd;

namespace {

GeometryConfig geom2d()
{
    GeometryConfig g;
    g.dim = 2;
    return g;
}

GeometryConfig geom3d()
{
    GeometryConfig g;
    g.dim = 3;
    return g;
}

template <int Dim>
std::map<std::array<int, Dim>, int> face_counts(const StructuredMesh<Dim>& mesh)
{
    std::map<std::array<int, Dim>, int> count;
    for (const auto& c : mesh.cells)
        for (int skip = 0; skip <= Dim; ++skip) {
            std::array<int, Dim> f{};
            int k = 0;
            for (int j = 0; j <= Dim; ++j)
                if (j != skip)
                    f[k++] = c[j];
            std::sort(f.begin(), f.end());
            ++count[f];
        }
    return count;
}

template <int Dim>
bool contains(const StructuredMesh<Dim>& mesh, int c, const Point<Dim>& x)
{
    const auto lam = cell_geometry(mesh, c).barycentric(x);
    return *std::min_element(lam.begin(), lam.end()) >= -1e-12;
}

template <int Dim>
void check_boundary_is_topological(const StructuredMesh<Dim>& mesh)
{
    const auto count = face_counts(mesh);
    std::set<std::array<int, Dim>> boundary;
    for (const auto& [f, n] : count) {
        ASSERT_LE(n, 2);
        if (n == 1)
            boundary.insert(f);
    }
    std::set<std::array<int, Dim>> tagged;
    for (const auto& bf : mesh.boundary_facets) {
        auto f = bf.vertices;
        std::sort(f.begin(), f.end());
        EXPECT_TRUE(tagged.insert(f).second) << "facet listed twice";
        const auto& cell = mesh.cells[bf.cell];
        for (int v : bf.vertices)
            EXPECT_NE(std::find(cell.begin(), cell.end(), v), cell.end());
    }
    EXPECT_EQ(tagged, boundary);
}

} // namespace

TEST(GlobalMesh, CountsIn2D)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    EXPECT_EQ(m.n_vertices(), 25);
    EXPECT_EQ(m.n_cells(), 32);
    EXPECT_EQ(m.boundary_facets.size(), 16u);
    int top = 0;
    for (const auto& f : m.boundary_facets)
        top += f.tag == FacetTag::NeumannTop;
    EXPECT_EQ(top, 4);
    EXPECT_DOUBLE_EQ(m.h, 1.0 / 160.0);
}

TEST(GlobalMesh, CountsIn3D)
{
    const auto m = build_global_mesh<3>(geom3d(), 1.0 / 160.0);
    EXPECT_EQ(m.n_vertices(), 125);
    EXPECT_EQ(m.n_cells(), 384);
    check_boundary_is_topological(m);
}

TEST(GlobalMesh, RejectsNonDividingSpacing)
{
    try {
        build_global_mesh<2>(geom2d(), 1.0 / 150.0 * 1.01);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonDivisibleSpacing);
    }
}

TEST(GlobalMesh, PositiveOrientationAndVolume)
{
    const auto m2 = build_global_mesh<2>(geom2d(), 1.0 / 320.0);
    Real v2 = 0.0;
    for (int c = 0; c < m2.n_cells(); ++c) {
        EXPECT_GT(cell_geometry(m2, c).det, 0.0);
        v2 += cell_volume(m2, c);
    }
    EXPECT_NEAR(v2, 1.0 / 1600.0, 1e-12 / 1600.0);
    const auto m3 = build_global_mesh<3>(geom3d(), 1.0 / 320.0);
    Real v3 = 0.0;
    for (int c = 0; c < m3.n_cells(); ++c) {
        EXPECT_GT(cell_geometry(m3, c).det, 0.0);
        v3 += cell_volume(m3, c);
    }
    EXPECT_NEAR(v3, 1.0 / 64000.0, 1e-12 / 64000.0);
}

TEST(GlobalMesh, BoundaryFacetsAreTopologicalBoundary)
{
    check_boundary_is_topological(build_global_mesh<2>(geom2d(), 1.0 / 320.0));
    check_boundary_is_topological(build_local_mesh<2>(geom2d(), 1.0 / 640.0));
    check_boundary_is_topological(build_local_mesh<3>(geom3d(), 1.0 / 320.0));
}

TEST(LocalMesh, StripCounts)
{
    const auto m = build_local_mesh<2>(geom2d(), 1.0 / 320.0);
    EXPECT_EQ(m.n_cells(), 32);
    const auto gam = interface_facets(m);
    ASSERT_EQ(gam.size(), 8u);
    for (const auto& f : gam)
        EXPECT_NEAR(f.measure, 1.0 / 320.0, 1e-15);

    const auto coarse = build_local_mesh<2>(geom2d(), 1.0 / 160.0);
    EXPECT_EQ(coarse.n_cells(), 8);
    EXPECT_EQ(interface_facets(coarse).size(), 4u);
}

TEST(LocalMesh, TagsByPosition)
{
    const auto g = geom2d();
    const auto m = build_local_mesh<2>(g, 1.0 / 640.0);
    for (const auto& f : m.boundary_facets) {
        const auto c = facet_centroid(m, f.vertices);
        if (std::abs(c[1] - g.H) < 1e-14)
            EXPECT_EQ(f.tag, FacetTag::NeumannTop);
        else if (std::abs(c[1] - g.interface_height()) < 1e-14)
            EXPECT_EQ(f.tag, FacetTag::InterfaceGamma);
        else
            EXPECT_EQ(f.tag, FacetTag::DirichletOuter);
    }
}

TEST(LocalMesh, DegenerateStripRejected)
{
    auto g = geom2d();
    g.H_minus = g.H;
    try {
        build_local_mesh<2>(g, 1.0 / 320.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidGeometry);
    }
}

TEST(LocatePoint, CentroidOfFirstCell)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    const auto loc = locate_point(m, cell_centroid(m, 0));
    EXPECT_EQ(loc.cell, 0);
    for (Real l : loc.barycentric)
        EXPECT_NEAR(l, 1.0 / 3.0, 1e-12);
}

TEST(LocatePoint, SharedVertexPicksLowestCell)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    for (int v = 0; v < m.n_vertices(); ++v) {
        int lowest = -1;
        for (int c = 0; c < m.n_cells() && lowest < 0; ++c)
            if (std::find(m.cells[c].begin(), m.cells[c].end(), v) != m.cells[c].end())
                lowest = c;
        const auto loc = locate_point(m, m.vertices[v]);
        EXPECT_EQ(loc.cell, lowest) << "vertex " << v;
        EXPECT_NEAR(*std::max_element(loc.barycentric.begin(), loc.barycentric.end()), 1.0, 1e-12);
    }
}

TEST(LocatePoint, TieBreakOnEdgesMatchesBruteForce)
{
    const auto m2 = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    const auto m3 = build_global_mesh<3>(geom3d(), 1.0 / 160.0);
    std::mt19937 rng(7);
    std::uniform_real_distribution<Real> u(0.0, 1.0 / 40.0);
    std::uniform_int_distribution<int> k(0, 4);
    for (int t = 0; t < 300; ++t) {
        Point<2> x(u(rng), k(rng) / 160.0);
        if (t % 3 == 0)
            x[0] = x[1];
        int lowest = -1;
        for (int c = 0; c < m2.n_cells() && lowest < 0; ++c)
            if (contains(m2, c, x))
                lowest = c;
        EXPECT_EQ(locate_point(m2, x).cell, lowest);

        Point<3> y(u(rng), u(rng), k(rng) / 160.0);
        if (t % 2 == 0)
            y[1] = k(rng) / 160.0;
        lowest = -1;
        for (int c = 0; c < m3.n_cells() && lowest < 0; ++c)
            if (contains(m3, c, y))
                lowest = c;
        EXPECT_EQ(locate_point(m3, y).cell, lowest);
    }
}

TEST(LocatePoint, OutsideBox)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    try {
        locate_point(m, Point<2>(2.0 / 40.0, 0.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::OutOfDomain);
    }
}

TEST(LocatePoint, RoundTripOnRandomPoints)
{
    const auto m2 = build_local_mesh<2>(geom2d(), 1.0 / 640.0);
    const auto m3 = build_global_mesh<3>(geom3d(), 1.0 / 320.0);
    std::mt19937 rng(11);
    std::uniform_real_distribution<Real> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        Point<2> x(u(rng) / 40.0, 3.0 / 160.0 + u(rng) / 160.0);
        const auto l2 = locate_point(m2, x);
        Real s = 0.0;
        for (Real b : l2.barycentric) {
            EXPECT_GE(b, -1e-12);
            s += b;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        EXPECT_LE((cell_geometry(m2, l2.cell).map(l2.barycentric) - x).norm(), 1e-10 / 40.0);

        Point<3> y(u(rng) / 40.0, u(rng) / 40.0, u(rng) / 40.0);
        const auto l3 = locate_point(m3, y);
        for (Real b : l3.barycentric)
            EXPECT_GE(b, -1e-12);
        EXPECT_LE((cell_geometry(m3, l3.cell).map(l3.barycentric) - y).norm(), 1e-10 / 40.0);
    }
}

TEST(InterfaceFacets, NormalsAndMeasure2D)
{
    const auto gam = interface_facets(build_local_mesh<2>(geom2d(), 1.0 / 320.0));
    Real len = 0.0;
    for (const auto& f : gam) {
        EXPECT_NEAR(f.normal[0], 0.0, 1e-14);
        EXPECT_NEAR(f.normal[1], -1.0, 1e-14);
        len += f.measure;
    }
    EXPECT_NEAR(len, 1.0 / 40.0, 1e-12 / 40.0);
}

TEST(InterfaceFacets, NormalsAndMeasure3D)
{
    const auto gam = interface_facets(build_local_mesh<3>(geom3d(), 1.0 / 320.0));
    EXPECT_EQ(gam.size(), 128u);
    Real area = 0.0;
    for (const auto& f : gam) {
        EXPECT_NEAR(f.normal[2], -1.0, 1e-14);
        area += f.measure;
    }
    EXPECT_NEAR(area, 1.0 / 1600.0, 1e-12 / 1600.0);
}

TEST(InterfaceFacets, EmptyOnGlobalMesh)
{
    EXPECT_TRUE(interface_facets(build_global_mesh<2>(geom2d(), 1.0 / 160.0)).empty());
}

TEST(MeshDump, HeaderLines)
{
    std::ostringstream os;
    write_mesh_text(os, build_global_mesh<2>(geom2d(), 1.0 / 160.0));
    std::istringstream is(os.str());
    int dim = 0, nv = 0;
    is >> dim >> nv;
    EXPECT_EQ(dim, 2);
    EXPECT_EQ(nv, 25);
}
