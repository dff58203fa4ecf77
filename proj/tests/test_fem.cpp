#include "tldd/fem.hpp"

#include <Eigen/SparseCholesky>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

using namespace tldd;

namespace {

constexpr Real kL = 1.0 / 40.0;

GeometryConfig geom2d()
{
    GeometryConfig g;
    g.dim = 2;
    return g;
}

DenseMatrix dense(const SparseMatrix& A) { return DenseMatrix(A); }

/// Unique undirected edges counted straight from the cells.
int count_edges(const StructuredMesh<2>& m)
{
    std::set<std::pair<int, int>> e;
    for (const auto& c : m.cells)
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b)
                e.emplace(std::min(c[a], c[b]), std::max(c[a], c[b]));
    return static_cast<int>(e.size());
}

} // namespace

TEST(DofMap, P1CountsVertices)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    EXPECT_EQ(build_dofmap(m, 1).n_dofs, 25);
}

TEST(DofMap, P2CountsEdgesByEuler)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    // planar triangulation of a disk: V - E + F = 1
    const int euler_edges = m.n_vertices() + m.n_cells() - 1;
    EXPECT_EQ(euler_edges, 56);
    EXPECT_EQ(count_edges(m), euler_edges);
    const auto dm = build_dofmap(m, 2);
    EXPECT_EQ(dm.n_dofs, 25 + euler_edges);
    EXPECT_EQ(dm.dofs_per_cell, 6);
}

TEST(DofMap, SharedEdgesShareDofs)
{
    const auto m = build_global_mesh<3>([] {
        GeometryConfig g;
        g.dim = 3;
        return g;
    }(), 1.0 / 160.0);
    const auto dm = build_dofmap(m, 2);
    constexpr auto edges = local_edges<3>();
    for (int c = 0; c < m.n_cells(); ++c)
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const int a = m.cells[c][edges[e][0]], b = m.cells[c][edges[e][1]];
            const int d = dm.dofs_of(c)[4 + e];
            EXPECT_LE((dm.dof_coords[d] - 0.5 * (m.vertices[a] + m.vertices[b])).norm(), 1e-15);
        }
}

TEST(DofMap, UnsupportedDegree)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    try {
        build_dofmap(m, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnsupportedDegree);
    }
}

TEST(Quadrature, ExactOnMonomials)
{
    // int_T x^a y^b = a! b! / (a+b+2)!
    auto fact = [](int n) {
        Real f = 1.0;
        for (int k = 2; k <= n; ++k)
            f *= k;
        return f;
    };
    for (int deg = 1; deg <= 9; ++deg) {
        const auto r = simplex_rule<2>(deg);
        Real wsum = 0.0;
        for (Real w : r.weights) {
            EXPECT_GT(w, 0.0);
            wsum += w;
        }
        EXPECT_NEAR(wsum, 0.5, 1e-14);
        for (int a = 0; a <= deg; ++a)
            for (int b = 0; a + b <= deg; ++b) {
                Real s = 0.0;
                for (std::size_t q = 0; q < r.size(); ++q)
                    s += r.weights[q] * std::pow(r.points[q][1], a) * std::pow(r.points[q][2], b);
                EXPECT_NEAR(s, fact(a) * fact(b) / fact(a + b + 2), 1e-14);
            }
    }
    const auto r3 = simplex_rule<3>(4);
    Real s = 0.0;
    for (std::size_t q = 0; q < r3.size(); ++q)
        s += r3.weights[q] * std::pow(r3.points[q][1], 2) * std::pow(r3.points[q][3], 2);
    EXPECT_NEAR(s, fact(2) * fact(2) / fact(7), 1e-15);
}

TEST(Stiffness, ReferenceTriangleP1)
{
    StructuredMesh<2> m;
    m.vertices = {Point<2>(0, 0), Point<2>(1, 0), Point<2>(0, 1)};
    m.cells = {{0, 1, 2}};
    const auto K = dense(assemble_stiffness(m, build_dofmap(m, 1), 1.0));
    DenseMatrix ref(3, 3);
    ref << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
    EXPECT_LE((K - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Stiffness, LinearInKappaAndConstantsInKernel)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 320.0);
    for (int deg : {1, 2}) {
        const auto dm = build_dofmap(m, deg);
        const SparseMatrix K1 = assemble_stiffness(m, dm, 1.0);
        const SparseMatrix K2 = assemble_stiffness(m, dm, 2.0);
        EXPECT_EQ((dense(K2) - 2.0 * dense(K1)).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_LE((dense(K1) - dense(K1).transpose()).cwiseAbs().maxCoeff(), 1e-15);
        const DenseVector rs = K1 * DenseVector::Ones(dm.n_dofs);
        EXPECT_LE(rs.cwiseAbs().maxCoeff(), 1e-12 * dense(K1).cwiseAbs().maxCoeff());
    }
}

TEST(Stiffness, RejectsNonpositiveKappa)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    try {
        assemble_stiffness(m, build_dofmap(m, 1), 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonpositiveCoefficient);
    }
}

TEST(BoundaryMass, ZeroWeightAndTotalMass)
{
    const auto loc = build_local_mesh<2>(geom2d(), 1.0 / 320.0);
    const auto gam = facets_with_tag(loc, FacetTag::InterfaceGamma);
    for (int deg : {1, 2}) {
        const auto dm = build_dofmap(loc, deg);
        const auto M0 = assemble_boundary_mass(loc, dm, std::span<const BoundaryFacet<2>>(gam), 0.0);
        EXPECT_EQ(dense(M0).cwiseAbs().maxCoeff(), 0.0);
        const Real alpha = 3.7e5;
        const auto M = assemble_boundary_mass(loc, dm, std::span<const BoundaryFacet<2>>(gam), alpha);
        const DenseVector one = DenseVector::Ones(dm.n_dofs);
        EXPECT_NEAR(one.dot(M * one), alpha * kL, 1e-12 * alpha * kL);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(dense(M));
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9 * alpha);
    }
}

TEST(BoundaryMass, SingleEdgeElementMatrix)
{
    const auto loc = build_local_mesh<2>(geom2d(), 1.0 / 320.0);
    const auto dm = build_dofmap(loc, 1);
    const auto gam = facets_with_tag(loc, FacetTag::InterfaceGamma);
    const std::vector<BoundaryFacet<2>> one{gam[3]};
    const auto M = dense(assemble_boundary_mass(loc, dm, std::span<const BoundaryFacet<2>>(one), 1.0));
    const Real l = 1.0 / 320.0;
    const int a = one[0].vertices[0], b = one[0].vertices[1];
    EXPECT_NEAR(M(a, a), l / 3.0, 1e-17);
    EXPECT_NEAR(M(b, b), l / 3.0, 1e-17);
    EXPECT_NEAR(M(a, b), l / 6.0, 1e-17);
    EXPECT_NEAR(M(b, a), l / 6.0, 1e-17);
    EXPECT_NEAR(M.cwiseAbs().sum(), l, 1e-16);
}

TEST(BoundaryMass, ForeignFacetRejected)
{
    const auto loc = build_local_mesh<2>(geom2d(), 1.0 / 320.0);
    const auto dm = build_dofmap(loc, 1);
    auto bad = facets_with_tag(loc, FacetTag::InterfaceGamma);
    bad[0].cell = (bad[0].cell + 5) % loc.n_cells();
    try {
        assemble_boundary_mass(loc, dm, std::span<const BoundaryFacet<2>>(bad), 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ForeignFacet);
    }
}

TEST(Load, VolumeAndBoundaryMeasures)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    for (int deg : {1, 2}) {
        const auto dm = build_dofmap(m, deg);
        const DenseVector bf = assemble_load<2>(m, dm, [](const Point<2>&) { return 1.0; }, {});
        EXPECT_NEAR(bf.sum(), 1.0 / 1600.0, 1e-15);
        const DenseVector bq = assemble_load<2>(m, dm, {}, [](const Point<2>&) { return 1.0; });
        EXPECT_NEAR(bq.sum(), kL, 1e-15);
    }
}

TEST(Load, LaserFluxAgainstTrapezoid)
{
    // 1D composite trapezoid with 1e4 panels; the integrand vanishes to
    // machine precision at both ends.
    const int n = 10000;
    Real trap = 0.0;
    for (int i = 0; i <= n; ++i) {
        const Real w = (i == 0 || i == n) ? 0.5 : 1.0;
        trap += w * laser_flux<2>(Point<2>(kL * i / n, kL), kL);
    }
    trap *= kL / n;
    for (Real h : {1.0 / 160.0, 1.0 / 640.0}) {
        const auto m = build_global_mesh<2>(geom2d(), h);
        for (int deg : {1, 2}) {
            const auto dm = build_dofmap(m, deg);
            const DenseVector b = assemble_load<2>(m, dm, {}, [](const Point<2>& x) { return laser_flux<2>(x, kL); });
            EXPECT_NEAR(b.sum(), trap, 1e-8) << "h=" << h << " m=" << deg;
        }
    }
}

TEST(LaserFlux, PeakAndTails)
{
    EXPECT_DOUBLE_EQ(laser_flux<2>(Point<2>(kL / 2, kL), kL), 4.0e4);
    EXPECT_LT(laser_flux<2>(Point<2>(0.0, kL), kL), 1e-300);
    EXPECT_DOUBLE_EQ(laser_flux<3>(Point<3>(kL / 2, kL / 2, kL), kL, kL), 4.0e4);
    EXPECT_GT(laser_flux<2>(Point<2>(kL / 2 + 1e-4, kL), kL), 0.0);
}

TEST(Dirichlet, AllDofsConstrained)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    const auto dm = build_dofmap(m, 1);
    SparseMatrix K = assemble_stiffness(m, dm, 1.0);
    DenseVector b = DenseVector::Random(dm.n_dofs);
    std::vector<int> all(dm.n_dofs);
    std::iota(all.begin(), all.end(), 0);
    apply_dirichlet(K, b, all, 5.0);
    const DenseVector x = DenseMatrix(K).fullPivLu().solve(b);
    EXPECT_LE((x.array() - 5.0).abs().maxCoeff(), 1e-14);
}

TEST(Dirichlet, NoDofsLeavesSystem)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    const auto dm = build_dofmap(m, 1);
    const SparseMatrix K0 = assemble_stiffness(m, dm, 1.0);
    SparseMatrix K = K0;
    DenseVector b = DenseVector::Ones(dm.n_dofs);
    apply_dirichlet(K, b, std::vector<int>{}, 1.0);
    EXPECT_EQ((dense(K) - dense(K0)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((b.array() - 1.0).abs().maxCoeff(), 0.0);
}

TEST(Dirichlet, TwoByTwoHandElimination)
{
    // [4 1; 1 3] x = [1; 2] with x0 = 2:  row 0 -> x0 = 2,
    // row 1 -> 3 x1 = 2 - 1*2.
    SparseMatrix A(2, 2);
    A.insert(0, 0) = 4;
    A.insert(0, 1) = 1;
    A.insert(1, 0) = 1;
    A.insert(1, 1) = 3;
    DenseVector b(2);
    b << 1, 2;
    apply_dirichlet(A, b, std::vector<int>{0}, 2.0);
    DenseMatrix ref(2, 2);
    ref << 1, 0, 0, 3;
    EXPECT_EQ((dense(A) - ref).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(b[0], 2.0);
    EXPECT_DOUBLE_EQ(b[1], 0.0);
}

TEST(Dirichlet, OutOfRange)
{
    SparseMatrix A(2, 2);
    A.insert(0, 0) = 1;
    A.insert(1, 1) = 1;
    DenseVector b = DenseVector::Zero(2);
    try {
        apply_dirichlet(A, b, std::vector<int>{2}, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
    }
}

TEST(Manufactured, SmoothSolutionRates)
{
    // T = sin(pi x / L) sin(pi y / H), kappa = 1.7, T = 0 on the Dirichlet part.
    const Real kappa = 1.7, H = kL, pi = std::numbers::pi;
    auto exact = [=](const Point<2>& x) { return std::sin(pi * x[0] / kL) * std::sin(pi * x[1] / H); };
    auto f = [=](const Point<2>& x) { return kappa * (pi * pi / (kL * kL) + pi * pi / (H * H)) * exact(x); };
    auto q = [=](const Point<2>& x) { return -kappa * pi / H * std::sin(pi * x[0] / kL); };
    for (int deg : {1, 2}) {
        std::vector<Real> err;
        for (int n : {8, 16, 32, 64}) {
            const auto m = build_global_mesh<2>(geom2d(), kL / n);
            const auto dm = build_dofmap(m, deg);
            SparseMatrix K = assemble_stiffness(m, dm, kappa);
            DenseVector b = assemble_load<2>(m, dm, f, q);
            apply_dirichlet(K, b, boundary_dofs(m, dm, FacetTag::DirichletOuter), 0.0);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<Real>> ldlt{Eigen::SparseMatrix<Real>(K)};
            const DenseVector u = ldlt.solve(b);
            err.push_back(l2_error<2>(m, dm, u, exact));
        }
        for (std::size_t i = 1; i < err.size(); ++i)
            EXPECT_GE(std::log2(err[i - 1] / err[i]), deg + 0.9) << "m=" << deg << " level " << i;
    }
}

TEST(Evaluate, ReproducesP2Polynomial)
{
    const auto m = build_global_mesh<2>(geom2d(), 1.0 / 160.0);
    const auto dm = build_dofmap(m, 2);
    auto p = [](const Point<2>& x) { return 3.0 + 40.0 * x[0] - 900.0 * x[0] * x[1] + 1600.0 * x[1] * x[1]; };
    DenseVector u(dm.n_dofs);
    for (int i = 0; i < dm.n_dofs; ++i)
        u[i] = p(dm.dof_coords[i]);
    for (Real s : {0.1, 0.37, 0.5, 0.93}) {
        const Point<2> x(s * kL, (1.0 - s * s) * kL);
        EXPECT_NEAR(evaluate<2>(m, dm, u, x), p(x), 1e-12);
    }
    EXPECT_LE(l2_error<2>(m, dm, u, p), 1e-14);
}
