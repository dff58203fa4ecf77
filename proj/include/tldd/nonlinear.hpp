#pragma once

#include "tldd/common.hpp"
#include "tldd/coupling.hpp"
#include "tldd/dd_solver.hpp"
#include "tldd/fem.hpp"
#include "tldd/fitted.hpp"
#include "tldd/linalg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tldd {

/// Conductivity table kappa(T): piecewise-linear between the nodes, constant
/// beyond the first and last node.
class MaterialCurve {
public:
    MaterialCurve() = default;

    explicit MaterialCurve(std::vector<std::pair<Real, Real>> table)
        : table_(std::move(table))
    {
        TLDD_THROW_IF(table_.empty(), ErrorCode::InvalidConfig, "material curve needs at least one point");
        for (std::size_t i = 0; i < table_.size(); ++i) {
            TLDD_THROW_IF(!(table_[i].second > 0.0), ErrorCode::NonpositiveCoefficient,
                          "conductivities must be positive");
            TLDD_THROW_IF(i > 0 && !(table_[i].first > table_[i - 1].first), ErrorCode::InvalidConfig,
                          "curve temperatures must be strictly increasing");
        }
    }

    static MaterialCurve constant(Real kappa) { return MaterialCurve({{0.0, kappa}}); }

    /// kappa0 (1 + rel_slope (T - T0)) on [T0, T1], clamped outside.
    static MaterialCurve linear(Real kappa0, Real rel_slope, Real T0, Real T1)
    {
        return MaterialCurve({{T0, kappa0}, {T1, kappa0 * (1.0 + rel_slope * (T1 - T0))}});
    }

    [[nodiscard]] Real operator()(Real T) const
    {
        TLDD_THROW_IF(table_.empty(), ErrorCode::InvalidConfig, "empty material curve");
        if (T <= table_.front().first)
            return table_.front().second;
        if (T >= table_.back().first)
            return table_.back().second;
        const auto it = std::upper_bound(table_.begin(), table_.end(), T,
                                         [](Real t, const std::pair<Real, Real>& p) { return t < p.first; });
        const auto& [T1, k1] = *it;
        const auto& [T0, k0] = *(it - 1);
        return k0 + (k1 - k0) * (T - T0) / (T1 - T0);
    }

    [[nodiscard]] Real max_value() const
    {
        Real m = 0.0;
        for (const auto& p : table_)
            m = std::max(m, p.second);
        return m;
    }

    [[nodiscard]] bool is_constant() const
    {
        return std::all_of(table_.begin(), table_.end(), [&](const auto& p) { return p.second == table_[0].second; });
    }

    [[nodiscard]] const std::vector<std::pair<Real, Real>>& table() const { return table_; }

private:
    std::vector<std::pair<Real, Real>> table_;
};

/// Two-column CSV `T,kappa` with a header line.
inline MaterialCurve read_curve_csv(std::istream& is)
{
    std::string line;
    TLDD_THROW_IF(!std::getline(is, line), ErrorCode::IoError, "empty curve file");
    std::vector<std::pair<Real, Real>> t;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::stringstream ss(line);
        std::string a, b;
        TLDD_THROW_IF(!std::getline(ss, a, ',') || !std::getline(ss, b), ErrorCode::IoError,
                      "curve rows need two fields: '" + line + "'");
        try {
            t.emplace_back(std::stod(a), std::stod(b));
        } catch (const std::exception&) {
            throw Error(ErrorCode::IoError, "non-numeric curve row: '" + line + "'");
        }
    }
    return MaterialCurve(std::move(t));
}

inline MaterialCurve read_curve_csv(const std::string& path)
{
    std::ifstream is(path);
    TLDD_THROW_IF(!is, ErrorCode::IoError, "cannot open '" + path + "'");
    return read_curve_csv(is);
}

struct NonlinearConfig {
    Real kappa_plus_B = 0.3; ///< constant extension of kappa_+ inside Omega_B
    Real picard_tol = 1e-6;  ///< relative L2 change
    int picard_max = 100;
    Real damping = 1.0;
    std::optional<Real> alpha; ///< unset: default_alpha(max kappa_B, h_-)
    /// 0: every Picard step runs the DD to its tolerance; k > 0: k DD sweeps
    /// per Picard step, coefficients refrozen after each.
    int inner_sweeps = 0;

    void validate() const
    {
        TLDD_THROW_IF(!(kappa_plus_B > 0.0), ErrorCode::NonpositiveCoefficient, "kappa_plus_B must be positive");
        TLDD_THROW_IF(!(picard_tol > 0.0) || picard_max < 1, ErrorCode::InvalidConfig,
                      "picard_tol and picard_max must be positive");
        TLDD_THROW_IF(!(damping > 0.0 && damping <= 1.0), ErrorCode::InvalidConfig, "damping must lie in (0,1]");
        TLDD_THROW_IF(inner_sweeps < 0, ErrorCode::InvalidConfig, "inner_sweeps must be non-negative");
        TLDD_THROW_IF(alpha && !(*alpha > 0.0), ErrorCode::InvalidConfig, "alpha must be positive");
    }
};

struct NonlinearResult {
    DenseVector T_plus;
    DenseVector T_minus;
    int picard_iterations = 0; ///< Picard steps after the initial solve
    bool converged = false;
    std::vector<Real> change_history;
    std::vector<int> dd_iterations; ///< per linear solve, initial solve first
    long global_inner_iterations = 0;
    long local_inner_iterations = 0;
    double time_s = 0.0;

    [[nodiscard]] Real mean_global_inner() const
    {
        return dd_iterations.empty() ? 0.0
                                     : static_cast<Real>(global_inner_iterations) /
                                           static_cast<Real>(dd_iterations.size());
    }
};

namespace detail {

template <int Dim>
Real centroid_value(const DofMap<Dim>& dm, const DenseVector& u, int cell)
{
    std::array<Real, Dim + 1> lam;
    lam.fill(1.0 / (Dim + 1));
    const auto phi = basis_values<Dim>(dm.degree, lam);
    const auto dofs = dm.dofs_of(cell);
    Real s = 0.0;
    for (int i = 0; i < dm.dofs_per_cell; ++i)
        s += phi[i] * u[dofs[i]];
    return s;
}

template <int Dim>
Real l2_norm(const StructuredMesh<Dim>& mesh, const DofMap<Dim>& dm, const DenseVector& u)
{
    return l2_error<Dim>(mesh, dm, u, [](const Point<Dim>&) { return 0.0; });
}

} // namespace detail

/// Coefficients frozen at (T_+, T_-): kappa_A(T_+) outside the strip,
/// kappa_{+,B} inside; kappa_B(T_-) on the local mesh. Cell values use the
/// centroid temperature, jumps the local cell owning the facet.
template <int Dim>
FrozenCoefficients freeze_coefficients(const Discretization<Dim>& d, const MaterialCurve& kappa_A,
                                       const MaterialCurve& kappa_B, Real kappa_plus_B, const DenseVector& T_plus,
                                       const DenseVector& T_minus)
{
    FrozenCoefficients c;
    const int ng = d.global.n_cells(), nl = d.local.n_cells();
    c.kappa_plus.resize(ng);
    c.source_ratio.assign(ng, 1.0);
    for (int e = 0; e < ng; ++e) {
        if (in_strip(d.global, d.geom, e)) {
            c.kappa_plus[e] = kappa_plus_B;
            const Real T = evaluate<Dim>(d.local, d.local_dofs, T_minus, cell_centroid(d.global, e));
            c.source_ratio[e] = kappa_plus_B / kappa_B(T);
        } else {
            c.kappa_plus[e] = kappa_A(detail::centroid_value(d.global_dofs, T_plus, e));
        }
    }
    c.kappa_minus.resize(nl);
    for (int e = 0; e < nl; ++e)
        c.kappa_minus[e] = kappa_B(detail::centroid_value(d.local_dofs, T_minus, e));
    for (const auto& f : interface_facets(d.local))
        c.jump.push_back(kappa_plus_B - c.kappa_minus[f.cell]);
    c.flux_ratio.assign(d.global.boundary_facets.size(), 1.0);
    for (std::size_t i = 0; i < d.global.boundary_facets.size(); ++i) {
        const auto& bf = d.global.boundary_facets[i];
        if (bf.tag != FacetTag::NeumannTop)
            continue;
        const Real T = evaluate<Dim>(d.local, d.local_dofs, T_minus, facet_centroid(d.global, bf.vertices));
        c.flux_ratio[i] = kappa_plus_B / kappa_B(T);
    }
    return c;
}

template <int Dim>
struct InteriorFacet {
    std::array<int, Dim> vertices{};
    int cell_a = -1, face_a = -1; ///< face_a: vertex of cell_a opposite the facet
    int cell_b = -1, face_b = -1;
};

template <int Dim>
std::vector<InteriorFacet<Dim>> interior_facets(const StructuredMesh<Dim>& mesh)
{
    std::map<std::array<int, Dim>, InteriorFacet<Dim>> seen;
    std::vector<InteriorFacet<Dim>> out;
    for (int c = 0; c < mesh.n_cells(); ++c)
        for (int f = 0; f <= Dim; ++f) {
            std::array<int, Dim> key{};
            for (int i = 0, k = 0; i <= Dim; ++i)
                if (i != f)
                    key[k++] = mesh.cells[c][i];
            std::sort(key.begin(), key.end());
            auto [it, fresh] = seen.try_emplace(key);
            if (fresh) {
                it->second.vertices = key;
                it->second.cell_a = c;
                it->second.face_a = f;
            } else {
                it->second.cell_b = c;
                it->second.face_b = f;
                out.push_back(it->second);
            }
        }
    return out;
}

/// Interior-facet part of the flux-jump correction when kappa_B is frozen per
/// cell. Writing the Omega_B correction int (kappa_{+,B} - kappa_B) grad T_- .
/// grad v cell by cell and integrating by parts leaves, on a facet between
/// cells a and b with normal flux g (continuous across the facet),
///   kappa_{+,B} (1/kappa_a - 1/kappa_b) int_F g v,
/// with g taken as the average of kappa grad T_- . n_a from both sides. Zero
/// when kappa_B is constant. Rows = global dofs, cols = local dofs, sign as S.
template <int Dim>
SparseMatrix assemble_interior_jump_S(const Discretization<Dim>& d, Real kappa_plus_B,
                                      std::span<const Real> kappa_minus)
{
    const auto& L = d.local;
    const auto& ldm = d.local_dofs;
    const auto& gdm = d.global_dofs;
    const int m = std::max(gdm.degree, ldm.degree);
    const auto rule = simplex_rule<Dim - 1>(2 * m + 1);
    const Real ref_measure = Dim == 2 ? 1.0 : 0.5;
    std::vector<Eigen::Triplet<Real>> trip;
    for (const auto& f : interior_facets(L)) {
        const Real ka = kappa_minus[f.cell_a], kb = kappa_minus[f.cell_b];
        if (ka == kb)
            continue;
        const Real w = kappa_plus_B * (1.0 / ka - 1.0 / kb);
        const BoundaryFacet<Dim> fa{f.vertices, FacetTag::InterfaceGamma, f.cell_a, f.face_a};
        const BoundaryFacet<Dim> fb{f.vertices, FacetTag::InterfaceGamma, f.cell_b, f.face_b};
        const Point<Dim> n = facet_outward_normal(L, fa);
        const Real meas = facet_measure(L, f.vertices);
        const auto glam_a = cell_geometry(L, f.cell_a).barycentric_gradients();
        const auto glam_b = cell_geometry(L, f.cell_b).barycentric_gradients();
        const auto dofs_a = ldm.dofs_of(f.cell_a);
        const auto dofs_b = ldm.dofs_of(f.cell_b);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            std::array<Real, Dim> fbary{};
            Point<Dim> x = Point<Dim>::Zero();
            for (int a = 0; a < Dim; ++a) {
                fbary[a] = rule.points[q][a];
                x += fbary[a] * L.vertices[f.vertices[a]];
            }
            const Real wq = rule.weights[q] * meas / ref_measure;
            const auto ga = basis_gradients<Dim>(ldm.degree, detail::facet_point_in_cell<Dim>(fa, L.cells[f.cell_a], fbary),
                                                 glam_a);
            const auto gb = basis_gradients<Dim>(ldm.degree, detail::facet_point_in_cell<Dim>(fb, L.cells[f.cell_b], fbary),
                                                 glam_b);
            const auto gl = locate_point(d.global, x);
            const auto phi = basis_values<Dim>(gdm.degree, gl.barycentric);
            const auto gdofs = gdm.dofs_of(gl.cell);
            for (int i = 0; i < gdm.dofs_per_cell; ++i) {
                if (phi[i] == 0.0)
                    continue;
                const Real c = -w * wq * phi[i] * 0.5;
                for (int j = 0; j < ldm.dofs_per_cell; ++j) {
                    trip.emplace_back(gdofs[i], dofs_a[j], c * ka * ga[j].dot(n));
                    trip.emplace_back(gdofs[i], dofs_b[j], c * kb * gb[j].dot(n));
                }
            }
        }
    }
    return detail::from_triplets(gdm.n_dofs, ldm.n_dofs, trip);
}

/// Coupled operators for frozen nonlinear coefficients: the per-facet build
/// plus the interior-facet jump term.
template <int Dim>
CoupledOperators build_frozen_operators(const Discretization<Dim>& d, const ProblemData<Dim>& data,
                                        const FrozenCoefficients& coef, Real kappa_plus_B, Real alpha)
{
    auto ops = build_coupled_operators(d, data, coef, alpha);
    SparseMatrix extra = assemble_interior_jump_S(d, kappa_plus_B, std::span<const Real>(coef.kappa_minus));
    zero_rows(extra, ops.dirichlet_plus);
    ops.S += extra;
    return ops;
}

/// Picard linearization around the Two-level DD. Starts from T = T_D; the
/// first (initial) solve uses coefficients frozen there and the DD's default
/// start, later steps warm-start from the current T_+.
template <int Dim>
NonlinearResult picard_two_level(const Discretization<Dim>& d, const ProblemData<Dim>& data,
                                 const MaterialCurve& kappa_A, const MaterialCurve& kappa_B,
                                 const NonlinearConfig& nl, const DDConfig& dd)
{
    nl.validate();
    dd.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Real alpha = nl.alpha ? *nl.alpha : default_alpha(kappa_B.max_value(), d.h_minus);
    NonlinearResult res;
    DenseVector Tp = DenseVector::Constant(d.global_dofs.n_dofs, data.T_D);
    DenseVector Tm = DenseVector::Constant(d.local_dofs.n_dofs, data.T_D);
    DDConfig inner = dd;
    if (nl.inner_sweeps > 0) {
        inner.max_iters = nl.inner_sweeps;
        inner.tol = std::numeric_limits<Real>::min(); // run exactly inner_sweeps sweeps
    }
    for (int k = 0; k <= nl.picard_max; ++k) {
        const auto coef = freeze_coefficients(d, kappa_A, kappa_B, nl.kappa_plus_B, Tp, Tm);
        const auto ops = build_frozen_operators(d, data, coef, nl.kappa_plus_B, alpha);
        DDOptions opts;
        if (k > 0)
            opts.initial_guess = Tp;
        const auto rep = run_two_level_dd(ops, inner, opts);
        TLDD_THROW_IF(rep.status == DDStatus::Diverged || !std::isfinite(rep.T_plus.norm()),
                      ErrorCode::PicardNoConvergence, "inner Two-level DD diverged at Picard step " + std::to_string(k));
        res.dd_iterations.push_back(rep.iterations);
        res.global_inner_iterations += rep.global_inner_iterations;
        res.local_inner_iterations += rep.local_inner_iterations;
        const DenseVector Np = nl.damping * rep.T_plus + (1.0 - nl.damping) * Tp;
        const DenseVector Nm = nl.damping * rep.T_minus + (1.0 - nl.damping) * Tm;
        const Real dp = detail::l2_norm<Dim>(d.global, d.global_dofs, Np - Tp);
        const Real dm = detail::l2_norm<Dim>(d.local, d.local_dofs, Nm - Tm);
        const Real np = detail::l2_norm<Dim>(d.global, d.global_dofs, Np);
        const Real nm = detail::l2_norm<Dim>(d.local, d.local_dofs, Nm);
        const Real change = std::sqrt(dp * dp + dm * dm) / std::sqrt(np * np + nm * nm);
        Tp = Np;
        Tm = Nm;
        if (k == 0)
            continue;
        res.change_history.push_back(change);
        res.picard_iterations = k;
        if (change < nl.picard_tol) {
            res.converged = true;
            break;
        }
    }
    res.T_plus = std::move(Tp);
    res.T_minus = std::move(Tm);
    res.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    TLDD_THROW_IF(!res.converged, ErrorCode::PicardNoConvergence,
                  "Picard iteration did not reach picard_tol in " + std::to_string(nl.picard_max) + " steps");
    return res;
}

template <int Dim>
struct MonolithicPicardResult {
    FittedResult<Dim> fitted; ///< mesh, dofs, last coefficients and solution
    int picard_iterations = 0;
    bool converged = false;
    std::vector<Real> change_history;
    long linear_iterations = 0;
    double time_s = 0.0;
};

/// Picard on the fitted mesh: kappa_A(T) below gamma_i, kappa_B(T) above, per
/// cell at the centroid temperature, starting from T = T_D.
template <int Dim>
MonolithicPicardResult<Dim> picard_monolithic(const GeometryConfig& geom, Real h_plus, Real h_minus, int degree,
                                              RefinementMode mode, const ProblemData<Dim>& data,
                                              const MaterialCurve& kappa_A, const MaterialCurve& kappa_B,
                                              const NonlinearConfig& nl, const SolverConfig& solver = {},
                                              const LoadOptions& load_opts = {})
{
    nl.validate();
    const auto t0 = std::chrono::steady_clock::now();
    MonolithicPicardResult<Dim> out;
    auto& r = out.fitted;
    r.mesh = build_fitted_mesh<Dim>(geom, h_plus, h_minus, mode);
    r.dofs = build_dofmap(r.mesh, degree);
    DenseVector T = DenseVector::Constant(r.dofs.n_dofs, data.T_D);
    std::vector<char> strip(r.mesh.n_cells());
    for (int c = 0; c < r.mesh.n_cells(); ++c)
        strip[c] = in_strip(r.mesh, geom, c);
    r.kappa.resize(r.mesh.n_cells());
    for (int k = 0; k <= nl.picard_max; ++k) {
        for (int c = 0; c < r.mesh.n_cells(); ++c) {
            const Real Tc = detail::centroid_value(r.dofs, T, c);
            r.kappa[c] = strip[c] ? kappa_B(Tc) : kappa_A(Tc);
        }
        solve_fitted(r, data, solver, load_opts);
        TLDD_THROW_IF(!r.converged, ErrorCode::PicardNoConvergence,
                      "linear solve failed at monolithic Picard step " + std::to_string(k));
        out.linear_iterations += r.iterations;
        const DenseVector N = nl.damping * r.solution + (1.0 - nl.damping) * T;
        const Real change = detail::l2_norm<Dim>(r.mesh, r.dofs, N - T) / detail::l2_norm<Dim>(r.mesh, r.dofs, N);
        T = N;
        if (k == 0)
            continue;
        out.change_history.push_back(change);
        out.picard_iterations = k;
        if (change < nl.picard_tol) {
            out.converged = true;
            break;
        }
    }
    r.solution = T;
    out.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    TLDD_THROW_IF(!out.converged, ErrorCode::PicardNoConvergence,
                  "monolithic Picard did not reach picard_tol in " + std::to_string(nl.picard_max) + " steps");
    return out;
}

/// Volume mean of kappa_B(T) over Omega_B for a fitted solution.
template <int Dim>
Real strip_mean_conductivity(const FittedResult<Dim>& r, const GeometryConfig& geom, const MaterialCurve& kappa_B)
{
    Real s = 0.0, v = 0.0;
    for (int c = 0; c < r.mesh.n_cells(); ++c) {
        if (!in_strip(r.mesh, geom, c))
            continue;
        const Real vol = cell_volume(r.mesh, c);
        s += vol * kappa_B(detail::centroid_value(r.dofs, r.solution, c));
        v += vol;
    }
    TLDD_THROW_IF(v == 0.0, ErrorCode::InvalidGeometry, "fitted mesh has no cells in Omega_B");
    return s / v;
}

struct KappaPlusBRow {
    Real kappa_plus_B = 0.0;
    int picard_iterations = 0;
    bool converged = false;
    Real mean_global_inner = 0.0;
    double time_s = 0.0;
};

/// Picard two-level runs over a list of kappa_{+,B}; non-convergence is
/// recorded, not thrown.
template <int Dim>
std::vector<KappaPlusBRow> sweep_kappa_plus_B(const Discretization<Dim>& d, const ProblemData<Dim>& data,
                                              const MaterialCurve& kappa_A, const MaterialCurve& kappa_B,
                                              std::span<const Real> values, NonlinearConfig nl, const DDConfig& dd)
{
    std::vector<KappaPlusBRow> rows;
    for (Real v : values) {
        nl.kappa_plus_B = v;
        KappaPlusBRow row;
        row.kappa_plus_B = v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto r = picard_two_level(d, data, kappa_A, kappa_B, nl, dd);
            row.picard_iterations = r.picard_iterations;
            row.converged = true;
            row.mean_global_inner = r.mean_global_inner();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PicardNoConvergence)
                throw;
            row.picard_iterations = nl.picard_max;
        }
        row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }
    return rows;
}

/// lo, lo + step, ..., hi (n values).
inline std::vector<Real> linspace(Real lo, Real hi, int n)
{
    TLDD_THROW_IF(n < 1 || (n == 1 && lo != hi), ErrorCode::InvalidConfig, "linspace needs n >= 2 for lo != hi");
    std::vector<Real> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<Real>(i) / static_cast<Real>(n - 1);
    return v;
}

} // namespace tldd
