#pragma once

#include "tldd/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace tldd {

enum class SolverMethod { ConjugateGradient, Gmres, DenseDirect, SparseDirect };
enum class Preconditioner { None, Diagonal };

inline const char* to_string(SolverMethod m)
{
    switch (m) {
    case SolverMethod::ConjugateGradient: return "cg";
    case SolverMethod::Gmres: return "gmres";
    case SolverMethod::DenseDirect: return "dense-direct";
    case SolverMethod::SparseDirect: return "sparse-direct";
    }
    return "?";
}

inline SolverMethod parse_solver_method(const std::string& s)
{
    if (s == "cg" || s == "conjugate-gradient")
        return SolverMethod::ConjugateGradient;
    if (s == "gmres" || s == "restarted-minimal-residual")
        return SolverMethod::Gmres;
    if (s == "dense-direct")
        return SolverMethod::DenseDirect;
    if (s == "sparse-direct" || s == "direct")
        return SolverMethod::SparseDirect;
    throw Error(ErrorCode::InvalidConfig, "unknown solver method '" + s + "'");
}

struct SolverConfig {
    SolverMethod method = SolverMethod::SparseDirect;
    Real rel_tol = 1e-12;
    int max_iters = 20000;
    int restart = 50;
    Preconditioner preconditioner = Preconditioner::Diagonal;
};

struct SolveResult {
    DenseVector x;
    int iterations = 0;
    Real relative_residual = 0.0;
};

/// Observer called with (iteration, current iterate) by the Krylov solvers.
using IterateObserver = std::function<void(int, const DenseVector&)>;

namespace detail {

inline DenseVector inverse_diagonal(const SparseMatrix& A, Preconditioner p)
{
    DenseVector d = DenseVector::Ones(A.rows());
    if (p == Preconditioner::Diagonal) {
        const DenseVector diag = A.diagonal();
        for (Eigen::Index i = 0; i < d.size(); ++i)
            d[i] = diag[i] != 0.0 ? 1.0 / diag[i] : 1.0;
    }
    return d;
}

inline Real safe_norm(const DenseVector& b)
{
    const Real n = b.norm();
    return n > 0.0 ? n : 1.0;
}

} // namespace detail

/// Preconditioned conjugate gradients; the relative residual is measured in
/// the unpreconditioned 2-norm.
inline SolveResult conjugate_gradient(const SparseMatrix& A, const DenseVector& b, const DenseVector& x0,
                                      const SolverConfig& cfg, const IterateObserver& observer = {})
{
    const DenseVector dinv = detail::inverse_diagonal(A, cfg.preconditioner);
    const Real bnorm = detail::safe_norm(b);
    SolveResult res;
    res.x = x0;
    DenseVector r = b - A * res.x;
    if (observer)
        observer(0, res.x);
    if (r.norm() <= cfg.rel_tol * bnorm) {
        res.relative_residual = r.norm() / bnorm;
        return res;
    }
    DenseVector z = dinv.cwiseProduct(r);
    DenseVector p = z;
    Real rz = r.dot(z);
    for (int k = 1; k <= cfg.max_iters; ++k) {
        const DenseVector Ap = A * p;
        const Real pAp = p.dot(Ap);
        TLDD_THROW_IF(!(pAp > 0.0), ErrorCode::NoConvergence, "CG breakdown: operator not positive definite");
        const Real alpha = rz / pAp;
        res.x += alpha * p;
        r -= alpha * Ap;
        res.iterations = k;
        if (observer)
            observer(k, res.x);
        if (r.norm() <= cfg.rel_tol * bnorm) {
            res.relative_residual = (b - A * res.x).norm() / bnorm;
            return res;
        }
        z = dinv.cwiseProduct(r);
        const Real rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    throw Error(ErrorCode::NoConvergence, "CG reached max_iters without meeting rel_tol");
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt and Givens
/// rotations; converges on the true relative residual.
inline SolveResult gmres(const SparseMatrix& A, const DenseVector& b, const DenseVector& x0, const SolverConfig& cfg)
{
    const DenseVector dinv = detail::inverse_diagonal(A, cfg.preconditioner);
    const Real bnorm = detail::safe_norm(b);
    const int m = std::max(1, cfg.restart);
    SolveResult res;
    res.x = x0;
    DenseMatrix V(b.size(), m + 1);
    DenseMatrix Hm = DenseMatrix::Zero(m + 1, m);
    DenseVector cs(m), sn(m), g(m + 1);
    int total = 0;
    while (true) {
        DenseVector r = b - A * res.x;
        Real beta = r.norm();
        res.relative_residual = beta / bnorm;
        if (res.relative_residual <= cfg.rel_tol) {
            res.iterations = total;
            return res;
        }
        TLDD_THROW_IF(total >= cfg.max_iters, ErrorCode::NoConvergence, "GMRES reached max_iters");
        V.col(0) = r / beta;
        Hm.setZero();
        g.setZero();
        g[0] = beta;
        int j = 0;
        for (; j < m && total < cfg.max_iters; ++j) {
            ++total;
            DenseVector w = A * dinv.cwiseProduct(V.col(j));
            for (int i = 0; i <= j; ++i) {
                Hm(i, j) = w.dot(V.col(i));
                w -= Hm(i, j) * V.col(i);
            }
            Hm(j + 1, j) = w.norm();
            if (Hm(j + 1, j) > 0.0)
                V.col(j + 1) = w / Hm(j + 1, j);
            for (int i = 0; i < j; ++i) {
                const Real t = cs[i] * Hm(i, j) + sn[i] * Hm(i + 1, j);
                Hm(i + 1, j) = -sn[i] * Hm(i, j) + cs[i] * Hm(i + 1, j);
                Hm(i, j) = t;
            }
            const Real den = std::hypot(Hm(j, j), Hm(j + 1, j));
            cs[j] = den > 0.0 ? Hm(j, j) / den : 1.0;
            sn[j] = den > 0.0 ? Hm(j + 1, j) / den : 0.0;
            Hm(j, j) = den;
            Hm(j + 1, j) = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            if (std::abs(g[j + 1]) <= cfg.rel_tol * bnorm * 0.5 || den == 0.0) {
                ++j;
                break;
            }
        }
        const DenseVector y = Hm.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
        res.x += dinv.cwiseProduct(V.leftCols(j) * y);
    }
}

/// Reusable solver for a fixed operator. Direct methods factor once.
class LinearSolver {
public:
    LinearSolver() = default;

    LinearSolver(const SparseMatrix& A, SolverConfig cfg, bool spd = false)
        : cfg_(cfg)
        , A_(A)
    {
        TLDD_THROW_IF(A.rows() != A.cols(), ErrorCode::DimensionMismatch, "square operator expected");
        if (cfg_.method == SolverMethod::SparseDirect) {
            const Eigen::SparseMatrix<Real> Ac = A;
            if (spd) {
                ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<Real>>>(Ac);
                TLDD_THROW_IF(ldlt_->info() != Eigen::Success, ErrorCode::SingularMatrix, "LDLT factorization failed");
            } else {
                lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<Real>>>();
                lu_->analyzePattern(Ac);
                lu_->factorize(Ac);
                TLDD_THROW_IF(lu_->info() != Eigen::Success, ErrorCode::SingularMatrix, "sparse LU failed");
            }
        } else if (cfg_.method == SolverMethod::DenseDirect) {
            const DenseMatrix Ad = DenseMatrix(A);
            dense_ = std::make_shared<Eigen::FullPivLU<DenseMatrix>>(Ad);
            TLDD_THROW_IF(!dense_->isInvertible(), ErrorCode::SingularMatrix, "dense operator is singular");
        }
    }

    [[nodiscard]] SolveResult solve(const DenseVector& b, const DenseVector* guess = nullptr) const
    {
        TLDD_THROW_IF(b.size() != A_.rows(), ErrorCode::DimensionMismatch, "rhs size mismatch");
        SolveResult r;
        const DenseVector x0 = guess ? *guess : DenseVector::Zero(b.size());
        switch (cfg_.method) {
        case SolverMethod::SparseDirect:
            r.x = ldlt_ ? DenseVector(ldlt_->solve(b)) : DenseVector(lu_->solve(b));
            break;
        case SolverMethod::DenseDirect:
            r.x = dense_->solve(b);
            break;
        case SolverMethod::ConjugateGradient:
            r = conjugate_gradient(A_, b, x0, cfg_);
            break;
        case SolverMethod::Gmres:
            r = gmres(A_, b, x0, cfg_);
            break;
        }
        if (cfg_.method == SolverMethod::SparseDirect || cfg_.method == SolverMethod::DenseDirect) {
            r.relative_residual = (b - A_ * r.x).norm() / detail::safe_norm(b);
            r.iterations = 0;
        }
        iterations_ += r.iterations;
        ++solves_;
        return r;
    }

    [[nodiscard]] DenseVector operator()(const DenseVector& b) const { return solve(b).x; }

    [[nodiscard]] long total_iterations() const { return iterations_; }
    [[nodiscard]] long solve_count() const { return solves_; }
    void reset_counters() const
    {
        iterations_ = 0;
        solves_ = 0;
    }
    [[nodiscard]] const SparseMatrix& matrix() const { return A_; }
    [[nodiscard]] const SolverConfig& config() const { return cfg_; }

private:
    SolverConfig cfg_;
    SparseMatrix A_;
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<Real>>> ldlt_;
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<Real>>> lu_;
    std::shared_ptr<Eigen::FullPivLU<DenseMatrix>> dense_;
    mutable long iterations_ = 0;
    mutable long solves_ = 0;
};

/// One-shot solve of A x = b.
inline SolveResult solve(const SparseMatrix& A, const DenseVector& b, const SolverConfig& cfg)
{
    return LinearSolver(A, cfg).solve(b);
}

using LinearOperator = std::function<void(const DenseVector&, DenseVector&)>;

struct PowerIterationResult {
    Real rho = 0.0;      ///< dominant |eigenvalue|
    Real rayleigh = 0.0; ///< signed Rayleigh quotient v.Mv of the final iterate
    int iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kDefaultPowerSeed = 20240611;

inline constexpr int kPowerBlockSize = 4;

/// Dominant |eigenvalue| of M_theta = (1-theta) I + theta A by block power
/// iteration on a seeded random start: the block is multiplied by M_theta and
/// re-orthonormalized each step, and rho is the largest |Ritz value| of the
/// projected block matrix. The operator is non-symmetric and its dominant
/// eigenvalue can be a complex pair, which a single vector cannot resolve;
/// block = 1 is the classical power method.
/// Not converging within max_iters is reported through `converged`.
inline PowerIterationResult power_iteration_rho(const LinearOperator& apply, int n, Real theta, Real tol,
                                                int max_iters, std::uint64_t seed = kDefaultPowerSeed,
                                                int block = kPowerBlockSize)
{
    PowerIterationResult res;
    res.seed = seed;
    if (n == 0) {
        res.converged = true;
        return res;
    }
    const int p = std::clamp(block, 1, n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> dist(-1.0, 1.0);
    DenseMatrix Q(n, p);
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i)
            Q(i, j) = dist(rng);
    auto orthonormalize = [&](const DenseMatrix& W) -> DenseMatrix {
        Eigen::HouseholderQR<DenseMatrix> qr(W);
        return qr.householderQ() * DenseMatrix::Identity(n, p);
    };
    Q = orthonormalize(Q);
    DenseVector av(n), w(n);
    DenseMatrix W(n, p);
    Real prev = -1.0;
    for (int k = 1; k <= max_iters; ++k) {
        for (int j = 0; j < p; ++j) {
            const DenseVector q = Q.col(j);
            apply(q, av);
            W.col(j) = (1.0 - theta) * q + theta * av;
        }
        res.iterations = k;
        const DenseMatrix H = Q.transpose() * W;
        Eigen::EigenSolver<DenseMatrix> es(H, false);
        const auto ritz = es.eigenvalues();
        Eigen::Index top = 0;
        for (Eigen::Index i = 1; i < ritz.size(); ++i)
            if (std::abs(ritz[i]) > std::abs(ritz[top]))
                top = i;
        res.rho = std::abs(ritz[top]);
        res.rayleigh = ritz[top].real();
        if (W.norm() == 0.0) {
            res.rho = 0.0;
            res.converged = true;
            return res;
        }
        if (prev >= 0.0 && std::abs(res.rho - prev) <= tol * res.rho) {
            res.converged = true;
            return res;
        }
        prev = res.rho;
        Q = orthonormalize(W);
    }
    return res;
}

/// Maximum modulus of the eigenvalues of a dense matrix (Hessenberg reduction
/// followed by the shifted QR iteration of Eigen::EigenSolver).
inline Real dense_spectral_radius(const DenseMatrix& M)
{
    if (M.rows() == 0)
        return 0.0;
    Eigen::EigenSolver<DenseMatrix> es(M, false);
    TLDD_THROW_IF(es.info() != Eigen::Success, ErrorCode::NoConvergence, "dense eigenvalue iteration failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline constexpr int kDenseSpectralLimit = 2000;

/// Dense iteration matrix K_+^{-1} S K_-^{-1} D, built column by column with
/// direct solves.
inline DenseMatrix dense_iteration_matrix(const SparseMatrix& K_plus, const SparseMatrix& S,
                                          const SparseMatrix& K_minus, const SparseMatrix& D)
{
    const Eigen::Index n = K_plus.rows();
    TLDD_THROW_IF(n > kDenseSpectralLimit, ErrorCode::TooLarge, "dense spectral oracle limited to n_+ <= 2000");
    TLDD_THROW_IF(S.rows() != n || S.cols() != K_minus.rows() || D.rows() != K_minus.rows() || D.cols() != n,
                  ErrorCode::DimensionMismatch, "inconsistent block dimensions");
    SolverConfig direct;
    direct.method = SolverMethod::SparseDirect;
    const LinearSolver plus(K_plus, direct), minus(K_minus, direct);
    DenseMatrix M(n, n);
    const Eigen::SparseMatrix<Real> Dc = D;
    for (Eigen::Index j = 0; j < n; ++j) {
        const DenseVector dj = Dc.col(j);
        if (dj.squaredNorm() == 0.0) {
            M.col(j).setZero();
            continue;
        }
        M.col(j) = plus(S * minus(dj));
    }
    return M;
}

inline Real dense_spectral_radius(const SparseMatrix& K_plus, const SparseMatrix& S, const SparseMatrix& K_minus,
                                  const SparseMatrix& D, Real theta)
{
    const DenseMatrix M = dense_iteration_matrix(K_plus, S, K_minus, D);
    const DenseMatrix R = (1.0 - theta) * DenseMatrix::Identity(M.rows(), M.cols()) + theta * M;
    return dense_spectral_radius(R);
}

/// Least-squares polynomial coefficients c[0] + c[1] x (+ c[2] x^2) via
/// column-pivoted Householder QR of the Vandermonde matrix.
inline DenseVector least_squares_fit(std::span<const std::pair<Real, Real>> points, int degree)
{
    TLDD_THROW_IF(degree < 1 || degree > 2, ErrorCode::InvalidConfig, "fit degree must be 1 or 2");
    std::set<Real> distinct;
    for (const auto& p : points)
        distinct.insert(p.first);
    TLDD_THROW_IF(static_cast<int>(distinct.size()) < degree + 1, ErrorCode::RankDeficient,
                  "need at least degree+1 distinct abscissae");
    const auto n = static_cast<Eigen::Index>(points.size());
    DenseMatrix V(n, degree + 1);
    DenseVector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Real xp = 1.0;
        for (int d = 0; d <= degree; ++d) {
            V(i, d) = xp;
            xp *= points[i].first;
        }
        y[i] = points[i].second;
    }
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(V);
    TLDD_THROW_IF(qr.rank() < degree + 1, ErrorCode::RankDeficient, "Vandermonde matrix is rank deficient");
    return qr.solve(y);
}

/// Linear and quadratic fits of rho against kappa_-/kappa_+, and the
/// proportionality constant C_tilde = -a1 of rho ~ C_tilde |x - 1|.
struct SpectralFit {
    Real a0 = 0.0, a1 = 0.0;
    Real b0 = 0.0, b1 = 0.0, b2 = 0.0;
    Real C_tilde = 0.0;
    Real r2_linear = 0.0;

    /// |a1 x + a0|
    [[nodiscard]] Real predict(Real x) const { return std::abs(a1 * x + a0); }
};

inline SpectralFit fit_spectral_law(std::span<const std::pair<Real, Real>> points)
{
    SpectralFit f;
    const DenseVector lin = least_squares_fit(points, 1);
    f.a0 = lin[0];
    f.a1 = lin[1];
    const DenseVector quad = least_squares_fit(points, 2);
    f.b0 = quad[0];
    f.b1 = quad[1];
    f.b2 = quad[2];
    f.C_tilde = -f.a1;
    Real mean = 0.0;
    for (const auto& p : points)
        mean += p.second;
    mean /= static_cast<Real>(points.size());
    Real ss_tot = 0.0, ss_res = 0.0;
    for (const auto& p : points) {
        ss_tot += (p.second - mean) * (p.second - mean);
        const Real r = p.second - (f.a0 + f.a1 * p.first);
        ss_res += r * r;
    }
    f.r2_linear = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

} // namespace tldd
