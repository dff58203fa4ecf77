#pragma once

#include "tldd/common.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace tldd {

/// Quadrature on the reference simplex of dimension RefDim. Points are stored
/// as barycentric coordinates (RefDim+1 entries); weights sum to the reference
/// measure 1/RefDim!.
template <int RefDim>
struct QuadratureRule {
    std::vector<std::array<Real, RefDim + 1>> points;
    std::vector<Real> weights;
    int exactness = 0;

    [[nodiscard]] std::size_t size() const { return weights.size(); }
};

namespace detail {

/// Legendre pair (P_n(z), P_{n-1}(z)) by the three-term recurrence.
inline std::pair<Real, Real> legendre_pair(int n, Real z)
{
    Real p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
        const Real p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return {p1, p0};
}

/// Gauss-Legendre nodes/weights on [0,1] via Newton on P_n.
inline void gauss_legendre_01(int n, std::vector<Real>& x, std::vector<Real>& w)
{
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        Real z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [pn, pm] = legendre_pair(n, z);
            const Real dz = pn / (n * (z * pn - pm) / (z * z - 1.0));
            z -= dz;
            if (std::abs(dz) < 1e-16)
                break;
        }
        const auto [pn, pm] = legendre_pair(n, z);
        const Real dp = n * (z * pn - pm) / (z * z - 1.0);
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
}

inline int gauss_points_for(int degree) { return std::max(1, (degree + 2) / 2); }

} // namespace detail

/// Collapsed-coordinate (conical product) rule, exact for polynomials of
/// total degree `degree`. All weights are positive.
template <int RefDim>
QuadratureRule<RefDim> simplex_rule(int degree)
{
    static_assert(RefDim >= 1 && RefDim <= 3);
    QuadratureRule<RefDim> rule;
    rule.exactness = degree;
    std::vector<Real> x0, w0, x1, w1, x2, w2;
    if constexpr (RefDim == 1) {
        detail::gauss_legendre_01(detail::gauss_points_for(degree), x0, w0);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            rule.points.push_back({1.0 - x0[i], x0[i]});
            rule.weights.push_back(w0[i]);
        }
    } else if constexpr (RefDim == 2) {
        // x = u, y = v (1-u), jacobian (1-u)
        detail::gauss_legendre_01(detail::gauss_points_for(degree + 1), x0, w0);
        detail::gauss_legendre_01(detail::gauss_points_for(degree), x1, w1);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            for (std::size_t j = 0; j < x1.size(); ++j) {
                const Real u = x0[i], v = x1[j];
                const Real a = u, b = v * (1.0 - u);
                rule.points.push_back({1.0 - a - b, a, b});
                rule.weights.push_back(w0[i] * w1[j] * (1.0 - u));
            }
        }
    } else {
        // x = u, y = v (1-u), z = w (1-u)(1-v), jacobian (1-u)^2 (1-v)
        detail::gauss_legendre_01(detail::gauss_points_for(degree + 2), x0, w0);
        detail::gauss_legendre_01(detail::gauss_points_for(degree + 1), x1, w1);
        detail::gauss_legendre_01(detail::gauss_points_for(degree), x2, w2);
        for (std::size_t i = 0; i < x0.size(); ++i)
            for (std::size_t j = 0; j < x1.size(); ++j)
                for (std::size_t k = 0; k < x2.size(); ++k) {
                    const Real u = x0[i], v = x1[j], t = x2[k];
                    const Real a = u, b = v * (1.0 - u), c = t * (1.0 - u) * (1.0 - v);
                    rule.points.push_back({1.0 - a - b - c, a, b, c});
                    rule.weights.push_back(w0[i] * w1[j] * w2[k] * (1.0 - u) * (1.0 - u) * (1.0 - v));
                }
    }
    return rule;
}

/// Uniform refinement of a reference-simplex rule into n^RefDim congruent
/// sub-simplices (composite rule). Used for sharply peaked boundary data.
template <int RefDim>
QuadratureRule<RefDim> composite_rule(const QuadratureRule<RefDim>& base, int n)
{
    if (n <= 1)
        return base;
    QuadratureRule<RefDim> out;
    out.exactness = base.exactness;
    const Real scale = std::pow(1.0 / n, RefDim);
    auto push = [&](const std::array<Point<RefDim>, RefDim + 1>& verts) {
        for (std::size_t q = 0; q < base.size(); ++q) {
            Point<RefDim> x = Point<RefDim>::Zero();
            for (int k = 0; k <= RefDim; ++k)
                x += base.points[q][k] * verts[k];
            std::array<Real, RefDim + 1> bary{};
            Real s = 0.0;
            for (int k = 0; k < RefDim; ++k) {
                bary[k + 1] = x[k];
                s += x[k];
            }
            bary[0] = 1.0 - s;
            out.points.push_back(bary);
            out.weights.push_back(base.weights[q] * scale);
        }
    };
    const Real h = 1.0 / n;
    if constexpr (RefDim == 1) {
        for (int i = 0; i < n; ++i) {
            Point<1> a, b;
            a << i * h;
            b << (i + 1) * h;
            push({a, b});
        }
    } else if constexpr (RefDim == 2) {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i + j < n; ++i) {
                const Point<2> p00(i * h, j * h), p10((i + 1) * h, j * h), p01(i * h, (j + 1) * h);
                push({p00, p10, p01});
                if (i + j + 1 < n) {
                    const Point<2> p11((i + 1) * h, (j + 1) * h);
                    push({p10, p11, p01});
                }
            }
    } else {
        static_assert(RefDim <= 2, "composite rules are only needed on facets");
    }
    return out;
}

} // namespace tldd
