#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "qflow/errors.hpp"
#include "qflow/params.hpp"

namespace qflow {

template <int D>
using Mat = std::array<std::array<double, D>, D>;

/// Symmetric traceless 2x2 tensor [[p, q], [q, -p]].
struct QTensor2 {
    static constexpr int dim = 2;
    double p = 0.0;
    double q = 0.0;

    [[nodiscard]] Mat<2> matrix() const { return {{{p, q}, {q, -p}}}; }
    /// tr(Q^2) = 2(p^2 + q^2).
    [[nodiscard]] double trace_sq() const { return 2.0 * (p * p + q * q); }
    [[nodiscard]] double h2() const { return p * p + q * q; }

    friend QTensor2 operator+(QTensor2 x, QTensor2 y) { return {x.p + y.p, x.q + y.q}; }
    friend QTensor2 operator-(QTensor2 x, QTensor2 y) { return {x.p - y.p, x.q - y.q}; }
    friend QTensor2 operator*(double s, QTensor2 x) { return {s * x.p, s * x.q}; }
    friend bool operator==(const QTensor2&, const QTensor2&) = default;
};

/// Symmetric traceless 3x3 tensor stored by five independent entries;
/// the (3,3) entry is -(xx + yy).
struct QTensor3 {
    static constexpr int dim = 3;
    double xx = 0.0;
    double xy = 0.0;
    double xz = 0.0;
    double yy = 0.0;
    double yz = 0.0;

    [[nodiscard]] double zz() const { return -(xx + yy); }

    [[nodiscard]] Mat<3> matrix() const {
        return {{{xx, xy, xz}, {xy, yy, yz}, {xz, yz, zz()}}};
    }

    /// Projects an arbitrary 3x3 matrix onto its symmetric traceless part.
    static QTensor3 from_matrix(const Mat<3>& m) {
        const double t = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        return {m[0][0] - t, 0.5 * (m[0][1] + m[1][0]), 0.5 * (m[0][2] + m[2][0]), m[1][1] - t,
                0.5 * (m[1][2] + m[2][1])};
    }

    static QTensor3 diagonal(double l1, double l2) { return {l1, 0.0, 0.0, l2, 0.0}; }

    [[nodiscard]] double trace_sq() const {
        const double z = zz();
        return xx * xx + yy * yy + z * z + 2.0 * (xy * xy + xz * xz + yz * yz);
    }

    [[nodiscard]] double determinant() const {
        const double z = zz();
        return xx * (yy * z - yz * yz) - xy * (xy * z - yz * xz) + xz * (xy * yz - yy * xz);
    }

    /// tr(Q^3) = 3 det(Q) for traceless Q.
    [[nodiscard]] double trace_cube() const { return 3.0 * determinant(); }

    friend QTensor3 operator+(QTensor3 x, QTensor3 y) {
        return {x.xx + y.xx, x.xy + y.xy, x.xz + y.xz, x.yy + y.yy, x.yz + y.yz};
    }
    friend QTensor3 operator-(QTensor3 x, QTensor3 y) {
        return {x.xx - y.xx, x.xy - y.xy, x.xz - y.xz, x.yy - y.yy, x.yz - y.yz};
    }
    friend QTensor3 operator*(double s, QTensor3 x) {
        return {s * x.xx, s * x.xy, s * x.xz, s * x.yy, s * x.yz};
    }
    friend bool operator==(const QTensor3&, const QTensor3&) = default;
};

inline double frobenius_norm(const QTensor2& Q) { return std::sqrt(Q.trace_sq()); }
inline double frobenius_norm(const QTensor3& Q) { return std::sqrt(Q.trace_sq()); }

/// Tensor-valued square: Q^2 as a full matrix.
template <int D>
Mat<D> square(const Mat<D>& m) {
    Mat<D> out{};
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
            for (int k = 0; k < D; ++k) out[i][j] += m[i][k] * m[k][j];
    return out;
}

inline std::array<double, 2> eigenvalues(const QTensor2& Q) {
    const double h = std::sqrt(Q.p * Q.p + Q.q * Q.q);
    return {-h, h};
}

namespace detail {

inline double det3(double a, double b, double c, double d, double e, double f, double g, double h,
                   double i) {
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
}

/// Discriminant prod_{i<j}(l_i - l_j)^2 of a symmetric 3x3 matrix, evaluated
/// as the Gram determinant of {I, A, A^2} (trace inner product) expanded by
/// Cauchy-Binet into a sum of squared 3x3 minors. Near a double eigenvalue
/// this stays accurate to O(eps |A|^6), where the invariant form
/// 4 J2^3 - 27 J3^2 cancels catastrophically.
inline double discriminant(const Mat<3>& A) {
    const Mat<3> A2 = square<3>(A);
    constexpr double r2 = std::numbers::sqrt2;
    // Rows: the six independent entries of I, A, A^2, off-diagonals scaled by sqrt(2).
    const std::array<std::array<double, 3>, 6> rows{{
        {1.0, A[0][0], A2[0][0]},
        {1.0, A[1][1], A2[1][1]},
        {1.0, A[2][2], A2[2][2]},
        {0.0, r2 * A[0][1], r2 * A2[0][1]},
        {0.0, r2 * A[0][2], r2 * A2[0][2]},
        {0.0, r2 * A[1][2], r2 * A2[1][2]},
    }};
    double sum = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j)
            for (int k = j + 1; k < 6; ++k) {
                const auto& x = rows[i];
                const auto& y = rows[j];
                const auto& z = rows[k];
                const double m = det3(x[0], x[1], x[2], y[0], y[1], y[2], z[0], z[1], z[2]);
                sum += m * m;
            }
    return sum;
}

}  // namespace detail

/// Closed-form trigonometric eigenvalues of a symmetric traceless 3x3
/// tensor, ascending. The third value is formed as minus the sum of the
/// other two so the trace vanishes to rounding.
inline std::array<double, 3> eigenvalues(const QTensor3& Q) {
    const double j2 = 0.5 * Q.trace_sq();
    if (j2 == 0.0) return {0.0, 0.0, 0.0};
    const double rho = std::sqrt(j2 / 3.0);
    const double rho3 = rho * rho * rho;
    const double j3 = Q.determinant();
    const double sin3 = std::sqrt(detail::discriminant(Q.matrix()) / 108.0);
    const double psi = std::atan2(sin3 / rho3, 0.5 * j3 / rho3) / 3.0;
    constexpr double third_turn = 2.0 * std::numbers::pi / 3.0;
    const double hi = 2.0 * rho * std::cos(psi);
    const double lo = 2.0 * rho * std::cos(psi + third_turn);
    std::array<double, 3> ev{lo, -(hi + lo), hi};
    std::sort(ev.begin(), ev.end());
    return ev;
}

inline QTensor2 from_director(const std::array<double, 2>& n, double s) {
    require(std::abs(std::hypot(n[0], n[1]) - 1.0) <= 1e-12, "director must be a unit vector");
    return {s * (n[0] * n[0] - 0.5), s * n[0] * n[1]};
}

inline QTensor3 from_director(const std::array<double, 3>& n, double s) {
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    require(std::abs(len - 1.0) <= 1e-12, "director must be a unit vector");
    constexpr double third = 1.0 / 3.0;
    return {s * (n[0] * n[0] - third), s * n[0] * n[1], s * n[0] * n[2], s * (n[1] * n[1] - third),
            s * n[1] * n[2]};
}

/// theta * (x (x) x / |x|^2 - I/2), the radially symmetric hedgehog tensor.
inline QTensor2 hedgehog_tensor(const std::array<double, 2>& x, double theta) {
    const double r2 = x[0] * x[0] + x[1] * x[1];
    require(r2 > 0.0, "hedgehog ansatz is singular at the origin");
    return {theta * (x[0] * x[0] / r2 - 0.5), theta * x[0] * x[1] / r2};
}

struct PhysicalityInterval {
    double lo = 0.0;
    double hi = 0.0;
    int dim = 2;
};

/// Eigenvalue interval preserved by the simplified flow: symmetric radius
/// sqrt(|a|/2c) in 2D, [-s+/3, 2s+/3] in 3D with s+ = (b + sqrt(b^2-24ac))/4c.
inline PhysicalityInterval physical_interval(const LdGParams& params, int d) {
    require(params.c > 0.0, "physicality interval needs c > 0");
    if (d == 2) {
        const double radius = std::sqrt(std::abs(params.a) / (2.0 * params.c));
        require(radius > 0.0, "empty physicality radius");
        return {-radius, radius, 2};
    }
    require(d == 3, "dimension must be 2 or 3");
    require(params.b > 0.0, "3D physicality interval needs b > 0");
    const double disc = params.b * params.b - 24.0 * params.a * params.c;
    require(disc >= 0.0, "b^2 - 24ac must be non-negative");
    require(std::abs(params.a) < params.b * params.b / (3.0 * params.c),
            "3D physicality requires |a| < b^2/(3c)");
    const double root = params.b + std::sqrt(disc);
    return {-root / (12.0 * params.c), root / (6.0 * params.c), 3};
}

/// The normalised interval (-1/d, 1 - 1/d) used as an optional preset.
inline PhysicalityInterval normalized_interval(int d) {
    require(d == 2 || d == 3, "dimension must be 2 or 3");
    return {-1.0 / d, 1.0 - 1.0 / d, d};
}

inline constexpr double kPhysicalityTolerance = 1e-10;

template <class Tensor>
bool is_physical(const Tensor& Q, const PhysicalityInterval& interval) {
    require(Tensor::dim == interval.dim, "tensor dimension does not match the interval");
    const auto ev = eigenvalues(Q);
    return ev.front() >= interval.lo - kPhysicalityTolerance &&
           ev.back() <= interval.hi + kPhysicalityTolerance;
}

}  // namespace qflow
