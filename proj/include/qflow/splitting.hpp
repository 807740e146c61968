#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qflow/errors.hpp"
#include "qflow/parallel.hpp"
#include "qflow/params.hpp"
#include "qflow/qtensor.hpp"

namespace qflow {

/// n x n periodic grid with period L in both directions; node (i, j) sits
/// at (i h, j h).
template <class Tensor>
struct PeriodicField {
    int n = 0;
    double L = 1.0;
    std::vector<Tensor> values;

    [[nodiscard]] double h() const { return L / n; }
    [[nodiscard]] double x(int i) const { return i * h(); }
    Tensor& at(int i, int j) { return values[static_cast<std::size_t>(j) * n + i]; }
    [[nodiscard]] const Tensor& at(int i, int j) const {
        return values[static_cast<std::size_t>(j) * n + i];
    }
};

template <class Tensor>
PeriodicField<Tensor> make_periodic_field(int n, double L,
                                          const std::function<Tensor(double, double)>& fn) {
    require(n >= 3, "periodic grid needs at least 3 cells per direction");
    require(L > 0.0, "period must be positive");
    PeriodicField<Tensor> f{n, L, std::vector<Tensor>(static_cast<std::size_t>(n) * n)};
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) f.at(i, j) = fn(f.x(i), f.x(j));
    return f;
}

/// One-dimensional weights of the sampled Gaussian with variance 4 L1 dt,
/// cut at 6 standard deviations and divided by their sum.
struct HeatKernel {
    double sigma = 0.0;
    int K = 0;
    /// weights[k + K] for offsets k in [-K, K].
    std::vector<double> weights;
};

inline HeatKernel heat_kernel(double dt, double L1, double h, int n) {
    require(dt > 0.0, "dt must be positive");
    require(L1 > 0.0, "L1 must be positive");
    HeatKernel kernel;
    kernel.sigma = std::sqrt(4.0 * L1 * dt);
    kernel.K = static_cast<int>(std::floor(6.0 * kernel.sigma / h));
    require(2 * kernel.K + 1 <= n, "heat kernel support exceeds the period");
    kernel.weights.resize(static_cast<std::size_t>(2 * kernel.K + 1));
    double sum = 0.0;
    for (int k = -kernel.K; k <= kernel.K; ++k) {
        const double z = k * h / kernel.sigma;
        const double w = std::exp(-0.5 * z * z);
        kernel.weights[static_cast<std::size_t>(k + kernel.K)] = w;
        sum += w;
    }
    for (double& w : kernel.weights) w /= sum;
    return kernel;
}

/// e^{2 dt L1 Delta} on the torus by separable convolution. Every output is a
/// convex combination of inputs, which is what keeps eigenvalue hulls.
template <class Tensor>
PeriodicField<Tensor> heat_step(const PeriodicField<Tensor>& field, double dt, double L1) {
    const HeatKernel kernel = heat_kernel(dt, L1, field.h(), field.n);
    if (kernel.K == 0) return field;
    const int n = field.n;
    const int K = kernel.K;
    auto wrap = [n](int i) { return ((i % n) + n) % n; };
    PeriodicField<Tensor> mid = field;
    parallel_for(0, n, [&](int j) {
        for (int i = 0; i < n; ++i) {
            Tensor acc{};
            for (int k = -K; k <= K; ++k)
                acc = acc + kernel.weights[static_cast<std::size_t>(k + K)] * field.at(wrap(i + k), j);
            mid.at(i, j) = acc;
        }
    });
    PeriodicField<Tensor> out = mid;
    parallel_for(0, n, [&](int j) {
        for (int i = 0; i < n; ++i) {
            Tensor acc{};
            for (int k = -K; k <= K; ++k)
                acc = acc + kernel.weights[static_cast<std::size_t>(k + K)] * mid.at(i, wrap(j + k));
            out.at(i, j) = acc;
        }
    });
    return out;
}

/// dQ/dt = -a Q - c Q tr(Q^2); the b term vanishes in 2D.
inline QTensor2 bulk_ode_rhs(const QTensor2& Q, const LdGParams& params) {
    return (-params.a - params.c * Q.trace_sq()) * Q;
}

/// dQ/dt = -a Q + b (Q^2 - tr(Q^2) I/3) - c Q tr(Q^2).
inline QTensor3 bulk_ode_rhs(const QTensor3& Q, const LdGParams& params) {
    const Mat<3> Q2 = square<3>(Q.matrix());
    const double t2 = Q.trace_sq();
    const double third = t2 / 3.0;
    const QTensor3 quad{Q2[0][0] - third, Q2[0][1], Q2[0][2], Q2[1][1] - third, Q2[1][2]};
    return (-params.a - params.c * t2) * Q + params.b * quad;
}

/// RK4 over dt, split into enough substeps that each one satisfies
/// step * (|a| + b|Q| + c|Q|^2) <= 0.1 (b counts only in 3D).
template <class Tensor>
Tensor bulk_ode_step(const Tensor& Q0, double dt, const LdGParams& params) {
    require(dt >= 0.0, "dt must be non-negative");
    const double norm = frobenius_norm(Q0);
    const double cubic = Tensor::dim == 3 ? params.b * norm : 0.0;
    const double rate = std::abs(params.a) + cubic + params.c * norm * norm;
    const int m = std::max(1, static_cast<int>(std::ceil(dt * rate / 0.1)));
    const double hstep = dt / m;
    Tensor Q = Q0;
    for (int s = 0; s < m; ++s) {
        const Tensor k1 = bulk_ode_rhs(Q, params);
        const Tensor k2 = bulk_ode_rhs(Q + (0.5 * hstep) * k1, params);
        const Tensor k3 = bulk_ode_rhs(Q + (0.5 * hstep) * k2, params);
        const Tensor k4 = bulk_ode_rhs(Q + hstep * k3, params);
        Q = Q + (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return Q;
}

/// Integrates the bulk ODE to time T in `steps` calls of bulk_ode_step.
template <class Tensor>
Tensor bulk_ode_evolve(const Tensor& Q0, double T, int steps, const LdGParams& params) {
    require(steps >= 1, "need at least one step");
    Tensor Q = Q0;
    for (int s = 0; s < steps; ++s) Q = bulk_ode_step(Q, T / steps, params);
    return Q;
}

/// Eigenvalues (lambda1, lambda2, -lambda1-lambda2) of a diagonal 3D state.
struct EigenPair {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

inline EigenPair eigen_ode_rhs(const EigenPair& e, const LdGParams& params) {
    const double l1 = e.lambda1;
    const double l2 = e.lambda2;
    const double s = 2.0 * params.c * (l1 * l1 + l2 * l2 + l1 * l2) + params.a;
    return {-l1 * s + params.b * (l1 * l1 / 3.0 - 2.0 * l2 * l2 / 3.0 - 2.0 * l1 * l2 / 3.0),
            -l2 * s + params.b * (l2 * l2 / 3.0 - 2.0 * l1 * l1 / 3.0 - 2.0 * l1 * l2 / 3.0)};
}

/// s+ = (b + sqrt(b^2 - 24ac)) / (4c).
inline double s_plus(const LdGParams& params) {
    require(params.c > 0.0, "c must be positive");
    const double disc = params.b * params.b - 24.0 * params.a * params.c;
    require(disc >= 0.0, "b^2 - 24ac must be non-negative");
    return (params.b + std::sqrt(disc)) / (4.0 * params.c);
}

struct HullBounds {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    /// Extremes of the k-th smallest eigenvalue over all cells.
    std::vector<double> per_index_min;
    std::vector<double> per_index_max;
};

template <class Tensor>
HullBounds hull_bounds(const PeriodicField<Tensor>& field) {
    constexpr int d = Tensor::dim;
    HullBounds hb;
    hb.per_index_min.assign(d, std::numeric_limits<double>::infinity());
    hb.per_index_max.assign(d, -std::numeric_limits<double>::infinity());
    for (const Tensor& Q : field.values) {
        const auto ev = eigenvalues(Q);
        for (int k = 0; k < d; ++k) {
            hb.per_index_min[k] = std::min(hb.per_index_min[k], ev[k]);
            hb.per_index_max[k] = std::max(hb.per_index_max[k], ev[k]);
        }
    }
    hb.lambda_min = hb.per_index_min.front();
    hb.lambda_max = hb.per_index_max.back();
    return hb;
}

template <class Tensor>
double l2_distance(const PeriodicField<Tensor>& f, const PeriodicField<Tensor>& g) {
    require(f.n == g.n && f.L == g.L, "fields live on different grids");
    double sum = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) sum += (f.values[k] - g.values[k]).trace_sq();
    return std::sqrt(sum) * f.h();
}

struct TrotterOptions {
    bool record_hulls = true;
};

template <class Tensor>
struct TrotterResult {
    PeriodicField<Tensor> field;
    /// Initial hull, then one entry after each bulk and each heat half of every substep.
    std::vector<HullBounds> hulls;
};

/// Heat rate used by the split flow: L1 in 3D, zeta/2 in 2D (zeta takes
/// the place of 2 L1 there).
template <class Tensor>
double splitting_heat_coefficient(const LdGParams& params) {
    if constexpr (Tensor::dim == 2) return 0.5 * params.zeta();
    return params.L1;
}

template <class Tensor>
void validate_splitting(const LdGParams& params) {
    require(params.L4 == 0.0, "splitting requires L4 = 0");
    if constexpr (Tensor::dim == 3) require(params.L2 + params.L3 == 0.0, "splitting requires L2 + L3 = 0");
    require(splitting_heat_coefficient<Tensor>(params) > 0.0, "splitting needs a positive diffusion rate");
    require(params.c > 0.0, "c must be positive");
}

/// V_n = (heat(T/n) o bulk(T/n))^n applied to field0.
template <class Tensor>
TrotterResult<Tensor> trotter_solve(const PeriodicField<Tensor>& field0, double T, int n,
                                    const LdGParams& params, const TrotterOptions& options = {}) {
    validate_splitting<Tensor>(params);
    require(T > 0.0, "T must be positive");
    require(n >= 1, "need at least one substep");
    const double dt = T / n;
    const double kappa = splitting_heat_coefficient<Tensor>(params);
    heat_kernel(dt, kappa, field0.h(), field0.n);  // reject an oversized kernel up front
    TrotterResult<Tensor> out{field0, {}};
    if (options.record_hulls) out.hulls.push_back(hull_bounds(out.field));
    for (int s = 0; s < n; ++s) {
        auto& values = out.field.values;
        parallel_for(0, static_cast<int>(values.size()), [&](int k) {
            values[static_cast<std::size_t>(k)] = bulk_ode_step(values[static_cast<std::size_t>(k)], dt, params);
        });
        if (options.record_hulls) out.hulls.push_back(hull_bounds(out.field));
        out.field = heat_step(out.field, dt, kappa);
        if (options.record_hulls) out.hulls.push_back(hull_bounds(out.field));
    }
    return out;
}

/// Exact solution of y' = -2 a y - 2 c y^2 with y(0) = y0.
inline double trace_ode_closed_form_2d(double y0, double a, double c, double t) {
    require(y0 >= 0.0, "y0 must be non-negative");
    require(c > 0.0, "c must be positive");
    if (a == 0.0) return y0 / (1.0 + 2.0 * c * y0 * t);
    // a y0 e^{-2at} / (a + c y0 (1 - e^{-2at})), rearranged around expm1.
    return y0 * std::exp(-2.0 * a * t) / (1.0 - c * y0 * std::expm1(-2.0 * a * t) / a);
}

}  // namespace qflow
