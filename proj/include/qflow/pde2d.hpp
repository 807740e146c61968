#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qflow/energy.hpp"
#include "qflow/errors.hpp"
#include "qflow/field.hpp"
#include "qflow/parallel.hpp"
#include "qflow/params.hpp"

namespace qflow {

enum class Scheme { ExplicitEuler, Imex };

inline std::string to_string(Scheme s) { return s == Scheme::Imex ? "imex" : "explicit-euler"; }

/// Central-difference derivatives of (p, q) at an interior node.
struct Stencil2 {
    QTensor2 v, dx, dy, dxx, dyy, dxy;
};

inline Stencil2 stencil_at(const Field2D& f, int i, int j) {
    const Grid2D& g = f.grid();
    const double hx = g.hx();
    const double hy = g.hy();
    const QTensor2& c = f.at(i, j);
    const QTensor2& e = f.at(i + 1, j);
    const QTensor2& w = f.at(i - 1, j);
    const QTensor2& n = f.at(i, j + 1);
    const QTensor2& s = f.at(i, j - 1);
    Stencil2 st;
    st.v = c;
    st.dx = (0.5 / hx) * (e - w);
    st.dy = (0.5 / hy) * (n - s);
    st.dxx = (1.0 / (hx * hx)) * (e - 2.0 * c + w);
    st.dyy = (1.0 / (hy * hy)) * (n - 2.0 * c + s);
    st.dxy = (0.25 / (hx * hy)) *
             ((f.at(i + 1, j + 1) - f.at(i + 1, j - 1)) - (f.at(i - 1, j + 1) - f.at(i - 1, j - 1)));
    return st;
}

/// (dp/dt, dq/dt) from the (p, q) form of the gradient flow, evaluated on a
/// stencil. `with_diffusion = false` drops the zeta*Laplacian part.
inline QTensor2 pq_rate(const Stencil2& st, const LdGParams& params, bool with_diffusion = true) {
    const double p = st.v.p, q = st.v.q;
    const double px = st.dx.p, py = st.dy.p, qx = st.dx.q, qy = st.dy.q;
    const double L4 = params.L4;
    const double h2 = p * p + q * q;
    double dp = L4 * (px * px - qx * qx - py * py + qy * qy + 2.0 * px * qy + 2.0 * py * qx) +
                2.0 * L4 * (p * st.dxx.p + 2.0 * q * st.dxy.p - p * st.dyy.p) - params.a * p -
                2.0 * params.c * h2 * p;
    double dq = 2.0 * L4 * (qx * qy - px * py + px * qx - py * qy) +
                2.0 * L4 * (p * st.dxx.q + 2.0 * q * st.dxy.q - p * st.dyy.q) - params.a * q -
                2.0 * params.c * h2 * q;
    if (with_diffusion) {
        const double z = params.zeta();
        dp += z * (st.dxx.p + st.dyy.p);
        dq += z * (st.dxx.q + st.dyy.q);
    }
    return {dp, dq};
}

/// Time derivative on every interior node; the ring of the result is zero.
inline Field2D rhs_pq(const Field2D& f, const LdGParams& params, bool with_diffusion = true) {
    const Grid2D& g = f.grid();
    Field2D out(g);
    parallel_for(1, g.ny + 1, [&](int j) {
        for (int i = 1; i <= g.nx; ++i) out.at(i, j) = pq_rate(stencil_at(f, i, j), params, with_diffusion);
    });
    return out;
}

/// Explicit Euler step limit used throughout: 0.2 min(hx, hy)^2 / zeta.
inline double stability_bound(const Grid2D& g, const LdGParams& params) {
    const double h = std::min(g.hx(), g.hy());
    return 0.2 * h * h / params.zeta();
}

namespace detail {

/// 5-point Laplacian of interior values, ring treated as zero.
inline void laplacian_interior(const Grid2D& g, const std::vector<double>& u, std::vector<double>& out) {
    const double ix2 = 1.0 / (g.hx() * g.hx());
    const double iy2 = 1.0 / (g.hy() * g.hy());
    const int s = g.stride();
    for (int j = 1; j <= g.ny; ++j)
        for (int i = 1; i <= g.nx; ++i) {
            const int k = j * s + i;
            const double c = u[k];
            const double e = i < g.nx ? u[k + 1] : 0.0;
            const double w = i > 1 ? u[k - 1] : 0.0;
            const double n = j < g.ny ? u[k + s] : 0.0;
            const double so = j > 1 ? u[k - s] : 0.0;
            out[k] = (e - 2.0 * c + w) * ix2 + (n - 2.0 * c + so) * iy2;
        }
}

/// Orthonormal sine basis diagonalising the 1D Dirichlet second difference
/// on n interior nodes of spacing h; lambda holds its eigenvalues.
struct SineBasis {
    int n = 0;
    double h = 0.0;
    Eigen::MatrixXd S;
    Eigen::VectorXd lambda;
};

inline const SineBasis& sine_basis(int n, double h, int slot) {
    thread_local SineBasis cache[2];
    SineBasis& b = cache[slot];
    if (b.n == n && b.h == h) return b;
    b.n = n;
    b.h = h;
    b.S.resize(n, n);
    b.lambda.resize(n);
    const double norm = std::sqrt(2.0 / (n + 1));
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) b.S(i, k) = norm * std::sin(std::numbers::pi * (i + 1) * (k + 1) / (n + 1));
        const double s = std::sin(0.5 * std::numbers::pi * (k + 1) / (n + 1));
        b.lambda[k] = -4.0 * s * s / (h * h);
    }
    return b;
}

/// Solves (I - theta * Lap0) u = rhs on interior nodes exactly (to rounding)
/// by diagonalising Lap0 in the sine basis. Returns the max-norm residual.
inline double solve_shifted_laplacian(const Grid2D& g, double theta, const std::vector<double>& rhs,
                                      std::vector<double>& u) {
    const SineBasis& bx = sine_basis(g.nx, g.hx(), 0);
    const SineBasis& by = sine_basis(g.ny, g.hy(), 1);
    const int s = g.stride();
    Eigen::MatrixXd R(g.nx, g.ny);
    for (int j = 1; j <= g.ny; ++j)
        for (int i = 1; i <= g.nx; ++i) R(i - 1, j - 1) = rhs[j * s + i];
    Eigen::MatrixXd H = bx.S.transpose() * R * by.S;
    for (int l = 0; l < g.ny; ++l)
        for (int k = 0; k < g.nx; ++k) H(k, l) /= 1.0 - theta * (bx.lambda[k] + by.lambda[l]);
    const Eigen::MatrixXd U = bx.S * H * by.S.transpose();
    for (int j = 1; j <= g.ny; ++j)
        for (int i = 1; i <= g.nx; ++i) u[j * s + i] = U(i - 1, j - 1);
    std::vector<double> lap(g.node_count(), 0.0);
    laplacian_interior(g, u, lap);
    double rmax = 0.0;
    for (int j = 1; j <= g.ny; ++j)
        for (int i = 1; i <= g.nx; ++i) {
            const int k = j * s + i;
            rmax = std::max(rmax, std::abs(rhs[k] - (u[k] - theta * lap[k])));
        }
    return rmax;
}

}  // namespace detail

inline constexpr double kImplicitResidual = 1e-10;

/// Advances interior values by dt; the ring is untouched.
/// imex: zeta*Laplacian implicit, every L4 and bulk term explicit.
inline Field2D step(const Field2D& f, double dt, const LdGParams& params, Scheme scheme) {
    require(dt > 0.0, "time step must be positive");
    const Grid2D& g = f.grid();
    Field2D next = f;
    if (scheme == Scheme::ExplicitEuler) {
        require(dt <= stability_bound(g, params) * (1.0 + 1e-12),
                "explicit Euler step exceeds the stability bound");
        const Field2D rate = rhs_pq(f, params, true);
        for (int j = 1; j <= g.ny; ++j)
            for (int i = 1; i <= g.nx; ++i) next.at(i, j) = f.at(i, j) + dt * rate.at(i, j);
    } else {
        const Field2D rate = rhs_pq(f, params, false);
        const double theta = dt * params.zeta();
        const double ix2 = 1.0 / (g.hx() * g.hx());
        const double iy2 = 1.0 / (g.hy() * g.hy());
        const std::size_t n = g.node_count();
        const int s = g.stride();
        for (int comp = 0; comp < 2; ++comp) {
            auto get = [comp](const QTensor2& v) { return comp == 0 ? v.p : v.q; };
            std::vector<double> rhs(n, 0.0), u(n, 0.0);
            double scale = 1.0;
            for (int j = 1; j <= g.ny; ++j)
                for (int i = 1; i <= g.nx; ++i) {
                    const int k = j * s + i;
                    // Dirichlet data enters through the stencil neighbours on the ring.
                    double ring = 0.0;
                    if (i == 1) ring += get(f.at(0, j)) * ix2;
                    if (i == g.nx) ring += get(f.at(g.nx + 1, j)) * ix2;
                    if (j == 1) ring += get(f.at(i, 0)) * iy2;
                    if (j == g.ny) ring += get(f.at(i, g.ny + 1)) * iy2;
                    rhs[k] = get(f.at(i, j)) + dt * get(rate.at(i, j)) + theta * ring;
                    scale = std::max(scale, std::abs(rhs[k]));
                }
            const double residual = detail::solve_shifted_laplacian(g, theta, rhs, u);
            // a non-finite residual falls through to the finiteness check below
            if (std::isfinite(residual) && residual > kImplicitResidual * scale)
                throw NumericalError("implicit diffusion solve missed its residual target");
            for (int j = 1; j <= g.ny; ++j)
                for (int i = 1; i <= g.nx; ++i) {
                    QTensor2& v = next.at(i, j);
                    (comp == 0 ? v.p : v.q) = u[j * s + i];
                }
        }
    }
    if (!next.all_finite()) throw NumericalError("unstable");
    return next;
}

struct TraceRecord {
    double t = 0.0;
    double energy = 0.0;
    double max_h2 = 0.0;
    double l2_norm = 0.0;
    double l2_dQdt = 0.0;
    /// |E(t_{n+1}) - E(t_n) + dt ||dQ/dt||^2| for the step ending here.
    double dissipation_defect = 0.0;
    bool small = true;
    bool blowup = false;
};

struct RunTrace {
    std::vector<TraceRecord> records;
    bool blew_up = false;
    std::optional<double> blowup_time;
    /// Largest defect / (1 + |E|) over all steps, recorded or not.
    double max_relative_defect = 0.0;
    /// True if E(t_{n+1}) <= E(t_n) + energy_slack on every step.
    bool energy_nonincreasing = true;
    Field2D final_field;
};

struct RunOptions {
    Scheme scheme = Scheme::Imex;
    int record_every = 1;
    double blowup_threshold = 1e6;
    /// Relative tolerance on sqrt(max h^2) against sqrt(eta1).
    double smallness_tolerance = 1e-3;
    double energy_slack = 1e-9;
};

/// L2 norm of a rate field, trapezoidal, Frobenius pointwise.
inline double rate_norm(const Field2D& next, const Field2D& prev, double dt) {
    return l2_distance(next, prev) / dt;
}

/// Integrates to T with a uniform step no larger than dt.
inline RunTrace run(const Field2D& field0, const LdGParams& params, double T, double dt,
                    const RunOptions& options = {}) {
    require(T > 0.0 && dt > 0.0, "T and dt must be positive");
    require(options.record_every >= 1, "record_every must be at least 1");
    validate(params, true);
    const DerivedConstants constants = derived_constants(params);
    const auto steps = static_cast<long>(std::ceil(T / dt - 1e-9));
    const double h = T / static_cast<double>(steps);
    const double small_bound =
        std::isinf(constants.eta1)
            ? std::numeric_limits<double>::infinity()
            : constants.eta1 * (1.0 + options.smallness_tolerance) * (1.0 + options.smallness_tolerance);

    RunTrace trace;
    Field2D current = field0;
    double energy = total_energy(current, params);
    {
        TraceRecord r0;
        r0.t = 0.0;
        r0.energy = energy;
        r0.max_h2 = max_h2(current);
        r0.l2_norm = l2_norm(current);
        const Field2D rate0 = rhs_pq(current, params);
        Field2D zero(current.grid());
        r0.l2_dQdt = l2_distance(rate0, zero);
        r0.small = r0.max_h2 <= small_bound;
        trace.records.push_back(r0);
    }
    for (long n = 1; n <= steps; ++n) {
        const double t = static_cast<double>(n) * h;
        Field2D next;
        bool finite = true;
        try {
            next = step(current, h, params, options.scheme);
        } catch (const NumericalError&) {
            finite = false;
        }
        TraceRecord r;
        r.t = t;
        if (finite) {
            r.energy = total_energy(next, params);
            r.max_h2 = max_h2(next);
            r.l2_norm = l2_norm(next);
            r.l2_dQdt = rate_norm(next, current, h);
            r.dissipation_defect = std::abs(r.energy - energy + h * r.l2_dQdt * r.l2_dQdt);
            finite = std::isfinite(r.energy) && std::isfinite(r.l2_norm);
        }
        r.small = finite && r.max_h2 <= small_bound;
        r.blowup = !finite || r.l2_norm > options.blowup_threshold;
        if (finite) {
            trace.max_relative_defect =
                std::max(trace.max_relative_defect, r.dissipation_defect / (1.0 + std::abs(r.energy)));
            if (r.energy > energy + options.energy_slack) trace.energy_nonincreasing = false;
            energy = r.energy;
            current = std::move(next);
        } else {
            r.energy = r.max_h2 = r.l2_norm = r.l2_dQdt = r.dissipation_defect =
                std::numeric_limits<double>::quiet_NaN();
        }
        if (r.blowup || n % options.record_every == 0 || n == steps) trace.records.push_back(r);
        if (r.blowup) {
            trace.blew_up = true;
            trace.blowup_time = t;
            break;
        }
    }
    trace.final_field = std::move(current);
    return trace;
}

struct ContinuousDependenceResult {
    std::vector<double> times;
    std::vector<double> distances;
    /// Least-squares slope of log distance against t; 0 when the distance vanishes.
    double slope = 0.0;
    /// max_t distance(t) / (distance(0) e^{slope t}).
    double envelope_ratio = 0.0;
};

/// Runs field0 and field0 + perturbation (interior only) side by side and
/// fits the exponential growth rate of their L2 distance.
inline ContinuousDependenceResult continuous_dependence_experiment(const Field2D& field0,
                                                                   const Field2D& perturbation,
                                                                   const LdGParams& params, double T,
                                                                   double dt, Scheme scheme = Scheme::Imex) {
    require(T > 0.0 && dt > 0.0, "T and dt must be positive");
    const Grid2D& g = field0.grid();
    require(perturbation.values().size() == field0.values().size(), "perturbation grid mismatch");
    const DerivedConstants constants = derived_constants(params);
    Field2D other = field0;
    for (int j = 1; j <= g.ny; ++j)
        for (int i = 1; i <= g.nx; ++i) other.at(i, j) = other.at(i, j) + perturbation.at(i, j);
    if (!std::isinf(constants.eta2)) {
        const double bound = 2.0 * constants.eta2;
        require(2.0 * max_h2(field0) <= bound && 2.0 * max_h2(other) <= bound,
                "initial data violate the eta2 smallness bound");
    }
    const auto steps = static_cast<long>(std::ceil(T / dt - 1e-9));
    const double h = T / static_cast<double>(steps);
    ContinuousDependenceResult out;
    Field2D a = field0;
    Field2D b = std::move(other);
    out.times.push_back(0.0);
    out.distances.push_back(l2_distance(a, b));
    for (long n = 1; n <= steps; ++n) {
        a = step(a, h, params, scheme);
        b = step(b, h, params, scheme);
        out.times.push_back(static_cast<double>(n) * h);
        out.distances.push_back(l2_distance(a, b));
    }
    const double d0 = out.distances.front();
    if (d0 == 0.0) return out;
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < out.times.size(); ++k) {
        if (out.distances[k] <= 0.0) continue;
        const double y = std::log(out.distances[k]);
        st += out.times[k];
        sy += y;
        stt += out.times[k] * out.times[k];
        sty += out.times[k] * y;
        ++count;
    }
    const double denom = count * stt - st * st;
    out.slope = denom > 0.0 ? (count * sty - st * sy) / denom : 0.0;
    for (std::size_t k = 0; k < out.times.size(); ++k)
        out.envelope_ratio =
            std::max(out.envelope_ratio, out.distances[k] / (d0 * std::exp(out.slope * out.times[k])));
    return out;
}

}  // namespace qflow
