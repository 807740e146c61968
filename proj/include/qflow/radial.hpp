#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "qflow/errors.hpp"
#include "qflow/field.hpp"
#include "qflow/params.hpp"
#include "qflow/pde2d.hpp"
#include "qflow/qtensor.hpp"

namespace qflow {

/// theta on nr interior nodes of [R0, R1] plus both endpoints.
struct RadialProfile {
    double R0 = 1.0;
    double R1 = 2.0;
    int nr = 3;
    std::vector<double> theta;

    [[nodiscard]] double h() const { return (R1 - R0) / (nr + 1); }
    [[nodiscard]] double r(int i) const { return R0 + i * h(); }
    [[nodiscard]] double boundary_value() const { return theta.front(); }
};

inline void validate(const RadialProfile& p) {
    require(p.R0 > 0.0 && p.R0 < p.R1, "R0 < R1 required");
    require(p.nr >= 3, "radial profile needs at least 3 interior nodes");
    require(p.theta.size() == static_cast<std::size_t>(p.nr + 2), "theta has the wrong length");
    require(p.theta.front() == p.theta.back() && p.theta.front() >= 0.0,
            "boundary values must agree and be non-negative");
}

inline RadialProfile make_profile(double R0, double R1, int nr, const std::function<double(double)>& theta0,
                                  double theta_b = 0.0) {
    RadialProfile p{R0, R1, nr, std::vector<double>(static_cast<std::size_t>(nr + 2), theta_b)};
    require(R0 > 0.0 && R0 < R1, "R0 < R1 required");
    require(nr >= 3, "radial profile needs at least 3 interior nodes");
    for (int i = 1; i <= nr; ++i) p.theta[static_cast<std::size_t>(i)] = theta0(p.r(i));
    validate(p);
    return p;
}

/// Right-hand side of the reduced hedgehog equation at one radius.
inline double theta_rate(double th, double d1, double d2, double r, const LdGParams& params) {
    const double z = params.zeta();
    return params.L4 * (0.5 * d1 * d1 + th * d1 / r + th * d2 + 6.0 * th * th / (r * r)) + z * d2 +
           z * d1 / r - 4.0 * z * th / (r * r) - params.a * th - 0.5 * params.c * th * th * th;
}

/// d theta / dt on interior nodes by central differences; endpoints zero.
inline std::vector<double> theta_rhs(const RadialProfile& p, const LdGParams& params) {
    std::vector<double> out(p.theta.size(), 0.0);
    const double h = p.h();
    for (int i = 1; i <= p.nr; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double d1 = (p.theta[k + 1] - p.theta[k - 1]) / (2.0 * h);
        const double d2 = (p.theta[k + 1] - 2.0 * p.theta[k] + p.theta[k - 1]) / (h * h);
        out[k] = theta_rate(p.theta[k], d1, d2, p.r(i), params);
    }
    return out;
}

/// Trapezoid rule for integral of f(theta_i, r_i) dr.
template <class Fn>
double radial_integral(const RadialProfile& p, Fn&& f) {
    const double h = p.h();
    double sum = 0.0;
    for (int i = 0; i <= p.nr + 1; ++i) {
        const double w = (i == 0 || i == p.nr + 1) ? 0.5 * h : h;
        sum += w * f(i);
    }
    return sum;
}

struct RadialMoments {
    double y = 0.0;        // int theta^2 r dr
    double y_minus = 0.0;  // int theta_-^2 r dr
    double y_plus = 0.0;   // int theta_+^2 r dr
};

inline RadialMoments radial_moments(const RadialProfile& p) {
    RadialMoments m;
    m.y = radial_integral(p, [&](int i) {
        const double t = p.theta[static_cast<std::size_t>(i)];
        return t * t * p.r(i);
    });
    m.y_minus = radial_integral(p, [&](int i) {
        const double t = std::max(-p.theta[static_cast<std::size_t>(i)], 0.0);
        return t * t * p.r(i);
    });
    m.y_plus = radial_integral(p, [&](int i) {
        const double t = std::max(p.theta[static_cast<std::size_t>(i)], 0.0);
        return t * t * p.r(i);
    });
    return m;
}

/// R0^2 pi^2 / (9 (R1-R0)^2); the blow-up argument needs it above 1.
inline double blowup_criterion(double R0, double R1) {
    const double d = R1 - R0;
    return R0 * R0 * std::numbers::pi * std::numbers::pi / (9.0 * d * d);
}

/// 2|L4| R0 / sqrt(R1^4 - R0^4) * [pi^2 / (9 (R1-R0)^2) - 1/R0^2].
inline double blowup_constant_M0(double R0, double R1, double L4) {
    const double d = R1 - R0;
    const double bracket = std::numbers::pi * std::numbers::pi / (9.0 * d * d) - 1.0 / (R0 * R0);
    return 2.0 * std::abs(L4) * R0 / std::sqrt(std::pow(R1, 4) - std::pow(R0, 4)) * bracket;
}

struct BlowupCertificate {
    double criterion_value = 0.0;
    bool criterion_ok = false;
    double M0 = 0.0;
    double F0 = 0.0;
    double y0 = 0.0;
    /// Divergence time of the comparison ODE; empty when inconclusive.
    std::optional<double> predicted_blowup_time;
    /// True when the negative part drives the argument (L4 < 0).
    bool uses_negative_part = true;
};

struct ComparisonResult {
    double y = 0.0;
    bool diverged = false;
    std::optional<double> divergence_time;
};

inline constexpr double kComparisonDivergence = 1e12;

namespace detail {

inline double comparison_rhs(double y, double M0, double a, double F0) {
    const double yp = std::max(y, 0.0);
    return 2.0 * (M0 * yp * std::sqrt(yp) - std::abs(a) * yp + 4.0 * F0);
}

/// RK4 on y' = 2(M0 y^{3/2} - |a| y + 4 F0) from t0 to t1; the step is
/// halved whenever one step would grow y by more than 10%. y is clamped at 0.
inline ComparisonResult integrate_comparison(double M0, double a, double F0, double y, double t0,
                                             double t1) {
    ComparisonResult out;
    double t = t0;
    const double span = t1 - t0;
    if (span <= 0.0) {
        out.y = y;
        return out;
    }
    const double base = span / 1000.0;
    double dt = base;
    while (t < t1) {
        double hstep = std::min(dt, t1 - t);
        const double k1 = comparison_rhs(y, M0, a, F0);
        const double k2 = comparison_rhs(y + 0.5 * hstep * k1, M0, a, F0);
        const double k3 = comparison_rhs(y + 0.5 * hstep * k2, M0, a, F0);
        const double k4 = comparison_rhs(y + hstep * k3, M0, a, F0);
        double next = y + hstep / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(next) || (y > 0.0 && next > 1.1 * y) || (y == 0.0 && next > 1.0)) {
            if (hstep > 1e-14 * std::max(1.0, std::abs(t))) {
                dt = 0.5 * hstep;
                continue;
            }
        }
        next = std::max(next, 0.0);
        t += hstep;
        y = next;
        if (!std::isfinite(y) || y > kComparisonDivergence) {
            out.diverged = true;
            out.divergence_time = t;
            out.y = std::numeric_limits<double>::infinity();
            return out;
        }
        // Let the step relax back once growth slows down.
        if (dt < base && k1 * hstep < 0.02 * std::max(y, 1e-300)) dt = std::min(base, 2.0 * dt);
    }
    out.y = y;
    return out;
}

}  // namespace detail

/// Lower bound y(t) for int theta_-^2 r dr from the comparison inequality.
inline ComparisonResult comparison_lower_bound(double M0, double a, double F0, double y0, double t) {
    require(M0 > 0.0, "comparison ODE needs M0 > 0");
    require(t >= 0.0, "time must be non-negative");
    return detail::integrate_comparison(M0, a, F0, y0, 0.0, t);
}

/// Comparison solution sampled at ascending times; +inf after divergence.
inline std::vector<double> comparison_trajectory(double M0, double a, double F0, double y0,
                                                 const std::vector<double>& times) {
    require(M0 > 0.0, "comparison ODE needs M0 > 0");
    std::vector<double> out;
    out.reserve(times.size());
    double y = y0;
    double t = 0.0;
    bool diverged = false;
    for (double target : times) {
        if (!diverged && target > t) {
            const ComparisonResult r = detail::integrate_comparison(M0, a, F0, y, t, target);
            diverged = r.diverged;
            y = r.y;
            t = target;
        }
        out.push_back(diverged ? std::numeric_limits<double>::infinity() : y);
    }
    return out;
}

/// Negative part for L4 < 0, positive part for L4 > 0, expressed as a
/// non-negative profile that drives the comparison argument.
inline std::vector<double> driving_part(const RadialProfile& p, double L4) {
    std::vector<double> out(p.theta.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = L4 < 0.0 ? std::max(-p.theta[k], 0.0) : std::max(p.theta[k], 0.0);
    return out;
}

inline BlowupCertificate blowup_certificate(const RadialProfile& p, const LdGParams& params) {
    validate(p);
    require(params.L4 != 0.0, "blow-up certificate needs L4 != 0");
    BlowupCertificate cert;
    cert.criterion_value = blowup_criterion(p.R0, p.R1);
    cert.criterion_ok = cert.criterion_value > 1.0;
    cert.M0 = blowup_constant_M0(p.R0, p.R1, params.L4);
    cert.uses_negative_part = params.L4 < 0.0;

    // Mirror symmetry (theta, L4) -> (-theta, -L4) maps the L4 > 0 case onto
    // the L4 < 0 one, so the functional always carries -|L4|.
    const double l4 = -std::abs(params.L4);
    const double z = params.zeta();
    const std::vector<double> u = driving_part(p, params.L4);
    const double h = p.h();
    const int last = p.nr + 1;
    auto du = [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        if (i == 0) return (u[1] - u[0]) / h;
        if (i == last) return (u[k] - u[k - 1]) / h;
        return (u[k + 1] - u[k - 1]) / (2.0 * h);
    };
    cert.F0 = radial_integral(p, [&](int i) {
        const double v = u[static_cast<std::size_t>(i)];
        const double d = du(i);
        const double r = p.r(i);
        const double integrand = l4 * v * (0.5 * d * d - 2.0 * v * v / (r * r)) -
                                 z * (0.5 * d * d + 2.0 * v * v / (r * r)) - 0.5 * params.a * v * v -
                                 params.c / 8.0 * v * v * v * v;
        return integrand * r;
    });
    cert.y0 = radial_integral(p, [&](int i) {
        const double v = u[static_cast<std::size_t>(i)];
        return v * v * p.r(i);
    });

    // g(y) = M0 y^{3/2} - |a| y + 4 F0 is convex, so g(y0) > 0 with g'(y0) >= 0
    // keeps the comparison right-hand side positive and increasing from y0 on.
    if (cert.criterion_ok && cert.M0 > 0.0 && cert.y0 > 0.0) {
        const double g = cert.M0 * std::pow(cert.y0, 1.5) - std::abs(params.a) * cert.y0 + 4.0 * cert.F0;
        const double slope = 1.5 * cert.M0 * std::sqrt(cert.y0) - std::abs(params.a);
        if (g > 0.0 && slope >= 0.0) {
            // Upper bound on the divergence time of y' >= 2 g(y) - it cannot exceed
            // the pure y^{3/2} time scale inflated by the positive margin.
            double horizon = 1.0 / (cert.M0 * std::sqrt(cert.y0));
            for (int attempt = 0; attempt < 60; ++attempt) {
                const ComparisonResult r =
                    comparison_lower_bound(cert.M0, params.a, cert.F0, cert.y0, horizon);
                if (r.diverged) {
                    cert.predicted_blowup_time = r.divergence_time;
                    break;
                }
                horizon *= 2.0;
            }
        }
    }
    return cert;
}

struct RadialRecord {
    double t = 0.0;
    double y = 0.0;
    double y_minus = 0.0;
    double y_plus = 0.0;
    double max_abs_theta = 0.0;
};

struct RadialTrace {
    std::vector<RadialRecord> records;
    bool blew_up = false;
    std::optional<double> blowup_time;
    long substeps = 0;
    RadialProfile final_profile;
};

struct RadialRunOptions {
    double blowup_threshold = 1e6;
    /// Fraction of the explicit diffusion limit used per substep.
    double safety = 0.2;
};

/// Forward Euler in time with substeps sized from the current amplitude;
/// records every dt until T or blow-up (y above threshold or non-finite).
inline RadialTrace run_radial(const RadialProfile& profile0, const LdGParams& params, double T, double dt,
                              const RadialRunOptions& options = {}) {
    validate(profile0);
    require(T > 0.0 && dt > 0.0, "T and dt must be positive");
    require(params.zeta() > 0.0, "zeta must be positive");
    RadialTrace trace;
    RadialProfile p = profile0;
    const double h = p.h();
    const double z = params.zeta();
    auto record = [&](double t) {
        const RadialMoments m = radial_moments(p);
        double amax = 0.0;
        for (double v : p.theta) amax = std::max(amax, std::abs(v));
        trace.records.push_back({t, m.y, m.y_minus, m.y_plus, amax});
        return m;
    };
    record(0.0);
    const auto outputs = static_cast<long>(std::ceil(T / dt - 1e-9));
    const double out_dt = T / static_cast<double>(outputs);
    double t = 0.0;
    for (long n = 1; n <= outputs; ++n) {
        const double target = static_cast<double>(n) * out_dt;
        bool finite = true;
        while (t < target) {
            double amax = 0.0;
            double dmax = 0.0;
            for (std::size_t k = 0; k < p.theta.size(); ++k) amax = std::max(amax, std::abs(p.theta[k]));
            for (std::size_t k = 1; k < p.theta.size(); ++k)
                dmax = std::max(dmax, std::abs(p.theta[k] - p.theta[k - 1]) / h);
            const double diffusion = z + std::abs(params.L4) * amax;
            const double reaction = std::abs(params.a) + 4.0 * z / (p.R0 * p.R0) +
                                    1.5 * params.c * amax * amax +
                                    std::abs(params.L4) * (6.0 * amax / (p.R0 * p.R0) + dmax / p.R0);
            double sub = options.safety * h * h / diffusion;
            if (reaction > 0.0) sub = std::min(sub, 0.1 / reaction);
            sub = std::min(sub, target - t);
            const std::vector<double> rate = theta_rhs(p, params);
            for (int i = 1; i <= p.nr; ++i) {
                const auto k = static_cast<std::size_t>(i);
                p.theta[k] += sub * rate[k];
                if (!std::isfinite(p.theta[k])) finite = false;
            }
            t = (target - t <= sub) ? target : t + sub;
            ++trace.substeps;
            if (!finite) break;
        }
        const RadialMoments m = record(target);
        if (!finite || !std::isfinite(m.y) || m.y > options.blowup_threshold) {
            trace.blew_up = true;
            trace.blowup_time = target;
            break;
        }
    }
    trace.final_profile = std::move(p);
    return trace;
}

/// theta and its first two radial derivatives, for the consistency check.
struct ThetaFunction {
    std::function<double(double)> value;
    std::function<double(double)> d1;
    std::function<double(double)> d2;
};

/// Builds Q(y) = theta(|y|) S(y) on a 5x5 stencil of spacing h_s around each
/// sample x, evaluates the full 2D right-hand side there by finite
/// differences, and returns the largest componentwise gap to the reduced
/// equation's value times S(x).
inline double hedgehog_consistency_check(const ThetaFunction& theta, const LdGParams& params,
                                         const std::vector<std::array<double, 2>>& samples, double h_s,
                                         double R0, double R1) {
    require(h_s > 0.0, "stencil spacing must be positive");
    double worst = 0.0;
    for (const auto& x : samples) {
        const double r = std::hypot(x[0], x[1]);
        require(r - R0 >= 3.0 * h_s && R1 - r >= 3.0 * h_s,
                "sample lies within 3 stencil spacings of the annulus boundary");
        const Grid2D patch = make_grid(3, 3, 4.0 * h_s, 4.0 * h_s, x[0] - 2.0 * h_s, x[1] - 2.0 * h_s);
        const Field2D f = Field2D::from_function(patch, [&](double px, double py) {
            return hedgehog_tensor({px, py}, theta.value(std::hypot(px, py)));
        });
        const QTensor2 numeric = pq_rate(stencil_at(f, 2, 2), params, true);
        const double reduced = theta_rate(theta.value(r), theta.d1(r), theta.d2(r), r, params);
        const QTensor2 expected = hedgehog_tensor(x, reduced);
        worst = std::max({worst, std::abs(numeric.p - expected.p), std::abs(numeric.q - expected.q)});
    }
    return worst;
}

}  // namespace qflow
