#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "qflow/errors.hpp"
#include "qflow/field.hpp"
#include "qflow/params.hpp"
#include "qflow/qtensor.hpp"

namespace qflow {

struct DerivedConstants {
    double zeta = 0.0;
    double nu = 0.0;
    double eta1 = 0.0;
    /// Depends on the user-supplied C1.
    double eta2 = 0.0;
};

/// zeta = 2L1+L2+L3, nu = min(L1+L2, L1+L3),
/// eta1 = zeta^2 / ((1+4 sqrt 2)^2 L4^2),
/// eta2 = min{nu^2/(8 L4^2), zeta^2/(144 L4^2 C1^2), eta1} / 60.
/// With L4 = 0 both smallness thresholds are +inf.
inline DerivedConstants derived_constants(const LdGParams& params, bool strict = true) {
    if (strict) validate(params, true);
    DerivedConstants out;
    out.zeta = params.zeta();
    out.nu = std::min(params.L1 + params.L2, params.L1 + params.L3);
    if (params.L4 == 0.0) {
        out.eta1 = std::numeric_limits<double>::infinity();
        out.eta2 = std::numeric_limits<double>::infinity();
        return out;
    }
    const double l4sq = params.L4 * params.L4;
    const double k = 1.0 + 4.0 * std::numbers::sqrt2;
    out.eta1 = out.zeta * out.zeta / (k * k * l4sq);
    const double by_nu = out.nu * out.nu / (8.0 * l4sq);
    const double by_c1 = out.zeta * out.zeta / (144.0 * l4sq * params.C1 * params.C1);
    out.eta2 = std::min({by_nu, by_c1, out.eta1}) / 60.0;
    return out;
}

/// The 4x4 matrix B with elastic density (L4 = 0) equal to chi^T B chi,
/// chi = (d1 p, d2 p, d1 q, d2 q).
inline Eigen::Matrix4d elastic_matrix(const LdGParams& params) {
    const double z = params.zeta();
    const double u = params.L3 - params.L2;
    Eigen::Matrix4d B;
    B << z, 0, 0, u,
         0, z, -u, 0,
         0, -u, z, 0,
         u, 0, 0, z;
    return B;
}

/// Spectrum of B, ascending.
inline std::array<double, 4> elastic_matrix_eigenvalues(const LdGParams& params) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(elastic_matrix(params),
                                                          Eigen::EigenvaluesOnly);
    const Eigen::Vector4d ev = solver.eigenvalues();
    return {ev[0], ev[1], ev[2], ev[3]};
}

inline double bulk_density(const QTensor2& Q, const LdGParams& params) {
    // tr(Q^3) vanishes identically for 2x2 traceless tensors.
    const double t2 = Q.trace_sq();
    return 0.5 * params.a * t2 + 0.25 * params.c * t2 * t2;
}

inline double bulk_density(const QTensor3& Q, const LdGParams& params) {
    const double t2 = Q.trace_sq();
    return 0.5 * params.a * t2 - params.b / 3.0 * Q.trace_cube() + 0.25 * params.c * t2 * t2;
}

/// First derivatives of (p, q): (d1 p, d2 p, d1 q, d2 q).
struct Grad2 {
    double px = 0.0;
    double py = 0.0;
    double qx = 0.0;
    double qy = 0.0;
};

/// Elastic density for a 2D tensor written in (p, q) variables.
inline double elastic_density(const QTensor2& Q, const Grad2& g, const LdGParams& params) {
    const double grad_sq = g.px * g.px + g.py * g.py + g.qx * g.qx + g.qy * g.qy;
    const double quadratic = params.zeta() * grad_sq + 2.0 * (params.L3 - params.L2) * g.px * g.qy +
                             2.0 * (params.L2 - params.L3) * g.py * g.qx;
    // Q_lk G_kl with G_kl = d_k Q_ij d_l Q_ij = 2 (d_k p d_l p + d_k q d_l q).
    const double g11 = g.px * g.px + g.qx * g.qx;
    const double g22 = g.py * g.py + g.qy * g.qy;
    const double g12 = g.px * g.py + g.qx * g.qy;
    const double cubic = 2.0 * (Q.p * (g11 - g22) + 2.0 * Q.q * g12);
    return quadratic + params.L4 * cubic;
}

/// Full gradient array: grad[k][i][j] = d_k Q_ij.
template <int D>
using GradArray = std::array<Mat<D>, D>;

/// Elastic density in index form, any dimension:
/// L1 |grad Q|^2 + L2 d_j Q_ik d_k Q_ij + L3 d_j Q_ij d_k Q_ik + L4 Q_lk d_k Q_ij d_l Q_ij.
template <int D>
double elastic_density(const Mat<D>& Q, const GradArray<D>& grad, const LdGParams& params) {
    Mat<D> gram{};                       // gram[k][l] = d_k Q_ij d_l Q_ij
    std::array<double, D> divergence{};  // divergence[i] = d_k Q_ik
    double cross = 0.0;                  // d_j Q_ik d_k Q_ij
    for (int k = 0; k < D; ++k)
        for (int l = 0; l < D; ++l)
            for (int i = 0; i < D; ++i)
                for (int j = 0; j < D; ++j) gram[k][l] += grad[k][i][j] * grad[l][i][j];
    for (int i = 0; i < D; ++i)
        for (int k = 0; k < D; ++k) divergence[i] += grad[k][i][k];
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
            for (int k = 0; k < D; ++k) cross += grad[j][i][k] * grad[k][i][j];
    double trace_gram = 0.0;
    double div_sq = 0.0;
    double cubic = 0.0;
    for (int k = 0; k < D; ++k) {
        trace_gram += gram[k][k];
        div_sq += divergence[k] * divergence[k];
        for (int l = 0; l < D; ++l) cubic += Q[l][k] * gram[k][l];
    }
    return params.L1 * trace_gram + params.L2 * cross + params.L3 * div_sq + params.L4 * cubic;
}

/// Piecewise-linear energy on the right-triangle split of every cell
/// (diagonal from (i, j) to (i+1, j+1)), bulk part by trapezoid nodes.
/// For L4 = 0 its gradient with respect to interior values is exactly the
/// 5-point right-hand side, so the discrete energy identity only carries
/// the time-stepping error. The L3 - L2 cross term integrates to the signed
/// area of the boundary image and is fixed by the Dirichlet data.
inline double total_energy(const Field2D& f, const LdGParams& params) {
    const Grid2D& g = f.grid();
    const double hx = g.hx();
    const double hy = g.hy();
    const double half_cell = 0.5 * hx * hy;
    double elastic = 0.0;
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) {
            const QTensor2& q00 = f.at(i, j);
            const QTensor2& q10 = f.at(i + 1, j);
            const QTensor2& q01 = f.at(i, j + 1);
            const QTensor2& q11 = f.at(i + 1, j + 1);
            // lower triangle (00, 10, 11) and upper triangle (00, 01, 11)
            const QTensor2 lx = (1.0 / hx) * (q10 - q00), ly = (1.0 / hy) * (q11 - q10);
            const QTensor2 ux = (1.0 / hx) * (q11 - q01), uy = (1.0 / hy) * (q01 - q00);
            const QTensor2 lc = (1.0 / 3.0) * (q00 + q10 + q11);
            const QTensor2 uc = (1.0 / 3.0) * (q00 + q01 + q11);
            elastic += half_cell * (elastic_density(lc, {lx.p, ly.p, lx.q, ly.q}, params) +
                                    elastic_density(uc, {ux.p, uy.p, ux.q, uy.q}, params));
        }
    double bulk = 0.0;
    for (int j = 0; j <= g.ny + 1; ++j)
        for (int i = 0; i <= g.nx + 1; ++i) bulk += trapezoid_weight(g, i, j) * bulk_density(f.at(i, j), params);
    return elastic + bulk;
}

struct OseenFrankConstants {
    double K1 = 0.0;
    double K3 = 0.0;
    double s = 0.0;
};

/// Splay/bend constants of the uniaxial reduction Q = s (n (x) n - I/2).
inline OseenFrankConstants oseen_frank_forward(const LdGParams& params, double s) {
    require(s != 0.0, "order parameter s must be non-zero");
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double quad = (2.0 * params.L1 + params.L2) * s2 + params.L3 * s2;
    return {quad - params.L4 * s3, quad + params.L4 * s3, s};
}

struct ElasticFromOseenFrank {
    /// 2 L1 + L2.
    double Ltilde1 = 0.0;
    double L3 = 0.0;
    double L4 = 0.0;
};

inline ElasticFromOseenFrank oseen_frank_inverse(double K1, double K3, double s) {
    require(s != 0.0, "order parameter s must be non-zero");
    const double s2 = s * s;
    return {(K3 - K1) / (2.0 * s2), K1 / s2, (K3 - K1) / (2.0 * s2 * s)};
}

/// Params realising a given (Ltilde1, L3, L4) with L2 = 0.
inline LdGParams params_from(const ElasticFromOseenFrank& e, LdGParams base = {}) {
    base.L1 = 0.5 * e.Ltilde1;
    base.L2 = 0.0;
    base.L3 = e.L3;
    base.L4 = e.L4;
    return base;
}

}  // namespace qflow
