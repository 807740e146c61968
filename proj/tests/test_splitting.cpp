#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "qflow/splitting.hpp"

using namespace qflow;

namespace {

constexpr double kPi = std::numbers::pi;

LdGParams bulk(double a, double b, double c) {
    LdGParams p;
    p.a = a;
    p.b = b;
    p.c = c;
    p.L1 = 0.5;
    return p;
}

Mat<3> rotate(const Eigen::Matrix3d& R, const Mat<3>& m) {
    Eigen::Matrix3d M;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) M(i, j) = m[i][j];
    const Eigen::Matrix3d out = R * M * R.transpose();
    Mat<3> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i][j] = out(i, j);
    return r;
}

Eigen::Matrix3d random_orthogonal(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::Matrix3d A;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) A(i, j) = g(rng);
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(A);
    return qr.householderQ();
}

QTensor3 random_q3(std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return QTensor3{scale * u(rng), scale * u(rng), scale * u(rng), scale * u(rng), scale * u(rng)};
}

double max_diff(const QTensor3& x, const QTensor3& y) {
    return std::max({std::abs(x.xx - y.xx), std::abs(x.xy - y.xy), std::abs(x.xz - y.xz), std::abs(x.yy - y.yy),
                     std::abs(x.yz - y.yz)});
}

}  // namespace

TEST(HeatKernel, WeightsFormAConvexCombination) {
    for (double dt : {1e-4, 1e-3, 0.01, 0.05}) {
        const HeatKernel k = heat_kernel(dt, 0.7, 2.0 * kPi / 128, 128);
        double sum = 0.0;
        for (double w : k.weights) {
            EXPECT_GE(w, 0.0);
            sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-13);
        EXPECT_EQ(k.weights.size(), static_cast<std::size_t>(2 * k.K + 1));
        EXPECT_NEAR(k.sigma, std::sqrt(4.0 * 0.7 * dt), 1e-15);
    }
}

TEST(HeatKernel, RejectsSupportWiderThanThePeriod) {
    EXPECT_THROW(heat_kernel(10.0, 1.0, 2.0 * kPi / 32, 32), PreconditionError);
    EXPECT_THROW(heat_kernel(0.0, 1.0, 0.1, 32), PreconditionError);
    EXPECT_THROW(heat_kernel(0.1, -1.0, 0.1, 32), PreconditionError);
}

TEST(HeatStep, ConstantFieldIsUnchanged) {
    const auto f = make_periodic_field<QTensor3>(
        32, 2.0 * kPi, [](double, double) { return QTensor3{0.3, -0.1, 0.2, 0.05, -0.4}; });
    const auto g = heat_step(f, 0.05, 0.5);
    for (const QTensor3& Q : g.values) EXPECT_LT(max_diff(Q, f.values.front()), 1e-13);
}

TEST(HeatStep, ImpulseSpreadsAsConvexWeights) {
    const QTensor2 A{0.4, -0.3};
    auto f = make_periodic_field<QTensor2>(32, 2.0 * kPi, [](double, double) { return QTensor2{}; });
    f.at(10, 20) = A;
    const auto g = heat_step(f, 0.05, 0.5);
    const HullBounds before = hull_bounds(f);
    const HullBounds after = hull_bounds(g);
    double total = 0.0;
    for (const QTensor2& Q : g.values) {
        // Q = w A: both components share the same factor.
        const double w = Q.p / A.p;
        EXPECT_GE(w, -1e-15);
        EXPECT_LE(w, 1.0);
        EXPECT_NEAR(Q.q, w * A.q, 1e-15);
        total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_GE(after.lambda_min, before.lambda_min - 1e-15);
    EXPECT_LE(after.lambda_max, before.lambda_max + 1e-15);
    EXPECT_LT(after.lambda_max, before.lambda_max);
}

TEST(HeatStep, FourierModesDecayWithTheHeatSymbol) {
    const int n = 64;
    const double L = 2.0 * kPi;
    const double L1 = 0.5;
    const double dt = 0.1;
    for (int kx : {1, 2, 3}) {
        for (int ky : {0, 1, 2}) {
            const auto f = make_periodic_field<QTensor2>(n, L, [&](double x, double y) {
                return QTensor2{std::cos(kx * x + ky * y), 0.0};
            });
            const auto g = heat_step(f, dt, L1);
            const double factor = g.values.front().p;
            const double k2 = kx * kx + ky * ky;
            EXPECT_NEAR(factor, std::exp(-2.0 * L1 * k2 * dt), 1e-3) << kx << "," << ky;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) EXPECT_NEAR(g.at(i, j).p, factor * f.at(i, j).p, 1e-12);
        }
    }
}

TEST(HullBounds, ZeroField) {
    const auto f = make_periodic_field<QTensor3>(8, 1.0, [](double, double) { return QTensor3{}; });
    const HullBounds hb = hull_bounds(f);
    EXPECT_NEAR(hb.lambda_min, 0.0, 1e-15);
    EXPECT_NEAR(hb.lambda_max, 0.0, 1e-15);
}

TEST(HullBounds, RandomPhysicalFieldStaysInsideTheInterval) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const PhysicalityInterval I = physical_interval(params, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    auto f = make_periodic_field<QTensor3>(16, 1.0, [&](double, double) {
        // Rotate a diagonal state with admissible eigenvalues.
        double l1, l2;
        do {
            l1 = I.lo + (I.hi - I.lo) * u(rng);
            l2 = I.lo + (I.hi - I.lo) * u(rng);
        } while (-(l1 + l2) < I.lo || -(l1 + l2) > I.hi);
        const Eigen::Matrix3d R = random_orthogonal(rng);
        return QTensor3::from_matrix(rotate(R, QTensor3::diagonal(l1, l2).matrix()));
    });
    const HullBounds hb = hull_bounds(f);
    EXPECT_GE(hb.lambda_min, I.lo - 1e-12);
    EXPECT_LE(hb.lambda_max, I.hi + 1e-12);
    EXPECT_LE(hb.lambda_min, hb.lambda_max);
}

TEST(BulkOde, ZeroIsAFixedPoint) {
    EXPECT_EQ(bulk_ode_step(QTensor2{}, 1.0, bulk(1.0, 0.0, 1.0)), QTensor2{});
    EXPECT_EQ(bulk_ode_step(QTensor3{}, 1.0, bulk(-1.0, 3.0, 1.0)), QTensor3{});
}

TEST(BulkOde, TwoDimensionalTraceMatchesClosedForm) {
    const QTensor2 Q0{std::sqrt(0.5), 0.0};
    ASSERT_NEAR(Q0.trace_sq(), 1.0, 1e-15);
    const QTensor2 Q = bulk_ode_evolve(Q0, 1.0, 1000, bulk(1.0, 0.0, 1.0));
    EXPECT_NEAR(Q.trace_sq(), trace_ode_closed_form_2d(1.0, 1.0, 1.0, 1.0), 1e-10);
    EXPECT_NEAR(Q.trace_sq(), 0.0725789, 1e-7);
}

TEST(BulkOde, TwoDimensionalIgnoresB) {
    const QTensor2 Q0{0.2, -0.5};
    EXPECT_EQ(bulk_ode_step(Q0, 0.3, bulk(-1.0, 0.0, 1.0)), bulk_ode_step(Q0, 0.3, bulk(-1.0, 5.0, 1.0)));
}

TEST(BulkOde, StationaryUniaxialPair) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const double sp = s_plus(params);
    EXPECT_NEAR(sp, (3.0 + std::sqrt(33.0)) / 4.0, 1e-15);
    EXPECT_NEAR(sp, 2.1861407, 1e-7);
    const EigenPair e{-sp / 3.0, 2.0 * sp / 3.0};
    EXPECT_NEAR(e.lambda1, -0.7287136, 1e-7);
    EXPECT_NEAR(e.lambda2, 1.4574271, 1e-7);
    const EigenPair rate = eigen_ode_rhs(e, params);
    EXPECT_NEAR(rate.lambda1, 0.0, 1e-12);
    EXPECT_NEAR(rate.lambda2, 0.0, 1e-12);
    const QTensor3 Q0 = QTensor3::diagonal(e.lambda1, e.lambda2);
    EXPECT_LT(max_diff(bulk_ode_evolve(Q0, 5.0, 50, params), Q0), 1e-12);
}

TEST(EigenOde, ZeroIsStationary) {
    const EigenPair r = eigen_ode_rhs({0.0, 0.0}, bulk(-1.0, 3.0, 1.0));
    EXPECT_EQ(r.lambda1, 0.0);
    EXPECT_EQ(r.lambda2, 0.0);
}

TEST(EigenOde, MatchesDiagonalOfMatrixRhs) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_real_distribution<double> pos(0.1, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const LdGParams params = bulk(u(rng), pos(rng), pos(rng));
        const EigenPair e{u(rng), u(rng)};
        const QTensor3 r = bulk_ode_rhs(QTensor3::diagonal(e.lambda1, e.lambda2), params);
        const EigenPair expected = eigen_ode_rhs(e, params);
        const double scale = std::max(1.0, std::abs(expected.lambda1) + std::abs(expected.lambda2));
        EXPECT_NEAR(r.xx, expected.lambda1, 1e-12 * scale);
        EXPECT_NEAR(r.yy, expected.lambda2, 1e-12 * scale);
        EXPECT_EQ(r.xy, 0.0);
        EXPECT_EQ(r.xz, 0.0);
        EXPECT_EQ(r.yz, 0.0);
    }
}

TEST(BulkOdeProperty, TwoDimensionalNormPreservation) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const LdGParams params = bulk(-std::abs(u(rng)) - 0.1, 0.0, std::abs(u(rng)) + 0.1);
        const double radius = std::sqrt(-params.a / params.c);
        QTensor2 Q{u(rng), u(rng)};
        Q = (radius * std::abs(u(rng)) / frobenius_norm(Q)) * Q;
        for (int s = 0; s < 100; ++s) {
            Q = bulk_ode_step(Q, 0.1, params);
            EXPECT_LE(frobenius_norm(Q), radius + 1e-9);
        }
    }
}

TEST(BulkOdeProperty, ThreeDimensionalNormBound) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const double sp = s_plus(params);
    const double bound = 2.0 / 3.0 * sp * sp;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        QTensor3 Q = random_q3(rng, 1.0);
        Q = (std::sqrt(bound) * u(rng) / frobenius_norm(Q)) * Q;
        for (int s = 0; s < 100; ++s) {
            Q = bulk_ode_step(Q, 0.1, params);
            ASSERT_LE(Q.trace_sq(), bound + 1e-8);
            for (double l : eigenvalues(Q)) ASSERT_LE(std::abs(l), 2.0 / 3.0 * sp + 1e-8);
        }
    }
}

TEST(BulkOdeProperty, IntervalAndOrderPreservation) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const PhysicalityInterval I = physical_interval(params, 3);
    int admissible = 0;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double l1 = I.lo + (I.hi - I.lo) * i / 19.0;
            const double l2 = I.lo + (I.hi - I.lo) * j / 19.0;
            const double l3 = -(l1 + l2);
            if (l3 < I.lo - 1e-12 || l3 > I.hi + 1e-12) continue;
            ++admissible;
            QTensor3 Q = QTensor3::diagonal(l1, l2);
            for (int s = 0; s < 100; ++s) {
                Q = bulk_ode_step(Q, 0.1, params);
                for (double l : {Q.xx, Q.yy, Q.zz()}) {
                    ASSERT_GE(l, I.lo - 1e-8);
                    ASSERT_LE(l, I.hi + 1e-8);
                }
                if (l1 <= l2) {
                    ASSERT_LE(Q.xx, Q.yy + 1e-12);
                }
                ASSERT_EQ(Q.xy, 0.0);
            }
        }
    }
    EXPECT_GT(admissible, 100);
}

TEST(BulkOdeProperty, RotationalEquivariance) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Matrix3d R = random_orthogonal(rng);
        const QTensor3 Q0 = random_q3(rng, 0.8);
        const QTensor3 a = bulk_ode_evolve(QTensor3::from_matrix(rotate(R, Q0.matrix())), 2.0, 20, params);
        const QTensor3 b = QTensor3::from_matrix(rotate(R, bulk_ode_evolve(Q0, 2.0, 20, params).matrix()));
        EXPECT_LT(max_diff(a, b), 1e-10);
    }
}

TEST(TraceOde, ClosedFormExamples) {
    EXPECT_EQ(trace_ode_closed_form_2d(0.0, 1.0, 1.0, 3.0), 0.0);
    EXPECT_NEAR(trace_ode_closed_form_2d(1.0, 0.0, 1.0, 1.0), 1.0 / 3.0, 1e-15);
    const double e2 = std::exp(-2.0);
    EXPECT_NEAR(trace_ode_closed_form_2d(1.0, 1.0, 1.0, 1.0), e2 / (2.0 - e2), 1e-15);
    EXPECT_NEAR(trace_ode_closed_form_2d(1.0, 1.0, 1.0, 1.0), 0.0725789, 1e-7);
    // a -> 0 is continuous.
    EXPECT_NEAR(trace_ode_closed_form_2d(1.0, 1e-9, 1.0, 1.0), 1.0 / 3.0, 1e-8);
    EXPECT_THROW(trace_ode_closed_form_2d(-1.0, 1.0, 1.0, 1.0), PreconditionError);
    EXPECT_THROW(trace_ode_closed_form_2d(1.0, 1.0, 0.0, 1.0), PreconditionError);
}

TEST(TraceOde, NegativeAApproachesEquilibrium) {
    // y -> -a/c for a < 0.
    EXPECT_NEAR(trace_ode_closed_form_2d(0.1, -1.0, 2.0, 50.0), 0.5, 1e-12);
    const QTensor2 Q = bulk_ode_evolve(QTensor2{0.1, 0.2}, 2.0, 200, bulk(-1.0, 0.0, 2.0));
    EXPECT_NEAR(Q.trace_sq(), trace_ode_closed_form_2d(0.1, -1.0, 2.0, 2.0), 1e-10);
}

TEST(Trotter, ValidatesTheSimplifiedSystem) {
    const auto f = make_periodic_field<QTensor3>(16, 2.0 * kPi, [](double, double) { return QTensor3{}; });
    LdGParams p = bulk(-1.0, 3.0, 1.0);
    p.L4 = 0.1;
    EXPECT_THROW(trotter_solve(f, 1.0, 16, p), PreconditionError);
    p.L4 = 0.0;
    p.L2 = 0.2;
    EXPECT_THROW(trotter_solve(f, 1.0, 16, p), PreconditionError);
    p.L3 = -0.2;
    EXPECT_NO_THROW(trotter_solve(f, 1.0, 16, p));
    p.c = 0.0;
    EXPECT_THROW(trotter_solve(f, 1.0, 16, p), PreconditionError);
}

TEST(Trotter, TwoDimensionalUsesHalfZeta) {
    LdGParams p = bulk(-1.0, 0.0, 1.0);
    p.L2 = 0.4;
    p.L3 = 0.2;
    EXPECT_DOUBLE_EQ(splitting_heat_coefficient<QTensor2>(p), 0.5 * p.zeta());
    EXPECT_DOUBLE_EQ(splitting_heat_coefficient<QTensor3>(p), p.L1);
}

TEST(Trotter, ConstantFieldFollowsTheOde) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const QTensor3 Q0{0.3, 0.1, -0.2, 0.1, 0.25};
    const auto f = make_periodic_field<QTensor3>(16, 2.0 * kPi, [&](double, double) { return Q0; });
    const auto res = trotter_solve(f, 1.0, 10, params);
    const QTensor3 expected = bulk_ode_evolve(Q0, 1.0, 10, params);
    for (const QTensor3& Q : res.field.values) EXPECT_LT(max_diff(Q, expected), 1e-10);
    EXPECT_EQ(res.hulls.size(), 21u);
}

namespace {

PeriodicField<QTensor3> uniaxial_data(int n, const LdGParams& params) {
    const double sp = s_plus(params);
    return make_periodic_field<QTensor3>(n, 2.0 * kPi, [&](double x, double y) {
        const double s = sp * (0.5 + 0.5 * std::sin(x) * std::sin(y));
        const double phi = std::cos(x) + 0.5 * std::sin(2.0 * y);
        return from_director(std::array<double, 3>{std::cos(phi), std::sin(phi) * std::cos(y), std::sin(phi) * std::sin(y)}, s);
    });
}

}  // namespace

TEST(Trotter, HullStaysInsideInitialHull) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const auto f = uniaxial_data(32, params);
    const auto res = trotter_solve(f, 1.0, 16, params);
    const HullBounds& h0 = res.hulls.front();
    const PhysicalityInterval I = physical_interval(params, 3);
    EXPECT_NEAR(h0.lambda_min, I.lo, 1e-12);
    EXPECT_NEAR(h0.lambda_max, I.hi, 1e-12);
    for (const HullBounds& hb : res.hulls) {
        EXPECT_GE(hb.lambda_min, h0.lambda_min - 1e-8);
        EXPECT_LE(hb.lambda_max, h0.lambda_max + 1e-8);
    }
}

TEST(Trotter, TwoDimensionalHullInsideTheBall) {
    const LdGParams params = bulk(-1.0, 0.0, 1.0);
    const PhysicalityInterval I = physical_interval(params, 2);
    const auto f = make_periodic_field<QTensor2>(32, 2.0 * kPi, [&](double x, double y) {
        return from_director(std::array<double, 2>{std::cos(x + y), std::sin(x + y)},
                             2.0 * I.hi * (0.5 + 0.5 * std::cos(x) * std::sin(2.0 * y)));
    });
    const auto res = trotter_solve(f, 1.0, 16, params);
    for (const HullBounds& hb : res.hulls) {
        EXPECT_GE(hb.lambda_min, I.lo - 1e-8);
        EXPECT_LE(hb.lambda_max, I.hi + 1e-8);
    }
}

TEST(Trotter, SelfConvergence) {
    const LdGParams params = bulk(-1.0, 3.0, 1.0);
    const auto f = uniaxial_data(32, params);
    TrotterOptions opts;
    opts.record_hulls = false;
    std::vector<PeriodicField<QTensor3>> sols;
    for (int n : {8, 16, 32, 64}) sols.push_back(trotter_solve(f, 1.0, n, params, opts).field);
    std::vector<double> diffs;
    for (std::size_t k = 0; k + 1 < sols.size(); ++k) diffs.push_back(l2_distance(sols[k], sols[k + 1]));
    for (std::size_t k = 0; k + 1 < diffs.size(); ++k) {
        EXPECT_LT(diffs[k + 1], diffs[k]);
        EXPECT_GE(std::log2(diffs[k] / diffs[k + 1]), 0.5);
    }
}
