#include <gtest/gtest.h>

#include <random>

#include "emla/chain.hpp"
#include "emla/io.hpp"
#include "emla/trajectory.hpp"

using namespace emla;
using namespace emla::traj;

TEST(Quintic, RejectsNonPositiveDuration) {
  EXPECT_THROW(quintic_coeffs<3>(Vec3::Zero(), Vec3::Ones(), 0.0), ConfigError);
}

TEST(Quintic, StationaryWhenEndpointsCoincide) {
  const auto q = quintic_coeffs<3>(Vec3(1, 2, 3), Vec3(1, 2, 3), 4.0);
  for (std::size_t i = 1; i <= 5; ++i) EXPECT_EQ(q.a[i].norm(), 0.0);
}

TEST(Quintic, BoundaryConditions) {
  const Vec3 p0(0.5, -1.0, 2.0), p1(3.0, 0.25, -1.5);
  const double T = 7.3;
  const auto q = quintic_coeffs<3>(p0, p1, T);
  // Evaluate the raw polynomial at both ends (not the hold branch).
  auto raw = [&](double t) {
    Vec3 p = Vec3::Zero(), v = Vec3::Zero(), a = Vec3::Zero();
    for (int i = 0; i <= 5; ++i) {
      p += q.a[static_cast<std::size_t>(i)] * std::pow(t, i);
      if (i >= 1) v += i * q.a[static_cast<std::size_t>(i)] * std::pow(t, i - 1);
      if (i >= 2) a += i * (i - 1) * q.a[static_cast<std::size_t>(i)] * std::pow(t, i - 2);
    }
    return std::array<Vec3, 3>{p, v, a};
  };
  const auto s0 = raw(0.0), s1 = raw(T);
  EXPECT_LT((s0[0] - p0).norm(), 1e-12);
  EXPECT_LT(s0[1].norm(), 1e-12);
  EXPECT_LT(s0[2].norm(), 1e-12);
  EXPECT_LT((s1[0] - p1).norm(), 1e-12);
  EXPECT_LT(s1[1].norm(), 1e-12);
  EXPECT_LT(s1[2].norm(), 1e-12);
}

TEST(Quintic, MidpointAndPeakSpeed) {
  const Vec3 p0(0, 0, 0), p1(2.0, -1.0, 0.5);
  const double T = 5.0;
  const auto q = quintic_coeffs<3>(p0, p1, T);
  const auto mid = q.eval(T / 2);
  EXPECT_LT((mid.P - 0.5 * (p0 + p1)).norm(), 1e-12);
  const double peak = 15.0 * (p1 - p0).norm() / (8.0 * T);
  EXPECT_NEAR(mid.Pdot.norm(), peak, 1e-12);
  double best = 0.0;
  for (int k = 0; k <= 1000; ++k) best = std::max(best, q.eval(T * k / 1000.0).Pdot.norm());
  EXPECT_NEAR(best, peak, 1e-12);
}

TEST(Quintic, EndpointsAndHold) {
  const Vec3 p0(1, 1, 1), p1(2, 3, 4);
  const auto q = quintic_coeffs<3>(p0, p1, 2.0);
  const auto s0 = q.eval(0.0);
  EXPECT_LT((s0.P - p0).norm(), 1e-15);
  EXPECT_LT(s0.Pdot.norm(), 1e-15);
  const auto s = q.eval(4.0);
  EXPECT_EQ(s.P, p1);
  EXPECT_EQ(s.Pdot.norm(), 0.0);
}

TEST(Quintic, DerivativesMatchFiniteDifferences) {
  const auto q = quintic_coeffs<3>(Vec3(0, 1, 0), Vec3(1, -2, 3), 3.0);
  for (double h : {1e-3, 5e-4}) {
    double worst_v = 0.0, worst_a = 0.0;
    for (double t = 0.2; t < 2.8; t += 0.1) {
      worst_v = std::max(worst_v, ((q.eval(t + h).P - q.eval(t - h).P) / (2 * h) - q.eval(t).Pdot).norm());
      worst_a = std::max(worst_a, ((q.eval(t + h).Pdot - q.eval(t - h).Pdot) / (2 * h) - q.eval(t).Pddot).norm());
    }
    // Central differences are O(h^2).
    EXPECT_LT(worst_v, 10.0 * h * h);
    EXPECT_LT(worst_a, 10.0 * h * h);
  }
}

TEST(RequiredVelocity, CorrectionTerm) {
  const Vec3 Pd(1, 2, 3);
  EXPECT_EQ(required_velocity<Vec3>(Pd, Vec3(0.1, 0, 0), Pd, 2.0), Vec3(0.1, 0, 0));
  const Vec3 e(0.1, 0, -0.05);
  EXPECT_LT((required_velocity<Vec3>(Pd, Vec3::Zero(), Vec3(Pd - e), 3.0) - 3.0 * e).norm(), 1e-15);
  const Vec3 r = required_velocity<Vec3>(Pd, Vec3(0.01, 0, 0), Vec3(Pd - e), 2.0);
  EXPECT_LT((r - Vec3(0.21, 0, -0.1)).norm(), 1e-15);
}

TEST(JointVelocities, IdentityAndRoundTrip) {
  Vec6 p;
  p << 1, 2, 3, 0, 0, 0;
  EXPECT_LT((joint_velocities(Mat6::Identity(), p).zeta_dot - p).norm(), 1e-15);
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 20; ++k) {
    Mat6 J;
    for (int i = 0; i < 36; ++i) J(i / 6, i % 6) = u(g);
    Eigen::JacobiSVD<Mat6> svd(J);
    const double cond = svd.singularValues()(0) / svd.singularValues()(5);
    if (cond > 1e3 || svd.singularValues()(5) < 1e-2) continue;
    const auto r = joint_velocities(J, p, 0.0);
    EXPECT_FALSE(r.damped);
    EXPECT_LT((J * r.zeta_dot - p).norm() / p.norm(), 1e-8);
  }
}

TEST(JointVelocities, DampedNearSingularity) {
  // Weakest direction: sigma = 1e-5, SVD oracle bound sigma / (sigma^2 + lambda^2).
  Vec6 s;
  s << 3, 2, 1, 0.5, 0.2, 1e-5;
  Eigen::Quaterniond qa(0.3, 0.1, -0.7, 0.2);
  qa.normalize();
  Mat6 U = Mat6::Identity(), V = Mat6::Identity();
  U.topLeftCorner<3, 3>() = qa.toRotationMatrix();
  V.bottomRightCorner<3, 3>() = qa.toRotationMatrix().transpose();
  const Mat6 J = U * s.asDiagonal() * V.transpose();
  const Vec6 pid = U.col(5);  // excites only the weakest direction
  const auto r = joint_velocities(J, pid);
  EXPECT_TRUE(r.damped);
  const double lam = 1e-3;
  const double bound = s[5] / (s[5] * s[5] + lam * lam);
  EXPECT_NEAR(r.zeta_dot.norm(), bound, 1e-9 * bound);
  EXPECT_LT(r.zeta_dot.norm(), 1.0 / s[5]);
}

TEST(SoftLimit, Branches) {
  const JointLimits lim{-1.0, 1.0, 0.2};
  EXPECT_EQ(soft_limit_scale(0.0, 0.7, lim), 0.7);
  EXPECT_EQ(soft_limit_scale(-1.0, -0.5, lim), 0.0);
  EXPECT_NEAR(soft_limit_scale(-1.0 + 0.1, -0.5, lim), -0.25, 1e-15);
  EXPECT_NEAR(soft_limit_scale(1.0 - 0.05, 0.4, lim), 0.1, 1e-15);
  // Moving away from the limit is unrestricted.
  EXPECT_EQ(soft_limit_scale(-0.95, 0.5, lim), 0.5);
  // Past the hard limit the scale clamps to zero instead of reversing.
  EXPECT_EQ(soft_limit_scale(-1.05, -0.5, lim), 0.0);
}

TEST(SoftLimit, NeverIncreasesOrFlips) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const JointLimits lim{-1.0, 1.0, 0.3};
  for (int k = 0; k < 10000; ++k) {
    const double z = u(g), v = u(g);
    const double out = soft_limit_scale(z, v, lim);
    EXPECT_LE(std::abs(out), std::abs(v));
    EXPECT_GE(out * v, 0.0);
  }
}

TEST(SoftLimit, KinematicLoopStaysInsideHardLimits) {
  // Drive every joint of the shipped chain toward a target beyond its limits at 1 kHz.
  const auto m = io::load_chain(std::string(EMLA_DATA_DIR) + "/hdrm_chain.json");
  Vec6 z = Vec6::Zero();
  const double dt = 1e-3;
  for (int dir : {+1, -1}) {
    for (int k = 0; k < 20000; ++k) {
      for (int i = 0; i < 6; ++i) {
        const auto& l = m.limits[static_cast<std::size_t>(i)];
        const JointLimits jl{l.min, l.max, l.margin};
        const double target = dir > 0 ? l.max + 1.0 : l.min - 1.0;
        const double v = std::clamp(2.0 * (target - z[i]), -1.0, 1.0);
        z[i] += dt * soft_limit_scale(z[i], v, jl);
        ASSERT_GE(z[i], l.min);
        ASSERT_LE(z[i], l.max);
      }
    }
  }
}
