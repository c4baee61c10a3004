#include <gtest/gtest.h>

#include <random>

#include "emla/chain.hpp"
#include "emla/io.hpp"

using namespace emla;
using namespace emla::vdc;

namespace {

std::mt19937_64& rng() {
  static std::mt19937_64 g(2024);
  return g;
}

double urand(double lo = -1.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

Vec3 rvec() { return {urand(), urand(), urand()}; }
Vec6 rvec6() {
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = urand();
  return v;
}

FrameTransform random_transform() {
  Eigen::Quaterniond q(urand(), urand(), urand(), urand());
  q.normalize();
  return {q.toRotationMatrix(), 2.0 * rvec()};
}

BodyParams random_body() {
  const Vec3 d(urand(0.1, 2), urand(0.1, 2), urand(0.1, 2));
  Eigen::Quaterniond q(urand(), urand(), urand(), urand());
  q.normalize();
  const Mat3 R = q.toRotationMatrix();
  return BodyParams::from_com_inertia(urand(0.5, 20), rvec(), R * d.asDiagonal() * R.transpose());
}

Eigen::Matrix4d homogeneous(const FrameTransform& T) {
  Eigen::Matrix4d H = Eigen::Matrix4d::Identity();
  H.topLeftCorner<3, 3>() = T.R;
  H.topRightCorner<3, 1>() = T.r;
  return H;
}

ChainModel shipped_chain() { return io::load_chain(std::string(EMLA_DATA_DIR) + "/hdrm_chain.json"); }

Vec6 nominal_zeta() {
  Vec6 z;
  z << 0.3, 0.25, -0.6, 0.2, 0.35, -0.15;
  return z;
}

// Independent forward kinematics with 4x4 homogeneous matrices; returns the
// world position of every body's centre of mass.
Eigen::Matrix4d H(const Mat3& R, const Vec3& p) {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = R;
  h.topRightCorner<3, 1>() = p;
  return h;
}

Eigen::Matrix4d Rzh(double a) {
  return H(Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
}
Eigen::Matrix4d Rxh(double a) {
  return H(Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(), Vec3::Zero());
}
Eigen::Matrix4d Tr(double x, double y, double z) { return H(Mat3::Identity(), Vec3(x, y, z)); }

Vec3 point(const Eigen::Matrix4d& h, const Vec3& p) { return (h * p.homogeneous()).head<3>(); }

double potential_energy(const ChainModel& m, const Vec6& z, double g = 9.81) {
  double pe = 0.0;
  auto add = [&](const Eigen::Matrix4d& h, const BodyParams& b) { pe += b.m * g * point(h, b.com).z(); };
  const Eigen::Matrix4d T1 = Tr(m.base_offset.x(), m.base_offset.y(), m.base_offset.z()) * Rzh(z[0]);
  add(T1, m.turntable);
  const Vec3 lp = m.turntable_to_lift.r;
  const Eigen::Matrix4d Bc2 = T1 * Tr(lp.x(), lp.y(), lp.z()) * Rxh(kPi / 2);
  auto chain = [&](const Eigen::Matrix4d& Bc, const ClosedChainGeometry& c, double q) {
    const Eigen::Matrix4d A = Bc * Rzh(q);
    add(A, c.link);
    const Vec3 pin = point(A, Vec3(c.a.x(), c.a.y(), 0));
    const Vec3 base = point(Bc, Vec3(c.b.x(), c.b.y(), 0));
    const Vec3 pin_local = point(Bc.inverse(), pin) - Vec3(c.b.x(), c.b.y(), 0);
    const double phi = std::atan2(pin_local.y(), pin_local.x());
    const Eigen::Matrix4d C = Bc * Tr(c.b.x(), c.b.y(), 0) * Rzh(phi);
    add(C, c.cylinder);
    const Eigen::Matrix4d D = C * Tr((pin - base).norm(), 0, 0);
    add(D, c.rod);
    return Eigen::Matrix4d(A * Tr(c.next_pivot.x(), c.next_pivot.y(), 0));
  };
  const Eigen::Matrix4d Bc3 = chain(Bc2, m.lift, z[1]);
  const Eigen::Matrix4d B4 = chain(Bc3, m.tilt, z[2]);
  const Eigen::Matrix4d A4 = B4 * Rxh(z[3]);
  add(A4, m.wrist_a);
  const Eigen::Matrix4d C4 = A4 * Tr(m.wrist_offset_c.x(), m.wrist_offset_c.y(), m.wrist_offset_c.z()) * Rzh(z[4]);
  add(C4, m.wrist_c);
  const Eigen::Matrix4d D4 = C4 * Tr(m.wrist_offset_d.x(), m.wrist_offset_d.y(), m.wrist_offset_d.z()) * Rxh(z[5]);
  add(D4, m.wrist_d);
  const Eigen::Matrix4d T4 = D4 * Tr(m.tool_offset.x(), m.tool_offset.y(), m.tool_offset.z());
  add(T4, m.tool);
  pe += m.payload * g * T4(2, 3);
  return pe;
}

Vec6 gravity_efforts_fd(const ChainModel& m, const Vec6& z) {
  Vec6 out;
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Vec6 zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    out[i] = (potential_energy(m, zp) - potential_energy(m, zm)) / (2 * h);
  }
  return out;
}

Vec6 static_efforts(const ChainModel& m, const Vec6& z) {
  const auto k = vdc_kinematics(m, z, Vec6::Zero());
  return joint_efforts(m, k, vdc_dynamics(m, k, body_net_forces(m, k)));
}

}  // namespace

TEST(Skew, Basics) {
  Mat3 expect;
  expect << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  EXPECT_EQ(skew(Vec3(1, 0, 0)), expect);
  for (int k = 0; k < 20; ++k) {
    const Vec3 r = rvec(), x = rvec();
    EXPECT_LT((skew(r) * r).norm(), 1e-15);
    EXPECT_LT((skew(r).transpose() + skew(r)).norm(), 1e-15);
    EXPECT_LT((skew(r) * x - r.cross(x)).norm(), 1e-15);
  }
}

TEST(Transform, IdentityAndTranslationBlocks) {
  EXPECT_EQ(velocity_transform(FrameTransform{}), Mat6::Identity());
  const Mat6 U = velocity_transform({Mat3::Identity(), Vec3(0, 0, 1)});
  EXPECT_EQ(Mat3(U.bottomLeftCorner<3, 3>()), skew(Vec3(0, 0, 1)));
}

TEST(Transform, CompositionHomomorphism) {
  for (int k = 0; k < 50; ++k) {
    const auto ab = random_transform(), bc = random_transform();
    // Oracle: compose with homogeneous matrices.
    const Eigen::Matrix4d Hac = homogeneous(ab) * homogeneous(bc);
    FrameTransform ac{Hac.topLeftCorner<3, 3>(), Hac.topRightCorner<3, 1>()};
    EXPECT_LT((velocity_transform(ab) * velocity_transform(bc) - velocity_transform(ac)).norm(), 1e-9);
    EXPECT_LT((compose(ab, bc).R - ac.R).norm(), 1e-12);
  }
}

TEST(Transform, TwistAndWrenchTransport) {
  const Vec3 r(0.3, -1.2, 0.5);
  const Mat6 U = velocity_transform({Mat3::Identity(), r});
  const Vec3 v(1, 2, 3), w(-0.5, 0.2, 0.9);
  Vec6 V;
  V << v, w;
  const Vec6 VB = transform_velocity(U, V);
  EXPECT_LT((VB.tail<3>() - w).norm(), 1e-15);
  EXPECT_LT((VB.head<3>() - (v + w.cross(r))).norm(), 1e-14);

  const Vec3 f(10, -4, 2), tau(1, 1, -3);
  Vec6 F;
  F << f, tau;
  const Vec6 FA = transform_force(U, F);
  EXPECT_LT((FA.head<3>() - f).norm(), 1e-14);
  EXPECT_LT((FA.tail<3>() - (tau + r.cross(f))).norm(), 1e-13);

  const auto T = random_transform();
  const Mat6 Ur = velocity_transform({T.R, Vec3::Zero()});
  const Vec6 Vr = transform_velocity(Ur, V);
  EXPECT_NEAR(Vr.head<3>().norm(), v.norm(), 1e-13);
  EXPECT_NEAR(Vr.tail<3>().norm(), w.norm(), 1e-13);
}

TEST(Transform, PowerBalance) {
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Mat6 U = velocity_transform(random_transform());
    const Vec6 VA = rvec6(), FB = 10.0 * rvec6();
    const Vec6 VB = transform_velocity(U, VA);
    const Vec6 FA = transform_force(U, FB);
    worst = std::max(worst, std::abs(FA.dot(VA) - FB.dot(VB)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(NetForce, Newton) {
  BodyParams b;
  b.m = 3.0;
  const Vec3 g0 = Vec3::Zero();
  EXPECT_LT(net_force(b, Vec6::Zero(), Vec6::Zero(), g0).norm(), 1e-15);
  Vec6 Vd = Vec6::Zero();
  Vd.head<3>() = Vec3(1, -2, 0.5);
  const Vec6 F = net_force(b, Vec6::Zero(), Vd, g0);
  EXPECT_LT((F.head<3>() - 3.0 * Vec3(1, -2, 0.5)).norm(), 1e-14);
  EXPECT_LT(F.tail<3>().norm(), 1e-14);
  // Holding against gravity requires m * (-g).
  const Vec6 Fg = net_force(b, Vec6::Zero(), Vec6::Zero(), Vec3(0, 0, -9.81));
  EXPECT_NEAR(Fg[2], 3.0 * 9.81, 1e-12);
}

TEST(NetForce, Gyroscopic) {
  BodyParams b;
  b.m = 2.0;
  b.I << 1.0, 0.1, 0.0, 0.1, 2.0, 0.3, 0.0, 0.3, 3.0;
  Vec6 V = Vec6::Zero();
  const Vec3 w(0.4, -1.1, 2.0);
  V.tail<3>() = w;
  const Vec6 F = net_force(b, V, Vec6::Zero(), Vec3::Zero());
  EXPECT_LT((F.tail<3>() - w.cross(b.I * w)).norm(), 1e-13);
}

TEST(NetForce, MatchesPointMassSum) {
  // Oracle: a rigid cloud of point masses under Newton's law, summed about the frame origin.
  std::vector<std::pair<double, Vec3>> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({urand(0.5, 2.0), rvec()});
  BodyParams b;
  Vec3 mc = Vec3::Zero();
  for (const auto& [m, p] : pts) {
    b.m += m;
    mc += m * p;
    b.I += m * (p.squaredNorm() * Mat3::Identity() - p * p.transpose());
  }
  b.com = mc / b.m;
  const Vec6 V = rvec6(), Vd = rvec6();
  const Vec3 g(0.1, -0.3, -9.81);
  const Vec3 v = V.head<3>(), w = V.tail<3>(), vd = Vd.head<3>(), wd = Vd.tail<3>();
  Vec6 F = Vec6::Zero();
  for (const auto& [m, p] : pts) {
    const Vec3 acc = vd + w.cross(v) + wd.cross(p) + w.cross(w.cross(p));
    const Vec3 f = m * (acc - g);
    F.head<3>() += f;
    F.tail<3>() += p.cross(f);
  }
  EXPECT_LT((net_force(b, V, Vd, g) - F).norm(), 1e-10 * (1 + F.norm()));
}

TEST(Regressor, MatchesNetForceOnRandomBodies) {
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto b = random_body();
    const Vec6 V = rvec6(), Vd = rvec6();
    const Vec3 g = 9.81 * rvec();
    const Vec6 F = net_force(b, V, Vd, g);
    const Vec6 Fy = regressor(V, Vd, g) * b.theta();
    worst = std::max(worst, (F - Fy).norm() / (1.0 + F.norm()));
  }
  EXPECT_LT(worst, 1e-9);
  EXPECT_LT(regressor(Vec6::Zero(), Vec6::Zero(), Vec3::Zero()).norm(), 1e-15);
  const auto b = random_body();
  const Vec6 V = rvec6(), Vd = rvec6();
  const Mat6x10 Y = regressor(V, Vd, Vec3(0, 0, -9.81));
  EXPECT_LT((Y * (2.0 * b.theta()) - 2.0 * (Y * b.theta())).norm(), 1e-12);
}

TEST(Body, ThetaRoundTrip) {
  const auto b = random_body();
  const auto c = BodyParams::from_theta(b.theta());
  EXPECT_NEAR(c.m, b.m, 1e-14);
  EXPECT_LT((c.com - b.com).norm(), 1e-13);
  EXPECT_LT((c.I - b.I).norm(), 1e-13);
  EXPECT_TRUE(b.valid());
}

TEST(Chain, ShippedModelLoads) {
  const auto m = shipped_chain();
  EXPECT_NEAR(m.lift.link.m, 450.0, 1e-12);
  EXPECT_EQ(m.limits[1].min, -0.5);
}

TEST(Chain, ZeroRatesGiveZeroVelocities) {
  const auto m = shipped_chain();
  const auto k = vdc_kinematics(m, nominal_zeta(), Vec6::Zero());
  for (int i = 0; i < kBodyCount; ++i) EXPECT_LT(k.body_frame(i).twist.V.norm(), 1e-15);
  EXPECT_EQ(k.xdot_L().norm(), 0.0);
}

TEST(Chain, ClosedChainConstraintFramesAgree) {
  const auto m = shipped_chain();
  for (int trial = 0; trial < 20; ++trial) {
    Vec6 z = nominal_zeta() + 0.2 * rvec6();
    const Vec6 zd = rvec6(), zdd = rvec6();
    const auto k = vdc_kinematics(m, z, zd, zdd);
    for (const auto* c : {&k.lift, &k.tilt}) {
      EXPECT_LT((c->T.twist.V - c->T2.twist.V).norm(), 1e-12);
      EXPECT_LT((c->T.twist.Vdot - c->T2.twist.Vdot).norm(), 1e-10);
      EXPECT_LT((c->T.world.r - c->T2.world.r).norm(), 1e-12);
      EXPECT_LT((c->T.world.R - c->T2.world.R).norm(), 1e-12);
    }
  }
}

TEST(Chain, ActuatorVelocityMatchesLengthDerivative) {
  const auto m = shipped_chain();
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec6 z = nominal_zeta() + 0.2 * rvec6();
    const Vec6 zd = rvec6();
    const auto k = vdc_kinematics(m, z, zd);
    const Vec2 Lp = vdc_kinematics(m, z + h * zd, Vec6::Zero()).length();
    const Vec2 Lm = vdc_kinematics(m, z - h * zd, Vec6::Zero()).length();
    const Vec2 fd = (Lp - Lm) / (2 * h);
    EXPECT_NEAR(k.xdot_L()[0], fd[0], 1e-6);
    EXPECT_NEAR(k.xdot_L()[1], fd[1], 1e-6);
  }
}

TEST(Chain, TwistsMatchFiniteDifferenceOfPoses) {
  const auto m = shipped_chain();
  const double h = 1e-6;
  const Vec6 z = nominal_zeta(), zd = rvec6();
  const auto k = vdc_kinematics(m, z, zd);
  const auto kp = vdc_kinematics(m, z + h * zd, Vec6::Zero());
  const auto km = vdc_kinematics(m, z - h * zd, Vec6::Zero());
  for (int i = 0; i < kBodyCount; ++i) {
    const auto& f = k.body_frame(i);
    const Vec3 v_world = (kp.body_frame(i).world.r - km.body_frame(i).world.r) / (2 * h);
    const Mat3 Rdot = (kp.body_frame(i).world.R - km.body_frame(i).world.R) / (2 * h);
    const Mat3 W = f.world.R.transpose() * Rdot;  // body-frame angular velocity, skew form
    const Vec3 w_body(W(2, 1), W(0, 2), W(1, 0));
    EXPECT_LT((f.world.R.transpose() * v_world - f.twist.V.head<3>()).norm(), 1e-6) << body_name(i);
    EXPECT_LT((w_body - f.twist.V.tail<3>()).norm(), 1e-6) << body_name(i);
  }
}

TEST(Chain, AccelerationsMatchFiniteDifferenceOfTwists) {
  const auto m = shipped_chain();
  const double h = 1e-5;
  const Vec6 z = nominal_zeta(), zd = rvec6(), zdd = rvec6();
  const auto k = vdc_kinematics(m, z, zd, zdd);
  auto at = [&](double t) {
    return vdc_kinematics(m, z + t * zd + 0.5 * t * t * zdd, zd + t * zdd);
  };
  const auto kp = at(h), km = at(-h);
  for (int i = 0; i < kBodyCount; ++i) {
    const Vec6 fd = (kp.body_frame(i).twist.V - km.body_frame(i).twist.V) / (2 * h);
    EXPECT_LT((fd - k.body_frame(i).twist.Vdot).norm(), 1e-6) << body_name(i);
  }
}

TEST(Chain, JacobianMatchesTcpFiniteDifference) {
  const auto m = shipped_chain();
  const Vec6 z = nominal_zeta();
  const Mat6 J = tcp_jacobian(m, z);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    const Vec3 fd = (tcp_position(m, z + h * Vec6::Unit(i)) - tcp_position(m, z - h * Vec6::Unit(i))) / (2 * h);
    EXPECT_LT((J.block<3, 1>(0, i) - fd).norm(), 1e-6);
  }
}

TEST(Dynamics, ZeroGravityZeroMotionGivesZeroForces) {
  auto m = shipped_chain();
  m.gravity.setZero();
  const auto k = vdc_kinematics(m, nominal_zeta(), Vec6::Zero());
  const auto d = vdc_dynamics(m, k, body_net_forces(m, k));
  EXPECT_LT(d.F_L().norm(), 1e-9);
  EXPECT_LT(d.T1.norm(), 1e-9);
}

TEST(Dynamics, StaticsMatchPotentialEnergyGradient) {
  auto m = shipped_chain();
  for (double payload : {0.0, 300.0}) {
    m.payload = payload;
    for (int trial = 0; trial < 5; ++trial) {
      const Vec6 z = nominal_zeta() + 0.3 * rvec6();
      const Vec6 tau = static_efforts(m, z);
      const Vec6 fd = gravity_efforts_fd(m, z);
      for (int i = 0; i < 6; ++i) EXPECT_NEAR(tau[i], fd[i], 1e-6 * (1.0 + std::abs(fd[i])) + 1e-4) << i;
    }
  }
}

TEST(Dynamics, StaticsMatchJacobianTranspose) {
  auto m = shipped_chain();
  m.gravity.setZero();
  for (int trial = 0; trial < 10; ++trial) {
    const Vec6 z = nominal_zeta() + 0.3 * rvec6();
    Vec6 w;
    w << 1000.0 * rvec(), 200.0 * rvec();
    const auto k = vdc_kinematics(m, z, Vec6::Zero());
    const Vec6 tau = joint_efforts(m, k, vdc_dynamics(m, k, body_net_forces(m, k), w));
    const Vec6 ref = tcp_jacobian(m, z).transpose() * w;
    EXPECT_LT((tau - ref).norm(), 1e-6 * ref.norm());
  }
}

TEST(Dynamics, PayloadContributionIsLinear) {
  auto m = shipped_chain();
  const Vec6 z = nominal_zeta();
  auto lift_force = [&](double p) {
    m.payload = p;
    const auto k = vdc_kinematics(m, z, Vec6::Zero());
    return vdc_dynamics(m, k, body_net_forces(m, k)).lift.F_L;
  };
  const double f0 = lift_force(0), f1 = lift_force(150), f2 = lift_force(300);
  EXPECT_GT(f0, 0.0);
  EXPECT_NEAR(f2 - f0, 2.0 * (f1 - f0), 1e-8 * std::abs(f2));
}

TEST(Dynamics, LiftForceWithinActuatorRatingOverWorkspace) {
  auto m = shipped_chain();
  m.payload = 300;
  double worst = 0.0;
  for (double q2 = m.limits[1].min; q2 <= m.limits[1].max; q2 += 0.05) {
    for (double q3 = m.limits[2].min; q3 <= m.limits[2].max; q3 += 0.05) {
      Vec6 z = Vec6::Zero();
      z[1] = q2;
      z[2] = q3;
      const auto k = vdc_kinematics(m, z, Vec6::Zero());
      worst = std::max(worst, std::abs(vdc_dynamics(m, k, body_net_forces(m, k)).lift.F_L));
    }
  }
  EXPECT_LT(worst, 70000.0);
}

TEST(Geometry, LengthInversion) {
  const auto m = shipped_chain();
  for (double q = -0.4; q < 0.95; q += 0.1) {
    const double L = actuator_geometry(m.lift, q, 0, 0).L;
    EXPECT_NEAR(joint_from_length(m.lift, L, m.limits[1].min - 0.05, m.limits[1].max + 0.05), q, 1e-10);
  }
}
