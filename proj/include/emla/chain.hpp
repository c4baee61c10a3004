#pragma once

// Six-joint heavy-duty manipulator as a virtual-decomposition frame graph:
// base yaw (j=1), lift and tilt closed chains driven by linear actuators
// (j=2, 3) and a three-axis x-z-x wrist (j=4..6).
//
// Closed chain j lives in the plane of its base frame Bc_j (rotation axis z):
//   A_j  = Rz(q)        at the pivot          (link body)
//   T_j  = A_j + a      actuator pin on link
//   C_j  = Rz(phi)      at b                  (cylinder body)
//   D_j  = C_j + L x    rod end               (rod body, prismatic along x)
//   T2_j = Rz(q - phi)  on D_j                (coincides with T_j)
// and the next chain's base frame is rigidly attached to T_j.

#include <array>
#include <cmath>
#include <string>

#include "emla/spatial.hpp"

namespace emla::vdc {

struct ClosedChainGeometry {
  Vec2 b{0.0, 0.0};           // cylinder pivot in the chain base plane
  Vec2 a{1.0, 0.0};           // actuator pin in link coordinates
  Vec2 next_pivot{2.0, 0.0};  // next joint in link coordinates
  BodyParams link;            // referred to frame A
  BodyParams cylinder;        // referred to frame C
  BodyParams rod;             // referred to frame D
};

struct JointLimit {
  double min = -kPi;
  double max = kPi;
  double margin = 0.1;
};

struct ChainModel {
  Axis base_axis = Axis::z_tau;
  Vec3 base_offset = Vec3::Zero();
  BodyParams turntable;
  FrameTransform turntable_to_lift;  // T1 -> Bc2, fixed
  ClosedChainGeometry lift;
  ClosedChainGeometry tilt;
  Mat3 wrist_base_R = Mat3::Identity();  // orientation of B4 relative to T3
  Vec3 wrist_offset_c = Vec3::Zero();    // A4 -> C4
  Vec3 wrist_offset_d = Vec3::Zero();    // C4 -> D4
  Vec3 tool_offset = Vec3::Zero();       // D4 -> T4 (TCP)
  BodyParams wrist_a, wrist_c, wrist_d;
  BodyParams tool;       // tool body at T4, excluding payload
  double payload = 0.0;  // point mass at the TCP, kg
  Vec3 gravity{0.0, 0.0, -9.81};
  std::array<JointLimit, 6> limits{};

  void validate() const {
    for (const auto& l : limits) {
      require(l.min < l.max, "chain: joint limit min must be < max");
      require(l.margin > 0.0 && l.margin < 0.5 * (l.max - l.min), "chain: soft margin out of range");
    }
    require(turntable_to_lift.valid(), "chain: turntable_to_lift rotation is not orthonormal");
    require(payload >= 0.0, "chain: payload must be >= 0");
    for (const auto* c : {&lift, &tilt}) {
      require((c->a - c->b).norm() > 0.0, "chain: actuator attachment points coincide");
      require(c->link.m > 0.0 && c->cylinder.m > 0.0 && c->rod.m > 0.0, "chain: body masses must be > 0");
    }
  }
};

/// Body roster in the order used for per-body parameter vectors.
enum BodyId : int {
  kTurntable = 0,
  kLiftLink,
  kLiftCylinder,
  kLiftRod,
  kTiltLink,
  kTiltCylinder,
  kTiltRod,
  kWristA,
  kWristC,
  kWristD,
  kTool,
  kBodyCount
};

inline const char* body_name(int id) {
  static const char* names[] = {"turntable", "lift_link", "lift_cylinder", "lift_rod",
                                "tilt_link", "tilt_cylinder", "tilt_rod", "wrist_a",
                                "wrist_c", "wrist_d", "tool"};
  return names[id];
}

inline BodyParams body_params(const ChainModel& m, int id) {
  switch (id) {
    case kTurntable: return m.turntable;
    case kLiftLink: return m.lift.link;
    case kLiftCylinder: return m.lift.cylinder;
    case kLiftRod: return m.lift.rod;
    case kTiltLink: return m.tilt.link;
    case kTiltCylinder: return m.tilt.cylinder;
    case kTiltRod: return m.tilt.rod;
    case kWristA: return m.wrist_a;
    case kWristC: return m.wrist_c;
    case kWristD: return m.wrist_d;
    default: {
      // Tool with the payload lumped at the TCP origin; inertia about the origin is unchanged.
      Vec10 th = m.tool.theta();
      th[0] += m.payload;
      return BodyParams::from_theta(th);
    }
  }
}

struct Frame {
  FrameTransform local;  // relative to its parent frame
  FrameTransform world;
  TwistPair twist;
};

struct ClosedChainState {
  double q = 0.0, qd = 0.0, qdd = 0.0;
  double L = 0.0, Ld = 0.0, Ldd = 0.0;
  double phi = 0.0, phid = 0.0, phidd = 0.0;
  Frame Bc, A, T, C, D, T2, next;
};

struct ChainKinematics {
  Vec6 zeta = Vec6::Zero();
  Vec6 zeta_dot = Vec6::Zero();
  Frame T1;
  ClosedChainState lift, tilt;
  Frame B4, A4, C4, D4, T4;

  const Frame& body_frame(int id) const {
    switch (id) {
      case kTurntable: return T1;
      case kLiftLink: return lift.A;
      case kLiftCylinder: return lift.C;
      case kLiftRod: return lift.D;
      case kTiltLink: return tilt.A;
      case kTiltCylinder: return tilt.C;
      case kTiltRod: return tilt.D;
      case kWristA: return A4;
      case kWristC: return C4;
      case kWristD: return D4;
      default: return T4;
    }
  }

  /// Actuator linear velocities (lift, tilt).
  Vec2 xdot_L() const { return {lift.Ld, tilt.Ld}; }
  Vec2 length() const { return {lift.L, tilt.L}; }
};

namespace detail {

inline Frame child_frame(const Frame& parent, const FrameTransform& local, const Vec6& s, double qd,
                         double qdd) {
  Frame f;
  f.local = local;
  f.world = compose(parent.world, local);
  f.twist = propagate(parent.twist, local, s, qd, qdd);
  return f;
}

inline Mat3 axis_rotation(Axis a, double angle) {
  switch (a) {
    case Axis::x_tau: return rot_x(angle);
    case Axis::y_tau: return rot_y(angle);
    default: return rot_z(angle);
  }
}

inline Vec3 planar(const Vec2& p) { return {p.x(), p.y(), 0.0}; }

}  // namespace detail

struct ActuatorGeometry {
  double L = 0.0, Ld = 0.0, Ldd = 0.0;
  double phi = 0.0, phid = 0.0, phidd = 0.0;
};

/// Actuator triangle: length and angle of the b -> pin vector and their rates.
inline ActuatorGeometry actuator_geometry(const ClosedChainGeometry& g, double q, double qd, double qdd) {
  const double c = std::cos(q), s = std::sin(q);
  const Vec2 ra(c * g.a.x() - s * g.a.y(), s * g.a.x() + c * g.a.y());
  const Vec2 d = ra - g.b;
  ActuatorGeometry out;
  out.L = d.norm();
  if (!(out.L > 1e-9)) throw NumericalError("closed chain: zero-length actuator triangle");
  const Vec2 u = d / out.L;
  const Vec2 up(-u.y(), u.x());
  const Vec2 zxra(-ra.y(), ra.x());
  const Vec2 dd = qd * zxra;
  const Vec2 ddd = qdd * zxra - qd * qd * ra;
  out.phi = std::atan2(d.y(), d.x());
  out.Ld = u.dot(dd);
  out.phid = up.dot(dd) / out.L;
  out.Ldd = out.phid * out.phid * out.L + u.dot(ddd);
  out.phidd = (up.dot(ddd) - 2.0 * out.Ld * out.phid) / out.L;
  return out;
}

/// Joint angle that realises actuator length L, searched on [q_lo, q_hi] where L(q) is monotone.
inline double joint_from_length(const ClosedChainGeometry& g, double L, double q_lo, double q_hi) {
  auto f = [&](double q) { return actuator_geometry(g, q, 0, 0).L - L; };
  double flo = f(q_lo), fhi = f(q_hi);
  if (flo * fhi > 0.0) throw NumericalError("joint_from_length: length outside the bracket");
  for (int k = 0; k < 200 && q_hi - q_lo > 1e-14; ++k) {
    const double mid = 0.5 * (q_lo + q_hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      q_lo = mid;
      flo = fm;
    } else {
      q_hi = mid;
    }
  }
  return 0.5 * (q_lo + q_hi);
}

namespace detail {

inline ClosedChainState closed_chain(const Frame& Bc, const ClosedChainGeometry& g, const Mat3& next_R,
                                     double q, double qd, double qdd) {
  ClosedChainState st;
  st.q = q;
  st.qd = qd;
  st.qdd = qdd;
  const auto geo = actuator_geometry(g, q, qd, qdd);
  st.L = geo.L;
  st.Ld = geo.Ld;
  st.Ldd = geo.Ldd;
  st.phi = geo.phi;
  st.phid = geo.phid;
  st.phidd = geo.phidd;
  const Vec6 zt = axis_selector(Axis::z_tau);
  const Vec6 xf = axis_selector(Axis::x_f);
  st.Bc = Bc;
  // chain 1: link
  st.A = child_frame(Bc, {rot_z(q), Vec3::Zero()}, zt, qd, qdd);
  st.T = child_frame(st.A, {Mat3::Identity(), planar(g.a)}, Vec6::Zero(), 0, 0);
  // chain 2: cylinder and rod
  st.C = child_frame(Bc, {rot_z(geo.phi), planar(g.b)}, zt, geo.phid, geo.phidd);
  st.D = child_frame(st.C, {Mat3::Identity(), Vec3(geo.L, 0, 0)}, xf, geo.Ld, geo.Ldd);
  st.T2 = child_frame(st.D, {rot_z(q - geo.phi), Vec3::Zero()}, zt, qd - geo.phid, qdd - geo.phidd);
  st.next = child_frame(st.T, {next_R, planar(g.next_pivot - g.a)}, Vec6::Zero(), 0, 0);
  return st;
}

}  // namespace detail

/// Base-to-tip velocity (and acceleration) propagation for joint positions, rates and accelerations.
inline ChainKinematics vdc_kinematics(const ChainModel& m, const Vec6& zeta, const Vec6& zeta_dot,
                                      const Vec6& zeta_ddot = Vec6::Zero()) {
  using detail::child_frame;
  ChainKinematics k;
  k.zeta = zeta;
  k.zeta_dot = zeta_dot;
  Frame B1;  // world-fixed base frame
  k.T1 = child_frame(B1, {detail::axis_rotation(m.base_axis, zeta[0]), m.base_offset},
                     axis_selector(m.base_axis), zeta_dot[0], zeta_ddot[0]);
  const Frame Bc2 = child_frame(k.T1, m.turntable_to_lift, Vec6::Zero(), 0, 0);
  k.lift = detail::closed_chain(Bc2, m.lift, Mat3::Identity(), zeta[1], zeta_dot[1], zeta_ddot[1]);
  k.tilt = detail::closed_chain(k.lift.next, m.tilt, m.wrist_base_R, zeta[2], zeta_dot[2], zeta_ddot[2]);
  k.B4 = k.tilt.next;
  const Vec6 xt = axis_selector(Axis::x_tau), zt = axis_selector(Axis::z_tau);
  k.A4 = child_frame(k.B4, {rot_x(zeta[3]), Vec3::Zero()}, xt, zeta_dot[3], zeta_ddot[3]);
  k.C4 = child_frame(k.A4, {rot_z(zeta[4]), m.wrist_offset_c}, zt, zeta_dot[4], zeta_ddot[4]);
  k.D4 = child_frame(k.C4, {rot_x(zeta[5]), m.wrist_offset_d}, xt, zeta_dot[5], zeta_ddot[5]);
  k.T4 = child_frame(k.D4, {Mat3::Identity(), m.tool_offset}, Vec6::Zero(), 0, 0);
  return k;
}

/// TCP position in the world frame.
inline Vec3 tcp_position(const ChainModel& m, const Vec6& zeta) {
  return vdc_kinematics(m, zeta, Vec6::Zero()).T4.world.r;
}

/// Geometric Jacobian mapping joint rates to the world-frame TCP twist [v; w].
inline Mat6 tcp_jacobian(const ChainModel& m, const Vec6& zeta) {
  Mat6 J;
  for (int i = 0; i < 6; ++i) {
    const auto k = vdc_kinematics(m, zeta, Vec6::Unit(i));
    const Mat3& R = k.T4.world.R;
    J.block<3, 1>(0, i) = R * k.T4.twist.V.head<3>();
    J.block<3, 1>(3, i) = R * k.T4.twist.V.tail<3>();
  }
  return J;
}

/// Gravity vector expressed in a body frame.
inline Vec3 gravity_in(const Frame& f, const Vec3& g_world) { return f.world.R.transpose() * g_world; }

using BodyForces = std::array<SpatialForce, kBodyCount>;
using BodyThetas = std::array<Vec10, kBodyCount>;

inline BodyThetas chain_thetas(const ChainModel& m) {
  BodyThetas th;
  for (int i = 0; i < kBodyCount; ++i) th[static_cast<std::size_t>(i)] = body_params(m, i).theta();
  return th;
}

/// Net wrench of every body from exact inertial parameters.
inline BodyForces body_net_forces(const ChainModel& m, const ChainKinematics& k) {
  BodyForces F;
  for (int i = 0; i < kBodyCount; ++i) {
    const Frame& f = k.body_frame(i);
    F[static_cast<std::size_t>(i)] =
        net_force(body_params(m, i), f.twist.V, f.twist.Vdot, gravity_in(f, m.gravity));
  }
  return F;
}

/// Required net wrenches F*_r = Y(V_r, Vdot_r) theta_hat + K_A (V_r - V) for each body.
inline BodyForces required_net_forces(const ChainModel& m, const ChainKinematics& actual,
                                      const ChainKinematics& required, const BodyThetas& theta_hat,
                                      const Mat6& K_A) {
  BodyForces F;
  for (int i = 0; i < kBodyCount; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Frame& fr = required.body_frame(i);
    const Frame& fa = actual.body_frame(i);
    F[idx] = regressor(fr.twist.V, fr.twist.Vdot, gravity_in(fa, m.gravity)) * theta_hat[idx] +
             K_A * (fr.twist.V - fa.twist.V);
  }
  return F;
}

struct ClosedChainForces {
  SpatialForce Bc = SpatialForce::Zero();  // wrench the chain base must supply, in Bc
  Vec2 pin = Vec2::Zero();                 // in-plane pin force from rod on link, link coordinates
  double F_L = 0.0;                        // actuator axial force, positive pushing
};

struct ChainDynamics {
  SpatialForce T1 = SpatialForce::Zero();
  ClosedChainForces lift, tilt;
  SpatialForce B4 = SpatialForce::Zero(), A4 = SpatialForce::Zero(), C4 = SpatialForce::Zero(),
               D4 = SpatialForce::Zero(), T4 = SpatialForce::Zero();
  Vec2 F_L() const { return {lift.F_L, tilt.F_L}; }
};

/// Generalised joint efforts: base and wrist torques, lift/tilt as actuator forces
/// reflected through dL/dq.
inline Vec6 joint_efforts(const ChainModel& m, const ChainKinematics& k, const ChainDynamics& d) {
  Vec6 t;
  t[0] = d.T1.dot(axis_selector(m.base_axis));
  t[1] = d.lift.F_L * actuator_geometry(m.lift, k.lift.q, 1.0, 0.0).Ld;
  t[2] = d.tilt.F_L * actuator_geometry(m.tilt, k.tilt.q, 1.0, 0.0).Ld;
  t[3] = d.A4[3];
  t[4] = d.C4[5];
  t[5] = d.D4[3];
  return t;
}

namespace detail {

inline ClosedChainForces closed_chain_forces(const ClosedChainState& st, const Vec2& a,
                                             const SpatialForce& Fa, const SpatialForce& Fc,
                                             const SpatialForce& Fd, const SpatialForce& F_next) {
  ClosedChainForces out;
  const Mat6 U_BcA = velocity_transform(st.A.local);
  const Mat6 U_BcC = velocity_transform(st.C.local);
  const Mat6 U_CD = velocity_transform(st.D.local);
  const Mat6 U_A_next = velocity_transform(compose(st.T.local, st.next.local));
  out.Bc = U_BcA * Fa + U_BcC * Fc + U_BcC * U_CD * Fd + U_BcA * U_A_next * F_next;

  // Link moment about its pivot is carried by the pin; cylinder+rod moment about b likewise.
  const SpatialForce link_total = Fa + U_A_next * F_next;
  const SpatialForce cyl_total = Fc + U_CD * Fd;
  const double beta = st.q - st.phi;
  const double cb = std::cos(beta), sb = std::sin(beta);
  Eigen::Matrix2d Mx;
  Mx << -a.y(), a.x(), st.L * sb, st.L * cb;
  const double det = Mx.determinant();
  if (std::abs(det) < 1e-9 * st.L * a.norm())
    throw NumericalError("closed chain: actuator line passes through the joint axis");
  const Vec2 rhs(link_total[5], -cyl_total[5]);
  out.pin = Mx.partialPivLu().solve(rhs);
  out.F_L = Fd[0] + cb * out.pin.x() - sb * out.pin.y();
  return out;
}

}  // namespace detail

/// Tip-to-base force sweep. `tcp_load` is an additional wrench (world axes, TCP origin)
/// that the chain must supply at the tool.
inline ChainDynamics vdc_dynamics(const ChainModel& m, const ChainKinematics& k, const BodyForces& F,
                                  const SpatialForce& tcp_load = SpatialForce::Zero()) {
  ChainDynamics d;
  const Mat3 Rt = k.T4.world.R.transpose();
  SpatialForce load_T4;
  load_T4.head<3>() = Rt * tcp_load.head<3>();
  load_T4.tail<3>() = Rt * tcp_load.tail<3>();
  // j = 4: wrist
  d.T4 = F[kTool] + load_T4;
  d.D4 = F[kWristD] + velocity_transform(k.T4.local) * d.T4;
  d.C4 = F[kWristC] + velocity_transform(k.D4.local) * d.D4;
  d.A4 = F[kWristA] + velocity_transform(k.C4.local) * d.C4;
  d.B4 = velocity_transform(k.A4.local) * d.A4;
  // j = 3, 2: closed chains
  d.tilt = detail::closed_chain_forces(k.tilt, m.tilt.a, F[kTiltLink], F[kTiltCylinder], F[kTiltRod], d.B4);
  d.lift = detail::closed_chain_forces(k.lift, m.lift.a, F[kLiftLink], F[kLiftCylinder], F[kLiftRod],
                                       d.tilt.Bc);
  // j = 1: base
  const FrameTransform T1_to_Bc2 = m.turntable_to_lift;
  d.T1 = F[kTurntable] + velocity_transform(T1_to_Bc2) * d.lift.Bc;
  return d;
}

}  // namespace emla::vdc
