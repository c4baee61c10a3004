#pragma once

// Spatial 6-vectors in [linear; angular] order, as used by virtual decomposition
// control. A twist V = [v; w] is expressed in a body frame; a wrench F = [f; tau]
// is referred to that frame's origin.

#include <cmath>

#include "emla/common.hpp"

namespace emla::vdc {

using SpatialVelocity = Vec6;
using SpatialForce = Vec6;

inline Mat3 skew(const Vec3& r) {
  Mat3 S;
  S << 0.0, -r.z(), r.y(),
       r.z(), 0.0, -r.x(),
       -r.y(), r.x(), 0.0;
  return S;
}

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

/// Pose of frame B relative to frame A: R maps B coordinates to A coordinates,
/// r is the offset from origin A to origin B expressed in A.
struct FrameTransform {
  Mat3 R = Mat3::Identity();
  Vec3 r = Vec3::Zero();

  bool valid(double tol = 1e-10) const {
    return (R.transpose() * R - Mat3::Identity()).norm() < tol && std::abs(R.determinant() - 1.0) < tol;
  }

  Vec3 apply(const Vec3& p_b) const { return R * p_b + r; }
};

inline FrameTransform compose(const FrameTransform& ab, const FrameTransform& bc) {
  return {ab.R * bc.R, ab.r + ab.R * bc.r};
}

inline FrameTransform inverse(const FrameTransform& ab) {
  return {ab.R.transpose(), -ab.R.transpose() * ab.r};
}

/// U = [[R, 0], [skew(r) R, R]]; B-frame twist = U^T * A-frame twist, A-frame wrench = U * B-frame wrench.
inline Mat6 velocity_transform(const FrameTransform& T) {
  Mat6 U = Mat6::Zero();
  U.topLeftCorner<3, 3>() = T.R;
  U.bottomLeftCorner<3, 3>() = skew(T.r) * T.R;
  U.bottomRightCorner<3, 3>() = T.R;
  return U;
}

inline SpatialVelocity transform_velocity(const Mat6& U, const SpatialVelocity& V_A) {
  return U.transpose() * V_A;
}

inline SpatialForce transform_force(const Mat6& U, const SpatialForce& F_B) { return U * F_B; }

/// Motion cross product: crm(V) * m = V x m for twists in [v; w] order.
inline Mat6 crm(const SpatialVelocity& V) {
  const Mat3 wx = skew(V.tail<3>());
  Mat6 X = Mat6::Zero();
  X.topLeftCorner<3, 3>() = wx;
  X.topRightCorner<3, 3>() = skew(V.head<3>());
  X.bottomRightCorner<3, 3>() = wx;
  return X;
}

/// Axis selectors: unit twists of a joint moving its child frame relative to its parent.
enum class Axis { x_f, y_f, z_f, x_tau, y_tau, z_tau };

inline Vec6 axis_selector(Axis a) {
  Vec6 s = Vec6::Zero();
  switch (a) {
    case Axis::x_f: s[0] = 1.0; break;
    case Axis::y_f: s[1] = 1.0; break;
    case Axis::z_f: s[2] = 1.0; break;
    case Axis::x_tau: s[3] = 1.0; break;
    case Axis::y_tau: s[4] = 1.0; break;
    case Axis::z_tau: s[5] = 1.0; break;
  }
  return s;
}

/// Rigid body with inertial parameters referred to its frame origin.
struct BodyParams {
  double m = 0.0;
  Vec3 com = Vec3::Zero();        // centre of mass in the body frame
  Mat3 I = Mat3::Zero();          // inertia about the frame origin

  /// Build from the inertia about the centre of mass (parallel-axis shift to the origin).
  static BodyParams from_com_inertia(double m, const Vec3& com, const Mat3& I_c) {
    BodyParams b;
    b.m = m;
    b.com = com;
    b.I = I_c + m * (com.squaredNorm() * Mat3::Identity() - com * com.transpose());
    return b;
  }

  /// Inertial parameter vector (m, m*c, Ixx, Ixy, Ixz, Iyy, Iyz, Izz).
  Vec10 theta() const {
    Vec10 t;
    t << m, m * com.x(), m * com.y(), m * com.z(), I(0, 0), I(0, 1), I(0, 2), I(1, 1), I(1, 2), I(2, 2);
    return t;
  }

  static BodyParams from_theta(const Vec10& t) {
    BodyParams b;
    b.m = t[0];
    b.com = t[0] != 0.0 ? Vec3(t.segment<3>(1) / t[0]) : Vec3::Zero();
    b.I << t[4], t[5], t[6], t[5], t[7], t[8], t[6], t[8], t[9];
    return b;
  }

  bool valid() const {
    if (!(m > 0.0)) return false;
    if ((I - I.transpose()).norm() > 1e-9 * (1.0 + I.norm())) return false;
    Eigen::SelfAdjointEigenSolver<Mat3> es(I);
    return es.eigenvalues().minCoeff() >= -1e-9 * (1.0 + I.norm());
  }
};

inline Mat6 spatial_inertia(const BodyParams& b) {
  Mat6 M = Mat6::Zero();
  const Mat3 cx = skew(b.com);
  M.topLeftCorner<3, 3>() = b.m * Mat3::Identity();
  M.topRightCorner<3, 3>() = -b.m * cx;
  M.bottomLeftCorner<3, 3>() = b.m * cx;
  M.bottomRightCorner<3, 3>() = b.I;
  return M;
}

inline Mat6 coriolis_matrix(const BodyParams& b, const SpatialVelocity& V) {
  const Mat3 wx = skew(V.tail<3>());
  const Mat3 cx = skew(b.com);
  Mat6 C = Mat6::Zero();
  C.topLeftCorner<3, 3>() = b.m * wx;
  C.topRightCorner<3, 3>() = -b.m * wx * cx;
  C.bottomLeftCorner<3, 3>() = b.m * cx * wx;
  C.bottomRightCorner<3, 3>() = wx * b.I;
  return C;
}

/// Gravity term; g is the gravity vector expressed in the body frame.
inline Vec6 gravity_term(const BodyParams& b, const Vec3& g) {
  Vec6 G;
  G.head<3>() = -b.m * g;
  G.tail<3>() = -b.m * skew(b.com) * g;
  return G;
}

/// Net wrench F* = M Vdot + C V + G that the rest of the system must apply to the body.
inline SpatialForce net_force(const BodyParams& b, const SpatialVelocity& V, const Vec6& Vdot,
                              const Vec3& g) {
  return spatial_inertia(b) * Vdot + coriolis_matrix(b, V) * V + gravity_term(b, g);
}

namespace detail {
inline Eigen::Matrix<double, 3, 6> inertia_operator(const Vec3& w) {
  Eigen::Matrix<double, 3, 6> L;
  L << w.x(), w.y(), w.z(), 0.0, 0.0, 0.0,
       0.0, w.x(), 0.0, w.y(), w.z(), 0.0,
       0.0, 0.0, w.x(), 0.0, w.y(), w.z();
  return L;
}
}  // namespace detail

/// Regressor Y with Y * theta == net_force(body, V, Vdot, g) for every body.
inline Mat6x10 regressor(const SpatialVelocity& V, const Vec6& Vdot, const Vec3& g) {
  const Vec3 v = V.head<3>(), w = V.tail<3>();
  const Vec3 vd = Vdot.head<3>(), wd = Vdot.tail<3>();
  const Vec3 a = vd + w.cross(v) - g;
  const Mat3 wx = skew(w);
  Mat6x10 Y = Mat6x10::Zero();
  Y.block<3, 1>(0, 0) = a;
  Y.block<3, 3>(0, 1) = skew(wd) + wx * wx;
  Y.block<3, 3>(3, 1) = -skew(a);
  Y.block<3, 6>(3, 4) = detail::inertia_operator(wd) + wx * detail::inertia_operator(w);
  return Y;
}

/// Child-frame twist and its time derivative across a joint with selector s.
struct TwistPair {
  SpatialVelocity V = SpatialVelocity::Zero();
  Vec6 Vdot = Vec6::Zero();
};

inline TwistPair propagate(const TwistPair& parent, const FrameTransform& T, const Vec6& s,
                           double qd, double qdd) {
  const Mat6 U = velocity_transform(T);
  TwistPair c;
  const Vec6 Vp = U.transpose() * parent.V;
  c.V = Vp + s * qd;
  c.Vdot = U.transpose() * parent.Vdot + s * qdd + crm(c.V) * (s * qd);
  return c;
}

}  // namespace emla::vdc
