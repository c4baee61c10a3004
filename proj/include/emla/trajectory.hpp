#pragma once

// Quintic point-to-point trajectories, velocity correction, damped inverse
// Jacobian mapping and soft joint-limit scaling.

#include <algorithm>
#include <array>

#include "emla/common.hpp"

namespace emla::traj {

/// Rest-to-rest quintic polynomial in N dimensions.
template <int N>
struct Quintic {
  using Vec = Eigen::Matrix<double, N, 1>;
  Vec P_start = Vec::Zero();
  Vec P_final = Vec::Zero();
  double t_end = 1.0;
  std::array<Vec, 6> a{};

  struct Sample {
    Vec P;
    Vec Pdot;
    Vec Pddot;
  };

  /// Position, velocity and acceleration; held at P_final with zero rates after t_end.
  Sample eval(double t) const {
    if (t >= t_end) return {P_final, Vec::Zero(), Vec::Zero()};
    t = std::max(t, 0.0);
    std::array<double, 6> tp{1.0, t, t * t, t * t * t, t * t * t * t, t * t * t * t * t};
    Sample s{Vec::Zero(), Vec::Zero(), Vec::Zero()};
    for (std::size_t i = 0; i <= 5; ++i) {
      const double di = static_cast<double>(i);
      s.P += a[i] * tp[i];
      if (i >= 1) s.Pdot += di * a[i] * tp[i - 1];
      if (i >= 2) s.Pddot += di * (di - 1.0) * a[i] * tp[i - 2];
    }
    return s;
  }
};

template <int N>
Quintic<N> quintic_coeffs(const typename Quintic<N>::Vec& P_start, const typename Quintic<N>::Vec& P_final,
                          double t_end) {
  if (!(t_end > 0.0)) throw ConfigError("quintic_coeffs: t_end must be > 0");
  Quintic<N> q;
  q.P_start = P_start;
  q.P_final = P_final;
  q.t_end = t_end;
  const auto delta = P_final - P_start;
  const double t3 = t_end * t_end * t_end;
  q.a[0] = P_start;
  q.a[1].setZero();
  q.a[2].setZero();
  q.a[3] = 10.0 * delta / t3;
  q.a[4] = -15.0 * delta / (t3 * t_end);
  q.a[5] = 6.0 * delta / (t3 * t_end * t_end);
  return q;
}

using Quintic3 = Quintic<3>;

/// Required velocity with position correction: Pdot_d + lambda (P_d - P).
template <class V>
V required_velocity(const V& P_d, const V& Pdot_d, const V& P_meas, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("required_velocity: lambda must be > 0");
  return Pdot_d + lambda * (P_d - P_meas);
}

struct JointVelocityResult {
  Vec6 zeta_dot = Vec6::Zero();
  double sigma_min = 0.0;
  bool damped = false;  // true when the damped branch was used (near-singular J)
};

/// J^{-1} Pi_dot via SVD; damped least squares when sigma_min < threshold.
inline JointVelocityResult joint_velocities(const Mat6& J, const Vec6& Pidot, double lambda_dls = 1e-3,
                                            double sigma_threshold = 1e-2) {
  Eigen::JacobiSVD<Mat6> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec6 s = svd.singularValues();
  JointVelocityResult out;
  out.sigma_min = s.minCoeff();
  out.damped = out.sigma_min < sigma_threshold;
  const double l2 = out.damped ? lambda_dls * lambda_dls : 0.0;
  Vec6 inv;
  for (int i = 0; i < 6; ++i) inv[i] = s[i] / (s[i] * s[i] + l2);
  out.zeta_dot = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * Pidot;
  return out;
}

struct JointLimits {
  double zeta_min = -1.0;
  double zeta_max = 1.0;
  double margin = 0.1;

  void validate() const {
    require(zeta_min < zeta_max, "joint limits: min must be < max");
    require(margin > 0.0 && margin < 0.5 * (zeta_max - zeta_min), "joint limits: margin out of range");
  }
};

/// Linear slow-down inside the soft margin when moving toward the nearer hard limit.
inline double soft_limit_scale(double zeta, double zeta_dot_r, const JointLimits& lim) {
  double s = 1.0;
  if (zeta <= lim.zeta_min + lim.margin && zeta_dot_r < 0.0) {
    s = (zeta - lim.zeta_min) / lim.margin;
  } else if (zeta >= lim.zeta_max - lim.margin && zeta_dot_r > 0.0) {
    s = (lim.zeta_max - zeta) / lim.margin;
  }
  return std::clamp(s, 0.0, 1.0) * zeta_dot_r;
}

}  // namespace emla::traj
