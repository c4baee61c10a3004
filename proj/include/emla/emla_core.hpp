#pragma once

// Electromechanical linear actuator (EMLA) physics: PMSM dq-frame electrical
// dynamics, direction-dependent screw/gear transmission and load-side motion.
//
// Mechanical convention (unit-consistent reflected-inertia form):
//   M_eff * xddot = F_drive - F_L,   M_eff = M_t + (n * N_g)^2 * J_m,   n = 2*pi/rho
//   forward  (xdot >= 0):  F_drive = eta_t+ * n * N_g * (tau_e - tau_c) - f_v * xdot
//   backdrive (xdot < 0):  F_drive = kappa_b * (tau_e - tau_c) - f_v * xdot,
//                          kappa_b = n * N_g * eta_g / eta_b
// The branch switches on the sign of xdot with a +-1e-4 m/s deadband that
// holds the previous branch.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "emla/common.hpp"

namespace emla {

struct MotorCatalogEntry {
  std::string id;
  double r_s = 0.0;    // ohm
  double L_d = 0.0;    // H
  double L_q = 0.0;    // H
  int P = 1;           // pole pairs
  double psi_f = 0.0;  // Wb
  double J_m = 0.0;    // kg m^2
  double P_N = 0.0;    // W
  double eta_N = 0.0;  // fraction
  double tau_n = 0.0;  // N m
  double n_n = 0.0;    // rpm
  double tau_c = 0.0;  // N m
  double f_v = 0.0;    // N s / m, load side

  void validate() const {
    require(r_s > 0.0, "motor " + id + ": r_s must be > 0");
    require(L_d > 0.0 && L_q > 0.0, "motor " + id + ": L_d, L_q must be > 0");
    require(P >= 1, "motor " + id + ": P must be >= 1");
    require(psi_f > 0.0, "motor " + id + ": psi_f must be > 0");
    require(J_m >= 0.0, "motor " + id + ": J_m must be >= 0");
    require(eta_N > 0.0 && eta_N <= 1.0, "motor " + id + ": eta_N must be in (0, 1]");
    require(P_N > 0.0 && tau_n > 0.0 && n_n > 0.0,
            "motor " + id + ": P_N, tau_n, n_n must be > 0");
    require(tau_c >= 0.0 && f_v >= 0.0, "motor " + id + ": tau_c, f_v must be >= 0");
  }

  /// Torque constant for i_d = 0 operation, N m / A.
  double torque_constant() const { return 1.5 * P * psi_f; }
};

struct TransmissionParams {
  double N_g = 1.0;             // gear ratio
  double rho = 0.01;            // screw lead, m/rev
  double mu = 0.0;              // thread friction coefficient
  double r_m = 0.01;            // mean thread radius, m
  double eta_stage = 0.97;      // efficiency of one gear stage
  double stage_ratio_cap = 5.0; // largest ratio a single stage provides

  void validate() const {
    require(N_g > 0.0, "transmission: N_g must be > 0");
    require(rho > 0.0, "transmission: rho must be > 0");
    require(mu >= 0.0, "transmission: mu must be >= 0");
    require(r_m > 0.0, "transmission: r_m must be > 0");
    require(eta_stage > 0.0 && eta_stage <= 1.0, "transmission: eta_stage must be in (0, 1]");
    require(stage_ratio_cap > 1.0, "transmission: stage_ratio_cap must be > 1");
  }

  double lead_angle() const { return std::atan(rho / (kTwoPi * r_m)); }
  double friction_angle() const { return std::atan(mu); }
  /// Rotation-to-translation ratio n = 2*pi/rho (rad/m).
  double screw_ratio() const { return kTwoPi / rho; }
  /// Motor angle per unit load travel, n * N_g (rad/m).
  double kinematic_gain() const { return screw_ratio() * N_g; }
  /// A screw is backdrivable when its lead angle exceeds the friction angle.
  bool backdrivable() const { return lead_angle() > friction_angle(); }
};

struct EmlaConfig {
  MotorCatalogEntry motor;
  TransmissionParams trans;
  double M_t = 1.0;  // total moving mass, kg

  void validate() const {
    motor.validate();
    trans.validate();
    require(M_t > 0.0, "emla: M_t must be > 0");
  }

  double reflected_mass() const {
    const double g = trans.kinematic_gain();
    return M_t + g * g * motor.J_m;
  }
};

struct EmlaState {
  double i_d = 0.0;
  double i_q = 0.0;
  double x_L = 0.0;
  double xdot_L = 0.0;
  double omega_m = 0.0;
  double t = 0.0;
  bool forward = true;  // active transmission branch
};

inline constexpr double kDirectionDeadband = 1e-4;  // m/s

/// Branch selection with hysteresis: inside the deadband the previous branch holds.
inline bool select_branch(bool previous_forward, double xdot_L) {
  if (xdot_L > kDirectionDeadband) return true;
  if (xdot_L < -kDirectionDeadband) return false;
  return previous_forward;
}

// ---------------------------------------------------------------------------
// PMSM

/// Amplitude-invariant Park transform abc -> dq0.
inline Vec3 park_transform(const Vec3& s_abc, double theta_e) {
  constexpr double k120 = 2.0 * kPi / 3.0;
  const double ca = std::cos(theta_e), cb = std::cos(theta_e - k120), cc = std::cos(theta_e + k120);
  const double sa = std::sin(theta_e), sb = std::sin(theta_e - k120), sc = std::sin(theta_e + k120);
  const double d = (2.0 / 3.0) * (ca * s_abc[0] + cb * s_abc[1] + cc * s_abc[2]);
  const double q = -(2.0 / 3.0) * (sa * s_abc[0] + sb * s_abc[1] + sc * s_abc[2]);
  const double z = (s_abc[0] + s_abc[1] + s_abc[2]) / 3.0;
  return {d, q, z};
}

inline Vec3 inverse_park_transform(const Vec3& s_dq0, double theta_e) {
  constexpr double k120 = 2.0 * kPi / 3.0;
  Vec3 out;
  const std::array<double, 3> shifts{0.0, -k120, k120};
  for (int k = 0; k < 3; ++k) {
    const double th = theta_e + shifts[static_cast<std::size_t>(k)];
    out[k] = std::cos(th) * s_dq0[0] - std::sin(th) * s_dq0[1] + s_dq0[2];
  }
  return out;
}

struct CurrentDerivatives {
  double di_d = 0.0;
  double di_q = 0.0;
};

inline CurrentDerivatives pmsm_current_derivs(const EmlaState& s, double v_d, double v_q,
                                              const MotorCatalogEntry& m) {
  const double pw = m.P * s.omega_m;
  CurrentDerivatives out;
  out.di_d = v_d / m.L_d - (m.r_s / m.L_d) * s.i_d + (m.L_q / m.L_d) * pw * s.i_q;
  out.di_q = v_q / m.L_q - (m.r_s / m.L_q) * s.i_q - (m.L_d / m.L_q) * pw * s.i_d -
             m.P * m.psi_f * s.omega_m / m.L_q;
  return out;
}

inline double electromagnetic_torque(double i_d, double i_q, const MotorCatalogEntry& m) {
  return 1.5 * m.P * (m.psi_f * i_q + (m.L_d - m.L_q) * i_d * i_q);
}

// ---------------------------------------------------------------------------
// Transmission

/// Screw efficiency: forward tan(phi)/tan(phi+lambda), backdrive tan(phi-lambda)/tan(phi).
/// A self-locking screw (phi <= lambda) reports zero backdrive efficiency.
inline double screw_efficiency(const TransmissionParams& tp, double direction) {
  if (!(tp.r_m > 0.0) || !(tp.rho > 0.0))
    throw ConfigError("screw_efficiency: r_m and rho must be > 0");
  const double phi = tp.lead_angle();
  const double lam = tp.friction_angle();
  if (phi + lam >= 0.5 * kPi)
    throw NumericalError("screw_efficiency: degenerate geometry, phi + lambda >= pi/2");
  if (direction >= 0.0) return std::tan(phi) / std::tan(phi + lam);
  return std::max(0.0, std::tan(phi - lam) / std::tan(phi));
}

/// Number of gear stages needed for N_g when one stage is capped at stage_ratio_cap.
inline int gear_stages(const TransmissionParams& tp) {
  if (tp.N_g <= 1.0) return 0;
  const double raw = std::log(tp.N_g) / std::log(tp.stage_ratio_cap);
  return static_cast<int>(std::ceil(raw - 1e-12));
}

inline double gearbox_efficiency(const TransmissionParams& tp) {
  return std::pow(tp.eta_stage, gear_stages(tp));
}

inline double transmission_efficiency(const TransmissionParams& tp, double direction) {
  return gearbox_efficiency(tp) * screw_efficiency(tp, direction);
}

/// Load-side force delivered by the drive for a given motor torque and load velocity.
inline double drive_force(const EmlaConfig& cfg, double tau_e, double xdot_L, bool forward) {
  const double gain = cfg.trans.kinematic_gain();
  const double net_torque = tau_e - cfg.motor.tau_c;
  if (forward) {
    const double eta_t = transmission_efficiency(cfg.trans, +1.0);
    return eta_t * gain * net_torque - cfg.motor.f_v * xdot_L;
  }
  const double eta_b = screw_efficiency(cfg.trans, -1.0);
  if (!(eta_b > 0.0))
    throw NumericalError("drive_force: self-locking screw cannot be backdriven");
  const double kappa_b = gain * gearbox_efficiency(cfg.trans) / eta_b;
  return kappa_b * net_torque - cfg.motor.f_v * xdot_L;
}

/// Motor torque that produces load force F_L at load velocity xdot_L in steady state.
inline double required_motor_torque(const EmlaConfig& cfg, double F_L, double xdot_L, bool forward) {
  const double gain = cfg.trans.kinematic_gain();
  const double f = F_L + cfg.motor.f_v * xdot_L;
  if (forward) return f / (transmission_efficiency(cfg.trans, +1.0) * gain) + cfg.motor.tau_c;
  const double eta_b = screw_efficiency(cfg.trans, -1.0);
  const double kappa_b = gain * gearbox_efficiency(cfg.trans) / eta_b;
  return f / kappa_b + cfg.motor.tau_c;
}

inline double emla_acceleration(const EmlaState& s, double tau_e, double F_L, const EmlaConfig& cfg) {
  const double m_eff = cfg.reflected_mass();
  if (!(m_eff > 0.0)) throw NumericalError("emla_acceleration: non-positive effective mass");
  const bool fwd = select_branch(s.forward, s.xdot_L);
  return (drive_force(cfg, tau_e, s.xdot_L, fwd) - F_L) / m_eff;
}

// ---------------------------------------------------------------------------
// Time integration

namespace detail {
struct EmlaDeriv {
  double di_d, di_q, dx, dv;
};

inline EmlaDeriv emla_rhs(double i_d, double i_q, double v, bool fwd, double v_d, double v_q,
                          double F_L, const EmlaConfig& cfg) {
  EmlaState s;
  s.i_d = i_d;
  s.i_q = i_q;
  s.xdot_L = v;
  s.omega_m = v * cfg.trans.kinematic_gain();
  const auto di = pmsm_current_derivs(s, v_d, v_q, cfg.motor);
  const double tau = electromagnetic_torque(i_d, i_q, cfg.motor);
  const double a = (drive_force(cfg, tau, v, fwd) - F_L) / cfg.reflected_mass();
  return {di.di_d, di.di_q, v, a};
}
}  // namespace detail

/// One fixed-step RK4 step of the coupled current/motion ODEs. The transmission
/// branch is frozen over the step and re-selected from the new velocity.
inline EmlaState step_emla(const EmlaState& s, double v_d, double v_q, double F_L,
                           const EmlaConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step_emla: dt must be > 0");
  const bool fwd = select_branch(s.forward, s.xdot_L);
  using detail::emla_rhs;
  const auto k1 = emla_rhs(s.i_d, s.i_q, s.xdot_L, fwd, v_d, v_q, F_L, cfg);
  const auto k2 = emla_rhs(s.i_d + 0.5 * dt * k1.di_d, s.i_q + 0.5 * dt * k1.di_q,
                           s.xdot_L + 0.5 * dt * k1.dv, fwd, v_d, v_q, F_L, cfg);
  const auto k3 = emla_rhs(s.i_d + 0.5 * dt * k2.di_d, s.i_q + 0.5 * dt * k2.di_q,
                           s.xdot_L + 0.5 * dt * k2.dv, fwd, v_d, v_q, F_L, cfg);
  const auto k4 = emla_rhs(s.i_d + dt * k3.di_d, s.i_q + dt * k3.di_q, s.xdot_L + dt * k3.dv, fwd,
                           v_d, v_q, F_L, cfg);
  EmlaState n = s;
  n.i_d += dt / 6.0 * (k1.di_d + 2.0 * k2.di_d + 2.0 * k3.di_d + k4.di_d);
  n.i_q += dt / 6.0 * (k1.di_q + 2.0 * k2.di_q + 2.0 * k3.di_q + k4.di_q);
  n.x_L += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  n.xdot_L += dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  n.omega_m = n.xdot_L * cfg.trans.kinematic_gain();
  n.t = s.t + dt;
  n.forward = select_branch(fwd, n.xdot_L);
  if (!std::isfinite(n.i_d) || !std::isfinite(n.i_q) || !std::isfinite(n.x_L) ||
      !std::isfinite(n.xdot_L))
    throw NumericalError("step_emla: non-finite state at t=" + std::to_string(n.t));
  return n;
}

// ---------------------------------------------------------------------------
// Steady-state motor-to-load map (M2L)

struct M2LOutput {
  double F_L = 0.0;
  double xdot_L = 0.0;
  double eta = 0.0;
  double i_abc = 0.0;        // phase-current amplitude with i_d = 0
  bool eta_defined = false;  // false when tau_e * omega_m <= 0
};

inline M2LOutput m2l_steady_state(double tau_e, double omega_m, const EmlaConfig& cfg) {
  M2LOutput out;
  out.xdot_L = omega_m / cfg.trans.kinematic_gain();
  const bool fwd = out.xdot_L >= 0.0;
  out.F_L = drive_force(cfg, tau_e, out.xdot_L, fwd);
  const double p_mech_in = tau_e * omega_m;
  if (p_mech_in > 0.0) {
    out.eta = std::clamp(out.F_L * out.xdot_L / p_mech_in, 0.0, 1.0);
    out.eta_defined = true;
  }
  out.i_abc = std::abs(tau_e) / cfg.motor.torque_constant();
  return out;
}

/// Electrical operating point that holds load force F_L at constant velocity xdot_L
/// with field-oriented currents (i_d = 0).
struct SteadyOperatingPoint {
  double tau_e = 0.0;
  double omega_m = 0.0;
  double i_d = 0.0;
  double i_q = 0.0;
  double v_d = 0.0;
  double v_q = 0.0;
  double p_elec = 0.0;  // 1.5 (v_d i_d + v_q i_q)
  double eta = 0.0;     // F_L xdot_L / p_elec
};

inline SteadyOperatingPoint steady_operating_point(const EmlaConfig& cfg, double F_L, double xdot_L) {
  SteadyOperatingPoint op;
  const auto& m = cfg.motor;
  op.omega_m = xdot_L * cfg.trans.kinematic_gain();
  op.tau_e = required_motor_torque(cfg, F_L, xdot_L, xdot_L >= 0.0);
  op.i_q = op.tau_e / m.torque_constant();
  op.v_d = -m.L_q * m.P * op.omega_m * op.i_q;
  op.v_q = m.r_s * op.i_q + m.P * m.psi_f * op.omega_m;
  op.p_elec = 1.5 * (op.v_d * op.i_d + op.v_q * op.i_q);
  op.eta = op.p_elec > 0.0 ? F_L * xdot_L / op.p_elec : 0.0;
  return op;
}

/// Electrical input power 1.5 (v_d i_d + v_q i_q) for the amplitude-invariant dq frame.
inline double electrical_power(double v_d, double v_q, double i_d, double i_q) {
  return 1.5 * (v_d * i_d + v_q * i_q);
}

struct TraceRow {
  double t, i_d, i_q, omega_m, x_L, xdot_L, tau_e, F_L, v_d, v_q;
};

inline TraceRow make_trace_row(const EmlaState& s, double F_L, double v_d, double v_q,
                               const MotorCatalogEntry& m) {
  return {s.t, s.i_d, s.i_q, s.omega_m, s.x_L, s.xdot_L, electromagnetic_torque(s.i_d, s.i_q, m),
          F_L, v_d, v_q};
}

}  // namespace emla
