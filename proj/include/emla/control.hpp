#pragma once

// Hierarchical actuator control: VDC high level (required net wrenches with
// projected parameter adaptation, required actuator forces and velocities) and
// the low-level dq voltage law, closed around a one-DOF lift testbed driven
// against a load emulator in measured-feedback or sensorless mode.

#include <algorithm>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emla/chain.hpp"
#include "emla/emla_core.hpp"
#include "emla/gp.hpp"
#include "emla/io.hpp"
#include "emla/pik.hpp"
#include "emla/trajectory.hpp"

namespace emla::ctrl {

/// Phase-voltage bound per dq axis for a 480 V line supply.
inline const double kVoltageLimit = 480.0 * std::sqrt(2.0 / 3.0);

struct ControllerGains {
  Mat6 K_A = Mat6::Identity() * 2e4;  // per body, N per m/s and N m per rad/s
  double K_i = 5.0;                   // V/A
  double K_f = 1e-4;                  // V/N
  double K_v = 500.0;                 // V per m/s
  double lambda = 10.0;               // position correction, 1/s
  double gamma = 10.0;                // adaptation gain, 0 disables
  double deriv_cutoff_hz = 100.0;     // reference differentiation filter
  bool saturate = true;

  void validate() const {
    require(K_i > 0.0 && K_f > 0.0 && K_v > 0.0, "gains: K_i, K_f, K_v must be > 0");
    require(lambda > 0.0 && gamma >= 0.0 && deriv_cutoff_hz > 0.0, "gains: lambda, cutoff must be > 0, gamma >= 0");
    const Mat6 S = 0.5 * (K_A + K_A.transpose());
    Eigen::SelfAdjointEigenSolver<Mat6> es(S);
    require((K_A - K_A.transpose()).norm() <= 1e-12 * K_A.norm() && es.eigenvalues().minCoeff() > 0.0,
            "gains: K_A must be symmetric positive definite");
  }
};

// ---------------------------------------------------------------------------
// High level

struct ThetaBounds {
  vdc::BodyThetas lo, hi;

  void project(vdc::BodyThetas& th) const {
    for (std::size_t i = 0; i < th.size(); ++i) th[i] = th[i].cwiseMax(lo[i]).cwiseMin(hi[i]);
  }

  bool contains(const vdc::BodyThetas& th) const {
    for (std::size_t i = 0; i < th.size(); ++i)
      if ((th[i].array() < lo[i].array()).any() || (th[i].array() > hi[i].array()).any()) return false;
    return true;
  }
};

/// Box of +-rel |theta| + pad around the nominal parameters; the tool mass may
/// additionally grow by up to payload_max.
inline ThetaBounds theta_bounds(const vdc::BodyThetas& nominal, double rel, double pad, double payload_max) {
  require(rel >= 0.0 && pad >= 0.0 && payload_max >= 0.0, "theta bounds: widths must be >= 0");
  ThetaBounds b;
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    const Vec10 w = (rel * nominal[i].cwiseAbs()).array() + pad;
    b.lo[i] = nominal[i] - w;
    b.hi[i] = nominal[i] + w;
  }
  b.hi[vdc::kTool][0] += payload_max;
  return b;
}

struct AdaptationState {
  vdc::BodyThetas theta_hat{};
  ThetaBounds bounds;
};

struct HighLevelOutput {
  Vec2 xdot_Lr = Vec2::Zero();  // lift, tilt
  Vec2 F_Lr = Vec2::Zero();
};

/// Required net wrenches F*_r = Y theta_hat + K_A (V_r - V), propagated to the
/// actuators; theta_hat <- Proj(theta_hat + gamma Y^T (V_r - V) dt).
inline HighLevelOutput high_level_step(const vdc::ChainModel& chain, const Vec6& zeta, const Vec6& zeta_dot,
                                       const Vec6& zeta_dot_r, const Vec6& zeta_ddot_r, AdaptationState& ad,
                                       const ControllerGains& g, double dt) {
  const auto actual = vdc::vdc_kinematics(chain, zeta, zeta_dot);
  const auto required = vdc::vdc_kinematics(chain, zeta, zeta_dot_r, zeta_ddot_r);
  const auto F = vdc::required_net_forces(chain, actual, required, ad.theta_hat, g.K_A);
  const auto dyn = vdc::vdc_dynamics(chain, required, F);
  HighLevelOutput out;
  out.xdot_Lr = required.xdot_L();
  out.F_Lr = dyn.F_L();
  if (g.gamma > 0.0) {
    for (int i = 0; i < vdc::kBodyCount; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const auto& fr = required.body_frame(i);
      const auto& fa = actual.body_frame(i);
      const Mat6x10 Y = vdc::regressor(fr.twist.V, fr.twist.Vdot, vdc::gravity_in(fa, chain.gravity));
      ad.theta_hat[idx] += g.gamma * dt * Y.transpose() * (fr.twist.V - fa.twist.V);
    }
    ad.bounds.project(ad.theta_hat);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Low level

/// Derivative of a first-order low-pass of the input (cutoff_hz); exact slope on ramps.
struct FilteredDerivative {
  double cutoff_hz = 100.0;
  double state = 0.0;
  bool primed = false;

  double step(double x, double dt) {
    if (!primed) {
      state = x;
      primed = true;
      return 0.0;
    }
    const double a = std::exp(-kTwoPi * cutoff_hz * dt);
    const double next = a * state + (1.0 - a) * x;
    const double d = (next - state) / dt;
    state = next;
    return d;
  }
};

struct LowLevelInput {
  double i_d = 0.0, i_q = 0.0, omega_m = 0.0;
  double i_dr = 0.0, di_dr = 0.0;
  double di_qr = 0.0;
  double F_Lr = 0.0, xdot_Lr = 0.0;
  double F_pred = 0.0, xdot_pred = 0.0;
};

struct VoltageCommand {
  double v_d = 0.0, v_q = 0.0;
  bool saturated = false;
};

/// dq voltage law with resistive, inductive, cross-coupling and back-EMF
/// feedforward plus current, force and velocity feedback.
inline VoltageCommand low_level_step(const LowLevelInput& in, const ControllerGains& g, const MotorCatalogEntry& m) {
  VoltageCommand c;
  const double w_e = m.P * in.omega_m;
  c.v_d = m.r_s * in.i_d + m.L_d * in.di_dr - m.L_q * w_e * in.i_q + g.K_i * (in.i_dr - in.i_d);
  c.v_q = m.r_s * in.i_q + m.L_q * in.di_qr + m.L_d * w_e * in.i_d + m.psi_f * w_e + g.K_f * (in.F_Lr - in.F_pred) +
          g.K_v * (in.xdot_Lr - in.xdot_pred);
  if (g.saturate) {
    const double vd = std::clamp(c.v_d, -kVoltageLimit, kVoltageLimit);
    const double vq = std::clamp(c.v_q, -kVoltageLimit, kVoltageLimit);
    c.saturated = vd != c.v_d || vq != c.v_q;
    c.v_d = vd;
    c.v_q = vq;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Metrics

struct ErrorStats {
  double rms = 0.0, max = 0.0;
};

inline ErrorStats error_stats(const std::vector<double>& ref, const std::vector<double>& act, double scale = 1.0) {
  if (ref.empty() || ref.size() != act.size()) throw ConfigError("tracking_metrics: series empty or of unequal length");
  ErrorStats s;
  double ss = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const double e = scale * (ref[k] - act[k]);
    ss += e * e;
    s.max = std::max(s.max, std::abs(e));
  }
  s.rms = std::sqrt(ss / static_cast<double>(ref.size()));
  return s;
}

struct TrackingReport {
  std::string mode;
  double payload = 0.0;
  ErrorStats position_mm, velocity_mms;
  bool diverged = false;
  double t_end = 0.0;
  int saturation_steps = 0;

  nlohmann::json to_json() const {
    return {{"payload_kg", payload},
            {"mode", mode},
            {"position_rms_mm", position_mm.rms},
            {"position_max_mm", position_mm.max},
            {"velocity_rms_mm_s", velocity_mms.rms},
            {"velocity_max_mm_s", velocity_mms.max},
            {"diverged", diverged},
            {"t_end_s", t_end},
            {"saturation_steps", saturation_steps}};
  }
};

/// RMS and max of position (m -> mm) and velocity (m/s -> mm/s) errors.
inline TrackingReport tracking_metrics(const std::vector<double>& x_ref, const std::vector<double>& x,
                                       const std::vector<double>& v_ref, const std::vector<double>& v) {
  TrackingReport r;
  r.position_mm = error_stats(x_ref, x, 1e3);
  r.velocity_mms = error_stats(v_ref, v, 1e3);
  return r;
}

// ---------------------------------------------------------------------------
// One-DOF lift testbed

/// Piecewise rest-to-rest quintic through joint waypoints, held at the last one.
struct JointTrajectory {
  std::vector<double> waypoints;  // rad
  std::vector<double> durations;  // s per segment

  void validate() const {
    require(waypoints.size() >= 2 && durations.size() + 1 == waypoints.size(),
            "trajectory: need n >= 2 waypoints and n - 1 segment durations");
    for (double d : durations) require(d > 0.0, "trajectory: segment durations must be > 0");
  }

  double total() const {
    double t = 0.0;
    for (double d : durations) t += d;
    return t;
  }

  traj::Quintic<1>::Sample eval(double t) const {
    double t0 = 0.0;
    for (std::size_t s = 0; s < durations.size(); ++s) {
      if (t < t0 + durations[s] || s + 1 == durations.size()) {
        const auto q = traj::quintic_coeffs<1>(traj::Quintic<1>::Vec(waypoints[s]),
                                               traj::Quintic<1>::Vec(waypoints[s + 1]), durations[s]);
        return q.eval(t - t0);
      }
      t0 += durations[s];
    }
    return {};
  }
};

/// Static lift-actuator force for the chain carrying `payload` at joint angles
/// zeta, clamped to the emulator range [0, 70] kN.
inline double emulator_force(const vdc::ChainModel& chain, const Vec6& zeta, double payload) {
  require(payload >= 0.0, "load_emulator: payload must be >= 0");
  auto c = chain;
  c.payload = payload;
  const auto kin = vdc::vdc_kinematics(c, zeta, Vec6::Zero());
  const double F = vdc::vdc_dynamics(c, kin, vdc::body_net_forces(c, kin)).lift.F_L;
  return std::clamp(F, 0.0, 70e3);
}

struct SensorNoise {
  double F_L = 0.0, xdot_L = 0.0;      // measured-feedback sensors
  double tau_e = 0.0, omega_m = 0.0;   // motor-side measurements
};

enum class SensorMode { kMeasured, kSensorless };

inline SensorMode mode_from_string(const std::string& s) {
  if (s == "MF") return SensorMode::kMeasured;
  if (s == "SL") return SensorMode::kSensorless;
  throw ConfigError("mode must be \"MF\" or \"SL\", got \"" + s + "\"");
}

inline std::string mode_name(SensorMode m) { return m == SensorMode::kMeasured ? "MF" : "SL"; }

struct Testbed {
  EmlaConfig nominal;  // model used by the controller and the PIK mean
  EmlaConfig truth;    // simulated actuator
  vdc::ChainModel chain;
  Vec6 zeta_lock = Vec6::Zero();  // joints other than the lift stay here
};

struct Scenario {
  double payload = 0.0;
  JointTrajectory trajectory;
  SensorMode mode = SensorMode::kMeasured;
  ControllerGains gains;
  SensorNoise noise;
  std::uint64_t seed = 1;
  double dt = 1e-3;
  int substeps = 10;
  bool theta_exact = false;     // start adaptation from the payload-inclusive parameters
  double theta_rel = 0.5, theta_pad = 0.1, payload_max = 400.0;
  double divergence_limit = 0.1;  // m
  double feedback_cutoff_hz = 0.0;  // low-pass on force/velocity feedback in both modes, 0 disables

  void validate() const {
    require(payload >= 0.0, "scenario: payload must be >= 0");
    trajectory.validate();
    gains.validate();
    require(dt > 0.0 && substeps >= 1 && divergence_limit > 0.0, "scenario: invalid timing or divergence limit");
    require(feedback_cutoff_hz >= 0.0, "scenario: feedback cutoff must be >= 0");
  }
};

struct ControlTraceRow {
  double t, x_ref, x, xdot_ref, xdot, F_Lr, F_emulated, F_pred, v_d, v_q;
};

inline const std::vector<std::string>& control_trace_header() {
  static const std::vector<std::string> h{"t",    "x_ref", "x",          "xdot_ref", "xdot",
                                          "F_Lr", "F_emulated", "F_pred", "v_d",      "v_q"};
  return h;
}

struct ExperimentResult {
  TrackingReport report;
  std::vector<ControlTraceRow> trace;
  bool theta_within_bounds = true;
  bool joint_within_limits = true;
  double q_min = 0.0, q_max = 0.0;
};

/// 1 kHz loop: safety-scaled reference -> high level -> force/velocity feedback
/// source (sensors or PIK) -> voltage law -> RK4 actuator against the emulator.
inline ExperimentResult run_experiment(const Testbed& tb, const Scenario& sc, const pik::PikModel* pik = nullptr) {
  sc.validate();
  tb.chain.validate();
  if (sc.mode == SensorMode::kSensorless && !pik) throw ConfigError("run_experiment: SL mode needs a PIK model");
  const auto& lim_cfg = tb.chain.limits[1];
  const traj::JointLimits lim{lim_cfg.min, lim_cfg.max, lim_cfg.margin};
  const auto& geo = tb.chain.lift;
  const double kt_nom = tb.nominal.motor.torque_constant();

  auto controller_chain = tb.chain;
  controller_chain.payload = sc.theta_exact ? sc.payload : 0.0;
  AdaptationState ad;
  ad.theta_hat = vdc::chain_thetas(controller_chain);
  ad.bounds = theta_bounds(vdc::chain_thetas(controller_chain), sc.theta_rel, sc.theta_pad,
                           sc.theta_exact ? 0.0 : sc.payload_max);

  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> z(0.0, 1.0);

  Vec6 zeta = tb.zeta_lock;
  const double q0 = sc.trajectory.waypoints.front();
  zeta[1] = q0;
  const double L0 = vdc::actuator_geometry(geo, q0, 0, 0).L;
  // Search bracket for recovering the joint angle from the actuator stroke.
  const double q_lo = lim.zeta_min - 0.3, q_hi = lim.zeta_max + 0.3;

  // Start from rest holding the emulated load.
  EmlaState s;
  const double F_start = emulator_force(tb.chain, zeta, sc.payload);
  s.i_q = required_motor_torque(tb.truth, F_start, 0.0, true) / tb.truth.motor.torque_constant();

  double q_se = q0;
  FilteredDerivative d_iqr{sc.gains.deriv_cutoff_hz}, d_qdr{sc.gains.deriv_cutoff_hz};
  const double a_fb = sc.feedback_cutoff_hz > 0.0 ? std::exp(-kTwoPi * sc.feedback_cutoff_hz * sc.dt) : 0.0;
  std::optional<Vec2> fb_state;
  ExperimentResult res;
  res.q_min = res.q_max = q0;
  std::vector<double> xr, xa, vr, va;
  const int n = static_cast<int>(std::llround(sc.trajectory.total() / sc.dt));
  res.trace.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = k * sc.dt;
    // Safety-scaled reference, integrated from the desired joint velocity.
    const auto des = sc.trajectory.eval(t);
    const double qd_se = traj::soft_limit_scale(q_se, des.Pdot[0], lim);
    const auto g_se = vdc::actuator_geometry(geo, q_se, qd_se, 0);
    const double x_ref = g_se.L - L0, xdot_ref = g_se.Ld;

    // Plant measurements.
    const double L = L0 + s.x_L;
    const double q = vdc::joint_from_length(geo, L, q_lo, q_hi);
    const double dLdq = vdc::actuator_geometry(geo, q, 1.0, 0.0).Ld;
    const double F_emu = emulator_force(tb.chain, [&] {
      Vec6 zr = tb.zeta_lock;
      zr[1] = q_se;
      return zr;
    }(), sc.payload);
    const double tau_meas = electromagnetic_torque(s.i_d, s.i_q, tb.truth.motor) + sc.noise.tau_e * z(rng);
    const double omega_meas = s.omega_m + sc.noise.omega_m * z(rng);
    double F_fb = 0.0, v_fb = 0.0, i_d = s.i_d, i_q = s.i_q;
    if (sc.mode == SensorMode::kMeasured) {
      F_fb = F_emu + sc.noise.F_L * z(rng);
      v_fb = s.xdot_L + sc.noise.xdot_L * z(rng);
    } else {
      const auto y = pik->predict_mean(tau_meas, omega_meas);
      F_fb = y[0];
      v_fb = y[1];
      // Only torque is measured: currents are reconstructed with i_d = 0.
      i_d = 0.0;
      i_q = tau_meas / kt_nom;
    }
    if (a_fb > 0.0) {
      const Vec2 raw(F_fb, v_fb);
      fb_state = fb_state ? Vec2(a_fb * *fb_state + (1.0 - a_fb) * raw) : raw;
      F_fb = (*fb_state)[0];
      v_fb = (*fb_state)[1];
    }

    // High level.
    const double qd = v_fb / dLdq;
    const double qd_r = traj::soft_limit_scale(q, qd_se + sc.gains.lambda * (q_se - q), lim);
    const double qdd_r = d_qdr.step(qd_r, sc.dt);
    Vec6 zeta_a = tb.zeta_lock, zd = Vec6::Zero(), zd_r = Vec6::Zero(), zdd_r = Vec6::Zero();
    zeta_a[1] = q;
    zd[1] = qd;
    zd_r[1] = qd_r;
    zdd_r[1] = qdd_r;
    const auto hl = high_level_step(controller_chain, zeta_a, zd, zd_r, zdd_r, ad, sc.gains, sc.dt);
    const double F_Lr = hl.F_Lr[0], xdot_Lr = hl.xdot_Lr[0];

    // Low level.
    const double i_qr = required_motor_torque(tb.nominal, F_Lr, xdot_Lr, xdot_Lr >= 0.0) / kt_nom;
    LowLevelInput in;
    in.i_d = i_d;
    in.i_q = i_q;
    in.omega_m = omega_meas;
    in.di_qr = d_iqr.step(i_qr, sc.dt);
    in.F_Lr = F_Lr;
    in.xdot_Lr = xdot_Lr;
    in.F_pred = F_fb;
    in.xdot_pred = v_fb;
    const auto cmd = low_level_step(in, sc.gains, tb.nominal.motor);
    if (cmd.saturated) ++res.report.saturation_steps;

    res.trace.push_back({t, x_ref, s.x_L, xdot_ref, s.xdot_L, F_Lr, F_emu, F_fb, cmd.v_d, cmd.v_q});
    xr.push_back(x_ref);
    xa.push_back(s.x_L);
    vr.push_back(xdot_ref);
    va.push_back(s.xdot_L);
    res.q_min = std::min(res.q_min, q);
    res.q_max = std::max(res.q_max, q);
    if (q < lim.zeta_min || q > lim.zeta_max) res.joint_within_limits = false;
    if (!ad.bounds.contains(ad.theta_hat)) res.theta_within_bounds = false;
    res.report.t_end = t;
    if (std::abs(x_ref - s.x_L) > sc.divergence_limit) {
      res.report.diverged = true;
      break;
    }
    if (k == n) break;

    try {
      const double h = sc.dt / sc.substeps;
      for (int j = 0; j < sc.substeps; ++j) s = step_emla(s, cmd.v_d, cmd.v_q, F_emu, tb.truth, h);
    } catch (const NumericalError&) {
      res.report.diverged = true;
      break;
    }
    q_se += sc.dt * qd_se;
  }
  const auto m = tracking_metrics(xr, xa, vr, va);
  res.report.position_mm = m.position_mm;
  res.report.velocity_mms = m.velocity_mms;
  res.report.mode = mode_name(sc.mode);
  res.report.payload = sc.payload;
  return res;
}

// ---------------------------------------------------------------------------
// Configuration

/// Testbed description: controller model, simulated actuator, chain and the
/// synthetic measurement campaign used to train the sensorless surrogate.
struct TestbedSpec {
  Testbed testbed;
  pik::TruthScale truth_scale;
  pik::SyntheticTestbed campaign;
  int n_train = 200, n_holdout = 200;
  std::uint64_t train_seed = 1, holdout_seed = 2;
  gp::FitOptions fit;
};

inline Vec6 vec6(const io::json& j, const std::string& key, const std::string& where) {
  const auto v = io::get<std::vector<double>>(j, key, where);
  if (v.size() != 6) throw ConfigError(where + "." + key + ": expected 6 numbers");
  Vec6 out;
  for (int i = 0; i < 6; ++i) out[i] = v[static_cast<std::size_t>(i)];
  return out;
}

/// `base_dir` resolves the relative chain path.
inline TestbedSpec testbed_from_json(const io::json& j, const std::string& base_dir) {
  TestbedSpec t;
  const std::string w = "testbed";
  t.testbed.nominal = io::emla_config_from_json(io::get<io::json>(j, "nominal", w), w + ".nominal");
  const auto ts = io::get<io::json>(j, "truth_scale", w);
  t.truth_scale = {io::get<double>(ts, "mu", w + ".truth_scale"), io::get<double>(ts, "tau_c", w + ".truth_scale"),
                   io::get<double>(ts, "f_v", w + ".truth_scale"), io::get<double>(ts, "r_s", w + ".truth_scale")};
  require(t.truth_scale.mu > 0.0 && t.truth_scale.tau_c > 0.0 && t.truth_scale.f_v > 0.0 && t.truth_scale.r_s > 0.0,
          "testbed.truth_scale: factors must be > 0");
  t.testbed.truth = pik::scaled_truth(t.testbed.nominal, t.truth_scale);
  std::string chain_path = io::get<std::string>(j, "chain", w);
  if (!chain_path.empty() && chain_path.front() != '/' && !base_dir.empty()) chain_path = base_dir + "/" + chain_path;
  t.testbed.chain = io::load_chain(chain_path);
  t.testbed.zeta_lock = vec6(j, "zeta_lock", w);

  const auto p = io::get<io::json>(j, "pik", w);
  const std::string wp = w + ".pik";
  t.campaign.nominal = t.testbed.nominal;
  t.campaign.truth = t.testbed.truth;
  const auto n = io::get<io::json>(p, "noise", wp);
  t.campaign.noise = {io::get<double>(n, "F_L", wp + ".noise"), io::get<double>(n, "xdot_L", wp + ".noise"),
                      io::get<double>(n, "eta", wp + ".noise"), io::get<double>(n, "i_abc", wp + ".noise")};
  const Vec2 F = io::vec2(p, "F_range", wp), v = io::vec2(p, "v_range", wp);
  t.campaign.F_min = F[0];
  t.campaign.F_max = F[1];
  t.campaign.v_min = v[0];
  t.campaign.v_max = v[1];
  t.n_train = io::get<int>(p, "n_train", wp);
  t.n_holdout = io::get<int>(p, "n_holdout", wp);
  t.train_seed = io::get<std::uint64_t>(p, "train_seed", wp);
  t.holdout_seed = io::get<std::uint64_t>(p, "holdout_seed", wp);
  t.fit.starts = io::get_or(p, "starts", t.fit.starts, wp);
  t.fit.seed = io::get_or<std::uint64_t>(p, "fit_seed", t.fit.seed, wp);
  require(t.n_train >= 4 && t.n_holdout >= 1 && t.fit.starts >= 1, "testbed.pik: need n_train >= 4, n_holdout >= 1");
  const auto& nz = t.campaign.noise;
  require(nz.F_L >= 0.0 && nz.xdot_L >= 0.0 && nz.eta >= 0.0 && nz.i_abc >= 0.0, "testbed.pik.noise: must be >= 0");
  return t;
}

inline TestbedSpec load_testbed(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return testbed_from_json(io::read_json(path), slash == std::string::npos ? "" : path.substr(0, slash));
}

inline ControllerGains gains_from_json(const io::json& j, const std::string& where) {
  ControllerGains g;
  if (j.contains("K_A")) {
    const auto d = io::get<std::vector<double>>(j, "K_A", where);
    if (d.size() != 6) throw ConfigError(where + ".K_A: expected 6 diagonal entries");
    g.K_A = Mat6::Zero();
    for (int i = 0; i < 6; ++i) g.K_A(i, i) = d[static_cast<std::size_t>(i)];
  }
  g.K_i = io::get_or(j, "K_i", g.K_i, where);
  g.K_f = io::get_or(j, "K_f", g.K_f, where);
  g.K_v = io::get_or(j, "K_v", g.K_v, where);
  g.lambda = io::get_or(j, "lambda", g.lambda, where);
  g.gamma = io::get_or(j, "gamma", g.gamma, where);
  g.deriv_cutoff_hz = io::get_or(j, "deriv_cutoff_hz", g.deriv_cutoff_hz, where);
  g.saturate = io::get_or(j, "saturate", g.saturate, where);
  g.validate();
  return g;
}

/// A scenario file describes one run, or a payload x mode sweep when it
/// carries "payloads_kg" and "modes" arrays.
struct ScenarioSet {
  Scenario base;
  std::vector<double> payloads;
  std::vector<SensorMode> modes;
};

inline ScenarioSet scenario_from_json(const io::json& j) {
  const std::string w = "scenario";
  ScenarioSet set;
  Scenario& s = set.base;
  const auto tj = io::get<io::json>(j, "trajectory", w);
  s.trajectory.waypoints = io::get<std::vector<double>>(tj, "waypoints", w + ".trajectory");
  s.trajectory.durations = io::get<std::vector<double>>(tj, "durations", w + ".trajectory");
  if (j.contains("gains")) s.gains = gains_from_json(j["gains"], w + ".gains");
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    s.noise = {io::get_or(n, "F_L", 0.0, w + ".noise"), io::get_or(n, "xdot_L", 0.0, w + ".noise"),
               io::get_or(n, "tau_e", 0.0, w + ".noise"), io::get_or(n, "omega_m", 0.0, w + ".noise")};
    require(s.noise.F_L >= 0.0 && s.noise.xdot_L >= 0.0 && s.noise.tau_e >= 0.0 && s.noise.omega_m >= 0.0,
            "scenario.noise: must be >= 0");
  }
  s.seed = io::get_or<std::uint64_t>(j, "seed", s.seed, w);
  s.dt = io::get_or(j, "dt", s.dt, w);
  s.substeps = io::get_or(j, "substeps", s.substeps, w);
  s.theta_exact = io::get_or(j, "theta_exact", s.theta_exact, w);
  s.divergence_limit = io::get_or(j, "divergence_limit_m", s.divergence_limit, w);
  s.feedback_cutoff_hz = io::get_or(j, "feedback_cutoff_hz", s.feedback_cutoff_hz, w);
  if (j.contains("payloads_kg")) {
    set.payloads = io::get<std::vector<double>>(j, "payloads_kg", w);
  } else {
    set.payloads = {io::get<double>(j, "payload_kg", w)};
  }
  if (j.contains("modes")) {
    for (const auto& m : io::get<std::vector<std::string>>(j, "modes", w)) set.modes.push_back(mode_from_string(m));
  } else {
    set.modes = {mode_from_string(io::get<std::string>(j, "mode", w))};
  }
  if (set.payloads.empty() || set.modes.empty()) throw ConfigError("scenario: empty payload or mode list");
  for (double p : set.payloads) {
    s.payload = p;
    s.validate();
  }
  s.payload = set.payloads.front();
  s.mode = set.modes.front();
  return set;
}

// ---------------------------------------------------------------------------
// Sweep report

struct SweepChecks {
  bool no_divergence = true;
  bool rms_below_limit = true;
  bool sl_not_better = true;
  bool sl_ratio_below_limit = true;
  bool monotone_in_payload = true;
  double max_ratio = 0.0, min_ratio = 0.0;

  bool all() const {
    return no_divergence && rms_below_limit && sl_not_better && sl_ratio_below_limit && monotone_in_payload;
  }
};

/// Qualitative properties of a payload x {MF, SL} sweep: position RMS below
/// rms_limit_mm, SL no better than MF but within ratio_limit, and RMS
/// non-decreasing in payload for each mode. Rows must be sorted by payload.
inline SweepChecks check_sweep(const std::vector<TrackingReport>& rows, double rms_limit_mm = 5.0,
                               double ratio_limit = 1.5) {
  SweepChecks c;
  std::vector<double> payloads;
  for (const auto& r : rows)
    if (std::find(payloads.begin(), payloads.end(), r.payload) == payloads.end()) payloads.push_back(r.payload);
  std::sort(payloads.begin(), payloads.end());
  auto find = [&](double p, const std::string& m) -> const TrackingReport* {
    for (const auto& r : rows)
      if (r.payload == p && r.mode == m) return &r;
    return nullptr;
  };
  c.min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.diverged) c.no_divergence = false;
    if (!(r.position_mm.rms < rms_limit_mm)) c.rms_below_limit = false;
  }
  for (const auto& mode : {std::string("MF"), std::string("SL")}) {
    double prev = -1.0;
    for (double p : payloads) {
      const auto* r = find(p, mode);
      if (!r) continue;
      if (r->position_mm.rms < prev) c.monotone_in_payload = false;
      prev = r->position_mm.rms;
    }
  }
  bool any_pair = false;
  for (double p : payloads) {
    const auto *mf = find(p, "MF"), *sl = find(p, "SL");
    if (!mf || !sl) continue;
    any_pair = true;
    const double ratio = sl->position_mm.rms / mf->position_mm.rms;
    c.max_ratio = std::max(c.max_ratio, ratio);
    c.min_ratio = std::min(c.min_ratio, ratio);
    if (ratio < 1.0) c.sl_not_better = false;
    if (!(ratio < ratio_limit)) c.sl_ratio_below_limit = false;
  }
  if (!any_pair) {
    c.sl_not_better = c.sl_ratio_below_limit = false;
    c.min_ratio = 0.0;
  }
  return c;
}

inline io::json sweep_report_json(const std::vector<TrackingReport>& rows, const SweepChecks& c) {
  io::json j;
  j["rows"] = io::json::array();
  for (const auto& r : rows) j["rows"].push_back(r.to_json());
  j["checks"] = {{"no_divergence", c.no_divergence},
                 {"rms_below_5mm", c.rms_below_limit},
                 {"sl_not_better_than_mf", c.sl_not_better},
                 {"sl_mf_ratio_below_1_5", c.sl_ratio_below_limit},
                 {"monotone_in_payload", c.monotone_in_payload},
                 {"sl_mf_ratio_min", c.min_ratio},
                 {"sl_mf_ratio_max", c.max_ratio}};
  return j;
}

}  // namespace emla::ctrl
