#pragma once

// Simulation-labelled steady-state efficiency dataset over motor x force x
// velocity x gear ratio x lead grids, and the feature layout shared with the
// optimizer.

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "emla/emla_core.hpp"

namespace emla::dnn {

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> n{"F_L", "xdot_L", "P_N", "tau_n", "n_n", "eta_N", "N_g", "rho"};
  return n;
}

inline VecX make_features(const MotorCatalogEntry& m, double F, double v, double N_g, double rho) {
  VecX x(8);
  x << F, v, m.P_N, m.tau_n, m.n_n, m.eta_N, N_g, rho;
  return x;
}

/// Power available at the load side, eta_N * eta_t+ * P_N.
inline double available_power(const MotorCatalogEntry& m, const TransmissionParams& tp) {
  return m.eta_N * transmission_efficiency(tp, +1.0) * m.P_N;
}

/// Screw and gearbox properties shared by every candidate (N_g, rho) pair.
struct TransmissionFamily {
  double mu = 0.02;     // thread friction
  double r_m = 0.016;   // mean thread radius, m
  double eta_stage = 0.97;
  double stage_ratio_cap = 5.0;

  TransmissionParams make(double N_g, double rho) const {
    TransmissionParams t;
    t.N_g = N_g;
    t.rho = rho;
    t.mu = mu;
    t.r_m = r_m;
    t.eta_stage = eta_stage;
    t.stage_ratio_cap = stage_ratio_cap;
    return t;
  }
};

struct DatasetGrid {
  std::vector<double> F, v, N_g, rho;
  TransmissionFamily family;
  double M_t = 50.0;

  TransmissionParams transmission(double G, double l) const { return family.make(G, l); }
};

struct SteadyStateOptions {
  double dt = 1e-4;
  double accel_tol = 1e-4;  // m/s^2
  double hold = 0.2;        // s the tolerance must hold
  double t_max = 4.0;
  bool warm_start = false;  // start at the analytic operating point instead of rest
};

struct SteadyStateResult {
  bool converged = false;
  double eta = 0.0;     // F v / (1.5 (v_d i_d + v_q i_q))
  double p_elec = 0.0;
  double t_settle = 0.0;
  EmlaState state;
};

/// Drive the actuator at load velocity v against constant load F with a
/// field-oriented drive (PI current loops with decoupling, PI speed loop, torque
/// feedforward, voltages held per step) from rest until the load acceleration
/// stays below tolerance. Efficiency is F v over the electrical input power.
/// Cascaded PI speed and current loops (200 Hz current, 10 Hz speed bandwidth)
/// with dq decoupling, holding xdot_L at a set speed against load F.
struct FocDrive {
  const EmlaConfig* cfg;
  SteadyOperatingPoint op;
  double kp_d, ki_d, kp_q, ki_q, kp_w, ki_w;
  double int_d = 0.0, int_q = 0.0, int_w = 0.0;

  FocDrive(const EmlaConfig& c, double F, double v) : cfg(&c), op(steady_operating_point(c, F, v)) {
    const auto& m = c.motor;
    const double kt = m.torque_constant();
    const double gain = c.trans.kinematic_gain();
    const double j_eff = m.J_m + c.M_t / (gain * gain);
    const double wc = kTwoPi * 200.0;  // current loop bandwidth, rad/s
    const double ws = kTwoPi * 10.0;   // speed loop bandwidth, rad/s
    kp_d = m.L_d * wc;
    ki_d = m.r_s * wc;
    kp_q = m.L_q * wc;
    ki_q = m.r_s * wc;
    kp_w = j_eff * ws / kt;
    ki_w = kp_w * ws / 5.0;
  }

  /// State at the analytic operating point with the integrators preloaded.
  EmlaState warm_state() {
    EmlaState s;
    s.i_d = op.i_d;
    s.i_q = op.i_q;
    s.xdot_L = op.omega_m / cfg->trans.kinematic_gain();
    s.omega_m = op.omega_m;
    int_q = cfg->motor.r_s * op.i_q;
    return s;
  }

  /// Voltage command (v_d, v_q) for the current state.
  std::pair<double, double> command(const EmlaState& s, double dt) {
    const auto& m = cfg->motor;
    const double e_w = op.omega_m - s.omega_m;
    int_w += ki_w * e_w * dt;
    const double i_qr = op.i_q + kp_w * e_w + int_w;
    const double w_e = m.P * s.omega_m;
    const double e_d = -s.i_d, e_q = i_qr - s.i_q;
    int_d += ki_d * e_d * dt;
    int_q += ki_q * e_q * dt;
    return {kp_d * e_d + int_d - w_e * m.L_q * s.i_q, kp_q * e_q + int_q + w_e * (m.L_d * s.i_d + m.psi_f)};
  }
};

inline SteadyStateResult simulate_to_steady_state(const EmlaConfig& cfg, double F, double v,
                                                  const SteadyStateOptions& opt = {}) {
  FocDrive drive(cfg, F, v);
  EmlaState s = opt.warm_start ? drive.warm_state() : EmlaState{};
  SteadyStateResult r;
  double quiet = 0.0, v_d = drive.op.v_d, v_q = drive.op.v_q;
  const int n = static_cast<int>(std::ceil(opt.t_max / opt.dt));
  for (int k = 0; k < n; ++k) {
    std::tie(v_d, v_q) = drive.command(s, opt.dt);
    const EmlaState next = step_emla(s, v_d, v_q, F, cfg, opt.dt);
    const double acc = (next.xdot_L - s.xdot_L) / opt.dt;
    s = next;
    quiet = std::abs(acc) < opt.accel_tol ? quiet + opt.dt : 0.0;
    if (quiet >= opt.hold - 0.5 * opt.dt) {
      r.converged = true;
      break;
    }
  }
  r.state = s;
  r.t_settle = s.t;
  r.p_elec = electrical_power(v_d, v_q, s.i_d, s.i_q);
  r.eta = r.p_elec > 0.0 ? F * s.xdot_L / r.p_elec : 0.0;
  return r;
}

struct EffDataset {
  MatX X;                    // rows of make_features
  VecX Y;                    // measured efficiency
  std::vector<int> motor;    // catalog index per row
  std::size_t skipped_infeasible = 0;
  std::size_t skipped_unsettled = 0;
};

/// Grid sweep with the feasibility filter eta_N * eta_t+ * P_N > F v; each kept
/// tuple is labelled by simulation. Tuples are simulated in parallel; row order
/// follows the grid order regardless of thread count.
inline EffDataset generate_dataset(const std::vector<MotorCatalogEntry>& catalog, const DatasetGrid& grid,
                                   const SteadyStateOptions& opt = {}, unsigned threads = 0) {
  if (catalog.empty() || grid.F.empty() || grid.v.empty() || grid.N_g.empty() || grid.rho.empty())
    throw ConfigError("generate_dataset: empty catalog or grid");
  struct Job {
    int motor;
    double F, v, G, l;
  };
  std::vector<Job> jobs;
  EffDataset ds;
  for (std::size_t i = 0; i < catalog.size(); ++i)
    for (double F : grid.F)
      for (double v : grid.v)
        for (double G : grid.N_g)
          for (double l : grid.rho) {
            if (available_power(catalog[i], grid.transmission(G, l)) <= F * v) {
              ++ds.skipped_infeasible;
              continue;
            }
            jobs.push_back({static_cast<int>(i), F, v, G, l});
          }
  if (jobs.empty()) throw ConfigError("generate_dataset: no feasible grid tuples");

  std::vector<SteadyStateResult> results(jobs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t j = t; j < jobs.size(); j += threads) {
        const Job& jb = jobs[j];
        EmlaConfig cfg;
        cfg.motor = catalog[static_cast<std::size_t>(jb.motor)];
        cfg.trans = grid.transmission(jb.G, jb.l);
        cfg.M_t = grid.M_t;
        try {
          results[j] = simulate_to_steady_state(cfg, jb.F, jb.v, opt);
        } catch (const NumericalError&) {
          results[j].converged = false;
        }
      }
    });
  }
  for (auto& th : pool) th.join();

  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    // Labels may overshoot 1 by the settling tolerance on a lossless chain.
    if (results[j].converged && results[j].eta > 0.0 && results[j].eta <= 1.0 + 1e-3) {
      keep.push_back(j);
    } else {
      ++ds.skipped_unsettled;
    }
  }
  if (keep.empty()) throw ConfigError("generate_dataset: no tuple reached steady state");
  ds.X.resize(static_cast<Eigen::Index>(keep.size()), 8);
  ds.Y.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const Job& jb = jobs[keep[r]];
    const auto row = static_cast<Eigen::Index>(r);
    ds.X.row(row) = make_features(catalog[static_cast<std::size_t>(jb.motor)], jb.F, jb.v, jb.G, jb.l).transpose();
    ds.Y[row] = std::min(results[keep[r]].eta, 1.0);
    ds.motor.push_back(jb.motor);
  }
  return ds;
}

}  // namespace emla::dnn
