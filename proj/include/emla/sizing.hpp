#pragma once

// Actuator sizing: surrogate-based objectives and rating constraints for a
// (motor, gear ratio, screw lead) choice, the lift-joint demand profile of a
// TCP move, and the payload x duration sweep.

#include <optional>
#include <string>
#include <vector>

#include "emla/chain.hpp"
#include "emla/efficiency_dataset.hpp"
#include "emla/io.hpp"
#include "emla/mlp.hpp"
#include "emla/nsga2.hpp"
#include "emla/trajectory.hpp"

namespace emla::sizing {

struct DecisionBounds {
  double G_min = 3.0, G_max = 20.0;
  double l_min = 0.005, l_max = 0.025;

  void validate() const {
    require(G_min > 0.0 && G_min < G_max, "sizing: need 0 < G_min < G_max");
    require(l_min > 0.0 && l_min < l_max, "sizing: need 0 < l_min < l_max");
  }
};

struct Demand {
  double F = 0.0;  // required load force, N
  double v = 0.0;  // required load velocity, m/s
};

struct SizingContext {
  const std::vector<MotorCatalogEntry>* catalog = nullptr;
  const dnn::MlpModel* model = nullptr;
  dnn::TransmissionFamily family;
  Demand demand;

  const MotorCatalogEntry& motor(int i) const {
    if (!catalog || i < 0 || static_cast<std::size_t>(i) >= catalog->size())
      throw ConfigError("sizing: motor index " + std::to_string(i) + " outside the catalog");
    return (*catalog)[static_cast<std::size_t>(i)];
  }
};

/// (-eta, P_N) with eta from the efficiency surrogate.
inline Vec2 evaluate_objectives(const SizingContext& ctx, int i, double G, double l) {
  const auto& m = ctx.motor(i);
  const double eta = ctx.model->predict(dnn::make_features(m, ctx.demand.F, ctx.demand.v, G, l));
  return {-eta, m.P_N};
}

struct Constraints {
  double c1 = 0.0;  // P_req - eta P_N, W
  double c2 = 0.0;  // n_req - n_n, rpm
  double c3 = 0.0;  // tau_req - tau_n, N m
  double tau_req = 0.0, n_req = 0.0, P_req = 0.0;

  bool feasible() const { return c1 <= 0.0 && c2 <= 0.0 && c3 <= 0.0; }
};

/// Rating constraints for a given efficiency value.
inline Constraints rating_constraints(const MotorCatalogEntry& m, const TransmissionParams& tp, const Demand& d,
                                      double eta) {
  Constraints c;
  const double eta_t = transmission_efficiency(tp, d.v >= 0.0 ? +1.0 : -1.0);
  c.P_req = d.F * d.v;
  c.tau_req = d.F * tp.rho / (kTwoPi * tp.N_g * eta_t);
  c.n_req = 60.0 * tp.N_g * d.v / tp.rho;
  c.c1 = c.P_req - eta * m.P_N;
  c.c2 = c.n_req - m.n_n;
  c.c3 = c.tau_req - m.tau_n;
  return c;
}

inline Constraints evaluate_constraints(const SizingContext& ctx, int i, double G, double l) {
  const auto& m = ctx.motor(i);
  const double eta = -evaluate_objectives(ctx, i, G, l)[0];
  return rating_constraints(m, ctx.family.make(G, l), ctx.demand, eta);
}

/// Optimizer view: constraints scaled by the motor rating so violations of
/// different units add up comparably.
inline opt::Problem make_problem(const SizingContext& ctx, const DecisionBounds& b) {
  b.validate();
  if (!ctx.catalog || ctx.catalog->empty()) throw ConfigError("sizing: empty catalog");
  if (!ctx.model) throw ConfigError("sizing: missing efficiency model");
  opt::Problem p;
  p.n_choices = static_cast<int>(ctx.catalog->size());
  p.lo = Vec2(b.G_min, b.l_min);
  p.hi = Vec2(b.G_max, b.l_max);
  p.evaluate = [ctx](int i, const VecX& x) {
    const auto& m = ctx.motor(i);
    opt::Evaluation e;
    e.f = evaluate_objectives(ctx, i, x[0], x[1]);
    const auto c = rating_constraints(m, ctx.family.make(x[0], x[1]), ctx.demand, -e.f[0]);
    e.c = Vec3(c.c1 / m.P_N, c.c2 / m.n_n, c.c3 / m.tau_n);
    return e;
  };
  return p;
}

struct Selection {
  int motor = 0;  // catalog index, 0-based
  double G = 0.0, l = 0.0;
  double eta = 0.0, P_N = 0.0;

  double ratio() const { return G / l; }
};

inline Selection selection_of(const opt::Individual& ind) {
  return {ind.index, ind.x[0], ind.x[1], -ind.f[0], ind.f[1]};
}

enum class SelectionRule { kMinPower, kKnee };

inline SelectionRule selection_rule_from_string(const std::string& s) {
  if (s == "min_power") return SelectionRule::kMinPower;
  if (s == "knee") return SelectionRule::kKnee;
  throw ConfigError("selection rule must be \"min_power\" or \"knee\", got \"" + s + "\"");
}

/// Smallest rated power among feasible members; ties go to higher efficiency,
/// then the lower motor index.
inline std::size_t select_min_power(const std::vector<opt::Individual>& archive) {
  if (archive.empty()) throw ConfigError("select_min_power: empty archive");
  std::size_t best = 0;
  for (std::size_t i = 1; i < archive.size(); ++i) {
    const auto& a = archive[i];
    const auto& b = archive[best];
    if (a.feasible() != b.feasible()) {
      if (a.feasible()) best = i;
      continue;
    }
    if (a.f[1] < b.f[1] || (a.f[1] == b.f[1] && (a.f[0] < b.f[0] || (a.f[0] == b.f[0] && a.index < b.index))))
      best = i;
  }
  return best;
}

inline std::size_t select_best(const std::vector<opt::Individual>& archive, SelectionRule rule) {
  return rule == SelectionRule::kKnee ? opt::select_knee(archive) : select_min_power(archive);
}

// ---------------------------------------------------------------------------
// Lift-joint demand of a TCP move

struct MoveSpec {
  Vec6 zeta_start = Vec6::Zero();
  Vec3 tcp_delta = Vec3::Zero();  // world-frame TCP displacement
  double lambda = 5.0;            // position/orientation correction gain, 1/s
  double dt = 1e-3;
  double hold = 0.5;              // time simulated after the move ends, s
};

struct LiftProfile {
  std::vector<double> t, F_L, xdot_L;
  double peak_F = 0.0, peak_v = 0.0;
  double tcp_error_max = 0.0;  // worst TCP tracking error, m
  bool limits_respected = true;
};

/// Quintic TCP move -> corrected Cartesian rate -> damped inverse Jacobian ->
/// soft joint limits -> inverse dynamics on the shipped chain (payload at the TCP).
inline LiftProfile lift_profile(const vdc::ChainModel& chain, const MoveSpec& mv, double duration) {
  if (!(duration > 0.0)) throw ConfigError("lift_profile: duration must be > 0");
  const Vec3 P0 = vdc::tcp_position(chain, mv.zeta_start);
  const Mat3 R_d = vdc::vdc_kinematics(chain, mv.zeta_start, Vec6::Zero()).T4.world.R;
  const auto path = traj::quintic_coeffs<3>(P0, P0 + mv.tcp_delta, duration);
  Vec6 z = mv.zeta_start, zd_prev = Vec6::Zero();
  LiftProfile out;
  const int n = static_cast<int>(std::ceil((duration + mv.hold) / mv.dt));
  for (int k = 0; k <= n; ++k) {
    const double t = k * mv.dt;
    const auto s = path.eval(t);
    const auto kin0 = vdc::vdc_kinematics(chain, z, Vec6::Zero());
    const Vec3 P = kin0.T4.world.r;
    const Mat3& R = kin0.T4.world.R;
    Vec3 e_o = Vec3::Zero();
    for (int c = 0; c < 3; ++c) e_o += 0.5 * R.col(c).cross(R_d.col(c));
    Vec6 pid;
    pid.head<3>() = traj::required_velocity<Vec3>(s.P, s.Pdot, P, mv.lambda);
    pid.tail<3>() = mv.lambda * e_o;
    Vec6 zd = traj::joint_velocities(vdc::tcp_jacobian(chain, z), pid).zeta_dot;
    for (int i = 0; i < 6; ++i) {
      const auto& l = chain.limits[static_cast<std::size_t>(i)];
      zd[i] = traj::soft_limit_scale(z[i], zd[i], {l.min, l.max, l.margin});
    }
    const Vec6 zdd = k == 0 ? Vec6::Zero() : Vec6((zd - zd_prev) / mv.dt);
    const auto kin = vdc::vdc_kinematics(chain, z, zd, zdd);
    const auto dyn = vdc::vdc_dynamics(chain, kin, vdc::body_net_forces(chain, kin));
    out.t.push_back(t);
    out.F_L.push_back(dyn.lift.F_L);
    out.xdot_L.push_back(kin.lift.Ld);
    out.peak_F = std::max(out.peak_F, std::abs(dyn.lift.F_L));
    out.peak_v = std::max(out.peak_v, std::abs(kin.lift.Ld));
    out.tcp_error_max = std::max(out.tcp_error_max, (s.P - P).norm());
    z += mv.dt * zd;
    zd_prev = zd;
    for (int i = 0; i < 6; ++i) {
      const auto& l = chain.limits[static_cast<std::size_t>(i)];
      if (z[i] < l.min || z[i] > l.max) out.limits_respected = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Payload x duration sweep

struct StudyConfig {
  std::vector<double> payloads;   // kg
  std::vector<double> durations;  // s
  MoveSpec move;
  DecisionBounds bounds;
  dnn::TransmissionFamily family;
  opt::NsgaOptions nsga;
  SelectionRule rule = SelectionRule::kMinPower;
};

inline dnn::TransmissionFamily family_from_json(const io::json& j, const std::string& w) {
  dnn::TransmissionFamily f;
  f.mu = io::get_or(j, "mu", f.mu, w);
  f.r_m = io::get_or(j, "r_m", f.r_m, w);
  f.eta_stage = io::get_or(j, "eta_stage", f.eta_stage, w);
  f.stage_ratio_cap = io::get_or(j, "stage_ratio_cap", f.stage_ratio_cap, w);
  require(f.mu >= 0.0 && f.r_m > 0.0 && f.eta_stage > 0.0 && f.eta_stage <= 1.0 && f.stage_ratio_cap > 1.0,
          w + ": invalid transmission family");
  return f;
}

inline StudyConfig study_from_json(const io::json& j) {
  StudyConfig c;
  c.payloads = io::get<std::vector<double>>(j, "payloads_kg", "study");
  c.durations = io::get<std::vector<double>>(j, "durations_s", "study");
  if (c.payloads.empty() || c.durations.empty()) throw ConfigError("study: empty payload or duration grid");
  for (double p : c.payloads) require(p >= 0.0, "study.payloads_kg: must be >= 0");
  for (double d : c.durations) require(d > 0.0, "study.durations_s: must be > 0");
  const auto& mv = j.at("move");
  const auto z = io::get<std::vector<double>>(mv, "zeta_start", "study.move");
  if (z.size() != 6) throw ConfigError("study.move.zeta_start: expected 6 numbers");
  for (int i = 0; i < 6; ++i) c.move.zeta_start[i] = z[static_cast<std::size_t>(i)];
  c.move.tcp_delta = io::vec3(mv, "tcp_delta", "study.move");
  c.move.lambda = io::get_or(mv, "lambda", c.move.lambda, "study.move");
  c.move.dt = io::get_or(mv, "dt", c.move.dt, "study.move");
  c.move.hold = io::get_or(mv, "hold", c.move.hold, "study.move");
  require(c.move.dt > 0.0 && c.move.hold >= 0.0 && c.move.lambda >= 0.0, "study.move: invalid timing or gain");
  if (j.contains("bounds")) {
    const auto& b = j["bounds"];
    const Vec2 G = io::vec2(b, "G", "study.bounds"), l = io::vec2(b, "l", "study.bounds");
    c.bounds = {G[0], G[1], l[0], l[1]};
  }
  c.bounds.validate();
  if (j.contains("family")) c.family = family_from_json(j["family"], "study.family");
  if (j.contains("nsga")) {
    const auto& n = j["nsga"];
    c.nsga.pop_size = io::get_or(n, "pop_size", c.nsga.pop_size, "study.nsga");
    c.nsga.generations = io::get_or(n, "generations", c.nsga.generations, "study.nsga");
    c.nsga.seed = io::get_or<std::uint64_t>(n, "seed", c.nsga.seed, "study.nsga");
    c.nsga.threads = io::get_or(n, "threads", c.nsga.threads, "study.nsga");
  }
  c.rule = selection_rule_from_string(io::get_or<std::string>(j, "selection", "min_power", "study"));
  return c;
}

struct Cell {
  double payload = 0.0, duration = 0.0;
  Demand demand;
  bool ok = false;
  std::string error;
  std::vector<opt::Individual> archive;
  Selection best;
};

inline std::vector<Cell> sweep_study(const StudyConfig& cfg, const vdc::ChainModel& chain,
                                     const std::vector<MotorCatalogEntry>& catalog, const dnn::MlpModel& model) {
  if (cfg.payloads.empty() || cfg.durations.empty()) throw ConfigError("sweep_study: empty payload or duration grid");
  std::vector<Cell> cells;
  std::uint64_t cell_no = 0;
  for (double pl : cfg.payloads) {
    for (double T : cfg.durations) {
      Cell c;
      c.payload = pl;
      c.duration = T;
      try {
        vdc::ChainModel ch = chain;
        ch.payload = pl;
        ch.validate();
        const auto prof = lift_profile(ch, cfg.move, T);
        c.demand = {prof.peak_F, prof.peak_v};
        SizingContext ctx{&catalog, &model, cfg.family, c.demand};
        auto o = cfg.nsga;
        o.seed = cfg.nsga.seed + cell_no;
        const auto run = opt::nsga2_run(make_problem(ctx, cfg.bounds), o);
        if (!run.any_feasible) throw NumericalError("no configuration satisfies the rating constraints");
        c.archive = run.archive;
        c.best = selection_of(c.archive[select_best(c.archive, cfg.rule)]);
        c.ok = true;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
      cells.push_back(std::move(c));
      ++cell_no;
    }
  }
  return cells;
}

struct TrendReport {
  bool ratio_nondecreasing_with_duration = true;
  bool shortest_duration_lowest_ratio = true;
  bool motor_steps_up_with_payload = true;
  std::vector<std::string> notes;

  bool all() const {
    return ratio_nondecreasing_with_duration && shortest_duration_lowest_ratio && motor_steps_up_with_payload;
  }
};

/// Checks the three sweep trends on a payload-major grid. `ratio_tol` is the relative
/// slack on gear-to-lead comparisons that absorbs optimizer noise.
inline TrendReport check_trends(const std::vector<Cell>& cells, std::size_t n_payloads, std::size_t n_durations,
                                double ratio_tol = 0.02) {
  TrendReport r;
  if (cells.size() != n_payloads * n_durations || n_payloads == 0 || n_durations == 0)
    throw ConfigError("check_trends: grid shape mismatch");
  auto at = [&](std::size_t p, std::size_t d) -> const Cell& { return cells[p * n_durations + d]; };
  for (const auto& c : cells)
    if (!c.ok) {
      r.ratio_nondecreasing_with_duration = r.shortest_duration_lowest_ratio = r.motor_steps_up_with_payload = false;
      r.notes.push_back("cell failed: " + c.error);
      return r;
    }
  for (std::size_t p = 0; p < n_payloads; ++p) {
    for (std::size_t d = 1; d < n_durations; ++d) {
      if (at(p, d).best.ratio() < at(p, d - 1).best.ratio() * (1.0 - ratio_tol)) {
        r.ratio_nondecreasing_with_duration = false;
        r.notes.push_back("payload " + io::fmt(at(p, d).payload) + ": G/l drops at duration " +
                          io::fmt(at(p, d).duration));
      }
      if (at(p, d).best.ratio() < at(p, 0).best.ratio() * (1.0 - ratio_tol)) {
        r.shortest_duration_lowest_ratio = false;
        r.notes.push_back("payload " + io::fmt(at(p, d).payload) + ": duration " + io::fmt(at(p, d).duration) +
                          " has a lower G/l than the shortest duration");
      }
    }
  }
  bool stepped = false;
  for (std::size_t d = 0; d < n_durations; ++d) {
    for (std::size_t p = 1; p < n_payloads; ++p) {
      if (at(p, d).best.P_N < at(p - 1, d).best.P_N) {
        r.motor_steps_up_with_payload = false;
        r.notes.push_back("duration " + io::fmt(at(p, d).duration) + ": motor power drops at payload " +
                          io::fmt(at(p, d).payload));
      }
      if (at(p, d).best.P_N > at(p - 1, d).best.P_N) stepped = true;
    }
  }
  if (!stepped) {
    r.motor_steps_up_with_payload = false;
    r.notes.push_back("no payload increase moves the selection to a larger motor");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string pareto_csv(const std::vector<Cell>& cells) {
  io::CsvWriter w({"payload_kg", "duration_s", "eta", "P_N", "i", "G", "l", "rank"});
  for (const auto& c : cells)
    for (const auto& a : c.archive)
      w.row({c.payload, c.duration, -a.f[0], a.f[1], static_cast<double>(a.index + 1), a.x[0], a.x[1],
             static_cast<double>(a.rank)});
  return w.str();
}

inline std::string config_grid_csv(const std::vector<Cell>& cells) {
  io::CsvWriter w({"payload_kg", "duration_s", "F_Lr", "xdot_Lr", "ok", "i", "P_N", "G", "l", "G_over_l"});
  for (const auto& c : cells)
    w.row({c.payload, c.duration, c.demand.F, c.demand.v, c.ok ? 1.0 : 0.0, static_cast<double>(c.best.motor + 1),
           c.best.P_N, c.best.G, c.best.l, c.ok ? c.best.ratio() : 0.0});
  return w.str();
}

inline std::string efficiency_grid_csv(const std::vector<Cell>& cells) {
  io::CsvWriter w({"payload_kg", "duration_s", "eta"});
  for (const auto& c : cells) w.row({c.payload, c.duration, c.best.eta});
  return w.str();
}

}  // namespace emla::sizing
