#pragma once

// Open-loop and speed-controlled EMLA runs with a running energy audit.

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "emla/efficiency_dataset.hpp"
#include "emla/emla_core.hpp"
#include "emla/io.hpp"

namespace emla::sim {

enum class DriveKind { kVoltage, kSpeed };

struct SimSpec {
  EmlaConfig cfg;
  double F_L = 0.0;  // constant load force, N
  DriveKind drive = DriveKind::kSpeed;
  double v_d = 0.0, v_q = 0.0;  // kVoltage
  double xdot_ref = 0.0;        // kSpeed, m/s
  double duration = 1.0;
  double dt = 1e-4;
  int record_every = 10;

  void validate() const {
    cfg.validate();
    require(duration > 0.0 && dt > 0.0 && dt <= duration, "sim: need 0 < dt <= duration_s");
    require(record_every >= 1, "sim: record_every must be >= 1");
    require(std::isfinite(F_L) && std::isfinite(v_d) && std::isfinite(v_q) && std::isfinite(xdot_ref),
            "sim: non-finite load or drive value");
  }
};

inline SimSpec sim_from_json(const io::json& j) {
  SimSpec s;
  s.cfg = io::emla_config_from_json(io::get<io::json>(j, "emla", "sim"), "sim.emla");
  s.F_L = io::get<double>(j, "load_N", "sim");
  const auto d = io::get<io::json>(j, "drive", "sim");
  const auto kind = io::get<std::string>(d, "type", "sim.drive");
  if (kind == "voltage") {
    s.drive = DriveKind::kVoltage;
    s.v_d = io::get<double>(d, "v_d", "sim.drive");
    s.v_q = io::get<double>(d, "v_q", "sim.drive");
  } else if (kind == "speed") {
    s.drive = DriveKind::kSpeed;
    s.xdot_ref = io::get<double>(d, "xdot_ref", "sim.drive");
  } else {
    throw ConfigError("sim.drive.type: expected \"voltage\" or \"speed\", got \"" + kind + "\"");
  }
  s.duration = io::get<double>(j, "duration_s", "sim");
  s.dt = io::get_or(j, "dt", s.dt, "sim");
  s.record_every = io::get_or(j, "record_every", s.record_every, "sim");
  s.validate();
  return s;
}

/// Energy terms over the run, J. `mech_loss` is what remains after copper loss,
/// stored magnetic and kinetic energy and load work; it is zero for a lossless drive.
struct EnergyAudit {
  double e_in = 0.0, e_copper = 0.0, d_magnetic = 0.0, d_kinetic = 0.0, w_load = 0.0;
  double mech_loss() const { return e_in - e_copper - d_magnetic - d_kinetic - w_load; }
  double balance_rel() const { return e_in != 0.0 ? mech_loss() / std::abs(e_in) : 0.0; }

  io::json to_json() const {
    return {{"e_in_J", e_in},           {"e_copper_J", e_copper}, {"d_magnetic_J", d_magnetic},
            {"d_kinetic_J", d_kinetic}, {"w_load_J", w_load},     {"mech_loss_J", mech_loss()},
            {"balance_rel", balance_rel()}};
  }
};

struct SimResult {
  std::vector<TraceRow> trace;
  std::vector<EnergyAudit> audit;  // cumulative, one per trace row
  EnergyAudit energy;
};

inline std::vector<std::string> sim_header() {
  auto h = io::trace_header();
  h.insert(h.end(), {"e_in", "e_mech_loss"});
  return h;
}

inline SimResult simulate(const SimSpec& spec) {
  spec.validate();
  const auto& c = spec.cfg;
  const auto& m = c.motor;
  auto w_mag = [&](const EmlaState& s) { return 0.75 * (m.L_d * s.i_d * s.i_d + m.L_q * s.i_q * s.i_q); };
  auto ke = [&](const EmlaState& s) { return 0.5 * c.reflected_mass() * s.xdot_L * s.xdot_L; };

  std::optional<dnn::FocDrive> foc;
  if (spec.drive == DriveKind::kSpeed) foc.emplace(c, spec.F_L, spec.xdot_ref);
  EmlaState s;
  const EmlaState s0 = s;
  SimResult r;
  EnergyAudit e;
  double v_d = spec.v_d, v_q = spec.v_q;
  if (foc) std::tie(v_d, v_q) = foc->command(s, 0.0);
  auto record = [&] {
    r.trace.push_back(make_trace_row(s, spec.F_L, v_d, v_q, m));
    r.audit.push_back(e);
  };
  record();
  const long n = std::lround(spec.duration / spec.dt);
  for (long k = 1; k <= n; ++k) {
    if (foc) std::tie(v_d, v_q) = foc->command(s, spec.dt);
    const EmlaState next = step_emla(s, v_d, v_q, spec.F_L, c, spec.dt);
    if (!std::isfinite(next.i_d) || !std::isfinite(next.i_q) || !std::isfinite(next.xdot_L))
      throw NumericalError("sim: state became non-finite at t = " + io::fmt(next.t));
    // voltages are held over the step, currents are trapezoidal
    e.e_in += 0.75 * spec.dt * (v_d * (s.i_d + next.i_d) + v_q * (s.i_q + next.i_q));
    e.e_copper += 0.75 * spec.dt * m.r_s *
                  (s.i_d * s.i_d + s.i_q * s.i_q + next.i_d * next.i_d + next.i_q * next.i_q);
    s = next;
    e.d_magnetic = w_mag(s) - w_mag(s0);
    e.d_kinetic = ke(s) - ke(s0);
    e.w_load = spec.F_L * (s.x_L - s0.x_L);
    if (k % spec.record_every == 0 || k == n) record();
  }
  r.energy = e;
  return r;
}

inline std::string sim_csv(const SimResult& r) {
  io::CsvWriter w(sim_header());
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    auto v = io::trace_values(r.trace[i]);
    v.push_back(r.audit[i].e_in);
    v.push_back(r.audit[i].mech_loss());
    w.row(v);
  }
  return w.str();
}

}  // namespace emla::sim
