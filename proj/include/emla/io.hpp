#pragma once

// JSON ingestion for motor catalogs and chain models, CSV helpers.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emla/chain.hpp"
#include "emla/emla_core.hpp"

namespace emla::io {

using json = nlohmann::json;

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

/// Field access with a diagnostic naming the JSON path on failure.
template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline Vec3 vec3(const json& j, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw ConfigError(where + "." + key + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

inline Vec2 vec2(const json& j, const std::string& key, const std::string& where) {
  const auto v = get<std::vector<double>>(j, key, where);
  if (v.size() != 2) throw ConfigError(where + "." + key + ": expected 2 numbers");
  return {v[0], v[1]};
}

// ---------------------------------------------------------------------------
// Motors

inline MotorCatalogEntry motor_from_json(const json& j, const std::string& where) {
  MotorCatalogEntry m;
  m.id = get<std::string>(j, "id", where);
  const std::string w = where + "[" + m.id + "]";
  m.r_s = get<double>(j, "r_s", w);
  m.L_d = get<double>(j, "L_d", w);
  m.L_q = get<double>(j, "L_q", w);
  m.P = get<int>(j, "P", w);
  m.psi_f = get<double>(j, "psi_f", w);
  m.J_m = get<double>(j, "J_m", w);
  m.P_N = get<double>(j, "P_N", w);
  m.eta_N = get<double>(j, "eta_N", w);
  m.tau_n = get<double>(j, "tau_n", w);
  m.n_n = get<double>(j, "n_n", w);
  m.tau_c = get<double>(j, "tau_c", w);
  m.f_v = get<double>(j, "f_v", w);
  m.validate();
  return m;
}

inline json motor_to_json(const MotorCatalogEntry& m) {
  return {{"id", m.id},     {"r_s", m.r_s},     {"L_d", m.L_d},       {"L_q", m.L_q},
          {"P", m.P},       {"psi_f", m.psi_f}, {"J_m", m.J_m},       {"P_N", m.P_N},
          {"eta_N", m.eta_N}, {"tau_n", m.tau_n}, {"n_n", m.n_n},     {"tau_c", m.tau_c},
          {"f_v", m.f_v}};
}

inline std::vector<MotorCatalogEntry> catalog_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("motor catalog: expected a non-empty JSON array");
  std::vector<MotorCatalogEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(motor_from_json(j[i], "catalog[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<MotorCatalogEntry> load_catalog(const std::string& path) {
  return catalog_from_json(read_json(path));
}

inline TransmissionParams transmission_from_json(const json& j, const std::string& where) {
  TransmissionParams t;
  t.N_g = get<double>(j, "N_g", where);
  t.rho = get<double>(j, "rho", where);
  t.mu = get<double>(j, "mu", where);
  t.r_m = get<double>(j, "r_m", where);
  t.eta_stage = get_or<double>(j, "eta_stage", t.eta_stage, where);
  t.stage_ratio_cap = get_or<double>(j, "stage_ratio_cap", t.stage_ratio_cap, where);
  t.validate();
  return t;
}

inline json transmission_to_json(const TransmissionParams& t) {
  return {{"N_g", t.N_g}, {"rho", t.rho}, {"mu", t.mu}, {"r_m", t.r_m},
          {"eta_stage", t.eta_stage}, {"stage_ratio_cap", t.stage_ratio_cap}};
}

inline EmlaConfig emla_config_from_json(const json& j, const std::string& where) {
  EmlaConfig c;
  c.motor = motor_from_json(get<json>(j, "motor", where), where + ".motor");
  c.trans = transmission_from_json(get<json>(j, "transmission", where), where + ".transmission");
  c.M_t = get<double>(j, "M_t", where);
  c.validate();
  return c;
}

inline json emla_config_to_json(const EmlaConfig& c) {
  return {{"motor", motor_to_json(c.motor)}, {"transmission", transmission_to_json(c.trans)}, {"M_t", c.M_t}};
}

// ---------------------------------------------------------------------------
// Chain model

inline vdc::BodyParams body_from_json(const json& j, const std::string& where) {
  const double m = get<double>(j, "m", where);
  const Vec3 com = j.contains("com") ? vec3(j, "com", where) : Vec3::Zero();
  Mat3 Ic = Mat3::Zero();
  if (j.contains("inertia_com_diag")) {
    Ic.diagonal() = vec3(j, "inertia_com_diag", where);
  } else if (j.contains("inertia_com")) {
    const auto rows = get<std::vector<std::vector<double>>>(j, "inertia_com", where);
    if (rows.size() != 3) throw ConfigError(where + ".inertia_com: expected 3x3");
    for (int r = 0; r < 3; ++r) {
      if (rows[static_cast<std::size_t>(r)].size() != 3) throw ConfigError(where + ".inertia_com: expected 3x3");
      for (int c = 0; c < 3; ++c) Ic(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  auto b = vdc::BodyParams::from_com_inertia(m, com, Ic);
  if (!b.valid()) throw ConfigError(where + ": body must have m > 0 and symmetric PSD inertia");
  return b;
}

inline Mat3 rpy_deg(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) return Mat3::Identity();
  const Vec3 a = vec3(j, key, where) * (kPi / 180.0);
  return vdc::rot_z(a[2]) * vdc::rot_y(a[1]) * vdc::rot_x(a[0]);
}

inline vdc::Axis axis_from_string(const std::string& s, const std::string& where) {
  if (s == "x_tau") return vdc::Axis::x_tau;
  if (s == "y_tau") return vdc::Axis::y_tau;
  if (s == "z_tau") return vdc::Axis::z_tau;
  throw ConfigError(where + ": revolute axis must be x_tau, y_tau or z_tau");
}

inline vdc::ClosedChainGeometry closed_chain_from_json(const json& j, const std::string& w) {
  vdc::ClosedChainGeometry g;
  g.b = vec2(j, "b", w);
  g.a = vec2(j, "a", w);
  g.next_pivot = vec2(j, "next_pivot", w);
  g.link = body_from_json(get<json>(j, "link", w), w + ".link");
  g.cylinder = body_from_json(get<json>(j, "cylinder", w), w + ".cylinder");
  g.rod = body_from_json(get<json>(j, "rod", w), w + ".rod");
  return g;
}

inline vdc::ChainModel chain_from_json(const json& j) {
  const std::string w = "chain";
  vdc::ChainModel m;
  if (j.contains("gravity")) m.gravity = vec3(j, "gravity", w);
  const json base = get<json>(j, "base", w);
  m.base_axis = axis_from_string(get_or<std::string>(base, "axis", "z_tau", w + ".base"), w + ".base");
  if (base.contains("offset")) m.base_offset = vec3(base, "offset", w + ".base");
  m.turntable = body_from_json(get<json>(base, "turntable", w + ".base"), w + ".base.turntable");
  m.turntable_to_lift.r = vec3(base, "lift_pivot", w + ".base");
  m.turntable_to_lift.R = rpy_deg(base, "lift_plane_rpy_deg", w + ".base");
  m.lift = closed_chain_from_json(get<json>(j, "lift", w), w + ".lift");
  m.tilt = closed_chain_from_json(get<json>(j, "tilt", w), w + ".tilt");
  const json wr = get<json>(j, "wrist", w);
  const std::string ww = w + ".wrist";
  m.wrist_base_R = rpy_deg(wr, "base_rpy_deg", ww);
  m.wrist_offset_c = vec3(wr, "offset_c", ww);
  m.wrist_offset_d = vec3(wr, "offset_d", ww);
  m.tool_offset = vec3(wr, "tool_offset", ww);
  m.wrist_a = body_from_json(get<json>(wr, "a", ww), ww + ".a");
  m.wrist_c = body_from_json(get<json>(wr, "c", ww), ww + ".c");
  m.wrist_d = body_from_json(get<json>(wr, "d", ww), ww + ".d");
  m.tool = body_from_json(get<json>(wr, "tool", ww), ww + ".tool");
  m.payload = get_or<double>(j, "payload_kg", 0.0, w);
  const json lim = get<json>(j, "limits", w);
  if (!lim.is_array() || lim.size() != 6) throw ConfigError("chain.limits: expected 6 entries");
  for (std::size_t i = 0; i < 6; ++i) {
    const std::string wl = "chain.limits[" + std::to_string(i) + "]";
    m.limits[i] = {get<double>(lim[i], "min", wl), get<double>(lim[i], "max", wl),
                   get<double>(lim[i], "margin", wl)};
  }
  m.validate();
  return m;
}

inline vdc::ChainModel load_chain(const std::string& path) { return chain_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trippable formatting, locale-independent.
inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }

  void row(const std::vector<double>& values) {
    if (values.size() != cols_) throw ConfigError("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << fmt(values[i]);
    os_ << '\n';
  }

  void raw_row(const std::vector<std::string>& values) {
    if (values.size() != cols_) throw ConfigError("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << values[i];
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }
  void save(const std::string& path) const { write_text(path, os_.str()); }

 private:
  std::size_t cols_;
  std::ostringstream os_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("csv: missing column '" + name + "'");
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  // leading '#' lines carry provenance comments
  do {
    if (!std::getline(in, line)) throw ConfigError(path + ": empty CSV");
    ++lineno;
  } while (!line.empty() && line[0] == '#');
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": column count mismatch");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline const std::vector<std::string>& trace_header() {
  static const std::vector<std::string> h{"t", "i_d", "i_q", "omega_m", "x_L", "xdot_L", "tau_e", "F_L", "v_d", "v_q"};
  return h;
}

inline std::vector<double> trace_values(const TraceRow& r) {
  return {r.t, r.i_d, r.i_q, r.omega_m, r.x_L, r.xdot_L, r.tau_e, r.F_L, r.v_d, r.v_q};
}

}  // namespace emla::io
