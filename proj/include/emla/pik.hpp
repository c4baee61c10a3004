#pragma once

// Physics-informed Kriging observer: four residual GPs on normalized
// (tau_e, omega_m) around the analytic motor-to-load map, operating-point
// extraction from sampled streams, and a synthetic testbed for training and
// hold-out evaluation.

#include <array>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "emla/efficiency_dataset.hpp"
#include "emla/emla_core.hpp"
#include "emla/gp.hpp"
#include "emla/io.hpp"

namespace emla::pik {

inline constexpr int kOutputs = 4;
using Vec4 = Eigen::Vector4d;

/// Output order used everywhere: F_L, xdot_L, eta, i_abc.
inline const std::array<std::string, kOutputs>& output_names() {
  static const std::array<std::string, kOutputs> n{"F_L", "xdot_L", "eta", "i_abc"};
  return n;
}

struct OperatingSample {
  double tau_e = 0.0, omega_m = 0.0;
  double F_L = 0.0, xdot_L = 0.0, eta = 0.0, i_abc = 0.0;

  Vec4 outputs() const { return {F_L, xdot_L, eta, i_abc}; }
};

inline Vec4 m2l_outputs(double tau_e, double omega_m, const EmlaConfig& cfg) {
  const auto o = m2l_steady_state(tau_e, omega_m, cfg);
  return {o.F_L, o.xdot_L, o.eta, o.i_abc};
}

struct ResidualDataset {
  MatX X_raw;  // N x 2: tau_e, omega_m
  MatX R;      // N x 4 residuals, measured minus analytic
  Vec2 mu = Vec2::Zero(), sigma = Vec2::Ones();
  std::size_t merged = 0;  // duplicate rows folded into others
  std::vector<std::string> warnings;

  MatX X_norm() const {
    MatX Xn = X_raw;
    for (int j = 0; j < 2; ++j) Xn.col(j) = (X_raw.col(j).array() - mu[j]) / sigma[j];
    return Xn;
  }
};

inline ResidualDataset compute_residuals(const std::vector<OperatingSample>& samples, const EmlaConfig& cfg) {
  // Merge exact duplicate inputs by averaging their outputs.
  std::map<std::pair<double, double>, std::pair<Vec4, int>> groups;
  std::vector<std::pair<double, double>> order;
  for (const auto& s : samples) {
    const Vec4 y = s.outputs();
    if (!std::isfinite(s.tau_e) || !std::isfinite(s.omega_m) || !y.allFinite())
      throw ConfigError("compute_residuals: non-finite sample");
    const auto key = std::make_pair(s.tau_e, s.omega_m);
    auto it = groups.find(key);
    if (it == groups.end()) {
      groups.emplace(key, std::make_pair(y, 1));
      order.push_back(key);
    } else {
      it->second.first += y;
      ++it->second.second;
    }
  }
  if (order.size() < 4) throw ConfigError("compute_residuals: need at least 4 distinct operating points");
  ResidualDataset d;
  const auto n = static_cast<Eigen::Index>(order.size());
  d.X_raw.resize(n, 2);
  d.R.resize(n, kOutputs);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& [key, acc] = *groups.find(order[static_cast<std::size_t>(k)]);
    d.X_raw(k, 0) = key.first;
    d.X_raw(k, 1) = key.second;
    d.R.row(k) = (acc.first / acc.second - m2l_outputs(key.first, key.second, cfg)).transpose();
  }
  d.merged = samples.size() - order.size();
  if (d.merged > 0)
    d.warnings.push_back("merged " + std::to_string(d.merged) + " duplicate (tau_e, omega_m) rows by averaging");
  for (int j = 0; j < 2; ++j) {
    d.mu[j] = d.X_raw.col(j).mean();
    d.sigma[j] = std::sqrt((d.X_raw.col(j).array() - d.mu[j]).square().sum() / static_cast<double>(n - 1));
    if (!(d.sigma[j] > 0.0))
      throw ConfigError(std::string("compute_residuals: ") + (j == 0 ? "tau_e" : "omega_m") + " has zero spread");
  }
  if (!d.R.allFinite()) throw NumericalError("compute_residuals: non-finite residual");
  return d;
}

struct PikPrediction {
  MatX mean;    // N x 4
  MatX sd;      // N x 4, latent
  MatX sd_obs;  // N x 4, including the fitted noise
};

struct PikModel {
  EmlaConfig cfg;  // analytic mean
  Vec2 mu = Vec2::Zero(), sigma = Vec2::Ones();
  std::array<gp::GpModel, kOutputs> gps;

  VecX normalize(double tau_e, double omega_m) const {
    return Vec2((tau_e - mu[0]) / sigma[0], (omega_m - mu[1]) / sigma[1]);
  }

  /// Means only; the control loop path.
  Vec4 predict_mean(double tau_e, double omega_m) const {
    const VecX xs = normalize(tau_e, omega_m);
    Vec4 y = m2l_outputs(tau_e, omega_m, cfg);
    for (int q = 0; q < kOutputs; ++q) y[q] += gps[static_cast<std::size_t>(q)].mean(xs);
    return y;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["outputs"] = output_names();
    j["inputs"] = {"tau_e", "omega_m"};
    j["mu"] = {mu[0], mu[1]};
    j["sigma"] = {sigma[0], sigma[1]};
    j["mean_model"] = io::emla_config_to_json(cfg);
    j["gps"] = nlohmann::json::array();
    for (const auto& g : gps) j["gps"].push_back(g.to_json());
    return j;
  }

  static PikModel from_json(const nlohmann::json& j) {
    PikModel m;
    m.cfg = io::emla_config_from_json(io::get<nlohmann::json>(j, "mean_model", "pik"), "pik.mean_model");
    const Vec2 mu = io::vec2(j, "mu", "pik"), sg = io::vec2(j, "sigma", "pik");
    require((sg.array() > 0.0).all(), "pik: sigma must be > 0");
    m.mu = mu;
    m.sigma = sg;
    const auto gps = io::get<nlohmann::json>(j, "gps", "pik");
    if (!gps.is_array() || gps.size() != kOutputs) throw ConfigError("pik: expected 4 output GPs");
    for (std::size_t q = 0; q < kOutputs; ++q) {
      m.gps[q] = gp::GpModel::from_json(gps[q]);
      if (m.gps[q].X.cols() != 2) throw ConfigError("pik: GP inputs must be 2-dimensional");
    }
    return m;
  }
};

inline PikPrediction pik_predict(const PikModel& m, const MatX& X) {
  if (X.cols() != 2) throw ConfigError("pik_predict: expected N x 2 (tau_e, omega_m) inputs");
  const auto n = X.rows();
  PikPrediction p{MatX(n, kOutputs), MatX(n, kOutputs), MatX(n, kOutputs)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const VecX xs = m.normalize(X(k, 0), X(k, 1));
    const Vec4 base = m2l_outputs(X(k, 0), X(k, 1), m.cfg);
    for (int q = 0; q < kOutputs; ++q) {
      const auto& g = m.gps[static_cast<std::size_t>(q)];
      const double var = g.variance(xs);
      p.mean(k, q) = base[q] + g.mean(xs);
      p.sd(k, q) = std::sqrt(var);
      p.sd_obs(k, q) = std::sqrt(var + g.hp.sn2);
    }
  }
  return p;
}

struct PikTrainReport {
  std::array<gp::FitReport, kOutputs> fits;
  std::size_t merged = 0;
  std::vector<std::string> warnings;
};

/// Fit the four residual GPs, one worker per output.
inline PikModel train_pik(const std::vector<OperatingSample>& samples, const EmlaConfig& cfg,
                          const gp::FitOptions& opt = {}, unsigned threads = kOutputs, PikTrainReport* report = nullptr) {
  const auto d = compute_residuals(samples, cfg);
  PikModel m;
  m.cfg = cfg;
  m.mu = d.mu;
  m.sigma = d.sigma;
  const MatX Xn = d.X_norm();
  PikTrainReport rep;
  rep.merged = d.merged;
  rep.warnings = d.warnings;
  std::array<std::exception_ptr, kOutputs> errors{};
  auto fit = [&](int q) {
    try {
      auto o = opt;
      o.seed = opt.seed + static_cast<std::uint64_t>(q);
      m.gps[static_cast<std::size_t>(q)] = gp::fit_gp(Xn, d.R.col(q), o, &rep.fits[static_cast<std::size_t>(q)]);
    } catch (...) {
      errors[static_cast<std::size_t>(q)] = std::current_exception();
    }
  };
  threads = std::clamp<unsigned>(threads, 1u, kOutputs);
  if (threads == 1) {
    for (int q = 0; q < kOutputs; ++q) fit(q);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int q = static_cast<int>(t); q < kOutputs; q += static_cast<int>(threads)) fit(q);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (report) *report = rep;
  return m;
}

/// 100 (measured - predicted) / measured; empty when measured is 0.
inline std::optional<double> residual_percentage(double measured, double predicted) {
  if (measured == 0.0) return std::nullopt;
  return 100.0 * (measured - predicted) / measured;
}

// ---------------------------------------------------------------------------
// Operating points from sampled streams

struct ExtractOptions {
  double rate_frac = 0.01;  // |dv/dt| below this fraction of the velocity range per second
  double min_window = 0.5;  // s
};

/// Steady windows are runs where |d xdot_L / dt| stays below rate_frac times the
/// stream's velocity range per second for at least min_window; each window
/// becomes one operating point by averaging.
inline std::vector<OperatingSample> extract_operating_points(const std::vector<TraceRow>& rows,
                                                             const ExtractOptions& o = {}) {
  if (rows.size() < 3) throw ConfigError("extract_operating_points: need at least 3 samples");
  double vmin = rows[0].xdot_L, vmax = rows[0].xdot_L;
  for (const auto& r : rows) {
    vmin = std::min(vmin, r.xdot_L);
    vmax = std::max(vmax, r.xdot_L);
  }
  const double thr = o.rate_frac * (vmax - vmin);
  const std::size_t n = rows.size();
  std::vector<bool> quiet(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1, b = k + 1 == n ? k : k + 1;
    const double dt = rows[b].t - rows[a].t;
    if (!(dt > 0.0)) throw ConfigError("extract_operating_points: time column must increase");
    quiet[k] = std::abs(rows[b].xdot_L - rows[a].xdot_L) / dt <= thr;
  }
  std::vector<OperatingSample> out;
  std::size_t k = 0;
  while (k < n) {
    if (!quiet[k]) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < n && quiet[e + 1]) ++e;
    if (rows[e].t - rows[k].t >= o.min_window - 1e-9) {
      OperatingSample s;
      double fv = 0.0, pe = 0.0;
      const double cnt = static_cast<double>(e - k + 1);
      for (std::size_t i = k; i <= e; ++i) {
        const auto& r = rows[i];
        s.tau_e += r.tau_e;
        s.omega_m += r.omega_m;
        s.F_L += r.F_L;
        s.xdot_L += r.xdot_L;
        s.i_abc += std::hypot(r.i_d, r.i_q);
        fv += r.F_L * r.xdot_L;
        pe += electrical_power(r.v_d, r.v_q, r.i_d, r.i_q);
      }
      s.tau_e /= cnt;
      s.omega_m /= cnt;
      s.F_L /= cnt;
      s.xdot_L /= cnt;
      s.i_abc /= cnt;
      s.eta = pe > 0.0 ? fv / pe : 0.0;
      out.push_back(s);
    }
    k = e + 1;
  }
  return out;
}

inline std::vector<TraceRow> trace_from_csv(const io::CsvTable& t) {
  const int c_t = t.column("t"), c_id = t.column("i_d"), c_iq = t.column("i_q"), c_w = t.column("omega_m"),
            c_x = t.column("x_L"), c_v = t.column("xdot_L"), c_tau = t.column("tau_e"), c_F = t.column("F_L"),
            c_vd = t.column("v_d"), c_vq = t.column("v_q");
  std::vector<TraceRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows)
    rows.push_back({r[static_cast<std::size_t>(c_t)], r[static_cast<std::size_t>(c_id)],
                    r[static_cast<std::size_t>(c_iq)], r[static_cast<std::size_t>(c_w)],
                    r[static_cast<std::size_t>(c_x)], r[static_cast<std::size_t>(c_v)],
                    r[static_cast<std::size_t>(c_tau)], r[static_cast<std::size_t>(c_F)],
                    r[static_cast<std::size_t>(c_vd)], r[static_cast<std::size_t>(c_vq)]});
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic testbed

struct MeasurementNoise {
  double F_L = 0.0, xdot_L = 0.0, eta = 0.0, i_abc = 0.0;  // standard deviations
};

/// Physical actuator ("truth") that differs from the nominal analytic model
/// through its friction and winding parameters; measurements carry noise.
struct SyntheticTestbed {
  EmlaConfig nominal;
  EmlaConfig truth;
  MeasurementNoise noise;
  double F_min = 2e3, F_max = 70e3;     // N
  double v_min = 0.005, v_max = 0.07;   // m/s
  dnn::SteadyStateOptions steady;
};

struct TruthScale {
  double mu = 1.0, tau_c = 1.0, f_v = 1.0, r_s = 1.0;
};

inline EmlaConfig scaled_truth(const EmlaConfig& nominal, const TruthScale& s) {
  EmlaConfig t = nominal;
  t.trans.mu *= s.mu;
  t.motor.tau_c *= s.tau_c;
  t.motor.f_v *= s.f_v;
  t.motor.r_s *= s.r_s;
  t.validate();
  return t;
}

struct TestbedSamples {
  std::vector<OperatingSample> clean;     // noise-free truth
  std::vector<OperatingSample> measured;  // with measurement noise
};

/// Random operating points over the force/velocity box, each simulated to steady
/// state on the truth actuator.
inline TestbedSamples generate_testbed_samples(const SyntheticTestbed& tb, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_testbed_samples: n must be >= 1");
  require(tb.F_min >= 0.0 && tb.F_min < tb.F_max && tb.v_min > 0.0 && tb.v_min < tb.v_max,
          "testbed: invalid force/velocity box");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> F(tb.F_min, tb.F_max), v(tb.v_min, tb.v_max);
  std::normal_distribution<double> z(0.0, 1.0);
  TestbedSamples out;
  int attempts = 0;
  while (static_cast<int>(out.clean.size()) < n) {
    if (++attempts > 20 * n) throw NumericalError("generate_testbed_samples: too many unsettled operating points");
    const double Fi = F(rng), vi = v(rng);
    const Vec4 noise(z(rng), z(rng), z(rng), z(rng));
    dnn::SteadyStateResult r;
    try {
      r = dnn::simulate_to_steady_state(tb.truth, Fi, vi, tb.steady);
    } catch (const NumericalError&) {
      continue;
    }
    if (!r.converged) continue;
    OperatingSample s;
    s.tau_e = electromagnetic_torque(r.state.i_d, r.state.i_q, tb.truth.motor);
    s.omega_m = r.state.omega_m;
    s.F_L = Fi;
    s.xdot_L = r.state.xdot_L;
    s.eta = r.eta;
    s.i_abc = std::hypot(r.state.i_d, r.state.i_q);
    out.clean.push_back(s);
    s.F_L += tb.noise.F_L * noise[0];
    s.xdot_L += tb.noise.xdot_L * noise[1];
    s.eta += tb.noise.eta * noise[2];
    s.i_abc += tb.noise.i_abc * noise[3];
    out.measured.push_back(s);
  }
  return out;
}

struct PikMetrics {
  Vec4 rmse = Vec4::Zero();       // against the noise-free truth
  Vec4 range = Vec4::Zero();      // truth range per output
  Vec4 rmse_rel = Vec4::Zero();   // rmse / range
  Vec4 coverage = Vec4::Zero();   // fraction of measured values within +-2 sd_obs
  Vec4 rmse_m2l = Vec4::Zero();   // analytic map alone, for comparison
};

inline PikMetrics evaluate_pik(const PikModel& m, const TestbedSamples& hold_out) {
  const auto n = static_cast<Eigen::Index>(hold_out.clean.size());
  if (n == 0) throw ConfigError("evaluate_pik: empty hold-out set");
  MatX X(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) {
    X(k, 0) = hold_out.measured[static_cast<std::size_t>(k)].tau_e;
    X(k, 1) = hold_out.measured[static_cast<std::size_t>(k)].omega_m;
  }
  const auto p = pik_predict(m, X);
  PikMetrics r;
  Vec4 lo = Vec4::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec4 truth = hold_out.clean[static_cast<std::size_t>(k)].outputs();
    const Vec4 meas = hold_out.measured[static_cast<std::size_t>(k)].outputs();
    const Vec4 mean = p.mean.row(k).transpose();
    const Vec4 base = m2l_outputs(X(k, 0), X(k, 1), m.cfg);
    r.rmse += (mean - truth).array().square().matrix();
    r.rmse_m2l += (base - truth).array().square().matrix();
    for (int q = 0; q < kOutputs; ++q) {
      if (std::abs(meas[q] - mean[q]) <= 2.0 * p.sd_obs(k, q)) r.coverage[q] += 1.0;
      lo[q] = std::min(lo[q], truth[q]);
      hi[q] = std::max(hi[q], truth[q]);
    }
  }
  const double dn = static_cast<double>(n);
  r.rmse = (r.rmse / dn).array().sqrt().matrix();
  r.rmse_m2l = (r.rmse_m2l / dn).array().sqrt().matrix();
  r.coverage /= dn;
  r.range = hi - lo;
  for (int q = 0; q < kOutputs; ++q) r.rmse_rel[q] = r.range[q] > 0.0 ? r.rmse[q] / r.range[q] : 0.0;
  return r;
}

}  // namespace emla::pik
