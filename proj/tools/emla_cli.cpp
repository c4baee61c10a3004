// emla: command-line front end for simulation, surrogate training, sizing and control.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emla/control.hpp"
#include "emla/efficiency_dataset.hpp"
#include "emla/io.hpp"
#include "emla/mlp.hpp"
#include "emla/pik.hpp"
#include "emla/simulate.hpp"
#include "emla/sizing.hpp"
#include "manifest.hpp"
#include "schema_check.hpp"

#ifndef EMLA_SCHEMA_DIR
#define EMLA_SCHEMA_DIR "schemas"
#endif

namespace fs = std::filesystem;
using emla::io::json;

namespace emla::cli {
namespace {

struct Options {
  std::string config, out = ".", mode, pik, schema;
  std::optional<std::uint64_t> seed;
};

std::string dir_of(const std::string& path) {
  const auto p = fs::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

/// Relative paths inside a config resolve against the config's directory.
std::string resolve(const std::string& base_file, const std::string& rel) {
  if (rel.empty() || fs::path(rel).is_absolute()) return rel;
  return (fs::path(dir_of(base_file)) / rel).lexically_normal().string();
}

std::string require_path(const json& j, const std::string& key, const std::string& cfg_path) {
  const auto p = resolve(cfg_path, io::get<std::string>(j, key, cfg_path));
  if (!fs::exists(p)) throw ConfigError(cfg_path + ": " + key + " \"" + p + "\" does not exist");
  return p;
}

void prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("--out: cannot create directory " + out);
  const auto probe = fs::path(out) / ".emla_write_probe";
  io::write_text(probe.string(), "");
  fs::remove(probe, ec);
}

std::string out_file(const Options& o, const std::string& name) { return (fs::path(o.out) / name).string(); }

void write_json(const Options& o, const std::string& name, json j, const RunManifest& m) {
  j["manifest"] = m.stamp();
  io::write_text(out_file(o, name), j.dump(2) + "\n");
}

void write_csv(const Options& o, const std::string& name, const std::string& body, const RunManifest& m) {
  io::write_text(out_file(o, name), m.csv_comment() + body);
}

RunManifest start_manifest(const std::string& sub, const Options& o, std::uint64_t seed) {
  RunManifest m;
  m.subcommand = sub;
  m.seed = seed;
  m.out_dir = o.out;
  m.add_input("config", o.config);
  return m;
}

void finish_manifest(const Options& o, RunManifest& m) {
  io::write_text(out_file(o, "manifest.json"), m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// sim-emla

int cmd_sim_emla(const Options& o) {
  const auto spec = sim::sim_from_json(io::read_json(o.config));
  auto m = start_manifest("sim-emla", o, o.seed.value_or(0));
  m.seal();
  prepare_out(o.out);
  const auto r = sim::simulate(spec);
  write_csv(o, "trace.csv", sim::sim_csv(r), m);
  const auto& last = r.trace.back();
  json s{{"t_end_s", last.t},
         {"x_L_m", last.x_L},
         {"xdot_L_m_s", last.xdot_L},
         {"i_d_A", last.i_d},
         {"i_q_A", last.i_q},
         {"rows", r.trace.size()},
         {"energy", r.energy.to_json()}};
  write_json(o, "summary.json", s, m);
  finish_manifest(o, m);
  std::printf("sim-emla: %zu rows, t_end %.6g s, energy balance residual %.3e of input\n", r.trace.size(), last.t,
              r.energy.balance_rel());
  return 0;
}

// ---------------------------------------------------------------------------
// gen-dataset / train-dnn

struct DnnConfig {
  std::string catalog_path, dataset_path;
  dnn::DatasetGrid grid;
  dnn::SteadyStateOptions steady;
  dnn::TrainOptions train;
  unsigned threads = 0;
};

DnnConfig dnn_config(const std::string& path) {
  const auto j = io::read_json(path);
  const std::string w = path;
  DnnConfig c;
  c.catalog_path = require_path(j, "catalog", path);
  if (j.contains("dataset")) c.dataset_path = require_path(j, "dataset", path);
  const auto g = io::get<json>(j, "grid", w);
  c.grid.F = io::get<std::vector<double>>(g, "F_N", w + ".grid");
  c.grid.v = io::get<std::vector<double>>(g, "xdot_m_s", w + ".grid");
  c.grid.N_g = io::get<std::vector<double>>(g, "N_g", w + ".grid");
  c.grid.rho = io::get<std::vector<double>>(g, "rho_m", w + ".grid");
  c.grid.M_t = io::get_or(g, "M_t", c.grid.M_t, w + ".grid");
  if (g.contains("family")) c.grid.family = sizing::family_from_json(g["family"], w + ".grid.family");
  c.threads = io::get_or(j, "threads", 0u, w);
  if (j.contains("train")) {
    const auto& t = j["train"];
    const std::string wt = w + ".train";
    c.train.hidden = io::get_or(t, "hidden", c.train.hidden, wt);
    c.train.learning_rate = io::get_or(t, "learning_rate", c.train.learning_rate, wt);
    c.train.lr_decay = io::get_or(t, "lr_decay", c.train.lr_decay, wt);
    c.train.batch_size = io::get_or(t, "batch_size", c.train.batch_size, wt);
    c.train.max_epochs = io::get_or(t, "max_epochs", c.train.max_epochs, wt);
    c.train.patience = io::get_or(t, "patience", c.train.patience, wt);
    c.train.train_frac = io::get_or(t, "train_frac", c.train.train_frac, wt);
    c.train.val_frac = io::get_or(t, "val_frac", c.train.val_frac, wt);
    c.train.seed = io::get_or<std::uint64_t>(t, "seed", c.train.seed, wt);
  }
  require(!c.train.hidden.empty() && c.train.batch_size >= 1 && c.train.max_epochs >= 1 &&
              c.train.learning_rate > 0.0,
          w + ".train: invalid options");
  require(c.train.train_frac > 0.0 && c.train.val_frac >= 0.0 && c.train.train_frac + c.train.val_frac < 1.0,
          w + ".train: fractions must leave a non-empty test split");
  return c;
}

std::vector<std::string> dataset_header() {
  auto h = dnn::feature_names();
  h.insert(h.end(), {"eta", "motor"});
  return h;
}

std::string dataset_csv(const dnn::EffDataset& ds) {
  io::CsvWriter w(dataset_header());
  for (Eigen::Index r = 0; r < ds.X.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < ds.X.cols(); ++k) row.push_back(ds.X(r, k));
    row.push_back(ds.Y[r]);
    row.push_back(static_cast<double>(ds.motor[static_cast<std::size_t>(r)] + 1));
    w.row(row);
  }
  return w.str();
}

dnn::EffDataset dataset_from_csv(const std::string& path) {
  const auto t = io::read_csv(path);
  const auto names = dnn::feature_names();
  dnn::EffDataset ds;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw ConfigError(path + ": dataset has no rows");
  ds.X.resize(n, static_cast<Eigen::Index>(names.size()));
  ds.Y.resize(n);
  std::vector<int> cols;
  for (const auto& name : names) cols.push_back(t.column(name));
  const int eta = t.column("eta");
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    for (std::size_t k = 0; k < cols.size(); ++k)
      ds.X(r, static_cast<Eigen::Index>(k)) = row[static_cast<std::size_t>(cols[k])];
    ds.Y[r] = row[static_cast<std::size_t>(eta)];
  }
  return ds;
}

dnn::EffDataset build_dataset(const DnnConfig& c) {
  return dnn::generate_dataset(io::load_catalog(c.catalog_path), c.grid, c.steady, c.threads);
}

int cmd_gen_dataset(const Options& o) {
  const auto c = dnn_config(o.config);
  auto m = start_manifest("gen-dataset", o, o.seed.value_or(0));
  m.add_input("catalog", c.catalog_path);
  m.seal();
  prepare_out(o.out);
  const auto ds = build_dataset(c);
  if (ds.X.rows() == 0) throw NumericalError("gen-dataset: every grid tuple was infeasible or unsettled");
  write_csv(o, "dataset.csv", dataset_csv(ds), m);
  finish_manifest(o, m);
  std::printf("gen-dataset: %ld rows (%zu infeasible, %zu unsettled skipped)\n", static_cast<long>(ds.X.rows()),
              ds.skipped_infeasible, ds.skipped_unsettled);
  return 0;
}

int cmd_train_dnn(const Options& o) {
  auto c = dnn_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  auto m = start_manifest("train-dnn", o, c.train.seed);
  m.add_input("catalog", c.catalog_path);
  if (!c.dataset_path.empty()) m.add_input("dataset", c.dataset_path);
  m.seal();
  prepare_out(o.out);
  const auto ds = c.dataset_path.empty() ? build_dataset(c) : dataset_from_csv(c.dataset_path);
  if (ds.X.rows() < 20) throw ConfigError("train-dnn: need at least 20 dataset rows, got " +
                                          std::to_string(ds.X.rows()));
  dnn::TrainReport rep;
  const auto model = dnn::train_mlp(ds.X, ds.Y, c.train, &rep);
  write_json(o, "efficiency_model.json", model.to_json(), m);
  json metrics{{"rows", ds.X.rows()},
               {"train_mae_pp", 100.0 * rep.train_mae},
               {"val_mae_pp", 100.0 * rep.val_mae},
               {"test_mae_pp", 100.0 * rep.test_mae},
               {"epochs_run", rep.epochs_run},
               {"best_epoch", rep.best_epoch},
               {"early_stopped", rep.early_stopped}};
  write_json(o, "metrics.json", metrics, m);
  finish_manifest(o, m);
  std::printf("train-dnn: %ld rows, test MAE %.3f pp after %d epochs\n", static_cast<long>(ds.X.rows()),
              100.0 * rep.test_mae, rep.epochs_run);
  return 0;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const Options& o) {
  const auto j = io::read_json(o.config);
  auto study = sizing::study_from_json(j);
  if (o.seed) study.nsga.seed = *o.seed;
  const auto catalog_path = require_path(j, "catalog", o.config);
  const auto chain_path = require_path(j, "chain", o.config);
  const auto model_path = resolve(o.config, io::get<std::string>(j, "model", o.config));
  if (!fs::exists(model_path))
    throw ConfigError("optimize: efficiency model \"" + model_path +
                      "\" not found; train one with `emla train-dnn --config data/dnn.json --out <dir>`"
                      " and point the study's \"model\" key at it");
  auto m = start_manifest("optimize", o, study.nsga.seed);
  m.add_input("catalog", catalog_path);
  m.add_input("chain", chain_path);
  m.add_input("model", model_path);
  m.seal();
  prepare_out(o.out);
  const auto catalog = io::load_catalog(catalog_path);
  const auto chain = io::load_chain(chain_path);
  const auto model = dnn::MlpModel::from_json(io::read_json(model_path));
  const auto cells = sizing::sweep_study(study, chain, catalog, model);
  write_csv(o, "pareto.csv", sizing::pareto_csv(cells), m);
  write_csv(o, "config_grid.csv", sizing::config_grid_csv(cells), m);
  write_csv(o, "efficiency_grid.csv", sizing::efficiency_grid_csv(cells), m);
  const auto tr = sizing::check_trends(cells, study.payloads.size(), study.durations.size());
  json cj = json::array();
  std::size_t failed = 0;
  for (const auto& c : cells) {
    if (!c.ok) {
      ++failed;
      cj.push_back({{"payload_kg", c.payload}, {"duration_s", c.duration}, {"error", c.error}});
    }
  }
  json t{{"ratio_nondecreasing_with_duration", tr.ratio_nondecreasing_with_duration},
         {"shortest_duration_lowest_ratio", tr.shortest_duration_lowest_ratio},
         {"motor_steps_up_with_payload", tr.motor_steps_up_with_payload},
         {"all", tr.all()},
         {"notes", tr.notes},
         {"failed_cells", cj}};
  write_json(o, "trends.json", t, m);
  finish_manifest(o, m);
  std::printf("optimize: %zu cells, %zu failed, trends %s\n", cells.size(), failed, tr.all() ? "hold" : "violated");
  for (const auto& n : tr.notes) std::printf("  %s\n", n.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-pik

json vec4_json(const pik::Vec4& v) {
  json j;
  for (int q = 0; q < pik::kOutputs; ++q) j[pik::output_names()[static_cast<std::size_t>(q)]] = v[q];
  return j;
}

int cmd_train_pik(const Options& o) {
  const auto j = io::read_json(o.config);
  auto spec = ctrl::testbed_from_json(j, dir_of(o.config));
  if (o.seed) spec.train_seed = *o.seed;
  auto m = start_manifest("train-pik", o, spec.train_seed);
  m.add_input("chain", resolve(o.config, io::get<std::string>(j, "chain", o.config)));
  std::vector<std::string> traces;
  if (j["pik"].contains("traces"))
    for (const auto& p : io::get<std::vector<std::string>>(j["pik"], "traces", "testbed.pik")) {
      traces.push_back(resolve(o.config, p));
      m.add_input("trace", traces.back());
    }
  m.seal();
  prepare_out(o.out);

  auto train = pik::generate_testbed_samples(spec.campaign, spec.n_train, spec.train_seed);
  std::size_t from_traces = 0;
  for (const auto& p : traces) {
    const auto pts = pik::extract_operating_points(pik::trace_from_csv(io::read_csv(p)));
    from_traces += pts.size();
    train.measured.insert(train.measured.end(), pts.begin(), pts.end());
  }
  const auto hold = pik::generate_testbed_samples(spec.campaign, spec.n_holdout, spec.holdout_seed);
  pik::PikTrainReport rep;
  const auto model = pik::train_pik(train.measured, spec.testbed.nominal, spec.fit, pik::kOutputs, &rep);
  const auto met = pik::evaluate_pik(model, hold);
  write_json(o, "gpPIKModel.json", model.to_json(), m);
  json fits = json::array();
  for (std::size_t q = 0; q < pik::kOutputs; ++q) {
    const auto& g = model.gps[q];
    fits.push_back({{"output", pik::output_names()[q]},
                    {"starts_ok", rep.fits[q].starts_ok},
                    {"sf2", g.hp.sf2},
                    {"sn2", g.hp.sn2},
                    {"ell", std::vector<double>(g.hp.ell.data(), g.hp.ell.data() + g.hp.ell.size())}});
  }
  json metrics{{"n_train", train.measured.size()},
               {"n_from_traces", from_traces},
               {"n_holdout", hold.clean.size()},
               {"merged_duplicates", rep.merged},
               {"warnings", rep.warnings},
               {"holdout_rmse", vec4_json(met.rmse)},
               {"holdout_rmse_rel_range", vec4_json(met.rmse_rel)},
               {"holdout_coverage_2sd", vec4_json(met.coverage)},
               {"m2l_rmse", vec4_json(met.rmse_m2l)},
               {"fits", fits}};
  write_json(o, "metrics.json", metrics, m);
  finish_manifest(o, m);
  std::printf("train-pik: %zu training points, hold-out rel. RMSE F %.4f v %.4f eta %.4f i %.4f, coverage min %.3f\n",
              train.measured.size(), met.rmse_rel[0], met.rmse_rel[1], met.rmse_rel[2], met.rmse_rel[3],
              met.coverage.minCoeff());
  return 0;
}

// ---------------------------------------------------------------------------
// run-control

std::string control_csv(const std::vector<ctrl::ControlTraceRow>& rows) {
  io::CsvWriter w(ctrl::control_trace_header());
  for (const auto& r : rows)
    w.row({r.t, r.x_ref, r.x, r.xdot_ref, r.xdot, r.F_Lr, r.F_emulated, r.F_pred, r.v_d, r.v_q});
  return w.str();
}

int cmd_run_control(const Options& o) {
  const auto j = io::read_json(o.config);
  auto set = ctrl::scenario_from_json(j);
  if (o.seed) set.base.seed = *o.seed;
  if (!o.mode.empty()) set.modes = {ctrl::mode_from_string(o.mode)};
  const auto testbed_path = require_path(j, "testbed", o.config);
  bool needs_pik = false;
  for (auto md : set.modes) needs_pik = needs_pik || md == ctrl::SensorMode::kSensorless;
  std::string pik_path = o.pik;
  if (pik_path.empty() && j.contains("pik_model")) pik_path = resolve(o.config, j["pik_model"].get<std::string>());
  if (needs_pik && pik_path.empty())
    throw ConfigError("run-control: SL mode needs a surrogate; run `emla train-pik` and pass --pik <gpPIKModel.json>");
  if (needs_pik && !fs::exists(pik_path))
    throw ConfigError("run-control: surrogate \"" + pik_path + "\" not found; run `emla train-pik` first");

  auto m = start_manifest("run-control", o, set.base.seed);
  if (set.modes.size() == 1) m.mode = ctrl::mode_name(set.modes.front());
  const auto tbj = io::read_json(testbed_path);
  m.add_input("testbed", testbed_path);
  m.add_input("chain", resolve(testbed_path, io::get<std::string>(tbj, "chain", testbed_path)));
  if (needs_pik) m.add_input("pik", pik_path);
  m.seal();
  prepare_out(o.out);

  const auto spec = ctrl::testbed_from_json(tbj, dir_of(testbed_path));
  std::optional<pik::PikModel> model;
  if (needs_pik) model = pik::PikModel::from_json(io::read_json(pik_path));

  std::vector<ctrl::TrackingReport> rows;
  json runs = json::array();
  const bool single = set.payloads.size() == 1 && set.modes.size() == 1;
  for (double p : set.payloads) {
    for (auto md : set.modes) {
      auto sc = set.base;
      sc.payload = p;
      sc.mode = md;
      const auto res = ctrl::run_experiment(spec.testbed, sc, model ? &*model : nullptr);
      const std::string name =
          single ? "trace.csv" : "trace_" + io::fmt(p) + "kg_" + ctrl::mode_name(md) + ".csv";
      write_csv(o, name, control_csv(res.trace), m);
      rows.push_back(res.report);
      runs.push_back({{"payload_kg", p},
                      {"mode", ctrl::mode_name(md)},
                      {"trace", name},
                      {"theta_within_bounds", res.theta_within_bounds},
                      {"joint_within_limits", res.joint_within_limits},
                      {"q_min_rad", res.q_min},
                      {"q_max_rad", res.q_max}});
      std::printf("run-control: %g kg %s position RMS %.4f mm max %.4f mm%s\n", p, ctrl::mode_name(md).c_str(),
                  res.report.position_mm.rms, res.report.position_mm.max, res.report.diverged ? " DIVERGED" : "");
    }
  }
  const auto checks = ctrl::check_sweep(rows);
  auto rep = ctrl::sweep_report_json(rows, checks);
  rep["runs"] = runs;
  write_json(o, "report.json", rep, m);
  finish_manifest(o, m);
  return checks.no_divergence ? 0 : 4;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const Options& o) {
  const auto doc = io::read_json(o.config);
  const std::string schema_path =
      o.schema.empty() ? (fs::path(EMLA_SCHEMA_DIR) / "report.schema.json").string() : o.schema;
  const auto errs = validate_schema(doc, io::read_json(schema_path));
  if (!errs.empty()) {
    for (const auto& e : errs) std::fprintf(stderr, "report: %s%s\n", o.config.c_str(), e.c_str());
    return 2;
  }
  std::printf("%-12s %-5s %14s %14s %16s %16s\n", "payload [kg]", "mode", "pos RMS [mm]", "pos Max [mm]",
              "vel RMS [mm/s]", "vel Max [mm/s]");
  bool diverged = false;
  for (const auto& r : doc["rows"]) {
    std::printf("%-12g %-5s %14.4f %14.4f %16.4f %16.4f%s\n", r["payload_kg"].get<double>(),
                r["mode"].get<std::string>().c_str(), r["position_rms_mm"].get<double>(),
                r["position_max_mm"].get<double>(), r["velocity_rms_mm_s"].get<double>(),
                r["velocity_max_mm_s"].get<double>(), r["diverged"].get<bool>() ? "  diverged" : "");
    diverged = diverged || r["diverged"].get<bool>();
  }
  const auto& c = doc["checks"];
  std::printf("SL/MF position RMS ratio: %.4f .. %.4f\n", c["sl_mf_ratio_min"].get<double>(),
              c["sl_mf_ratio_max"].get<double>());
  for (const auto& key : {"no_divergence", "rms_below_5mm", "sl_not_better_than_mf", "sl_mf_ratio_below_1_5",
                          "monotone_in_payload"})
    std::printf("  %-24s %s\n", key, c[key].get<bool>() ? "yes" : "no");
  std::printf("manifest %s\n", doc["manifest"]["hash"].get<std::string>().c_str());
  return diverged ? 4 : 0;
}

}  // namespace
}  // namespace emla::cli

int main(int argc, char** argv) {
  using namespace emla::cli;
  CLI::App app{"EMLA sizing, surrogate and control toolkit"};
  app.require_subcommand(1);
  Options o;
  auto add = [&](const std::string& name, const std::string& help, bool mode, bool pik) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", o.config, "Input JSON")->required();
    s->add_option("--out", o.out, "Output directory");
    s->add_option("--seed", o.seed, "Overrides the configured seed");
    if (mode) s->add_option("--mode", o.mode, "Run a single sensing mode")->check(CLI::IsMember({"MF", "SL"}));
    if (pik) s->add_option("--pik", o.pik, "Sensorless surrogate (gpPIKModel.json)");
    return s;
  };
  auto* sim = add("sim-emla", "Simulate one actuator; writes trace.csv and summary.json", false, false);
  auto* gen = add("gen-dataset", "Label a configuration grid by simulation; writes dataset.csv", false, false);
  auto* dnn = add("train-dnn", "Train the efficiency MLP; writes efficiency_model.json and metrics.json", false,
                  false);
  auto* optm = add("optimize", "Payload x duration sizing sweep; writes pareto.csv and the grids", false, false);
  auto* pk = add("train-pik", "Train the sensorless surrogate; writes gpPIKModel.json and metrics.json", false,
                 false);
  auto* rc = add("run-control", "Closed-loop lift runs; writes traces and report.json", true, true);
  auto* rp = add("report", "Validate a control report and print its table", false, false);
  rp->add_option("--schema", o.schema, "Schema file (default: shipped report.schema.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*sim) return cmd_sim_emla(o);
    if (*gen) return cmd_gen_dataset(o);
    if (*dnn) return cmd_train_dnn(o);
    if (*optm) return cmd_optimize(o);
    if (*pk) return cmd_train_pik(o);
    if (*rc) return cmd_run_control(o);
    if (*rp) return cmd_report(o);
  } catch (const emla::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", o.config.c_str(), e.what());
    return 2;
  } catch (const emla::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const emla::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
