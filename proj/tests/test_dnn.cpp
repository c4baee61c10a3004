#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "emla/efficiency_dataset.hpp"
#include "emla/io.hpp"
#include "emla/mlp.hpp"

using namespace emla;
using namespace emla::dnn;

namespace {

std::vector<MotorCatalogEntry> shipped_catalog() {
  return io::load_catalog(std::string(EMLA_DATA_DIR) + "/catalog.json");
}

MlpModel identity_model() {
  MlpModel m;
  m.sizes = {1, 1};
  m.W = {MatX::Identity(1, 1)};
  m.b = {VecX::Zero(1)};
  MatX r(2, 1);
  r << 0.0, 1.0;
  m.x_set = MinMaxNormalizer::fit(r);
  m.y_set = MinMaxNormalizer::fit(r);
  return m;
}

}  // namespace

TEST(MinMax, MapsToUnitInterval) {
  MatX X(3, 2);
  X << 0, 2, 5, 4, 10, 6;
  const auto n = MinMaxNormalizer::fit(X);
  const MatX Xn = n.apply(X);
  EXPECT_DOUBLE_EQ(Xn(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(Xn(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(Xn(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(Xn(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(Xn(2, 1), 1.0);
  EXPECT_FALSE(n.any_constant());
}

TEST(MinMax, RoundTrip) {
  std::mt19937_64 g(5);
  std::normal_distribution<double> d(0.0, 1e3);
  MatX X(50, 8);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = d(g);
  const auto n = MinMaxNormalizer::fit(X);
  EXPECT_LT((n.invert(n.apply(X)) - X).cwiseAbs().maxCoeff(), 1e-12 * X.cwiseAbs().maxCoeff());
}

TEST(MinMax, ConstantColumnFlagged) {
  MatX X(4, 2);
  X << 1, 3, 2, 3, 3, 3, 4, 3;
  const auto n = MinMaxNormalizer::fit(X);
  EXPECT_TRUE(n.any_constant());
  EXPECT_TRUE(n.constant[1]);
  EXPECT_EQ(n.apply(X).col(1).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(n.invert(n.apply(X)).col(1), X.col(1));
  EXPECT_THROW(MinMaxNormalizer::fit(MatX::Ones(1, 3)), ConfigError);
}

TEST(Mlp, ClampsOutput) {
  const auto m = identity_model();
  VecX x(1);
  x << 1.07;
  EXPECT_NEAR(m.predict_raw(MatX(x.transpose()))[0], 1.07, 1e-12);
  EXPECT_EQ(m.predict(x), 1.0);
  x << -0.2;
  EXPECT_EQ(m.predict(x), 0.0);
  x << 0.4;
  EXPECT_NEAR(m.predict(x), 0.4, 1e-12);
}

TEST(Mlp, DimensionMismatchThrows) {
  const auto m = identity_model();
  EXPECT_THROW(m.predict(VecX::Zero(3)), ConfigError);
  EXPECT_THROW(m.predict_batch(MatX::Zero(4, 2)), ConfigError);
}

TEST(Mlp, RejectsTooFewSamples) {
  EXPECT_THROW(train_mlp(MatX::Random(50, 3), VecX::Random(50), TrainOptions{}), ConfigError);
}

class LinearTarget : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::mt19937_64 g(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    X = MatX(1500, 4);
    y = VecX(1500);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) X(i, j) = u(g) * (j + 1);
      y[i] = 0.1 + 0.2 * X(i, 0) + 0.05 * X(i, 1) - 0.03 * X(i, 2) + 0.01 * X(i, 3);
    }
    opt.max_epochs = 150;
    opt.seed = 3;
    model = train_mlp(X, y, opt, &report);
  }
  static inline MatX X;
  static inline VecX y;
  static inline TrainOptions opt;
  static inline TrainReport report;
  static inline MlpModel model;
};

TEST_F(LinearTarget, ReachesSmallError) {
  const double range = y.maxCoeff() - y.minCoeff();
  EXPECT_LT(report.test_mae, 0.005 * range);
  EXPECT_EQ(report.n_train + report.n_val + report.n_test, 1500u);
  EXPECT_EQ(report.n_train, 1050u);
}

TEST_F(LinearTarget, TrainingPointWithinThreeMae) {
  for (int i : {0, 10, 200}) EXPECT_LT(std::abs(model.predict(X.row(i).transpose()) - y[i]), 3 * report.train_mae + 1e-12);
}

TEST_F(LinearTarget, SeedDeterminism) {
  TrainReport r2;
  const auto m2 = train_mlp(X, y, opt, &r2);
  ASSERT_EQ(m2.W.size(), model.W.size());
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    EXPECT_EQ(m2.W[l], model.W[l]);
    EXPECT_EQ(m2.b[l], model.b[l]);
  }
  EXPECT_EQ(r2.test_mae, report.test_mae);
}

TEST_F(LinearTarget, JsonRoundTrip) {
  const auto m2 = MlpModel::from_json(nlohmann::json::parse(model.to_json().dump()));
  EXPECT_EQ(m2.predict_batch(X), model.predict_batch(X));
  EXPECT_EQ(m2.sizes, (std::vector<int>{4, 64, 32, 16, 4, 1}));
}

TEST_F(LinearTarget, BatchOfTenThousandUnderOneSecond) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatX Q(10000, 4);
  for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = u(g);
  const auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < Q.rows(); ++i) acc += model.predict(Q.row(i).transpose());
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(std::isfinite(acc));
  EXPECT_LT(dt, 1.0);
}

TEST(Mlp, ShuffledLabelsMatchMeanBaseline) {
  std::mt19937_64 g(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatX X(1000, 3);
  VecX y(1000);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) X(i, j) = u(g);
    y[i] = 0.2 + 0.6 * X(i, 0);
  }
  std::vector<double> ys(y.data(), y.data() + y.size());
  std::shuffle(ys.begin(), ys.end(), g);
  const VecX yshuf = Eigen::Map<VecX>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  TrainOptions opt;
  opt.max_epochs = 100;
  opt.patience = 20;
  TrainReport rep;
  train_mlp(X, yshuf, opt, &rep);
  // Mean-baseline MAE for a uniform target of width 0.6 is 0.15.
  const double baseline = (yshuf.array() - yshuf.mean()).abs().mean();
  EXPECT_GT(rep.test_mae, 0.85 * baseline);
  EXPECT_LT(rep.test_mae, 1.25 * baseline);
}

// ---------------------------------------------------------------------------
// Dataset

TEST(Dataset, FeatureLayout) {
  const auto cat = shipped_catalog();
  const VecX x = make_features(cat[2], 1e4, 0.05, 8.0, 0.01);
  ASSERT_EQ(x.size(), 8);
  EXPECT_EQ(x[0], 1e4);
  EXPECT_EQ(x[2], cat[2].P_N);
  EXPECT_EQ(x[6], 8.0);
  EXPECT_EQ(feature_names().size(), 8u);
}

TEST(Dataset, InfeasibleTupleExcluded) {
  const auto cat = shipped_catalog();
  DatasetGrid g;
  g.F = {5e3, 6e4};
  g.v = {0.05};
  g.N_g = {5.0};
  g.rho = {0.01};
  // 60 kN x 0.05 m/s = 3 kW exceeds what the 1.5 kW motor can deliver.
  const auto ds = generate_dataset({cat[0]}, g);
  EXPECT_EQ(ds.X.rows(), 1);
  EXPECT_EQ(ds.X(0, 0), 5e3);
  EXPECT_EQ(ds.skipped_infeasible, 1u);
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    const auto& m = cat[static_cast<std::size_t>(ds.motor[static_cast<std::size_t>(i)])];
    EXPECT_GT(available_power(m, g.transmission(ds.X(i, 6), ds.X(i, 7))), ds.X(i, 0) * ds.X(i, 1));
  }
}

TEST(Dataset, NoFeasibleRowsIsAnError) {
  const auto cat = shipped_catalog();
  DatasetGrid g;
  g.F = {7e4};
  g.v = {0.08};
  g.N_g = {5.0};
  g.rho = {0.01};
  EXPECT_THROW(generate_dataset({cat[0]}, g), ConfigError);
  g.v.clear();
  EXPECT_THROW(generate_dataset({cat[0]}, g), ConfigError);
}

TEST(Dataset, LosslessChainHasUnitEfficiency) {
  auto m = shipped_catalog()[4];
  m.r_s = 1e-9;
  m.tau_c = 0.0;
  m.f_v = 0.0;
  DatasetGrid g;
  g.F = {1e4, 3e4};
  g.v = {0.02, 0.05};
  g.N_g = {4.0};
  g.rho = {0.01};
  g.family.mu = 0.0;
  g.family.eta_stage = 1.0;
  const auto ds = generate_dataset({m}, g);
  ASSERT_EQ(ds.Y.size(), 4);
  for (Eigen::Index i = 0; i < ds.Y.size(); ++i) EXPECT_NEAR(ds.Y[i], 1.0, 1e-4);
}

TEST(Dataset, SimulatedEfficiencyMatchesOperatingPoint) {
  // Including copper loss, the settled efficiency equals the analytic operating point.
  const auto cat = shipped_catalog();
  DatasetGrid g;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uF(5e3, 6e4), uv(0.01, 0.08), uG(3, 20), ul(0.005, 0.025);
  std::uniform_int_distribution<std::size_t> um(0, cat.size() - 1);
  int checked = 0;
  while (checked < 10) {
    const auto& m = cat[um(rng)];
    const double F = uF(rng), v = uv(rng), G = uG(rng), l = ul(rng);
    if (available_power(m, g.transmission(G, l)) <= F * v) continue;
    EmlaConfig cfg{m, g.transmission(G, l), g.M_t};
    const auto r = simulate_to_steady_state(cfg, F, v);
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.eta, steady_operating_point(cfg, F, v).eta, 1e-3);
    EXPECT_NEAR(r.state.xdot_L, v, 1e-3 * v);
    ++checked;
  }
}

TEST(Dataset, SimulatedEfficiencyMatchesM2LWithoutCopperLoss) {
  // The steady-state map ignores winding loss; make it negligible and compare on 20 tuples.
  auto cat = shipped_catalog();
  for (auto& m : cat) m.r_s *= 1e-2;
  DatasetGrid g;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> uF(5e3, 6e4), uv(0.01, 0.08), uG(3, 20), ul(0.005, 0.025);
  std::uniform_int_distribution<std::size_t> um(0, cat.size() - 1);
  int checked = 0;
  while (checked < 20) {
    const auto& m = cat[um(rng)];
    const double F = uF(rng), v = uv(rng), G = uG(rng), l = ul(rng);
    if (available_power(m, g.transmission(G, l)) <= F * v) continue;
    EmlaConfig cfg{m, g.transmission(G, l), g.M_t};
    const auto r = simulate_to_steady_state(cfg, F, v);
    ASSERT_TRUE(r.converged);
    const auto ref = m2l_steady_state(electromagnetic_torque(r.state.i_d, r.state.i_q, m), r.state.omega_m, cfg);
    ASSERT_TRUE(ref.eta_defined);
    EXPECT_NEAR(r.eta / ref.eta, 1.0, 0.02);
    ++checked;
  }
}

TEST(Dataset, ThreadCountDoesNotChangeRows) {
  const auto cat = shipped_catalog();
  DatasetGrid g;
  g.F = {1e4, 4e4};
  g.v = {0.02, 0.06};
  g.N_g = {5.0, 12.0};
  g.rho = {0.01};
  const auto a = generate_dataset({cat[3], cat[6]}, g, {}, 1);
  const auto b = generate_dataset({cat[3], cat[6]}, g, {}, 3);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.Y, b.Y);
}
