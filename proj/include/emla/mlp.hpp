#pragma once

// Feedforward regression network: tanh hidden layers, linear output, min-max
// normalization of inputs and target to [-1, 1], mini-batch Adam with early
// stopping on validation MAE.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "emla/common.hpp"

namespace emla::dnn {

/// Column-wise affine map to [-1, 1]. Constant columns map to 0 and are flagged.
struct MinMaxNormalizer {
  VecX min, max;
  std::vector<bool> constant;

  static MinMaxNormalizer fit(const MatX& X) {
    if (X.rows() < 2) throw ConfigError("minmax_normalize: need at least 2 rows");
    MinMaxNormalizer n;
    n.min = X.colwise().minCoeff().transpose();
    n.max = X.colwise().maxCoeff().transpose();
    n.constant.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) n.constant[static_cast<std::size_t>(j)] = !(n.max[j] > n.min[j]);
    return n;
  }

  bool any_constant() const { return std::find(constant.begin(), constant.end(), true) != constant.end(); }

  MatX apply(const MatX& X) const {
    MatX out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (constant[static_cast<std::size_t>(j)]) {
        out.col(j).setZero();
      } else {
        out.col(j) = (2.0 * (X.col(j).array() - min[j]) / (max[j] - min[j]) - 1.0).matrix();
      }
    }
    return out;
  }

  MatX invert(const MatX& Xn) const {
    MatX out(Xn.rows(), Xn.cols());
    for (Eigen::Index j = 0; j < Xn.cols(); ++j) {
      if (constant[static_cast<std::size_t>(j)]) {
        out.col(j).setConstant(min[j]);
      } else {
        out.col(j) = ((Xn.col(j).array() + 1.0) * 0.5 * (max[j] - min[j]) + min[j]).matrix();
      }
    }
    return out;
  }
};

struct TrainOptions {
  std::vector<int> hidden{64, 32, 16, 4};
  double learning_rate = 2e-3;
  double lr_decay = 0.995;  // per epoch
  int batch_size = 32;
  int max_epochs = 600;
  int patience = 60;
  double train_frac = 0.70;
  double val_frac = 0.15;
  std::uint64_t seed = 1;
};

struct TrainReport {
  double train_mae = 0.0;
  double val_mae = 0.0;
  double test_mae = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  bool early_stopped = false;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
};

struct MlpModel {
  std::vector<int> sizes;  // input, hidden..., output
  std::vector<MatX> W;     // W[l] is sizes[l+1] x sizes[l]
  std::vector<VecX> b;
  MinMaxNormalizer x_set, y_set;

  int input_dim() const { return sizes.empty() ? 0 : sizes.front(); }

  /// Forward pass on normalized inputs (one sample per column).
  MatX forward_normalized(const MatX& Xn_cols) const {
    MatX a = Xn_cols;
    for (std::size_t l = 0; l < W.size(); ++l) {
      MatX z = (W[l] * a).colwise() + b[l];
      a = l + 1 < W.size() ? MatX(z.array().tanh().matrix()) : z;
    }
    return a;
  }

  /// Predictions for rows of raw features, denormalized, not clamped.
  VecX predict_raw(const MatX& X) const {
    if (X.cols() != input_dim()) throw ConfigError("predict: feature dimension mismatch");
    const MatX Xn = x_set.apply(X);
    const MatX out = forward_normalized(Xn.transpose());
    return y_set.invert(out.transpose()).col(0);
  }

  /// Efficiency prediction for one feature vector, clamped to [0, 1].
  double predict(const VecX& x) const {
    if (x.size() != input_dim()) throw ConfigError("predict: feature dimension mismatch");
    MatX row = x.transpose();
    return std::clamp(predict_raw(row)[0], 0.0, 1.0);
  }

  VecX predict_batch(const MatX& X) const {
    return predict_raw(X).unaryExpr([](double v) { return std::clamp(v, 0.0, 1.0); });
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sizes"] = sizes;
    j["activation"] = "tanh";
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < W.size(); ++l) {
      std::vector<double> w;
      for (Eigen::Index r = 0; r < W[l].rows(); ++r)
        for (Eigen::Index c = 0; c < W[l].cols(); ++c) w.push_back(W[l](r, c));
      layers.push_back({{"W", w}, {"b", std::vector<double>(b[l].data(), b[l].data() + b[l].size())}});
    }
    j["layers"] = layers;
    auto norm = [](const MinMaxNormalizer& n) {
      return nlohmann::json{{"min", std::vector<double>(n.min.data(), n.min.data() + n.min.size())},
                            {"max", std::vector<double>(n.max.data(), n.max.data() + n.max.size())}};
    };
    j["x_set"] = norm(x_set);
    j["y_set"] = norm(y_set);
    return j;
  }

  static MlpModel from_json(const nlohmann::json& j) {
    MlpModel m;
    try {
      m.sizes = j.at("sizes").get<std::vector<int>>();
      const auto& layers = j.at("layers");
      if (m.sizes.size() < 2 || layers.size() != m.sizes.size() - 1)
        throw ConfigError("mlp json: layer count does not match sizes");
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto w = layers[l].at("W").get<std::vector<double>>();
        const auto bb = layers[l].at("b").get<std::vector<double>>();
        const int rows = m.sizes[l + 1], cols = m.sizes[l];
        if (w.size() != static_cast<std::size_t>(rows * cols) || bb.size() != static_cast<std::size_t>(rows))
          throw ConfigError("mlp json: weight shape mismatch in layer " + std::to_string(l));
        MatX Wl(rows, cols);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) Wl(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        m.W.push_back(Wl);
        m.b.push_back(Eigen::Map<const VecX>(bb.data(), rows));
      }
      auto norm = [](const nlohmann::json& n) {
        MinMaxNormalizer out;
        const auto mn = n.at("min").get<std::vector<double>>();
        const auto mx = n.at("max").get<std::vector<double>>();
        if (mn.size() != mx.size()) throw ConfigError("mlp json: normalizer size mismatch");
        out.min = Eigen::Map<const VecX>(mn.data(), static_cast<Eigen::Index>(mn.size()));
        out.max = Eigen::Map<const VecX>(mx.data(), static_cast<Eigen::Index>(mx.size()));
        for (std::size_t i = 0; i < mn.size(); ++i) out.constant.push_back(!(mx[i] > mn[i]));
        return out;
      };
      m.x_set = norm(j.at("x_set"));
      m.y_set = norm(j.at("y_set"));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("mlp json: ") + e.what());
    }
    if (m.x_set.min.size() != m.sizes.front()) throw ConfigError("mlp json: x_set size mismatch");
    return m;
  }
};

namespace detail {

inline double mae(const MlpModel& m, const MatX& X, const VecX& y) {
  if (X.rows() == 0) return 0.0;
  return (m.predict_batch(X) - y).cwiseAbs().mean();
}

inline MatX take_rows(const MatX& X, const std::vector<std::size_t>& idx) {
  MatX out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline VecX take(const VecX& y, const std::vector<std::size_t>& idx) {
  VecX out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(idx[i])];
  return out;
}

}  // namespace detail

/// Train on (X, y); returns the model at the epoch with the lowest validation MAE.
inline MlpModel train_mlp(const MatX& X, const VecX& y, const TrainOptions& opt, TrainReport* report = nullptr) {
  const auto N = static_cast<std::size_t>(X.rows());
  if (N < 100) throw ConfigError("train_mlp: need at least 100 samples");
  if (static_cast<std::size_t>(y.size()) != N) throw ConfigError("train_mlp: X/y row mismatch");

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::round(opt.train_frac * static_cast<double>(N)));
  const auto n_val = static_cast<std::size_t>(std::round(opt.val_frac * static_cast<double>(N)));
  const std::vector<std::size_t> i_train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> i_val(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                                       perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  const std::vector<std::size_t> i_test(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());

  const MatX Xtr = detail::take_rows(X, i_train), Xva = detail::take_rows(X, i_val), Xte = detail::take_rows(X, i_test);
  const VecX ytr = detail::take(y, i_train), yva = detail::take(y, i_val), yte = detail::take(y, i_test);

  MlpModel m;
  m.x_set = MinMaxNormalizer::fit(Xtr);
  m.y_set = MinMaxNormalizer::fit(MatX(ytr));
  m.sizes.push_back(static_cast<int>(X.cols()));
  for (int h : opt.hidden) m.sizes.push_back(h);
  m.sizes.push_back(1);

  // Glorot-uniform initialization.
  for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    const int fan_in = m.sizes[l], fan_out = m.sizes[l + 1];
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    MatX Wl(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) Wl(r, c) = u(rng);
    m.W.push_back(Wl);
    m.b.push_back(VecX::Zero(fan_out));
  }

  const MatX XnT = m.x_set.apply(Xtr).transpose();  // features x samples
  const VecX yn = m.y_set.apply(MatX(ytr)).col(0);

  const std::size_t L = m.W.size();
  std::vector<MatX> mW(L), vW(L);
  std::vector<VecX> mb(L), vb(L);
  for (std::size_t l = 0; l < L; ++l) {
    mW[l] = MatX::Zero(m.W[l].rows(), m.W[l].cols());
    vW[l] = mW[l];
    mb[l] = VecX::Zero(m.b[l].size());
    vb[l] = mb[l];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  MlpModel best = m;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0, since_best = 0, epoch = 0;
  bool early = false;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  double lr = opt.learning_rate;
  std::vector<MatX> acts(L + 1);

  for (epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(opt.batch_size));
      const auto bs = static_cast<Eigen::Index>(end - start);
      MatX xb(XnT.rows(), bs);
      VecX yb(bs);
      for (Eigen::Index k = 0; k < bs; ++k) {
        const auto idx = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(k)]);
        xb.col(k) = XnT.col(idx);
        yb[k] = yn[idx];
      }
      acts[0] = xb;
      for (std::size_t l = 0; l < L; ++l) {
        MatX z = (m.W[l] * acts[l]).colwise() + m.b[l];
        acts[l + 1] = l + 1 < L ? MatX(z.array().tanh().matrix()) : z;
      }
      // Mean squared error in normalized target units.
      MatX delta = (acts[L].row(0).transpose() - yb).transpose() * (2.0 / static_cast<double>(bs));
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = L; l-- > 0;) {
        const MatX gW = delta * acts[l].transpose();
        const VecX gb = delta.rowwise().sum();
        if (l > 0) delta = ((m.W[l].transpose() * delta).array() * (1.0 - acts[l].array().square())).matrix();
        mW[l] = beta1 * mW[l] + (1 - beta1) * gW;
        vW[l] = beta2 * vW[l] + (1 - beta2) * gW.cwiseAbs2();
        mb[l] = beta1 * mb[l] + (1 - beta1) * gb;
        vb[l] = beta2 * vb[l] + (1 - beta2) * gb.cwiseAbs2();
        m.W[l].array() -= lr * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + eps);
        m.b[l].array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
      }
    }
    lr *= opt.lr_decay;
    const double val = detail::mae(m, Xva.rows() ? Xva : Xtr, Xva.rows() ? yva : ytr);
    if (val < best_val) {
      best_val = val;
      best = m;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      early = true;
      break;
    }
  }

  if (report) {
    report->train_mae = detail::mae(best, Xtr, ytr);
    report->val_mae = detail::mae(best, Xva, yva);
    report->test_mae = detail::mae(best, Xte, yte);
    report->epochs_run = std::min(epoch, opt.max_epochs);
    report->best_epoch = best_epoch;
    report->early_stopped = early;
    report->n_train = n_train;
    report->n_val = n_val;
    report->n_test = i_test.size();
  }
  return best;
}

}  // namespace emla::dnn
