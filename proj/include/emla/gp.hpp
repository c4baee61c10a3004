#pragma once

// Zero-mean Gaussian-process regression with an ARD squared-exponential
// kernel, Cholesky log marginal likelihood with analytic gradient, and
// multi-start BFGS hyperparameter fitting in log space.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emla/common.hpp"

namespace emla::gp {

struct GpHyperparams {
  VecX ell;          // length scale per input dimension
  double sf2 = 1.0;  // signal variance
  double sn2 = 1e-2; // noise variance

  int dim() const { return static_cast<int>(ell.size()); }

  /// [log ell_1..d, log sf2, log sn2]
  VecX to_log() const {
    VecX t(ell.size() + 2);
    t.head(ell.size()) = ell.array().log().matrix();
    t[ell.size()] = std::log(sf2);
    t[ell.size() + 1] = std::log(sn2);
    return t;
  }

  static GpHyperparams from_log(const VecX& t) {
    GpHyperparams h;
    const auto d = t.size() - 2;
    h.ell = t.head(d).array().exp().matrix();
    h.sf2 = std::exp(t[d]);
    h.sn2 = std::exp(t[d + 1]);
    return h;
  }

  void validate() const {
    require(ell.size() > 0 && (ell.array() > 0.0).all() && sf2 > 0.0 && sn2 >= 0.0,
            "gp: hyperparameters must be positive");
  }
};

inline double ard_kernel(const VecX& x, const VecX& xp, const GpHyperparams& hp) {
  return hp.sf2 * std::exp(-0.5 * ((x - xp).array() / hp.ell.array()).square().sum());
}

/// Signal covariance C_ij = k(x_i, x_j) over the rows of X.
inline MatX kernel_matrix(const MatX& X, const GpHyperparams& hp) {
  const auto n = X.rows();
  MatX C(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    C(i, i) = hp.sf2;
    for (Eigen::Index j = 0; j < i; ++j) C(i, j) = C(j, i) = ard_kernel(X.row(i).transpose(), X.row(j).transpose(), hp);
  }
  return C;
}

inline constexpr double kJitterStart = 1e-10;  // times sf2
inline constexpr double kJitterMax = 1e-4;

struct Factor {
  Eigen::LLT<MatX> llt;
  double jitter = 0.0;  // relative to sf2
};

/// Cholesky of C + (sn2 + j sf2) I with j = 0 first, then escalating by 10 from
/// 1e-10 to 1e-4 while the factorization fails.
inline Factor factorize(const MatX& C, const GpHyperparams& hp) {
  Factor f;
  for (double j = 0.0; j <= kJitterMax * 1.0000001; j = j == 0.0 ? kJitterStart : 10.0 * j) {
    MatX K = C;
    K.diagonal().array() += hp.sn2 + j * hp.sf2;
    f.llt.compute(K);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = j;
      return f;
    }
  }
  throw NumericalError("gp: covariance not positive definite after jitter " + std::to_string(kJitterMax) +
                       " sf2 (sf2=" + std::to_string(hp.sf2) + ", sn2=" + std::to_string(hp.sn2) + ")");
}

struct LikelihoodResult {
  double value = 0.0;
  VecX grad;  // d lnL / d log-hyperparameters
  double jitter = 0.0;
};

inline LikelihoodResult log_marginal_likelihood(const MatX& X, const VecX& y, const GpHyperparams& hp,
                                                bool with_grad = true) {
  hp.validate();
  if (X.rows() != y.size() || X.rows() == 0) throw ConfigError("gp: X and y sizes differ or are empty");
  if (X.cols() != hp.dim()) throw ConfigError("gp: length-scale count does not match input dimension");
  const auto n = X.rows();
  const MatX C = kernel_matrix(X, hp);
  const Factor f = factorize(C, hp);
  const VecX alpha = f.llt.solve(y);
  const MatX& L = f.llt.matrixL();
  LikelihoodResult r;
  r.jitter = f.jitter;
  r.value = -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() - 0.5 * n * std::log(kTwoPi);
  if (!with_grad) return r;
  const MatX A = alpha * alpha.transpose() - f.llt.solve(MatX::Identity(n, n));
  const int d = hp.dim();
  r.grad = VecX::Zero(d + 2);
  for (int k = 0; k < d; ++k) {
    double g = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        const double u = (X(i, k) - X(j, k)) / hp.ell[k];
        g += A(i, j) * C(i, j) * u * u;
      }
    r.grad[k] = g;  // symmetric off-diagonal pairs counted once, times 2 x 1/2
  }
  // The jitter scales with sf2, so it belongs to the sf2 derivative.
  r.grad[d] = 0.5 * ((A.array() * C.array()).sum() + f.jitter * hp.sf2 * A.trace());
  r.grad[d + 1] = 0.5 * hp.sn2 * A.trace();
  return r;
}

struct FitOptions {
  int starts = 5;
  int max_iter = 200;
  double grad_tol = 1e-6;
  double log_ell_min = std::log(1e-2), log_ell_max = std::log(1e2);
  double rel_sf2_min = 1e-8, rel_sf2_max = 1e4;   // relative to var(y)
  double rel_sn2_min = 1e-14, rel_sn2_max = 10.0;  // relative to var(y)
  std::uint64_t seed = 1;
};

struct GpModel {
  MatX X;  // training inputs
  VecX y;  // training targets (zero prior mean)
  GpHyperparams hp;
  Eigen::LLT<MatX> llt;
  VecX alpha;  // K^-1 y
  double jitter = 0.0;
  double log_likelihood = 0.0;

  /// Recompute the factor and weights from X, y and hp.
  void refresh() {
    const Factor f = factorize(kernel_matrix(X, hp), hp);
    llt = f.llt;
    jitter = f.jitter;
    alpha = llt.solve(y);
  }

  VecX cross(const VecX& xs) const {
    VecX c(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) c[i] = ard_kernel(X.row(i).transpose(), xs, hp);
    return c;
  }

  double mean(const VecX& xs) const {
    if (xs.size() != X.cols()) throw ConfigError("gp: query dimension mismatch");
    return cross(xs).dot(alpha);
  }

  /// Latent predictive variance k(x*, x*) - c^T K^-1 c, floored at 0.
  double variance(const VecX& xs) const {
    if (xs.size() != X.cols()) throw ConfigError("gp: query dimension mismatch");
    const VecX c = cross(xs);
    const VecX v = llt.matrixL().solve(c);
    return std::max(0.0, hp.sf2 - v.squaredNorm());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ell"] = std::vector<double>(hp.ell.data(), hp.ell.data() + hp.ell.size());
    j["sf2"] = hp.sf2;
    j["sn2"] = hp.sn2;
    j["X"] = nlohmann::json::array();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(X.cols()));
      for (Eigen::Index k = 0; k < X.cols(); ++k) row[static_cast<std::size_t>(k)] = X(i, k);
      j["X"].push_back(row);
    }
    j["y"] = std::vector<double>(y.data(), y.data() + y.size());
    j["alpha"] = std::vector<double>(alpha.data(), alpha.data() + alpha.size());
    j["log_likelihood"] = log_likelihood;
    return j;
  }

  static GpModel from_json(const nlohmann::json& j) {
    GpModel m;
    try {
      const auto ell = j.at("ell").get<std::vector<double>>();
      m.hp.ell = Eigen::Map<const VecX>(ell.data(), static_cast<Eigen::Index>(ell.size()));
      m.hp.sf2 = j.at("sf2").get<double>();
      m.hp.sn2 = j.at("sn2").get<double>();
      const auto rows = j.at("X").get<std::vector<std::vector<double>>>();
      const auto y = j.at("y").get<std::vector<double>>();
      if (rows.empty() || rows.size() != y.size()) throw ConfigError("gp model: X and y sizes differ");
      m.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ell.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != ell.size()) throw ConfigError("gp model: input row width differs from ell");
        for (std::size_t k = 0; k < ell.size(); ++k)
          m.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
      m.y = Eigen::Map<const VecX>(y.data(), static_cast<Eigen::Index>(y.size()));
      m.log_likelihood = j.value("log_likelihood", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("gp model: ") + e.what());
    }
    m.hp.validate();
    m.refresh();
    if (j.contains("alpha")) {
      const auto a = j.at("alpha").get<std::vector<double>>();
      if (a.size() != static_cast<std::size_t>(m.y.size()))
        throw ConfigError("gp model: weight vector length differs from y");
      const VecX stored = Eigen::Map<const VecX>(a.data(), static_cast<Eigen::Index>(a.size()));
      if ((stored - m.alpha).norm() > 1e-6 * (1.0 + m.alpha.norm()))
        throw ConfigError("gp model: stored weights do not match the hyperparameters and data");
    }
    return m;
  }
};

namespace detail {

struct Box {
  VecX lo, hi;
  VecX clamp(const VecX& t) const { return t.cwiseMax(lo).cwiseMin(hi); }
};

// Gradient components that would push a clamped coordinate outside the box are dropped.
inline VecX projected_gradient(const VecX& t, const VecX& g, const Box& b) {
  VecX p = g;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if ((t[i] <= b.lo[i] && g[i] > 0.0) || (t[i] >= b.hi[i] && g[i] < 0.0)) p[i] = 0.0;
  return p;
}

struct Objective {
  const MatX& X;
  const VecX& y;
  // Negative lnL and gradient; +inf when the covariance cannot be factorized.
  double operator()(const VecX& t, VecX& g) const {
    try {
      const auto r = log_marginal_likelihood(X, y, GpHyperparams::from_log(t));
      if (!std::isfinite(r.value) || !r.grad.allFinite()) return std::numeric_limits<double>::infinity();
      g = -r.grad;
      return -r.value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

/// Projected BFGS with Armijo backtracking.
inline VecX bfgs(const Objective& f, VecX t, const Box& box, const FitOptions& o, double& fval) {
  const auto n = t.size();
  t = box.clamp(t);
  VecX g(n);
  fval = f(t, g);
  if (!std::isfinite(fval)) return t;
  MatX H = MatX::Identity(n, n);
  for (int it = 0; it < o.max_iter; ++it) {
    VecX pg = projected_gradient(t, g, box);
    if (pg.lpNorm<Eigen::Infinity>() < o.grad_tol) break;
    VecX dir = -H * pg;
    if (dir.dot(pg) >= 0.0) {
      H.setIdentity();
      dir = -pg;
    }
    double step = 1.0;
    const double max_move = dir.lpNorm<Eigen::Infinity>();
    if (max_move > 3.0) step = 3.0 / max_move;  // at most a factor e^3 per iteration
    VecX t_new, g_new(n);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      t_new = box.clamp(t + step * dir);
      f_new = f(t_new, g_new);
      if (std::isfinite(f_new) && f_new <= fval + 1e-4 * pg.dot(t_new - t)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (H.isIdentity()) break;
      H.setIdentity();
      continue;
    }
    const VecX s = t_new - t, yk = g_new - g;
    const double sy = s.dot(yk);
    if (sy > 1e-12 * s.norm() * yk.norm()) {
      const double rho = 1.0 / sy;
      const MatX I = MatX::Identity(n, n);
      H = (I - rho * s * yk.transpose()) * H * (I - rho * yk * s.transpose()) + rho * s * s.transpose();
    }
    const bool stalled = std::abs(fval - f_new) < 1e-12 * (1.0 + std::abs(fval)) && s.norm() < 1e-10;
    t = t_new;
    g = g_new;
    fval = f_new;
    if (stalled) break;
  }
  return t;
}

}  // namespace detail

struct FitReport {
  int starts_ok = 0;
  std::vector<double> start_values;  // final -lnL per start (inf when the start failed)
};

/// Maximize lnL over log-hyperparameters with multi-start BFGS. The first start is
/// data-driven (ell = input std, sf2 = var(y) / 2, sn2 = var(y) / 2), the others
/// are seeded perturbations of it.
inline GpModel fit_gp(const MatX& X, const VecX& y, const FitOptions& o = {}, FitReport* report = nullptr) {
  if (X.rows() < 4) throw ConfigError("fit_gp: need at least 4 training points");
  if (X.rows() != y.size()) throw ConfigError("fit_gp: X and y sizes differ");
  if (!X.allFinite() || !y.allFinite()) throw ConfigError("fit_gp: non-finite training data");
  const auto d = X.cols();
  const double ym = y.mean();
  const double var_y = (y.array() - ym).square().sum() / static_cast<double>(y.size() - 1);
  const double scale = std::max({var_y, y.squaredNorm() / static_cast<double>(y.size()), 1e-300});

  GpModel m;
  m.X = X;
  m.y = y;
  if (y.squaredNorm() == 0.0) {
    // Nothing to learn: keep the prior and zero weights.
    m.hp.ell = VecX::Ones(d);
    m.hp.sf2 = 1e-12;
    m.hp.sn2 = 1e-12;
    m.refresh();
    if (report) report->starts_ok = 1;
    return m;
  }

  detail::Box box;
  box.lo.resize(d + 2);
  box.hi.resize(d + 2);
  box.lo.head(d).setConstant(o.log_ell_min);
  box.hi.head(d).setConstant(o.log_ell_max);
  box.lo[d] = std::log(o.rel_sf2_min * scale);
  box.hi[d] = std::log(o.rel_sf2_max * scale);
  box.lo[d + 1] = std::log(o.rel_sn2_min * scale);
  box.hi[d + 1] = std::log(o.rel_sn2_max * scale);

  VecX t0(d + 2);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double mu = X.col(k).mean();
    const double sd = std::sqrt((X.col(k).array() - mu).square().sum() / static_cast<double>(X.rows() - 1));
    t0[k] = std::log(sd > 0.0 ? sd : 1.0);
  }
  t0[d] = std::log(0.5 * scale);
  t0[d + 1] = std::log(0.5 * scale);

  const detail::Objective f{X, y};
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> perturb(-std::log(10.0), std::log(10.0));
  double best_val = std::numeric_limits<double>::infinity();
  VecX best;
  FitReport rep;
  for (int s = 0; s < o.starts; ++s) {
    VecX t = t0;
    if (s > 0)
      for (Eigen::Index k = 0; k < t.size(); ++k) t[k] += (k == d + 1 ? 3.0 : 1.0) * perturb(rng);
    double val = std::numeric_limits<double>::infinity();
    const VecX sol = detail::bfgs(f, t, box, o, val);
    rep.start_values.push_back(val);
    if (std::isfinite(val)) {
      ++rep.starts_ok;
      if (val < best_val) {
        best_val = val;
        best = sol;
      }
    }
  }
  if (report) *report = rep;
  if (rep.starts_ok == 0)
    throw NumericalError("fit_gp: all " + std::to_string(o.starts) + " starts failed to factorize the covariance (N=" +
                         std::to_string(X.rows()) + ", var(y)=" + std::to_string(var_y) + ")");
  m.hp = GpHyperparams::from_log(best);
  m.log_likelihood = -best_val;
  m.refresh();
  return m;
}

}  // namespace emla::gp
