#pragma once

// Constrained NSGA-II for problems with one optional categorical gene and a
// box-bounded real vector: constrained domination, fast non-dominated sorting,
// crowding distance, SBX crossover, polynomial mutation, knee-point selection
// and two-objective hypervolume.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "emla/common.hpp"

namespace emla::opt {

struct Evaluation {
  VecX f;  // objectives, all minimized
  VecX c;  // constraints, feasible when every entry <= 0
};

struct Individual {
  int index = 0;  // categorical gene, 0 when the problem has none
  VecX x;         // real genes
  VecX f, c;
  double violation = 0.0;  // sum of positive constraint values
  int rank = 0;
  double crowding = 0.0;

  bool feasible() const { return violation <= 0.0; }
};

struct Problem {
  int n_choices = 0;  // size of the categorical gene's range; 0 disables it
  VecX lo, hi;        // real gene bounds
  std::function<Evaluation(int, const VecX&)> evaluate;

  void validate() const {
    require(lo.size() == hi.size() && lo.size() > 0, "nsga2: real bounds must be non-empty and sized alike");
    require((lo.array() < hi.array()).all(), "nsga2: lower bounds must be below upper bounds");
    require(n_choices >= 0, "nsga2: n_choices must be >= 0");
    require(static_cast<bool>(evaluate), "nsga2: missing evaluation function");
  }
};

struct NsgaOptions {
  int pop_size = 60;
  int generations = 120;
  double p_crossover = 0.9;
  double eta_c = 15.0;
  double eta_m = 20.0;
  double p_index_reset = 1.0 / 3.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;  // evaluation workers; results do not depend on this
};

inline double total_violation(const VecX& c) { return c.cwiseMax(0.0).sum(); }

inline bool pareto_dominates(const VecX& a, const VecX& b) {
  return (a.array() <= b.array()).all() && (a.array() < b.array()).any();
}

/// Feasible beats infeasible; among infeasible the smaller violation wins; among
/// feasible, Pareto dominance on the objectives.
inline bool constrained_dominates(const Individual& a, const Individual& b) {
  if (a.feasible() != b.feasible()) return a.feasible();
  if (!a.feasible()) return a.violation < b.violation;
  return pareto_dominates(a.f, b.f);
}

/// Fast non-dominated sort; fills `rank` and returns fronts as index lists.
inline std::vector<std::vector<int>> nondominated_sort(std::vector<Individual>& pop) {
  const int n = static_cast<int>(pop.size());
  std::vector<std::vector<int>> dominated(static_cast<std::size_t>(n));
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> fronts(1);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (constrained_dominates(pop[static_cast<std::size_t>(p)], pop[static_cast<std::size_t>(q)])) {
        dominated[static_cast<std::size_t>(p)].push_back(q);
      } else if (constrained_dominates(pop[static_cast<std::size_t>(q)], pop[static_cast<std::size_t>(p)])) {
        ++count[static_cast<std::size_t>(p)];
      }
    }
    if (count[static_cast<std::size_t>(p)] == 0) {
      pop[static_cast<std::size_t>(p)].rank = 0;
      fronts[0].push_back(p);
    }
  }
  for (std::size_t i = 0; !fronts[i].empty(); ++i) {
    std::vector<int> next;
    for (int p : fronts[i])
      for (int q : dominated[static_cast<std::size_t>(p)])
        if (--count[static_cast<std::size_t>(q)] == 0) {
          pop[static_cast<std::size_t>(q)].rank = static_cast<int>(i + 1);
          next.push_back(q);
        }
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

/// Crowding distance within one front; extremes of each objective are infinite.
inline void crowding_distance(std::vector<Individual>& pop, const std::vector<int>& front) {
  const double inf = std::numeric_limits<double>::infinity();
  for (int i : front) pop[static_cast<std::size_t>(i)].crowding = 0.0;
  if (front.size() <= 2) {
    for (int i : front) pop[static_cast<std::size_t>(i)].crowding = inf;
    return;
  }
  const auto n_obj = pop[static_cast<std::size_t>(front[0])].f.size();
  std::vector<int> order(front);
  for (Eigen::Index k = 0; k < n_obj; ++k) {
    auto fk = [&](int i) { return pop[static_cast<std::size_t>(i)].f[k]; };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fk(a) < fk(b); });
    const double span = fk(order.back()) - fk(order.front());
    pop[static_cast<std::size_t>(order.front())].crowding = inf;
    pop[static_cast<std::size_t>(order.back())].crowding = inf;
    if (!(span > 0.0)) continue;
    for (std::size_t j = 1; j + 1 < order.size(); ++j)
      pop[static_cast<std::size_t>(order[j])].crowding += (fk(order[j + 1]) - fk(order[j - 1])) / span;
  }
}

struct NsgaResult {
  std::vector<Individual> archive;     // non-dominated, de-duplicated
  std::vector<Individual> population;  // final population
  bool any_feasible = false;
  int evaluations = 0;
};

namespace detail {

inline void evaluate_all(const Problem& pr, std::vector<Individual>& pop, unsigned threads) {
  auto work = [&](std::size_t i) {
    auto& ind = pop[i];
    const Evaluation e = pr.evaluate(ind.index, ind.x);
    ind.f = e.f;
    ind.c = e.c;
    ind.violation = total_violation(e.c);
    if (!ind.f.allFinite()) throw NumericalError("nsga2: non-finite objective");
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pop.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < pop.size(); ++i) work(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < pop.size(); i += threads) work(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline bool crowded_less(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

}  // namespace detail

/// Non-dominated members of a set, de-duplicated on (index, objectives) to a
/// relative tolerance of 1e-9.
inline std::vector<Individual> nondominated_subset(std::vector<Individual> pop) {
  if (pop.empty()) return {};
  const auto fronts = nondominated_sort(pop);
  std::vector<Individual> out;
  auto same = [](const VecX& a, const VecX& b) {
    return ((a - b).array().abs() <= 1e-9 * (a.array().abs() + b.array().abs() + 1e-300)).all();
  };
  for (int i : fronts[0]) {
    const auto& c = pop[static_cast<std::size_t>(i)];
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Individual& o) { return o.index == c.index && same(o.f, c.f); });
    if (!dup) out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(), [](const Individual& a, const Individual& b) {
    for (Eigen::Index k = 0; k < a.f.size(); ++k)
      if (a.f[k] != b.f[k]) return a.f[k] < b.f[k];
    return a.index < b.index;
  });
  return out;
}

inline NsgaResult nsga2_run(const Problem& pr, const NsgaOptions& o) {
  pr.validate();
  if (o.pop_size < 8 || o.pop_size % 2 != 0) throw ConfigError("nsga2: pop_size must be even and >= 8");
  if (o.generations < 0) throw ConfigError("nsga2: generations must be >= 0");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto n_real = pr.lo.size();
  const auto N = static_cast<std::size_t>(o.pop_size);
  auto random_index = [&] {
    return pr.n_choices > 0 ? std::uniform_int_distribution<int>(0, pr.n_choices - 1)(rng) : 0;
  };
  NsgaResult res;

  std::vector<Individual> pop(N);
  // Categorical gene starts round-robin so every choice is seeded.
  for (std::size_t k = 0; k < N; ++k) {
    auto& ind = pop[k];
    ind.index = pr.n_choices > 0 ? static_cast<int>(k % static_cast<std::size_t>(pr.n_choices)) : 0;
    ind.x.resize(n_real);
    for (Eigen::Index j = 0; j < n_real; ++j) ind.x[j] = pr.lo[j] + u01(rng) * (pr.hi[j] - pr.lo[j]);
  }
  detail::evaluate_all(pr, pop, o.threads);
  res.evaluations += static_cast<int>(N);
  for (const auto& f : nondominated_sort(pop)) crowding_distance(pop, f);

  auto tournament = [&]() -> const Individual& {
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    const Individual& a = pop[pick(rng)];
    const Individual& b = pop[pick(rng)];
    return detail::crowded_less(b, a) ? b : a;
  };

  auto sbx = [&](double& x1, double& x2, double lo, double hi) {
    if (u01(rng) > 0.5 || std::abs(x1 - x2) < 1e-14) return;
    const double y1 = std::min(x1, x2), y2 = std::max(x1, x2);
    const double r = u01(rng);
    auto child = [&](double beta) {
      const double alpha = 2.0 - std::pow(beta, -(o.eta_c + 1.0));
      return r <= 1.0 / alpha ? std::pow(r * alpha, 1.0 / (o.eta_c + 1.0))
                              : std::pow(1.0 / (2.0 - r * alpha), 1.0 / (o.eta_c + 1.0));
    };
    const double bq1 = child(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
    const double bq2 = child(1.0 + 2.0 * (hi - y2) / (y2 - y1));
    double c1 = std::clamp(0.5 * ((y1 + y2) - bq1 * (y2 - y1)), lo, hi);
    double c2 = std::clamp(0.5 * ((y1 + y2) + bq2 * (y2 - y1)), lo, hi);
    if (u01(rng) < 0.5) std::swap(c1, c2);
    x1 = c1;
    x2 = c2;
  };

  auto poly_mutate = [&](double& x, double lo, double hi) {
    const double d1 = (x - lo) / (hi - lo), d2 = (hi - x) / (hi - lo);
    const double r = u01(rng), p = 1.0 / (o.eta_m + 1.0);
    double dq;
    if (r < 0.5) {
      dq = std::pow(2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, o.eta_m + 1.0), p) - 1.0;
    } else {
      dq = 1.0 - std::pow(2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, o.eta_m + 1.0), p);
    }
    x = std::clamp(x + dq * (hi - lo), lo, hi);
  };

  const double p_mut = 1.0 / static_cast<double>(n_real);
  for (int gen = 0; gen < o.generations; ++gen) {
    std::vector<Individual> kids;
    kids.reserve(N);
    while (kids.size() < N) {
      Individual a = tournament(), b = tournament();
      if (u01(rng) < o.p_crossover) {
        for (Eigen::Index j = 0; j < n_real; ++j) sbx(a.x[j], b.x[j], pr.lo[j], pr.hi[j]);
        if (pr.n_choices > 0 && u01(rng) < 0.5) std::swap(a.index, b.index);
      }
      for (Individual* k : {&a, &b}) {
        for (Eigen::Index j = 0; j < n_real; ++j)
          if (u01(rng) < p_mut) poly_mutate(k->x[j], pr.lo[j], pr.hi[j]);
        if (pr.n_choices > 0 && u01(rng) < o.p_index_reset) k->index = random_index();
        kids.push_back(std::move(*k));
      }
    }
    detail::evaluate_all(pr, kids, o.threads);
    res.evaluations += static_cast<int>(N);

    std::vector<Individual> merged = pop;
    merged.insert(merged.end(), kids.begin(), kids.end());
    const auto fronts = nondominated_sort(merged);
    std::vector<Individual> next;
    next.reserve(N);
    for (const auto& front : fronts) {
      crowding_distance(merged, front);
      if (next.size() + front.size() <= N) {
        for (int i : front) next.push_back(merged[static_cast<std::size_t>(i)]);
      } else {
        std::vector<int> rest(front);
        std::stable_sort(rest.begin(), rest.end(), [&](int x, int y) {
          return merged[static_cast<std::size_t>(x)].crowding > merged[static_cast<std::size_t>(y)].crowding;
        });
        for (std::size_t i = 0; next.size() < N; ++i) next.push_back(merged[static_cast<std::size_t>(rest[i])]);
      }
      if (next.size() == N) break;
    }
    pop = std::move(next);
    for (const auto& f : nondominated_sort(pop)) crowding_distance(pop, f);
  }

  res.population = pop;
  res.archive = nondominated_subset(pop);
  res.any_feasible = std::any_of(pop.begin(), pop.end(), [](const Individual& i) { return i.feasible(); });
  return res;
}

/// Knee point of a two-objective archive: the member furthest below the line
/// through the normalized single-objective optima (0, 1) and (1, 0). Ties go to
/// the lower first objective, then the lower second objective, then the lower index.
inline std::size_t select_knee(const std::vector<Individual>& archive) {
  if (archive.empty()) throw ConfigError("select_knee: empty archive");
  Vec2 ideal = archive[0].f.head<2>(), nadir = ideal;
  for (const auto& a : archive) {
    ideal = ideal.cwiseMin(a.f.head<2>());
    nadir = nadir.cwiseMax(a.f.head<2>());
  }
  const Vec2 span = nadir - ideal;
  auto dist = [&](const Individual& a) {
    Vec2 n;
    for (int k = 0; k < 2; ++k) n[k] = span[k] > 0.0 ? (a.f[k] - ideal[k]) / span[k] : 0.0;
    return (1.0 - n[0] - n[1]) / std::sqrt(2.0);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < archive.size(); ++i) {
    const double di = dist(archive[i]), db = dist(archive[best]);
    const auto& a = archive[i];
    const auto& b = archive[best];
    if (di > db + 1e-12) {
      best = i;
    } else if (std::abs(di - db) <= 1e-12) {
      if (a.f[0] < b.f[0] || (a.f[0] == b.f[0] && (a.f[1] < b.f[1] || (a.f[1] == b.f[1] && a.index < b.index))))
        best = i;
    }
  }
  return best;
}

/// Area dominated by a two-objective point set (minimization) and bounded by `ref`.
inline double hypervolume_2d(std::vector<Vec2> pts, const Vec2& ref) {
  pts.erase(std::remove_if(pts.begin(), pts.end(),
                           [&](const Vec2& p) { return !(p[0] < ref[0] && p[1] < ref[1]); }),
            pts.end());
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  double hv = 0.0, y_prev = ref[1];
  for (const auto& p : pts) {
    if (p[1] >= y_prev) continue;
    hv += (ref[0] - p[0]) * (y_prev - p[1]);
    y_prev = p[1];
  }
  return hv;
}

}  // namespace emla::opt
