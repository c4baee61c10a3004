#include <gtest/gtest.h>

#include <random>

#include "emla/nsga2.hpp"

using namespace emla;
using namespace emla::opt;

namespace {

Individual make(double f0, double f1, double violation = 0.0, int index = 0) {
  Individual i;
  i.index = index;
  i.x = VecX::Zero(1);
  i.f = Vec2(f0, f1);
  i.c = VecX::Constant(1, violation);
  i.violation = violation;
  return i;
}

// Rank by repeatedly peeling the members no remaining member dominates.
std::vector<int> brute_force_ranks(const std::vector<Individual>& pop) {
  std::vector<int> rank(pop.size(), -1);
  int r = 0;
  std::size_t assigned = 0;
  while (assigned < pop.size()) {
    std::vector<std::size_t> layer;
    for (std::size_t p = 0; p < pop.size(); ++p) {
      if (rank[p] >= 0) continue;
      bool dominated = false;
      for (std::size_t q = 0; q < pop.size() && !dominated; ++q)
        dominated = rank[q] < 0 && q != p && constrained_dominates(pop[q], pop[p]);
      if (!dominated) layer.push_back(p);
    }
    for (auto p : layer) rank[p] = r;
    assigned += layer.size();
    ++r;
  }
  return rank;
}

// CONSTR: min (x1, (1 + x2) / x1) with x2 + 9 x1 >= 6 and 9 x1 - x2 >= 1.
Problem constr_problem() {
  Problem p;
  p.lo = Vec2(0.1, 0.0);
  p.hi = Vec2(1.0, 5.0);
  p.evaluate = [](int, const VecX& x) {
    Evaluation e;
    e.f = Vec2(x[0], (1.0 + x[1]) / x[0]);
    e.c = Vec2(6.0 - (x[1] + 9.0 * x[0]), 1.0 - (9.0 * x[0] - x[1]));
    return e;
  };
  return p;
}

}  // namespace

TEST(Domination, FeasibleBeatsInfeasible) {
  EXPECT_TRUE(constrained_dominates(make(5, 5), make(0, 0, 1.0)));
  EXPECT_FALSE(constrained_dominates(make(0, 0, 1.0), make(5, 5)));
  EXPECT_TRUE(constrained_dominates(make(9, 9, 0.5), make(0, 0, 1.0)));
}

TEST(Domination, ParetoAmongFeasible) {
  EXPECT_TRUE(constrained_dominates(make(-0.8, 5e3), make(-0.7, 6e3)));
  EXPECT_FALSE(constrained_dominates(make(-0.8, 6e3), make(-0.7, 5e3)));
  EXPECT_FALSE(constrained_dominates(make(-0.7, 5e3), make(-0.8, 6e3)));
  EXPECT_FALSE(constrained_dominates(make(1, 1), make(1, 1)));
}

TEST(Sort, IdenticalObjectivesFormOneFront) {
  std::vector<Individual> pop(7, make(1.0, 2.0));
  const auto fronts = nondominated_sort(pop);
  ASSERT_EQ(fronts.size(), 1u);
  EXPECT_EQ(fronts[0].size(), 7u);
}

TEST(Sort, HandBuiltSetMatchesBruteForce) {
  std::vector<Individual> pop{make(1, 5), make(2, 3), make(4, 1), make(3, 4), make(5, 5), make(0, 0, 2.0)};
  const auto fronts = nondominated_sort(pop);
  const auto ref = brute_force_ranks(pop);
  for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_EQ(pop[i].rank, ref[i]);
  EXPECT_EQ(pop[0].rank, 0);
  EXPECT_EQ(pop[3].rank, 1);
  EXPECT_EQ(pop[4].rank, 2);
  EXPECT_EQ(pop[5].rank, 3);
  EXPECT_EQ(fronts.size(), 4u);
}

TEST(Sort, RandomPopulationsMatchBruteForce) {
  std::mt19937_64 g(2);
  std::uniform_int_distribution<int> coarse(0, 6);  // coarse grid produces ties
  std::bernoulli_distribution infeasible(0.25);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Individual> pop;
    for (int i = 0; i < 40; ++i)
      pop.push_back(make(coarse(g), coarse(g), infeasible(g) ? 0.5 * coarse(g) + 0.1 : 0.0));
    nondominated_sort(pop);
    const auto ref = brute_force_ranks(pop);
    for (std::size_t i = 0; i < pop.size(); ++i) ASSERT_EQ(pop[i].rank, ref[i]);
  }
}

TEST(Crowding, ExtremesAreInfinite) {
  std::vector<Individual> pop{make(0, 4), make(1, 2), make(2, 1), make(4, 0)};
  crowding_distance(pop, {0, 1, 2, 3});
  EXPECT_TRUE(std::isinf(pop[0].crowding));
  EXPECT_TRUE(std::isinf(pop[3].crowding));
  // Interior: (2 - 0) / 4 + (4 - 1) / 4.
  EXPECT_NEAR(pop[1].crowding, 0.5 + 0.75, 1e-15);
  EXPECT_NEAR(pop[2].crowding, 0.75 + 0.5, 1e-15);
}

TEST(Hypervolume, Rectangles) {
  EXPECT_DOUBLE_EQ(hypervolume_2d({Vec2(1, 1)}, Vec2(2, 2)), 1.0);
  EXPECT_DOUBLE_EQ(hypervolume_2d({Vec2(0, 1), Vec2(1, 0)}, Vec2(2, 2)), 3.0);
  EXPECT_DOUBLE_EQ(hypervolume_2d({Vec2(0, 1), Vec2(1, 0), Vec2(1, 1), Vec2(3, 0)}, Vec2(2, 2)), 3.0);
}

TEST(Knee, SingleMember) {
  EXPECT_EQ(select_knee({make(-0.5, 3e3)}), 0u);
  EXPECT_THROW(select_knee({}), ConfigError);
}

TEST(Knee, SymmetricFrontPicksMiddle) {
  EXPECT_EQ(select_knee({make(0, 10), make(3, 3), make(10, 0)}), 1u);
}

TEST(Knee, TiePrefersHigherEfficiency) {
  // Both interior points sit at the same distance below the extreme line.
  const std::vector<Individual> a{make(-0.9, 10), make(-0.8, 7), make(-0.7, 8), make(-0.5, 5)};
  EXPECT_EQ(select_knee(a), 1u);
  std::vector<Individual> b{make(-0.9, 10), make(-0.7, 6), make(-0.8, 7.5), make(-0.5, 5)};
  // distances: (-0.7,6): 1-0.5-0.2 = 0.3; (-0.8,7.5): 1-0.25-0.5 = 0.25
  EXPECT_EQ(select_knee(b), 1u);
  std::vector<Individual> c{make(-0.9, 10), make(-0.7, 6.0), make(-0.8, 7.25), make(-0.5, 5)};
  // normalized sums 0.5 + 0.2 and 0.25 + 0.45 tie; the higher efficiency (-0.8) wins
  EXPECT_EQ(select_knee(c), 2u);
  std::vector<Individual> d{make(-0.9, 10, 0, 0), make(-0.7, 7, 0, 3), make(-0.7, 7, 0, 1), make(-0.5, 5, 0, 0)};
  EXPECT_EQ(select_knee(d), 2u);
}

TEST(Run, RejectsBadPopulation) {
  NsgaOptions o;
  o.pop_size = 7;
  EXPECT_THROW(nsga2_run(constr_problem(), o), ConfigError);
  o.pop_size = 6;
  EXPECT_THROW(nsga2_run(constr_problem(), o), ConfigError);
}

class ConstrRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    opts.pop_size = 60;
    opts.generations = 100;
    opts.seed = 42;
    result = nsga2_run(constr_problem(), opts);
  }
  static inline NsgaOptions opts;
  static inline NsgaResult result;
};

TEST_F(ConstrRun, HypervolumeNearDenseGridFront) {
  // Reference front from a dense feasible grid.
  const auto pr = constr_problem();
  std::vector<Individual> grid;
  for (int i = 0; i <= 900; ++i)
    for (int j = 0; j <= 500; ++j) {
      const Vec2 x(0.1 + 0.001 * i, 0.01 * j);
      const auto e = pr.evaluate(0, x);
      if (total_violation(e.c) > 0.0) continue;
      grid.push_back(make(e.f[0], e.f[1]));
    }
  const Vec2 ref(1.1, 10.0);
  std::vector<Vec2> dense, found;
  // Feasible points only; the 2-D hypervolume sweep ignores dominated ones.
  for (const auto& g : grid) dense.emplace_back(g.f[0], g.f[1]);
  for (const auto& a : result.archive) found.emplace_back(a.f[0], a.f[1]);
  const double hv_ref = hypervolume_2d(dense, ref), hv = hypervolume_2d(found, ref);
  EXPECT_GT(hv_ref, 0.0);
  EXPECT_GT(hv, 0.95 * hv_ref);
  EXPECT_LT(hv, 1.01 * hv_ref);
}

TEST_F(ConstrRun, ArchiveFeasibleAndMutuallyNondominated) {
  ASSERT_TRUE(result.any_feasible);
  ASSERT_GT(result.archive.size(), 10u);
  for (const auto& a : result.archive) {
    EXPECT_TRUE(a.feasible());
    for (const auto& b : result.archive) EXPECT_FALSE(constrained_dominates(a, b));
  }
  EXPECT_EQ(result.evaluations, 60 * 101);
}

TEST_F(ConstrRun, SeedRepeatableBitForBit) {
  const auto again = nsga2_run(constr_problem(), opts);
  ASSERT_EQ(again.archive.size(), result.archive.size());
  for (std::size_t i = 0; i < again.archive.size(); ++i) {
    EXPECT_EQ(again.archive[i].x, result.archive[i].x);
    EXPECT_EQ(again.archive[i].f, result.archive[i].f);
  }
}

TEST_F(ConstrRun, EvaluationThreadsDoNotChangeResult) {
  auto o = opts;
  o.threads = 3;
  const auto par = nsga2_run(constr_problem(), o);
  ASSERT_EQ(par.archive.size(), result.archive.size());
  for (std::size_t i = 0; i < par.archive.size(); ++i) EXPECT_EQ(par.archive[i].x, result.archive[i].x);
}

TEST(Run, CategoricalGeneAndInfeasibleOutcome) {
  // Any index other than 2 shifts both objectives by a whole unit.
  Problem p;
  p.n_choices = 4;
  p.lo = VecX::Constant(1, 0.0);
  p.hi = VecX::Constant(1, 1.0);
  p.evaluate = [](int i, const VecX& x) {
    Evaluation e;
    e.f = Vec2(x[0] + std::abs(i - 2), 1.0 - x[0] + std::abs(i - 2));
    e.c = VecX::Constant(1, -1.0);
    return e;
  };
  NsgaOptions o;
  o.pop_size = 20;
  o.generations = 60;
  const auto r = nsga2_run(p, o);
  for (const auto& a : r.archive) EXPECT_EQ(a.index, 2);

  p.evaluate = [](int, const VecX& x) {
    Evaluation e;
    e.f = Vec2(x[0], 1.0 - x[0]);
    e.c = VecX::Constant(1, 0.5 + x[0]);  // never feasible, least violation at x = 0
    return e;
  };
  const auto bad = nsga2_run(p, o);
  EXPECT_FALSE(bad.any_feasible);
  ASSERT_FALSE(bad.archive.empty());
  EXPECT_LT(bad.archive[0].x[0], 0.05);
}
