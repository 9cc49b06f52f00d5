#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dat/oracle.hpp"
#include "support/flow_oracles.hpp"
#include "support/instances.hpp"

using namespace dat;
using namespace dat::oracle;

TEST(Entropy, Examples) {
  EXPECT_NEAR(entropy(std::vector<double>(8, 1.0 / 8)), std::log(8.0) + 1.0, 1e-14);
  EXPECT_DOUBLE_EQ(entropy(std::vector<double>{0.0, 1.0, 0.0}), 1.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), std::log(2.0) + 1.0, 1e-15);
  EXPECT_THROW(entropy(std::vector<double>{-0.1, 1.1}), Error);
}

TEST(DenseTensor, SizeCaps) {
  EXPECT_THROW(DenseTensor({17, 2}, 0.0), Error);
  EXPECT_THROW(DenseTensor({2, 2, 2, 2, 2}, 0.0), Error);
  EXPECT_NO_THROW(DenseTensor({16, 16, 16, 16}, 0.0));
  try {
    DenseTensor({}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SizeCap);
  }
}

TEST(DenseTensor, ChainCostIsInfiniteOffOrder) {
  const auto c = chain_cost_tensor(4, 0.25, std::vector<double>{1.0, 2.0});
  for (std::size_t f = 0; f < c.size(); ++f) {
    const auto i = c.unravel(f);
    if (i[0] < i[1] && i[1] < i[2]) {
      EXPECT_NEAR(c.values()[f], 1.0 / ((i[1] - i[0]) * 0.25) + 2.0 / ((i[2] - i[1]) * 0.25), 1e-12);
    } else {
      EXPECT_TRUE(std::isinf(c.values()[f]));
    }
  }
}

TEST(DenseSinkhorn, ZeroCostGivesProductCoupling) {
  const std::vector<double> a{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> b{0.25, 0.25, 0.4, 0.1};
  for (double eps : {0.01, 1.0, 10.0}) {
    const auto res = dense_sinkhorn(DenseTensor({4, 4}, 0.0),
                                    {Constraint::equality(0, a), Constraint::equality(1, b)}, eps, 3);
    for (std::size_t f = 0; f < res.plan.size(); ++f) {
      const auto i = res.plan.unravel(f);
      EXPECT_NEAR(res.plan.values()[f], a[i[0]] * b[i[1]], 1e-15);
    }
  }
}

TEST(DenseSinkhorn, EqualityMatchedAfterItsUpdate) {
  std::mt19937_64 rng(2);
  const auto in = dat::testing::random_line_instance(rng, 3, 8, 0.2);
  const auto cost = chain_cost_tensor(8, 1.0 / 8, in.weights);
  const auto res = dense_sinkhorn(cost, dat::testing::oracle_constraints(in), in.epsilon, 5);
  const auto mT = marginal(res.plan, 2);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(mT[k], in.muT[k], 1e-12);
}

TEST(DenseSinkhorn, InactiveCapChangesNothing) {
  std::mt19937_64 rng(8);
  auto in = dat::testing::random_line_instance(rng, 3, 8, 0.5);
  in.caps.clear();
  const auto cost = chain_cost_tensor(8, 1.0 / 8, in.weights);
  const auto free = dense_sinkhorn(cost, dat::testing::oracle_constraints(in), in.epsilon, 20);
  in.caps = {std::vector<double>(8, 10.0)};
  const auto capped = dense_sinkhorn(cost, dat::testing::oracle_constraints(in), in.epsilon, 20);
  for (std::size_t f = 0; f < free.plan.size(); ++f) EXPECT_EQ(free.plan.values()[f], capped.plan.values()[f]);
}

TEST(DenseSinkhorn, UpperBoundClipsAndJointIsExact) {
  std::mt19937_64 rng(4);
  auto in = dat::testing::random_line_instance(rng, 3, 8, 0.3);
  in.caps = {std::vector<double>(8, 0.2)};
  const auto cost = chain_cost_tensor(8, 1.0 / 8, in.weights);
  // cap is the last block, so it holds exactly after the sweep
  std::vector<Constraint> cons{Constraint::equality(0, in.mu0), Constraint::equality(2, in.muT),
                               Constraint::upper_bound(1, in.caps[0])};
  const auto res = dense_sinkhorn(cost, cons, in.epsilon, 10);
  for (double m : marginal(res.plan, 1)) EXPECT_LE(m, 0.2 + 1e-12);

  Matrix joint(8, 8, 0.0);
  joint(0, 5) = 0.5;
  joint(2, 7) = 0.25;
  joint(1, 4) = 0.25;
  const auto jres = dense_sinkhorn(cost, {Constraint::joint_pair(0, 2, joint)}, 0.3, 1);
  const auto pm = pair_marginal(jres.plan, 0, 2);
  for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(pm.data()[k], joint.data()[k], 1e-14);
}

TEST(DenseSinkhorn, UnreachableTarget) {
  const auto cost = chain_cost_tensor(4, 0.25, std::vector<double>{1.0});
  try {
    dense_sinkhorn(cost, {Constraint::equality(0, {0, 0, 0, 1.0}), Constraint::equality(1, {0, 0, 0, 1.0})}, 1.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreachableMass);
  }
}

// Iterates only satisfy the most recent block, so the primal value approaches
// the optimum from below.
TEST(DenseSinkhorn, PrimalObjectiveRisesAcrossSweeps) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = dat::testing::random_line_instance(rng, 2 + trial % 3, 6 + trial % 4, 0.05 + 0.3 * (trial % 4));
    in.caps.clear();
    const auto cost = chain_cost_tensor(in.n_t, 1.0 / in.n_t, in.weights);
    const auto res = dense_sinkhorn(cost, dat::testing::oracle_constraints(in), in.epsilon, 25);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
      const double slack = 1e-12 * std::max(1.0, std::abs(res.objective_trace[i]));
      EXPECT_GE(res.objective_trace[i], res.objective_trace[i - 1] - slack) << "trial " << trial << " sweep " << i;
    }
  }
}

TEST(DenseSinkhorn, EpsilonLimitApproachesLinearProgram) {
  // 8-bin bi-marginal instance with a finite strictly ordered cost
  const std::size_t n = 8;
  std::vector<double> a{0.2, 0.15, 0.25, 0.1, 0.1, 0.1, 0.05, 0.05};
  std::vector<double> b{0.05, 0.1, 0.1, 0.2, 0.1, 0.15, 0.1, 0.2};
  std::vector<std::vector<double>> c(n, std::vector<double>(n));
  DenseTensor cost({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i][j] = 1.0 / (1.0 + double(j) - double(i) + double(n));
      cost.values()[i * n + j] = c[i][j];
    }
  }
  const auto lp = dat::testing::min_cost_transport(a, b, c);
  double lp_value = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lp_value += lp[i][j] * c[i][j];

  // the entropic optimum is within eps * (entropy range) <= eps * 2 log n of the LP
  double previous = std::numeric_limits<double>::infinity();
  for (double eps : {1.0, 0.3, 0.1, 0.03, 0.01}) {
    const auto res = dense_sinkhorn(cost, {Constraint::equality(0, a), Constraint::equality(1, b)}, eps, 5000);
    const double value = transport_cost(cost, res.plan);
    EXPECT_LE(value, previous + 1e-12);
    EXPECT_GE(value, lp_value - 1e-9);
    EXPECT_LE(value - lp_value, eps * 2.0 * std::log(double(n)));
    previous = value;
  }
}
