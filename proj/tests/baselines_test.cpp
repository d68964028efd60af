#include <gtest/gtest.h>

#include <sstream>

#include "mcast/baselines.hpp"

using namespace mcast;

namespace {

TinyMdpSpec two_state() { return TinyMdpSpec{{0.5, 0.5}, {1.0, 3.0}, {{0.0, 1.0}, {0.0, 0.0}}, {}}; }

// Random spec with up to 4 states and 4 powers, rewards monotone in power.
TinyMdpSpec random_spec(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n(1, 4);
  TinyMdpSpec s;
  const int k = n(rng), a = n(rng);
  double acc = 0.0;
  for (int i = 0; i < a; ++i) s.powers.push_back(acc += 0.1 + u(rng));
  double total = 0.0;
  for (int i = 0; i < k; ++i) total += s.q.emplace_back(0.05 + u(rng));
  for (double& q : s.q) q /= total;
  for (int i = 0; i < k; ++i) {
    std::vector<double> row;
    double c = 0.0;
    for (int j = 0; j < a; ++j) {
      c += u(rng) < 0.5 ? u(rng) : 0.0;
      row.push_back(std::round(c * 4.0) / 4.0);
    }
    s.reward.push_back(row);
  }
  return s;
}

}  // namespace

TEST(LagrangianOracle, SlackConstraintMaximizesReward) {
  TinyMdpSpec s{{0.3, 0.7}, {1.0, 2.0, 3.0}, {{0.0, 2.0, 2.0}, {1.0, 1.0, 3.0}}, {}};
  auto r = lagrangian_oracle(s, 3.0);
  EXPECT_EQ(r.beta, 0.0);
  EXPECT_EQ(r.map, (std::vector<int>{1, 2}));
}

TEST(LagrangianOracle, TightConstraintPicksMinimumPower) {
  TinyMdpSpec s{{0.3, 0.7}, {1.0, 2.0, 3.0}, {{0.0, 2.0, 2.0}, {1.0, 1.0, 3.0}}, {}};
  auto r = lagrangian_oracle(s, 1.0);
  EXPECT_EQ(r.map, (std::vector<int>{0, 0}));
  EXPECT_DOUBLE_EQ(r.avg_power, 1.0);
}

TEST(LagrangianOracle, TwoStateExample) {
  auto r = lagrangian_oracle(two_state(), 2.0);
  EXPECT_EQ(r.map, (std::vector<int>{1, 0}));
  EXPECT_DOUBLE_EQ(r.avg_power, 2.0);
  auto e = exhaustive_optimum(two_state(), 2.0);
  EXPECT_EQ(e.map, r.map);
}

TEST(LagrangianOracle, InfeasibleAndMalformedSpecs) {
  EXPECT_THROW(lagrangian_oracle(two_state(), 0.5), std::domain_error);
  auto bad = two_state();
  bad.q = {0.5, 0.6};
  EXPECT_THROW(lagrangian_oracle(bad, 2.0), std::invalid_argument);
  bad = two_state();
  bad.powers = {3.0, 1.0};
  EXPECT_THROW(lagrangian_oracle(bad, 2.0), std::invalid_argument);
}

TEST(LagrangianOracle, AveragePowerNonIncreasingInPrice) {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    auto s = random_spec(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double b = 0.0; b <= 10.0; b += 0.01) {
      double p = s.average_power(lagrangian_map(s, b));
      ASSERT_LE(p, prev + 1e-12);
      prev = p;
    }
  }
}

// A deterministic Lagrangian map is optimal among maps using no more power
// than it does. Against the budget itself it can fall short when the optimum
// needs a randomized mix, so the comparison is made at the achieved power.
TEST(LagrangianOracle, OptimalAtItsOwnAveragePower) {
  Rng rng(22);
  for (int i = 0; i < 2000; ++i) {
    auto s = random_spec(rng);
    std::uniform_real_distribution<double> u(s.powers.front(), s.powers.back());
    double limit = u(rng);
    auto o = lagrangian_oracle(s, limit);
    EXPECT_LE(o.avg_power, limit + 1e-12);
    auto e = exhaustive_optimum(s, o.avg_power);
    ASSERT_NEAR(o.objective, e.objective, 1e-9) << "spec " << i;
    EXPECT_LE(o.objective, exhaustive_optimum(s, limit).objective + 1e-12);
  }
}

TEST(LagrangianOracle, CanTrailEnumerationAtTheBudget) {
  // Both states gain 1 from the high power. Half the states can afford it,
  // but any price that makes one state switch makes both switch.
  TinyMdpSpec s{{0.5, 0.5}, {1.0, 3.0}, {{0.0, 1.0}, {0.0, 1.0}}, {}};
  auto o = lagrangian_oracle(s, 2.0);
  auto e = exhaustive_optimum(s, 2.0);
  EXPECT_DOUBLE_EQ(o.objective, 0.0);
  EXPECT_DOUBLE_EQ(e.objective, 0.5);
}

TEST(TabularQ, SingleStateGeometricValue) {
  TinyMdpSpec s{{1.0}, {1.0, 2.0}, {{1.0, 0.0}}, {}};
  TinyEnv env(s, 1);
  TabularQConfig c;
  c.rate_exponent = 0.6;
  auto r = tabular_q(env, c, 100000, 1);
  EXPECT_EQ(r.greedy[0], 0);
  EXPECT_NEAR(r.q[0][0], 10.0, 0.1);
  EXPECT_NEAR(r.q[0][1], 9.0, 0.1);
}

TEST(TabularQ, VisitCountStepStillFindsGreedyAction) {
  TinyMdpSpec s{{1.0}, {1.0, 2.0}, {{1.0, 0.0}}, {}};
  TinyEnv env(s, 2);
  auto r = tabular_q(env, TabularQConfig{}, 20000, 2);
  EXPECT_EQ(r.greedy[0], 0);
  EXPECT_GT(r.q[0][0], r.q[0][1]);
}

TEST(TabularQ, HighPriceMeansMinimumPower) {
  auto spec = tiny_two_user_spec(tiny_two_user_system());
  TinyEnv env(spec, 3);
  TabularQConfig c;
  c.beta = 5.0;
  auto r = tabular_q(env, c, 50000, 3);
  for (int a : r.greedy) EXPECT_EQ(a, 0);
}

TEST(TabularQ, MatchesOracleOnTinyProblem) {
  auto sys = tiny_two_user_system();
  auto spec = tiny_two_user_spec(sys);
  auto o = lagrangian_oracle(spec, sys.avg_power_limit);
  // The oracle map is constant for prices in (1/3, 4/9); learn at a price
  // inside that interval.
  ASSERT_EQ(lagrangian_map(spec, 0.39), o.map);
  TinyEnv env(spec, 5);
  TabularQConfig c;
  c.beta = 0.39;
  auto r = tabular_q(env, c, 200000, 5);
  EXPECT_GE(map_agreement(r.greedy, o.map), 0.9);
}

TEST(TinySpec, EnumerationIsExact) {
  auto sys = tiny_two_user_system();
  auto spec = tiny_two_user_spec(sys);
  ASSERT_EQ(spec.num_states(), 12u);
  ASSERT_EQ(spec.states.size(), 12u);
  double total = 0.0;
  for (double q : spec.q) {
    EXPECT_DOUBLE_EQ(q, 1.0 / 12.0);
    total += q;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (std::size_t k = 0; k < spec.num_states(); ++k) {
    for (std::size_t a = 0; a < spec.num_actions(); ++a) {
      EXPECT_EQ(spec.reward[k][a], reward(spec.states[k], spec.powers[a], sys));
      if (a > 0) EXPECT_GE(spec.reward[k][a], spec.reward[k][a - 1]);
    }
  }
  auto cont = sys;
  cont.channels[0] = ChannelModel{Exponential{1.0}};
  EXPECT_THROW(tiny_two_user_spec(cont), std::invalid_argument);
}

TEST(TinySpec, BudgetBindsStrictly) {
  auto sys = tiny_two_user_system();
  auto spec = tiny_two_user_spec(sys);
  auto o = lagrangian_oracle(spec, sys.avg_power_limit);
  EXPECT_GT(o.beta, 0.0);
  EXPECT_GT(o.avg_power, spec.powers.front());
  EXPECT_LE(o.avg_power, sys.avg_power_limit + 1e-12);
}

TEST(ConstantPower, IgnoresState) {
  auto pol = constant_power_policy(7.0);
  Rng rng(8);
  auto models = split_rayleigh(4, 0.1, 1.0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(pol(MdpState{draw_gains(models, rng), {1, 0, 1, 1}}), 7.0);
  EXPECT_THROW(constant_power_policy(0.0), std::invalid_argument);
}

TEST(OracleCsv, Columns) {
  auto s = two_state();
  std::ostringstream os;
  write_oracle_csv(os, s, lagrangian_oracle(s, 2.0));
  EXPECT_EQ(os.str(), "state,power_w,q,reward\n0,3,0.5,1\n1,1,0.5,0\n");
}
