#include <gtest/gtest.h>

#include "mcast/dsgd.hpp"

using namespace mcast;

namespace {

SystemConfig single_user() {
  SystemConfig c;
  c.num_users = 1;
  c.catalog_size = 1;
  c.arrival_rate = 0.0;
  c.power_levels = {50.0};
  c.channels = {ChannelModel{DiscreteUniform{{1.0}}}};
  return c;
}

double value_at(const Mlp& net, const std::array<double, 3>& r) {
  Eigen::VectorXd x(3);
  x << r[0], r[1], r[2];
  return net.forward(x)(0);
}

}  // namespace

TEST(ObserveFhat, EverySojournIsServiceTime) {
  World w(single_user());
  PowerPolicy full = [](const MdpState&) { return 50.0; };
  for (int i = 0; i < 3; ++i) {
    w.inject(0, 0);
    auto f = observe_fhat(w, full, StrategyParams::loopback(), 1);
    ASSERT_TRUE(f.has_value());
    EXPECT_DOUBLE_EQ(*f, 1.0);
  }
  EXPECT_FALSE(observe_fhat(w, full, StrategyParams::loopback(), 3).has_value());
}

TEST(Dsgd, EmptyWindowReusesPreviousFhat) {
  Dsgd d(DsgdConfig{}, 1);
  d.propose();
  auto first = d.observe(std::nullopt);
  EXPECT_TRUE(std::isnan(first.fhat));
  EXPECT_TRUE(d.memory().empty());
  d.propose();
  d.observe(4.0);
  d.propose();
  auto r = d.observe(std::nullopt);
  EXPECT_EQ(r.fhat, 4.0);
  EXPECT_EQ(d.memory().size(), 2u);
}

TEST(SurrogateGradient, ZeroNetworkGivesZero) {
  Mlp net = Mlp::zeros({3, 32, 16, 1});
  auto g = central_gradient([&](const std::array<double, 3>& r) { return value_at(net, r); },
                            StrategyParams{{0.2, 0.3, 0.5}}, 0.01);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(SurrogateGradient, RecoversPlantedLinearSlope) {
  Rng rng(3);
  Mlp net({3, 32, 16, 1}, rng);
  std::vector<std::array<double, 3>> grid;
  // The whole cube: finite-difference probes leave the simplex.
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; b <= 10; ++b)
      for (int c = 0; c <= 10; ++c) grid.push_back({a / 10.0, b / 10.0, c / 10.0});
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(grid.size())), y(1, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (int k = 0; k < 3; ++k) x(k, static_cast<Eigen::Index>(i)) = grid[i][static_cast<std::size_t>(k)];
    y(0, static_cast<Eigen::Index>(i)) = 2.0 * grid[i][0];
  }
  MlpGradients g;
  for (int it = 0; it < 5000; ++it) {
    net.mse_and_grad(x, y, g);
    net.adam_step(g, 0.003);
  }
  for (auto p : {StrategyParams{{0.3, 0.3, 0.4}}, StrategyParams{{0.5, 0.2, 0.3}}, StrategyParams{{0.2, 0.6, 0.2}}}) {
    auto grad = central_gradient([&](const std::array<double, 3>& r) { return value_at(net, r); }, p, 0.01);
    EXPECT_NEAR(grad[0], 2.0, 0.1);
    EXPECT_NEAR(grad[1], 0.0, 0.1);
    EXPECT_NEAR(grad[2], 0.0, 0.1);
  }
}

TEST(SurrogateGradient, MatchesBackpropInputGradient) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.9);
  for (int n = 0; n < 50; ++n) {
    Mlp net({3, 32, 16, 1}, rng);
    StrategyParams p{{u(rng), u(rng), u(rng)}};
    Eigen::VectorXd x(3);
    x << p.p[0], p.p[1], p.p[2];
    auto exact = net.input_gradient(x, 0);
    auto h1 = central_gradient([&](const std::array<double, 3>& r) { return value_at(net, r); }, p, 1e-2);
    auto h2 = central_gradient([&](const std::array<double, 3>& r) { return value_at(net, r); }, p, 1e-5);
    for (int k = 0; k < 3; ++k) {
      // Piecewise-linear nets: exact unless a probe crosses a kink.
      EXPECT_NEAR(h2[static_cast<std::size_t>(k)], exact(k), 1e-6 * (1.0 + std::abs(exact(k))));
      EXPECT_NEAR(h1[static_cast<std::size_t>(k)], exact(k), 0.5 * (1.0 + std::abs(exact(k))));
    }
  }
}

TEST(Dsgd, RandomPhaseLeavesSurrogateUntrained) {
  DsgdConfig c;
  Dsgd d(c, 5);
  const auto before = d.surrogate().params();
  std::vector<StrategyParams> seen;
  for (int i = 0; i < 100; ++i) {
    d.propose();
    EXPECT_FALSE(d.last_loss().has_value());
    seen.push_back(d.strategy());
    d.observe(1.0 + i);
  }
  EXPECT_EQ(d.surrogate().params(), before);
  EXPECT_EQ(d.surrogate().adam_steps(), 0);
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_NE(seen[i], seen[i - 1]);
  d.propose();
  EXPECT_TRUE(d.last_loss().has_value());
  EXPECT_EQ(d.surrogate().adam_steps(), 1);
}

TEST(Dsgd, FixedPointWithoutNoiseOrGradient) {
  DsgdConfig c;
  c.random_iterations = 1;
  c.noise0 = 0.0;
  c.strategy_rate = Schedule::constant(0.0);
  Dsgd d(c, 6);
  d.propose();
  d.observe(3.0);
  d.propose();
  auto p = d.strategy();
  for (int i = 0; i < 20; ++i) {
    d.observe(3.0);
    d.propose();
    EXPECT_EQ(d.strategy(), p);
  }
}

TEST(Dsgd, MemoryHoldsExecutedPairsInOrder) {
  DsgdConfig c;
  c.memory = 30;
  Dsgd d(c, 7);
  std::vector<StrategySample> executed;
  for (int i = 0; i < 150; ++i) {
    d.propose();
    ASSERT_TRUE(d.strategy().valid(1e-12));
    executed.push_back({d.strategy(), 0.5 * i});
    d.observe(0.5 * i);
  }
  auto mem = d.memory().ordered();
  ASSERT_EQ(mem.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(mem[i].p, executed[120 + i].p);
    EXPECT_EQ(mem[i].fhat, executed[120 + i].fhat);
  }
}

// Noisy quadratic bowl centred at each vertex in place of the simulator.
TEST(Dsgd, PlantedQuadraticConvergesToVertex) {
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      DsgdConfig c;
      c.surrogate_rate = Schedule::constant(0.01);
      c.strategy_rate = Schedule::constant(0.01);
      Dsgd d(c, seed);
      Rng noise(seed + 100);
      std::normal_distribution<double> n(0.0, 0.05);
      for (int i = 0; i < 5000; ++i) {
        d.propose();
        ASSERT_TRUE(d.strategy().valid(1e-12));
        double f = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          double t = (k == v ? 1.0 : 0.0) - d.strategy().p[k];
          f += t * t;
        }
        d.observe(f + n(noise));
      }
      double dist = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        double t = (k == v ? 1.0 : 0.0) - d.strategy().p[k];
        dist += t * t;
      }
      EXPECT_LT(std::sqrt(dist), 0.1) << "vertex " << v << " seed " << seed;
    }
  }
}

TEST(RunDsgd, TraceAndIterationCounts) {
  SystemConfig c;
  c.num_users = 4;
  c.catalog_size = 20;
  c.arrival_rate = 1.0;
  c.power_levels = {7.0};
  c.channels = split_rayleigh(4, 0.1, 1.0);
  auto r = run_dsgd(c, DsgdConfig{}, [](const MdpState&) { return 7.0; }, 1050);
  EXPECT_EQ(r.iterations.size(), 10u);
  EXPECT_EQ(r.trace.rows.size(), 1000u);
  for (const auto& row : r.trace.rows) ASSERT_TRUE(row.strategy.has_value());
  EXPECT_TRUE(r.strategy.valid(1e-12));
}
