#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "mcast/nn.hpp"

using namespace mcast;

namespace {

// Central-difference gradient of the masked or full loss w.r.t. every parameter.
template <class Loss>
std::vector<double> numeric_gradient(Mlp net, Loss loss, double h) {
  auto p = net.params();
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto up = p, dn = p;
    up[i] += h;
    dn[i] -= h;
    net.set_params(up);
    double lu = loss(net);
    net.set_params(dn);
    double ld = loss(net);
    g[i] = (lu - ld) / (2 * h);
  }
  return g;
}

std::vector<double> flatten(const MlpGradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    out.insert(out.end(), g.dw[l].data(), g.dw[l].data() + g.dw[l].size());
    out.insert(out.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
  }
  return out;
}

// Smallest |pre-activation| over hidden units; finite differences are only
// valid when this stays well above the probe step.
double kink_margin(const Mlp& net, const Eigen::MatrixXd& x) {
  double m = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    m = std::min(m, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

}  // namespace

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  auto net = Mlp::zeros({3, 4, 2});
  Eigen::VectorXd x(3);
  x << 1.5, -2.0, 7.0;
  EXPECT_EQ(net.forward(x), Eigen::VectorXd::Zero(2));
}

TEST(Mlp, SingleLayerIdentity) {
  auto net = Mlp::zeros({2, 2});
  net.weight(0) = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd x(2);
  x << 1.0, -2.0;
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, HandEvaluatedTwoLayerNet) {
  // h = relu([1 -1; 2 1] x + [0; -1]), y = [3 -2] h + 0.5
  // x = (1, 2): pre = (-1, 3) -> h = (0, 3) -> y = -6 + 0.5 = -5.5
  auto net = Mlp::zeros({2, 2, 1});
  net.weight(0) << 1, -1, 2, 1;
  net.bias(0) << 0, -1;
  net.weight(1) << 3, -2;
  net.bias(1) << 0.5;
  Eigen::VectorXd x(2);
  x << 1, 2;
  EXPECT_DOUBLE_EQ(net.forward(x)(0), -5.5);
}

TEST(Mlp, ShapeMismatchThrows) {
  auto net = Mlp::zeros({3, 2});
  EXPECT_THROW(net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(2))), std::invalid_argument);
}

TEST(Mlp, PerfectFitHasZeroLossAndGradient) {
  Rng rng(3);
  Mlp net({2, 5, 1}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  Eigen::MatrixXd y = net.forward(x);
  MlpGradients g;
  EXPECT_EQ(net.mse_and_grad(x, y, g), 0.0);
  for (double v : flatten(g)) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, ScalarModelHandGradient) {
  // y = w x, w = 2, batch {(1, 0)}: L = 4, dL/dw = 2 (w - 0) * 1 * 2 = 4.
  auto net = Mlp::zeros({1, 1});
  net.weight(0)(0, 0) = 2.0;
  Eigen::MatrixXd x(1, 1), y(1, 1);
  x << 1.0;
  y << 0.0;
  MlpGradients g;
  EXPECT_DOUBLE_EQ(net.mse_and_grad(x, y, g), 4.0);
  EXPECT_DOUBLE_EQ(g.dw[0](0, 0), 4.0);
}

TEST(Mlp, BackpropMatchesFiniteDifferencesOnRandomNets) {
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 10), depth(1, 3), batch(1, 6);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> sizes{width(rng)};
    int hidden = depth(rng) - 1;
    for (int k = 0; k < hidden; ++k) sizes.push_back(width(rng));
    sizes.push_back(width(rng));
    Mlp net(sizes, rng);
    const int n = batch(rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(sizes.front(), n);
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(sizes.back(), n);
    if (kink_margin(net, x) < 1e-2) continue;
    MlpGradients g;
    net.mse_and_grad(x, y, g);
    auto analytic = flatten(g);
    auto numeric = numeric_gradient(
        net, [&](const Mlp& m) { MlpGradients tmp; return m.mse_and_grad(x, y, tmp); }, 1e-4);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      // Components that vanish analytically are compared absolutely.
      if (std::abs(analytic[i]) < 1e-9) EXPECT_LT(std::abs(numeric[i]), 1e-8);
      else EXPECT_LT(rel_err(analytic[i], numeric[i]), 1e-4) << "trial " << trial << " param " << i;
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Mlp, MaskedLossOnlyTouchesTakenAction) {
  Rng rng(9);
  Mlp net({4, 6, 3}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
  std::vector<int> actions{0, 2, 2, 1, 0};
  Eigen::VectorXd y = Eigen::VectorXd::Random(5);
  MlpGradients g;
  net.masked_mse_and_grad(x, actions, y, g);
  auto analytic = flatten(g);
  auto numeric = numeric_gradient(
      net, [&](const Mlp& m) { MlpGradients t; return m.masked_mse_and_grad(x, actions, y, t); }, 1e-5);
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-6);

  // Single sample with action 1: output-layer rows 0 and 2 get no gradient.
  Eigen::MatrixXd x1 = x.col(0);
  net.masked_mse_and_grad(x1, {1}, Eigen::VectorXd::Constant(1, 10.0), g);
  EXPECT_EQ(g.dw[1].row(0).norm(), 0.0);
  EXPECT_EQ(g.dw[1].row(2).norm(), 0.0);
  EXPECT_GT(g.dw[1].row(1).norm(), 0.0);
}

TEST(Mlp, InputGradientMatchesFiniteDifference) {
  Rng rng(11);
  Mlp net({3, 8, 4, 1}, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  auto g = net.input_gradient(x, 0);
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd up = x, dn = x;
    up(k) += 1e-6;
    dn(k) -= 1e-6;
    EXPECT_NEAR(g(k), (net.forward(up)(0) - net.forward(dn)(0)) / 2e-6, 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  Rng rng(1);
  Mlp net({2, 3, 1}, rng);
  MlpGradients g;
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 3), y = Eigen::MatrixXd::Random(1, 3);
  net.mse_and_grad(x, y, g);
  net.adam_step(g, 0.01);
  double m_before = net.first_moment_w(0).norm();
  auto before = net.params();
  for (auto& w : g.dw) w.setZero();
  for (auto& b : g.db) b.setZero();
  net.adam_step(g, 0.01);
  // m_hat is non-zero, so parameters still move by the stale momentum; with
  // zero gradients from the start nothing moves.
  EXPECT_NEAR(net.first_moment_w(0).norm(), 0.9 * m_before, 1e-12);

  Mlp fresh({2, 3, 1}, rng);
  auto p0 = fresh.params();
  fresh.adam_step(g, 0.01);
  EXPECT_EQ(fresh.params(), p0);
  EXPECT_EQ(fresh.adam_steps(), 1);
  (void)before;
}

TEST(Adam, FirstStepMovesEachParameterByLearningRate) {
  auto net = Mlp::zeros({2, 2});
  MlpGradients g;
  g.dw = {Eigen::MatrixXd::Ones(2, 2)};
  g.db = {Eigen::VectorXd::Ones(2)};
  net.adam_step(g, 0.001);
  for (double p : net.params()) EXPECT_NEAR(p, -0.001, 1e-10);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  auto net = Mlp::zeros({1, 1});
  MlpGradients g;
  g.dw = {Eigen::MatrixXd::Constant(1, 1, 0.3)};
  g.db = {Eigen::VectorXd::Constant(1, -2.0)};
  double prev_w = 0.0;
  for (int k = 0; k < 500; ++k) {
    net.adam_step(g, 0.01);
    double w = net.weight(0)(0, 0);
    EXPECT_LT(w, prev_w);
    EXPECT_NEAR(prev_w - w, 0.01, 1e-6);
    prev_w = w;
  }
  EXPECT_GT(net.bias(0)(0), 0.0);
}

TEST(Adam, TrainingReducesRegressionError) {
  Rng rng(5);
  Mlp net({1, 16, 16, 1}, rng);
  Eigen::MatrixXd x(1, 16), y(1, 16);
  for (int i = 0; i < 16; ++i) {
    x(0, i) = -1.0 + 2.0 * i / 15.0;
    y(0, i) = std::sin(3.0 * x(0, i));
  }
  MlpGradients g;
  double first = net.mse_and_grad(x, y, g);
  for (int k = 0; k < 200; ++k) {
    net.mse_and_grad(x, y, g);
    net.adam_step(g, 0.01);
  }
  double last = net.mse_and_grad(x, y, g);
  EXPECT_LT(last, first / 10.0);
}

TEST(Adam, DeterministicGivenSeedAndData) {
  auto train = [] {
    Rng rng(77);
    Mlp net({3, 5, 2}, rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 4, 0.5), y = Eigen::MatrixXd::Constant(2, 4, -1.0);
    x(1, 2) = -3.0;
    MlpGradients g;
    for (int k = 0; k < 20; ++k) {
      net.mse_and_grad(x, y, g);
      net.adam_step(g, 0.01);
    }
    return net.params();
  };
  EXPECT_EQ(train(), train());
}

TEST(CopyWeights, ValueSemantics) {
  Rng rng(8);
  Mlp src({3, 4, 2}, rng);
  Mlp dst = Mlp::zeros({3, 4, 2});
  dst.copy_weights_from(src);
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  EXPECT_EQ(src.forward(x), dst.forward(x));
  dst.copy_weights_from(src);
  EXPECT_EQ(src.params(), dst.params());

  auto frozen = dst.params();
  MlpGradients g;
  src.mse_and_grad(Eigen::MatrixXd::Random(3, 2), Eigen::MatrixXd::Random(2, 2), g);
  src.adam_step(g, 0.1);
  EXPECT_EQ(dst.params(), frozen);
  EXPECT_EQ(dst.adam_steps(), 0);

  Mlp other = Mlp::zeros({3, 5, 2});
  EXPECT_THROW(other.copy_weights_from(src), std::invalid_argument);
}

TEST(Snapshot, RoundTripIsBitExact) {
  Rng rng(12);
  Mlp net({4, 7, 3}, rng);
  std::stringstream ss;
  net.save(ss);
  // 8 magic + 8 count + 3 sizes + params, all 8 bytes each.
  EXPECT_EQ(ss.str().size(), 8 * (2 + 3 + net.num_params()));
  EXPECT_EQ(ss.str().substr(0, 8), "MCASTMLP");
  auto back = Mlp::load(ss);
  EXPECT_EQ(back.sizes(), net.sizes());
  EXPECT_EQ(back.params(), net.params());

  std::stringstream bad("NOTANMLP........");
  EXPECT_THROW(Mlp::load(bad), std::runtime_error);
}
