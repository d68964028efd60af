#pragma once

// Constrained deep Q-learning for transmit-power control. The power price
// (Lagrange multiplier) is learned by stochastic ascent on the windowed
// average-power violation, on a slower timescale than the Q-network.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "mcast/nn.hpp"
#include "mcast/rl_common.hpp"
#include "mcast/sim.hpp"

namespace mcast {

struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;  // raw delivered count R(S_t, P_t)
  double power = 0.0;   // P_t in watts
  double avg_power = 0.0;  // C_P(S_t); informational
  Eigen::VectorXd next_state;
};

struct AcdqnConfig {
  std::vector<int> hidden{128, 64};
  std::size_t memory = 30000;
  std::size_t batch = 64;
  double gamma = 0.9;
  long target_sync = 100;
  std::size_t power_window = 200;
  Schedule value_rate = Schedule::inverse(0.001, 1e-5);
  Schedule lagrange_rate = Schedule::inverse_loglog(1e-4, 1e-5);
  EpsilonSchedule exploration{};
  double beta0 = 0.05;
  double beta_max = 10.0;
  double gain_scale = 0.0;  // 0: 99th percentile of the gain distribution

  /// Decaying two-timescale steps.
  static AcdqnConfig decaying() { return {}; }

  /// Steps held fixed so the learner can track non-stationary statistics.
  static AcdqnConfig constant_step(double value_rate, double lagrange_rate) {
    AcdqnConfig c;
    c.value_rate = Schedule::constant(value_rate);
    c.lagrange_rate = Schedule::constant(lagrange_rate);
    return c;
  }

  bool operator==(const AcdqnConfig&) const = default;
};

inline double lagrangian_reward(double raw_reward, double power, double beta) { return raw_reward - beta * power; }

/// beta + eta (C_P - P-bar), clipped to [0, beta_max].
inline double lagrange_update(double beta, double avg_power, double limit, double eta, double beta_max = 10.0) {
  return std::clamp(beta + eta * (avg_power - limit), 0.0, beta_max);
}

/// Lowest index among the maxima.
inline int argmax_lowest(const Eigen::VectorXd& q) {
  int best = 0;
  for (Eigen::Index a = 1; a < q.size(); ++a)
    if (q(a) > q(best)) best = static_cast<int>(a);
  return best;
}

/// Epsilon-greedy over the network outputs. Exactly one uniform variate is
/// consumed, plus one index draw when exploring.
inline int select_action(const Mlp& q, const Eigen::VectorXd& x, double eps, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < eps) {
    std::uniform_int_distribution<int> pick(0, q.output_size() - 1);
    return pick(rng);
  }
  return argmax_lowest(q.forward(x));
}

/// Y_i = r_i + gamma max_a Q*(S_{i+1}, a) with r_i = R_i - beta P_i priced at
/// the multiplier passed in; no terminal masking.
inline Eigen::VectorXd dqn_targets(const std::vector<const Transition*>& batch, const Mlp& target, double gamma,
                                   double beta) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd y(n);
  if (n == 0) return y;
  Eigen::MatrixXd next(batch.front()->next_state.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) next.col(i) = batch[static_cast<std::size_t>(i)]->next_state;
  Eigen::MatrixXd q = target.forward(next);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = *batch[static_cast<std::size_t>(i)];
    y(i) = lagrangian_reward(tr.reward, tr.power, beta) + gamma * q.col(i).maxCoeff();
  }
  return y;
}

/// 99th percentile of the pooled per-user gain distribution, by sampling.
inline double gain_percentile99(const std::vector<ChannelModel>& models, std::uint64_t seed) {
  Rng rng = substream(seed, "gain-scale");
  std::vector<double> g;
  const int per_user = 4000;
  g.reserve(models.size() * per_user);
  for (const auto& m : models)
    for (int i = 0; i < per_user; ++i) g.push_back(m.draw(rng));
  auto k = static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(g.size() - 1));
  std::nth_element(g.begin(), g.begin() + k, g.end());
  return g[static_cast<std::size_t>(k)];
}

/// The learner. Call act() on the current state, step the world with the
/// returned power, then feed the outcome to learn().
class Acdqn {
 public:
  Acdqn(AcdqnConfig cfg, const SystemConfig& sys)
      : cfg_(std::move(cfg)),
        levels_(sys.power_levels),
        limit_(sys.avg_power_limit),
        explore_rng_(substream(sys.seed, "explore")),
        replay_rng_(substream(sys.seed, "replay")),
        memory_(cfg_.memory),
        power_avg_(cfg_.power_window),
        beta_(cfg_.beta0) {
    scale_ = cfg_.gain_scale > 0.0 ? cfg_.gain_scale : gain_percentile99(sys.channels, sys.seed);
    std::vector<int> sizes{2 * sys.num_users};
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(static_cast<int>(levels_.size()));
    auto init = substream(sys.seed, "q-init");
    online_ = Mlp(sizes, init);
    target_ = Mlp::zeros(sizes);
    target_.copy_weights_from(online_);
  }

  const AcdqnConfig& config() const { return cfg_; }
  double beta() const { return beta_; }
  long steps() const { return t_; }
  double avg_power() const { return power_avg_.mean(); }
  const Mlp& online() const { return online_; }
  const Mlp& target() const { return target_; }
  const ReplayMemory<Transition>& memory() const { return memory_; }
  const std::vector<double>& power_levels() const { return levels_; }
  double gain_scale() const { return scale_; }
  double limit() const { return limit_; }
  void set_limit(double p) { limit_ = p; }
  std::optional<double> last_loss() const { return last_loss_; }

  /// Gains divided by the scale, then the request flags.
  Eigen::VectorXd encode(const MdpState& s) const {
    const auto l = static_cast<Eigen::Index>(s.gains.size());
    Eigen::VectorXd x(2 * l);
    for (Eigen::Index j = 0; j < l; ++j) {
      const bool req = s.requested[static_cast<std::size_t>(j)] != 0;
      x(j) = req ? s.gains[static_cast<std::size_t>(j)] / scale_ : 0.0;
      x(l + j) = req ? 1.0 : 0.0;
    }
    return x;
  }

  double exploration() const { return cfg_.exploration(t_); }

  int act(const MdpState& s) { return select_action(online_, encode(s), exploration(), explore_rng_); }
  int greedy(const MdpState& s) const { return argmax_lowest(online_.forward(encode(s))); }

  /// Stores the transition, takes one Q step and one multiplier step, and
  /// refreshes the target network every target_sync steps.
  void learn(const StepResult& r, int action) {
    ++t_;
    power_avg_.push(r.power);
    Transition tr;
    tr.state = encode(r.state);
    tr.action = action;
    tr.reward = r.reward;
    tr.power = r.power;
    tr.avg_power = power_avg_.mean();
    tr.next_state = encode(r.next_state);
    memory_.push(std::move(tr));

    last_loss_.reset();
    const double tt = static_cast<double>(t_);
    if (memory_.size() >= cfg_.batch) {
      auto batch = memory_.sample(cfg_.batch, replay_rng_);
      Eigen::VectorXd y = dqn_targets(batch, target_, cfg_.gamma, beta_);
      Eigen::MatrixXd x(batch.front()->state.size(), static_cast<Eigen::Index>(batch.size()));
      std::vector<int> actions(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = batch[i]->state;
        actions[i] = batch[i]->action;
      }
      last_loss_ = online_.masked_mse_and_grad(x, actions, y, grads_);
      online_.adam_step(grads_, cfg_.value_rate(tt));
    }
    beta_ = lagrange_update(beta_, power_avg_.mean(), limit_, cfg_.lagrange_rate(tt), cfg_.beta_max);
    if (t_ % cfg_.target_sync == 0) target_.copy_weights_from(online_);
  }

  /// Greedy policy over a frozen copy of the current online network.
  PowerPolicy greedy_policy() const {
    return [net = online_, levels = levels_, scale = scale_](const MdpState& s) {
      const auto l = static_cast<Eigen::Index>(s.gains.size());
      Eigen::VectorXd x(2 * l);
      for (Eigen::Index j = 0; j < l; ++j) {
        const bool req = s.requested[static_cast<std::size_t>(j)] != 0;
        x(j) = req ? s.gains[static_cast<std::size_t>(j)] / scale : 0.0;
        x(l + j) = req ? 1.0 : 0.0;
      }
      return levels[static_cast<std::size_t>(argmax_lowest(net.forward(x)))];
    };
  }

 private:
  AcdqnConfig cfg_;
  std::vector<double> levels_;
  double limit_;
  Rng explore_rng_;
  Rng replay_rng_;
  ReplayMemory<Transition> memory_;
  WindowedMean power_avg_;
  Mlp online_;
  Mlp target_;
  MlpGradients grads_;
  double beta_;
  double scale_ = 1.0;
  long t_ = 0;
  std::optional<double> last_loss_;
};

struct AcdqnResult {
  PowerPolicy policy;
  SimTrace trace;
  std::vector<double> beta;
  double final_beta = 0.0;
};

/// Online AC-DQN against the simulator under a fixed queueing strategy. Stops
/// after `horizon` transmissions or once sim time reaches `until_s`.
inline AcdqnResult acdqn_train(const SystemConfig& sys, const AcdqnConfig& cfg, const StrategyParams& strategy,
                               long horizon, std::vector<RateSegment> schedule = {},
                               double until_s = std::numeric_limits<double>::infinity()) {
  World world(sys, std::move(schedule), cfg.power_window);
  Acdqn learner(cfg, sys);
  TraceRecorder rec;
  AcdqnResult out;
  out.beta.reserve(static_cast<std::size_t>(std::clamp(horizon, 0L, 1L << 22)));
  for (long t = 0; t < horizon && world.now() < until_s; ++t) {
    int a = learner.act(world.state());
    auto r = world.step(learner.power_levels()[static_cast<std::size_t>(a)], strategy);
    learner.learn(r, a);
    rec.record(r, learner.beta(), strategy);
    out.beta.push_back(learner.beta());
  }
  out.policy = learner.greedy_policy();
  out.final_beta = learner.beta();
  out.trace = rec.take(world);
  return out;
}

}  // namespace mcast
