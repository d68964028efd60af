#pragma once

// Joint power and queueing-strategy learning. AC-DQN runs every
// transmission; the embedded DSGD moves the strategy once per T_approx
// transmissions, using the sojourns delivered during that block.

#include <ostream>
#include <stdexcept>
#include <vector>

#include "mcast/acdqn.hpp"
#include "mcast/dsgd.hpp"

namespace mcast {

struct IdaConfig {
  AcdqnConfig power = AcdqnConfig::constant_step(0.001, 1e-4);
  DsgdConfig strategy = [] {
    DsgdConfig d;
    d.surrogate_rate = Schedule::constant(0.01);
    d.strategy_rate = Schedule::constant(0.001);
    return d;
  }();

  long t_approx() const { return strategy.window; }
  long s_train() const { return strategy.random_iterations; }

  /// eta1 >= eta2 >= eta3 / T_approx >= eta4 / T_approx at t = 0. The
  /// default rates put eta2 and eta3 / T_approx level, so equality is allowed.
  void validate() const {
    const double ta = static_cast<double>(t_approx());
    if (t_approx() <= 0) throw std::invalid_argument("ida: T_approx must be positive");
    const double e1 = power.value_rate(0), e2 = power.lagrange_rate(0);
    const double e3 = strategy.surrogate_rate(0) / ta, e4 = strategy.strategy_rate(0) / ta;
    if (!(e1 >= e2 && e2 >= e3 && e3 >= e4)) throw std::invalid_argument("ida: step sizes violate timescale ordering");
  }

  bool operator==(const IdaConfig&) const = default;
};

struct IdaResult {
  StrategyParams strategy;
  PowerPolicy policy;
  SimTrace trace;
  std::vector<DsgdRecord> ticks;
  double final_beta = 0.0;
};

/// Runs IDA for `horizon` transmissions. Each tick pairs f-hat with the
/// strategy that produced it before the next strategy is proposed.
inline IdaResult ida_train(const SystemConfig& sys, const IdaConfig& cfg, long horizon,
                           std::vector<RateSegment> schedule = {}) {
  cfg.validate();
  World world(sys, std::move(schedule), cfg.power.power_window);
  Acdqn learner(cfg.power, sys);
  Dsgd dsgd(cfg.strategy, sys.seed);
  TraceRecorder rec;
  IdaResult out;

  dsgd.propose();
  double sum = 0.0;
  std::size_t n = 0;
  for (long t = 1; t <= horizon; ++t) {
    const StrategyParams p = dsgd.strategy();
    int a = learner.act(world.state());
    auto r = world.step(learner.power_levels()[static_cast<std::size_t>(a)], p);
    learner.learn(r, a);
    for (const auto& d : r.deliveries) sum += d.sojourn();
    n += r.deliveries.size();
    rec.record(r, learner.beta(), p);

    if (t % cfg.t_approx() == 0) {
      std::optional<double> fhat;
      if (n > 0) fhat = sum / static_cast<double>(n);
      out.ticks.push_back(dsgd.observe(fhat));
      sum = 0.0;
      n = 0;
      dsgd.propose();
    }
  }
  out.strategy = dsgd.strategy();
  out.policy = learner.greedy_policy();
  out.final_beta = learner.beta();
  out.trace = rec.take(world);
  return out;
}

}  // namespace mcast
