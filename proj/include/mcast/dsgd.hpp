#pragma once

// Surrogate-assisted stochastic gradient descent over the queueing-strategy
// simplex. A small MLP f(p) is fitted online to noisy mean-sojourn
// observations; p moves along finite-difference gradients of the fit.

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "mcast/nn.hpp"
#include "mcast/rl_common.hpp"
#include "mcast/sim.hpp"

namespace mcast {

struct StrategySample {
  StrategyParams p;
  double fhat;
};

struct DsgdConfig {
  std::vector<int> hidden{32, 16};
  std::size_t memory = 1000;
  std::size_t batch = 50;
  long random_iterations = 100;  // T_train
  long window = 100;             // S_approx services per observation
  Schedule surrogate_rate = Schedule::inverse(0.01, 1e-5);
  Schedule strategy_rate = Schedule::inverse_loglog(0.001, 1e-5);
  double noise0 = 0.05;  // exploration noise scale after the random phase
  double noise_decay = 0.995;
  double fd_step = 0.01;
  double target_scale = 0.0;  // 0: mean f-hat of the random phase

  bool operator==(const DsgdConfig&) const = default;
};

/// Central differences of f along each coordinate; probes are not projected.
template <class F>
std::array<double, 3> central_gradient(F&& f, const StrategyParams& p, double h) {
  std::array<double, 3> g{};
  for (std::size_t k = 0; k < 3; ++k) {
    auto hi = p.p, lo = p.p;
    hi[k] += h;
    lo[k] -= h;
    g[k] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

struct DsgdRecord {
  long iteration;
  StrategyParams p;
  double fhat;
  std::optional<double> loss;
};

class Dsgd {
 public:
  Dsgd(DsgdConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)), rng_(substream(seed, "dsgd")), memory_(cfg_.memory) {
    auto init = substream(seed, "dsgd-init");
    std::vector<int> sizes{3};
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(1);
    net_ = Mlp(sizes, init);
    p_ = random_strategy(rng_);
  }

  const DsgdConfig& config() const { return cfg_; }
  const StrategyParams& strategy() const { return p_; }
  const Mlp& surrogate() const { return net_; }
  Mlp& surrogate() { return net_; }
  const ReplayMemory<StrategySample>& memory() const { return memory_; }
  long iteration() const { return t_; }
  double scale() const { return scale_; }
  std::optional<double> last_fhat() const { return last_fhat_; }
  std::optional<double> last_loss() const { return last_loss_; }

  /// Surrogate estimate of mean sojourn (seconds) at raw point r.
  double surrogate_value(const std::array<double, 3>& r) const {
    Eigen::VectorXd x(3);
    x << r[0], r[1], r[2];
    return scale_ * net_.forward(x)(0);
  }

  std::array<double, 3> surrogate_gradient(const StrategyParams& p, double h) const {
    return central_gradient([this](const std::array<double, 3>& r) { return surrogate_value(r); }, p, h);
  }

  double exploration_noise() const {
    long k = t_ - cfg_.random_iterations;
    if (k < 0) return 0.0;
    return cfg_.noise0 * std::pow(cfg_.noise_decay, static_cast<double>(k));
  }

  /// Chooses the strategy for the next observation window: a uniform
  /// projected draw during the random phase, afterwards one surrogate fit
  /// step followed by a projected noisy descent step.
  void propose() {
    last_loss_.reset();
    if (t_ < cfg_.random_iterations || memory_.empty()) {
      p_ = random_strategy(rng_);
      return;
    }
    if (scale_ <= 0.0) fix_scale();

    auto batch = memory_.sample(cfg_.batch, rng_);
    Eigen::MatrixXd x(3, static_cast<Eigen::Index>(batch.size()));
    Eigen::MatrixXd y(1, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (int k = 0; k < 3; ++k) x(k, static_cast<Eigen::Index>(i)) = batch[i]->p.p[static_cast<std::size_t>(k)];
      y(0, static_cast<Eigen::Index>(i)) = batch[i]->fhat / scale_;
    }
    MlpGradients g;
    last_loss_ = net_.mse_and_grad(x, y, g) * scale_ * scale_;
    net_.adam_step(g, cfg_.surrogate_rate(static_cast<double>(t_)));

    auto grad = surrogate_gradient(p_, cfg_.fd_step);
    double eta = cfg_.strategy_rate(static_cast<double>(t_));
    double eps = exploration_noise();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> r{};
    for (std::size_t k = 0; k < 3; ++k) r[k] = p_.p[k] - eta * grad[k] + eps * u(rng_);
    p_ = project_simplex(r);
  }

  /// Records f-hat for the current strategy. An empty window (nullopt)
  /// reuses the previous f-hat; before any observation nothing is stored.
  DsgdRecord observe(std::optional<double> fhat) {
    if (!fhat) fhat = last_fhat_;
    DsgdRecord rec{t_, p_, fhat.value_or(std::nan("")), last_loss_};
    if (fhat) {
      memory_.push({p_, *fhat});
      last_fhat_ = fhat;
    }
    ++t_;
    return rec;
  }

 private:
  void fix_scale() {
    double s = 0.0;
    auto all = memory_.ordered();
    for (const auto& it : all) s += std::abs(it.fhat);
    scale_ = cfg_.target_scale > 0.0 ? cfg_.target_scale : (s > 0.0 ? s / static_cast<double>(all.size()) : 1.0);
  }

  DsgdConfig cfg_;
  Rng rng_;
  Mlp net_;
  ReplayMemory<StrategySample> memory_;
  StrategyParams p_;
  long t_ = 0;
  double scale_ = 0.0;
  std::optional<double> last_fhat_;
  std::optional<double> last_loss_;
};

/// Runs `services` transmissions under strategy p and returns the mean
/// sojourn of the requests delivered in that window (nullopt if none).
inline std::optional<double> observe_fhat(World& world, const PowerPolicy& power, const StrategyParams& p,
                                          long services, TraceRecorder* rec = nullptr) {
  double sum = 0.0;
  std::size_t n = 0;
  for (long s = 0; s < services; ++s) {
    auto r = world.step(power(world.state()), p);
    for (const auto& d : r.deliveries) sum += d.sojourn();
    n += r.deliveries.size();
    if (rec) rec->record(r, std::nullopt, p);
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// One full iteration: propose a strategy, observe it for S_approx services.
inline DsgdRecord dsgd_iterate(Dsgd& dsgd, World& world, const PowerPolicy& power, TraceRecorder* rec = nullptr) {
  dsgd.propose();
  return dsgd.observe(observe_fhat(world, power, dsgd.strategy(), dsgd.config().window, rec));
}

struct DsgdResult {
  StrategyParams strategy;
  std::vector<DsgdRecord> iterations;
  SimTrace trace;
};

/// DSGD against the simulator for `horizon` transmissions with a fixed
/// power policy.
inline DsgdResult run_dsgd(const SystemConfig& cfg, const DsgdConfig& dcfg, const PowerPolicy& power, long horizon,
                           std::vector<RateSegment> schedule = {}) {
  World world(cfg, std::move(schedule));
  Dsgd dsgd(dcfg, cfg.seed);
  TraceRecorder rec;
  DsgdResult out;
  long iters = horizon / std::max(1L, dcfg.window);
  for (long i = 0; i < iters; ++i) out.iterations.push_back(dsgd_iterate(dsgd, world, power, &rec));
  out.strategy = dsgd.strategy();
  out.trace = rec.take(world);
  return out;
}

inline void write_dsgd_csv(std::ostream& os, const std::vector<DsgdRecord>& recs) {
  os << "iteration,p1,p2,p3,fhat,surrogate_loss\n";
  for (const auto& r : recs) {
    os << r.iteration << ',' << format_g9(r.p.p[0]) << ',' << format_g9(r.p.p[1]) << ',' << format_g9(r.p.p[2])
       << ',';
    if (!std::isnan(r.fhat)) os << format_g9(r.fhat);
    os << ',';
    if (r.loss) os << format_g9(*r.loss);
    os << '\n';
  }
}

}  // namespace mcast
