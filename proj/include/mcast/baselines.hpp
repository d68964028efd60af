#pragma once

// Reference policies and exact oracles for small, enumerable problems:
// constant power, the per-state Lagrangian solution of the average-power
// constrained reward maximization, brute-force enumeration, and tabular
// Q-learning on i.i.d.-state environments.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "mcast/acdqn.hpp"
#include "mcast/sim.hpp"

namespace mcast {

/// States k = 0..K-1 with stationary probabilities q[k], a shared power
/// list, and expected rewards reward[k][a].
struct TinyMdpSpec {
  std::vector<double> q;
  std::vector<double> powers;
  std::vector<std::vector<double>> reward;
  std::vector<MdpState> states;  // optional concrete states, same order as q

  std::size_t num_states() const { return q.size(); }
  std::size_t num_actions() const { return powers.size(); }

  void validate() const {
    if (q.empty() || powers.empty()) throw std::invalid_argument("tiny spec: empty state or power set");
    if (reward.size() != q.size()) throw std::invalid_argument("tiny spec: reward table rows != states");
    if (!states.empty() && states.size() != q.size()) throw std::invalid_argument("tiny spec: states != q");
    double s = 0.0;
    for (double v : q) {
      if (v < 0.0) throw std::invalid_argument("tiny spec: negative probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("tiny spec: q does not sum to 1");
    if (!std::is_sorted(powers.begin(), powers.end())) throw std::invalid_argument("tiny spec: powers not ascending");
    for (const auto& row : reward)
      if (row.size() != powers.size()) throw std::invalid_argument("tiny spec: reward row length");
  }

  double average_power(const std::vector<int>& map) const {
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) s += q[k] * powers[static_cast<std::size_t>(map[k])];
    return s;
  }

  double objective(const std::vector<int>& map) const {
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) s += q[k] * reward[k][static_cast<std::size_t>(map[k])];
    return s;
  }
};

/// Per-state argmax of R_k(a) - beta * P_a, ties to the lower power.
inline std::vector<int> lagrangian_map(const TinyMdpSpec& spec, double beta) {
  std::vector<int> map(spec.num_states());
  for (std::size_t k = 0; k < spec.num_states(); ++k) {
    int best = 0;
    double bv = spec.reward[k][0] - beta * spec.powers[0];
    for (std::size_t a = 1; a < spec.num_actions(); ++a) {
      double v = spec.reward[k][a] - beta * spec.powers[a];
      if (v > bv) {
        bv = v;
        best = static_cast<int>(a);
      }
    }
    map[k] = best;
  }
  return map;
}

struct OracleResult {
  std::vector<int> map;  // action index per state
  double avg_power = 0.0;
  double objective = 0.0;
  double beta = 0.0;
};

/// Smallest beta in [0, beta_max] whose per-state map meets the average
/// power limit, located by bisection to `tol`.
inline OracleResult lagrangian_oracle(const TinyMdpSpec& spec, double limit, double tol = 1e-4,
                                      double beta_max = 10.0) {
  spec.validate();
  if (spec.powers.front() > limit + 1e-12) throw std::domain_error("oracle: power limit below minimum power");
  auto feasible = [&](double b) { return spec.average_power(lagrangian_map(spec, b)) <= limit + 1e-12; };
  double lo = 0.0, hi = beta_max;
  if (feasible(0.0)) {
    hi = 0.0;
  } else {
    if (!feasible(hi)) throw std::domain_error("oracle: limit unreachable within beta range");
    while (hi - lo > tol) {
      double mid = 0.5 * (lo + hi);
      (feasible(mid) ? hi : lo) = mid;
    }
  }
  OracleResult r;
  r.beta = hi;
  r.map = lagrangian_map(spec, hi);
  r.avg_power = spec.average_power(r.map);
  r.objective = spec.objective(r.map);
  return r;
}

/// Best objective over every deterministic per-state map meeting the limit.
inline OracleResult exhaustive_optimum(const TinyMdpSpec& spec, double limit) {
  spec.validate();
  const std::size_t k = spec.num_states(), a = spec.num_actions();
  double combos = std::pow(static_cast<double>(a), static_cast<double>(k));
  if (combos > 1e7) throw std::invalid_argument("exhaustive: too many maps");
  std::vector<int> map(k, 0);
  OracleResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  for (;;) {
    double p = spec.average_power(map);
    if (p <= limit + 1e-12) {
      double v = spec.objective(map);
      if (v > best.objective + 1e-12 || (std::abs(v - best.objective) <= 1e-12 && p < best.avg_power)) {
        best.objective = v;
        best.avg_power = p;
        best.map = map;
      }
    }
    std::size_t i = 0;
    while (i < k && ++map[i] == static_cast<int>(a)) map[i++] = 0;
    if (i == k) break;
  }
  if (best.map.empty()) throw std::domain_error("exhaustive: no feasible map");
  return best;
}

/// Tiny i.i.d.-state environment: every step draws a fresh state from q.
class TinyEnv {
 public:
  TinyEnv(TinyMdpSpec spec, std::uint64_t seed)
      : spec_(std::move(spec)), rng_(substream(seed, "tiny-env")), pick_(spec_.q.begin(), spec_.q.end()) {
    spec_.validate();
    state_ = pick_(rng_);
  }

  const TinyMdpSpec& spec() const { return spec_; }
  int state() const { return state_; }

  /// Applies action a; returns the reward and moves to a fresh state.
  double step(int a) {
    double r = spec_.reward[static_cast<std::size_t>(state_)][static_cast<std::size_t>(a)];
    state_ = pick_(rng_);
    return r;
  }

 private:
  TinyMdpSpec spec_;
  Rng rng_;
  std::discrete_distribution<int> pick_;
  int state_ = 0;
};

struct TabularQConfig {
  double gamma = 0.9;
  double beta = 0.0;
  bool adapt_beta = false;  // ascend beta on the running power average
  double limit = 0.0;
  Schedule lagrange_rate = Schedule::inverse_loglog(1e-3, 1e-5);
  EpsilonSchedule exploration{1.0, 0.9995, 0.05, 1};
  double rate_exponent = 1.0;  // step 1 / n^omega per (state, action) visit
};

struct TabularQResult {
  std::vector<std::vector<double>> q;
  std::vector<int> greedy;
  double beta = 0.0;
};

/// Q-learning with Lagrangian reward and step size 1 / visit count. With
/// omega = 1 the values approach their limit like n^-(1 - gamma), so exact
/// Q values need omega < 1; the greedy map settles much sooner.
inline TabularQResult tabular_q(TinyEnv& env, const TabularQConfig& cfg, long steps, std::uint64_t seed) {
  const auto& spec = env.spec();
  const std::size_t ns = spec.num_states(), na = spec.num_actions();
  TabularQResult out;
  out.q.assign(ns, std::vector<double>(na, 0.0));
  std::vector<std::vector<long>> visits(ns, std::vector<long>(na, 0));
  Rng rng = substream(seed, "tabular-q");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> any(0, static_cast<int>(na) - 1);
  double beta = cfg.beta;
  double power_sum = 0.0;

  auto argmax = [&](std::size_t s) {
    int best = 0;
    for (std::size_t a = 1; a < na; ++a)
      if (out.q[s][a] > out.q[s][static_cast<std::size_t>(best)]) best = static_cast<int>(a);
    return best;
  };

  for (long t = 0; t < steps; ++t) {
    auto s = static_cast<std::size_t>(env.state());
    int a = u(rng) < cfg.exploration(t) ? any(rng) : argmax(s);
    double p = spec.powers[static_cast<std::size_t>(a)];
    double r = env.step(a) - beta * p;
    auto s2 = static_cast<std::size_t>(env.state());
    double next = *std::max_element(out.q[s2].begin(), out.q[s2].end());
    auto& n = visits[s][static_cast<std::size_t>(a)];
    ++n;
    double& qv = out.q[s][static_cast<std::size_t>(a)];
    qv += (r + cfg.gamma * next - qv) / std::pow(static_cast<double>(n), cfg.rate_exponent);
    power_sum += p;
    if (cfg.adapt_beta) {
      double avg = power_sum / static_cast<double>(t + 1);
      beta = std::clamp(beta + cfg.lagrange_rate(static_cast<double>(t)) * (avg - cfg.limit), 0.0, 10.0);
    }
  }
  out.greedy.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) out.greedy[s] = argmax(s);
  out.beta = beta;
  return out;
}

/// Fraction of states (unweighted) on which two maps agree.
inline double map_agreement(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("map_agreement: size mismatch");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

/// Enumerates every (gains, request vector) state of a system whose channels
/// are all discrete uniform, with the exact i.i.d. probabilities: gains
/// independent per user, request vector uniform over `requests`.
inline TinyMdpSpec enumerate_iid_spec(const SystemConfig& cfg, const std::vector<std::vector<std::uint8_t>>& requests) {
  const auto l = static_cast<std::size_t>(cfg.num_users);
  std::vector<std::vector<double>> support(l);
  for (std::size_t j = 0; j < l; ++j) {
    const auto* du = std::get_if<DiscreteUniform>(&cfg.channels[j].dist);
    if (!du) throw std::invalid_argument("enumerate: channels must be discrete uniform");
    for (double v : du->support) support[j].push_back(cfg.channels[j].power_gain ? std::sqrt(v) : v);
  }
  TinyMdpSpec spec;
  spec.powers = cfg.power_levels;
  std::vector<std::size_t> idx(l, 0);
  for (;;) {
    double pg = 1.0;
    std::vector<double> gains(l);
    for (std::size_t j = 0; j < l; ++j) {
      gains[j] = support[j][idx[j]];
      pg /= static_cast<double>(support[j].size());
    }
    for (const auto& v : requests) {
      MdpState s{gains, v};
      std::vector<double> row;
      for (double p : spec.powers) row.push_back(static_cast<double>(reward(s, p, cfg)));
      spec.reward.push_back(std::move(row));
      spec.q.push_back(pg / static_cast<double>(requests.size()));
      spec.states.push_back(std::move(s));
    }
    std::size_t j = 0;
    while (j < l && ++idx[j] == support[j].size()) idx[j++] = 0;
    if (j == l) break;
  }
  return spec;
}

/// AC-DQN against a tiny i.i.d. environment whose states carry concrete
/// gains and request vectors. Returns the learner after `steps` updates and
/// the mean transmit power over the second half of training.
struct TinyAcdqnResult {
  std::vector<int> greedy;
  double late_avg_power = 0.0;
  double beta = 0.0;
};

inline TinyAcdqnResult acdqn_on_tiny(const TinyMdpSpec& spec, const SystemConfig& sys, const AcdqnConfig& cfg,
                                     long steps) {
  if (spec.states.empty()) throw std::invalid_argument("acdqn_on_tiny: spec needs concrete states");
  TinyEnv env(spec, sys.seed);
  Acdqn learner(cfg, sys);
  double late = 0.0;
  long late_n = 0;
  for (long t = 0; t < steps; ++t) {
    const auto k = static_cast<std::size_t>(env.state());
    StepResult r;
    r.state = spec.states[k];
    int a = learner.act(r.state);
    r.power = spec.powers[static_cast<std::size_t>(a)];
    r.reward = static_cast<int>(env.step(a));
    r.next_state = spec.states[static_cast<std::size_t>(env.state())];
    learner.learn(r, a);
    if (2 * t >= steps) {
      late += r.power;
      ++late_n;
    }
  }
  TinyAcdqnResult out;
  for (const auto& s : spec.states) out.greedy.push_back(learner.greedy(s));
  out.late_avg_power = late_n ? late / static_cast<double>(late_n) : 0.0;
  out.beta = learner.beta();
  return out;
}

/// Two users, gains drawn from {0.5, 1} as amplitudes, powers {0.5, 2, 5} W
/// and a 1.75 W budget. Small enough to enumerate, and the budget sits
/// strictly between the pure maps so the constraint binds.
inline SystemConfig tiny_two_user_system(std::uint64_t seed = 3) {
  SystemConfig c;
  c.num_users = 2;
  c.catalog_size = 1;
  c.power_levels = {0.5, 2.0, 5.0};
  c.avg_power_limit = 1.75;
  c.seed = seed;
  c.channels = {ChannelModel{DiscreteUniform{{0.5, 1.0}}, ChannelClass::bad, false},
                ChannelModel{DiscreteUniform{{0.5, 1.0}}, ChannelClass::good, false}};
  return c;
}

/// Request vectors 10, 01 and 11 crossed with every gain pair.
inline TinyMdpSpec tiny_two_user_spec(const SystemConfig& c) { return enumerate_iid_spec(c, {{1, 0}, {0, 1}, {1, 1}}); }

/// Ignores the state and transmits at exactly `watts`.
inline PowerPolicy constant_power_policy(double watts) {
  if (!(watts > 0.0)) throw std::invalid_argument("constant power must be positive");
  return [watts](const MdpState&) { return watts; };
}

inline void write_oracle_csv(std::ostream& os, const TinyMdpSpec& spec, const OracleResult& r) {
  os << "state,power_w,q,reward\n";
  for (std::size_t k = 0; k < spec.num_states(); ++k) {
    auto a = static_cast<std::size_t>(r.map[k]);
    os << k << ',' << format_g9(spec.powers[a]) << ',' << format_g9(spec.q[k]) << ',' << format_g9(spec.reward[k][a])
       << '\n';
  }
}

}  // namespace mcast
