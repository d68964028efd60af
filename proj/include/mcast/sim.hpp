#pragma once

// Continuous-time event loop of the multicast downlink. Decision epochs are
// service starts; the clock jumps to the next arrival when the queue is empty.

#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcast/model.hpp"
#include "mcast/queue.hpp"

namespace mcast {

/// Mean of the last `capacity` values pushed (fewer while warming up).
class WindowedMean {
 public:
  explicit WindowedMean(std::size_t capacity) : capacity_(capacity) {}

  void push(double x) {
    buf_.push_back(x);
    sum_ += x;
    if (buf_.size() > capacity_) {
      sum_ -= buf_.front();
      buf_.pop_front();
    }
    // Re-sum now and then so the running total cannot drift.
    if (++pushes_ % 4096 == 0) {
      sum_ = 0.0;
      for (double v : buf_) sum_ += v;
    }
  }

  bool empty() const { return buf_.empty(); }
  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  double mean() const { return buf_.empty() ? 0.0 : sum_ / static_cast<double>(buf_.size()); }

 private:
  std::size_t capacity_;
  std::deque<double> buf_;
  double sum_ = 0.0;
  std::size_t pushes_ = 0;
};

/// Piecewise-constant total arrival rate; the last rate persists forever.
struct RateSegment {
  double duration_s;
  double rate;
  bool operator==(const RateSegment&) const = default;
};

using PowerPolicy = std::function<double(const MdpState&)>;

struct PolicyHandle {
  PowerPolicy decide;
  StrategyParams strategy;
};

struct StepResult {
  MdpState state;
  double power = 0.0;
  int reward = 0;
  double avg_power = 0.0;  // windowed C_P including this transmission
  MdpState next_state;
  std::vector<Delivery> deliveries;
  double time_end = 0.0;
};

class World {
 public:
  static constexpr std::size_t kPowerWindow = 200;

  explicit World(SystemConfig cfg, std::vector<RateSegment> schedule = {},
                 std::size_t power_window = kPowerWindow)
      : cfg_(std::move(cfg)),
        schedule_(std::move(schedule)),
        sampler_(cfg_.zipf_exponent, cfg_.catalog_size, cfg_.num_users),
        arrival_rng_(substream(cfg_.seed, "arrivals")),
        channel_rng_(substream(cfg_.seed, "channel")),
        strategy_rng_(substream(cfg_.seed, "strategy")),
        power_avg_(power_window) {
    cfg_.validate();
    if (schedule_.empty()) schedule_.push_back({std::numeric_limits<double>::infinity(), cfg_.arrival_rate});
    for (const auto& s : schedule_)
      if (!(s.duration_s > 0.0) || s.rate < 0.0) throw std::invalid_argument("rate schedule: bad segment");
    next_arrival_ = draw_next_arrival(0.0);
    prepare();
  }

  const SystemConfig& config() const { return cfg_; }
  const MulticastQueue& queue() const { return queue_; }
  MulticastQueue& queue() { return queue_; }
  const MdpState& state() const { return state_; }
  double now() const { return now_; }
  long transmissions() const { return transmissions_; }
  std::size_t total_arrivals() const { return arrivals_; }
  std::size_t total_delivered() const { return delivered_; }
  double avg_power() const { return power_avg_.mean(); }
  bool idle() const { return idle_; }
  std::size_t power_window() const { return power_avg_.capacity(); }

  /// Arrival rate in force at time t.
  double rate_at(double t) const {
    double start = 0.0;
    for (const auto& s : schedule_) {
      if (t < start + s.duration_s) return s.rate;
      start += s.duration_s;
    }
    return schedule_.back().rate;
  }

  /// Inject a request directly (tests and warm starts).
  void inject(int file, int user) {
    queue_.enqueue(file, user, now_);
    ++arrivals_;
    if (idle_) prepare();
  }

  /// One transmission at `power` for the current state, then the post-service
  /// disposition drawn from `sp`.
  StepResult step(double power, const StrategyParams& sp) {
    StepResult res;
    res.state = state_;
    res.power = power;
    auto ok = delivered_users(state_, power, cfg_);
    for (auto v : ok) res.reward += v;

    double t_end = now_ + cfg_.service_time();
    while (next_arrival_ <= t_end) {
      now_ = next_arrival_;
      auto req = sampler_(arrival_rng_);
      queue_.enqueue(req.file, req.user, now_);
      ++arrivals_;
      next_arrival_ = draw_next_arrival(now_);
    }
    now_ = t_end;

    if (!idle_) {
      bool any_failed = false;
      for (std::size_t j = 0; j < ok.size(); ++j) any_failed |= state_.requested[j] && !ok[j];
      auto action = any_failed ? sample_post_service_action(sp, strategy_rng_) : PostServiceAction::loopback;
      res.deliveries = queue_.complete_service(ok, action, now_);
      delivered_ += res.deliveries.size();
    }
    power_avg_.push(power);
    res.avg_power = power_avg_.mean();
    ++transmissions_;
    res.time_end = now_;

    prepare();
    res.next_state = state_;
    return res;
  }

 private:
  double draw_next_arrival(double from) {
    double t = from;
    double start = 0.0;
    std::size_t seg = 0;
    for (; seg < schedule_.size(); ++seg) {
      if (t < start + schedule_[seg].duration_s) break;
      start += schedule_[seg].duration_s;
    }
    for (;;) {
      bool last = seg + 1 >= schedule_.size();
      double end = last ? std::numeric_limits<double>::infinity() : start + schedule_[std::min(seg, schedule_.size() - 1)].duration_s;
      double rate = schedule_[std::min(seg, schedule_.size() - 1)].rate;
      if (rate > 0.0) {
        std::exponential_distribution<double> e(rate);
        double cand = t + e(arrival_rng_);
        if (cand < end) return cand;
      }
      if (last) return std::numeric_limits<double>::infinity();
      // Memoryless: restart at the boundary with the next segment's rate.
      t = end;
      start = end;
      ++seg;
    }
  }

  void prepare() {
    if (queue_.empty() && std::isfinite(next_arrival_)) {
      now_ = next_arrival_;
      auto req = sampler_(arrival_rng_);
      queue_.enqueue(req.file, req.user, now_);
      ++arrivals_;
      next_arrival_ = draw_next_arrival(now_);
    }
    state_.gains = draw_gains(cfg_.channels, channel_rng_);
    state_.requested.assign(static_cast<std::size_t>(cfg_.num_users), 0);
    idle_ = queue_.empty();
    if (!idle_) {
      const auto& head = queue_.begin_service();
      for (const auto& [user, _] : head.arrivals) state_.requested[static_cast<std::size_t>(user)] = 1;
    }
  }

  SystemConfig cfg_;
  std::vector<RateSegment> schedule_;
  RequestSampler sampler_;
  Rng arrival_rng_;
  Rng channel_rng_;
  Rng strategy_rng_;
  MulticastQueue queue_;
  MdpState state_;
  double now_ = 0.0;
  double next_arrival_ = 0.0;
  long transmissions_ = 0;
  std::size_t arrivals_ = 0;
  std::size_t delivered_ = 0;
  bool idle_ = true;
  WindowedMean power_avg_;
};

/// One CSV row per transmission. Learning columns are empty for baselines.
struct TraceRow {
  long step = 0;
  double sim_time = 0.0;
  double power = 0.0;
  int reward = 0;
  double avg_power = 0.0;
  std::optional<double> beta;
  std::optional<StrategyParams> strategy;
  std::optional<double> mean_sojourn;
};

struct SimTrace {
  std::vector<TraceRow> rows;
  std::vector<Delivery> deliveries;
  double sim_time = 0.0;
  std::size_t arrivals = 0;  // requests generated, as counted by the world
  std::size_t pending = 0;   // still queued when the run stopped

  /// Every generated request was either delivered or is still queued.
  bool conserved() const { return arrivals == deliveries.size() + pending; }

  long transmissions() const { return static_cast<long>(rows.size()); }

  std::vector<double> sojourns() const {
    std::vector<double> s;
    s.reserve(deliveries.size());
    for (const auto& d : deliveries) s.push_back(d.sojourn());
    return s;
  }
  std::vector<double> power_history() const {
    std::vector<double> p;
    p.reserve(rows.size());
    for (const auto& r : rows) p.push_back(r.power);
    return p;
  }
  std::vector<double> avg_power_series() const {
    std::vector<double> p;
    p.reserve(rows.size());
    for (const auto& r : rows) p.push_back(r.avg_power);
    return p;
  }
};

/// Mean of the last `window` values; nullopt when there are none.
inline std::optional<double> trailing_mean(const std::vector<double>& xs, std::size_t window) {
  if (xs.empty() || window == 0) return std::nullopt;
  std::size_t n = std::min(window, xs.size());
  double s = 0.0;
  for (std::size_t i = xs.size() - n; i < xs.size(); ++i) s += xs[i];
  return s / static_cast<double>(n);
}

inline std::optional<double> mean_sojourn(const SimTrace& trace, std::size_t window) {
  return trailing_mean(trace.sojourns(), window);
}

/// Mean sojourn of requests that arrived at or after `since` (sim seconds),
/// restricted to users accepted by `keep` when given.
inline std::optional<double> mean_sojourn_since(const SimTrace& trace, double since,
                                                const std::function<bool(int)>& keep = {}) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& d : trace.deliveries) {
    if (d.arrival < since || (keep && !keep(d.user))) continue;
    s += d.sojourn();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

/// Steady-state mean sojourn: requests arriving in the second half of the run.
inline std::optional<double> late_mean_sojourn(const SimTrace& trace, const std::function<bool(int)>& keep = {}) {
  return mean_sojourn_since(trace, trace.sim_time / 2.0, keep);
}

/// Records rows and deliveries as a run progresses, tracking the trailing
/// mean sojourn over `sojourn_window` deliveries.
class TraceRecorder {
 public:
  explicit TraceRecorder(std::size_t sojourn_window = 1000) : sojourn_(sojourn_window) {}

  void record(const StepResult& r, std::optional<double> beta = std::nullopt,
              std::optional<StrategyParams> sp = std::nullopt) {
    for (const auto& d : r.deliveries) {
      sojourn_.push(d.sojourn());
      trace_.deliveries.push_back(d);
    }
    TraceRow row;
    row.step = static_cast<long>(trace_.rows.size()) + 1;
    row.sim_time = r.time_end;
    row.power = r.power;
    row.reward = r.reward;
    row.avg_power = r.avg_power;
    row.beta = beta;
    row.strategy = sp;
    if (!sojourn_.empty()) row.mean_sojourn = sojourn_.mean();
    trace_.rows.push_back(row);
    trace_.sim_time = r.time_end;
  }

  const SimTrace& trace() const { return trace_; }
  SimTrace take() { return std::move(trace_); }

  /// Takes the trace and stamps the world's request counts on it.
  SimTrace take(const World& world) {
    trace_.arrivals = world.total_arrivals();
    trace_.pending = world.queue().pending_requests();
    return std::move(trace_);
  }

 private:
  WindowedMean sojourn_;
  SimTrace trace_;
};

/// Runs a fixed policy for `horizon` transmissions.
inline SimTrace run(const SystemConfig& cfg, const PolicyHandle& policy, long horizon,
                    std::vector<RateSegment> schedule = {}) {
  TraceRecorder rec;
  if (horizon <= 0) return rec.take();
  World world(cfg, std::move(schedule));
  for (long t = 0; t < horizon; ++t) {
    double p = policy.decide(world.state());
    rec.record(world.step(p, policy.strategy));
  }
  return rec.take(world);
}

inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  os << "step,sim_time_s,power_w,reward,cp_avg_power_w,beta,p1,p2,p3,mean_sojourn_s\n";
  for (const auto& r : trace.rows) {
    os << r.step << ',' << format_g9(r.sim_time) << ',' << format_g9(r.power) << ',' << r.reward << ','
       << format_g9(r.avg_power) << ',';
    if (r.beta) os << format_g9(*r.beta);
    os << ',';
    if (r.strategy)
      os << format_g9(r.strategy->p[0]) << ',' << format_g9(r.strategy->p[1]) << ',' << format_g9(r.strategy->p[2]);
    else
      os << ",,";
    os << ',';
    if (r.mean_sojourn) os << format_g9(*r.mean_sojourn);
    os << '\n';
  }
}

}  // namespace mcast
