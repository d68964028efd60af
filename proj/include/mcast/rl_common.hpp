#pragma once

// Shared learner machinery: replay memory, step-size and exploration
// schedules, and the simplex projection used for queueing strategies.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcast/model.hpp"
#include "mcast/queue.hpp"

namespace mcast {

/// Fixed-capacity ring buffer; once full the oldest item is overwritten.
template <class Item>
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay memory: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Item item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
    ++inserted_;
  }

  /// n uniform draws with replacement.
  std::vector<const Item*> sample(std::size_t n, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("replay memory: sampling from empty memory");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<const Item*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
    return out;
  }

  /// Contents oldest first.
  std::vector<Item> ordered() const {
    if (items_.size() < capacity_) return items_;
    std::vector<Item> out;
    out.reserve(capacity_);
    for (std::size_t i = 0; i < capacity_; ++i) out.push_back(items_[(next_ + i) % capacity_]);
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t inserted() const { return inserted_; }
  bool empty() const { return items_.empty(); }

 private:
  std::size_t capacity_;
  std::vector<Item> items_;
  std::size_t next_ = 0;
  std::size_t inserted_ = 0;
};

/// Step-size schedule. Decaying forms:
///   inverse:         a / (1 + b t)
///   inverse_loglog:  a / (1 + b t max(1, ln ln max(t, 3)))
/// Both have infinite sum and finite sum of squares.
struct Schedule {
  enum class Kind { constant, inverse, inverse_loglog };
  Kind kind = Kind::constant;
  double a = 0.0;
  double b = 0.0;

  static Schedule constant(double c) { return {Kind::constant, c, 0.0}; }
  static Schedule inverse(double a, double b) { return {Kind::inverse, a, b}; }
  static Schedule inverse_loglog(double a, double b) { return {Kind::inverse_loglog, a, b}; }

  double operator()(double t) const {
    switch (kind) {
      case Kind::constant:
        return a;
      case Kind::inverse:
        return a / (1.0 + b * t);
      case Kind::inverse_loglog: {
        double ll = std::max(1.0, std::log(std::log(std::max(t, 3.0))));
        return a / (1.0 + b * t * ll);
      }
    }
    return a;
  }

  /// Same form held at its t = 0 value.
  Schedule frozen() const { return constant((*this)(0.0)); }

  bool operator==(const Schedule&) const = default;
};

/// max(0, r) normalized to sum 1; uniform if every component is <= 0.
inline StrategyParams project_simplex(const std::array<double, 3>& r) {
  std::array<double, 3> pos{};
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    pos[i] = std::max(0.0, r[i]);
    s += pos[i];
  }
  if (!(s > 0.0) || !std::isfinite(s)) return StrategyParams{};
  for (double& v : pos) v /= s;
  return StrategyParams{pos};
}

inline StrategyParams random_strategy(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> r{};
  for (double& v : r) v = u(rng);
  return project_simplex(r);
}

/// Exploration probability max(floor, eps0 * decay^t).
inline double epsilon(double t, double eps0, double decay, double floor) {
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("epsilon: decay must lie in (0, 1)");
  return std::max(floor, eps0 * std::pow(decay, t));
}

struct EpsilonSchedule {
  double eps0 = 1.0;
  double decay = 0.98;
  double floor = 0.01;
  long period = 1;  // decay clock ticks once per `period` steps

  double operator()(long step) const {
    return epsilon(static_cast<double>(step / std::max(1L, period)), eps0, decay, floor);
  }
  bool operator==(const EpsilonSchedule&) const = default;
};

}  // namespace mcast
