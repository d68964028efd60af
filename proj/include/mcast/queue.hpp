#pragma once

// Multicast queue with request merging, the defer queue, and the randomized
// post-service disposition (retransmit / loopback / defer).

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "mcast/model.hpp"

namespace mcast {

/// One pending file with its requesting users and every recorded arrival time.
struct QueueEntry {
  int file = 0;
  std::map<int, std::vector<double>> arrivals;  // user -> arrival timestamps

  std::vector<int> users() const {
    std::vector<int> u;
    u.reserve(arrivals.size());
    for (const auto& [user, _] : arrivals) u.push_back(user);
    return u;
  }

  std::size_t pending_requests() const {
    std::size_t n = 0;
    for (const auto& [_, ts] : arrivals) n += ts.size();
    return n;
  }

  void merge(QueueEntry&& other) {
    for (auto& [user, ts] : other.arrivals) {
      auto& dst = arrivals[user];
      dst.insert(dst.end(), ts.begin(), ts.end());
      std::sort(dst.begin(), dst.end());
    }
  }

  bool operator==(const QueueEntry&) const = default;
};

struct Delivery {
  int user;
  int file;
  double arrival;
  double delivered;
  double sojourn() const { return delivered - arrival; }
};

struct StrategyParams {
  std::array<double, 3> p{1.0 / 3, 1.0 / 3, 1.0 / 3};  // retransmit, loopback, defer

  static StrategyParams retransmit() { return {{1.0, 0.0, 0.0}}; }
  static StrategyParams loopback() { return {{0.0, 1.0, 0.0}}; }
  static StrategyParams defer() { return {{0.0, 0.0, 1.0}}; }

  bool valid(double tol = 1e-9) const {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
      s += v;
    }
    return std::abs(s - 1.0) <= tol;
  }
  bool operator==(const StrategyParams&) const = default;
};

enum class PostServiceAction { retransmit = 0, loopback = 1, defer = 2 };

/// Categorical draw from p. Consumes exactly one uniform variate.
inline PostServiceAction sample_post_service_action(const StrategyParams& sp, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  if (x < sp.p[0]) return PostServiceAction::retransmit;
  if (x < sp.p[0] + sp.p[1]) return PostServiceAction::loopback;
  // Guard against round-off when p3 == 0.
  if (sp.p[2] <= 0.0) return sp.p[1] > 0.0 ? PostServiceAction::loopback : PostServiceAction::retransmit;
  return PostServiceAction::defer;
}

class MulticastQueue {
 public:
  const std::deque<QueueEntry>& main() const { return main_; }
  const std::map<int, QueueEntry>& deferred() const { return defer_; }
  const std::optional<QueueEntry>& in_service() const { return in_service_; }
  bool empty() const { return main_.empty(); }

  /// New request (file, user) at time `now`. Merges with a deferred entry
  /// (moving it to the tail) or an existing main entry; otherwise appends.
  /// The entry currently in service is never merged into.
  void enqueue(int file, int user, double now) {
    QueueEntry fresh{file, {{user, {now}}}};
    if (auto it = defer_.find(file); it != defer_.end()) {
      QueueEntry e = std::move(it->second);
      defer_.erase(it);
      e.merge(std::move(fresh));
      main_.push_back(std::move(e));
      return;
    }
    if (auto it = find_main(file); it != main_.end()) {
      it->merge(std::move(fresh));
      return;
    }
    main_.push_back(std::move(fresh));
  }

  /// Detaches the head entry for transmission.
  const QueueEntry& begin_service() {
    if (main_.empty()) throw std::logic_error("begin_service: empty multicast queue");
    if (in_service_) throw std::logic_error("begin_service: a service is already in progress");
    in_service_ = std::move(main_.front());
    main_.pop_front();
    return *in_service_;
  }

  /// Completes the in-flight service at time `now`. `succeeded[u]` marks users
  /// that decoded the file. Returns one Delivery per recorded arrival of a
  /// successful user. The failed residue is placed per `action`; a same-file
  /// entry that arrived during the service is always merged into it.
  std::vector<Delivery> complete_service(const std::vector<std::uint8_t>& succeeded,
                                         PostServiceAction action, double now) {
    if (!in_service_) throw std::logic_error("complete_service: no service in progress");
    QueueEntry served = std::move(*in_service_);
    in_service_.reset();

    std::vector<Delivery> out;
    QueueEntry residue{served.file, {}};
    for (auto& [user, ts] : served.arrivals) {
      bool ok = static_cast<std::size_t>(user) < succeeded.size() && succeeded[static_cast<std::size_t>(user)];
      if (ok) {
        for (double a : ts) out.push_back({user, served.file, a, now});
      } else {
        residue.arrivals.emplace(user, std::move(ts));
      }
    }
    if (residue.arrivals.empty()) return out;

    auto pending = find_main(residue.file);
    switch (action) {
      case PostServiceAction::retransmit:
        if (pending != main_.end()) {
          residue.merge(std::move(*pending));
          main_.erase(pending);
        }
        main_.push_front(std::move(residue));
        break;
      case PostServiceAction::loopback:
        if (pending != main_.end())
          pending->merge(std::move(residue));
        else
          main_.push_back(std::move(residue));
        break;
      case PostServiceAction::defer:
        if (pending != main_.end())
          pending->merge(std::move(residue));
        else
          defer_.emplace(residue.file, std::move(residue));
        break;
    }
    return out;
  }

  std::size_t pending_requests() const {
    std::size_t n = in_service_ ? in_service_->pending_requests() : 0;
    for (const auto& e : main_) n += e.pending_requests();
    for (const auto& [_, e] : defer_) n += e.pending_requests();
    return n;
  }

  /// One entry per file across main and defer.
  bool files_unique() const {
    std::vector<int> files;
    for (const auto& e : main_) files.push_back(e.file);
    for (const auto& [f, _] : defer_) files.push_back(f);
    std::sort(files.begin(), files.end());
    return std::adjacent_find(files.begin(), files.end()) == files.end();
  }

 private:
  std::deque<QueueEntry>::iterator find_main(int file) {
    return std::find_if(main_.begin(), main_.end(), [file](const QueueEntry& e) { return e.file == file; });
  }

  std::deque<QueueEntry> main_;
  std::map<int, QueueEntry> defer_;
  std::optional<QueueEntry> in_service_;
};

}  // namespace mcast
