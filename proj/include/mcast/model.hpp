#pragma once

// Physical layer and traffic model of the fading multicast downlink.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mcast {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-streams from one seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic sub-stream of a master seed, keyed by a fixed label
/// ("arrivals", "channel", "explore", ...).
inline Rng substream(std::uint64_t seed, std::string_view label) {
  return Rng(mix64(seed ^ fnv1a(label)));
}

enum class ChannelClass { good, bad };

struct DiscreteUniform {
  std::vector<double> support;
};

struct Exponential {
  double mean = 1.0;
};

/// Per-user fading law. With `power_gain` set, `dist` describes |h|^2 and the
/// drawn gain is its square root (Exponential + power_gain is Rayleigh fading).
struct ChannelModel {
  std::variant<DiscreteUniform, Exponential> dist;
  ChannelClass tag = ChannelClass::good;
  bool power_gain = false;

  double draw(Rng& rng) const {
    double x;
    if (const auto* du = std::get_if<DiscreteUniform>(&dist)) {
      std::uniform_int_distribution<std::size_t> pick(0, du->support.size() - 1);
      x = du->support[pick(rng)];
    } else {
      std::exponential_distribution<double> e(1.0 / std::get<Exponential>(dist).mean);
      x = e(rng);
    }
    return power_gain ? std::sqrt(x) : x;
  }

  void validate() const {
    if (const auto* du = std::get_if<DiscreteUniform>(&dist)) {
      if (du->support.empty()) throw std::invalid_argument("channel: empty support");
      for (double g : du->support)
        if (!(g > 0.0)) throw std::invalid_argument("channel: non-positive gain in support");
    } else if (!(std::get<Exponential>(dist).mean > 0.0)) {
      throw std::invalid_argument("channel: non-positive exponential mean");
    }
  }

  bool operator==(const ChannelModel& o) const {
    if (tag != o.tag || power_gain != o.power_gain || dist.index() != o.dist.index()) return false;
    if (const auto* du = std::get_if<DiscreteUniform>(&dist))
      return du->support == std::get<DiscreteUniform>(o.dist).support;
    return std::get<Exponential>(dist).mean == std::get<Exponential>(o.dist).mean;
  }
};

struct SystemConfig {
  int num_users = 10;
  int catalog_size = 100;
  double file_size_bits = 8e7;
  double tx_rate_bps = 8e7;
  double spectral_efficiency = 1.0;  // C/B
  double noise_power = 1.0;
  std::vector<double> power_levels;
  double avg_power_limit = 7.0;
  double zipf_exponent = 1.0;
  double arrival_rate = 1.0;
  std::vector<ChannelModel> channels;  // one per user
  long horizon = 100000;
  std::uint64_t seed = 1;

  double service_time() const { return file_size_bits / tx_rate_bps; }

  void validate() const {
    if (num_users < 1) throw std::invalid_argument("num_users must be >= 1");
    if (catalog_size < 1) throw std::invalid_argument("catalog_size must be >= 1");
    if (!(tx_rate_bps > 0.0) || !(file_size_bits > 0.0) || !std::isfinite(service_time()))
      throw std::invalid_argument("file_size and tx_rate must be positive and finite");
    if (!(noise_power > 0.0)) throw std::invalid_argument("noise_power must be > 0");
    if (power_levels.empty()) throw std::invalid_argument("power_levels must be non-empty");
    for (std::size_t i = 0; i < power_levels.size(); ++i) {
      if (!(power_levels[i] > 0.0)) throw std::invalid_argument("power_levels must be positive");
      if (i > 0 && !(power_levels[i] > power_levels[i - 1]))
        throw std::invalid_argument("power_levels must be strictly increasing");
    }
    if (zipf_exponent < 0.0) throw std::invalid_argument("zipf_exponent must be >= 0");
    if (arrival_rate < 0.0) throw std::invalid_argument("arrival_rate must be >= 0");
    if (channels.size() != static_cast<std::size_t>(num_users))
      throw std::invalid_argument("need exactly one channel model per user");
    for (const auto& c : channels) c.validate();
  }

  bool operator==(const SystemConfig&) const = default;
};

/// `count` levels evenly spaced over [lo, hi].
inline std::vector<double> linear_levels(double lo, double hi, int count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  return out;
}

struct MdpState {
  std::vector<double> gains;
  std::vector<std::uint8_t> requested;

  int num_requesters() const {
    int n = 0;
    for (auto v : requested) n += v != 0;
    return n;
  }
  bool operator==(const MdpState&) const = default;
};

/// Shannon threshold: N_g (2^rho - 1) / gain^2.
inline double required_power(double gain, const SystemConfig& cfg) {
  if (!(gain > 0.0)) throw std::domain_error("required_power: gain must be positive");
  return cfg.noise_power * (std::exp2(cfg.spectral_efficiency) - 1.0) / (gain * gain);
}

/// Per-user success of one transmission at `power`; ties fail.
inline std::vector<std::uint8_t> delivered_users(const MdpState& s, double power,
                                                 const SystemConfig& cfg) {
  std::vector<std::uint8_t> ok(s.requested.size(), 0);
  for (std::size_t j = 0; j < s.requested.size(); ++j)
    ok[j] = s.requested[j] && power > required_power(s.gains[j], cfg);
  return ok;
}

inline int reward(const MdpState& s, double power, const SystemConfig& cfg) {
  int r = 0;
  for (auto v : delivered_users(s, power, cfg)) r += v;
  return r;
}

inline std::vector<double> draw_gains(const std::vector<ChannelModel>& models, Rng& rng) {
  std::vector<double> g;
  g.reserve(models.size());
  for (const auto& m : models) g.push_back(m.draw(rng));
  return g;
}

/// Zipf popularity over files 0..M-1 (file index i has weight (i+1)^-alpha)
/// with the requesting user uniform over L.
class RequestSampler {
 public:
  RequestSampler(double zipf_exponent, int catalog_size, int num_users)
      : users_(num_users) {
    std::vector<double> w(static_cast<std::size_t>(catalog_size));
    for (int i = 0; i < catalog_size; ++i) w[static_cast<std::size_t>(i)] = std::pow(i + 1.0, -zipf_exponent);
    files_ = std::discrete_distribution<int>(w.begin(), w.end());
  }

  struct Request {
    int file;
    int user;
  };

  Request operator()(Rng& rng) {
    int f = files_(rng);
    std::uniform_int_distribution<int> u(0, users_ - 1);
    return {f, u(rng)};
  }

  std::vector<double> file_probabilities() const { return files_.probabilities(); }

 private:
  std::discrete_distribution<int> files_;
  int users_;
};

inline RequestSampler::Request sample_request(double zipf_exponent, int catalog_size,
                                              int num_users, Rng& rng) {
  return RequestSampler(zipf_exponent, catalog_size, num_users)(rng);
}

// Built-in channel populations: users split into halves, bad first, with the
// distributions given over the power gain |h|^2.

inline std::vector<ChannelModel> split_rayleigh(int num_users, double bad_mean, double good_mean) {
  std::vector<ChannelModel> out;
  int bad = num_users / 2;
  for (int j = 0; j < num_users; ++j) {
    if (j < bad)
      out.push_back({Exponential{bad_mean}, ChannelClass::bad, true});
    else
      out.push_back({Exponential{good_mean}, ChannelClass::good, true});
  }
  return out;
}

inline std::vector<ChannelModel> split_uniform(int num_users, std::vector<double> bad_support,
                                               std::vector<double> good_support) {
  std::vector<ChannelModel> out;
  int bad = num_users / 2;
  for (int j = 0; j < num_users; ++j) {
    if (j < bad)
      out.push_back({DiscreteUniform{bad_support}, ChannelClass::bad, true});
    else
      out.push_back({DiscreteUniform{good_support}, ChannelClass::good, true});
  }
  return out;
}

}  // namespace mcast
