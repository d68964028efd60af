#pragma once

// Experiment plumbing: named scenarios, a flat `key = value` config format
// that round-trips exactly, the runner that writes CSV traces, and the
// summarizer that reads them back.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcast/acdqn.hpp"
#include "mcast/baselines.hpp"
#include "mcast/dsgd.hpp"
#include "mcast/ida.hpp"

namespace mcast {

enum class Algorithm { baseline_constant, dsgd, acdqn, ida, oracle };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::baseline_constant:
      return "baseline-constant";
    case Algorithm::dsgd:
      return "dsgd";
    case Algorithm::acdqn:
      return "acdqn";
    case Algorithm::ida:
      return "ida";
    case Algorithm::oracle:
      return "oracle";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::baseline_constant, Algorithm::dsgd, Algorithm::acdqn, Algorithm::ida, Algorithm::oracle})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("algorithm: unknown value '" + s + "'");
}

/// Half the users (the first half) are "bad", the rest "good". Values are
/// power gains |h|^2: exponential means, or discrete supports.
struct ChannelSpec {
  enum class Kind { rayleigh, uniform };
  Kind kind = Kind::rayleigh;
  double bad_mean = 0.1;
  double good_mean = 1.0;
  std::vector<double> bad_support{0.1, 0.2, 0.3};
  std::vector<double> good_support{0.7, 0.8, 0.9};

  std::vector<ChannelModel> build(int num_users) const {
    return kind == Kind::rayleigh ? split_rayleigh(num_users, bad_mean, good_mean)
                                  : split_uniform(num_users, bad_support, good_support);
  }
  bool operator==(const ChannelSpec&) const = default;
};

struct Scenario {
  std::string name;
  Algorithm algorithm = Algorithm::baseline_constant;
  SystemConfig system;  // channels are rebuilt from `channel`
  ChannelSpec channel;
  StrategyParams strategy = StrategyParams::loopback();  // fixed strategy for constant/acdqn/oracle
  bool constant_steps = false;                           // AC-DQN / IDA step schedule
  double value_rate = 0.001;
  double lagrange_rate = 1e-4;
  std::vector<RateSegment> schedule;  // empty: stationary at system.arrival_rate
  std::string output = "out";

  /// Sim seconds covered by the schedule (infinite when stationary).
  double schedule_end() const {
    if (schedule.empty()) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (const auto& seg : schedule) s += seg.duration_s;
    return s;
  }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("name: must be non-empty");
    system.validate();
    if (system.horizon <= 0) throw std::invalid_argument("horizon: must be positive");
    if (!strategy.valid()) throw std::invalid_argument("strategy: not a probability vector");
    for (const auto& seg : schedule) {
      if (!(seg.duration_s > 0.0)) throw std::invalid_argument("schedule: durations must be positive");
      if (!(seg.rate >= 0.0)) throw std::invalid_argument("schedule: rates must be non-negative");
    }
    if (!(value_rate > 0.0) || !(lagrange_rate >= 0.0)) throw std::invalid_argument("value_rate/lagrange_rate");
  }

  AcdqnConfig acdqn_config() const {
    auto c = constant_steps ? AcdqnConfig::constant_step(value_rate, lagrange_rate) : AcdqnConfig::decaying();
    if (!constant_steps) {
      c.value_rate.a = value_rate;
      c.lagrange_rate.a = lagrange_rate;
    }
    return c;
  }

  bool operator==(const Scenario&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long>(d))) throw std::invalid_argument(key + ": expected an integer");
  return static_cast<long>(d);
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(key, item));
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

// Shortest text that parses back to the same double.
inline std::string exact(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + exact(xs[i]);
  return s;
}

inline StrategyParams to_strategy(const std::string& v) {
  if (v == "retransmit") return StrategyParams::retransmit();
  if (v == "loopback") return StrategyParams::loopback();
  if (v == "defer") return StrategyParams::defer();
  auto xs = to_list("strategy", v);
  if (xs.size() != 3) throw std::invalid_argument("strategy: expected retransmit|loopback|defer or p1, p2, p3");
  StrategyParams p{{xs[0], xs[1], xs[2]}};
  if (!p.valid()) throw std::invalid_argument("strategy: not a probability vector");
  return p;
}

}  // namespace detail

/// The built-in catalog.
inline Scenario moderate_scenario() {
  Scenario s;
  s.name = "moderate";
  s.system.num_users = 10;
  s.system.catalog_size = 100;
  s.system.power_levels = linear_levels(1.0, 50.0, 20);
  s.system.avg_power_limit = 7.0;
  s.system.zipf_exponent = 1.0;
  s.system.arrival_rate = 1.0;
  s.system.horizon = 100000;
  s.system.seed = 7;
  s.channel.kind = ChannelSpec::Kind::rayleigh;
  s.system.channels = s.channel.build(s.system.num_users);
  return s;
}

inline Scenario small_scenario() {
  Scenario s = moderate_scenario();
  s.name = "small";
  s.algorithm = Algorithm::acdqn;
  s.system.num_users = 4;
  s.system.zipf_exponent = 0.0;
  s.channel.kind = ChannelSpec::Kind::uniform;
  s.system.channels = s.channel.build(s.system.num_users);
  return s;
}

inline Scenario large_scenario() {
  Scenario s = moderate_scenario();
  s.name = "large";
  s.algorithm = Algorithm::acdqn;
  s.system.num_users = 20;
  s.system.channels = s.channel.build(s.system.num_users);
  return s;
}

/// Rate 1.0 for 24 h, then 0.6, 0.5, 0.4, 0.8 for 6 h each; P-bar 5 W;
/// constant steps so the learner can follow the changes.
inline Scenario tracking_scenario() {
  Scenario s = large_scenario();
  s.name = "tracking48h";
  s.system.avg_power_limit = 5.0;
  s.constant_steps = true;
  s.value_rate = 0.001;
  s.lagrange_rate = 3e-5;
  const double h = 3600.0;
  s.schedule = {{24 * h, 1.0}, {6 * h, 0.6}, {6 * h, 0.5}, {6 * h, 0.4}, {6 * h, 0.8}};
  s.system.arrival_rate = 1.0;
  s.system.horizon = 1000000;  // bounded by the schedule's 48 h
  return s;
}

inline std::vector<Scenario> builtin_scenarios() {
  return {small_scenario(), moderate_scenario(), large_scenario(), tracking_scenario()};
}

inline std::optional<Scenario> find_builtin(const std::string& name) {
  for (auto& s : builtin_scenarios())
    if (s.name == name) return s;
  return std::nullopt;
}

/// Writes every field; parse_config(serialize(s)) == s.
inline std::string serialize(const Scenario& s) {
  using detail::exact;
  std::ostringstream os;
  const auto& c = s.system;
  os << "name = " << s.name << '\n';
  os << "algorithm = " << to_string(s.algorithm) << '\n';
  os << "users = " << c.num_users << '\n';
  os << "catalog = " << c.catalog_size << '\n';
  os << "file_size_bits = " << exact(c.file_size_bits) << '\n';
  os << "tx_rate_bps = " << exact(c.tx_rate_bps) << '\n';
  os << "spectral_efficiency = " << exact(c.spectral_efficiency) << '\n';
  os << "noise_power = " << exact(c.noise_power) << '\n';
  os << "power_levels = " << detail::join(c.power_levels) << '\n';
  os << "avg_power = " << exact(c.avg_power_limit) << '\n';
  os << "zipf = " << exact(c.zipf_exponent) << '\n';
  os << "arrival_rate = " << exact(c.arrival_rate) << '\n';
  os << "channel = " << (s.channel.kind == ChannelSpec::Kind::rayleigh ? "rayleigh" : "uniform") << '\n';
  os << "bad_mean = " << exact(s.channel.bad_mean) << '\n';
  os << "good_mean = " << exact(s.channel.good_mean) << '\n';
  os << "bad_support = " << detail::join(s.channel.bad_support) << '\n';
  os << "good_support = " << detail::join(s.channel.good_support) << '\n';
  os << "horizon = " << c.horizon << '\n';
  os << "seed = " << c.seed << '\n';
  os << "strategy = " << detail::join({s.strategy.p[0], s.strategy.p[1], s.strategy.p[2]}) << '\n';
  os << "steps = " << (s.constant_steps ? "constant" : "decaying") << '\n';
  os << "value_rate = " << exact(s.value_rate) << '\n';
  os << "lagrange_rate = " << exact(s.lagrange_rate) << '\n';
  os << "schedule = ";
  for (std::size_t i = 0; i < s.schedule.size(); ++i)
    os << (i ? ", " : "") << exact(s.schedule[i].duration_s) << ':' << exact(s.schedule[i].rate);
  os << '\n';
  os << "output = " << s.output << '\n';
  return os.str();
}

/// Parses `key = value` lines. `#` starts a comment; `[section]` headers
/// are accepted and ignored. `base = <builtin>` (first key) seeds the
/// defaults; otherwise the moderate scenario does. `name` is required.
inline Scenario parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty() || (line.front() == '[' && line.back() == ']')) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }

  Scenario s = moderate_scenario();
  s.name.clear();
  for (const auto& [k, v] : kv)
    if (k == "base") {
      auto b = find_builtin(v);
      if (!b) throw std::invalid_argument("base: unknown scenario '" + v + "'");
      s = *b;
      s.name.clear();
    }

  std::map<std::string, int> seen;
  for (const auto& [k, v] : kv) {
    if (++seen[k] > 1) throw std::invalid_argument(k + ": duplicate key");
    auto& c = s.system;
    if (k == "base") continue;
    if (k == "name") s.name = v;
    else if (k == "algorithm") s.algorithm = parse_algorithm(v);
    else if (k == "users") c.num_users = static_cast<int>(detail::to_long(k, v));
    else if (k == "catalog") c.catalog_size = static_cast<int>(detail::to_long(k, v));
    else if (k == "file_size_bits") c.file_size_bits = detail::to_double(k, v);
    else if (k == "tx_rate_bps") c.tx_rate_bps = detail::to_double(k, v);
    else if (k == "spectral_efficiency") c.spectral_efficiency = detail::to_double(k, v);
    else if (k == "noise_power") c.noise_power = detail::to_double(k, v);
    else if (k == "power_levels") c.power_levels = detail::to_list(k, v);
    else if (k == "avg_power") c.avg_power_limit = detail::to_double(k, v);
    else if (k == "zipf") c.zipf_exponent = detail::to_double(k, v);
    else if (k == "arrival_rate") c.arrival_rate = detail::to_double(k, v);
    else if (k == "channel") {
      if (v == "rayleigh") s.channel.kind = ChannelSpec::Kind::rayleigh;
      else if (v == "uniform") s.channel.kind = ChannelSpec::Kind::uniform;
      else throw std::invalid_argument("channel: expected rayleigh or uniform");
    } else if (k == "bad_mean") s.channel.bad_mean = detail::to_double(k, v);
    else if (k == "good_mean") s.channel.good_mean = detail::to_double(k, v);
    else if (k == "bad_support") s.channel.bad_support = detail::to_list(k, v);
    else if (k == "good_support") s.channel.good_support = detail::to_list(k, v);
    else if (k == "horizon") c.horizon = detail::to_long(k, v);
    else if (k == "seed") {
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("seed: expected a non-negative integer");
      c.seed = std::stoull(v);
    } else if (k == "strategy") s.strategy = detail::to_strategy(v);
    else if (k == "steps") {
      if (v != "constant" && v != "decaying") throw std::invalid_argument("steps: expected constant or decaying");
      s.constant_steps = v == "constant";
    } else if (k == "value_rate") s.value_rate = detail::to_double(k, v);
    else if (k == "lagrange_rate") s.lagrange_rate = detail::to_double(k, v);
    else if (k == "schedule") {
      s.schedule.clear();
      if (!v.empty())
        for (const auto& item : detail::split(v, ',')) {
          auto colon = item.find(':');
          if (colon == std::string::npos) throw std::invalid_argument("schedule: expected duration:rate items");
          s.schedule.push_back({detail::to_double(k, detail::trim(item.substr(0, colon))),
                                detail::to_double(k, detail::trim(item.substr(colon + 1)))});
        }
    } else if (k == "output") s.output = v;
    else throw std::invalid_argument(k + ": unknown key");
  }
  if (s.name.empty()) throw std::invalid_argument("name: required key missing");
  s.system.channels = s.channel.build(s.system.num_users);
  s.validate();
  return s;
}

struct RunSummary {
  std::optional<double> sojourn_bad;   // requests arriving in the second half
  std::optional<double> sojourn_good;
  std::optional<double> sojourn_all;
  double avg_power_window = 0.0;  // trailing T_W at termination
  double avg_power_total = 0.0;   // whole run
  std::optional<double> beta;
  std::optional<StrategyParams> strategy;
  long transmissions = 0;
  double sim_time = 0.0;
};

inline std::function<bool(int)> users_of(const SystemConfig& c, ChannelClass cls) {
  return [&c, cls](int u) { return c.channels[static_cast<std::size_t>(u)].tag == cls; };
}

inline RunSummary summarize_trace(const SimTrace& tr, const SystemConfig& c) {
  RunSummary s;
  s.sojourn_bad = late_mean_sojourn(tr, users_of(c, ChannelClass::bad));
  s.sojourn_good = late_mean_sojourn(tr, users_of(c, ChannelClass::good));
  s.sojourn_all = late_mean_sojourn(tr);
  if (!tr.rows.empty()) {
    s.avg_power_window = tr.rows.back().avg_power;
    double sum = 0.0;
    for (const auto& r : tr.rows) sum += r.power;
    s.avg_power_total = sum / static_cast<double>(tr.rows.size());
  }
  s.transmissions = tr.transmissions();
  s.sim_time = tr.sim_time;
  return s;
}

inline void write_deliveries_csv(std::ostream& os, const SimTrace& tr, const SystemConfig& c) {
  os << "user,class,file,arrival_s,delivered_s,sojourn_s\n";
  for (const auto& d : tr.deliveries)
    os << d.user << ',' << (c.channels[static_cast<std::size_t>(d.user)].tag == ChannelClass::bad ? "bad" : "good")
       << ',' << d.file << ',' << format_g9(d.arrival) << ',' << format_g9(d.delivered) << ','
       << format_g9(d.sojourn()) << '\n';
}

inline void write_summary_csv(std::ostream& os, const Scenario& sc, const RunSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? format_g9(*v) : std::string(); };
  os << "key,value\n";
  os << "scenario," << sc.name << '\n';
  os << "algorithm," << to_string(sc.algorithm) << '\n';
  os << "seed," << sc.system.seed << '\n';
  os << "transmissions," << s.transmissions << '\n';
  os << "sim_time_s," << format_g9(s.sim_time) << '\n';
  os << "mean_sojourn_bad_s," << opt(s.sojourn_bad) << '\n';
  os << "mean_sojourn_good_s," << opt(s.sojourn_good) << '\n';
  os << "mean_sojourn_all_s," << opt(s.sojourn_all) << '\n';
  os << "avg_power_window_w," << format_g9(s.avg_power_window) << '\n';
  os << "avg_power_total_w," << format_g9(s.avg_power_total) << '\n';
  os << "beta," << opt(s.beta) << '\n';
  os << "p1," << (s.strategy ? format_g9(s.strategy->p[0]) : "") << '\n';
  os << "p2," << (s.strategy ? format_g9(s.strategy->p[1]) : "") << '\n';
  os << "p3," << (s.strategy ? format_g9(s.strategy->p[2]) : "") << '\n';
}

/// Builds a tiny spec from the states visited under `power` (channels must
/// be discrete so states repeat), with empirical visit frequencies as q.
inline TinyMdpSpec empirical_spec(const SystemConfig& c, const PolicyHandle& power, long horizon) {
  for (const auto& ch : c.channels)
    if (!std::holds_alternative<DiscreteUniform>(ch.dist))
      throw std::invalid_argument("oracle: needs discrete channel supports");
  World world(c);
  std::map<std::pair<std::vector<double>, std::vector<std::uint8_t>>, long> counts;
  for (long t = 0; t < horizon; ++t) {
    const auto& s = world.state();
    if (s.num_requesters() > 0) ++counts[{s.gains, s.requested}];
    world.step(power.decide(s), power.strategy);
  }
  long total = 0;
  for (const auto& [k, n] : counts) total += n;
  if (total == 0) throw std::domain_error("oracle: no busy states observed");
  TinyMdpSpec spec;
  spec.powers = c.power_levels;
  for (const auto& [k, n] : counts) {
    MdpState s{k.first, k.second};
    std::vector<double> row;
    for (double p : spec.powers) row.push_back(static_cast<double>(reward(s, p, c)));
    spec.reward.push_back(std::move(row));
    spec.q.push_back(static_cast<double>(n) / static_cast<double>(total));
    spec.states.push_back(std::move(s));
  }
  return spec;
}

/// Executes the scenario and writes <output>/<name>_{trace,deliveries,summary}.csv
/// (plus _dsgd.csv or _oracle.csv where applicable). Returns the summary.
inline RunSummary run_scenario(const Scenario& sc) {
  sc.validate();
  namespace fs = std::filesystem;
  fs::create_directories(sc.output);
  const auto base = (fs::path(sc.output) / sc.name).string();
  auto open = [](const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
  };

  const auto& c = sc.system;
  const long horizon = c.horizon;
  const double until = sc.schedule_end();
  SimTrace trace;
  std::optional<double> beta;
  std::optional<StrategyParams> strategy;

  switch (sc.algorithm) {
    case Algorithm::baseline_constant: {
      World world(c, sc.schedule);
      TraceRecorder rec;
      auto pol = constant_power_policy(c.avg_power_limit);
      for (long t = 0; t < horizon && world.now() < until; ++t) rec.record(world.step(pol(world.state()), sc.strategy));
      trace = rec.take(world);
      strategy = sc.strategy;
      break;
    }
    case Algorithm::dsgd: {
      auto r = run_dsgd(c, DsgdConfig{}, constant_power_policy(c.avg_power_limit), horizon, sc.schedule);
      auto f = open(base + "_dsgd.csv");
      write_dsgd_csv(f, r.iterations);
      trace = std::move(r.trace);
      strategy = r.strategy;
      break;
    }
    case Algorithm::acdqn: {
      auto r = acdqn_train(c, sc.acdqn_config(), sc.strategy, horizon, sc.schedule, until);
      trace = std::move(r.trace);
      beta = r.final_beta;
      strategy = sc.strategy;
      break;
    }
    case Algorithm::ida: {
      IdaConfig cfg;
      cfg.power = sc.acdqn_config();
      auto r = ida_train(c, cfg, horizon, sc.schedule);
      auto f = open(base + "_dsgd.csv");
      write_dsgd_csv(f, r.ticks);
      trace = std::move(r.trace);
      beta = r.final_beta;
      strategy = r.strategy;
      break;
    }
    case Algorithm::oracle: {
      PolicyHandle constant{constant_power_policy(c.avg_power_limit), sc.strategy};
      auto spec = empirical_spec(c, constant, horizon);
      auto o = lagrangian_oracle(spec, c.avg_power_limit);
      {
        auto f = open(base + "_oracle.csv");
        write_oracle_csv(f, spec, o);
      }
      std::map<std::pair<std::vector<double>, std::vector<std::uint8_t>>, double> table;
      for (std::size_t k = 0; k < spec.num_states(); ++k)
        table[{spec.states[k].gains, spec.states[k].requested}] = spec.powers[static_cast<std::size_t>(o.map[k])];
      const double fallback = c.avg_power_limit;
      PolicyHandle ph{[table = std::move(table), fallback](const MdpState& s) {
                        auto it = table.find({s.gains, s.requested});
                        return it == table.end() ? fallback : it->second;
                      },
                      sc.strategy};
      auto c2 = c;
      c2.seed = c.seed + 1;  // evaluate on fresh randomness
      trace = run(c2, ph, horizon, sc.schedule);
      beta = o.beta;
      strategy = sc.strategy;
      break;
    }
  }

  auto summary = summarize_trace(trace, c);
  summary.beta = beta;
  summary.strategy = strategy;
  {
    auto f = open(base + "_trace.csv");
    write_trace_csv(f, trace);
  }
  {
    auto f = open(base + "_deliveries.csv");
    write_deliveries_csv(f, trace, c);
  }
  {
    auto f = open(base + "_summary.csv");
    write_summary_csv(f, sc, summary);
  }
  return summary;
}

/// One line of `summarize` output.
struct CsvSummary {
  std::string path;
  std::string kind;  // "deliveries" or "trace"
  std::map<std::string, std::optional<double>> values;
};

namespace detail {

inline std::vector<std::string> read_header(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument(path + ": empty file");
  return split(trim(line), ',');
}

inline std::optional<double> cell(const std::vector<std::string>& row, std::size_t i, const std::string& path,
                                  long lineno) {
  if (i >= row.size()) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": missing column");
  if (row[i].empty()) return std::nullopt;
  return to_double(path + ":" + std::to_string(lineno), row[i]);
}

inline std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace detail

/// Reads a CSV written by run_scenario. Deliveries files give per-class
/// means and trailing-1000 means; trace files give power and learner stats.
inline CsvSummary summarize_csv(const std::string& path, std::size_t window = 1000) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument(path + ": cannot open");
  auto header = detail::read_header(f, path);
  CsvSummary out{path, "", {}};
  auto col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument(path + ": missing column " + name);
  };
  std::string line;
  long lineno = 1;
  if (!header.empty() && header[0] == "user") {
    out.kind = "deliveries";
    const auto ccls = col("class"), csoj = col("sojourn_s");
    std::vector<double> bad, good, all;
    while (std::getline(f, line)) {
      ++lineno;
      if (detail::trim(line).empty()) continue;
      auto row = detail::split(detail::trim(line), ',');
      auto v = detail::cell(row, csoj, path, lineno);
      if (!v) continue;
      if (csoj >= row.size() || ccls >= row.size()) throw std::invalid_argument(path + ": short row");
      (row[ccls] == "bad" ? bad : good).push_back(*v);
      all.push_back(*v);
    }
    auto tail = [&](const std::vector<double>& xs) { return trailing_mean(xs, window); };
    out.values["mean_sojourn_bad_s"] = detail::mean_of(bad);
    out.values["mean_sojourn_good_s"] = detail::mean_of(good);
    out.values["mean_sojourn_all_s"] = detail::mean_of(all);
    out.values["trailing_sojourn_bad_s"] = tail(bad);
    out.values["trailing_sojourn_good_s"] = tail(good);
    out.values["trailing_sojourn_all_s"] = tail(all);
  } else if (!header.empty() && header[0] == "step") {
    out.kind = "trace";
    const auto cpow = col("power_w"), cbeta = col("beta"), csoj = col("mean_sojourn_s");
    std::vector<double> power, soj;
    std::optional<double> beta;
    while (std::getline(f, line)) {
      ++lineno;
      if (detail::trim(line).empty()) continue;
      auto row = detail::split(detail::trim(line), ',');
      if (auto p = detail::cell(row, cpow, path, lineno)) power.push_back(*p);
      if (auto b = detail::cell(row, cbeta, path, lineno)) beta = b;
      if (auto s = detail::cell(row, csoj, path, lineno)) soj.push_back(*s);
    }
    out.values["transmissions"] = static_cast<double>(power.size());
    out.values["avg_power_total_w"] = detail::mean_of(power);
    out.values["trailing_power_w"] = trailing_mean(power, window);
    out.values["final_beta"] = beta;
    out.values["final_mean_sojourn_s"] = soj.empty() ? std::nullopt : std::optional<double>(soj.back());
  } else {
    throw std::invalid_argument(path + ": unrecognized CSV header");
  }
  return out;
}

}  // namespace mcast
