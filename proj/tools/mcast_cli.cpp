// Command-line runner: `run`, `summarize`, `list-scenarios`.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mcast/scenario.hpp"

using namespace mcast;

namespace {

// A config argument is either a built-in scenario name or a file path.
Scenario load_scenario(const std::string& arg) {
  if (auto b = find_builtin(arg)) return *b;
  std::ifstream f(arg);
  if (!f) throw std::invalid_argument("no built-in scenario or readable file named '" + arg + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string show(const std::optional<double>& v) { return v ? format_g9(*v) : "-"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multicast queueing and power-control experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write CSV traces");
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long> horizon;
  std::string out, algorithm;
  run_cmd->add_option("config", config, "Built-in scenario name or config file")->required();
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--horizon", horizon, "Number of transmissions");
  run_cmd->add_option("--out", out, "Output directory (overrides MCAST_OUT_DIR and the config)");
  run_cmd->add_option("--algorithm", algorithm, "baseline-constant | dsgd | acdqn | ida | oracle");

  auto* sum_cmd = app.add_subcommand("summarize", "Summarize trace or deliveries CSVs");
  std::vector<std::string> csvs;
  std::size_t window = 1000;
  sum_cmd->add_option("csv", csvs, "CSV files written by `run`")->required();
  sum_cmd->add_option("--window", window, "Trailing window in samples");

  auto* list_cmd = app.add_subcommand("list-scenarios", "List built-in scenarios");
  bool verbose = false;
  list_cmd->add_flag("-v,--verbose", verbose, "Print each scenario as a config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      Scenario sc = load_scenario(config);
      if (seed) sc.system.seed = *seed;
      if (horizon) sc.system.horizon = *horizon;
      if (!algorithm.empty()) sc.algorithm = parse_algorithm(algorithm);
      if (const char* env = std::getenv("MCAST_OUT_DIR"); env && *env) sc.output = env;
      if (!out.empty()) sc.output = out;
      auto s = run_scenario(sc);
      std::cout << "scenario " << sc.name << " (" << to_string(sc.algorithm) << ", seed " << sc.system.seed << ")\n"
                << "  transmissions      " << s.transmissions << "\n"
                << "  sim time (s)       " << format_g9(s.sim_time) << "\n"
                << "  sojourn bad (s)    " << show(s.sojourn_bad) << "\n"
                << "  sojourn good (s)   " << show(s.sojourn_good) << "\n"
                << "  sojourn all (s)    " << show(s.sojourn_all) << "\n"
                << "  power window (W)   " << format_g9(s.avg_power_window) << "\n"
                << "  power total (W)    " << format_g9(s.avg_power_total) << "\n"
                << "  beta               " << show(s.beta) << "\n";
      if (s.strategy)
        std::cout << "  strategy           " << format_g9(s.strategy->p[0]) << ' ' << format_g9(s.strategy->p[1])
                  << ' ' << format_g9(s.strategy->p[2]) << "\n";
      std::cout << "  output             " << sc.output << "/" << sc.name << "_*.csv\n";
    } else if (*sum_cmd) {
      for (const auto& path : csvs) {
        auto s = summarize_csv(path, window);
        std::cout << path << " [" << s.kind << "]\n";
        for (const auto& [k, v] : s.values) std::cout << "  " << k << " " << show(v) << "\n";
      }
    } else if (*list_cmd) {
      for (const auto& s : builtin_scenarios()) {
        if (verbose) {
          std::cout << "# " << s.name << "\n" << serialize(s) << "\n";
        } else {
          std::cout << s.name << "  L=" << s.system.num_users << " lambda=" << format_g9(s.system.arrival_rate)
                    << " P=" << format_g9(s.system.avg_power_limit) << " " << to_string(s.algorithm)
                    << (s.schedule.empty() ? "" : " (rate schedule)") << "\n";
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
