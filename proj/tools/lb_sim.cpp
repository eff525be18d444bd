// lb-sim: run a scenario on the virtual clock (or, with --real-time, a
// loopback throughput measurement) and print the report as JSON.

#include <CLI11.hpp>
#include <iostream>

#include "ejfat/error.hpp"
#include "ejfat/harness.hpp"
#include "ejfat/log.hpp"

int main(int argc, char** argv) {
  using namespace ejfat;
  log::init_from_env();

  CLI::App app{"Scenario runner for the load-balancer test bed"};
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  bool real_time = false;
  bool ledger = false;
  app.add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the scenario seed");
  app.add_flag("--real-time", real_time, "Real sockets on loopback with wall-clock time");
  app.add_flag("--ledger", ledger, "Include the per-event ledger in the report");
  CLI11_PARSE(app, argc, argv);

  try {
    auto scenario = harness::load_scenario(scenario_path);
    if (seed) {
      scenario.seed = *seed;
      scenario.impairment.seed = *seed;
    }
    if (real_time) {
      harness::ThroughputOptions o;
      o.events = scenario.sender.count;
      o.channels = scenario.sender.channels;
      o.size_per_channel = scenario.sender.size_per_channel;
      o.mtu = scenario.sender.mtu;
      o.rate_hz = scenario.sender.rate_hz;
      o.receivers = std::max<std::size_t>(1, scenario.receivers.size());
      o.ports_per_receiver = scenario.receivers.empty() ? 1 : scenario.receivers.front().port_count;
      o.seed = scenario.seed;
      std::cout << harness::run_throughput(o).to_json().dump(2) << '\n';
      return 0;
    }
    const auto report = harness::run_scenario(scenario);
    std::cout << report.to_json(ledger).dump(2) << '\n';
    return report.passed() ? 0 : 1;
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return 2;
  }
}
