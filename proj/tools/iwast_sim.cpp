// iwast-sim: run scenarios, compare power reports, estimate lifetime, serve
// a simulated device to the configurator.
#include <CLI11.hpp>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>
#include <cstdio>
#include <iostream>

#include "iwast/device_server.hpp"
#include "iwast/error.hpp"
#include "iwast/lorawan_radio.hpp"
#include "iwast/sim_engine.hpp"

namespace {

using namespace iwast;

sim::RunResult run_file(const std::string& path, std::optional<double> horizon) {
  auto scenario = sim::load_scenario_file(path);
  if (horizon) scenario.horizon_s = *horizon;
  sim::Simulator s(std::move(scenario));
  return s.run();
}

void wait_for_signal() {
  boost::asio::io_context ioc;
  boost::asio::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([](const boost::system::error_code&, int) {});
  ioc.run();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IWAST platform simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir;
  std::optional<double> horizon;
  bool as_json = false;
  auto* run = app.add_subcommand("run", "Run a scenario and print its power report");
  run->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Write uplinks.jsonl, events.jsonl, ledger.json, report.json here");
  run->add_option("--horizon", horizon, "Override horizon_s");
  run->add_flag("--json", as_json, "Print the report as JSON");

  std::vector<std::string> compare_paths;
  auto* compare = app.add_subcommand("compare", "Run several scenarios and rank them by charge");
  compare->add_option("scenarios", compare_paths, "Scenario JSON files")->required()->check(CLI::ExistingFile);
  compare->add_option("--horizon", horizon, "Override horizon_s");
  compare->add_flag("--json", as_json, "Print the comparison as JSON");

  double max_years = 10.0;
  auto* lifetime = app.add_subcommand("lifetime", "Run until the battery depletes");
  lifetime->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  lifetime->add_option("--max-years", max_years, "Give up after this long")->capture_default_str();

  int sf = 11;
  std::size_t bytes = 36;
  auto* airtime = app.add_subcommand("airtime", "LoRa time-on-air");
  airtime->add_option("--sf", sf, "Spreading factor")->check(CLI::Range(7, 12))->capture_default_str();
  airtime->add_option("--bytes", bytes, "Application payload length")->capture_default_str();

  std::uint16_t port = 7700;
  std::string address = "127.0.0.1";
  auto* device = app.add_subcommand("device", "Serve a simulated motherboard's USB session over TCP");
  device->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  device->add_option("--port", port, "TCP port (0 = any)")->capture_default_str();
  device->add_option("--address", address, "Bind address")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto result = run_file(scenario_path, horizon);
      if (!out_dir.empty()) sim::write_artifacts(result, out_dir);
      if (as_json) {
        std::cout << energy::to_json(result.report).dump(2) << "\n";
      } else {
        std::cout << energy::to_table(result.report);
        std::cout << "uplinks: " << result.uplinks.size() << "  events: " << result.events_processed << "\n";
        if (result.depleted_at_s) std::printf("battery depleted at %.3f h\n", *result.depleted_at_s / 3600.0);
      }
      return 0;
    }
    if (*compare) {
      std::vector<energy::ComparisonEntry> entries;
      for (const auto& p : compare_paths) {
        const auto result = run_file(p, horizon);
        entries.push_back(energy::summarize(result.scenario, result.report));
      }
      energy::PowerReport summary;
      energy::attach_comparison(summary, entries);
      if (as_json) {
        std::cout << energy::to_json(summary).at("comparison").dump(2) << "\n";
      } else {
        for (std::size_t i = 0; i < summary.comparison.size(); ++i) {
          const auto& e = summary.comparison[i];
          std::printf("%zu. %-28s %12.3f uAh  avg %10.3f uA", i + 1, e.name.c_str(), e.total_uAh, e.avg_current_uA);
          if (e.projected_lifetime_h) std::printf("  lifetime %.1f h", *e.projected_lifetime_h);
          std::printf("\n");
        }
      }
      return 0;
    }
    if (*lifetime) {
      auto scenario = sim::load_scenario_file(scenario_path);
      const auto t = sim::lifetime_estimate(std::move(scenario), max_years * 365.0 * 86400.0);
      if (!t) {
        std::printf("battery survives %.1f years\n", max_years);
      } else {
        std::printf("depleted after %.3f h (%.2f days)\n", *t / 3600.0, *t / 86400.0);
      }
      return 0;
    }
    if (*airtime) {
      lorawan::RadioParams params;
      params.spreading_factor = sf;
      std::printf("SF%d %zu B: %.3f ms\n", sf, bytes, lorawan::airtime_s(params, bytes) * 1000.0);
      return 0;
    }
    if (*device) {
      auto scenario = sim::load_scenario_file(scenario_path);
      scenario.await_configuration = true;
      sim::Simulator s(std::move(scenario));
      cfg::DeviceServer server(s);
      const auto bound = server.start(address, port);
      std::printf("device listening on %s:%u\n", address.c_str(), bound);
      std::fflush(stdout);
      wait_for_signal();
      server.stop();
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "iwast-sim: %s\n", e.what());
    return 1;
  }
  return 0;
}
