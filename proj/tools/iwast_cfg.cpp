// iwast-cfg: configurator CLI. Exit 0 on OK, 1 on ERR, 2 on transport failure.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "iwast/configurator.hpp"
#include "iwast/error.hpp"

namespace {

void print_metric(const iwast::cfg::MetricInfo& m) {
  std::printf("slot %d metric %d  %-16s poll=%us threshold=%s low=%g high=%g %s", m.slot, m.metric, m.kind.c_str(),
              m.poll_s, m.threshold ? "on" : "off", m.low, m.high, m.unit.c_str());
  if (m.hardware_wos_level) std::printf("  (hardware level %d dBSPL)", *m.hardware_wos_level);
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IWAST device configurator"};
  app.require_subcommand(1);

  std::string device;
  int slot = -1, metric = -1;
  std::optional<std::uint32_t> poll;
  std::optional<double> low, high;
  std::optional<std::string> threshold;
  bool as_json = false;
  std::optional<int> sf;
  std::optional<std::string> id_hex, keys_hex;

  app.add_option("--device", device, "tcp://host:port, host:port or http://host:port/runs/<id>")->required();
  app.add_flag("--json", as_json, "Print raw JSON");

  auto* list = app.add_subcommand("list", "Discover boards and metrics");
  auto* get = app.add_subcommand("get", "Show one metric");
  get->add_option("--slot", slot)->required();
  get->add_option("--metric", metric)->required();
  auto* set = app.add_subcommand("set", "Stage metric settings");
  set->add_option("--slot", slot)->required();
  set->add_option("--metric", metric)->required();
  set->add_option("--poll", poll, "Poll interval in seconds (0 = off)");
  set->add_option("--low", low, "Lower threshold, engineering units");
  set->add_option("--high", high, "Upper threshold, engineering units");
  set->add_option("--threshold", threshold, "on, off, or a dBSPL level for the microphone");
  auto* set_device = app.add_subcommand("set-device", "Stage radio settings");
  set_device->add_option("--sf", sf)->check(CLI::Range(7, 12));
  set_device->add_option("--id", id_hex, "16 hex digits");
  set_device->add_option("--keys", keys_hex, "72 hex digits");
  auto* save = app.add_subcommand("save", "Persist staged settings and sleep");
  auto* reboot = app.add_subcommand("reboot", "Reboot the motherboard");
  CLI11_PARSE(app, argc, argv);

  using namespace iwast::cfg;
  try {
    auto transport = open_device(device);
    Client client(*transport);
    if (*list) {
      const auto listing = client.discover();
      if (as_json) {
        nlohmann::json j = {{"device", listing.device}, {"boards", nlohmann::json::array()}};
        for (const auto& b : listing.boards) {
          nlohmann::json mj = nlohmann::json::array();
          for (const auto& m : b.metrics) mj.push_back(m.raw);
          j["boards"].push_back({{"slot", b.slot}, {"board", b.board}, {"firmware", b.firmware}, {"metrics", mj}});
        }
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << "device " << listing.device.dump() << "\n";
        for (const auto& b : listing.boards) {
          std::printf("slot %d: %s (fw %s)\n", b.slot, b.board.c_str(), b.firmware.c_str());
          for (const auto& m : b.metrics) {
            std::printf("  ");
            print_metric(m);
          }
        }
      }
    } else if (*get || *set) {
      const auto m = *get ? client.get(slot, metric) : client.set_metric(slot, metric, {poll, threshold, low, high});
      if (as_json) {
        std::cout << m.raw.dump(2) << "\n";
      } else {
        print_metric(m);
      }
    } else if (*set_device) {
      std::cout << client.set_device(sf, id_hex, keys_hex).dump(as_json ? 2 : -1) << "\n";
    } else if (*save) {
      client.save();
      std::cout << "saved\n";
    } else if (*reboot) {
      client.reboot();
      std::cout << "rebooted\n";
    }
  } catch (const TransportError& e) {
    std::fprintf(stderr, "iwast-cfg: %s\n", e.what());
    return 2;
  } catch (const iwast::Error& e) {
    std::fprintf(stderr, "ERR %s\n", e.what());
    return 1;
  }
  return 0;
}
