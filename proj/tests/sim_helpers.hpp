#pragma once

#include <string>

#include "iwast/sim_engine.hpp"

inline iwast::sim::Scenario scenario(const nlohmann::json& j) { return iwast::sim::scenario_from_json(j, IWAST_SCENARIO_DIR); }

inline iwast::sim::Scenario scenario_file(const std::string& name) {
  return iwast::sim::load_scenario_file(std::string(IWAST_SCENARIO_DIR) + "/" + name);
}

/// µA·s charged to one ledger label of one board channel.
inline double label_charge(const iwast::energy::EnergyLedger& ledger, const std::string& channel,
                           const std::string& label) {
  const auto ch = ledger.find_channel(channel);
  if (!ch) return 0.0;
  const auto& m = ledger.charge_by_label(*ch);
  auto it = m.find(label);
  return it == m.end() ? 0.0 : it->second;
}

inline std::vector<nlohmann::json> events_of(const iwast::sim::RunResult& r, std::string_view type) {
  std::vector<nlohmann::json> out;
  for (const auto& e : r.events) {
    if (e.at("type") == type) out.push_back(e);
  }
  return out;
}
