// Piecewise-constant current accounting, battery/harvest state and the power
// report.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace iwast::energy {

inline constexpr double kSupplyVoltage = 3.3;
inline constexpr double kBatteryCapacity_uAh = 500000.0;

/// One row of the board power table. Currents in µA, durations in ms.
struct BoardPower {
  double active_uA = 0.0;
  double active_ms = 0.0;
  double inactive_uA = 0.0;
  std::optional<double> sleep_uA;

  double active_charge_uC() const noexcept { return active_uA * active_ms / 1000.0; }
};

/// Gas-sensor sub-states of the environmental board.
struct EnvFineProfile {
  double heater_uA = 14000.0;
  double heater_ms = 1710.0;
  double measure_uA = 1570.0;
  double measure_ms = 1850.0;
  double controller_uA = 1060.0;
  double sensor_sleep_uA = 1.0;

  double cycle_ms() const noexcept { return heater_ms + measure_ms; }
  double cycle_charge_uC() const noexcept {
    return (heater_uA * heater_ms + measure_uA * measure_ms) / 1000.0;
  }
};

struct PowerProfile {
  BoardPower motherboard{25400.0, 7000.0, 55.0, 55.0};
  BoardPower environmental{8430.0, 3520.0, 1060.0, std::nullopt};
  BoardPower microphone{4000.0, 500.0, 25.0, 1.0};
  BoardPower button{7300.0, 2000.0, 0.330, 0.330};
  BoardPower power_light{4000.0, 28.0, 3.2, 3.2};
  EnvFineProfile env_fine;
  bool env_fine_grained = true;
  /// Radio episode = airtime + this overhead (receive windows, processing).
  /// 7000 ms minus the SF11/36 B airtime, so that uplink reproduces the
  /// motherboard's active row exactly.
  double radio_overhead_ms = 6012.864;
  double supply_voltage = kSupplyVoltage;
};

// ---------------------------------------------------------------------------

using ChannelId = std::size_t;

struct Interval {
  double t0 = 0.0;
  double t1 = 0.0;
  double current_uA = 0.0;
  std::uint16_t label = 0;
};

/// Per-board current timeline. Each channel is a contiguous chain of
/// intervals; transition() closes the open interval and starts the next.
/// Per-label charge totals are kept even when interval retention is off.
class EnergyLedger {
 public:
  explicit EnergyLedger(double start_s = 0.0, bool retain_intervals = true);

  ChannelId add_channel(std::string name, double current_uA, std::string_view label);
  void transition(ChannelId ch, double t, double current_uA, std::string_view label);
  /// Ends every open interval at t. Further transitions are an error.
  void close(double t);

  std::size_t channel_count() const noexcept { return channels_.size(); }
  const std::string& channel_name(ChannelId ch) const { return channels_.at(ch).name; }
  std::optional<ChannelId> find_channel(std::string_view name) const;
  double current(ChannelId ch) const { return channels_.at(ch).open.current_uA; }
  std::string_view current_label(ChannelId ch) const { return labels_.at(channels_.at(ch).open.label); }
  double total_current() const noexcept;

  std::span<const Interval> intervals(ChannelId ch) const { return channels_.at(ch).closed; }
  const std::string& label_name(std::uint16_t id) const { return labels_.at(id); }

  /// µA·s accumulated per label over closed intervals.
  const std::map<std::string, double>& charge_by_label(ChannelId ch) const {
    return channels_.at(ch).totals_uAs;
  }

  double start() const noexcept { return start_; }
  double end() const noexcept { return end_; }
  bool closed() const noexcept { return closed_; }
  bool retains_intervals() const noexcept { return retain_; }

  nlohmann::json to_json() const;

 private:
  struct Channel {
    std::string name;
    Interval open;
    std::vector<Interval> closed;
    std::map<std::string, double> totals_uAs;
  };

  std::uint16_t intern(std::string_view label);
  void finish(Channel& c, double t);

  double start_;
  double end_;
  bool retain_;
  bool closed_ = false;
  std::vector<Channel> channels_;
  std::vector<std::string> labels_;
};

struct Charge {
  double uAh = 0.0;
  double mJ = 0.0;
};

struct Integration {
  std::map<std::string, Charge> per_board;
  Charge total;
};

/// Exact overlap integration over [t0, t1]. RangeOutsideLedger when the
/// window leaves the closed ledger span.
Integration integrate(const EnergyLedger& ledger, double t0, double t1,
                      double supply_voltage = kSupplyVoltage);

// ---------------------------------------------------------------------------

/// Linear photovoltaic surrogate: I = eta * min(k * lux, cap).
struct HarvestModel {
  double efficiency = 0.8;
  double uA_per_lux = 0.1;
  double cap_uA = 5000.0;

  double current_uA(double lux) const noexcept;
};

/// Charge added in µAh by `dt_s` seconds at constant `lux` (not capacity-clamped).
double harvest(double lux, double dt_s, const HarvestModel& model = {});

class Battery {
 public:
  explicit Battery(double capacity_uAh = kBatteryCapacity_uAh, double initial_uAh = kBatteryCapacity_uAh);

  /// Advances dt seconds at constant draw and harvest currents. Returns the
  /// offset into the step at which the charge reached zero, if it did.
  std::optional<double> advance(double draw_uA, double harvest_uA, double dt_s);

  double charge_uAh() const noexcept { return charge_; }
  double capacity_uAh() const noexcept { return capacity_; }
  double state_of_charge() const noexcept { return charge_ / capacity_; }
  bool depleted() const noexcept { return depleted_; }
  /// Linear map: 4200 mV at full, 3300 mV at empty.
  double voltage_mV() const noexcept { return 3300.0 + 900.0 * state_of_charge(); }

  double consumed_uAh() const noexcept { return consumed_; }
  double harvested_uAh() const noexcept { return harvested_; }
  /// Harvest discarded because the battery was full.
  double spilled_uAh() const noexcept { return spilled_; }

 private:
  double capacity_;
  double charge_;
  bool depleted_ = false;
  double consumed_ = 0.0;
  double harvested_ = 0.0;
  double spilled_ = 0.0;
};

// ---------------------------------------------------------------------------

struct LabelShare {
  std::string label;
  double uAh = 0.0;
  double mJ = 0.0;
  double share = 0.0;  // fraction of the board's charge
};

struct BoardReport {
  std::string board;
  double uAh = 0.0;
  double mJ = 0.0;
  double avg_current_uA = 0.0;
  std::vector<LabelShare> labels;
};

struct ComparisonEntry {
  std::string name;
  double total_uAh = 0.0;
  double avg_current_uA = 0.0;
  std::optional<double> projected_lifetime_h;
};

struct PowerReport {
  int report_version = 1;
  double duration_s = 0.0;
  std::vector<BoardReport> boards;
  double total_uAh = 0.0;
  double total_mJ = 0.0;
  double avg_current_uA = 0.0;
  double avg_harvest_uA = 0.0;
  std::optional<double> projected_lifetime_h;  // empty: harvest covers the draw
  nlohmann::json configuration;
  std::vector<ComparisonEntry> comparison;      // ascending total charge
};

PowerReport power_report(const EnergyLedger& ledger, const nlohmann::json& configuration,
                         double harvested_uAh = 0.0,
                         double capacity_uAh = kBatteryCapacity_uAh,
                         double supply_voltage = kSupplyVoltage);

ComparisonEntry summarize(std::string name, const PowerReport& report);
/// Fills report.comparison with the given runs ordered by total charge.
void attach_comparison(PowerReport& report, std::vector<ComparisonEntry> runs);

nlohmann::json to_json(const PowerReport& report);
std::string to_table(const PowerReport& report);

}  // namespace iwast::energy
