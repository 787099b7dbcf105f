// Deterministic discrete-event simulation of one motherboard with its sensor
// boards, driven by an environment trace.
#pragma once

#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iwast/energy_model.hpp"
#include "iwast/lorawan_radio.hpp"
#include "iwast/motherboard.hpp"
#include "iwast/sensor_models.hpp"
#include "iwast/trace.hpp"

namespace iwast::sim {

enum class Target : std::uint8_t { Board, Motherboard, Trace };
enum class SimEventKind : std::uint8_t { TimerFire, Interrupt, BusMessage, Uplink, TraceSample };

struct SimEvent {
  double t = 0.0;
  std::uint64_t seq = 0;
  Target target = Target::Motherboard;
  std::uint8_t slot = 0;
  SimEventKind kind = SimEventKind::TimerFire;
  int tag = 0;
};

/// Min-queue on (t, insertion order).
class EventQueue {
 public:
  /// Throws std::logic_error for t earlier than the last popped event.
  void push(SimEvent e);
  /// Throws QueueEmpty.
  SimEvent pop();
  const SimEvent& top() const { return heap_.top(); }
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }
  double now() const noexcept { return now_; }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
};

// ---------------------------------------------------------------------------

struct BoardSpec {
  std::uint8_t slot = 0;
  bus::BoardType type = bus::BoardType::Environmental;
  bool responsive = true;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<BoardSpec> topology;
  /// Written to NVM before power-on. Without it NVM starts empty.
  std::optional<mb::DeviceConfig> config;
  /// Raw NVM contents; overrides `config` (used to model corruption).
  std::optional<std::vector<std::uint8_t>> nvm_blob;
  EnvTrace trace;
  double horizon_s = 3600.0;
  std::uint64_t seed = 0;

  energy::PowerProfile profile;
  energy::HarvestModel harvest;
  double duty_cycle = 0.01;
  double battery_capacity_uAh = energy::kBatteryCapacity_uAh;
  double initial_charge_uAh = energy::kBatteryCapacity_uAh;
  double iaq_seed_ohm = 100000.0;

  /// USB attached at power-on; the run pauses in the session until SAVE or
  /// detach, driven through Simulator::usb_command.
  bool await_configuration = false;
  /// Lines executed whenever a USB session opens.
  std::vector<std::string> usb_script;

  bool retain_intervals = true;
  bool record_logs = true;
};

/// Scenario JSON; relative trace paths resolve against `base_dir`.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Scenario load_scenario_file(const std::filesystem::path& path);
/// Engineering-unit config JSON ({"device_id", "sf", "metrics": [...]}) for a topology.
mb::DeviceConfig config_from_json(const nlohmann::json& j, const std::vector<BoardSpec>& topology);
nlohmann::json config_to_json(const mb::DeviceConfig& cfg, const std::vector<BoardSpec>& topology);

struct RunResult {
  std::string scenario;
  std::vector<lorawan::UplinkPacket> uplinks;
  std::vector<nlohmann::json> events;
  energy::EnergyLedger ledger;
  energy::PowerReport report;
  nlohmann::json final_state;
  double end_s = 0.0;
  std::optional<double> depleted_at_s;
  double battery_uAh = 0.0;
  std::size_t events_processed = 0;
};

enum class RunStatus { Running, PausedForConfiguration, Finished };

class Simulator final : public sensors::BoardHost, public mb::MotherboardHost {
 public:
  explicit Simulator(Scenario scenario);
  ~Simulator() override;

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  /// Processes exactly one event. Throws QueueEmpty.
  SimEvent step();
  /// Runs every event before the horizon, or until the run pauses for a
  /// configuration session, the battery depletes, or `max_events` have been
  /// processed (then Running).
  RunStatus advance(std::size_t max_events = SIZE_MAX);
  /// Closes the ledger and builds the report. Call once, after advance()
  /// returned Finished.
  RunResult finish();
  /// advance() + finish(). Throws std::logic_error if the run pauses.
  RunResult run();

  /// One USB session line at the current simulated time.
  std::string usb_command(const std::string& line);
  bool awaiting_configuration() const;
  /// Re-powers the motherboard at the current time; the USB state is kept.
  void reset_motherboard();

  double now() const noexcept { return queue_.now(); }
  const mb::Motherboard& motherboard() const noexcept { return *mb_; }
  const sensors::SensorBoard* board(std::uint8_t slot) const;
  const energy::Battery& battery() const noexcept { return battery_; }
  const Scenario& scenario() const noexcept { return scenario_; }
  nlohmann::json state_json() const;

  // BoardHost
  void schedule(std::uint8_t slot, double t, int tag) override;
  void raise_interrupt(std::uint8_t slot, double t) override;
  const AmbientSample& ambient(double t) override;
  double lux(double t) override;
  std::optional<double> sound_level(double t) override;
  double battery_mV() override;
  void log(double t, std::string_view type, nlohmann::json detail) override;
  energy::EnergyLedger& ledger() override { return ledger_; }

  // MotherboardHost
  void schedule_motherboard(double t, int tag) override;
  std::optional<std::vector<std::uint8_t>> bus_transfer(std::uint8_t slot, std::span<const std::uint8_t> frame,
                                                        double t) override;
  bool interrupt_line(std::uint8_t slot) const override;
  void uplink(const lorawan::UplinkPacket& packet) override;

 private:
  enum BootTag : int { kBoardStart = -1, kPowerOn = -2 };

  void push(double t, Target target, std::uint8_t slot, SimEventKind kind, int tag);
  void schedule_next_trace_item();
  void dispatch(const SimEvent& e);
  void dispatch_trace(const TraceEvent& e);
  void run_usb_script(double t);
  bool advance_battery(double t);

  Scenario scenario_;
  EventQueue queue_;
  energy::EnergyLedger ledger_;
  energy::Battery battery_;
  mb::NvmStore nvm_;
  std::array<std::unique_ptr<sensors::SensorBoard>, bus::kSlotCount> boards_;
  std::unique_ptr<mb::Motherboard> mb_;

  std::vector<lorawan::UplinkPacket> uplinks_;
  std::vector<nlohmann::json> events_;
  std::size_t processed_ = 0;
  double battery_t_ = 0.0;
  std::optional<double> depleted_at_;
  std::size_t next_sample_ = 0;
  std::size_t next_event_ = 0;
  bool finished_ = false;
};

/// Scenario run with intervals and logs dropped, up to `max_horizon_s`.
/// Returns the depletion time, or nullopt when the battery survives.
std::optional<double> lifetime_estimate(Scenario scenario, double max_horizon_s = 10.0 * 365.0 * 86400.0);

/// uplinks.jsonl, events.jsonl, ledger.json, report.json.
void write_artifacts(const RunResult& result, const std::filesystem::path& dir);
std::string uplinks_jsonl(const RunResult& result);
std::string events_jsonl(const RunResult& result);

}  // namespace iwast::sim
