// Motherboard controller: NVM-backed configuration, the boot/USB window,
// poll scheduling, interrupt service, uplink accumulation and the USB text
// session used by the configurator.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "iwast/bus_protocol.hpp"
#include "iwast/energy_model.hpp"
#include "iwast/error.hpp"
#include "iwast/lorawan_radio.hpp"

namespace iwast::mb {

inline constexpr double kUsbWindow_s = 30.0;
inline constexpr std::uint32_t kMinPollInterval_s = 10;
inline constexpr double kBusTimeout_s = 0.1;

struct MetricConfig {
  std::uint32_t poll_interval_s = 0;  // 0 disables polling
  bool threshold_enabled = false;
  std::int16_t low = 0;  // scaled LSBs
  std::int16_t high = 0;
  bool operator==(const MetricConfig&) const = default;
};

using MetricKey = std::pair<std::uint8_t, std::uint8_t>;  // (slot, metric id)

struct DeviceConfig {
  lorawan::DeviceId device_id{};
  std::array<std::uint8_t, 36> radio_keys{};
  std::uint8_t spreading_factor = 11;
  std::map<MetricKey, MetricConfig> metrics;

  const MetricConfig& metric(std::uint8_t slot, std::uint8_t id) const;
  bool operator==(const DeviceConfig&) const = default;
};

/// Value rules for one metric of a given kind. Throws InvalidConfigValue.
void validate(const MetricConfig& cfg, bus::MetricKind kind);
/// Kind-independent rules (spreading factor, poll bounds, low <= high).
void validate(const DeviceConfig& cfg);

// ---------------------------------------------------------------------------
// NVM

inline constexpr std::uint8_t kNvmVersion = 1;

/// "IWST" | version | device_id | radio_keys | sf | count (BE16) |
/// count x (slot, metric, poll BE32, flags, low BE16, high BE16) | CRC-8.
std::vector<std::uint8_t> save_nvm(const DeviceConfig& cfg);
/// Throws NvmCorrupt on any framing, checksum or value error.
DeviceConfig load_nvm(std::span<const std::uint8_t> blob);

/// Non-volatile memory with a write fault hook. A failed write leaves the
/// previous contents untouched.
class NvmStore {
 public:
  const std::vector<std::uint8_t>& contents() const noexcept { return blob_; }
  bool empty() const noexcept { return blob_.empty(); }
  void write(std::vector<std::uint8_t> blob);
  void inject_write_fault(bool fail) noexcept { fail_writes_ = fail; }
  std::size_t writes() const noexcept { return writes_; }

 private:
  std::vector<std::uint8_t> blob_;
  bool fail_writes_ = false;
  std::size_t writes_ = 0;
};

// ---------------------------------------------------------------------------
// Pure pieces of the controller

enum class BootOutcome { ConfigureSession, ApplyAndSleep, AwaitUsb };

struct BootDecision {
  BootOutcome outcome = BootOutcome::ApplyAndSleep;
  DeviceConfig config;           // NVM contents, or defaults
  std::optional<Errc> error;     // NvmCorrupt
  double apply_at_s = 0.0;       // end of the USB window
};

/// What a motherboard powered at `now` does next. An empty blob means
/// factory defaults; a corrupt one blocks until a configurator attaches.
BootDecision boot_decision(double now, std::span<const std::uint8_t> nvm, std::optional<double> usb_attach_at);

/// Per-(slot, metric) periodic schedule anchored at the config-apply time.
class PollScheduler {
 public:
  void reset(double anchor_s, const std::map<MetricKey, MetricConfig>& metrics);
  void clear() { next_.clear(); }
  /// Every key whose next poll is <= now, each advanced past now.
  std::vector<MetricKey> poll_due(double now);
  std::optional<double> next_due() const;

 private:
  struct Entry {
    double next_s;
    double interval_s;
  };
  std::map<MetricKey, Entry> next_;
};

/// Collects the records of one wake episode; a flush splits them into
/// payloads of at most 12 records (36 bytes).
class Accumulator {
 public:
  void add(std::span<const lorawan::MeasurementRecord> records);
  std::size_t size() const noexcept { return records_.size(); }
  std::vector<std::vector<std::uint8_t>> flush();

 private:
  std::vector<lorawan::MeasurementRecord> records_;
};

// ---------------------------------------------------------------------------
// Controller

enum class MbState { Boot, UsbWait, Configure, Sleep, Service, Transmit };
std::string_view to_string(MbState s) noexcept;

class MotherboardHost {
 public:
  virtual ~MotherboardHost() = default;
  virtual void schedule_motherboard(double t, int tag) = 0;
  /// One request frame to the board in `slot`; nullopt when nothing answers
  /// within the bus timeout.
  virtual std::optional<std::vector<std::uint8_t>> bus_transfer(std::uint8_t slot,
                                                                std::span<const std::uint8_t> frame, double t) = 0;
  virtual bool interrupt_line(std::uint8_t slot) const = 0;
  virtual void uplink(const lorawan::UplinkPacket& packet) = 0;
  virtual void log(double t, std::string_view type, nlohmann::json detail) = 0;
  virtual energy::EnergyLedger& ledger() = 0;
};

class Motherboard {
 public:
  Motherboard(MotherboardHost& host, const energy::PowerProfile& profile, NvmStore& nvm,
              double duty_cycle = 0.01);

  void power_on(double t);
  void usb_attach(double t);
  void usb_detach(double t);
  /// One line of the USB session; returns the reply line without newline.
  std::string usb_command(std::string_view line, double t);

  void on_interrupt(std::uint8_t slot, double t);
  void on_timer(double t, int tag);

  /// GET_DATA to one slot; records go to the accumulator. Throws BusTimeout.
  std::vector<lorawan::MeasurementRecord> service_interrupt(std::uint8_t slot, double now);

  MbState state() const noexcept { return state_; }
  bool session_open() const noexcept { return state_ == MbState::Configure; }
  bool usb_attached() const noexcept { return usb_attached_; }
  const bus::Topology& topology() const noexcept { return topology_; }
  const DeviceConfig& active_config() const noexcept { return active_; }
  const DeviceConfig& staged_config() const noexcept { return staged_; }
  const lorawan::Transmitter& transmitter() const noexcept { return tx_; }
  nlohmann::json state_json() const;

 private:
  enum TimerKind : int { kWindowEnd = 1, kPoll = 2, kService = 3, kTxRetry = 4, kTxEnd = 5 };

  int tag(TimerKind kind) const noexcept { return (epoch_ << 4) | kind; }
  void set_power(double t);
  void discover(double t);
  void open_session(double t);
  void apply_config(double t, const DeviceConfig& cfg);
  bus::Frame send(std::uint8_t slot, bus::Command cmd, std::vector<std::uint8_t> payload, double t);
  void schedule_poll();
  void run_polls(double t);
  void service(double t);
  void pump(double t);
  void reboot(double t);

  std::string cmd_list() const;
  std::string cmd_get(const std::vector<std::string>& args) const;
  std::string cmd_set(const std::vector<std::string>& args);
  std::string cmd_save(double t);
  nlohmann::json metric_json(std::uint8_t slot, const bus::MetricDescriptor& m, const DeviceConfig& cfg) const;
  nlohmann::json device_json(const DeviceConfig& cfg) const;
  const bus::MetricDescriptor& lookup(const std::string& slot_arg, const std::string& metric_arg,
                                      std::uint8_t& slot) const;

  MotherboardHost& host_;
  const energy::PowerProfile& profile_;
  NvmStore& nvm_;
  double duty_cycle_;
  energy::ChannelId channel_;

  MbState state_ = MbState::Boot;
  int epoch_ = 0;
  bool powered_ = false;
  bool usb_attached_ = false;
  bool session_ended_ = false;
  bool awaiting_usb_ = false;  // corrupt NVM: wait for a configurator indefinitely
  double window_end_s_ = 0.0;
  bus::Topology topology_{};
  DeviceConfig active_;
  DeviceConfig staged_;
  PollScheduler polls_;
  Accumulator accumulator_;
  lorawan::Transmitter tx_;
  bool service_scheduled_ = false;
  double service_at_s_ = -1.0;
  double poll_timer_s_ = -1.0;
  double tx_end_s_ = -1.0;
  double tx_retry_s_ = -1.0;
  std::size_t uplinks_ = 0;
};

}  // namespace iwast::mb
