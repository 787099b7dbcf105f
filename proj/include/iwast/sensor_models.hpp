// Behavioural and power-state models of the four sensor boards.
//
// Each board owns an on-board controller that answers bus frames and raises a
// dedicated interrupt line when it has data for the motherboard. Time is
// simulated seconds; boards never read a clock, the host passes `now` in.
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iwast/bus_protocol.hpp"
#include "iwast/energy_model.hpp"
#include "iwast/trace.hpp"

namespace iwast::sensors {

// ---------------------------------------------------------------------------
// Environmental board: ULP cadence and request coalescing

inline constexpr double kUlpPeriod_s = 300.0;
inline constexpr double kCoalesceWindow_s = 30.0;

enum class EnvDecisionKind { ReuseLast, WaitForUlp, FreshMeasurement };

struct EnvDecision {
  EnvDecisionKind kind = EnvDecisionKind::ReuseLast;
  double ulp_time_s = 0.0;  // set for WaitForUlp
  bool operator==(const EnvDecision&) const = default;
};

EnvDecision env_schedule(double request_time_s, double last_ulp_s,
                         double window_s = kCoalesceWindow_s, double period_s = kUlpPeriod_s);

/// 500 * clamp(1 - R/baseline, 0, 1), rounded. Throws NonPositiveBaseline.
int iaq_surrogate(double gas_resistance_ohm, double baseline_ohm);

/// Running maximum of gas resistance over a trailing window. Falls back to
/// the seed value while the window holds no positive sample.
class IaqBaseline {
 public:
  explicit IaqBaseline(double seed_ohm = 100000.0, double window_s = 86400.0);
  void observe(double t, double resistance_ohm);
  double value(double t) const;

 private:
  double seed_;
  double window_;
  std::deque<std::pair<double, double>> maxima_;  // (t, R), R decreasing
};

struct EnvReading {
  std::int16_t temperature = 0;  // scaled LSBs, metric order 0..3
  std::int16_t pressure = 0;
  std::int16_t humidity = 0;
  std::int16_t iaq = 0;
  double measured_at_s = 0.0;

  std::array<std::int16_t, 4> values() const { return {temperature, pressure, humidity, iaq}; }
  bool operator==(const EnvReading&) const = default;
};

/// Quantises a trace sample and derives the IAQ index. Observes the sample
/// into the baseline first.
EnvReading env_measure(const sim::AmbientSample& sample, double t, IaqBaseline& baseline);

// ---------------------------------------------------------------------------
// Microphone

inline constexpr std::size_t kClipSamples = 400;
inline constexpr double kClipRate_hz = 20000.0;
inline constexpr double kClipDuration_s = kClipSamples / kClipRate_hz;
inline constexpr double kFullScaleSine_dB = 120.0;
inline constexpr double kLevelFloor_dB = 30.0;
inline constexpr double kWosLockout_s = 60.0;
inline constexpr std::array<int, 3> kWosLevels = {65, 77, 89};
inline constexpr double kMinSoftwareThreshold_dB = 65.0;
inline constexpr double kMaxSoftwareThreshold_dB = 100.0;

/// dBSPL of a clip of exactly 400 samples; full-scale sine is 120 dB, the
/// result never drops below 30 dB. Throws WrongClipLength.
double mic_level(std::span<const double> samples);

/// A 1 kHz sine (20 whole periods per clip) whose level is `level_db`,
/// clipped to [-1, 1].
std::vector<double> synthesize_clip(double level_db, double phase_rad = 0.0);

/// Highest hardware wake level not above the software threshold.
/// Throws ThresholdOutOfRange outside [65, 100].
int wos_map(double software_threshold_db);

enum class MicMode { WosArmed, PollingOff };

struct MicState {
  MicMode mode = MicMode::PollingOff;
  int hardware_wos_level = 65;
  double software_threshold_db = 65.0;
  double lockout_until_s = -std::numeric_limits<double>::infinity();
  double last_level_db = kLevelFloor_dB;
};

/// Result of a wake-on-sound: whether the hardware woke, and the level
/// reported to the motherboard if the software threshold was exceeded.
struct WosOutcome {
  bool woke = false;
  std::optional<double> notification_db;
};

/// Applies the hardware level, the lockout and the software threshold. On a
/// notification the lockout is extended to now + 60 s.
WosOutcome mic_on_sound(double event_level_db, double now_s, MicState& state);

// ---------------------------------------------------------------------------
// Thresholds (shared by every board)

struct ThresholdConfig {
  bool enabled = false;
  std::int16_t low = 0;
  std::int16_t high = 0;
};

/// Fires only on a crossing: previous value inside [low, high], new outside.
bool threshold_crossed(std::optional<std::int16_t> previous, std::int16_t next, const ThresholdConfig& cfg);

// ---------------------------------------------------------------------------
// Power / light board

inline constexpr double kLightPollPeriod_s = 16.0;

/// Light threshold check at a poll instant (a multiple of 16 s after board
/// start). Returns the quantised lux to report, if the threshold crossed.
/// Throws NotAPollInstant off-schedule.
std::optional<std::int16_t> light_poll(double now_s, double lux, const ThresholdConfig& threshold,
                                       std::optional<std::int16_t> previous, double board_start_s = 0.0);

// ---------------------------------------------------------------------------
// Button board

inline constexpr double kButtonLedEpisode_s = 1.7;

struct ButtonState {
  double active_until_s = -1.0;  // LED episode end
  int last_button = 0;
};

/// Registers a press: LED episode [now, now + 1.7 s], extended by a press
/// that lands inside a running episode. Throws BadButtonId.
void button_press(int id, double now_s, ButtonState& state);

// ---------------------------------------------------------------------------
// Board runtime

/// What a board needs from the simulation around it.
class BoardHost {
 public:
  virtual ~BoardHost() = default;
  virtual void schedule(std::uint8_t slot, double t, int tag) = 0;
  virtual void raise_interrupt(std::uint8_t slot, double t) = 0;
  virtual const sim::AmbientSample& ambient(double t) = 0;
  virtual double lux(double t) = 0;
  virtual std::optional<double> sound_level(double t) = 0;
  virtual double battery_mV() = 0;
  virtual void log(double t, std::string_view type, nlohmann::json detail) = 0;
  virtual energy::EnergyLedger& ledger() = 0;
};

class SensorBoard {
 public:
  SensorBoard(std::uint8_t slot, bus::BoardType type, BoardHost& host, const energy::PowerProfile& profile);
  virtual ~SensorBoard() = default;

  SensorBoard(const SensorBoard&) = delete;
  SensorBoard& operator=(const SensorBoard&) = delete;

  std::uint8_t slot() const noexcept { return slot_; }
  const bus::BoardDescriptor& descriptor() const noexcept { return descriptor_; }
  energy::ChannelId channel() const noexcept { return channel_; }

  /// One encoded request frame in, one encoded response out. nullopt models
  /// a board that does not answer (fault injection).
  std::optional<std::vector<std::uint8_t>> on_bus(std::span<const std::uint8_t> request, double now);

  bool interrupt_asserted() const noexcept { return !pending_.empty(); }
  void set_responsive(bool responsive) noexcept { responsive_ = responsive; }

  virtual void start(double t) = 0;
  void on_timer(double t, int tag);
  virtual nlohmann::json state_json() const;

  /// Every supply-on window of the board's sensing element.
  const std::vector<std::pair<double, double>>& supply_windows() const noexcept { return supply_windows_; }

 protected:
  static constexpr int kPhaseEnd = 0;

  struct Phase {
    double end_s;
    double current_uA;
    std::string label;
  };

  virtual void handle_timer(double t, int tag) = 0;
  virtual void handle_set_poll(const bus::SetPoll&, double) {}
  virtual void handle_set_thresh(const bus::SetThresh& cmd, double t);
  virtual void handle_read_now(std::uint16_t mask, double t) = 0;
  virtual void handle_set_enable(const bus::SetEnable& cmd, double t);

  /// Stages a value for the next GET_DATA and asserts the interrupt line.
  /// `measured_at` is the sampling instant when it precedes t.
  void post(std::uint8_t metric, std::int16_t value, double t, std::string_view cause,
            std::optional<double> measured_at = std::nullopt);
  void set_baseline(double t, double current_uA, std::string_view label);
  struct PhaseSpec {
    double duration_s;
    double current_uA;
    std::string_view label;
  };

  /// Starts back-to-back phases at t. If an episode is already running its
  /// last phase is extended to cover the new total duration instead.
  void begin_episode(double t, std::initializer_list<PhaseSpec> phases);
  bool in_episode(double t) const noexcept { return !phases_.empty() && t < phases_.back().end_s; }
  ThresholdConfig& threshold(std::uint8_t metric) { return thresholds_[metric]; }
  bool enabled(std::uint8_t metric) const;
  void record_supply(double from, double to) { supply_windows_.emplace_back(from, to); }

  std::uint8_t slot_;
  bus::BoardDescriptor descriptor_;
  BoardHost& host_;
  const energy::PowerProfile& profile_;
  energy::ChannelId channel_;

 private:
  void apply_power(double t);

  bool responsive_ = true;
  std::map<std::uint8_t, std::int16_t> pending_;
  std::map<std::uint8_t, ThresholdConfig> thresholds_;
  std::map<std::uint8_t, bool> enabled_;
  double baseline_uA_ = 0.0;
  std::string baseline_label_ = "sleep";
  std::deque<Phase> phases_;
  std::vector<std::pair<double, double>> supply_windows_;
};

class EnvironmentalBoard final : public SensorBoard {
 public:
  EnvironmentalBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile,
                     double iaq_seed_ohm = 100000.0);

  void start(double t) override;
  nlohmann::json state_json() const override;

  double last_ulp_time() const noexcept { return last_ulp_; }
  std::size_t ulp_count() const noexcept { return ulp_count_; }
  const std::optional<EnvReading>& last_ulp_values() const noexcept { return ulp_values_; }

 private:
  enum Tag : int { kUlp = 1, kMeasureDone = 2 };

  void handle_timer(double t, int tag) override;
  void handle_read_now(std::uint16_t mask, double t) override;
  void start_measurement(double t, bool ulp);
  void deliver(std::uint16_t mask, const EnvReading& reading, double t, std::string_view cause);

  IaqBaseline baseline_;
  double start_ = 0.0;
  double last_ulp_ = -1.0;
  std::size_t ulp_count_ = 0;
  std::optional<EnvReading> ulp_values_;
  std::optional<EnvReading> in_progress_;
  bool in_progress_is_ulp_ = false;
  double measure_end_ = -1.0;
  std::uint16_t waiting_current_ = 0;  // delivered when the running measurement ends
  std::uint16_t waiting_ulp_ = 0;      // delivered when the next ULP measurement ends
  std::array<std::optional<std::int16_t>, 4> previous_{};
};

class MicrophoneBoard final : public SensorBoard {
 public:
  MicrophoneBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile);

  void start(double t) override;
  /// A sound pulse begins at t with the given level.
  void on_sound(double level_db, double t);
  const MicState& state() const noexcept { return state_; }
  nlohmann::json state_json() const override;

 private:
  enum Tag : int { kClipReady = 1 };

  void handle_timer(double t, int tag) override;
  void handle_set_thresh(const bus::SetThresh& cmd, double t) override;
  void handle_set_enable(const bus::SetEnable& cmd, double t) override;
  void handle_read_now(std::uint16_t mask, double t) override;
  void refresh_baseline(double t);
  void capture(double level_db, double t, std::string_view cause);

  struct Clip {
    std::int16_t value;
    std::string cause;
    double captured_at_s;
  };

  MicState state_;
  std::deque<Clip> clips_;
};

class ButtonBoard final : public SensorBoard {
 public:
  ButtonBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile);

  void start(double t) override;
  void press(int id, double t);
  const ButtonState& state() const noexcept { return state_; }
  nlohmann::json state_json() const override;

 private:
  void handle_timer(double, int) override {}
  void handle_read_now(std::uint16_t mask, double t) override;

  ButtonState state_;
};

class PowerLightBoard final : public SensorBoard {
 public:
  PowerLightBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile);

  void start(double t) override;
  nlohmann::json state_json() const override;
  std::size_t light_polls() const noexcept { return light_polls_; }

 private:
  enum Tag : int { kLightPoll = 1 };
  static constexpr std::uint8_t kLightMetric = 0;
  static constexpr std::uint8_t kBatteryMetric = 1;

  void handle_timer(double t, int tag) override;
  void handle_set_thresh(const bus::SetThresh& cmd, double t) override;
  void handle_read_now(std::uint16_t mask, double t) override;
  void schedule_next_poll(double after);

  double start_ = 0.0;
  bool polling_ = false;
  double next_poll_ = -1.0;
  std::size_t light_polls_ = 0;
  std::optional<std::int16_t> previous_lux_;
  bool gauge_enabled_ = false;
};

}  // namespace iwast::sensors
