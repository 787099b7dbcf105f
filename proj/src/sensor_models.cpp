#include "iwast/sensor_models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "iwast/error.hpp"

namespace iwast::sensors {

using bus::MetricKind;

EnvDecision env_schedule(double request_time_s, double last_ulp_s, double window_s, double period_s) {
  if (request_time_s - last_ulp_s <= window_s) return {EnvDecisionKind::ReuseLast, 0.0};
  const double next_ulp = last_ulp_s + period_s;
  if (next_ulp - request_time_s <= window_s) return {EnvDecisionKind::WaitForUlp, next_ulp};
  return {EnvDecisionKind::FreshMeasurement, 0.0};
}

int iaq_surrogate(double gas_resistance_ohm, double baseline_ohm) {
  if (!(baseline_ohm > 0.0)) throw Error(Errc::NonPositiveBaseline, std::to_string(baseline_ohm));
  const double r = std::max(gas_resistance_ohm, 0.0);
  const double fraction = std::clamp(1.0 - r / baseline_ohm, 0.0, 1.0);
  return static_cast<int>(std::lround(500.0 * fraction));
}

IaqBaseline::IaqBaseline(double seed_ohm, double window_s) : seed_(seed_ohm), window_(window_s) {}

void IaqBaseline::observe(double t, double resistance_ohm) {
  while (!maxima_.empty() && maxima_.back().second <= resistance_ohm) maxima_.pop_back();
  maxima_.emplace_back(t, resistance_ohm);
}

double IaqBaseline::value(double t) const {
  for (const auto& [ts, r] : maxima_) {
    if (ts > t - window_) return r > 0.0 ? r : seed_;
  }
  return seed_;
}

EnvReading env_measure(const sim::AmbientSample& sample, double t, IaqBaseline& baseline) {
  baseline.observe(t, sample.gas_resistance_ohm);
  EnvReading r;
  r.temperature = bus::quantize(MetricKind::Temperature, sample.temp_c);
  r.pressure = bus::quantize(MetricKind::Pressure, sample.pressure_hpa);
  r.humidity = bus::quantize(MetricKind::Humidity, sample.humidity_pct);
  r.iaq = static_cast<std::int16_t>(iaq_surrogate(sample.gas_resistance_ohm, baseline.value(t)));
  r.measured_at_s = t;
  return r;
}

// ---------------------------------------------------------------------------

double mic_level(std::span<const double> samples) {
  if (samples.size() != kClipSamples) {
    throw Error(Errc::WrongClipLength, std::to_string(samples.size()) + " samples");
  }
  double sum_sq = 0.0;
  for (double x : samples) sum_sq += x * x;
  const double rms = std::sqrt(sum_sq / static_cast<double>(samples.size()));
  if (rms <= 0.0) return kLevelFloor_dB;
  const double level = kFullScaleSine_dB + 20.0 * std::log10(rms * std::numbers::sqrt2);
  return std::max(level, kLevelFloor_dB);
}

std::vector<double> synthesize_clip(double level_db, double phase_rad) {
  constexpr double kToneHz = 1000.0;
  const double amplitude = std::pow(10.0, (level_db - kFullScaleSine_dB) / 20.0);
  std::vector<double> clip(kClipSamples);
  for (std::size_t i = 0; i < kClipSamples; ++i) {
    const double phase = 2.0 * std::numbers::pi * kToneHz * static_cast<double>(i) / kClipRate_hz + phase_rad;
    clip[i] = std::clamp(amplitude * std::sin(phase), -1.0, 1.0);
  }
  return clip;
}

int wos_map(double software_threshold_db) {
  if (!(software_threshold_db >= kMinSoftwareThreshold_dB && software_threshold_db <= kMaxSoftwareThreshold_dB)) {
    throw Error(Errc::ThresholdOutOfRange, std::to_string(software_threshold_db) + " dBSPL");
  }
  int level = kWosLevels.front();
  for (int l : kWosLevels) {
    if (l <= software_threshold_db) level = l;
  }
  return level;
}

WosOutcome mic_on_sound(double event_level_db, double now_s, MicState& state) {
  if (state.mode != MicMode::WosArmed) return {};
  if (event_level_db < state.hardware_wos_level) return {};
  if (now_s < state.lockout_until_s) return {};
  WosOutcome out;
  out.woke = true;
  const auto clip = synthesize_clip(event_level_db);
  state.last_level_db = mic_level(clip);
  if (state.last_level_db > state.software_threshold_db) {
    state.lockout_until_s = now_s + kWosLockout_s;
    out.notification_db = state.last_level_db;
  }
  return out;
}

bool threshold_crossed(std::optional<std::int16_t> previous, std::int16_t next, const ThresholdConfig& cfg) {
  if (!cfg.enabled || !previous) return false;
  const bool was_inside = *previous >= cfg.low && *previous <= cfg.high;
  const bool is_outside = next < cfg.low || next > cfg.high;
  return was_inside && is_outside;
}

std::optional<std::int16_t> light_poll(double now_s, double lux, const ThresholdConfig& threshold,
                                       std::optional<std::int16_t> previous, double board_start_s) {
  const double k = (now_s - board_start_s) / kLightPollPeriod_s;
  if (now_s < board_start_s || std::abs(k - std::round(k)) > 1e-9) {
    throw Error(Errc::NotAPollInstant, "t=" + std::to_string(now_s));
  }
  const std::int16_t value = bus::quantize(MetricKind::LightLevel, lux);
  if (threshold_crossed(previous, value, threshold)) return value;
  return std::nullopt;
}

void button_press(int id, double now_s, ButtonState& state) {
  if (id < 1 || id > 4) throw Error(Errc::BadButtonId, std::to_string(id));
  state.last_button = id;
  state.active_until_s = now_s + kButtonLedEpisode_s;
}

// ---------------------------------------------------------------------------
// SensorBoard

namespace {
constexpr std::uint8_t kNak = 0xFF;
}

SensorBoard::SensorBoard(std::uint8_t slot, bus::BoardType type, BoardHost& host,
                         const energy::PowerProfile& profile)
    : slot_(slot), descriptor_(bus::standard_descriptor(type)), host_(host), profile_(profile) {
  channel_ = host_.ledger().add_channel("slot" + std::to_string(slot) + ":" + std::string(bus::to_string(type)),
                                        0.0, "sleep");
}

std::optional<std::vector<std::uint8_t>> SensorBoard::on_bus(std::span<const std::uint8_t> request, double now) {
  if (!responsive_) return std::nullopt;
  bus::Frame req;
  try {
    req = bus::decode_frame(request);
  } catch (const Error& e) {
    host_.log(now, "diagnostic", {{"slot", slot_}, {"error", e.what()}});
    return std::nullopt;
  }
  bus::Frame resp{slot_, req.command, {}};
  try {
    switch (bus::to_command(req.command)) {
      case bus::Command::Ident:
        resp.payload = bus::encode_ident(descriptor_);
        break;
      case bus::Command::SetPoll:
        handle_set_poll(bus::decode_set_poll(req.payload), now);
        break;
      case bus::Command::SetThresh:
        handle_set_thresh(bus::decode_set_thresh(req.payload), now);
        break;
      case bus::Command::ReadNow:
        handle_read_now(bus::decode_read_now(req.payload).metric_mask, now);
        break;
      case bus::Command::GetData: {
        std::vector<bus::DataRecord> records;
        for (const auto& [metric, value] : pending_) records.push_back({metric, value});
        pending_.clear();
        resp.payload = bus::encode_data(records);
        break;
      }
      case bus::Command::SetEnable: {
        const auto cmd = bus::decode_set_enable(req.payload);
        enabled_[cmd.metric] = cmd.enabled;
        handle_set_enable(cmd, now);
        break;
      }
    }
  } catch (const Error& e) {
    host_.log(now, "diagnostic", {{"slot", slot_}, {"error", e.what()}});
    resp.command = kNak;
    resp.payload = {req.command};
  }
  return bus::encode_frame(resp);
}

void SensorBoard::on_timer(double t, int tag) {
  if (tag == kPhaseEnd) {
    while (!phases_.empty() && phases_.front().end_s <= t) phases_.pop_front();
    apply_power(t);
    return;
  }
  handle_timer(t, tag);
}

nlohmann::json SensorBoard::state_json() const {
  return {{"slot", slot_},
          {"board", bus::to_string(descriptor_.board_type)},
          {"interrupt", interrupt_asserted()},
          {"current_uA", host_.ledger().current(channel_)}};
}

void SensorBoard::handle_set_thresh(const bus::SetThresh& cmd, double) {
  thresholds_[cmd.metric] = {cmd.enabled, cmd.low, cmd.high};
}

void SensorBoard::handle_set_enable(const bus::SetEnable&, double) {}

bool SensorBoard::enabled(std::uint8_t metric) const {
  auto it = enabled_.find(metric);
  return it == enabled_.end() || it->second;
}

void SensorBoard::post(std::uint8_t metric, std::int16_t value, double t, std::string_view cause,
                       std::optional<double> measured_at) {
  pending_[metric] = value;
  const auto* m = descriptor_.find(metric);
  host_.log(t, "notify",
            {{"slot", slot_},
             {"metric", metric},
             {"kind", m ? bus::to_string(m->kind) : "unknown"},
             {"value", value},
             {"cause", cause},
             {"measured_at_s", measured_at.value_or(t)}});
  host_.raise_interrupt(slot_, t);
}

void SensorBoard::set_baseline(double t, double current_uA, std::string_view label) {
  baseline_uA_ = current_uA;
  baseline_label_ = label;
  apply_power(t);
}

void SensorBoard::begin_episode(double t, std::initializer_list<PhaseSpec> phases) {
  double total = 0.0;
  for (const auto& p : phases) total += p.duration_s;
  if (in_episode(t)) {
    const double end = t + total;
    if (end > phases_.back().end_s) {
      phases_.back().end_s = end;
      host_.schedule(slot_, end, kPhaseEnd);
    }
    return;
  }
  phases_.clear();
  double at = t;
  for (const auto& p : phases) {
    at += p.duration_s;
    phases_.push_back({at, p.current_uA, std::string(p.label)});
    host_.schedule(slot_, at, kPhaseEnd);
  }
  apply_power(t);
}

void SensorBoard::apply_power(double t) {
  if (phases_.empty()) {
    host_.ledger().transition(channel_, t, baseline_uA_, baseline_label_);
  } else {
    host_.ledger().transition(channel_, t, phases_.front().current_uA, phases_.front().label);
  }
}

// ---------------------------------------------------------------------------
// Environmental

EnvironmentalBoard::EnvironmentalBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile,
                                       double iaq_seed_ohm)
    : SensorBoard(slot, bus::BoardType::Environmental, host, profile), baseline_(iaq_seed_ohm) {}

void EnvironmentalBoard::start(double t) {
  start_ = t;
  if (profile_.env_fine_grained) {
    set_baseline(t, profile_.env_fine.controller_uA + profile_.env_fine.sensor_sleep_uA, "idle");
  } else {
    set_baseline(t, profile_.environmental.inactive_uA, "idle");
  }
  host_.schedule(slot_, t, kUlp);
}

void EnvironmentalBoard::handle_timer(double t, int tag) {
  if (tag == kUlp) {
    last_ulp_ = t;
    ++ulp_count_;
    start_measurement(t, true);
    host_.schedule(slot_, start_ + kUlpPeriod_s * static_cast<double>(ulp_count_), kUlp);
    return;
  }
  if (tag != kMeasureDone || t != measure_end_) return;

  const bool was_ulp = in_progress_is_ulp_;
  std::uint16_t mask = waiting_current_;
  if (was_ulp) mask |= waiting_ulp_;
  waiting_current_ = 0;
  if (was_ulp) waiting_ulp_ = 0;
  measure_end_ = -1.0;

  if (!in_progress_) {
    if (mask) host_.log(t, "diagnostic", {{"slot", slot_}, {"error", "measurement unavailable"}});
    return;
  }
  const auto values = in_progress_->values();
  for (std::uint8_t i = 0; i < values.size(); ++i) {
    if (enabled(i) && threshold_crossed(previous_[i], values[i], threshold(i))) {
      post(i, values[i], t, "threshold", in_progress_->measured_at_s);
    }
    previous_[i] = values[i];
  }
  deliver(mask, *in_progress_, t, "poll");
}

void EnvironmentalBoard::start_measurement(double t, bool ulp) {
  in_progress_.reset();
  try {
    in_progress_ = env_measure(host_.ambient(t), t, baseline_);
    host_.log(t, "measurement",
              {{"slot", slot_},
               {"cause", ulp ? "ulp" : "fresh"},
               {"values", {in_progress_->temperature, in_progress_->pressure, in_progress_->humidity,
                           in_progress_->iaq}}});
  } catch (const Error& e) {
    host_.log(t, "diagnostic", {{"slot", slot_}, {"error", e.what()}});
  }
  if (ulp) ulp_values_ = in_progress_;
  in_progress_is_ulp_ = ulp;

  double duration;
  if (profile_.env_fine_grained) {
    const auto& f = profile_.env_fine;
    begin_episode(t, {{f.heater_ms / 1000.0, f.heater_uA, ulp ? "ulp_heat" : "poll_heat"},
                      {f.measure_ms / 1000.0, f.measure_uA, ulp ? "ulp_measure" : "poll_measure"}});
    duration = f.cycle_ms() / 1000.0;
  } else {
    const auto& e = profile_.environmental;
    begin_episode(t, {{e.active_ms / 1000.0, e.active_uA, ulp ? "ulp_measure" : "poll_measure"}});
    duration = e.active_ms / 1000.0;
  }
  measure_end_ = t + duration;
  host_.schedule(slot_, measure_end_, kMeasureDone);
}

void EnvironmentalBoard::handle_read_now(std::uint16_t mask, double t) {
  mask &= 0x0F;
  if (mask == 0) return;
  if (t < measure_end_) {
    waiting_current_ |= mask;
    return;
  }
  const auto decision = env_schedule(t, last_ulp_);
  switch (decision.kind) {
    case EnvDecisionKind::ReuseLast:
      if (ulp_values_) {
        deliver(mask, *ulp_values_, t, "poll");
      } else {
        host_.log(t, "diagnostic", {{"slot", slot_}, {"error", "no ULP value to reuse"}});
      }
      break;
    case EnvDecisionKind::WaitForUlp:
      waiting_ulp_ |= mask;
      break;
    case EnvDecisionKind::FreshMeasurement:
      start_measurement(t, false);
      waiting_current_ |= mask;
      break;
  }
}

void EnvironmentalBoard::deliver(std::uint16_t mask, const EnvReading& reading, double t, std::string_view cause) {
  const auto values = reading.values();
  for (std::uint8_t i = 0; i < values.size(); ++i) {
    if (mask & (1u << i)) post(i, values[i], t, cause, reading.measured_at_s);
  }
}

nlohmann::json EnvironmentalBoard::state_json() const {
  auto j = SensorBoard::state_json();
  j["last_ulp_time_s"] = last_ulp_;
  j["ulp_count"] = ulp_count_;
  if (ulp_values_) {
    j["last_values"] = {ulp_values_->temperature, ulp_values_->pressure, ulp_values_->humidity, ulp_values_->iaq};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Microphone

MicrophoneBoard::MicrophoneBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile)
    : SensorBoard(slot, bus::BoardType::Microphone, host, profile) {}

void MicrophoneBoard::start(double t) { refresh_baseline(t); }

void MicrophoneBoard::refresh_baseline(double t) {
  if (state_.mode == MicMode::WosArmed) {
    set_baseline(t, profile_.microphone.inactive_uA, "wos_armed");
  } else {
    set_baseline(t, profile_.microphone.sleep_uA.value_or(0.0), "sleep");
  }
}

void MicrophoneBoard::handle_set_thresh(const bus::SetThresh& cmd, double t) {
  SensorBoard::handle_set_thresh(cmd, t);
  if (cmd.metric != 0) return;
  state_.mode = MicMode::PollingOff;
  if (cmd.enabled && enabled(0)) {
    const double threshold_db = bus::descale(MetricKind::SoundLevel, cmd.high);
    try {
      state_.hardware_wos_level = wos_map(threshold_db);
      state_.software_threshold_db = threshold_db;
      state_.mode = MicMode::WosArmed;
    } catch (const Error& e) {
      host_.log(t, "diagnostic", {{"slot", slot_}, {"error", e.what()}});
    }
  }
  refresh_baseline(t);
}

void MicrophoneBoard::handle_set_enable(const bus::SetEnable& cmd, double t) {
  if (cmd.metric == 0 && !cmd.enabled) {
    state_.mode = MicMode::PollingOff;
    refresh_baseline(t);
  }
}

void MicrophoneBoard::on_sound(double level_db, double t) {
  const auto outcome = mic_on_sound(level_db, t, state_);
  if (!outcome.woke) return;
  const auto& p = profile_.microphone;
  begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "wos_event"}});
  if (outcome.notification_db) {
    clips_.push_back({bus::quantize(MetricKind::SoundLevel, *outcome.notification_db), "wos", t});
    host_.schedule(slot_, t + kClipDuration_s, kClipReady);
  } else {
    host_.log(t, "wos_wake", {{"slot", slot_}, {"level_dbspl", state_.last_level_db}, {"notified", false}});
  }
}

void MicrophoneBoard::capture(double level_db, double t, std::string_view cause) {
  const auto& p = profile_.microphone;
  if (state_.mode == MicMode::PollingOff) record_supply(t, t + kClipDuration_s);
  begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "poll"}});
  const double level = level_db > 0 ? mic_level(synthesize_clip(level_db)) : kLevelFloor_dB;
  state_.last_level_db = level;
  clips_.push_back({bus::quantize(MetricKind::SoundLevel, level), std::string(cause), t});
  host_.schedule(slot_, t + kClipDuration_s, kClipReady);
}

void MicrophoneBoard::handle_read_now(std::uint16_t mask, double t) {
  if (!(mask & 0x01)) return;
  capture(host_.sound_level(t).value_or(0.0), t, "poll");
}

void MicrophoneBoard::handle_timer(double t, int tag) {
  if (tag != kClipReady || clips_.empty()) return;
  const Clip clip = clips_.front();
  clips_.pop_front();
  post(0, clip.value, t, clip.cause, clip.captured_at_s);
}

nlohmann::json MicrophoneBoard::state_json() const {
  auto j = SensorBoard::state_json();
  j["mode"] = state_.mode == MicMode::WosArmed ? "wos_armed" : "polling_off";
  j["hardware_wos_level"] = state_.hardware_wos_level;
  j["software_threshold_dbspl"] = state_.software_threshold_db;
  j["lockout_until_s"] = std::isfinite(state_.lockout_until_s) ? nlohmann::json(state_.lockout_until_s)
                                                                : nlohmann::json(nullptr);
  j["last_level_dbspl"] = state_.last_level_db;
  return j;
}

// ---------------------------------------------------------------------------
// Button

ButtonBoard::ButtonBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile)
    : SensorBoard(slot, bus::BoardType::Button, host, profile) {}

void ButtonBoard::start(double t) { set_baseline(t, profile_.button.sleep_uA.value_or(0.0), "sleep"); }

void ButtonBoard::press(int id, double t) {
  button_press(id, t, state_);
  const auto& p = profile_.button;
  begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "led_episode"}});
  if (enabled(0)) post(0, static_cast<std::int16_t>(id), t, "button");
}

void ButtonBoard::handle_read_now(std::uint16_t mask, double t) {
  if ((mask & 0x01) && state_.last_button > 0) post(0, static_cast<std::int16_t>(state_.last_button), t, "poll");
}

nlohmann::json ButtonBoard::state_json() const {
  auto j = SensorBoard::state_json();
  j["last_button"] = state_.last_button;
  j["active_until_s"] = state_.active_until_s;
  return j;
}

// ---------------------------------------------------------------------------
// Power / light

PowerLightBoard::PowerLightBoard(std::uint8_t slot, BoardHost& host, const energy::PowerProfile& profile)
    : SensorBoard(slot, bus::BoardType::PowerLight, host, profile) {}

void PowerLightBoard::start(double t) {
  start_ = t;
  set_baseline(t, profile_.power_light.sleep_uA.value_or(0.0), "sleep");
}

void PowerLightBoard::schedule_next_poll(double after) {
  const double k = std::floor((after - start_) / kLightPollPeriod_s) + 1.0;
  next_poll_ = start_ + k * kLightPollPeriod_s;
  host_.schedule(slot_, next_poll_, kLightPoll);
}

void PowerLightBoard::handle_set_thresh(const bus::SetThresh& cmd, double t) {
  SensorBoard::handle_set_thresh(cmd, t);
  if (cmd.metric != kLightMetric) return;
  const bool want = cmd.enabled;
  if (want && !polling_) schedule_next_poll(t);
  polling_ = want;
}

void PowerLightBoard::handle_timer(double t, int tag) {
  if (tag != kLightPoll || !polling_ || t != next_poll_) return;
  ++light_polls_;
  const auto& p = profile_.power_light;
  begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "light_poll"}});
  const double lux = host_.lux(t);
  if (const auto v = light_poll(t, lux, threshold(kLightMetric), previous_lux_, start_); v && enabled(kLightMetric)) {
    post(kLightMetric, *v, t, "threshold");
  }
  previous_lux_ = bus::quantize(MetricKind::LightLevel, lux);
  schedule_next_poll(t);
}

void PowerLightBoard::handle_read_now(std::uint16_t mask, double t) {
  const auto& p = profile_.power_light;
  if (mask & (1u << kLightMetric)) {
    begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "light_read"}});
    post(kLightMetric, bus::quantize(MetricKind::LightLevel, host_.lux(t)), t, "poll");
  }
  if (mask & (1u << kBatteryMetric)) {
    gauge_enabled_ = true;
    begin_episode(t, {{p.active_ms / 1000.0, p.active_uA, "battery_read"}});
    post(kBatteryMetric, bus::quantize(MetricKind::BatteryVoltage, host_.battery_mV()), t, "poll");
    gauge_enabled_ = false;
  }
}

nlohmann::json PowerLightBoard::state_json() const {
  auto j = SensorBoard::state_json();
  j["light_polling"] = polling_;
  j["light_polls"] = light_polls_;
  j["gauge_enabled"] = gauge_enabled_;
  return j;
}

}  // namespace iwast::sensors
