#include "iwast/motherboard.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "iwast/hex.hpp"
#include "iwast/sensor_models.hpp"

namespace iwast::mb {

using bus::MetricKind;

const MetricConfig& DeviceConfig::metric(std::uint8_t slot, std::uint8_t id) const {
  static const MetricConfig kDefault;
  auto it = metrics.find({slot, id});
  return it == metrics.end() ? kDefault : it->second;
}

namespace {

void check_generic(const MetricConfig& cfg) {
  if (cfg.poll_interval_s != 0 && cfg.poll_interval_s < kMinPollInterval_s) {
    throw Error(Errc::InvalidConfigValue,
                "poll interval " + std::to_string(cfg.poll_interval_s) + " s (must be 0 or >= 10)");
  }
  if (cfg.threshold_enabled && cfg.low > cfg.high) throw Error(Errc::InvalidConfigValue, "low > high");
}

}  // namespace

void validate(const MetricConfig& cfg, MetricKind kind) {
  check_generic(cfg);
  const auto& s = bus::scale_of(kind);
  if (cfg.low < s.min_lsb || cfg.low > s.max_lsb || cfg.high < s.min_lsb || cfg.high > s.max_lsb) {
    throw Error(Errc::InvalidConfigValue, "threshold outside the range of " + std::string(bus::to_string(kind)));
  }
  if (kind == MetricKind::SoundLevel && cfg.threshold_enabled) {
    const double db = bus::descale(kind, cfg.high);
    if (db < sensors::kMinSoftwareThreshold_dB || db > sensors::kMaxSoftwareThreshold_dB) {
      std::ostringstream os;
      os << "sound threshold " << db << " dBSPL outside [65, 100]";
      throw Error(Errc::InvalidConfigValue, os.str());
    }
  }
}

void validate(const DeviceConfig& cfg) {
  if (cfg.spreading_factor < 7 || cfg.spreading_factor > 12) {
    throw Error(Errc::InvalidConfigValue, "spreading factor " + std::to_string(cfg.spreading_factor));
  }
  for (const auto& [key, m] : cfg.metrics) {
    if (key.first >= bus::kSlotCount || key.second > 15) throw Error(Errc::InvalidConfigValue, "metric key");
    check_generic(m);
  }
}

// ---------------------------------------------------------------------------
// NVM

namespace {
constexpr std::array<std::uint8_t, 4> kMagic = {'I', 'W', 'S', 'T'};
constexpr std::size_t kHeaderBytes = 4 + 1 + 8 + 36 + 1 + 2;
constexpr std::size_t kEntryBytes = 11;
constexpr std::uint8_t kFlagThreshold = 0x01;
}  // namespace

std::vector<std::uint8_t> save_nvm(const DeviceConfig& cfg) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kNvmVersion);
  out.insert(out.end(), cfg.device_id.begin(), cfg.device_id.end());
  out.insert(out.end(), cfg.radio_keys.begin(), cfg.radio_keys.end());
  out.push_back(cfg.spreading_factor);
  bus::put_be16(out, static_cast<std::uint16_t>(cfg.metrics.size()));
  for (const auto& [key, m] : cfg.metrics) {
    out.push_back(key.first);
    out.push_back(key.second);
    bus::put_be32(out, m.poll_interval_s);
    out.push_back(m.threshold_enabled ? kFlagThreshold : 0);
    bus::put_be16(out, static_cast<std::uint16_t>(m.low));
    bus::put_be16(out, static_cast<std::uint16_t>(m.high));
  }
  out.push_back(bus::crc8(out));
  return out;
}

DeviceConfig load_nvm(std::span<const std::uint8_t> blob) {
  if (blob.size() < kHeaderBytes + 1) throw Error(Errc::NvmCorrupt, "blob too short");
  if (!std::equal(kMagic.begin(), kMagic.end(), blob.begin())) throw Error(Errc::NvmCorrupt, "bad magic");
  if (bus::crc8(blob.first(blob.size() - 1)) != blob.back()) throw Error(Errc::NvmCorrupt, "checksum mismatch");
  if (blob[4] != kNvmVersion) throw Error(Errc::NvmCorrupt, "unsupported version " + std::to_string(blob[4]));

  DeviceConfig cfg;
  std::size_t at = 5;
  std::copy_n(blob.begin() + at, 8, cfg.device_id.begin());
  at += 8;
  std::copy_n(blob.begin() + at, 36, cfg.radio_keys.begin());
  at += 36;
  cfg.spreading_factor = blob[at++];
  const std::size_t count = bus::get_be16(blob, at);
  at += 2;
  if (blob.size() != kHeaderBytes + count * kEntryBytes + 1) throw Error(Errc::NvmCorrupt, "length mismatch");
  for (std::size_t i = 0; i < count; ++i, at += kEntryBytes) {
    MetricConfig m;
    const MetricKey key{blob[at], blob[at + 1]};
    m.poll_interval_s = bus::get_be32(blob, at + 2);
    const std::uint8_t flags = blob[at + 6];
    if (flags & ~kFlagThreshold) throw Error(Errc::NvmCorrupt, "unknown flag bits");
    m.threshold_enabled = flags & kFlagThreshold;
    m.low = static_cast<std::int16_t>(bus::get_be16(blob, at + 7));
    m.high = static_cast<std::int16_t>(bus::get_be16(blob, at + 9));
    if (!cfg.metrics.emplace(key, m).second) throw Error(Errc::NvmCorrupt, "duplicate metric entry");
  }
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw Error(Errc::NvmCorrupt, e.what());
  }
  return cfg;
}

void NvmStore::write(std::vector<std::uint8_t> blob) {
  if (fail_writes_) throw Error(Errc::NvmWriteFailed, "injected write fault");
  blob_ = std::move(blob);
  ++writes_;
}

// ---------------------------------------------------------------------------

BootDecision boot_decision(double now, std::span<const std::uint8_t> nvm, std::optional<double> usb_attach_at) {
  BootDecision d;
  d.apply_at_s = now + kUsbWindow_s;
  if (!nvm.empty()) {
    try {
      d.config = load_nvm(nvm);
    } catch (const Error& e) {
      d.error = e.code();
    }
  }
  if (usb_attach_at && *usb_attach_at >= now && *usb_attach_at < d.apply_at_s) {
    d.outcome = BootOutcome::ConfigureSession;
  } else if (d.error) {
    d.outcome = BootOutcome::AwaitUsb;
  } else {
    d.outcome = BootOutcome::ApplyAndSleep;
  }
  return d;
}

void PollScheduler::reset(double anchor_s, const std::map<MetricKey, MetricConfig>& metrics) {
  next_.clear();
  for (const auto& [key, m] : metrics) {
    if (m.poll_interval_s == 0) continue;
    const double interval = m.poll_interval_s;
    next_[key] = {anchor_s + interval, interval};
  }
}

std::vector<MetricKey> PollScheduler::poll_due(double now) {
  std::vector<MetricKey> due;
  for (auto& [key, e] : next_) {
    if (e.next_s > now) continue;
    due.push_back(key);
    while (e.next_s <= now) e.next_s += e.interval_s;
  }
  return due;
}

std::optional<double> PollScheduler::next_due() const {
  std::optional<double> best;
  for (const auto& [key, e] : next_) {
    if (!best || e.next_s < *best) best = e.next_s;
  }
  return best;
}

void Accumulator::add(std::span<const lorawan::MeasurementRecord> records) {
  records_.insert(records_.end(), records.begin(), records.end());
}

std::vector<std::vector<std::uint8_t>> Accumulator::flush() {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t i = 0; i < records_.size(); i += lorawan::kMaxRecordsPerPacket) {
    const std::size_t n = std::min(lorawan::kMaxRecordsPerPacket, records_.size() - i);
    out.push_back(lorawan::build_payload(std::span(records_).subspan(i, n)));
  }
  records_.clear();
  return out;
}

std::string_view to_string(MbState s) noexcept {
  switch (s) {
    case MbState::Boot: return "boot";
    case MbState::UsbWait: return "usb_wait";
    case MbState::Configure: return "configuring";
    case MbState::Sleep: return "sleeping";
    case MbState::Service: return "servicing";
    case MbState::Transmit: return "transmitting";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Controller

Motherboard::Motherboard(MotherboardHost& host, const energy::PowerProfile& profile, NvmStore& nvm,
                         double duty_cycle)
    : host_(host),
      profile_(profile),
      nvm_(nvm),
      duty_cycle_(duty_cycle),
      tx_(lorawan::RadioParams{.duty_cycle = duty_cycle}, {}, profile.radio_overhead_ms / 1000.0) {
  channel_ = host_.ledger().add_channel("motherboard", 0.0, "off");
}

void Motherboard::set_power(double t) {
  double uA = 0.0;
  std::string_view label = "off";
  if (powered_) {
    switch (state_) {
      case MbState::Boot:
      case MbState::UsbWait:
      case MbState::Configure:
        uA = profile_.motherboard.inactive_uA;
        label = "usb_wait";
        break;
      case MbState::Sleep:
      case MbState::Service:
        uA = profile_.motherboard.sleep_uA.value_or(profile_.motherboard.inactive_uA);
        label = "sleep";
        break;
      case MbState::Transmit:
        uA = profile_.motherboard.active_uA;
        label = "uplink";
        break;
    }
  }
  host_.ledger().transition(channel_, t, uA, label);
}

void Motherboard::power_on(double t) {
  ++epoch_;
  powered_ = true;
  state_ = MbState::Boot;
  awaiting_usb_ = false;
  session_ended_ = false;
  service_scheduled_ = false;
  poll_timer_s_ = -1.0;
  polls_.clear();
  discover(t);

  const auto decision = boot_decision(t, nvm_.contents(), usb_attached_ ? std::optional(t) : std::nullopt);
  active_ = decision.config;
  staged_ = active_;
  window_end_s_ = decision.apply_at_s;
  if (decision.error) {
    host_.log(t, "diagnostic", {{"source", "motherboard"}, {"error", std::string(iwast::to_string(*decision.error))}});
  }
  switch (decision.outcome) {
    case BootOutcome::ConfigureSession:
      open_session(t);
      break;
    case BootOutcome::ApplyAndSleep:
      state_ = MbState::UsbWait;
      host_.schedule_motherboard(window_end_s_, tag(kWindowEnd));
      break;
    case BootOutcome::AwaitUsb:
      state_ = MbState::UsbWait;
      awaiting_usb_ = true;
      break;
  }
  set_power(t);
}

void Motherboard::reboot(double t) {
  host_.log(t, "reboot", {});
  power_on(t);
}

void Motherboard::discover(double t) {
  nlohmann::json boards = nlohmann::json::array();
  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    topology_[slot].reset();
    const auto resp = host_.bus_transfer(slot, bus::encode_frame({slot, std::uint8_t(bus::Command::Ident), {}}), t);
    if (!resp) continue;
    try {
      const auto frame = bus::decode_frame(*resp);
      topology_[slot] = bus::parse_ident(frame.payload);
      boards.push_back({{"slot", slot}, {"board", bus::to_string(topology_[slot]->board_type)}});
    } catch (const Error& e) {
      host_.log(t, "diagnostic", {{"source", "motherboard"}, {"slot", slot}, {"error", e.what()}});
    }
  }
  host_.log(t, "discovery", {{"boards", std::move(boards)}});
}

void Motherboard::usb_attach(double t) {
  usb_attached_ = true;
  if (!powered_) return;  // seen at power-on
  if (state_ == MbState::UsbWait && (awaiting_usb_ || t < window_end_s_)) {
    open_session(t);
  } else {
    host_.log(t, "diagnostic", {{"source", "motherboard"}, {"error", "USB attached outside the configuration window"}});
  }
}

void Motherboard::usb_detach(double t) {
  usb_attached_ = false;
  if (state_ != MbState::Configure) return;
  host_.log(t, "usb_session", {{"event", "detached"}, {"saved", false}});
  session_ended_ = true;
  staged_ = active_;
  if (awaiting_usb_) {
    state_ = MbState::UsbWait;
    set_power(t);
  } else {
    apply_config(t, active_);
  }
}

void Motherboard::open_session(double t) {
  state_ = MbState::Configure;
  staged_ = active_;
  session_ended_ = false;
  host_.log(t, "usb_session", {{"event", "open"}});
  set_power(t);
}

bus::Frame Motherboard::send(std::uint8_t slot, bus::Command cmd, std::vector<std::uint8_t> payload, double t) {
  const auto resp = host_.bus_transfer(slot, bus::encode_frame({slot, std::uint8_t(cmd), std::move(payload)}), t);
  if (!resp) throw Error(Errc::BusTimeout, "slot " + std::to_string(slot));
  auto frame = bus::decode_frame(*resp);
  if (frame.command != std::uint8_t(cmd)) {
    throw Error(Errc::UnknownCommand, "slot " + std::to_string(slot) + " rejected opcode " +
                                          std::to_string(std::uint8_t(cmd)));
  }
  return frame;
}

void Motherboard::apply_config(double t, const DeviceConfig& cfg) {
  state_ = MbState::Sleep;
  awaiting_usb_ = false;
  lorawan::RadioParams params;
  params.spreading_factor = cfg.spreading_factor;
  params.duty_cycle = duty_cycle_;
  tx_.reconfigure(params, cfg.device_id);

  std::map<MetricKey, MetricConfig> effective;
  for (const auto& [key, m] : cfg.metrics) {
    const auto& board = topology_[key.first];
    const auto* desc = board ? board->find(key.second) : nullptr;
    if (!desc) {
      host_.log(t, "diagnostic", {{"source", "motherboard"},
                                  {"slot", key.first},
                                  {"metric", key.second},
                                  {"error", "configured metric not present; ignored"}});
      continue;
    }
    try {
      validate(m, desc->kind);
      effective[key] = m;
    } catch (const Error& e) {
      host_.log(t, "diagnostic", {{"source", "motherboard"}, {"slot", key.first}, {"error", e.what()}});
    }
  }

  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    if (!topology_[slot]) continue;
    const bool always_on = topology_[slot]->board_type == bus::BoardType::Button;
    for (const auto& md : topology_[slot]->metrics) {
      auto it = effective.find({slot, md.metric_id});
      const MetricConfig m = it == effective.end() ? MetricConfig{} : it->second;
      const bool on = always_on || m.poll_interval_s > 0 || m.threshold_enabled;
      try {
        send(slot, bus::Command::SetEnable, bus::encode(bus::SetEnable{md.metric_id, on}), t);
        send(slot, bus::Command::SetPoll, bus::encode(bus::SetPoll{md.metric_id, m.poll_interval_s}), t);
        send(slot, bus::Command::SetThresh,
             bus::encode(bus::SetThresh{md.metric_id, m.threshold_enabled, m.low, m.high}), t);
      } catch (const Error& e) {
        host_.log(t, "diagnostic", {{"source", "motherboard"}, {"slot", slot}, {"error", e.what()}});
      }
    }
  }

  polls_.reset(t, effective);
  host_.log(t, "config_applied", {{"device", device_json(cfg)}, {"metrics", effective.size()}});
  set_power(t);
  schedule_poll();
  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    if (topology_[slot] && host_.interrupt_line(slot)) {
      on_interrupt(slot, t);
      break;
    }
  }
}

void Motherboard::schedule_poll() {
  const auto next = polls_.next_due();
  if (!next || *next == poll_timer_s_) return;
  poll_timer_s_ = *next;
  host_.schedule_motherboard(*next, tag(kPoll));
}

void Motherboard::run_polls(double t) {
  std::map<std::uint8_t, std::uint16_t> masks;
  for (const auto& [slot, metric] : polls_.poll_due(t)) masks[slot] |= static_cast<std::uint16_t>(1u << metric);
  for (const auto& [slot, mask] : masks) {
    nlohmann::json ids = nlohmann::json::array();
    for (std::uint8_t m = 0; m < 16; ++m) {
      if (mask & (1u << m)) ids.push_back(m);
    }
    host_.log(t, "poll_request", {{"slot", slot}, {"metrics", std::move(ids)}});
    try {
      send(slot, bus::Command::ReadNow, bus::encode(bus::ReadNow{mask}), t);
    } catch (const Error& e) {
      host_.log(t, "diagnostic", {{"source", "motherboard"}, {"slot", slot}, {"error", e.what()}});
    }
  }
}

void Motherboard::on_interrupt(std::uint8_t, double t) {
  if (state_ != MbState::Sleep && state_ != MbState::Transmit) return;
  if (service_scheduled_ && service_at_s_ == t) return;
  service_scheduled_ = true;
  service_at_s_ = t;
  host_.schedule_motherboard(t, tag(kService));
}

void Motherboard::on_timer(double t, int timer_tag) {
  if ((timer_tag >> 4) != epoch_) return;
  switch (timer_tag & 0xF) {
    case kWindowEnd:
      if (state_ == MbState::UsbWait && !awaiting_usb_) apply_config(t, active_);
      break;
    case kPoll:
      if (t != poll_timer_s_) return;
      poll_timer_s_ = -1.0;
      if (state_ == MbState::Sleep || state_ == MbState::Transmit) run_polls(t);
      schedule_poll();
      break;
    case kService:
      if (service_at_s_ == t) service_scheduled_ = false;
      service(t);
      break;
    case kTxRetry:
      if (t != tx_retry_s_) return;
      tx_retry_s_ = -1.0;
      pump(t);
      break;
    case kTxEnd:
      if (t != tx_end_s_) return;
      tx_end_s_ = -1.0;
      if (state_ == MbState::Transmit) state_ = MbState::Sleep;
      set_power(t);
      pump(t);
      break;
  }
}

std::vector<lorawan::MeasurementRecord> Motherboard::service_interrupt(std::uint8_t slot, double now) {
  const auto frame = send(slot, bus::Command::GetData, {}, now);
  std::vector<lorawan::MeasurementRecord> records;
  for (const auto& r : bus::decode_data(frame.payload)) records.push_back({slot, r.metric, r.value});
  accumulator_.add(records);
  return records;
}

void Motherboard::service(double t) {
  if (state_ != MbState::Sleep && state_ != MbState::Transmit) return;
  const MbState resume = state_;
  state_ = MbState::Service;
  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    if (!topology_[slot] || !host_.interrupt_line(slot)) continue;
    try {
      const auto records = service_interrupt(slot, t);
      host_.log(t, "service", {{"slot", slot}, {"records", records.size()}});
    } catch (const Error& e) {
      host_.log(t, "diagnostic", {{"source", "motherboard"}, {"slot", slot}, {"error", e.what()}});
    }
  }
  state_ = resume;
  for (auto& payload : accumulator_.flush()) tx_.enqueue(std::move(payload));
  pump(t);
}

void Motherboard::pump(double t) {
  if (tx_.idle() || t < tx_end_s_) return;
  double retry = t;
  auto started = tx_.try_start(t, &retry);
  if (!started) {
    if (retry > t && retry != tx_retry_s_) {
      tx_retry_s_ = retry;
      host_.log(t, "duty_defer", {{"until_s", retry}, {"queued", tx_.pending()}});
      host_.schedule_motherboard(retry, tag(kTxRetry));
    }
    return;
  }
  ++uplinks_;
  state_ = MbState::Transmit;
  tx_end_s_ = started->episode_end_s;
  host_.schedule_motherboard(tx_end_s_, tag(kTxEnd));
  set_power(t);
  host_.uplink(started->packet);
}

// ---------------------------------------------------------------------------
// USB session

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

double parse_number(std::string_view key, std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::InvalidConfigValue, std::string(key) + "=" + std::string(s));
  }
  return v;
}

std::int16_t to_lsb(MetricKind kind, std::string_view key, double value) {
  const auto& s = bus::scale_of(kind);
  const double lsb = value * s.lsb_per_unit;
  if (lsb < s.min_lsb - 0.5 || lsb > s.max_lsb + 0.5) {
    std::ostringstream os;
    os << key << "=" << value << " outside the range of " << bus::to_string(kind);
    throw Error(Errc::InvalidConfigValue, os.str());
  }
  return bus::quantize(kind, value);
}

std::string ok(const nlohmann::json& j) { return "OK " + j.dump(-1, ' ', true); }

}  // namespace

nlohmann::json Motherboard::device_json(const DeviceConfig& cfg) const {
  const bool keys_set = std::any_of(cfg.radio_keys.begin(), cfg.radio_keys.end(), [](auto b) { return b != 0; });
  return {{"device_id", to_hex(cfg.device_id)}, {"sf", cfg.spreading_factor}, {"radio_keys_set", keys_set}};
}

nlohmann::json Motherboard::metric_json(std::uint8_t slot, const bus::MetricDescriptor& m,
                                        const DeviceConfig& cfg) const {
  const auto& mc = cfg.metric(slot, m.metric_id);
  const auto& s = bus::scale_of(m.kind);
  nlohmann::json j = {{"slot", slot},
                      {"metric", m.metric_id},
                      {"kind", bus::to_string(m.kind)},
                      {"unit", s.unit},
                      {"scale", m.scale()},
                      {"range", {bus::descale(m.kind, s.min_lsb), bus::descale(m.kind, s.max_lsb)}},
                      {"poll_s", mc.poll_interval_s},
                      {"threshold", mc.threshold_enabled},
                      {"low", bus::descale(m.kind, mc.low)},
                      {"high", bus::descale(m.kind, mc.high)}};
  if (m.kind == MetricKind::SoundLevel) {
    j["threshold_range"] = {sensors::kMinSoftwareThreshold_dB, sensors::kMaxSoftwareThreshold_dB};
    if (mc.threshold_enabled) {
      try {
        j["hardware_wos_level"] = sensors::wos_map(bus::descale(m.kind, mc.high));
      } catch (const Error&) {
      }
    }
  }
  return j;
}

const bus::MetricDescriptor& Motherboard::lookup(const std::string& slot_arg, const std::string& metric_arg,
                                                 std::uint8_t& slot) const {
  auto strip = [](std::string s, std::string_view prefix) {
    if (s.rfind(prefix, 0) == 0) s.erase(0, prefix.size());
    return s;
  };
  const auto s = parse_int(strip(slot_arg, "slot"));
  if (!s || *s < 0 || *s >= bus::kSlotCount || !topology_[*s]) {
    throw Error(Errc::UnknownMetric, "no board in slot " + slot_arg);
  }
  slot = static_cast<std::uint8_t>(*s);
  const auto& board = *topology_[slot];
  const std::string metric = strip(metric_arg, "metric");
  if (const auto id = parse_int(metric)) {
    if (*id >= 0 && *id < 16) {
      if (const auto* m = board.find(static_cast<std::uint8_t>(*id))) return *m;
    }
  } else if (const auto kind = bus::metric_kind_from_string(metric)) {
    for (const auto& m : board.metrics) {
      if (m.kind == *kind) return m;
    }
  }
  throw Error(Errc::UnknownMetric, "slot " + slot_arg + " has no metric " + metric_arg);
}

std::string Motherboard::usb_command(std::string_view line, double t) {
  const auto args = split(line);
  if (state_ != MbState::Configure) {
    return session_ended_ ? "ERR SessionClosed" : "ERR NoDevice";
  }
  if (args.empty()) return "ERR UnknownCommand empty line";
  const std::string verb = upper(args[0]);
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (verb == "LIST") return cmd_list();
    if (verb == "GET") return cmd_get(rest);
    if (verb == "SET") return cmd_set(rest);
    if (verb == "SAVE") return cmd_save(t);
    if (verb == "REBOOT") {
      reboot(t);
      return "OK rebooted";
    }
    return "ERR UnknownCommand " + args[0];
  } catch (const Error& e) {
    std::string reply = "ERR " + std::string(iwast::to_string(e.code()));
    if (!e.detail().empty()) reply += " " + e.detail();
    return reply;
  }
}

std::string Motherboard::cmd_list() const {
  nlohmann::json boards = nlohmann::json::array();
  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    if (!topology_[slot]) continue;
    const auto& b = *topology_[slot];
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : b.metrics) metrics.push_back(metric_json(slot, m, staged_));
    boards.push_back({{"slot", slot},
                      {"board", bus::to_string(b.board_type)},
                      {"firmware", std::to_string(b.firmware.major) + "." + std::to_string(b.firmware.minor)},
                      {"metrics", std::move(metrics)}});
  }
  return ok({{"device", device_json(staged_)}, {"boards", std::move(boards)}});
}

std::string Motherboard::cmd_get(const std::vector<std::string>& args) const {
  if (args.size() == 1 && upper(args[0]) == "DEVICE") return ok(device_json(staged_));
  if (args.size() != 2) throw Error(Errc::UnknownMetric, "usage: GET <slot> <metric>");
  std::uint8_t slot = 0;
  const auto& m = lookup(args[0], args[1], slot);
  return ok(metric_json(slot, m, staged_));
}

std::string Motherboard::cmd_set(const std::vector<std::string>& args) {
  if (args.empty()) throw Error(Errc::UnknownMetric, "usage: SET <slot> <metric> key=value...");
  auto kv = [](const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::InvalidConfigValue, "expected key=value: " + arg);
    return std::pair{arg.substr(0, eq), arg.substr(eq + 1)};
  };

  if (upper(args[0]) == "DEVICE") {
    DeviceConfig next = staged_;
    for (std::size_t i = 1; i < args.size(); ++i) {
      const auto [key, value] = kv(args[i]);
      if (key == "sf") {
        const auto sf = parse_int(value);
        if (!sf || *sf < 7 || *sf > 12) throw Error(Errc::InvalidConfigValue, "sf=" + value);
        next.spreading_factor = static_cast<std::uint8_t>(*sf);
      } else if (key == "id") {
        const auto bytes = from_hex(value);
        if (!bytes || bytes->size() != next.device_id.size()) throw Error(Errc::InvalidConfigValue, "id=" + value);
        std::copy(bytes->begin(), bytes->end(), next.device_id.begin());
      } else if (key == "keys") {
        const auto bytes = from_hex(value);
        if (!bytes || bytes->size() != next.radio_keys.size()) throw Error(Errc::InvalidConfigValue, "keys");
        std::copy(bytes->begin(), bytes->end(), next.radio_keys.begin());
      } else {
        throw Error(Errc::InvalidConfigValue, "unknown device setting " + key);
      }
    }
    staged_ = std::move(next);
    return ok(device_json(staged_));
  }

  if (args.size() < 2) throw Error(Errc::UnknownMetric, "usage: SET <slot> <metric> key=value...");
  std::uint8_t slot = 0;
  const auto& desc = lookup(args[0], args[1], slot);
  MetricConfig mc = staged_.metric(slot, desc.metric_id);
  for (std::size_t i = 2; i < args.size(); ++i) {
    const auto [key, value] = kv(args[i]);
    if (key == "poll") {
      const auto v = parse_int(value);
      if (!v || *v < 0 || *v > 0xFFFFFFFFLL) throw Error(Errc::InvalidConfigValue, "poll=" + value);
      mc.poll_interval_s = static_cast<std::uint32_t>(*v);
    } else if (key == "threshold") {
      if (value == "on") {
        mc.threshold_enabled = true;
      } else if (value == "off") {
        mc.threshold_enabled = false;
      } else if (desc.kind == MetricKind::SoundLevel) {
        const double db = parse_number(key, value);
        if (db < sensors::kMinSoftwareThreshold_dB || db > sensors::kMaxSoftwareThreshold_dB) {
          throw Error(Errc::InvalidConfigValue, "threshold=" + value + " outside [65, 100] dBSPL");
        }
        mc.threshold_enabled = true;
        mc.low = 0;
        mc.high = to_lsb(desc.kind, key, db);
      } else {
        throw Error(Errc::InvalidConfigValue, "threshold=" + value + " (use on|off with low=/high=)");
      }
    } else if (key == "low") {
      mc.low = to_lsb(desc.kind, key, parse_number(key, value));
    } else if (key == "high") {
      mc.high = to_lsb(desc.kind, key, parse_number(key, value));
    } else {
      throw Error(Errc::InvalidConfigValue, "unknown setting " + key);
    }
  }
  validate(mc, desc.kind);
  staged_.metrics[{slot, desc.metric_id}] = mc;
  return ok(metric_json(slot, desc, staged_));
}

std::string Motherboard::cmd_save(double t) {
  validate(staged_);
  nvm_.write(save_nvm(staged_));
  active_ = staged_;
  session_ended_ = true;
  host_.log(t, "usb_session", {{"event", "saved"}, {"nvm_bytes", nvm_.contents().size()}});
  apply_config(t, active_);
  return "OK saved";
}

nlohmann::json Motherboard::state_json() const {
  nlohmann::json boards = nlohmann::json::array();
  for (std::uint8_t slot = 0; slot < bus::kSlotCount; ++slot) {
    if (topology_[slot]) boards.push_back({{"slot", slot}, {"board", bus::to_string(topology_[slot]->board_type)}});
  }
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& [key, m] : active_.metrics) {
    metrics.push_back({{"slot", key.first},
                       {"metric", key.second},
                       {"poll_s", m.poll_interval_s},
                       {"threshold", m.threshold_enabled},
                       {"low", m.low},
                       {"high", m.high}});
  }
  return {{"state", to_string(state_)},
          {"usb_attached", usb_attached_},
          {"awaiting_configuration", awaiting_usb_},
          {"topology", std::move(boards)},
          {"device", device_json(active_)},
          {"metrics", std::move(metrics)},
          {"accumulator", accumulator_.size()},
          {"uplinks", uplinks_},
          {"next_fcnt", tx_.next_fcnt()}};
}

}  // namespace iwast::mb
