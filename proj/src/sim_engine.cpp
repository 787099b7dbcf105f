#include "iwast/sim_engine.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "iwast/error.hpp"
#include "iwast/hex.hpp"

namespace iwast::sim {

void EventQueue::push(SimEvent e) {
  if (e.t < now_) throw std::logic_error("event scheduled in the past");
  e.seq = next_seq_++;
  heap_.push(e);
}

SimEvent EventQueue::pop() {
  if (heap_.empty()) throw Error(Errc::QueueEmpty);
  SimEvent e = heap_.top();
  heap_.pop();
  now_ = e.t;
  return e;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

bus::MetricDescriptor find_metric(const std::vector<BoardSpec>& topology, std::uint8_t slot,
                                  const nlohmann::json& metric) {
  for (const auto& b : topology) {
    if (b.slot != slot) continue;
    const auto desc = bus::standard_descriptor(b.type);
    for (const auto& m : desc.metrics) {
      if (metric.is_number_integer() && m.metric_id == metric.get<int>()) return m;
      if (metric.is_string() && bus::to_string(m.kind) == metric.get<std::string>()) return m;
    }
  }
  throw Error(Errc::UnknownMetric, "slot " + std::to_string(slot) + " metric " + metric.dump());
}

template <std::size_t N>
void hex_into(const nlohmann::json& j, const char* key, std::array<std::uint8_t, N>& out) {
  if (!j.contains(key)) return;
  const auto bytes = from_hex(j.at(key).get<std::string>());
  if (!bytes || bytes->size() != N) throw Error(Errc::InvalidConfigValue, std::string(key) + " must be " +
                                                                              std::to_string(N) + " hex bytes");
  std::copy(bytes->begin(), bytes->end(), out.begin());
}

}  // namespace

mb::DeviceConfig config_from_json(const nlohmann::json& j, const std::vector<BoardSpec>& topology) {
  mb::DeviceConfig cfg;
  hex_into(j, "device_id", cfg.device_id);
  hex_into(j, "radio_keys", cfg.radio_keys);
  cfg.spreading_factor = j.value("sf", 11);
  for (const auto& m : j.value("metrics", nlohmann::json::array())) {
    const auto slot = m.at("slot").get<std::uint8_t>();
    const auto desc = find_metric(topology, slot, m.at("metric"));
    mb::MetricConfig mc;
    mc.poll_interval_s = m.value("poll_s", 0u);
    const auto& th = m.value("threshold", nlohmann::json(false));
    if (th.is_number()) {
      mc.threshold_enabled = true;
      mc.high = bus::quantize(desc.kind, th.get<double>());
    } else {
      mc.threshold_enabled = th.get<bool>();
    }
    if (m.contains("low")) mc.low = bus::quantize(desc.kind, m.at("low").get<double>());
    if (m.contains("high")) mc.high = bus::quantize(desc.kind, m.at("high").get<double>());
    mb::validate(mc, desc.kind);
    cfg.metrics[{slot, desc.metric_id}] = mc;
  }
  mb::validate(cfg);
  return cfg;
}

nlohmann::json config_to_json(const mb::DeviceConfig& cfg, const std::vector<BoardSpec>& topology) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& [key, mc] : cfg.metrics) {
    nlohmann::json m = {{"slot", key.first}, {"metric", key.second}, {"poll_s", mc.poll_interval_s},
                        {"threshold", mc.threshold_enabled}};
    try {
      const auto desc = find_metric(topology, key.first, key.second);
      m["kind"] = bus::to_string(desc.kind);
      m["low"] = bus::descale(desc.kind, mc.low);
      m["high"] = bus::descale(desc.kind, mc.high);
    } catch (const Error&) {
      m["low_lsb"] = mc.low;
      m["high_lsb"] = mc.high;
    }
    metrics.push_back(std::move(m));
  }
  return {{"device_id", to_hex(cfg.device_id)}, {"sf", cfg.spreading_factor}, {"metrics", std::move(metrics)}};
}

Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    for (const auto& b : j.at("topology")) {
      BoardSpec spec;
      spec.slot = b.at("slot").get<std::uint8_t>();
      if (spec.slot >= bus::kSlotCount) throw Error(Errc::AddressOutOfRange, "slot " + std::to_string(spec.slot));
      const auto type = bus::board_type_from_string(b.at("board").get<std::string>());
      if (!type) throw Error(Errc::UnknownBoardType, b.at("board").get<std::string>());
      spec.type = *type;
      spec.responsive = b.value("responsive", true);
      for (const auto& other : s.topology) {
        if (other.slot == spec.slot) throw Error(Errc::InvalidConfigValue, "slot used twice");
      }
      s.topology.push_back(spec);
    }
    if (j.contains("config") && !j.at("config").is_null()) s.config = config_from_json(j.at("config"), s.topology);
    if (j.contains("trace")) {
      s.trace = trace_from_json(j.at("trace"));
    } else if (j.contains("trace_path")) {
      auto path = std::filesystem::path(j.at("trace_path").get<std::string>());
      if (path.is_relative()) path = base_dir / path;
      s.trace = load_trace_file(path.string());
    }
    s.horizon_s = j.value("horizon_s", s.horizon_s);
    s.seed = j.value("seed", s.seed);

    const auto opts = j.value("options", nlohmann::json::object());
    const auto mode = opts.value("env_mode", std::string("fine"));
    if (mode != "fine" && mode != "coarse") throw Error(Errc::InvalidConfigValue, "env_mode " + mode);
    s.profile.env_fine_grained = mode == "fine";
    s.duty_cycle = opts.value("duty_cycle", s.duty_cycle);
    s.trace.hold_last = opts.value("hold_trace", s.trace.hold_last);
    s.battery_capacity_uAh = opts.value("battery_capacity_uAh", s.battery_capacity_uAh);
    s.initial_charge_uAh = opts.value("initial_charge_uAh", s.battery_capacity_uAh);
    s.iaq_seed_ohm = opts.value("iaq_seed_ohm", s.iaq_seed_ohm);
    s.await_configuration = opts.value("await_configuration", false);
    s.usb_script = opts.value("usb_script", std::vector<std::string>{});
    s.retain_intervals = opts.value("retain_intervals", true);
    s.record_logs = opts.value("record_logs", true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("scenario: ") + e.what());
  }
  if (s.horizon_s < 0) throw Error(Errc::ParseError, "negative horizon");
  return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(Scenario scenario)
    : scenario_(std::move(scenario)),
      ledger_(0.0, scenario_.retain_intervals),
      battery_(scenario_.battery_capacity_uAh, scenario_.initial_charge_uAh) {
  if (scenario_.trace.samples.empty()) {
    scenario_.trace.samples.push_back(AmbientSample{});
    scenario_.trace.hold_last = true;
  }
  if (scenario_.nvm_blob) {
    nvm_.write(*scenario_.nvm_blob);
  } else if (scenario_.config) {
    nvm_.write(mb::save_nvm(*scenario_.config));
  }

  std::vector<BoardSpec> specs = scenario_.topology;
  std::sort(specs.begin(), specs.end(), [](const BoardSpec& a, const BoardSpec& b) { return a.slot < b.slot; });
  for (const auto& spec : specs) {
    auto& slot = boards_.at(spec.slot);
    if (slot) throw Error(Errc::InvalidConfigValue, "slot used twice");
    switch (spec.type) {
      case bus::BoardType::Environmental:
        slot = std::make_unique<sensors::EnvironmentalBoard>(spec.slot, *this, scenario_.profile,
                                                             scenario_.iaq_seed_ohm);
        break;
      case bus::BoardType::Microphone:
        slot = std::make_unique<sensors::MicrophoneBoard>(spec.slot, *this, scenario_.profile);
        break;
      case bus::BoardType::Button:
        slot = std::make_unique<sensors::ButtonBoard>(spec.slot, *this, scenario_.profile);
        break;
      case bus::BoardType::PowerLight:
        slot = std::make_unique<sensors::PowerLightBoard>(spec.slot, *this, scenario_.profile);
        break;
    }
    slot->set_responsive(spec.responsive);
  }
  mb_ = std::make_unique<mb::Motherboard>(*this, scenario_.profile, nvm_, scenario_.duty_cycle);

  for (const auto& spec : specs) push(0.0, Target::Board, spec.slot, SimEventKind::TimerFire, kBoardStart);
  push(0.0, Target::Motherboard, 0, SimEventKind::TimerFire, kPowerOn);
  schedule_next_trace_item();
}

Simulator::~Simulator() = default;

const sensors::SensorBoard* Simulator::board(std::uint8_t slot) const {
  return slot < boards_.size() ? boards_[slot].get() : nullptr;
}

void Simulator::push(double t, Target target, std::uint8_t slot, SimEventKind kind, int tag) {
  queue_.push({t, 0, target, slot, kind, tag});
}

void Simulator::schedule_next_trace_item() {
  const auto& tr = scenario_.trace;
  const bool have_sample = next_sample_ < tr.samples.size();
  const bool have_event = next_event_ < tr.events.size();
  if (!have_sample && !have_event) return;
  const bool sample_first = have_sample && (!have_event || tr.samples[next_sample_].t <= tr.events[next_event_].t);
  const double t = sample_first ? tr.samples[next_sample_].t : tr.events[next_event_].t;
  push(std::max(t, queue_.now()), Target::Trace, 0, SimEventKind::TraceSample, sample_first ? 0 : 1);
}

bool Simulator::advance_battery(double t) {
  const double dt = t - battery_t_;
  if (dt <= 0.0 || battery_.depleted()) return false;
  const double harvest_uA = scenario_.harvest.current_uA(scenario_.trace.lux_at(battery_t_));
  const auto offset = battery_.advance(ledger_.total_current(), harvest_uA, dt);
  if (offset) {
    const double at = battery_t_ + *offset;
    depleted_at_ = at;
    battery_t_ = at;
    for (energy::ChannelId ch = 0; ch < ledger_.channel_count(); ++ch) ledger_.transition(ch, at, 0.0, "depleted");
    log(at, "battery_depleted", {{"charge_uAh", battery_.charge_uAh()}});
    finished_ = true;
    return true;
  }
  battery_t_ = t;
  return false;
}

SimEvent Simulator::step() {
  const SimEvent e = queue_.pop();
  if (advance_battery(e.t)) return e;
  dispatch(e);
  ++processed_;
  return e;
}

void Simulator::dispatch(const SimEvent& e) {
  switch (e.target) {
    case Target::Board: {
      auto& b = boards_[e.slot];
      if (!b) return;
      if (e.tag == kBoardStart) {
        b->start(e.t);
      } else {
        b->on_timer(e.t, e.tag);
      }
      break;
    }
    case Target::Motherboard:
      if (e.kind == SimEventKind::Interrupt) {
        mb_->on_interrupt(e.slot, e.t);
      } else if (e.tag == kPowerOn) {
        if (scenario_.await_configuration) mb_->usb_attach(e.t);
        mb_->power_on(e.t);
        if (mb_->session_open()) run_usb_script(e.t);
      } else {
        mb_->on_timer(e.t, e.tag);
      }
      break;
    case Target::Trace:
      if (e.tag == 0) {
        ++next_sample_;
      } else {
        dispatch_trace(scenario_.trace.events[next_event_++]);
      }
      schedule_next_trace_item();
      break;
  }
}

void Simulator::dispatch_trace(const TraceEvent& e) {
  if (const auto* s = std::get_if<SoundEvent>(&e.kind)) {
    for (auto& b : boards_) {
      if (auto* mic = dynamic_cast<sensors::MicrophoneBoard*>(b.get())) mic->on_sound(s->level_dbspl, e.t);
    }
  } else if (const auto* p = std::get_if<ButtonEvent>(&e.kind)) {
    for (auto& b : boards_) {
      if (auto* button = dynamic_cast<sensors::ButtonBoard*>(b.get())) {
        try {
          button->press(p->id, e.t);
        } catch (const Error& err) {
          log(e.t, "diagnostic", {{"slot", button->slot()}, {"error", err.what()}});
        }
      }
    }
  } else if (std::holds_alternative<UsbAttach>(e.kind)) {
    mb_->usb_attach(e.t);
    if (mb_->session_open()) run_usb_script(e.t);
  } else {
    mb_->usb_detach(e.t);
  }
}

void Simulator::run_usb_script(double t) {
  for (const auto& line : scenario_.usb_script) {
    const auto reply = mb_->usb_command(line, t);
    log(t, "usb_command", {{"line", line}, {"reply", reply}});
  }
}

RunStatus Simulator::advance(std::size_t max_events) {
  for (std::size_t n = 0; !finished_; ++n) {
    if (n == max_events) return RunStatus::Running;
    if (awaiting_configuration()) return RunStatus::PausedForConfiguration;
    if (queue_.empty() || queue_.top().t >= scenario_.horizon_s) {
      advance_battery(scenario_.horizon_s);
      finished_ = true;
      break;
    }
    step();
  }
  return RunStatus::Finished;
}

RunResult Simulator::finish() {
  if (!finished_) throw std::logic_error("simulation not finished");
  if (ledger_.closed()) throw std::logic_error("finish() called twice");
  RunResult r;
  r.scenario = scenario_.name;
  r.end_s = depleted_at_.value_or(scenario_.horizon_s);
  r.depleted_at_s = depleted_at_;
  r.final_state = state_json();
  r.battery_uAh = battery_.charge_uAh();
  r.events_processed = processed_;
  ledger_.close(r.end_s);

  nlohmann::json topology = nlohmann::json::array();
  for (const auto& b : scenario_.topology) topology.push_back({{"slot", b.slot}, {"board", bus::to_string(b.type)}});
  const nlohmann::json configuration = {
      {"scenario", scenario_.name},
      {"topology", std::move(topology)},
      {"config", config_to_json(mb_->active_config(), scenario_.topology)},
      {"env_mode", scenario_.profile.env_fine_grained ? "fine" : "coarse"},
      {"duty_cycle", scenario_.duty_cycle},
      {"horizon_s", scenario_.horizon_s}};
  r.report = energy::power_report(ledger_, configuration, battery_.harvested_uAh(), scenario_.battery_capacity_uAh,
                                  scenario_.profile.supply_voltage);
  r.uplinks = std::move(uplinks_);
  r.events = std::move(events_);
  r.ledger = std::move(ledger_);
  return r;
}

RunResult Simulator::run() {
  if (advance() != RunStatus::Finished) throw std::logic_error("run paused waiting for a configuration session");
  return finish();
}

std::string Simulator::usb_command(const std::string& line) {
  const auto reply = mb_->usb_command(line, queue_.now());
  log(queue_.now(), "usb_command", {{"line", line}, {"reply", reply}});
  return reply;
}

void Simulator::reset_motherboard() { mb_->power_on(queue_.now()); }

bool Simulator::awaiting_configuration() const {
  return scenario_.await_configuration && !finished_ && mb_->session_open();
}

nlohmann::json Simulator::state_json() const {
  nlohmann::json boards = nlohmann::json::array();
  for (const auto& b : boards_) {
    if (b) boards.push_back(b->state_json());
  }
  return {{"t", queue_.now()},
          {"motherboard", mb_->state_json()},
          {"boards", std::move(boards)},
          {"battery",
           {{"charge_uAh", battery_.charge_uAh()},
            {"state_of_charge", battery_.state_of_charge()},
            {"voltage_mV", battery_.voltage_mV()},
            {"depleted", battery_.depleted()}}}};
}

// BoardHost

void Simulator::schedule(std::uint8_t slot, double t, int tag) {
  push(t, Target::Board, slot, SimEventKind::TimerFire, tag);
}

void Simulator::raise_interrupt(std::uint8_t slot, double t) {
  push(t, Target::Motherboard, slot, SimEventKind::Interrupt, 0);
}

const AmbientSample& Simulator::ambient(double t) { return scenario_.trace.ambient_at(t); }
double Simulator::lux(double t) { return scenario_.trace.lux_at(t); }
std::optional<double> Simulator::sound_level(double t) { return scenario_.trace.sound_level_at(t); }
double Simulator::battery_mV() { return battery_.voltage_mV(); }

void Simulator::log(double t, std::string_view type, nlohmann::json detail) {
  if (!scenario_.record_logs) return;
  nlohmann::json entry = {{"t", t}, {"type", type}};
  if (detail.is_object()) {
    for (auto& [k, v] : detail.items()) entry[k] = std::move(v);
  }
  events_.push_back(std::move(entry));
}

// MotherboardHost

void Simulator::schedule_motherboard(double t, int tag) {
  push(t, Target::Motherboard, 0, SimEventKind::TimerFire, tag);
}

std::optional<std::vector<std::uint8_t>> Simulator::bus_transfer(std::uint8_t slot,
                                                                 std::span<const std::uint8_t> frame, double t) {
  if (slot >= boards_.size() || !boards_[slot]) return std::nullopt;
  return boards_[slot]->on_bus(frame, t);
}

bool Simulator::interrupt_line(std::uint8_t slot) const {
  return slot < boards_.size() && boards_[slot] && boards_[slot]->interrupt_asserted();
}

void Simulator::uplink(const lorawan::UplinkPacket& packet) {
  if (!scenario_.record_logs) return;
  uplinks_.push_back(packet);
  log(packet.tx_time_s, "uplink",
      {{"fcnt", packet.fcnt},
       {"bytes", packet.payload.size()},
       {"records", packet.payload.size() / lorawan::kRecordBytes},
       {"sf", packet.spreading_factor},
       {"airtime_ms", packet.airtime_s * 1000.0},
       {"payload", to_hex(packet.payload)}});
}

// ---------------------------------------------------------------------------

std::optional<double> lifetime_estimate(Scenario scenario, double max_horizon_s) {
  scenario.retain_intervals = false;
  scenario.record_logs = false;
  scenario.horizon_s = max_horizon_s;
  scenario.trace.hold_last = true;
  Simulator sim(std::move(scenario));
  return sim.run().depleted_at_s;
}

std::string uplinks_jsonl(const RunResult& result) {
  std::string out;
  for (const auto& p : result.uplinks) out += lorawan::to_json(p).dump() + "\n";
  return out;
}

std::string events_jsonl(const RunResult& result) {
  std::string out;
  for (const auto& e : result.events) out += e.dump() + "\n";
  return out;
}

void write_artifacts(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("uplinks.jsonl", uplinks_jsonl(result));
  write("events.jsonl", events_jsonl(result));
  write("ledger.json", result.ledger.to_json().dump() + "\n");
  write("report.json", energy::to_json(result.report).dump(2) + "\n");
}

}  // namespace iwast::sim
