#include "iwast/trace.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include "iwast/error.hpp"

namespace iwast::sim {

const AmbientSample& EnvTrace::ambient_at(double t) const {
  if (samples.empty()) throw Error(Errc::TraceExhausted, "trace has no ambient samples");
  if (t < samples.front().t) throw Error(Errc::TraceExhausted, "before first ambient sample");
  if (!hold_last && t > horizon) {
    throw Error(Errc::TraceExhausted, "t=" + std::to_string(t) + " past trace end " + std::to_string(horizon));
  }
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](double v, const AmbientSample& s) { return v < s.t; });
  return *std::prev(it);
}

double EnvTrace::lux_at(double t) const noexcept {
  if (samples.empty() || t < samples.front().t) return 0.0;
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](double v, const AmbientSample& s) { return v < s.t; });
  return std::prev(it)->lux;
}

std::optional<double> EnvTrace::sound_level_at(double t) const noexcept {
  std::optional<double> loudest;
  auto it = std::upper_bound(events.begin(), events.end(), t,
                             [](double v, const TraceEvent& e) { return v < e.t; });
  while (it != events.begin()) {
    --it;
    if (it->t < t - longest_sound_s_) break;
    if (const auto* s = std::get_if<SoundEvent>(&it->kind)) {
      if (t == it->t || t < it->t + s->duration_ms / 1000.0) {
        loudest = std::max(loudest.value_or(s->level_dbspl), s->level_dbspl);
      }
    }
  }
  return loudest;
}

void EnvTrace::push_sample(AmbientSample s) {
  horizon = std::max(horizon, s.t);
  samples.push_back(s);
}

void EnvTrace::push_event(TraceEvent e) {
  horizon = std::max(horizon, e.t);
  if (const auto* s = std::get_if<SoundEvent>(&e.kind)) {
    longest_sound_s_ = std::max(longest_sound_s_, s->duration_ms / 1000.0);
  }
  events.push_back(std::move(e));
}

namespace {

class TraceBuilder {
 public:
  void add(const nlohmann::json& j, std::size_t line_no) {
    try {
      if (!j.is_object()) throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": not an object");
      const double t = j.at("t").get<double>();
      if (t < 0) throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": negative time");
      if (t < last_t_) {
        throw Error(Errc::NonMonotonicTime, "line " + std::to_string(line_no) + ": t=" + std::to_string(t));
      }
      last_t_ = t;
      if (j.contains("ambient")) {
        add_ambient(t, j.at("ambient"));
      } else if (j.contains("event")) {
        add_event(t, j.at("event"), line_no);
      } else {
        throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": neither ambient nor event");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  EnvTrace take() { return std::move(trace_); }

 private:
  void add_ambient(double t, const nlohmann::json& a) {
    AmbientSample s = trace_.samples.empty() ? AmbientSample{} : trace_.samples.back();
    s.t = t;
    s.temp_c = a.value("temp_c", s.temp_c);
    s.pressure_hpa = a.value("pressure_hpa", s.pressure_hpa);
    s.humidity_pct = a.value("humidity_pct", s.humidity_pct);
    s.gas_resistance_ohm = a.value("gas_resistance_ohm", s.gas_resistance_ohm);
    s.lux = a.value("lux", s.lux);
    trace_.push_sample(s);
  }

  void add_event(double t, const nlohmann::json& e, std::size_t line_no) {
    const auto kind = e.at("kind").get<std::string>();
    TraceEvent ev{t, UsbAttach{}};
    if (kind == "sound") {
      ev.kind = SoundEvent{e.at("level_dbspl").get<double>(), e.value("duration_ms", 0.0)};
    } else if (kind == "button") {
      ev.kind = ButtonEvent{e.at("id").get<int>()};
    } else if (kind == "usb_attach") {
      ev.kind = UsbAttach{};
    } else if (kind == "usb_detach") {
      ev.kind = UsbDetach{};
    } else {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": unknown event kind '" + kind + "'");
    }
    trace_.push_event(std::move(ev));
  }

  EnvTrace trace_;
  double last_t_ = 0.0;
};

}  // namespace

EnvTrace load_trace(std::istream& in) {
  TraceBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    builder.add(j, line_no);
  }
  return builder.take();
}

EnvTrace load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open trace " + path);
  return load_trace(in);
}

EnvTrace trace_from_json(const nlohmann::json& lines) {
  if (!lines.is_array()) throw Error(Errc::ParseError, "inline trace must be an array");
  TraceBuilder builder;
  std::size_t line_no = 0;
  for (const auto& j : lines) builder.add(j, ++line_no);
  return builder.take();
}

std::string to_jsonl(const EnvTrace& trace) {
  // Merge samples and events by time, samples first on ties.
  std::ostringstream os;
  std::size_t si = 0, ei = 0;
  while (si < trace.samples.size() || ei < trace.events.size()) {
    const bool take_sample =
        ei >= trace.events.size() || (si < trace.samples.size() && trace.samples[si].t <= trace.events[ei].t);
    nlohmann::json j;
    if (take_sample) {
      const auto& s = trace.samples[si++];
      j = {{"t", s.t},
           {"ambient",
            {{"temp_c", s.temp_c},
             {"pressure_hpa", s.pressure_hpa},
             {"humidity_pct", s.humidity_pct},
             {"gas_resistance_ohm", s.gas_resistance_ohm},
             {"lux", s.lux}}}};
    } else {
      const auto& e = trace.events[ei++];
      nlohmann::json ev;
      if (const auto* s = std::get_if<SoundEvent>(&e.kind)) {
        ev = {{"kind", "sound"}, {"level_dbspl", s->level_dbspl}, {"duration_ms", s->duration_ms}};
      } else if (const auto* b = std::get_if<ButtonEvent>(&e.kind)) {
        ev = {{"kind", "button"}, {"id", b->id}};
      } else if (std::holds_alternative<UsbAttach>(e.kind)) {
        ev = {{"kind", "usb_attach"}};
      } else {
        ev = {{"kind", "usb_detach"}};
      }
      j = {{"t", e.t}, {"event", std::move(ev)}};
    }
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace iwast::sim
