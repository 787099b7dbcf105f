// Environment traces: ambient samples (zero-order hold) and discrete events.
//
// File format is JSON lines, one of:
//   {"t": 0,  "ambient": {"temp_c": 21.5, "pressure_hpa": 1013.2, "humidity_pct": 45,
//                         "gas_resistance_ohm": 120000, "lux": 300}}
//   {"t": 30, "event": {"kind": "sound", "level_dbspl": 90, "duration_ms": 400}}
//   {"t": 42, "event": {"kind": "button", "id": 3}}
//   {"t": 5,  "event": {"kind": "usb_attach"}}      // also "usb_detach"
// Ambient fields omitted from a line carry over from the previous sample.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace iwast::sim {

struct AmbientSample {
  double t = 0.0;
  double temp_c = 20.0;
  double pressure_hpa = 1013.25;
  double humidity_pct = 50.0;
  double gas_resistance_ohm = 100000.0;
  double lux = 0.0;
  bool operator==(const AmbientSample&) const = default;
};

struct SoundEvent {
  double level_dbspl = 0.0;
  double duration_ms = 0.0;
  bool operator==(const SoundEvent&) const = default;
};
struct ButtonEvent {
  int id = 1;
  bool operator==(const ButtonEvent&) const = default;
};
struct UsbAttach {
  bool operator==(const UsbAttach&) const = default;
};
struct UsbDetach {
  bool operator==(const UsbDetach&) const = default;
};

using TraceEventKind = std::variant<SoundEvent, ButtonEvent, UsbAttach, UsbDetach>;

struct TraceEvent {
  double t = 0.0;
  TraceEventKind kind;
  bool operator==(const TraceEvent&) const = default;
};

class EnvTrace {
 public:
  std::vector<AmbientSample> samples;
  std::vector<TraceEvent> events;
  /// Last timestamp in the trace; ambient lookups beyond it are exhausted
  /// unless `hold_last` is set.
  double horizon = 0.0;
  bool hold_last = false;

  /// Zero-order hold. Throws TraceExhausted before the first sample, after
  /// the horizon (unless held), or when there are no samples.
  const AmbientSample& ambient_at(double t) const;
  /// Zero-order hold, held past the horizon; 0 lux without samples.
  double lux_at(double t) const noexcept;
  /// Loudest sound pulse covering t, if any.
  std::optional<double> sound_level_at(double t) const noexcept;

  void push_sample(AmbientSample s);
  void push_event(TraceEvent e);

 private:
  double longest_sound_s_ = 0.0;
};

/// ParseError (with line number) or NonMonotonicTime on invalid input.
EnvTrace load_trace(std::istream& in);
EnvTrace load_trace_file(const std::string& path);
/// Accepts an array of line objects (used for inline traces in scenarios).
EnvTrace trace_from_json(const nlohmann::json& lines);

std::string to_jsonl(const EnvTrace& trace);

}  // namespace iwast::sim
