// LoRaWAN uplink model: record payloads, time-on-air and duty-cycle gating.
#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "iwast/bus_protocol.hpp"

namespace iwast::lorawan {

/// EU868 defaults; `low_data_rate_optimize()` follows the SF/bandwidth rule.
struct RadioParams {
  int spreading_factor = 11;
  double bandwidth_hz = 125000.0;
  int coding_rate = 1;  // 4/(4+CR); 1 means 4/5
  int preamble_symbols = 8;
  bool explicit_header = true;
  bool crc_on = true;
  double duty_cycle = 0.01;

  bool low_data_rate_optimize() const noexcept {
    return spreading_factor >= 11 && bandwidth_hz <= 125000.0;
  }
};

/// Largest application payload the regional plan allows at this SF.
std::size_t max_payload(int spreading_factor);

/// Time-on-air in seconds (Semtech SX127x formula).
double airtime_s(const RadioParams& params, std::size_t payload_len);

struct TxRecord {
  double tx_time_s = 0.0;
  double airtime_s = 0.0;
};

struct DutyDecision {
  bool send_now = true;
  double defer_until_s = 0.0;
};

/// Off-time rule: after a transmission of duration T started at t, the next
/// one may start at t + T / duty_cycle.
DutyDecision duty_gate(double now_s, double airtime_s, std::span<const TxRecord> history,
                       double duty_cycle);

// ---------------------------------------------------------------------------
// Measurement records: (slot << 4 | metric) | value_be16, 3 bytes each.

inline constexpr std::size_t kRecordBytes = 3;
inline constexpr std::size_t kMaxRecordsPerPacket = 12;
inline constexpr std::size_t kMaxPacketPayload = kRecordBytes * kMaxRecordsPerPacket;

struct MeasurementRecord {
  std::uint8_t slot = 0;
  std::uint8_t metric = 0;
  std::int16_t value = 0;
  auto operator<=>(const MeasurementRecord&) const = default;
};

std::vector<std::uint8_t> build_payload(std::span<const MeasurementRecord> records);
std::vector<MeasurementRecord> decode_records(std::span<const std::uint8_t> payload);

struct DecodedMeasurement {
  std::uint8_t slot = 0;
  std::uint8_t metric = 0;
  bus::MetricKind kind = bus::MetricKind::Temperature;
  std::int16_t raw = 0;
  double value = 0.0;
};

/// Records de-scaled via the device topology. BadLength unless the payload is
/// a multiple of 3 bytes; UnknownMetricId for a (slot, metric) not present.
std::vector<DecodedMeasurement> decode_uplink(std::span<const std::uint8_t> payload,
                                              const bus::Topology& topology);

using DeviceId = std::array<std::uint8_t, 8>;

struct UplinkPacket {
  DeviceId device_id{};
  std::uint32_t fcnt = 0;
  int port = 1;
  std::vector<std::uint8_t> payload;
  double tx_time_s = 0.0;
  int spreading_factor = 11;
  double airtime_s = 0.0;
  bool operator==(const UplinkPacket&) const = default;
};

/// Collector delivery format: {device_id, fcnt, port, payload, tx_time_s, sf, airtime_ms}.
nlohmann::json to_json(const UplinkPacket& packet);
/// Throws BadPayload on any schema or hex violation.
UplinkPacket uplink_from_json(const nlohmann::json& j);

/// Transmit queue of one device: assigns frame counters, enforces duty cycle
/// and serialises radio episodes.
class Transmitter {
 public:
  Transmitter(RadioParams params, DeviceId device_id, double episode_overhead_s);

  struct Started {
    UplinkPacket packet;
    double episode_end_s;
  };

  void enqueue(std::vector<std::uint8_t> payload) { queue_.push_back(std::move(payload)); }
  bool idle() const noexcept { return queue_.empty(); }
  std::size_t pending() const noexcept { return queue_.size(); }

  /// Starts the head of the queue if the radio is free and the duty gate
  /// allows it; otherwise returns the earliest time worth retrying.
  std::optional<Started> try_start(double now_s, double* retry_at_s);

  /// New radio settings take effect from the next packet; fcnt continues.
  void reconfigure(RadioParams params, DeviceId device_id) {
    params_ = params;
    device_id_ = device_id;
  }

  const RadioParams& params() const noexcept { return params_; }
  std::uint32_t next_fcnt() const noexcept { return next_fcnt_; }
  double busy_until() const noexcept { return busy_until_s_; }
  const std::vector<TxRecord>& history() const noexcept { return history_; }
  double episode_overhead_s() const noexcept { return overhead_s_; }

 private:
  RadioParams params_;
  DeviceId device_id_;
  double overhead_s_;
  std::deque<std::vector<std::uint8_t>> queue_;
  std::vector<TxRecord> history_;
  std::uint32_t next_fcnt_ = 0;
  double busy_until_s_ = 0.0;
};

}  // namespace iwast::lorawan
