#include "iwast/lorawan_radio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iwast/error.hpp"
#include "iwast/hex.hpp"

namespace iwast::lorawan {

std::size_t max_payload(int spreading_factor) {
  switch (spreading_factor) {
    case 7:
    case 8: return 222;
    case 9: return 115;
    case 10:
    case 11:
    case 12: return 51;
    default: return 0;
  }
}

double airtime_s(const RadioParams& p, std::size_t payload_len) {
  if (payload_len == 0) throw Error(Errc::EmptyPayload);
  const std::size_t cap = max_payload(p.spreading_factor);
  if (payload_len > cap) {
    throw Error(Errc::PayloadTooLargeForSF, std::to_string(payload_len) + " bytes at SF" +
                                                std::to_string(p.spreading_factor));
  }
  const int sf = p.spreading_factor;
  const double t_sym = std::ldexp(1.0, sf) / p.bandwidth_hz;
  const int de = p.low_data_rate_optimize() ? 1 : 0;
  const int header = p.explicit_header ? 0 : 1;
  const int crc = p.crc_on ? 1 : 0;

  const double t_preamble = (p.preamble_symbols + 4.25) * t_sym;
  const double numerator = 8.0 * static_cast<double>(payload_len) - 4.0 * sf + 28 + 16 * crc - 20 * header;
  const double denominator = 4.0 * (sf - 2 * de);
  const double extra = std::max(std::ceil(numerator / denominator) * (p.coding_rate + 4), 0.0);
  const double payload_symbols = 8 + extra;
  return t_preamble + payload_symbols * t_sym;
}

DutyDecision duty_gate(double now_s, double /*airtime_s*/, std::span<const TxRecord> history,
                       double duty_cycle) {
  double allowed = 0.0;
  for (const auto& tx : history) {
    allowed = std::max(allowed, tx.tx_time_s + tx.airtime_s / duty_cycle);
  }
  if (history.empty() || now_s >= allowed) return {true, now_s};
  return {false, allowed};
}

std::vector<std::uint8_t> build_payload(std::span<const MeasurementRecord> records) {
  std::vector<std::uint8_t> out;
  out.reserve(records.size() * kRecordBytes);
  for (const auto& r : records) {
    out.push_back(static_cast<std::uint8_t>((r.slot << 4) | (r.metric & 0x0F)));
    bus::put_be16(out, static_cast<std::uint16_t>(r.value));
  }
  return out;
}

std::vector<MeasurementRecord> decode_records(std::span<const std::uint8_t> payload) {
  if (payload.size() % kRecordBytes != 0) {
    throw Error(Errc::BadLength, std::to_string(payload.size()) + " bytes is not a multiple of 3");
  }
  std::vector<MeasurementRecord> out;
  out.reserve(payload.size() / kRecordBytes);
  for (std::size_t i = 0; i < payload.size(); i += kRecordBytes) {
    out.push_back({static_cast<std::uint8_t>(payload[i] >> 4),
                   static_cast<std::uint8_t>(payload[i] & 0x0F),
                   static_cast<std::int16_t>(bus::get_be16(payload, i + 1))});
  }
  return out;
}

std::vector<DecodedMeasurement> decode_uplink(std::span<const std::uint8_t> payload,
                                              const bus::Topology& topology) {
  std::vector<DecodedMeasurement> out;
  for (const auto& r : decode_records(payload)) {
    const bus::MetricDescriptor* m = nullptr;
    if (r.slot < topology.size() && topology[r.slot]) m = topology[r.slot]->find(r.metric);
    if (m == nullptr) {
      throw Error(Errc::UnknownMetricId,
                  "slot " + std::to_string(r.slot) + " metric " + std::to_string(r.metric));
    }
    out.push_back({r.slot, r.metric, m->kind, r.value, bus::descale(m->kind, r.value)});
  }
  return out;
}

nlohmann::json to_json(const UplinkPacket& p) {
  return {{"device_id", to_hex(p.device_id)},
          {"fcnt", p.fcnt},
          {"port", p.port},
          {"payload", to_hex(p.payload)},
          {"tx_time_s", p.tx_time_s},
          {"sf", p.spreading_factor},
          {"airtime_ms", p.airtime_s * 1000.0}};
}

UplinkPacket uplink_from_json(const nlohmann::json& j) {
  try {
    UplinkPacket p;
    const auto id = from_hex(j.at("device_id").get<std::string>());
    if (!id || id->size() != p.device_id.size()) throw Error(Errc::BadPayload, "device_id");
    std::copy(id->begin(), id->end(), p.device_id.begin());
    const auto fcnt = j.at("fcnt").get<std::int64_t>();
    if (fcnt < 0 || fcnt > 0xFFFFFFFFLL) throw Error(Errc::BadPayload, "fcnt");
    p.fcnt = static_cast<std::uint32_t>(fcnt);
    p.port = j.value("port", 1);
    const auto payload = from_hex(j.at("payload").get<std::string>());
    if (!payload) throw Error(Errc::BadPayload, "payload is not valid hex");
    p.payload = *payload;
    p.tx_time_s = j.at("tx_time_s").get<double>();
    p.spreading_factor = j.value("sf", 11);
    p.airtime_s = j.value("airtime_ms", 0.0) / 1000.0;
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadPayload, e.what());
  }
}

Transmitter::Transmitter(RadioParams params, DeviceId device_id, double episode_overhead_s)
    : params_(params), device_id_(device_id), overhead_s_(episode_overhead_s) {}

std::optional<Transmitter::Started> Transmitter::try_start(double now_s, double* retry_at_s) {
  if (queue_.empty()) return std::nullopt;
  if (now_s < busy_until_s_) {
    if (retry_at_s) *retry_at_s = busy_until_s_;
    return std::nullopt;
  }
  const double airtime = airtime_s(params_, queue_.front().size());
  // Off-times never shrink, so the latest transmission bounds the gate.
  const auto recent = history_.empty() ? std::span<const TxRecord>{}
                                       : std::span<const TxRecord>(history_).last(1);
  const auto gate = duty_gate(now_s, airtime, recent, params_.duty_cycle);
  if (!gate.send_now) {
    if (retry_at_s) *retry_at_s = gate.defer_until_s;
    return std::nullopt;
  }
  UplinkPacket packet;
  packet.device_id = device_id_;
  packet.fcnt = next_fcnt_++;
  packet.payload = std::move(queue_.front());
  queue_.pop_front();
  packet.tx_time_s = now_s;
  packet.spreading_factor = params_.spreading_factor;
  packet.airtime_s = airtime;
  history_.push_back({now_s, airtime});
  busy_until_s_ = now_s + airtime + overhead_s_;
  return Started{std::move(packet), busy_until_s_};
}

}  // namespace iwast::lorawan
