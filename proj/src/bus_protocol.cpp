#include "iwast/bus_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iwast/error.hpp"

namespace iwast::bus {

Command to_command(std::uint8_t opcode) {
  if (opcode < 0x01 || opcode > 0x06) {
    throw Error(Errc::UnknownCommand, "opcode " + std::to_string(opcode));
  }
  return static_cast<Command>(opcode);
}

std::uint8_t crc8(std::span<const std::uint8_t> bytes) noexcept {
  std::uint8_t crc = 0x00;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) {
      crc = (crc & 0x80) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07)
                         : static_cast<std::uint8_t>(crc << 1);
    }
  }
  return crc;
}

namespace {

std::vector<std::uint8_t> checked_body(const Frame& frame) {
  std::vector<std::uint8_t> body;
  body.reserve(3 + frame.payload.size());
  body.push_back(frame.address);
  body.push_back(frame.command);
  body.push_back(static_cast<std::uint8_t>(frame.payload.size()));
  body.insert(body.end(), frame.payload.begin(), frame.payload.end());
  return body;
}

}  // namespace

std::uint8_t Frame::checksum() const { return crc8(checked_body(*this)); }

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.address >= kSlotCount) {
    throw Error(Errc::AddressOutOfRange, "address " + std::to_string(frame.address));
  }
  if (frame.payload.size() > kMaxPayload) {
    throw Error(Errc::PayloadTooLong, std::to_string(frame.payload.size()) + " bytes");
  }
  auto body = checked_body(frame);
  std::vector<std::uint8_t> out;
  out.reserve(body.size() + 2);
  out.push_back(kSof);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(crc8(body));
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes[0] != kSof) {
    throw Error(Errc::BadSof);
  }
  if (bytes.size() < kFrameOverhead) {
    throw Error(Errc::BadLength, "frame shorter than header");
  }
  const std::size_t length = bytes[3];
  if (length > kMaxPayload || bytes.size() != kFrameOverhead + length) {
    throw Error(Errc::BadLength, "length field " + std::to_string(length) + ", " +
                                     std::to_string(bytes.size()) + " bytes received");
  }
  const auto body = bytes.subspan(1, 3 + length);
  if (crc8(body) != bytes.back()) {
    throw Error(Errc::BadChecksum);
  }
  if (bytes[1] >= kSlotCount) {
    throw Error(Errc::AddressOutOfRange, "address " + std::to_string(bytes[1]));
  }
  Frame frame;
  frame.address = bytes[1];
  frame.command = bytes[2];
  frame.payload.assign(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(length));
  return frame;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::int16_t kI16Min = std::numeric_limits<std::int16_t>::min();
constexpr std::int16_t kI16Max = std::numeric_limits<std::int16_t>::max();

const MetricScale kScales[] = {
    {100, "°C", kI16Min, kI16Max},     // Temperature, 0.01 °C
    {10, "hPa", 0, kI16Max},           // Pressure, 0.1 hPa
    {100, "%RH", 0, 10000},            // Humidity, 0.01 %RH
    {1, "index", 0, 500},              // IAQ
    {100, "dBSPL", 0, kI16Max},        // SoundLevel, 0.01 dBSPL
    {1, "button", 0, 4},               // ButtonPress, id 1-4
    {1, "mV", 0, kI16Max},             // BatteryVoltage
    {1, "lux", 0, kI16Max},            // LightLevel
};

constexpr std::string_view kKindNames[] = {
    "temperature", "pressure",     "humidity",        "iaq",
    "sound_level", "button_press", "battery_voltage", "light_level"};

}  // namespace

const MetricScale& scale_of(MetricKind kind) noexcept {
  return kScales[static_cast<std::size_t>(kind)];
}

std::string_view to_string(MetricKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<MetricKind> metric_kind_from_string(std::string_view name) noexcept {
  for (MetricKind kind : kAllMetricKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(BoardType type) noexcept {
  switch (type) {
    case BoardType::Environmental: return "environmental";
    case BoardType::Microphone: return "microphone";
    case BoardType::Button: return "button";
    case BoardType::PowerLight: return "power_light";
  }
  return "unknown";
}

std::optional<BoardType> board_type_from_string(std::string_view name) noexcept {
  for (auto type : {BoardType::Environmental, BoardType::Microphone, BoardType::Button,
                    BoardType::PowerLight}) {
    if (to_string(type) == name) return type;
  }
  return std::nullopt;
}

std::int16_t quantize(MetricKind kind, double value) noexcept {
  const auto& s = scale_of(kind);
  double lsb = value * s.lsb_per_unit;
  if (std::isnan(lsb)) return std::max<std::int16_t>(s.min_lsb, 0);
  lsb = std::trunc(lsb + (lsb >= 0 ? 1e-6 : -1e-6));
  lsb = std::clamp(lsb, static_cast<double>(s.min_lsb), static_cast<double>(s.max_lsb));
  return static_cast<std::int16_t>(lsb);
}

double descale(MetricKind kind, std::int16_t lsb) noexcept {
  return static_cast<double>(lsb) / scale_of(kind).lsb_per_unit;
}

const MetricDescriptor* BoardDescriptor::find(std::uint8_t metric_id) const noexcept {
  for (const auto& m : metrics) {
    if (m.metric_id == metric_id) return &m;
  }
  return nullptr;
}

BoardDescriptor standard_descriptor(BoardType type) {
  BoardDescriptor d;
  d.board_type = type;
  auto add = [&d](MetricKind kind) {
    d.metrics.push_back({static_cast<std::uint8_t>(d.metrics.size()), kind});
  };
  switch (type) {
    case BoardType::Environmental:
      add(MetricKind::Temperature);
      add(MetricKind::Pressure);
      add(MetricKind::Humidity);
      add(MetricKind::IAQ);
      break;
    case BoardType::Microphone:
      add(MetricKind::SoundLevel);
      break;
    case BoardType::Button:
      add(MetricKind::ButtonPress);
      break;
    case BoardType::PowerLight:
      add(MetricKind::LightLevel);
      add(MetricKind::BatteryVoltage);
      break;
  }
  return d;
}

std::vector<std::uint8_t> encode_ident(const BoardDescriptor& descriptor) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(descriptor.board_type));
  out.push_back(descriptor.firmware.major);
  out.push_back(descriptor.firmware.minor);
  out.push_back(static_cast<std::uint8_t>(descriptor.metrics.size()));
  for (const auto& m : descriptor.metrics) {
    out.push_back(static_cast<std::uint8_t>((m.metric_id << 4) | static_cast<std::uint8_t>(m.kind)));
  }
  return out;
}

BoardDescriptor parse_ident(std::span<const std::uint8_t> payload) {
  if (payload.empty()) throw Error(Errc::MalformedDescriptor, "empty IDENT payload");
  const std::uint8_t type = payload[0];
  if (type < 0x01 || type > 0x04) {
    throw Error(Errc::UnknownBoardType, "board type byte " + std::to_string(type));
  }
  if (payload.size() < 4) throw Error(Errc::MalformedDescriptor, "truncated header");
  const std::size_t count = payload[3];
  if (count == 0) throw Error(Errc::MalformedDescriptor, "no metrics");
  if (payload.size() != 4 + count) throw Error(Errc::MalformedDescriptor, "metric count mismatch");

  BoardDescriptor d;
  d.board_type = static_cast<BoardType>(type);
  d.firmware = {payload[1], payload[2]};
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t b = payload[4 + i];
    const std::uint8_t id = b >> 4;
    const std::uint8_t kind = b & 0x0F;
    if (id != i) throw Error(Errc::MalformedDescriptor, "metric ids not contiguous");
    if (kind >= kAllMetricKinds.size()) throw Error(Errc::MalformedDescriptor, "unknown metric kind");
    d.metrics.push_back({id, static_cast<MetricKind>(kind)});
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace {
void expect_size(std::span<const std::uint8_t> payload, std::size_t n) {
  if (payload.size() != n) {
    throw Error(Errc::BadLength, "expected " + std::to_string(n) + " payload bytes, got " +
                                     std::to_string(payload.size()));
  }
}
}  // namespace

std::vector<std::uint8_t> encode(const SetPoll& cmd) {
  std::vector<std::uint8_t> out{cmd.metric};
  put_be32(out, cmd.interval_s);
  return out;
}

std::vector<std::uint8_t> encode(const SetThresh& cmd) {
  std::vector<std::uint8_t> out{cmd.metric, static_cast<std::uint8_t>(cmd.enabled ? 1 : 0)};
  put_be16(out, static_cast<std::uint16_t>(cmd.low));
  put_be16(out, static_cast<std::uint16_t>(cmd.high));
  return out;
}

std::vector<std::uint8_t> encode(const ReadNow& cmd) {
  std::vector<std::uint8_t> out;
  put_be16(out, cmd.metric_mask);
  return out;
}

std::vector<std::uint8_t> encode(const SetEnable& cmd) {
  return {cmd.metric, static_cast<std::uint8_t>(cmd.enabled ? 1 : 0)};
}

std::vector<std::uint8_t> encode_data(std::span<const DataRecord> records) {
  if (records.size() * 3 > kMaxPayload) {
    throw Error(Errc::PayloadTooLong, std::to_string(records.size()) + " data records");
  }
  std::vector<std::uint8_t> out;
  for (const auto& r : records) {
    out.push_back(r.metric);
    put_be16(out, static_cast<std::uint16_t>(r.value));
  }
  return out;
}

SetPoll decode_set_poll(std::span<const std::uint8_t> payload) {
  expect_size(payload, 5);
  return {payload[0], get_be32(payload, 1)};
}

SetThresh decode_set_thresh(std::span<const std::uint8_t> payload) {
  expect_size(payload, 6);
  return {payload[0], payload[1] != 0, static_cast<std::int16_t>(get_be16(payload, 2)),
          static_cast<std::int16_t>(get_be16(payload, 4))};
}

ReadNow decode_read_now(std::span<const std::uint8_t> payload) {
  expect_size(payload, 2);
  return {get_be16(payload, 0)};
}

SetEnable decode_set_enable(std::span<const std::uint8_t> payload) {
  expect_size(payload, 2);
  return {payload[0], payload[1] != 0};
}

std::vector<DataRecord> decode_data(std::span<const std::uint8_t> payload) {
  if (payload.size() % 3 != 0) throw Error(Errc::BadLength, "data payload not a multiple of 3");
  std::vector<DataRecord> out;
  for (std::size_t i = 0; i < payload.size(); i += 3) {
    out.push_back({payload[i], static_cast<std::int16_t>(get_be16(payload, i + 1))});
  }
  return out;
}

}  // namespace iwast::bus
