// Framed command set spoken between the motherboard and its sensor boards.
//
// Wire layout of one frame:
//
//   SOF(0xA5) | address | command | length | payload[length] | crc8
//
// The CRC covers address..payload and is CRC-8/ATM (poly 0x07, init 0x00,
// no reflection, no final xor). Multi-byte payload fields are big-endian.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace iwast::bus {

inline constexpr std::uint8_t kSof = 0xA5;
inline constexpr std::size_t kMaxPayload = 32;
inline constexpr std::size_t kFrameOverhead = 5;
inline constexpr std::uint8_t kSlotCount = 6;

enum class Command : std::uint8_t {
  Ident = 0x01,
  SetPoll = 0x02,
  SetThresh = 0x03,
  ReadNow = 0x04,
  GetData = 0x05,
  SetEnable = 0x06,
};

/// Semantic-layer opcode lookup; throws UnknownCommand for anything outside
/// the closed opcode set. The codec itself accepts any opcode byte.
Command to_command(std::uint8_t opcode);

std::uint8_t crc8(std::span<const std::uint8_t> bytes) noexcept;

struct Frame {
  std::uint8_t address = 0;
  std::uint8_t command = 0;
  std::vector<std::uint8_t> payload;

  std::uint8_t checksum() const;
  bool operator==(const Frame&) const = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Boards and metrics

enum class BoardType : std::uint8_t {
  Environmental = 0x01,
  Microphone = 0x02,
  Button = 0x03,
  PowerLight = 0x04,
};

enum class MetricKind : std::uint8_t {
  Temperature = 0,
  Pressure = 1,
  Humidity = 2,
  IAQ = 3,
  SoundLevel = 4,
  ButtonPress = 5,
  BatteryVoltage = 6,
  LightLevel = 7,
};

inline constexpr std::array kAllMetricKinds = {
    MetricKind::Temperature, MetricKind::Pressure,   MetricKind::Humidity,
    MetricKind::IAQ,         MetricKind::SoundLevel, MetricKind::ButtonPress,
    MetricKind::BatteryVoltage, MetricKind::LightLevel};

/// Fixed-point encoding of one metric kind: value = lsb / lsb_per_unit.
struct MetricScale {
  int lsb_per_unit;
  std::string_view unit;
  std::int16_t min_lsb;
  std::int16_t max_lsb;
};

const MetricScale& scale_of(MetricKind kind) noexcept;
std::string_view to_string(MetricKind kind) noexcept;
std::optional<MetricKind> metric_kind_from_string(std::string_view name) noexcept;
std::string_view to_string(BoardType type) noexcept;
std::optional<BoardType> board_type_from_string(std::string_view name) noexcept;

/// Engineering value -> scaled LSB, truncating toward zero and saturating to
/// the kind's range. A 1e-6 LSB nudge away from zero absorbs binary
/// representation error (1013.2 hPa encodes to 10132, not 10131).
std::int16_t quantize(MetricKind kind, double value) noexcept;
double descale(MetricKind kind, std::int16_t lsb) noexcept;

struct MetricDescriptor {
  std::uint8_t metric_id = 0;  // 4-bit local index
  MetricKind kind = MetricKind::Temperature;

  double scale() const noexcept { return 1.0 / scale_of(kind).lsb_per_unit; }
  std::string_view unit() const noexcept { return scale_of(kind).unit; }
  bool operator==(const MetricDescriptor&) const = default;
};

struct FirmwareVersion {
  std::uint8_t major = 1;
  std::uint8_t minor = 0;
  bool operator==(const FirmwareVersion&) const = default;
};

struct BoardDescriptor {
  BoardType board_type = BoardType::Environmental;
  FirmwareVersion firmware;
  std::vector<MetricDescriptor> metrics;

  const MetricDescriptor* find(std::uint8_t metric_id) const noexcept;
  bool operator==(const BoardDescriptor&) const = default;
};

/// The metrics each board type ships with.
BoardDescriptor standard_descriptor(BoardType type);

/// Discovered boards, indexed by motherboard face.
using Topology = std::array<std::optional<BoardDescriptor>, kSlotCount>;

// IDENT response: type | fw major | fw minor | count | (id<<4 | kind) * count
std::vector<std::uint8_t> encode_ident(const BoardDescriptor& descriptor);
BoardDescriptor parse_ident(std::span<const std::uint8_t> payload);

// ---------------------------------------------------------------------------
// Command payloads

struct SetPoll {
  std::uint8_t metric = 0;
  std::uint32_t interval_s = 0;
};

struct SetThresh {
  std::uint8_t metric = 0;
  bool enabled = false;
  std::int16_t low = 0;
  std::int16_t high = 0;
};

struct ReadNow {
  std::uint16_t metric_mask = 0;
};

struct SetEnable {
  std::uint8_t metric = 0;
  bool enabled = false;
};

/// One entry of a GET_DATA response.
struct DataRecord {
  std::uint8_t metric = 0;
  std::int16_t value = 0;
  bool operator==(const DataRecord&) const = default;
};

std::vector<std::uint8_t> encode(const SetPoll& cmd);
std::vector<std::uint8_t> encode(const SetThresh& cmd);
std::vector<std::uint8_t> encode(const ReadNow& cmd);
std::vector<std::uint8_t> encode(const SetEnable& cmd);
std::vector<std::uint8_t> encode_data(std::span<const DataRecord> records);

SetPoll decode_set_poll(std::span<const std::uint8_t> payload);
SetThresh decode_set_thresh(std::span<const std::uint8_t> payload);
ReadNow decode_read_now(std::span<const std::uint8_t> payload);
SetEnable decode_set_enable(std::span<const std::uint8_t> payload);
std::vector<DataRecord> decode_data(std::span<const std::uint8_t> payload);

// Big-endian helpers shared by the codecs in this library.
inline void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}
inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_be16(out, static_cast<std::uint16_t>(v >> 16));
  put_be16(out, static_cast<std::uint16_t>(v & 0xFFFF));
}
inline std::uint16_t get_be16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}
inline std::uint32_t get_be32(std::span<const std::uint8_t> in, std::size_t at) {
  return (static_cast<std::uint32_t>(get_be16(in, at)) << 16) | get_be16(in, at + 2);
}

}  // namespace iwast::bus
