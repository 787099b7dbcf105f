#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iwast {

enum class Errc {
  // bus protocol
  PayloadTooLong,
  AddressOutOfRange,
  BadSof,
  BadLength,
  BadChecksum,
  UnknownCommand,
  UnknownBoardType,
  MalformedDescriptor,
  // sensor models
  TraceExhausted,
  NonPositiveBaseline,
  WrongClipLength,
  ThresholdOutOfRange,
  NotAPollInstant,
  BadButtonId,
  // motherboard / configurator
  NvmCorrupt,
  BusTimeout,
  UnknownMetric,
  InvalidConfigValue,
  NoDevice,
  SessionClosed,
  NvmWriteFailed,
  Busy,
  // radio
  PayloadTooLargeForSF,
  EmptyPayload,
  UnknownMetricId,
  // energy
  RangeOutsideLedger,
  // simulation
  ParseError,
  NonMonotonicTime,
  QueueEmpty,
  // collector
  BadPayload,
  UnknownDevice,
};

std::string_view to_string(Errc code) noexcept;
std::optional<Errc> errc_from_string(std::string_view name) noexcept;

/// Exception carrying one of the named error kinds. what() is
/// "<Kind>" or "<Kind>: <detail>".
class Error : public std::runtime_error {
 public:
  explicit Error(Errc code, const std::string& detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace iwast
