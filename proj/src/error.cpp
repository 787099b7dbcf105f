#include "iwast/error.hpp"

namespace iwast {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::PayloadTooLong: return "PayloadTooLong";
    case Errc::AddressOutOfRange: return "AddressOutOfRange";
    case Errc::BadSof: return "BadSof";
    case Errc::BadLength: return "BadLength";
    case Errc::BadChecksum: return "BadChecksum";
    case Errc::UnknownCommand: return "UnknownCommand";
    case Errc::UnknownBoardType: return "UnknownBoardType";
    case Errc::MalformedDescriptor: return "MalformedDescriptor";
    case Errc::TraceExhausted: return "TraceExhausted";
    case Errc::NonPositiveBaseline: return "NonPositiveBaseline";
    case Errc::WrongClipLength: return "WrongClipLength";
    case Errc::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case Errc::NotAPollInstant: return "NotAPollInstant";
    case Errc::BadButtonId: return "BadButtonId";
    case Errc::NvmCorrupt: return "NvmCorrupt";
    case Errc::BusTimeout: return "BusTimeout";
    case Errc::UnknownMetric: return "UnknownMetric";
    case Errc::InvalidConfigValue: return "InvalidConfigValue";
    case Errc::NoDevice: return "NoDevice";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::NvmWriteFailed: return "NvmWriteFailed";
    case Errc::Busy: return "Busy";
    case Errc::PayloadTooLargeForSF: return "PayloadTooLargeForSF";
    case Errc::EmptyPayload: return "EmptyPayload";
    case Errc::UnknownMetricId: return "UnknownMetricId";
    case Errc::RangeOutsideLedger: return "RangeOutsideLedger";
    case Errc::ParseError: return "ParseError";
    case Errc::NonMonotonicTime: return "NonMonotonicTime";
    case Errc::QueueEmpty: return "QueueEmpty";
    case Errc::BadPayload: return "BadPayload";
    case Errc::UnknownDevice: return "UnknownDevice";
  }
  return "Unknown";
}

namespace {
std::string compose(Errc code, const std::string& detail) {
  std::string msg(to_string(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}
}  // namespace

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(detail) {}

std::optional<Errc> errc_from_string(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(Errc::UnknownDevice); ++i) {
    const auto code = static_cast<Errc>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace iwast
