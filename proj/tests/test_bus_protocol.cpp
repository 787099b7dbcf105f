#include <gtest/gtest.h>

#include <random>

#include "iwast/bus_protocol.hpp"
#include "iwast/error.hpp"
#include "oracles.hpp"

using namespace iwast;
using namespace iwast::bus;

namespace {

std::vector<std::uint8_t> bytes(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int b : v) out.push_back(static_cast<std::uint8_t>(b));
  return out;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no iwast::Error thrown";
  return Errc::QueueEmpty;
}

}  // namespace

TEST(Crc8, CheckValue) {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> v(s.begin(), s.end());
  EXPECT_EQ(crc8(v), 0xF4);
  EXPECT_EQ(oracle::crc8_bitwise(v), 0xF4);
}

TEST(Crc8, MatchesBitwiseOracle) {
  std::mt19937 rng(1);
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::uint8_t> v(rng() % 40);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    ASSERT_EQ(crc8(v), oracle::crc8_bitwise(v));
  }
}

TEST(Frame, GoldenEncoding) {
  const Frame f{2, 0x04, {0x00, 0x0F}};
  const auto wire = encode_frame(f);
  const auto body = bytes({2, 0x04, 2, 0x00, 0x0F});
  auto expected = bytes({0xA5, 2, 0x04, 2, 0x00, 0x0F});
  expected.push_back(oracle::crc8_bitwise(body));
  EXPECT_EQ(wire, expected);
  EXPECT_EQ(decode_frame(wire), f);
}

TEST(Frame, EmptyAndMaxPayload) {
  const Frame empty{0, 0x01, {}};
  EXPECT_EQ(encode_frame(empty).size(), kFrameOverhead);
  EXPECT_EQ(decode_frame(encode_frame(empty)), empty);
  Frame full{5, 0x05, std::vector<std::uint8_t>(32, 0xEE)};
  EXPECT_EQ(decode_frame(encode_frame(full)), full);
  full.payload.push_back(0);
  EXPECT_EQ(code_of([&] { encode_frame(full); }), Errc::PayloadTooLong);
}

TEST(Frame, EncodeRejectsBadAddress) {
  EXPECT_EQ(code_of([] { encode_frame({6, 1, {}}); }), Errc::AddressOutOfRange);
}

TEST(Frame, DecodeErrors) {
  auto good = encode_frame({1, 0x02, {1, 2, 3}});
  auto bad_sof = good;
  bad_sof[0] = 0x5A;
  EXPECT_EQ(code_of([&] { decode_frame(bad_sof); }), Errc::BadSof);
  EXPECT_EQ(code_of([&] { decode_frame(std::span(good).first(3)); }), Errc::BadLength);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(code_of([&] { decode_frame(truncated); }), Errc::BadLength);
  auto extra = good;
  extra.push_back(0);
  EXPECT_EQ(code_of([&] { decode_frame(extra); }), Errc::BadLength);
  auto bad_crc = good;
  bad_crc.back() ^= 0x01;
  EXPECT_EQ(code_of([&] { decode_frame(bad_crc); }), Errc::BadChecksum);
  // Valid checksum over an out-of-range address.
  auto bad_addr = bytes({0xA5, 7, 0x01, 0});
  bad_addr.push_back(oracle::crc8_bitwise(std::span(bad_addr).subspan(1)));
  EXPECT_EQ(code_of([&] { decode_frame(bad_addr); }), Errc::AddressOutOfRange);
  EXPECT_EQ(code_of([] { decode_frame(std::vector<std::uint8_t>{}); }), Errc::BadSof);
}

TEST(Frame, RandomRoundTrips) {
  std::mt19937 rng(42);
  for (int i = 0; i < 10000; ++i) {
    Frame f;
    f.address = static_cast<std::uint8_t>(rng() % kSlotCount);
    f.command = static_cast<std::uint8_t>(rng());
    f.payload.resize(rng() % (kMaxPayload + 1));
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    const auto wire = encode_frame(f);
    ASSERT_EQ(wire.size(), kFrameOverhead + f.payload.size());
    ASSERT_EQ(decode_frame(wire), f);
  }
}

TEST(Frame, EverySingleBitFlipDetected) {
  std::mt19937 rng(7);
  for (int i = 0; i < 300; ++i) {
    Frame f{static_cast<std::uint8_t>(rng() % kSlotCount), static_cast<std::uint8_t>(rng()), {}};
    f.payload.resize(rng() % (kMaxPayload + 1));
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    const auto wire = encode_frame(f);
    for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
      auto bad = wire;
      bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      bool rejected = false;
      try {
        rejected = !(decode_frame(bad) == f);
      } catch (const Error&) {
        rejected = true;
      }
      ASSERT_TRUE(rejected) << "frame " << i << " bit " << bit;
    }
  }
}

TEST(Command, ClosedOpcodeSet) {
  EXPECT_EQ(to_command(0x01), Command::Ident);
  EXPECT_EQ(to_command(0x06), Command::SetEnable);
  for (int op : {0x00, 0x07, 0x42, 0xFF}) {
    EXPECT_EQ(code_of([&] { to_command(static_cast<std::uint8_t>(op)); }), Errc::UnknownCommand);
  }
}

TEST(Ident, RoundTripsStandardBoards) {
  for (auto t : {BoardType::Environmental, BoardType::Microphone, BoardType::Button, BoardType::PowerLight}) {
    const auto d = standard_descriptor(t);
    EXPECT_EQ(parse_ident(encode_ident(d)), d);
  }
  EXPECT_EQ(standard_descriptor(BoardType::Environmental).metrics.size(), 4u);
  EXPECT_EQ(standard_descriptor(BoardType::Button).metrics.size(), 1u);
}

TEST(Ident, Malformed) {
  EXPECT_EQ(code_of([] { parse_ident(bytes({0x09, 1, 0, 0})); }), Errc::UnknownBoardType);
  EXPECT_EQ(code_of([] { parse_ident(bytes({0x01, 1, 0, 2, 0x00})); }), Errc::MalformedDescriptor);
  EXPECT_EQ(code_of([] { parse_ident(bytes({0x01})); }), Errc::MalformedDescriptor);
}

TEST(Payloads, RoundTrip) {
  const auto p = decode_set_poll(encode(SetPoll{3, 86400}));
  EXPECT_EQ(p.metric, 3);
  EXPECT_EQ(p.interval_s, 86400u);
  const auto th = decode_set_thresh(encode(SetThresh{1, true, -500, 2500}));
  EXPECT_TRUE(th.enabled);
  EXPECT_EQ(th.low, -500);
  EXPECT_EQ(th.high, 2500);
  EXPECT_EQ(decode_read_now(encode(ReadNow{0x000B})).metric_mask, 0x000B);
  const auto en = decode_set_enable(encode(SetEnable{2, true}));
  EXPECT_EQ(en.metric, 2);
  EXPECT_TRUE(en.enabled);
  const std::vector<DataRecord> recs = {{0, 2150}, {2, -1}, {3, 500}};
  EXPECT_EQ(decode_data(encode_data(recs)), recs);
  EXPECT_EQ(code_of([] { decode_set_poll(bytes({1, 2})); }), Errc::BadLength);
  EXPECT_EQ(code_of([] { decode_data(bytes({1, 2})); }), Errc::BadLength);
}

TEST(Scale, QuantizeTruncatesAndSaturates) {
  EXPECT_EQ(quantize(MetricKind::Temperature, 21.456), 2145);
  EXPECT_EQ(quantize(MetricKind::Temperature, -3.339), -333);
  EXPECT_EQ(quantize(MetricKind::Pressure, 1013.2), 10132);
  EXPECT_EQ(quantize(MetricKind::Humidity, 150.0), 10000);
  EXPECT_EQ(quantize(MetricKind::LightLevel, 1e9), 32767);
  EXPECT_EQ(quantize(MetricKind::IAQ, 900), 500);
  EXPECT_DOUBLE_EQ(descale(MetricKind::SoundLevel, 7712), 77.12);
}

TEST(Scale, QuantizeDescaleIsIdempotent) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-40.0, 80.0);
  for (int i = 0; i < 5000; ++i) {
    const auto q = quantize(MetricKind::Temperature, d(rng));
    ASSERT_EQ(quantize(MetricKind::Temperature, descale(MetricKind::Temperature, q)), q);
  }
}

TEST(Names, RoundTrip) {
  for (auto k : kAllMetricKinds) EXPECT_EQ(metric_kind_from_string(to_string(k)), k);
  EXPECT_EQ(board_type_from_string("power_light"), BoardType::PowerLight);
  EXPECT_FALSE(board_type_from_string("toaster"));
}
