#include <gtest/gtest.h>

#include <random>

#include "iwast/error.hpp"
#include "iwast/lorawan_radio.hpp"
#include "oracles.hpp"

using namespace iwast;
using namespace iwast::lorawan;

namespace {
RadioParams sf(int s) {
  RadioParams p;
  p.spreading_factor = s;
  return p;
}
}  // namespace

TEST(Airtime, GoldenValues) {
  EXPECT_NEAR(airtime_s(sf(11), 36) * 1000.0, 987.136, 1e-6);
  EXPECT_NEAR(airtime_s(sf(7), 36) * 1000.0, 77.056, 1e-6);
}

TEST(Airtime, MatchesIntegerOracleEverywhere) {
  for (int s = 7; s <= 12; ++s) {
    for (std::size_t n = 1; n <= max_payload(s); ++n) {
      ASSERT_NEAR(airtime_s(sf(s), n) * 1e6, static_cast<double>(oracle::airtime_us(s, static_cast<int>(n))), 1e-3)
          << "SF" << s << " " << n << " B";
    }
  }
}

TEST(Airtime, MonotoneInLengthAndSf) {
  for (int s = 7; s <= 12; ++s) {
    for (std::size_t n = 2; n <= max_payload(s); ++n) ASSERT_LE(airtime_s(sf(s), n - 1), airtime_s(sf(s), n));
  }
  for (int s = 8; s <= 12; ++s) EXPECT_LT(airtime_s(sf(s - 1), 36), airtime_s(sf(s), 36));
}

TEST(Airtime, Limits) {
  EXPECT_THROW(airtime_s(sf(11), 0), Error);
  try {
    airtime_s(sf(12), 52);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PayloadTooLargeForSF);
  }
  EXPECT_NO_THROW(airtime_s(sf(7), 222));
}

TEST(Payload, TwelveRecordsIn36Bytes) {
  std::vector<MeasurementRecord> recs;
  for (int i = 0; i < 12; ++i) {
    recs.push_back({static_cast<std::uint8_t>(i % 6), static_cast<std::uint8_t>(i % 4),
                    static_cast<std::int16_t>(i * 1000 - 6000)});
  }
  const auto payload = build_payload(recs);
  ASSERT_EQ(payload.size(), 36u);
  EXPECT_EQ(decode_records(payload), recs);
  EXPECT_EQ(payload[0], 0x00);
  EXPECT_EQ(payload[3], 0x11);
}

TEST(Payload, DecodeWithTopology) {
  bus::Topology topo{};
  topo[0] = bus::standard_descriptor(bus::BoardType::Environmental);
  topo[1] = bus::standard_descriptor(bus::BoardType::Microphone);
  const std::vector<MeasurementRecord> recs = {{0, 0, 2153}, {0, 2, 4120}, {1, 0, 8123}};
  const auto out = decode_uplink(build_payload(recs), topo);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].kind, bus::MetricKind::Temperature);
  EXPECT_DOUBLE_EQ(out[0].value, 21.53);
  EXPECT_DOUBLE_EQ(out[1].value, 41.2);
  EXPECT_DOUBLE_EQ(out[2].value, 81.23);
  const std::vector<MeasurementRecord> unknown = {{2, 0, 1}};
  try {
    decode_uplink(build_payload(unknown), topo);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownMetricId);
  }
  const std::vector<std::uint8_t> ragged = {0, 1};
  EXPECT_THROW(decode_uplink(ragged, topo), Error);
}

TEST(DutyCycle, OffTimeRule) {
  const double a = airtime_s(sf(11), 36);
  EXPECT_TRUE(duty_gate(0.0, a, {}, 0.01).send_now);
  const std::vector<TxRecord> hist = {{100.0, a}};
  const auto d = duty_gate(150.0, a, hist, 0.01);
  EXPECT_FALSE(d.send_now);
  EXPECT_NEAR(d.defer_until_s, 100.0 + a * 100.0, 1e-9);
  EXPECT_TRUE(duty_gate(100.0 + a * 100.0, a, hist, 0.01).send_now);
}

TEST(Transmitter, SerialisesAndGates) {
  Transmitter tx(sf(11), DeviceId{1, 2, 3, 4, 5, 6, 7, 8}, 6.012864);
  tx.enqueue(std::vector<std::uint8_t>(36, 0));
  tx.enqueue(std::vector<std::uint8_t>(3, 0));
  double retry = -1;
  const auto first = tx.try_start(10.0, &retry);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->packet.fcnt, 0u);
  EXPECT_NEAR(first->episode_end_s - 10.0, 7.0, 1e-9);
  EXPECT_FALSE(tx.try_start(12.0, &retry));
  EXPECT_DOUBLE_EQ(retry, first->episode_end_s);
  EXPECT_FALSE(tx.try_start(first->episode_end_s, &retry));
  EXPECT_NEAR(retry, 10.0 + 98.7136, 1e-9);
  const auto second = tx.try_start(retry, &retry);
  ASSERT_TRUE(second);
  EXPECT_EQ(second->packet.fcnt, 1u);
  EXPECT_TRUE(tx.idle());
}

TEST(Transmitter, OccupancyNeverExceedsDutyCycle) {
  Transmitter tx(sf(11), DeviceId{}, 6.012864);
  std::mt19937 rng(5);
  double t = 0.0, on_air = 0.0;
  for (int i = 0; i < 500; ++i) {
    tx.enqueue(std::vector<std::uint8_t>(3 * (1 + rng() % 12), 0));
    double retry = t;
    while (true) {
      auto s = tx.try_start(t, &retry);
      if (s) {
        on_air += s->packet.airtime_s;
        break;
      }
      t = retry;
    }
    t += (rng() % 50);
  }
  const auto& h = tx.history();
  // Up to the moment the gate reopens after the last packet.
  const double span = h.back().tx_time_s + h.back().airtime_s / 0.01 - h.front().tx_time_s;
  EXPECT_LE(on_air / span, 0.01 + 1e-9);
}

TEST(UplinkJson, RoundTripAndRejects) {
  UplinkPacket p;
  p.device_id = {0x70, 0xb3, 0xd5, 0x7e, 0xd0, 0, 0, 1};
  p.fcnt = 42;
  p.payload = {0x00, 0x08, 0x69};
  p.tx_time_s = 330.5;
  p.airtime_s = 0.5;
  const auto back = uplink_from_json(to_json(p));
  EXPECT_EQ(back, p);
  auto bad = to_json(p);
  bad["payload"] = "zz";
  EXPECT_THROW(uplink_from_json(bad), Error);
  bad = to_json(p);
  bad.erase("fcnt");
  EXPECT_THROW(uplink_from_json(bad), Error);
  bad = to_json(p);
  bad["device_id"] = "0102";
  EXPECT_THROW(uplink_from_json(bad), Error);
}
