#include <gtest/gtest.h>

#include <random>

#include "iwast/error.hpp"
#include "iwast/motherboard.hpp"
#include "sim_helpers.hpp"

using namespace iwast;
using namespace iwast::mb;

namespace {

DeviceConfig random_config(std::mt19937& rng) {
  DeviceConfig c;
  for (auto& b : c.device_id) b = static_cast<std::uint8_t>(rng());
  for (auto& b : c.radio_keys) b = static_cast<std::uint8_t>(rng());
  c.spreading_factor = static_cast<std::uint8_t>(7 + rng() % 6);
  const int n = static_cast<int>(rng() % 20);
  for (int i = 0; i < n; ++i) {
    MetricConfig m;
    m.poll_interval_s = rng() % 3 == 0 ? 0 : 10 + rng() % 100000;
    m.threshold_enabled = rng() % 2;
    const auto a = static_cast<std::int16_t>(rng());
    const auto b = static_cast<std::int16_t>(rng());
    m.low = std::min(a, b);
    m.high = std::max(a, b);
    c.metrics[{static_cast<std::uint8_t>(rng() % bus::kSlotCount), static_cast<std::uint8_t>(rng() % 16)}] = m;
  }
  return c;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::QueueEmpty;
}

const nlohmann::json kTopology = nlohmann::json::array({{{"slot", 0}, {"board", "environmental"}},
                                                        {{"slot", 1}, {"board", "microphone"}},
                                                        {{"slot", 3}, {"board", "button"}}});

}  // namespace

TEST(Nvm, RandomConfigsRoundTripBitExactly) {
  std::mt19937 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto cfg = random_config(rng);
    const auto blob = save_nvm(cfg);
    const auto back = load_nvm(blob);
    ASSERT_EQ(back, cfg);
    ASSERT_EQ(save_nvm(back), blob);
  }
}

TEST(Nvm, CorruptionDetected) {
  std::mt19937 rng(1);
  const auto blob = save_nvm(random_config(rng));
  for (std::size_t bit = 0; bit < blob.size() * 8; ++bit) {
    auto bad = blob;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_EQ(code_of([&] { load_nvm(bad); }), Errc::NvmCorrupt) << bit;
  }
  EXPECT_EQ(code_of([&] { load_nvm(std::span(blob).first(blob.size() - 1)); }), Errc::NvmCorrupt);
  EXPECT_EQ(code_of([] { load_nvm(std::vector<std::uint8_t>{'I', 'W'}); }), Errc::NvmCorrupt);
}

TEST(Nvm, StoreWriteFaultKeepsOldContents) {
  NvmStore s;
  s.write({1, 2, 3});
  s.inject_write_fault(true);
  EXPECT_EQ(code_of([&] { s.write({9}); }), Errc::NvmWriteFailed);
  EXPECT_EQ(s.contents(), (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(Validate, Rules) {
  EXPECT_EQ(code_of([] { validate(MetricConfig{5, false, 0, 0}, bus::MetricKind::Temperature); }),
            Errc::InvalidConfigValue);
  EXPECT_NO_THROW(validate(MetricConfig{10, false, 0, 0}, bus::MetricKind::Temperature));
  EXPECT_EQ(code_of([] { validate(MetricConfig{0, true, 10, 5}, bus::MetricKind::Temperature); }),
            Errc::InvalidConfigValue);
  EXPECT_EQ(code_of([] { validate(MetricConfig{0, true, 0, 6000}, bus::MetricKind::SoundLevel); }),
            Errc::InvalidConfigValue);
  EXPECT_EQ(code_of([] { validate(MetricConfig{0, false, 0, 11000}, bus::MetricKind::Humidity); }),
            Errc::InvalidConfigValue);
  DeviceConfig d;
  d.spreading_factor = 6;
  EXPECT_EQ(code_of([&] { validate(d); }), Errc::InvalidConfigValue);
}

TEST(Boot, Decision) {
  DeviceConfig cfg;
  cfg.metrics[{0, 0}] = {300, false, 0, 0};
  const auto blob = save_nvm(cfg);
  auto d = boot_decision(0, blob, std::nullopt);
  EXPECT_EQ(d.outcome, BootOutcome::ApplyAndSleep);
  EXPECT_EQ(d.config, cfg);
  EXPECT_DOUBLE_EQ(d.apply_at_s, 30);
  EXPECT_EQ(boot_decision(0, blob, 29.9).outcome, BootOutcome::ConfigureSession);
  EXPECT_EQ(boot_decision(0, blob, 30.0).outcome, BootOutcome::ApplyAndSleep);
  EXPECT_EQ(boot_decision(0, {}, std::nullopt).outcome, BootOutcome::ApplyAndSleep);
  auto bad = blob;
  bad[6] ^= 0xFF;
  d = boot_decision(0, bad, std::nullopt);
  EXPECT_EQ(d.outcome, BootOutcome::AwaitUsb);
  EXPECT_EQ(d.error, Errc::NvmCorrupt);
  EXPECT_EQ(boot_decision(0, bad, 3.0).outcome, BootOutcome::ConfigureSession);
}

TEST(PollScheduler, AnchoredAndIndependent) {
  PollScheduler p;
  std::map<MetricKey, MetricConfig> m;
  m[{0, 0}] = {300, false, 0, 0};
  m[{1, 0}] = {120, false, 0, 0};
  m[{3, 0}] = {0, true, 0, 0};
  p.reset(30, m);
  EXPECT_DOUBLE_EQ(*p.next_due(), 150);
  EXPECT_EQ(p.poll_due(150), (std::vector<MetricKey>{{1, 0}}));
  EXPECT_DOUBLE_EQ(*p.next_due(), 270);
  EXPECT_TRUE(p.poll_due(269).empty());
  EXPECT_EQ(p.poll_due(330).size(), 2u);
  p.clear();
  EXPECT_FALSE(p.next_due());
}

TEST(Accumulator, SplitsIntoTwelveRecordPayloads) {
  Accumulator a;
  std::vector<lorawan::MeasurementRecord> recs(25, {0, 1, 7});
  a.add(recs);
  const auto payloads = a.flush();
  ASSERT_EQ(payloads.size(), 3u);
  EXPECT_EQ(payloads[0].size(), 36u);
  EXPECT_EQ(payloads[1].size(), 36u);
  EXPECT_EQ(payloads[2].size(), 3u);
  EXPECT_EQ(a.size(), 0u);
  EXPECT_TRUE(a.flush().empty());
}

// ---------------------------------------------------------------------------
// Controller behaviour inside a simulation

TEST(Controller, BootAppliesAfterUsbWindowAndSleeps) {
  auto s = scenario({{"topology", kTopology},
                     {"config", {{"metrics", {{{"slot", 0}, {"metric", "temperature"}, {"poll_s", 300}}}}}},
                     {"horizon_s", 400},
                     {"options", {{"hold_trace", true}}}});
  sim::Simulator sim(std::move(s));
  const auto r = sim.run();
  EXPECT_EQ(r.final_state.at("motherboard").at("state"), "sleeping");
  const auto polls = events_of(r, "poll_request");
  ASSERT_EQ(polls.size(), 1u);
  EXPECT_DOUBLE_EQ(polls[0].at("t"), 330.0);
  EXPECT_EQ(r.uplinks.size(), 1u);
  // Boot and USB window draw the sleep current.
  EXPECT_NEAR(label_charge(r.ledger, "motherboard", "usb_wait"), 55.0 * 30.0, 1e-6);
}

TEST(Controller, AbsentBoardConfigIsIgnoredWithDiagnostic) {
  auto s = scenario({{"topology", kTopology},
                     {"config", {{"metrics", {{{"slot", 0}, {"metric", "temperature"}, {"poll_s", 300}}}}}},
                     {"horizon_s", 100}});
  s.topology.erase(s.topology.begin());  // the configured environmental board is not fitted
  sim::Simulator sim(std::move(s));
  const auto r = sim.run();
  bool found = false;
  for (const auto& d : events_of(r, "diagnostic")) {
    found |= d.value("slot", -1) == 0 && d.value("error", std::string()).find("not present") != std::string::npos;
  }
  EXPECT_TRUE(found);
  EXPECT_TRUE(events_of(r, "poll_request").empty());
}

TEST(Controller, CorruptNvmWaitsForUsb) {
  auto s = scenario({{"topology", kTopology}, {"horizon_s", 600}});
  s.nvm_blob = std::vector<std::uint8_t>{'I', 'W', 'S', 'T', 9};
  sim::Simulator sim(std::move(s));
  const auto r = sim.run();
  EXPECT_EQ(r.final_state.at("motherboard").at("state"), "usb_wait");
  EXPECT_TRUE(r.final_state.at("motherboard").at("awaiting_configuration").get<bool>());
  EXPECT_TRUE(r.uplinks.empty());
}

TEST(Session, CommandsAndErrors) {
  auto s = scenario({{"topology", kTopology}, {"horizon_s", 100}, {"options", {{"await_configuration", true}}}});
  sim::Simulator sim(std::move(s));
  ASSERT_EQ(sim.advance(), sim::RunStatus::PausedForConfiguration);
  const auto list = sim.usb_command("LIST");
  ASSERT_EQ(list.rfind("OK ", 0), 0u);
  const auto j = nlohmann::json::parse(list.substr(3));
  EXPECT_EQ(j.at("boards").size(), 3u);
  EXPECT_EQ(sim.usb_command("FROB"), "ERR UnknownCommand FROB");
  EXPECT_EQ(sim.usb_command("GET 4 0").rfind("ERR UnknownMetric", 0), 0u);
  EXPECT_EQ(sim.usb_command("SET 0 0 poll=5").rfind("ERR InvalidConfigValue", 0), 0u);
  EXPECT_EQ(sim.usb_command("SET 1 0 threshold=64").rfind("ERR InvalidConfigValue", 0), 0u);
  const auto mic = nlohmann::json::parse(sim.usb_command("SET slot1 sound_level threshold=80").substr(3));
  EXPECT_EQ(mic.at("hardware_wos_level"), 77);
  EXPECT_TRUE(mic.at("threshold").get<bool>());
  const auto temp = nlohmann::json::parse(sim.usb_command("SET 0 temperature low=-5.5 high=30 threshold=on").substr(3));
  EXPECT_DOUBLE_EQ(temp.at("low").get<double>(), -5.5);
  EXPECT_EQ(sim.usb_command("SET device sf=13").rfind("ERR InvalidConfigValue", 0), 0u);
  EXPECT_EQ(sim.usb_command("SET device sf=9 id=70b3d57ed00000ff").rfind("OK ", 0), 0u);
  // Nothing applied before SAVE.
  EXPECT_TRUE(sim.motherboard().active_config().metrics.empty());
  EXPECT_EQ(sim.usb_command("SAVE"), "OK saved");
  EXPECT_EQ(sim.motherboard().state_json().at("state"), "sleeping");
  EXPECT_EQ(sim.usb_command("LIST"), "ERR SessionClosed");
  EXPECT_EQ(sim.motherboard().active_config().spreading_factor, 9);
  EXPECT_EQ(sim.advance(), sim::RunStatus::Finished);
}

TEST(Session, RebootRestoresSavedConfig) {
  auto s = scenario({{"topology", kTopology}, {"horizon_s", 100}, {"options", {{"await_configuration", true}}}});
  sim::Simulator sim(std::move(s));
  sim.advance();
  sim.usb_command("SET 0 0 poll=600");
  sim.usb_command("SAVE");
  sim.reset_motherboard();
  ASSERT_TRUE(sim.awaiting_configuration());
  sim.usb_command("SET 0 0 poll=900");
  EXPECT_EQ(sim.usb_command("REBOOT"), "OK rebooted");
  const auto m = nlohmann::json::parse(sim.usb_command("GET 0 0").substr(3));
  EXPECT_EQ(m.at("poll_s"), 600) << "unsaved edits are dropped by a reboot";
}

TEST(Session, NoDeviceWithoutSession) {
  auto s = scenario({{"topology", kTopology}, {"horizon_s", 100}});
  sim::Simulator sim(std::move(s));
  sim.advance();
  EXPECT_EQ(sim.usb_command("LIST"), "ERR NoDevice");
}

TEST(Controller, InterruptServiceFlushesAndTransmits) {
  auto s = scenario({{"topology", kTopology},
                     {"config", {{"metrics", {{{"slot", 3}, {"metric", 0}, {"threshold", true}}}}}},
                     {"trace", {{{"t", 0}, {"ambient", {{"lux", 0}}}},
                                {{"t", 100}, {"event", {{"kind", "button"}, {"id", 4}}}}}},
                     {"horizon_s", 200},
                     {"options", {{"hold_trace", true}}}});
  sim::Simulator sim(std::move(s));
  const auto r = sim.run();
  ASSERT_EQ(r.uplinks.size(), 1u);
  EXPECT_DOUBLE_EQ(r.uplinks[0].tx_time_s, 100.0);
  EXPECT_EQ(r.uplinks[0].payload, (std::vector<std::uint8_t>{0x30, 0x00, 0x04}));
  // One uplink episode: airtime of the 3-byte packet plus the fixed radio overhead.
  EXPECT_NEAR(label_charge(r.ledger, "motherboard", "uplink"),
              25400.0 * (lorawan::airtime_s({}, 3) + 6.012864), 1e-6);
}
