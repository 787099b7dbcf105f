#include <gtest/gtest.h>

#include "iwast/collector.hpp"
#include "iwast/configurator.hpp"
#include "iwast/device_server.hpp"
#include "iwast/error.hpp"
#include "sim_helpers.hpp"

using namespace iwast;
using namespace iwast::cfg;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::QueueEmpty;
}

sim::Scenario demo() { return scenario_file("configure_demo.json"); }

}  // namespace

TEST(FormatSet, Lines) {
  EXPECT_EQ(format_set_command(1, 0, {.poll_s = 600}), "SET 1 0 poll=600");
  EXPECT_EQ(format_set_command(0, 0, {.threshold = "on", .low = -5.5, .high = 21.3}),
            "SET 0 0 threshold=on low=-5.5 high=21.3");
  EXPECT_EQ(format_set_command(2, 1, {}), "SET 2 1");
}

TEST(Client, MapsErrReplies) {
  std::string next;
  DirectTransport t([&](const std::string&) { return next; });
  Client c(t);
  next = "ERR InvalidConfigValue poll=5";
  try {
    c.command("SET 0 0 poll=5");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidConfigValue);
    EXPECT_EQ(e.detail(), "poll=5");
  }
  next = "ERR SessionClosed";
  EXPECT_EQ(code_of([&] { c.command("LIST"); }), Errc::SessionClosed);
  next = "ERR Gremlins x";
  EXPECT_THROW(c.command("LIST"), TransportError);
  next = "HELLO";
  EXPECT_THROW(c.command("LIST"), TransportError);
  next = "OK not json";
  EXPECT_THROW(c.get(0, 0), TransportError);
  next = "OK saved";
  EXPECT_NO_THROW(c.save());
}

TEST(Client, DirectSessionAgainstSimulator) {
  sim::Simulator sim(demo());
  ASSERT_EQ(sim.advance(), sim::RunStatus::PausedForConfiguration);
  DirectTransport t([&](const std::string& line) { return sim.usb_command(line); });
  Client c(t);
  const auto listing = c.discover();
  ASSERT_EQ(listing.boards.size(), 4u);
  EXPECT_EQ(listing.metric_count(), 4u + 1 + 1 + 2);
  EXPECT_EQ(listing.boards[1].board, "microphone");
  const auto mic = c.set_metric(1, 0, {.threshold = "82"});
  EXPECT_EQ(mic.hardware_wos_level, 77);
  EXPECT_EQ(code_of([&] { c.set_metric(0, 0, {.poll_s = 9}); }), Errc::InvalidConfigValue);
  EXPECT_EQ(code_of([&] { c.get(4, 0); }), Errc::UnknownMetric);
  EXPECT_EQ(code_of([&] { c.set_device(6, {}, {}); }), Errc::InvalidConfigValue);
  const auto dev = c.set_device(10, "0102030405060708", {});
  EXPECT_EQ(dev.at("sf"), 10);
  c.set_metric(0, 0, {.poll_s = 600});
  c.save();
  EXPECT_EQ(code_of([&] { c.discover(); }), Errc::SessionClosed);
  EXPECT_EQ(sim.motherboard().active_config().metric(0, 0).poll_interval_s, 600u);
}

TEST(DeviceServer, TcpSessionBusyAndPersistence) {
  sim::Simulator sim(demo());
  DeviceServer server(sim);
  const auto port = server.start("127.0.0.1", 0);
  {
    TcpTransport t("127.0.0.1", port);
    Client c(t);
    EXPECT_EQ(c.discover().boards.size(), 4u);
    {
      TcpTransport second("127.0.0.1", port);
      EXPECT_EQ(second.exchange("LIST").rfind("ERR Busy", 0), 0u);
    }
    c.set_metric(0, 2, {.poll_s = 900});
    c.save();
    EXPECT_EQ(code_of([&] { c.get(0, 2); }), Errc::SessionClosed);
  }
  // A new connection power-cycles the device, which boots from NVM.
  for (int attempt = 0;; ++attempt) {
    TcpTransport t("127.0.0.1", port);
    const auto reply = t.exchange("GET 0 2");
    if (reply.rfind("ERR Busy", 0) == 0 && attempt < 50) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      continue;
    }
    ASSERT_EQ(reply.rfind("OK ", 0), 0u) << reply;
    EXPECT_EQ(nlohmann::json::parse(reply.substr(3)).at("poll_s"), 900);
    break;
  }
  server.stop();
}

TEST(DeviceServer, RefusedConnectionIsTransportError) {
  sim::Simulator sim(demo());
  std::uint16_t port = 0;
  {
    DeviceServer server(sim);
    port = server.start("127.0.0.1", 0);
    server.stop();
  }
  EXPECT_THROW(TcpTransport("127.0.0.1", port), TransportError);
  EXPECT_THROW(open_device("nonsense"), TransportError);
}

TEST(HttpProxy, ConfiguresRunningSimulation) {
  collector::Store store;
  collector::LiveHub hub;
  collector::RunManager runs(store, hub, IWAST_SCENARIO_DIR);
  collector::Api api(store, hub, runs);
  collector::Server server(api, hub);
  const auto port = server.start("127.0.0.1", 0);

  const auto id = runs.start({{"scenario_path", "configure_demo.json"}});
  runs.wait(id, false);
  auto transport = open_device("http://127.0.0.1:" + std::to_string(port) + "/runs/" + id);
  Client c(*transport);
  EXPECT_EQ(c.discover().boards.size(), 4u);
  c.set_metric(0, 0, {.poll_s = 300});
  c.set_device({}, "70b3d57ed00000aa", {});
  c.save();
  runs.wait(id);
  const auto st = *runs.status(id);
  EXPECT_EQ(st.at("status"), "completed");
  EXPECT_EQ(st.at("device_id"), "70b3d57ed00000aa");
  EXPECT_GT(st.at("stored").get<int>(), 0);
  EXPECT_EQ(code_of([&] { c.command("LIST"); }), Errc::NoDevice);
}
