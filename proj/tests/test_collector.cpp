#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "iwast/collector.hpp"
#include "iwast/error.hpp"
#include "iwast/hex.hpp"
#include "iwast/http_client.hpp"

using namespace iwast;
using namespace iwast::collector;

namespace {

const std::string kDev = "70b3d57ed0000001";

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::QueueEmpty;
}

bus::Topology env_mic() {
  return topology_from_json(nlohmann::json::array({{{"slot", 0}, {"board", "environmental"}},
                                                   {{"slot", 1}, {"board", "microphone"}}}));
}

lorawan::UplinkPacket packet(std::uint32_t fcnt, double t, std::vector<lorawan::MeasurementRecord> recs) {
  lorawan::UplinkPacket p;
  const auto id = *from_hex(kDev);
  std::copy(id.begin(), id.end(), p.device_id.begin());
  p.fcnt = fcnt;
  p.payload = lorawan::build_payload(recs);
  p.tx_time_s = t;
  p.airtime_s = lorawan::airtime_s({}, p.payload.size());
  return p;
}

}  // namespace

TEST(Topology, JsonRoundTripAndErrors) {
  const auto t = env_mic();
  EXPECT_EQ(topology_to_json(t).size(), 2u);
  EXPECT_EQ(topology_to_json(topology_from_json(topology_to_json(t))), topology_to_json(t));
  EXPECT_EQ(code_of([] { topology_from_json({{{"slot", 9}, {"board", "button"}}}); }), Errc::BadPayload);
  EXPECT_EQ(code_of([] { topology_from_json({{{"slot", 0}, {"board", "kettle"}}}); }), Errc::BadPayload);
  EXPECT_EQ(code_of([] { topology_from_json(nlohmann::json::object()); }), Errc::BadPayload);
}

TEST(Store, IngestDecodesAndDeduplicates) {
  Store s;
  EXPECT_EQ(code_of([&] { s.ingest(packet(1, 10, {{0, 0, 2150}})); }), Errc::BadPayload);
  s.register_device(kDev, env_mic(), "sess");
  const auto r = s.ingest(packet(1, 10, {{0, 0, 2150}, {0, 2, 4512}, {1, 0, 8123}}));
  ASSERT_EQ(r.stored, 3u);
  EXPECT_EQ(r.rows[0].kind, "temperature");
  EXPECT_DOUBLE_EQ(r.rows[0].value, 21.5);
  EXPECT_DOUBLE_EQ(r.rows[1].value, 45.12);
  EXPECT_DOUBLE_EQ(r.rows[2].value, 81.23);
  EXPECT_EQ(r.rows[2].unit, "dBSPL");
  EXPECT_DOUBLE_EQ(r.rows[2].timestamp_s, 10);
  EXPECT_EQ(s.ingest(packet(1, 10, {{0, 0, 2150}, {0, 2, 4512}, {1, 0, 8123}})).stored, 0u);
  EXPECT_EQ(s.measurement_count(), 3u);
  // Slot 2 is not fitted; a 4-byte payload is not whole records.
  EXPECT_EQ(code_of([&] { s.ingest(packet(2, 20, {{2, 0, 1}})); }), Errc::BadPayload);
  auto bad = packet(3, 30, {{0, 0, 1}});
  bad.payload.push_back(0);
  EXPECT_EQ(code_of([&] { s.ingest(bad); }), Errc::BadPayload);
  EXPECT_EQ(s.measurement_count(), 3u) << "failed ingests leave nothing behind";

  const auto devs = s.devices();
  ASSERT_EQ(devs.size(), 1u);
  EXPECT_EQ(devs[0].at("measurements"), 3);
  EXPECT_EQ(devs[0].at("session"), "sess");
  EXPECT_TRUE(s.devices("other").empty());
}

TEST(Store, IngestJsonRegistersFromTopology) {
  Store s;
  auto body = lorawan::to_json(packet(7, 5, {{1, 0, 7000}}));
  EXPECT_EQ(code_of([&] { s.ingest_json(body); }), Errc::BadPayload);
  body["topology"] = topology_to_json(env_mic());
  EXPECT_EQ(s.ingest_json(body).stored, 1u);
  EXPECT_EQ(code_of([&] { s.ingest_json({{"device_id", kDev}}); }), Errc::BadPayload);
}

TEST(Store, QueryWindowsAreExclusiveAtTheOldEdge) {
  Store s;
  s.register_device(kDev, env_mic());
  const double day = 86400;
  const std::vector<double> ts = {0, day - 1, day, 2 * day};
  for (std::size_t i = 0; i < ts.size(); ++i) {
    s.ingest(packet(static_cast<std::uint32_t>(i), ts[i], {{0, 0, static_cast<std::int16_t>(i * 100)}}));
  }
  auto times = [&](QueryPeriod p, std::optional<double> now) {
    std::vector<double> out;
    for (const auto& pt : s.query(kDev, bus::MetricKind::Temperature, p, now)) out.push_back(pt.timestamp_s);
    return out;
  };
  EXPECT_EQ(times(QueryPeriod::Day, {}), (std::vector<double>{2 * day}));
  EXPECT_EQ(times(QueryPeriod::Day, 2 * day - 0.5), (std::vector<double>{day}));
  EXPECT_EQ(times(QueryPeriod::Day, day), (std::vector<double>{day - 1, day}));
  EXPECT_EQ(times(QueryPeriod::Week, {}), ts);
  EXPECT_EQ(times(QueryPeriod::All, 0), (std::vector<double>{0}));
  EXPECT_TRUE(times(QueryPeriod::Day, -1).empty());
  EXPECT_TRUE(s.query(kDev, bus::MetricKind::Humidity, QueryPeriod::All).empty());
  EXPECT_EQ(code_of([&] { s.query("ffffffffffffffff", bus::MetricKind::Temperature, QueryPeriod::All); }),
            Errc::UnknownDevice);
  EXPECT_DOUBLE_EQ(period_seconds(QueryPeriod::Month), 30 * day);
  EXPECT_DOUBLE_EQ(period_seconds(QueryPeriod::Year), 365 * day);
}

TEST(Store, MetricsAndCsv) {
  Store s;
  s.register_device(kDev, env_mic());
  s.ingest(packet(1, 10, {{0, 0, -150}, {1, 0, 8000}}));
  s.ingest(packet(2, 20, {{0, 0, -100}}));
  const auto m = s.metrics(kDev);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(code_of([&] { s.metrics("00"); }), Errc::UnknownDevice);
  const auto csv = s.export_csv(kDev, bus::MetricKind::Temperature);
  EXPECT_EQ(csv,
            "device_id,slot,metric,unit,timestamp_s,value\n"
            "70b3d57ed0000001,0,temperature,°C,10.0,-1.5\n"
            "70b3d57ed0000001,0,temperature,°C,20.0,-1.0\n");
  const auto all = s.export_csv();
  EXPECT_EQ(std::count(all.begin(), all.end(), '\n'), 4);
}

TEST(Store, PersistsAcrossReopen) {
  const auto path = std::filesystem::temp_directory_path() / "iwast_store_test.db";
  std::filesystem::remove(path);
  {
    Store s(path.string());
    s.register_device(kDev, env_mic());
    s.ingest(packet(1, 10, {{0, 0, 1}}));
  }
  Store s(path.string());
  EXPECT_EQ(s.measurement_count(), 1u);
  EXPECT_EQ(s.ingest(packet(1, 10, {{0, 0, 1}})).stored, 0u);
  std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------

class ApiTest : public ::testing::Test {
 protected:
  Store store;
  LiveHub hub;
  RunManager runs{store, hub, IWAST_SCENARIO_DIR};
  Api api{store, hub, runs};

  HttpReply call(const std::string& method, const std::string& target, const std::string& body = {}) {
    return api.handle({method, target, body});
  }
  static nlohmann::json body(const HttpReply& r) { return nlohmann::json::parse(r.body); }
};

TEST_F(ApiTest, UplinkAndQueries) {
  auto up = lorawan::to_json(packet(1, 100, {{0, 0, 2000}, {0, 0, 2100}}));
  up["topology"] = topology_to_json(env_mic());
  auto r = call("POST", "/api/uplink", up.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(body(r).at("stored"), 2);
  EXPECT_EQ(body(call("POST", "/api/uplink", up.dump())).at("stored"), 0);
  EXPECT_EQ(call("GET", "/api/uplink").status, 405);
  r = call("POST", "/api/uplink", "{not json");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(body(r).at("error"), "BadPayload");

  EXPECT_EQ(body(call("GET", "/api/devices")).size(), 1u);
  EXPECT_EQ(body(call("GET", "/api/devices/" + kDev + "/metrics")).at("metrics").size(), 1u);
  r = call("GET", "/api/devices/" + kDev + "/series?metric=temperature&period=day");
  ASSERT_EQ(r.status, 200);
  const auto series = body(r);
  EXPECT_EQ(series.at("unit"), "°C");
  ASSERT_EQ(series.at("points").size(), 2u);
  EXPECT_DOUBLE_EQ(series.at("points")[1].at("value").get<double>(), 21.0);
  EXPECT_EQ(body(call("GET", "/api/devices/" + kDev + "/series?metric=temperature&now=50")).at("points").size(), 0u);
  EXPECT_EQ(call("GET", "/api/devices/" + kDev + "/series?metric=colour").status, 400);
  EXPECT_EQ(call("GET", "/api/devices/" + kDev + "/series?metric=temperature&period=fortnight").status, 400);
  r = call("GET", "/api/devices/abcdef/metrics");
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(body(r).at("error"), "UnknownDevice");
  r = call("GET", "/api/export.csv?device=" + kDev + "&metric=temperature");
  EXPECT_EQ(r.content_type.rfind("text/csv", 0), 0u);
  EXPECT_EQ(std::count(r.body.begin(), r.body.end(), '\n'), 3);
  EXPECT_EQ(call("GET", "/api/nothing").status, 404);
}

TEST_F(ApiTest, TopologyEndpoint) {
  const std::string dev = "00000000000000aa";
  auto r = call("PUT", "/api/devices/" + dev + "/topology",
                R"({"session": "lab", "topology": [{"slot": 4, "board": "button"}]})");
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(body(call("GET", "/api/devices?session=lab")).size(), 1u);
  r = call("PUT", "/api/devices/" + dev + "/topology", R"([{"slot": 4, "board": "blender"}])");
  EXPECT_EQ(r.status, 400);
}

TEST_F(ApiTest, RunLifecycle) {
  auto r = call("POST", "/api/sim/runs", R"({"scenario_path": "classroom_1h.json"})");
  ASSERT_EQ(r.status, 201) << r.body;
  const std::string id = body(r).at("id");
  EXPECT_EQ(body(r).at("status_url"), "/api/sim/runs/" + id + "/status");
  runs.wait(id);
  const auto st = body(call("GET", "/api/sim/runs/" + id + "/status"));
  EXPECT_EQ(st.at("status"), "completed");
  EXPECT_EQ(st.at("motherboard_state"), "sleeping");
  EXPECT_GT(st.at("stored").get<int>(), 0);
  const auto devs = body(call("GET", "/api/devices?session=" + id));
  ASSERT_EQ(devs.size(), 1u);
  EXPECT_EQ(devs[0].at("measurements"), st.at("stored"));
  EXPECT_EQ(body(call("POST", "/api/sim/runs/" + id + "/configure", R"({"command": "LIST"})")).at("reply"),
            "ERR NoDevice");

  EXPECT_EQ(call("GET", "/api/sim/runs/run99/status").status, 404);
  EXPECT_EQ(call("POST", "/api/sim/runs/run99/configure", R"({"command": "LIST"})").status, 404);
  r = call("POST", "/api/sim/runs", R"({"scenario_path": "../CMakeLists.txt"})");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(body(r).at("error"), "ParseError");
  EXPECT_EQ(call("POST", "/api/sim/runs", "[1").status, 400);
}

TEST_F(ApiTest, InlineScenarioAwaitsConfiguration) {
  const nlohmann::json req = {
      {"scenario", {{"name", "inline"}, {"topology", {{{"slot", 2}, {"board", "button"}}}}, {"horizon_s", 120}}},
      {"await_configuration", true}};
  const std::string id = body(call("POST", "/api/sim/runs", req.dump())).at("id");
  runs.wait(id, false);
  auto st = *runs.status(id);
  EXPECT_EQ(st.at("status"), "awaiting_configuration");
  EXPECT_TRUE(st.at("awaiting_configuration").get<bool>());
  EXPECT_EQ(*runs.configure(id, "SAVE"), "OK saved");
  runs.wait(id);
  EXPECT_EQ(runs.status(id)->at("status"), "completed");
}

// ---------------------------------------------------------------------------

class ServerTest : public ApiTest {
 protected:
  Server server{api, hub};
  std::uint16_t port = 0;
  void SetUp() override { port = server.start("127.0.0.1", 0); }
};

TEST_F(ServerTest, ServesHttp) {
  auto r = net::http_request("127.0.0.1", port, "PUT", "/api/devices/" + kDev + "/topology",
                             topology_to_json(env_mic()).dump());
  ASSERT_EQ(r.status, 200) << r.body;
  r = net::http_request("127.0.0.1", port, "POST", "/api/uplink", lorawan::to_json(packet(4, 9, {{0, 1, 10132}})).dump());
  EXPECT_EQ(r.status, 200);
  r = net::http_request("127.0.0.1", port, "GET", "/api/devices/" + kDev + "/series?metric=pressure");
  EXPECT_NEAR(nlohmann::json::parse(r.body).at("points")[0].at("value").get<double>(), 1013.2, 1e-9);
  EXPECT_EQ(net::http_request("127.0.0.1", port, "GET", "/api/zzz").status, 404);
}

TEST_F(ServerTest, LivePushOverWebSocket) {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  store.register_device(kDev, env_mic());

  boost::asio::io_context ioc;
  boost::asio::ip::tcp::resolver resolver(ioc);
  websocket::stream<boost::asio::ip::tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/api/live");
  for (int i = 0; i < 200 && hub.subscribers() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  ASSERT_EQ(hub.subscribers(), 1u);

  net::http_request("127.0.0.1", port, "POST", "/api/uplink", lorawan::to_json(packet(1, 42, {{1, 0, 9000}})).dump());
  beast::flat_buffer buf;
  ws.read(buf);
  const auto msg = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
  EXPECT_EQ(msg.at("kind"), "sound_level");
  EXPECT_DOUBLE_EQ(msg.at("value").get<double>(), 90.0);
  EXPECT_DOUBLE_EQ(msg.at("timestamp_s").get<double>(), 42.0);

  // Stopping the server ends the stream instead of hanging.
  server.stop();
  beast::error_code ec;
  buf.clear();
  ws.read(buf, ec);
  EXPECT_TRUE(ec);
}
