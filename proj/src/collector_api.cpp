#include <regex>

#include "iwast/collector.hpp"
#include "iwast/error.hpp"

namespace iwast::collector {

namespace {

HttpReply json_reply(int status, const nlohmann::json& body) {
  return {status, "application/json", body.dump()};
}

HttpReply error_reply(int status, std::string_view kind, const std::string& detail) {
  return json_reply(status, {{"error", kind}, {"detail", detail}});
}

HttpReply error_reply(const Error& e) {
  const int status = e.code() == Errc::UnknownDevice ? 404 : 400;
  const std::string what = e.what();
  const auto colon = what.find(": ");
  return error_reply(status, to_string(e.code()), colon == std::string::npos ? std::string() : what.substr(colon + 2));
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
      out += static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2]));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  while (!q.empty()) {
    const auto amp = q.find('&');
    const auto pair = q.substr(0, amp);
    const auto eq = pair.find('=');
    if (!pair.empty()) {
      out[url_decode(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    q.remove_prefix(amp + 1);
  }
  return out;
}

std::string get(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  return it == q.end() ? std::string() : it->second;
}

}  // namespace

HttpReply Api::handle(const HttpRequest& req) {
  static const std::regex kDeviceMetrics(R"(/api/devices/([0-9A-Fa-f]+)/metrics)");
  static const std::regex kDeviceSeries(R"(/api/devices/([0-9A-Fa-f]+)/series)");
  static const std::regex kDeviceTopology(R"(/api/devices/([0-9A-Fa-f]+)/topology)");
  static const std::regex kRunStatus(R"(/api/sim/runs/([A-Za-z0-9_-]+)/status)");
  static const std::regex kRunConfigure(R"(/api/sim/runs/([A-Za-z0-9_-]+)/configure)");

  const auto qpos = req.target.find('?');
  const std::string path = req.target.substr(0, qpos);
  const auto query = parse_query(qpos == std::string::npos ? std::string_view() : std::string_view(req.target).substr(qpos + 1));
  std::smatch m;

  try {
    if (path == "/api/uplink") {
      if (req.method != "POST") return error_reply(405, "MethodNotAllowed", req.method);
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        return error_reply(400, "BadPayload", e.what());
      }
      auto res = store_.ingest_json(body);
      for (const auto& row : res.rows) hub_.publish(row.to_json().dump());
      return json_reply(200, {{"stored", res.stored}});
    }

    if (path == "/api/devices" && req.method == "GET") {
      return json_reply(200, store_.devices(get(query, "session")));
    }

    if (std::regex_match(path, m, kDeviceMetrics) && req.method == "GET") {
      return json_reply(200, {{"device_id", m[1].str()}, {"metrics", store_.metrics(m[1].str())}});
    }

    if (std::regex_match(path, m, kDeviceSeries) && req.method == "GET") {
      const auto kind = bus::metric_kind_from_string(get(query, "metric"));
      if (!kind) return error_reply(400, "BadPayload", "unknown metric '" + get(query, "metric") + "'");
      const std::string pname = get(query, "period");
      const auto period = pname.empty() ? std::optional(QueryPeriod::All) : period_from_string(pname);
      if (!period) return error_reply(400, "BadPayload", "unknown period '" + pname + "'");
      std::optional<double> now;
      if (!get(query, "now").empty()) {
        try {
          now = std::stod(get(query, "now"));
        } catch (const std::exception&) {
          return error_reply(400, "BadPayload", "bad now");
        }
      }
      nlohmann::json points = nlohmann::json::array();
      for (const auto& p : store_.query(m[1].str(), *kind, *period, now)) {
        points.push_back({{"t", p.timestamp_s}, {"value", p.value}, {"slot", p.slot}});
      }
      return json_reply(200, {{"device_id", m[1].str()},
                              {"metric", bus::to_string(*kind)},
                              {"unit", bus::scale_of(*kind).unit},
                              {"period", to_string(*period)},
                              {"points", points}});
    }

    if (std::regex_match(path, m, kDeviceTopology) && req.method == "PUT") {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        return error_reply(400, "BadPayload", e.what());
      }
      const auto& tj = body.is_object() ? body.value("topology", nlohmann::json()) : body;
      const auto topo = topology_from_json(tj);
      store_.register_device(m[1].str(), topo, body.is_object() ? body.value("session", std::string()) : "");
      return json_reply(200, {{"device_id", m[1].str()}, {"topology", topology_to_json(topo)}});
    }

    if (path == "/api/export.csv" && req.method == "GET") {
      std::optional<bus::MetricKind> kind;
      if (!get(query, "metric").empty()) {
        kind = bus::metric_kind_from_string(get(query, "metric"));
        if (!kind) return error_reply(400, "BadPayload", "unknown metric '" + get(query, "metric") + "'");
      }
      return {200, "text/csv; charset=utf-8", store_.export_csv(get(query, "device"), kind)};
    }

    if (path == "/api/sim/runs" && req.method == "POST") {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        return error_reply(400, "ParseError", e.what());
      }
      const auto id = runs_.start(body);
      return json_reply(201, {{"id", id}, {"status_url", "/api/sim/runs/" + id + "/status"}});
    }

    if (std::regex_match(path, m, kRunStatus) && req.method == "GET") {
      auto st = runs_.status(m[1].str());
      if (!st) return error_reply(404, "UnknownRun", m[1].str());
      return json_reply(200, *st);
    }

    if (std::regex_match(path, m, kRunConfigure) && req.method == "POST") {
      std::string line;
      try {
        line = nlohmann::json::parse(req.body).at("command").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        return error_reply(400, "BadPayload", e.what());
      }
      auto reply = runs_.configure(m[1].str(), line);
      if (!reply) return error_reply(404, "UnknownRun", m[1].str());
      return json_reply(200, {{"reply", *reply}});
    }
  } catch (const Error& e) {
    return error_reply(e);
  } catch (const std::exception& e) {
    return error_reply(500, "Internal", e.what());
  }
  return error_reply(404, "NotFound", path);
}

}  // namespace iwast::collector
