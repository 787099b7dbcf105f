#include "iwast/configurator.hpp"

#include <charconv>
#include <istream>
#include <regex>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read_until.hpp>
#include <boost/asio/streambuf.hpp>
#include <boost/asio/write.hpp>

#include "iwast/error.hpp"
#include "iwast/http_client.hpp"

namespace iwast::cfg {

using boost::asio::ip::tcp;

struct TcpTransport::Impl {
  boost::asio::io_context ioc;
  tcp::socket socket{ioc};
  boost::asio::streambuf buffer;
};

TcpTransport::TcpTransport(std::string host, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    boost::asio::connect(impl_->socket, resolver.resolve(host, std::to_string(port)));
  } catch (const boost::system::system_error& e) {
    throw TransportError("cannot connect to " + host + ":" + std::to_string(port) + ": " + e.what());
  }
}

TcpTransport::~TcpTransport() = default;

std::string TcpTransport::exchange(const std::string& line) {
  try {
    boost::asio::write(impl_->socket, boost::asio::buffer(line + "\n"));
    boost::asio::read_until(impl_->socket, impl_->buffer, '\n');
  } catch (const boost::system::system_error& e) {
    throw TransportError(std::string("device link: ") + e.what());
  }
  std::istream is(&impl_->buffer);
  std::string reply;
  std::getline(is, reply);
  if (!reply.empty() && reply.back() == '\r') reply.pop_back();
  return reply;
}

HttpProxyTransport::HttpProxyTransport(std::string host, std::uint16_t port, std::string run_id)
    : host_(std::move(host)), port_(port), run_id_(std::move(run_id)) {}

std::string HttpProxyTransport::exchange(const std::string& line) {
  net::HttpResponse res;
  try {
    res = net::http_request(host_, port_, "POST", "/api/sim/runs/" + run_id_ + "/configure",
                            nlohmann::json{{"command", line}}.dump());
  } catch (const std::runtime_error& e) {
    throw TransportError(e.what());
  }
  if (res.status != 200) throw TransportError("collector answered HTTP " + std::to_string(res.status) + ": " + res.body);
  try {
    return nlohmann::json::parse(res.body).at("reply").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed proxy reply: ") + e.what());
  }
}

std::unique_ptr<Transport> open_device(const std::string& spec) {
  static const std::regex kHttp(R"(http://([^:/]+):(\d+)/runs/([A-Za-z0-9_-]+)/?)");
  static const std::regex kTcp(R"((?:tcp://)?([^:/]+):(\d+))");
  std::smatch m;
  if (std::regex_match(spec, m, kHttp)) {
    return std::make_unique<HttpProxyTransport>(m[1], static_cast<std::uint16_t>(std::stoi(m[2])), m[3]);
  }
  if (std::regex_match(spec, m, kTcp)) {
    return std::make_unique<TcpTransport>(m[1], static_cast<std::uint16_t>(std::stoi(m[2])));
  }
  throw TransportError("unrecognised device '" + spec + "'");
}

// ---------------------------------------------------------------------------

std::size_t Listing::metric_count() const {
  std::size_t n = 0;
  for (const auto& b : boards) n += b.metrics.size();
  return n;
}

MetricInfo metric_from_json(const nlohmann::json& j) {
  MetricInfo m;
  m.slot = j.at("slot").get<int>();
  m.metric = j.at("metric").get<int>();
  m.kind = j.at("kind").get<std::string>();
  m.unit = j.at("unit").get<std::string>();
  m.poll_s = j.at("poll_s").get<std::uint32_t>();
  m.threshold = j.at("threshold").get<bool>();
  m.low = j.at("low").get<double>();
  m.high = j.at("high").get<double>();
  if (j.contains("hardware_wos_level")) m.hardware_wos_level = j.at("hardware_wos_level").get<int>();
  m.raw = j;
  return m;
}

std::string Client::command(const std::string& line) {
  const std::string reply = transport_.exchange(line);
  if (reply == "OK" || reply.rfind("OK ", 0) == 0) return reply.size() > 3 ? reply.substr(3) : std::string();
  if (reply.rfind("ERR ", 0) == 0 || reply == "ERR") {
    std::string rest = reply.size() > 4 ? reply.substr(4) : std::string();
    const auto space = rest.find(' ');
    const std::string kind = rest.substr(0, space);
    const std::string detail = space == std::string::npos ? std::string() : rest.substr(space + 1);
    const auto code = errc_from_string(kind);
    if (!code) throw TransportError("unrecognised error reply: " + reply);
    throw Error(*code, detail);
  }
  throw TransportError("malformed reply: " + reply);
}

namespace {
nlohmann::json parse_body(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed reply body: ") + e.what());
  }
}

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace

Listing Client::discover() {
  const auto j = parse_body(command("LIST"));
  Listing out;
  out.device = j.value("device", nlohmann::json::object());
  for (const auto& b : j.at("boards")) {
    BoardInfo info;
    info.slot = b.at("slot").get<int>();
    info.board = b.at("board").get<std::string>();
    info.firmware = b.value("firmware", "");
    for (const auto& m : b.at("metrics")) info.metrics.push_back(metric_from_json(m));
    out.boards.push_back(std::move(info));
  }
  return out;
}

MetricInfo Client::get(int slot, int metric) {
  return metric_from_json(parse_body(command("GET " + std::to_string(slot) + " " + std::to_string(metric))));
}

std::string format_set_command(int slot, int metric, const MetricSettings& s) {
  std::string line = "SET " + std::to_string(slot) + " " + std::to_string(metric);
  if (s.poll_s) line += " poll=" + std::to_string(*s.poll_s);
  if (s.threshold) line += " threshold=" + *s.threshold;
  if (s.low) line += " low=" + number(*s.low);
  if (s.high) line += " high=" + number(*s.high);
  return line;
}

MetricInfo Client::set_metric(int slot, int metric, const MetricSettings& settings) {
  return metric_from_json(parse_body(command(format_set_command(slot, metric, settings))));
}

nlohmann::json Client::set_device(std::optional<int> sf, std::optional<std::string> id_hex,
                                  std::optional<std::string> keys_hex) {
  std::string line = "SET device";
  if (sf) line += " sf=" + std::to_string(*sf);
  if (id_hex) line += " id=" + *id_hex;
  if (keys_hex) line += " keys=" + *keys_hex;
  return parse_body(command(line));
}

void Client::save() { command("SAVE"); }
void Client::reboot() { command("REBOOT"); }

}  // namespace iwast::cfg
