// Client side of the USB configuration session: transports and a typed
// client over the newline-delimited text protocol.
//
// Session verbs (one reply line each, "OK ..." or "ERR <Kind> [detail]"):
//   LIST
//   GET <slot> <metric> | GET device
//   SET <slot> <metric> [poll=S] [threshold=on|off|<dB>] [low=V] [high=V]
//   SET device [sf=N] [id=<16 hex>] [keys=<72 hex>]
//   SAVE
//   REBOOT
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace iwast::cfg {

/// The link to the device failed (as opposed to the device replying ERR).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one command line, returns the reply line. Throws TransportError.
  virtual std::string exchange(const std::string& line) = 0;
};

/// In-process link, e.g. straight into a Simulator.
class DirectTransport final : public Transport {
 public:
  explicit DirectTransport(std::function<std::string(const std::string&)> handler) : handler_(std::move(handler)) {}
  std::string exchange(const std::string& line) override { return handler_(line); }

 private:
  std::function<std::string(const std::string&)> handler_;
};

/// Line-oriented TCP link to `iwast-sim device`.
class TcpTransport final : public Transport {
 public:
  TcpTransport(std::string host, std::uint16_t port);
  ~TcpTransport() override;
  std::string exchange(const std::string& line) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Session proxied by the collector to a running simulation:
/// POST /api/sim/runs/{id}/configure {"command": line} -> {"reply": ...}.
class HttpProxyTransport final : public Transport {
 public:
  HttpProxyTransport(std::string host, std::uint16_t port, std::string run_id);
  std::string exchange(const std::string& line) override;

 private:
  std::string host_;
  std::uint16_t port_;
  std::string run_id_;
};

/// "tcp://host:port", "host:port" or "http://host:port/runs/<id>".
std::unique_ptr<Transport> open_device(const std::string& spec);

// ---------------------------------------------------------------------------

struct MetricInfo {
  int slot = 0;
  int metric = 0;
  std::string kind;
  std::string unit;
  std::uint32_t poll_s = 0;
  bool threshold = false;
  double low = 0.0;
  double high = 0.0;
  std::optional<int> hardware_wos_level;
  nlohmann::json raw;
};

struct BoardInfo {
  int slot = 0;
  std::string board;
  std::string firmware;
  std::vector<MetricInfo> metrics;
};

struct Listing {
  nlohmann::json device;
  std::vector<BoardInfo> boards;
  std::size_t metric_count() const;
};

struct MetricSettings {
  std::optional<std::uint32_t> poll_s;
  std::optional<std::string> threshold;  // "on", "off" or a dBSPL value
  std::optional<double> low;
  std::optional<double> high;
};

/// Typed wrapper. ERR replies throw iwast::Error with the reported kind;
/// link failures surface as TransportError.
class Client {
 public:
  explicit Client(Transport& transport) : transport_(transport) {}

  Listing discover();
  MetricInfo get(int slot, int metric);
  MetricInfo set_metric(int slot, int metric, const MetricSettings& settings);
  nlohmann::json set_device(std::optional<int> sf, std::optional<std::string> id_hex,
                            std::optional<std::string> keys_hex);
  void save();
  void reboot();
  /// Sends a raw line; returns the text after "OK".
  std::string command(const std::string& line);

 private:
  Transport& transport_;
};

MetricInfo metric_from_json(const nlohmann::json& j);
std::string format_set_command(int slot, int metric, const MetricSettings& settings);

}  // namespace iwast::cfg
