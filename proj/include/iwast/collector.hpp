// Measurement collector: decoded uplink storage, series queries, CSV export,
// live push and simulation runs for the dashboard.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "iwast/bus_protocol.hpp"
#include "iwast/lorawan_radio.hpp"

struct sqlite3;

namespace iwast::collector {

enum class QueryPeriod { Day, Week, Month, Year, All };

std::optional<QueryPeriod> period_from_string(std::string_view name) noexcept;
std::string_view to_string(QueryPeriod p) noexcept;
/// Window length in seconds; infinity for All.
double period_seconds(QueryPeriod p) noexcept;

struct StoredMeasurement {
  std::string device_id;  // hex
  int slot = 0;
  int metric = 0;
  std::string kind;
  std::string unit;
  double value = 0.0;
  double timestamp_s = 0.0;
  std::uint32_t fcnt = 0;

  nlohmann::json to_json() const;
};

struct SeriesPoint {
  double timestamp_s = 0.0;
  double value = 0.0;
  int slot = 0;
};

struct IngestResult {
  std::size_t stored = 0;
  std::vector<StoredMeasurement> rows;
};

/// SQLite-backed store. Every public call is serialised by one mutex.
class Store {
 public:
  explicit Store(const std::string& path = ":memory:");
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  void register_device(const std::string& device_id, const bus::Topology& topology, const std::string& session = {});
  std::optional<bus::Topology> topology(const std::string& device_id) const;

  /// Decodes and stores. Throws BadPayload for undecodable input or an
  /// unregistered device. A repeated (device_id, fcnt) stores nothing.
  IngestResult ingest(const lorawan::UplinkPacket& packet);
  /// Same for the JSON delivery format; an optional "topology" array
  /// registers the device first.
  IngestResult ingest_json(const nlohmann::json& body);

  nlohmann::json devices(const std::string& session = {}) const;
  /// Throws UnknownDevice.
  nlohmann::json metrics(const std::string& device_id) const;
  /// Ascending series of one metric kind. `now` defaults to the device's
  /// latest timestamp; a point is inside when now - t < window.
  /// Throws UnknownDevice.
  std::vector<SeriesPoint> query(const std::string& device_id, bus::MetricKind kind, QueryPeriod period,
                                 std::optional<double> now = std::nullopt) const;
  std::string export_csv(const std::string& device_id = {}, std::optional<bus::MetricKind> kind = {}) const;
  std::size_t measurement_count() const;

 private:
  bool device_known(const std::string& device_id) const;
  void exec(const char* sql) const;

  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

nlohmann::json topology_to_json(const bus::Topology& topology);
/// [{"slot": 0, "board": "environmental"}, ...] with standard descriptors.
bus::Topology topology_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Live push

/// Fan-out of stored measurements to WebSocket subscribers.
class LiveHub {
 public:
  class Subscription {
   public:
    /// Blocks until a message arrives or the hub closes (then nullopt).
    std::optional<std::string> next();

   private:
    friend class LiveHub;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    bool closed_ = false;
  };

  std::shared_ptr<Subscription> subscribe();
  void unsubscribe(const std::shared_ptr<Subscription>& sub);
  void publish(const std::string& message);
  void close_all();
  std::size_t subscribers() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

// ---------------------------------------------------------------------------
// Simulation runs

class RunManager {
 public:
  RunManager(Store& store, LiveHub& hub, std::filesystem::path scenario_dir);
  ~RunManager();

  /// Starts a run from scenario JSON (inline, or {"scenario_path": ...}
  /// relative to the scenario directory). Returns the run id.
  std::string start(const nlohmann::json& request);
  std::optional<nlohmann::json> status(const std::string& id) const;
  /// One configurator line; "ERR NoDevice" unless the run awaits
  /// configuration. nullopt for an unknown run.
  std::optional<std::string> configure(const std::string& id, const std::string& line);
  /// Blocks until the run leaves the running state (tests, CLI).
  void wait(const std::string& id, bool until_completed = true) const;

 private:
  struct Run;
  void execute(const std::shared_ptr<Run>& run);

  Store& store_;
  LiveHub& hub_;
  std::filesystem::path scenario_dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::size_t next_id_ = 1;
  std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------
// HTTP

struct HttpRequest {
  std::string method;
  std::string target;  // path + query
  std::string body;
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request routing, independent of the socket layer.
class Api {
 public:
  Api(Store& store, LiveHub& hub, RunManager& runs) : store_(store), hub_(hub), runs_(runs) {}
  HttpReply handle(const HttpRequest& req);

 private:
  Store& store_;
  LiveHub& hub_;
  RunManager& runs_;
};

/// Beast listener: one thread per connection, WebSocket upgrade on /api/live.
class Server {
 public:
  Server(Api& api, LiveHub& hub);
  ~Server();
  /// Binds and starts accepting; port 0 picks an ephemeral port.
  std::uint16_t start(const std::string& address, std::uint16_t port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iwast::collector
