#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "iwast/collector.hpp"
#include "iwast/error.hpp"
#include "iwast/hex.hpp"

namespace iwast::collector {

std::optional<QueryPeriod> period_from_string(std::string_view name) noexcept {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "day") return QueryPeriod::Day;
  if (lower == "week") return QueryPeriod::Week;
  if (lower == "month") return QueryPeriod::Month;
  if (lower == "year") return QueryPeriod::Year;
  if (lower == "all") return QueryPeriod::All;
  return std::nullopt;
}

std::string_view to_string(QueryPeriod p) noexcept {
  switch (p) {
    case QueryPeriod::Day: return "day";
    case QueryPeriod::Week: return "week";
    case QueryPeriod::Month: return "month";
    case QueryPeriod::Year: return "year";
    case QueryPeriod::All: return "all";
  }
  return "all";
}

double period_seconds(QueryPeriod p) noexcept {
  constexpr double kDay = 86400.0;
  switch (p) {
    case QueryPeriod::Day: return kDay;
    case QueryPeriod::Week: return 7 * kDay;
    case QueryPeriod::Month: return 30 * kDay;
    case QueryPeriod::Year: return 365 * kDay;
    case QueryPeriod::All: break;
  }
  return std::numeric_limits<double>::infinity();
}

nlohmann::json StoredMeasurement::to_json() const {
  return {{"device_id", device_id}, {"slot", slot},        {"metric", metric}, {"kind", kind},
          {"unit", unit},           {"value", value},      {"timestamp_s", timestamp_s},
          {"fcnt", fcnt}};
}

nlohmann::json topology_to_json(const bus::Topology& topology) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t slot = 0; slot < topology.size(); ++slot) {
    if (topology[slot]) out.push_back({{"slot", slot}, {"board", bus::to_string(topology[slot]->board_type)}});
  }
  return out;
}

bus::Topology topology_from_json(const nlohmann::json& j) {
  bus::Topology t{};
  if (!j.is_array()) throw Error(Errc::BadPayload, "topology must be an array");
  for (const auto& b : j) {
    if (!b.is_object() || !b.contains("slot") || !b.contains("board") || !b.at("slot").is_number_integer() ||
        !b.at("board").is_string()) {
      throw Error(Errc::BadPayload, "topology entries need slot and board");
    }
    const auto slot = b.at("slot").get<long long>();
    if (slot < 0 || slot >= bus::kSlotCount) throw Error(Errc::BadPayload, "slot out of range");
    const auto type = bus::board_type_from_string(b.at("board").get<std::string>());
    if (!type) throw Error(Errc::BadPayload, "unknown board " + b.at("board").get<std::string>());
    t[slot] = bus::standard_descriptor(*type);
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw std::runtime_error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Stmt() { sqlite3_finalize(stmt_); }
  Stmt(const Stmt&) = delete;
  Stmt& operator=(const Stmt&) = delete;

  Stmt& bind(int i, const std::string& v) {
    sqlite3_bind_text(stmt_, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  Stmt& bind(int i, double v) {
    sqlite3_bind_double(stmt_, i, v);
    return *this;
  }
  /// true while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw std::runtime_error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p)) : std::string();
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

std::string lower_hex(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string csv_number(double v) { return nlohmann::json(v).dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Store::Store(const std::string& path) {
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw std::runtime_error("cannot open store " + path + ": " + msg);
  }
  exec("PRAGMA journal_mode=WAL");
  exec(R"(CREATE TABLE IF NOT EXISTS devices(
            device_id TEXT PRIMARY KEY,
            session TEXT NOT NULL DEFAULT '',
            topology TEXT NOT NULL))");
  exec(R"(CREATE TABLE IF NOT EXISTS uplinks(
            device_id TEXT NOT NULL,
            fcnt INTEGER NOT NULL,
            tx_time_s REAL NOT NULL,
            payload TEXT NOT NULL,
            PRIMARY KEY(device_id, fcnt)))");
  exec(R"(CREATE TABLE IF NOT EXISTS measurements(
            device_id TEXT NOT NULL,
            fcnt INTEGER NOT NULL,
            record INTEGER NOT NULL,
            slot INTEGER NOT NULL,
            metric INTEGER NOT NULL,
            kind TEXT NOT NULL,
            unit TEXT NOT NULL,
            raw INTEGER NOT NULL,
            value REAL NOT NULL,
            timestamp_s REAL NOT NULL,
            UNIQUE(device_id, fcnt, record)))");
  exec("CREATE INDEX IF NOT EXISTS measurements_series ON measurements(device_id, kind, timestamp_s)");
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw std::runtime_error("sqlite: " + msg);
  }
}

void Store::register_device(const std::string& device_id, const bus::Topology& topology,
                            const std::string& session) {
  std::lock_guard lock(mutex_);
  Stmt st(db_,
          "INSERT INTO devices(device_id, session, topology) VALUES(?, ?, ?) "
          "ON CONFLICT(device_id) DO UPDATE SET session = excluded.session, topology = excluded.topology");
  st.bind(1, lower_hex(device_id)).bind(2, session).bind(3, topology_to_json(topology).dump());
  st.step();
}

std::optional<bus::Topology> Store::topology(const std::string& device_id) const {
  std::lock_guard lock(mutex_);
  Stmt st(db_, "SELECT topology FROM devices WHERE device_id = ?");
  st.bind(1, lower_hex(device_id));
  if (!st.step()) return std::nullopt;
  return topology_from_json(nlohmann::json::parse(st.text(0)));
}

bool Store::device_known(const std::string& device_id) const {
  Stmt st(db_, "SELECT 1 FROM devices WHERE device_id = ?");
  st.bind(1, device_id);
  return st.step();
}

IngestResult Store::ingest(const lorawan::UplinkPacket& packet) {
  const std::string id = to_hex(packet.device_id);
  const auto topo = topology(id);
  if (!topo) throw Error(Errc::BadPayload, "device " + id + " has no registered topology");
  std::vector<lorawan::DecodedMeasurement> decoded;
  try {
    decoded = lorawan::decode_uplink(packet.payload, *topo);
  } catch (const Error& e) {
    throw Error(Errc::BadPayload, e.what());
  }

  std::lock_guard lock(mutex_);
  IngestResult result;
  exec("BEGIN IMMEDIATE");
  try {
    Stmt up(db_, "INSERT OR IGNORE INTO uplinks(device_id, fcnt, tx_time_s, payload) VALUES(?, ?, ?, ?)");
    up.bind(1, id).bind(2, std::int64_t{packet.fcnt}).bind(3, packet.tx_time_s).bind(4, to_hex(packet.payload));
    up.step();
    if (sqlite3_changes(db_) == 0) {
      exec("COMMIT");
      return result;
    }
    for (std::size_t i = 0; i < decoded.size(); ++i) {
      const auto& d = decoded[i];
      StoredMeasurement m;
      m.device_id = id;
      m.slot = d.slot;
      m.metric = d.metric;
      m.kind = std::string(bus::to_string(d.kind));
      m.unit = std::string(bus::scale_of(d.kind).unit);
      m.value = d.value;
      m.timestamp_s = packet.tx_time_s;
      m.fcnt = packet.fcnt;
      Stmt one(db_,
               "INSERT OR IGNORE INTO measurements(device_id, fcnt, record, slot, metric, kind, unit, raw, value, "
               "timestamp_s) VALUES(?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
      one.bind(1, id)
          .bind(2, std::int64_t{packet.fcnt})
          .bind(3, static_cast<std::int64_t>(i))
          .bind(4, std::int64_t{d.slot})
          .bind(5, std::int64_t{d.metric})
          .bind(6, m.kind)
          .bind(7, m.unit)
          .bind(8, std::int64_t{d.raw})
          .bind(9, d.value)
          .bind(10, packet.tx_time_s);
      one.step();
      if (sqlite3_changes(db_) > 0) {
        ++result.stored;
        result.rows.push_back(std::move(m));
      }
    }
    exec("COMMIT");
  } catch (...) {
    exec("ROLLBACK");
    throw;
  }
  return result;
}

IngestResult Store::ingest_json(const nlohmann::json& body) {
  if (body.is_object() && body.contains("topology")) {
    const auto topo = topology_from_json(body.at("topology"));
    const auto id = body.value("device_id", std::string());
    const auto bytes = from_hex(id);
    if (!bytes || bytes->size() != 8) throw Error(Errc::BadPayload, "device_id must be 8 hex bytes");
    register_device(id, topo, body.value("session", std::string()));
  }
  return ingest(lorawan::uplink_from_json(body));
}

nlohmann::json Store::devices(const std::string& session) const {
  std::lock_guard lock(mutex_);
  Stmt st(db_,
          "SELECT d.device_id, d.session, d.topology, COUNT(m.value), MIN(m.timestamp_s), MAX(m.timestamp_s) "
          "FROM devices d LEFT JOIN measurements m ON m.device_id = d.device_id "
          "WHERE (?1 = '' OR d.session = ?1) GROUP BY d.device_id ORDER BY d.device_id");
  st.bind(1, session);
  nlohmann::json out = nlohmann::json::array();
  while (st.step()) {
    nlohmann::json d = {{"device_id", st.text(0)},
                        {"session", st.text(1)},
                        {"topology", nlohmann::json::parse(st.text(2))},
                        {"measurements", st.integer(3)}};
    d["first_s"] = st.is_null(4) ? nlohmann::json(nullptr) : nlohmann::json(st.real(4));
    d["last_s"] = st.is_null(5) ? nlohmann::json(nullptr) : nlohmann::json(st.real(5));
    out.push_back(std::move(d));
  }
  return out;
}

nlohmann::json Store::metrics(const std::string& device_id) const {
  std::lock_guard lock(mutex_);
  const std::string id = lower_hex(device_id);
  if (!device_known(id)) throw Error(Errc::UnknownDevice, device_id);
  Stmt st(db_,
          "SELECT kind, unit, slot, metric, COUNT(*) FROM measurements WHERE device_id = ? "
          "GROUP BY kind, slot, metric ORDER BY slot, metric");
  st.bind(1, id);
  nlohmann::json out = nlohmann::json::array();
  while (st.step()) {
    out.push_back({{"kind", st.text(0)},
                   {"unit", st.text(1)},
                   {"slot", st.integer(2)},
                   {"metric", st.integer(3)},
                   {"count", st.integer(4)}});
  }
  return out;
}

std::vector<SeriesPoint> Store::query(const std::string& device_id, bus::MetricKind kind, QueryPeriod period,
                                      std::optional<double> now) const {
  std::lock_guard lock(mutex_);
  const std::string id = lower_hex(device_id);
  if (!device_known(id)) throw Error(Errc::UnknownDevice, device_id);
  if (!now) {
    Stmt latest(db_, "SELECT MAX(timestamp_s) FROM measurements WHERE device_id = ?");
    latest.bind(1, id);
    latest.step();
    now = latest.is_null(0) ? 0.0 : latest.real(0);
  }
  const double window = period_seconds(period);
  Stmt st(db_,
          "SELECT timestamp_s, value, slot FROM measurements WHERE device_id = ? AND kind = ? "
          "ORDER BY timestamp_s, fcnt, record");
  st.bind(1, id).bind(2, std::string(bus::to_string(kind)));
  std::vector<SeriesPoint> out;
  while (st.step()) {
    const double t = st.real(0);
    if (std::isfinite(window) && !(*now - t < window)) continue;
    if (t > *now) continue;
    out.push_back({t, st.real(1), static_cast<int>(st.integer(2))});
  }
  return out;
}

std::string Store::export_csv(const std::string& device_id, std::optional<bus::MetricKind> kind) const {
  std::lock_guard lock(mutex_);
  Stmt st(db_,
          "SELECT device_id, slot, kind, unit, timestamp_s, value FROM measurements "
          "WHERE (?1 = '' OR device_id = ?1) AND (?2 = '' OR kind = ?2) "
          "ORDER BY device_id, timestamp_s, fcnt, record");
  st.bind(1, lower_hex(device_id)).bind(2, kind ? std::string(bus::to_string(*kind)) : std::string());
  std::string out = "device_id,slot,metric,unit,timestamp_s,value\n";
  while (st.step()) {
    out += csv_field(st.text(0)) + "," + std::to_string(st.integer(1)) + "," + csv_field(st.text(2)) + "," +
           csv_field(st.text(3)) + "," + csv_number(st.real(4)) + "," + csv_number(st.real(5)) + "\n";
  }
  return out;
}

std::size_t Store::measurement_count() const {
  std::lock_guard lock(mutex_);
  Stmt st(db_, "SELECT COUNT(*) FROM measurements");
  st.step();
  return static_cast<std::size_t>(st.integer(0));
}

}  // namespace iwast::collector
