#include "iwast/energy_model.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "iwast/error.hpp"

namespace iwast::energy {

EnergyLedger::EnergyLedger(double start_s, bool retain_intervals)
    : start_(start_s), end_(start_s), retain_(retain_intervals) {}

std::uint16_t EnergyLedger::intern(std::string_view label) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<std::uint16_t>(i);
  }
  labels_.emplace_back(label);
  return static_cast<std::uint16_t>(labels_.size() - 1);
}

ChannelId EnergyLedger::add_channel(std::string name, double current_uA, std::string_view label) {
  if (closed_) throw std::logic_error("ledger already closed");
  Channel c;
  c.name = std::move(name);
  c.open = {start_, start_, current_uA, intern(label)};
  channels_.push_back(std::move(c));
  return channels_.size() - 1;
}

void EnergyLedger::finish(Channel& c, double t) {
  c.open.t1 = t;
  if (t > c.open.t0) {
    c.totals_uAs[labels_[c.open.label]] += c.open.current_uA * (t - c.open.t0);
    if (retain_) {
      // Merge with a predecessor that has the same state.
      if (!c.closed.empty() && c.closed.back().t1 == c.open.t0 &&
          c.closed.back().current_uA == c.open.current_uA && c.closed.back().label == c.open.label) {
        c.closed.back().t1 = t;
      } else {
        c.closed.push_back(c.open);
      }
    }
  }
}

void EnergyLedger::transition(ChannelId ch, double t, double current_uA, std::string_view label) {
  if (closed_) throw std::logic_error("ledger already closed");
  Channel& c = channels_.at(ch);
  if (t < c.open.t0) throw std::logic_error("ledger transition in the past");
  const std::uint16_t id = intern(label);
  if (c.open.current_uA == current_uA && c.open.label == id) return;
  finish(c, t);
  c.open = {t, t, current_uA, id};
  end_ = std::max(end_, t);
}

void EnergyLedger::close(double t) {
  if (closed_) return;
  for (auto& c : channels_) {
    if (t < c.open.t0) throw std::logic_error("ledger closed before its last transition");
    finish(c, t);
  }
  end_ = t;
  closed_ = true;
}

std::optional<ChannelId> EnergyLedger::find_channel(std::string_view name) const {
  for (std::size_t i = 0; i < channels_.size(); ++i) {
    if (channels_[i].name == name) return i;
  }
  return std::nullopt;
}

double EnergyLedger::total_current() const noexcept {
  double sum = 0.0;
  for (const auto& c : channels_) sum += c.open.current_uA;
  return sum;
}

nlohmann::json EnergyLedger::to_json() const {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : channels_) {
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& iv : c.closed) {
      intervals.push_back({iv.t0, iv.t1, iv.current_uA, labels_[iv.label]});
    }
    channels.push_back({{"name", c.name}, {"intervals", std::move(intervals)}});
  }
  return {{"start_s", start_}, {"end_s", end_}, {"units", {{"time", "s"}, {"current", "uA"}}},
          {"channels", std::move(channels)}};
}

Integration integrate(const EnergyLedger& ledger, double t0, double t1, double supply_voltage) {
  if (!ledger.closed() || t0 > t1 || t0 < ledger.start() || t1 > ledger.end()) {
    throw Error(Errc::RangeOutsideLedger);
  }
  if (!ledger.retains_intervals()) throw Error(Errc::RangeOutsideLedger, "intervals not retained");
  Integration out;
  double total_uAs = 0.0;
  for (ChannelId ch = 0; ch < ledger.channel_count(); ++ch) {
    const auto ivs = ledger.intervals(ch);
    // First interval that ends after t0.
    auto it = std::upper_bound(ivs.begin(), ivs.end(), t0,
                               [](double t, const Interval& iv) { return t < iv.t1; });
    double uAs = 0.0;
    for (; it != ivs.end() && it->t0 < t1; ++it) {
      const double overlap = std::min(it->t1, t1) - std::max(it->t0, t0);
      if (overlap > 0) uAs += it->current_uA * overlap;
    }
    Charge c{uAs / 3600.0, uAs * supply_voltage / 1000.0};
    out.per_board[ledger.channel_name(ch)] = c;
    total_uAs += uAs;
  }
  out.total = {total_uAs / 3600.0, total_uAs * supply_voltage / 1000.0};
  return out;
}

// ---------------------------------------------------------------------------

double HarvestModel::current_uA(double lux) const noexcept {
  if (lux <= 0.0) return 0.0;
  return efficiency * std::min(uA_per_lux * lux, cap_uA);
}

double harvest(double lux, double dt_s, const HarvestModel& model) {
  return model.current_uA(lux) * dt_s / 3600.0;
}

Battery::Battery(double capacity_uAh, double initial_uAh)
    : capacity_(capacity_uAh), charge_(std::clamp(initial_uAh, 0.0, capacity_uAh)) {
  depleted_ = charge_ <= 0.0;
}

std::optional<double> Battery::advance(double draw_uA, double harvest_uA, double dt_s) {
  if (depleted_ || dt_s <= 0.0) return std::nullopt;
  const double net_uA = harvest_uA - draw_uA;
  const double next = charge_ + net_uA * dt_s / 3600.0;
  if (next <= 0.0 && net_uA < 0.0) {
    const double to_zero_s = charge_ * 3600.0 / -net_uA;
    consumed_ += draw_uA * to_zero_s / 3600.0;
    harvested_ += harvest_uA * to_zero_s / 3600.0;
    charge_ = 0.0;
    depleted_ = true;
    return to_zero_s;
  }
  consumed_ += draw_uA * dt_s / 3600.0;
  harvested_ += harvest_uA * dt_s / 3600.0;
  if (next > capacity_) {
    spilled_ += next - capacity_;
    charge_ = capacity_;
  } else {
    charge_ = next;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

PowerReport power_report(const EnergyLedger& ledger, const nlohmann::json& configuration,
                         double harvested_uAh, double capacity_uAh, double supply_voltage) {
  PowerReport r;
  r.duration_s = ledger.end() - ledger.start();
  r.configuration = configuration;
  double total_uAs = 0.0;
  for (ChannelId ch = 0; ch < ledger.channel_count(); ++ch) {
    BoardReport b;
    b.board = ledger.channel_name(ch);
    double board_uAs = 0.0;
    for (const auto& [label, uAs] : ledger.charge_by_label(ch)) board_uAs += uAs;
    for (const auto& [label, uAs] : ledger.charge_by_label(ch)) {
      b.labels.push_back({label, uAs / 3600.0, uAs * supply_voltage / 1000.0,
                          board_uAs > 0 ? uAs / board_uAs : 0.0});
    }
    std::stable_sort(b.labels.begin(), b.labels.end(),
                     [](const LabelShare& a, const LabelShare& c) { return a.uAh > c.uAh; });
    b.uAh = board_uAs / 3600.0;
    b.mJ = board_uAs * supply_voltage / 1000.0;
    b.avg_current_uA = r.duration_s > 0 ? board_uAs / r.duration_s : 0.0;
    total_uAs += board_uAs;
    r.boards.push_back(std::move(b));
  }
  r.total_uAh = total_uAs / 3600.0;
  r.total_mJ = total_uAs * supply_voltage / 1000.0;
  if (r.duration_s > 0) {
    r.avg_current_uA = total_uAs / r.duration_s;
    r.avg_harvest_uA = harvested_uAh * 3600.0 / r.duration_s;
    const double net = r.avg_current_uA - r.avg_harvest_uA;
    if (net > 0) r.projected_lifetime_h = capacity_uAh / net;
  }
  return r;
}

ComparisonEntry summarize(std::string name, const PowerReport& report) {
  return {std::move(name), report.total_uAh, report.avg_current_uA, report.projected_lifetime_h};
}

void attach_comparison(PowerReport& report, std::vector<ComparisonEntry> runs) {
  std::stable_sort(runs.begin(), runs.end(), [](const ComparisonEntry& a, const ComparisonEntry& b) {
    return a.total_uAh < b.total_uAh;
  });
  report.comparison = std::move(runs);
}

namespace {
nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace

nlohmann::json to_json(const PowerReport& r) {
  nlohmann::json boards = nlohmann::json::array();
  for (const auto& b : r.boards) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& l : b.labels) {
      labels.push_back({{"label", l.label}, {"charge_uAh", l.uAh}, {"energy_mJ", l.mJ}, {"share", l.share}});
    }
    boards.push_back({{"board", b.board},
                      {"charge_uAh", b.uAh},
                      {"energy_mJ", b.mJ},
                      {"avg_current_uA", b.avg_current_uA},
                      {"labels", std::move(labels)}});
  }
  nlohmann::json out = {{"report_version", r.report_version},
                        {"duration_s", r.duration_s},
                        {"boards", std::move(boards)},
                        {"total_charge_uAh", r.total_uAh},
                        {"total_energy_mJ", r.total_mJ},
                        {"avg_current_uA", r.avg_current_uA},
                        {"avg_harvest_uA", r.avg_harvest_uA},
                        {"projected_lifetime_h", optional_json(r.projected_lifetime_h)},
                        {"configuration", r.configuration}};
  if (!r.comparison.empty()) {
    nlohmann::json cmp = nlohmann::json::array();
    for (const auto& c : r.comparison) {
      cmp.push_back({{"name", c.name},
                     {"total_charge_uAh", c.total_uAh},
                     {"avg_current_uA", c.avg_current_uA},
                     {"projected_lifetime_h", optional_json(c.projected_lifetime_h)}});
    }
    out["comparison"] = std::move(cmp);
    out["most_efficient"] = r.comparison.front().name;
  }
  return out;
}

std::string to_table(const PowerReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "Power report over %.1f s (%.2f h)\n", r.duration_s, r.duration_s / 3600.0);
  os << line;
  std::snprintf(line, sizeof line, "%-16s %-16s %14s %12s %7s\n", "board", "label", "charge [uAh]",
                "energy [mJ]", "share");
  os << line;
  for (const auto& b : r.boards) {
    for (const auto& l : b.labels) {
      std::snprintf(line, sizeof line, "%-16s %-16s %14.3f %12.3f %6.1f%%\n", b.board.c_str(),
                    l.label.c_str(), l.uAh, l.mJ, 100.0 * l.share);
      os << line;
    }
    std::snprintf(line, sizeof line, "%-16s %-16s %14.3f %12.3f  avg %.3f uA\n", b.board.c_str(), "(total)",
                  b.uAh, b.mJ, b.avg_current_uA);
    os << line;
  }
  std::snprintf(line, sizeof line, "total %.3f uAh, %.3f mJ, average %.3f uA, harvest %.3f uA\n",
                r.total_uAh, r.total_mJ, r.avg_current_uA, r.avg_harvest_uA);
  os << line;
  if (r.projected_lifetime_h) {
    std::snprintf(line, sizeof line, "projected lifetime on battery: %.1f h (%.1f days)\n",
                  *r.projected_lifetime_h, *r.projected_lifetime_h / 24.0);
  } else {
    std::snprintf(line, sizeof line, "projected lifetime on battery: unlimited (harvest covers draw)\n");
  }
  os << line;
  if (!r.comparison.empty()) {
    os << "comparison (most efficient first):\n";
    for (const auto& c : r.comparison) {
      std::snprintf(line, sizeof line, "  %-24s %14.3f uAh  avg %10.3f uA\n", c.name.c_str(), c.total_uAh,
                    c.avg_current_uA);
      os << line;
    }
  }
  return os.str();
}

}  // namespace iwast::energy
