#include "wmsdn/traffic_metrics.hpp"

#include <algorithm>
#include <cstdio>

namespace wmsdn {

Observations observations_from_log(std::span<const MetricRecord> records) {
  Observations obs;
  for (const auto& r : records) {
    const auto& d = r.payload;
    switch (r.kind) {
      case RecordKind::PingResult:
        obs.ping_replies[d.at("probe").get<std::string>()].push_back(r.time);
        break;
      case RecordKind::EftmTransition:
        if (d.value("event", "") == "conn_open") {
          obs.connections[d.at("wmr").get<std::string>()].emplace_back(r.time, d.at("controller").get<std::string>());
        }
        break;
      case RecordKind::ThroughputSample:
        obs.throughput[d.at("flow").get<std::string>()].emplace_back(r.time, d.at("rate_bps").get<double>());
        break;
      default:
        break;
    }
  }
  return obs;
}

std::optional<double> network_connectivity_time(const Observations& obs, SimTime merge_at, const std::string& probe) {
  auto it = obs.ping_replies.find(probe);
  if (it == obs.ping_replies.end()) return std::nullopt;
  auto first = std::lower_bound(it->second.begin(), it->second.end(), merge_at);
  if (first == it->second.end()) return std::nullopt;
  return to_seconds(*first - merge_at);
}

std::optional<double> master_selection_delay(const Observations& obs, SimTime event_at, SimTime reference,
                                             std::span<const std::string> wmrs) {
  if (wmrs.empty()) return std::nullopt;
  std::optional<SimTime> latest;
  for (const auto& wmr : wmrs) {
    auto it = obs.connections.find(wmr);
    if (it == obs.connections.end()) return std::nullopt;
    std::optional<std::string> before;
    std::optional<SimTime> moved;
    for (const auto& [t, controller] : it->second) {
      if (t <= event_at) {
        before = controller;
      } else if (!before || controller != *before) {
        moved = t;
        break;
      }
    }
    if (!moved) return std::nullopt;
    if (!latest || *moved > *latest) latest = moved;
  }
  return to_seconds(*latest - reference);
}

std::vector<std::pair<SimTime, double>> throughput_series(const Observations& obs, const std::string& flow) {
  auto it = obs.throughput.find(flow);
  if (it == obs.throughput.end()) return {};
  return it->second;
}

std::optional<double> ThroughputAnalysis::gap_s() const {
  if (!dip_start || !recovered) return std::nullopt;
  return to_seconds(*recovered - *dip_start);
}

std::optional<double> ThroughputAnalysis::recovery_after(SimTime event_at) const {
  if (!recovered) return std::nullopt;
  return to_seconds(*recovered - event_at);
}

ThroughputAnalysis analyze_throughput(std::span<const std::pair<SimTime, double>> samples, SimTime event_at,
                                      double recovered_fraction) {
  ThroughputAnalysis a;
  for (const auto& [t, rate] : samples) {
    if (t < event_at) a.steady_bps = rate;
  }
  const double threshold = recovered_fraction * a.steady_bps;
  bool below = false;
  for (const auto& [t, rate] : samples) {
    if (t < event_at) continue;
    if (rate == 0.0) a.reached_zero = true;
    if (rate < threshold) {
      if (!a.dip_start) a.dip_start = t;
      below = true;
      a.recovered.reset();
    } else if (below) {
      below = false;
      a.recovered = t;
    }
  }
  if (below) a.recovered.reset();
  return a;
}

namespace {

std::string field(bool requested, const std::optional<double>& v) {
  if (!requested) return "";
  if (!v) return "unresolved";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::string to_csv(const SummaryRow& row) {
  return std::to_string(row.seed) + "," + row.scenario + "," + field(row.has_connectivity, row.connectivity_time_s) +
         "," + field(row.has_selection, row.selection_delay_s) + "," +
         field(row.has_throughput, row.throughput_gap_s);
}

}  // namespace wmsdn
