#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmsdn/address.hpp"
#include "wmsdn/metric_log.hpp"
#include "wmsdn/sim_time.hpp"

namespace wmsdn {

struct PingProbe {
  std::string name;
  std::string src;  // node name
  Address dst;
  Duration interval = std::chrono::seconds(1);
  SimTime start{};
  std::optional<SimTime> stop;
};

struct BulkFlow {
  std::string name;
  std::string src;  // host names
  std::string dst;
  double demand_bps = std::numeric_limits<double>::infinity();
  Duration loss_recovery_delay = std::chrono::seconds(1);
};

// Everything the metrics need, gathered either online during a run or
// afterwards from the metric log.
struct Observations {
  std::map<std::string, std::vector<SimTime>> ping_replies;                            // probe -> reply times
  std::map<std::string, std::vector<std::pair<SimTime, std::string>>> connections;     // wmr -> (time, controller)
  std::map<std::string, std::vector<std::pair<SimTime, double>>> throughput;           // flow -> samples

  bool operator==(const Observations&) const = default;
};

Observations observations_from_log(std::span<const MetricRecord> records);

// Time from `merge_at` to the first ping reply received at or after it.
std::optional<double> network_connectivity_time(const Observations& obs, SimTime merge_at, const std::string& probe);

// Latest over `wmrs` of the first connection to a controller other than the
// one held at `event_at`, minus `reference`. Empty when a WMR never moves.
std::optional<double> master_selection_delay(const Observations& obs, SimTime event_at, SimTime reference,
                                             std::span<const std::string> wmrs);

std::vector<std::pair<SimTime, double>> throughput_series(const Observations& obs, const std::string& flow);

struct ThroughputAnalysis {
  double steady_bps = 0;              // last sample before the event
  bool reached_zero = false;          // some sample after the event is 0
  std::optional<SimTime> dip_start;   // first sample after the event below 90% of steady
  std::optional<SimTime> recovered;   // first sample after the last dip back at >= 90%
  std::optional<double> gap_s() const;
  std::optional<double> recovery_after(SimTime event_at) const;
};

ThroughputAnalysis analyze_throughput(std::span<const std::pair<SimTime, double>> samples, SimTime event_at,
                                      double recovered_fraction = 0.9);

struct SummaryRow {
  std::uint64_t seed = 0;
  std::string scenario;
  std::optional<double> connectivity_time_s;
  std::optional<double> selection_delay_s;
  std::optional<double> throughput_gap_s;
  // Which metrics the scenario asks for; a requested but missing one is
  // written as "unresolved", an unrequested one as an empty field.
  bool has_connectivity = false;
  bool has_selection = false;
  bool has_throughput = false;

  bool operator==(const SummaryRow&) const = default;
};

inline constexpr const char* kResultsHeader = "seed,scenario,connectivity_time_s,selection_delay_s,throughput_gap_s";
std::string to_csv(const SummaryRow& row);

}  // namespace wmsdn
