#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wmsdn/sim_time.hpp"

namespace wmsdn {

enum class RecordKind {
  LinkEvent,
  OlsrRouteChange,
  EftmTransition,
  ControllerAction,
  PingResult,
  ThroughputSample,
  RuleEvent,
  PacketDrop,
};

const char* to_string(RecordKind k);
RecordKind record_kind_from_string(std::string_view s);

struct MetricRecord {
  SimTime time{};
  std::uint64_t seq = 0;
  RecordKind kind = RecordKind::LinkEvent;
  nlohmann::json payload;

  bool operator==(const MetricRecord&) const = default;
};

// Append-only, (time, seq)-ordered event log. Serialized as one JSON object
// per line: {"t_us":..., "seq":..., "kind":"...", "data":{...}}.
class MetricLog {
 public:
  void append(SimTime time, RecordKind kind, nlohmann::json payload);

  std::span<const MetricRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  void write_ndjson(std::ostream& out) const;
  std::string to_ndjson() const;

  // Throws std::runtime_error with the offending line number.
  static std::vector<MetricRecord> parse_ndjson(std::istream& in);

 private:
  std::vector<MetricRecord> records_;
};

}  // namespace wmsdn
