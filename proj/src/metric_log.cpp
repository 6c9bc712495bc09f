#include "wmsdn/metric_log.hpp"

#include <array>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace wmsdn {
namespace {

constexpr std::array<std::pair<RecordKind, const char*>, 8> kKindNames{{
    {RecordKind::LinkEvent, "LinkEvent"},
    {RecordKind::OlsrRouteChange, "OlsrRouteChange"},
    {RecordKind::EftmTransition, "EftmTransition"},
    {RecordKind::ControllerAction, "ControllerAction"},
    {RecordKind::PingResult, "PingResult"},
    {RecordKind::ThroughputSample, "ThroughputSample"},
    {RecordKind::RuleEvent, "RuleEvent"},
    {RecordKind::PacketDrop, "PacketDrop"},
}};

}  // namespace

const char* to_string(RecordKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

RecordKind record_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (s == name) return kind;
  }
  throw std::runtime_error("unknown record kind '" + std::string(s) + "'");
}

void MetricLog::append(SimTime time, RecordKind kind, nlohmann::json payload) {
  if (!records_.empty() && time < records_.back().time) throw std::logic_error("metric log time went backwards");
  records_.push_back(MetricRecord{time, records_.size(), kind, std::move(payload)});
}

void MetricLog::write_ndjson(std::ostream& out) const {
  for (const auto& r : records_) {
    nlohmann::json line{{"t_us", to_us(r.time)}, {"seq", r.seq}, {"kind", to_string(r.kind)}, {"data", r.payload}};
    out << line.dump() << '\n';
  }
}

std::string MetricLog::to_ndjson() const {
  std::ostringstream out;
  write_ndjson(out);
  return out.str();
}

std::vector<MetricRecord> MetricLog::parse_ndjson(std::istream& in) {
  std::vector<MetricRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(MetricRecord{SimTime{Duration{j.at("t_us").get<std::int64_t>()}}, j.at("seq").get<std::uint64_t>(),
                                 record_kind_from_string(j.at("kind").get<std::string>()), j.at("data")});
    } catch (const std::exception& e) {
      throw std::runtime_error("log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace wmsdn
