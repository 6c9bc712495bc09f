#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmsdn/metric_log.hpp"
#include "wmsdn/network.hpp"
#include "wmsdn/traffic_metrics.hpp"

namespace wmsdn {

// Which metrics a scenario reports and how they are anchored.
struct MeasureSpec {
  enum class Reference { Event, Connectivity };
  std::optional<SimTime> event_at;
  Reference reference = Reference::Event;
  std::vector<std::string> wmrs;
  std::optional<std::string> probe;
  std::optional<std::string> flow;
};

struct Scenario {
  std::string name;
  std::string source;  // file name used in diagnostics
  NetworkConfig network;
  SimTime duration{};
  std::vector<std::uint64_t> seeds;
  MeasureSpec measure;
};

// "dotted.key=value" applied to the parsed document before validation.
// Sequence elements are addressed by index, e.g. controllers.0.flush_on_connect.
struct Override {
  std::string key;
  std::string value;
};

Override parse_override(const std::string& text);

// Throws ConfigError carrying "source:line:column: field: message".
Scenario load_scenario(const std::filesystem::path& path, std::span<const Override> overrides = {});
Scenario parse_scenario(const std::string& text, const std::string& source, std::span<const Override> overrides = {});

// "7", "1..20" or "1,4,9".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct RunResult {
  std::uint64_t seed = 0;
  MetricLog log;
  Observations observations;
  SummaryRow summary;
  std::uint64_t single_master_violations = 0;
  std::uint64_t controller_messages = 0;
  std::uint64_t trace_digest = 0;
};

SummaryRow summarize(const Scenario& scenario, const Observations& obs, std::uint64_t seed);

// Deterministic: the same (scenario, seed) always yields the same result.
RunResult run(const Scenario& scenario, std::uint64_t seed);

// Runs every seed, using up to `jobs` threads; results are in seed order.
std::vector<RunResult> run_seeds(const Scenario& scenario, std::span<const std::uint64_t> seeds, unsigned jobs = 1);

std::string log_file_name(const std::string& scenario, std::uint64_t seed);
// Writes one NDJSON log per run plus results.csv.
void write_outputs(const std::filesystem::path& dir, const std::string& scenario,
                   std::span<const RunResult> results);
void write_results_csv(const std::filesystem::path& file, std::span<const SummaryRow> rows);

}  // namespace wmsdn
