// wmsdn: run, validate, sweep and summarize wireless-mesh SDN scenarios.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "wmsdn/scenario.hpp"

namespace fs = std::filesystem;
using namespace wmsdn;

namespace {

struct RunOptions {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string out = "out";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
};

std::vector<std::uint64_t> pick_seeds(const RunOptions& o, const Scenario& sc) {
  if (o.seed) return {*o.seed};
  if (!o.seeds.empty()) return parse_seed_list(o.seeds);
  return sc.seeds;
}

void print_rows(std::span<const RunResult> results) {
  std::cout << kResultsHeader << '\n';
  for (const auto& r : results) std::cout << to_csv(r.summary) << '\n';
}

int check_invariants(std::span<const RunResult> results) {
  int bad = 0;
  for (const auto& r : results) {
    if (r.single_master_violations != 0) {
      std::cerr << "seed " << r.seed << ": " << r.single_master_violations << " single-master violations\n";
      ++bad;
    }
    if (r.controller_messages != 0) {
      std::cerr << "seed " << r.seed << ": " << r.controller_messages << " controller-to-controller messages\n";
      ++bad;
    }
  }
  return bad == 0 ? 0 : 3;
}

int cmd_run(const RunOptions& o) {
  const Scenario sc = load_scenario(o.scenario);
  const auto seeds = pick_seeds(o, sc);
  const auto results = run_seeds(sc, seeds, o.jobs);
  write_outputs(o.out, sc.name, results);
  print_rows(results);
  std::cerr << "wrote " << results.size() << " run(s) to " << o.out << '\n';
  return check_invariants(results);
}

int cmd_validate(const std::string& path) {
  const Scenario sc = load_scenario(path);
  std::size_t wmrs = 0, controllers = 0, hosts = 0;
  for (const auto& n : sc.network.topology.nodes()) {
    if (n.kind == NodeKind::Wmr) ++wmrs;
    else if (n.kind == NodeKind::Controller) ++controllers;
    else ++hosts;
  }
  std::cout << sc.name << ": ok (" << wmrs << " WMRs, " << controllers << " controllers, " << hosts << " hosts, "
            << sc.network.topology.link_count() << " links, " << sc.network.events.size() << " events, duration "
            << to_seconds(sc.duration) << " s)\n";
  return 0;
}

int cmd_sweep(const RunOptions& o, const std::string& param) {
  const auto eq = param.find('=');
  if (eq == std::string::npos) throw ConfigError("--param expects key=v1,v2,...");
  const std::string key = param.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream ss(param.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) values.push_back(v);
  if (values.empty()) throw ConfigError("--param has no values");

  std::vector<SummaryRow> rows;
  int status = 0;
  for (const auto& value : values) {
    const Override ov{key, value};
    Scenario sc = load_scenario(o.scenario, std::span(&ov, 1));
    sc.name += "[" + key + "=" + value + "]";
    const auto seeds = pick_seeds(o, sc);
    const auto results = run_seeds(sc, seeds, o.jobs);
    write_outputs(fs::path(o.out) / (key + "=" + value), sc.name, results);
    for (const auto& r : results) rows.push_back(r.summary);
    status = std::max(status, check_invariants(results));
  }
  fs::create_directories(o.out);
  write_results_csv(fs::path(o.out) / "results.csv", rows);
  std::cout << kResultsHeader << '\n';
  for (const auto& r : rows) std::cout << to_csv(r) << '\n';
  return status;
}

struct Column {
  std::vector<double> values;
  std::size_t unresolved = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_report(const std::string& dir) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(fs::path(dir) / "results.csv")) files.push_back(fs::path(dir) / "results.csv");
  if (files.empty()) throw std::runtime_error(dir + ": no results.csv found");

  static const char* metrics[] = {"connectivity_time_s", "selection_delay_s", "throughput_gap_s"};
  std::map<std::string, std::map<std::string, Column>> table;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    if (line != kResultsHeader) throw std::runtime_error(f.string() + ": unexpected header");
    for (int lineno = 2; std::getline(in, line); ++lineno) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 5) throw std::runtime_error(f.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
      for (int m = 0; m < 3; ++m) {
        const auto& cell = cells[2 + m];
        if (cell.empty()) continue;
        auto& col = table[cells[1]][metrics[m]];
        if (cell == "unresolved") ++col.unresolved;
        else col.values.push_back(std::stod(cell));
      }
    }
  }
  std::cout << "scenario,metric,n,unresolved,mean,sd,min,p50,p90,max\n";
  for (const auto& [scenario, cols] : table) {
    for (const auto* m : metrics) {
      auto it = cols.find(m);
      if (it == cols.end()) continue;
      const auto& v = it->second.values;
      std::cout << scenario << ',' << m << ',' << v.size() << ',' << it->second.unresolved;
      if (v.empty()) {
        std::cout << ",,,,,,\n";
        continue;
      }
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      std::cout << ',' << mean << ',' << sd << ',' << *std::min_element(v.begin(), v.end()) << ','
                << percentile(v, 0.5) << ',' << percentile(v, 0.9) << ',' << *std::max_element(v.begin(), v.end())
                << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic wireless-mesh SDN simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run a scenario for one or more seeds");
  run->add_option("scenario", run_opts.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", run_opts.seed, "Single seed");
  run->add_option("--seeds", run_opts.seeds, "Seed range N..M or list a,b,c")->excludes(seed_opt);
  run->add_option("--out", run_opts.out, "Output directory")->capture_default_str();
  run->add_option("--jobs,-j", run_opts.jobs, "Parallel runs")->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("scenario", validate_path, "Scenario file")->required()->check(CLI::ExistingFile);

  RunOptions sweep_opts;
  std::string param;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario for each value of one parameter");
  sweep->add_option("scenario", sweep_opts.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", param, "key=v1,v2,... e.g. eftm.poll_period=1,3,5")->required();
  sweep->add_option("--seeds", sweep_opts.seeds, "Seed range N..M or list a,b,c");
  sweep->add_option("--out", sweep_opts.out, "Output directory")->capture_default_str();
  sweep->add_option("--jobs,-j", sweep_opts.jobs, "Parallel runs")->check(CLI::PositiveNumber);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate results.csv of an output directory");
  report->add_option("out_dir", report_dir, "Output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*validate) return cmd_validate(validate_path);
    if (*sweep) return cmd_sweep(sweep_opts, param);
    if (*report) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
