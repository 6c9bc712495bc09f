// Acceptance study: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "wmsdn/network.hpp"
#include "wmsdn/scenario.hpp"

using namespace wmsdn;

namespace {

// Slack for the control-plane round trips of a connection setup.
constexpr double kSetupAllowance = 0.1;

struct Stats {
  double mean = 0, min = 0, max = 0;
  std::size_t n = 0, unresolved = 0;
};

Stats stats(const std::vector<std::optional<double>>& xs) {
  Stats s;
  std::vector<double> v;
  for (const auto& x : xs) {
    if (x) v.push_back(*x);
    else ++s.unresolved;
  }
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

int failures = 0;
std::map<int, std::string> lines;  // printed in criterion order at the end

void report(int id, bool ok, const std::string& title, const std::string& detail) {
  lines[id] = std::string(ok ? "[PASS]" : "[FAIL]") + " C" + std::to_string(id) + " " + title + ": " + detail;
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

Scenario scenario(const char* name) {
  return load_scenario(std::filesystem::path(WMSDN_SCENARIO_DIR) / (std::string(name) + ".yaml"));
}

// Walks the EFTM records of a log and returns the largest number of
// simultaneously established connections seen at any WMR.
int max_established(const MetricLog& log, std::uint64_t& violation_records) {
  std::map<std::string, int> open;
  int worst = 0;
  for (const auto& r : log.records()) {
    if (r.kind != RecordKind::EftmTransition) continue;
    const std::string event = r.payload.value("event", "");
    const std::string wmr = r.payload.value("wmr", "");
    if (event == "conn_open") ++open[wmr];
    else if (event == "conn_close") --open[wmr];
    else if (event == "single_master_violation") ++violation_records;
    worst = std::max({worst, open[wmr], r.payload.value("established", 0)});
  }
  return worst;
}

struct ScanTotals {
  std::uint64_t runs = 0, counted = 0, logged = 0;
  int worst = 0;
  void add(const RunResult& r) {
    ++runs;
    counted += r.single_master_violations;
    worst = std::max(worst, max_established(r.log, logged));
  }
  void add(const Network& net) {
    ++runs;
    counted += net.single_master_violations();
    worst = std::max(worst, max_established(net.log(), logged));
  }
};

// ---- random topology suite ----

struct GraphCase {
  NetworkConfig config;
  std::vector<NodeId> wmrs;
  std::vector<NodeId> controllers;
  std::vector<SimTime> checks;
};

GraphCase random_case(std::uint64_t index) {
  Rng rng(index, "acceptance-graph");
  GraphCase g;
  NetworkConfig& cfg = g.config;
  Topology& topo = cfg.topology;

  const int n = static_cast<int>(rng.uniform_int(4, 10));
  for (int i = 0; i < n; ++i) {
    Node node;
    node.name = "w" + std::to_string(i + 1);
    node.interfaces.push_back(
        Interface{Address(10, 0, 0, static_cast<std::uint8_t>(i + 1)), cfg.control_subnet, InterfaceRole::Mesh});
    g.wmrs.push_back(topo.add_node(node));
  }
  std::vector<std::string> links;
  auto link = [&](NodeId a, NodeId b, double capacity) {
    const std::string name = "e" + std::to_string(links.size());
    topo.add_link(Link{{}, name, a, b, capacity, std::chrono::microseconds(2000), LinkState::Up});
    links.push_back(name);
  };
  for (int i = 1; i < n; ++i) link(g.wmrs[rng.uniform_int(0, i - 1)], g.wmrs[i], 10e6);
  const int extra = static_cast<int>(rng.uniform_int(0, n / 2));
  for (int k = 0; k < extra; ++k) {
    const NodeId a = g.wmrs[rng.uniform_int(0, n - 1)], b = g.wmrs[rng.uniform_int(0, n - 1)];
    if (a != b && !topo.link_between(a, b)) link(a, b, 10e6);
  }

  const int controllers = static_cast<int>(rng.uniform_int(1, 3));
  std::set<int> octets;
  while (static_cast<int>(octets.size()) < controllers) octets.insert(static_cast<int>(rng.uniform_int(1, 254)));
  for (int octet : octets) {
    Node c;
    c.name = "c" + std::to_string(octet);
    c.kind = NodeKind::Controller;
    const Address a(10, 0, 255, static_cast<std::uint8_t>(octet));
    c.interfaces.push_back(Interface{a, Prefix::host(a), InterfaceRole::Mesh});
    const NodeId id = topo.add_node(c);
    const NodeId at = g.wmrs[rng.uniform_int(0, n - 1)];
    link(id, at, 100e6);
    ControllerConfig cc;
    cc.address = a;
    cc.attached_wmr = at;
    cfg.controllers[id] = cc;
    g.controllers.push_back(id);
  }

  // Initial convergence, then phases of 1-3 toggles each followed by a
  // quiescent tail of 60 s.
  std::map<std::string, bool> up;
  for (const auto& l : links) up[l] = true;
  double t = 60;
  g.checks.push_back(at_seconds(t));
  for (int phase = 0; phase < 3; ++phase) {
    const int toggles = static_cast<int>(rng.uniform_int(1, 3));
    double at = t;
    for (int k = 0; k < toggles; ++k) {
      at += rng.uniform(0.0, 2.0);
      const std::string& l = links[rng.uniform_int(0, static_cast<std::int64_t>(links.size()) - 1)];
      up[l] = !up[l];
      cfg.events.push_back({at_seconds(at), up[l] ? ActionKind::LinkUp : ActionKind::LinkDown, l});
    }
    t = at + 60;
    g.checks.push_back(at_seconds(t));
  }
  return g;
}

struct GraphOutcome {
  int checks = 0;
  int priority_failures = 0;
  int routing_failures = 0;
  int loop_failures = 0;
  std::string first_problem;
  std::uint64_t violations = 0, violation_records = 0;
  int worst = 0;
};

void note(GraphOutcome& o, const std::string& what) {
  if (o.first_problem.empty()) o.first_problem = what;
}

GraphOutcome run_case(std::uint64_t index) {
  GraphCase g = random_case(index);
  Network net(g.config, index);
  net.start();
  GraphOutcome out;
  const Topology& topo = net.topology();
  const EftmConfig& ecfg = g.config.eftm;

  std::vector<NodeId> olsr_nodes = g.wmrs;
  olsr_nodes.insert(olsr_nodes.end(), g.controllers.begin(), g.controllers.end());

  for (SimTime check : g.checks) {
    net.run_until(check);
    ++out.checks;
    const std::string where = fmt("graph %llu t=%.0f", static_cast<unsigned long long>(index), to_seconds(check));

    // Independent oracle: flood fill over Up links from every node.
    std::map<NodeId, std::set<NodeId>> reach;
    for (NodeId s : olsr_nodes) {
      std::set<NodeId> seen{s};
      std::deque<NodeId> q{s};
      while (!q.empty()) {
        const NodeId u = q.front();
        q.pop_front();
        for (const auto& l : topo.links()) {
          if (l.state != LinkState::Up || (l.a != u && l.b != u)) continue;
          if (seen.insert(l.other(u)).second) q.push_back(l.other(u));
        }
      }
      reach[s] = std::move(seen);
    }

    for (NodeId w : g.wmrs) {
      std::optional<Address> best;
      for (NodeId c : g.controllers) {
        if (!reach[w].contains(c)) continue;
        const Address a = topo.node(c).main_address();
        if (!best || higher_priority(a, *best, ecfg)) best = a;
      }
      const EftmMode& mode = net.eftm(w)->mode();
      const bool ok = best ? mode == EftmMode{Connected{*best}} && net.eftm(w)->master() == best
                           : std::holds_alternative<Emergency>(mode);
      if (!ok) {
        ++out.priority_failures;
        note(out, where + ": " + topo.node(w).name + " is " + describe(mode) + ", expected " +
                      (best ? "Connected(" + best->to_string() + ")" : std::string("Emergency")));
      }
    }

    for (NodeId s : olsr_nodes) {
      const RoutingTable& routes = net.olsr(s)->routes();
      for (NodeId d : olsr_nodes) {
        if (d == s) continue;
        const Address da = topo.node(d).main_address();
        const auto r = routes.lookup(da);
        const bool expected = reach[s].contains(d);
        if (r.has_value() != expected) {
          ++out.routing_failures;
          note(out, where + ": route " + topo.node(s).name + "->" + topo.node(d).name + (r ? " present" : " missing"));
          continue;
        }
        if (!r) continue;
        // Follow next hops over Up links; must reach d without revisiting.
        std::set<NodeId> visited{s};
        NodeId at = s;
        bool arrived = false;
        for (std::size_t step = 0; step <= olsr_nodes.size(); ++step) {
          const auto hop = net.olsr(at)->routes().lookup(da);
          if (!hop || !hop->second.next_hop) break;
          const NodeId next = *hop->second.next_hop;
          const auto l = topo.link_between(at, next);
          if (!l || !topo.link(*l).up()) break;
          if (next == d) {
            arrived = true;
            break;
          }
          if (!visited.insert(next).second) break;
          at = next;
        }
        if (!arrived) {
          ++out.loop_failures;
          note(out, where + ": next-hop chain " + topo.node(s).name + "->" + topo.node(d).name + " broken");
        }
      }
    }
  }
  out.violations = net.single_master_violations();
  out.worst = max_established(net.log(), out.violation_records);
  return out;
}

std::vector<GraphOutcome> run_suite(std::uint64_t count) {
  std::vector<GraphOutcome> outcomes(count);
  std::atomic<std::uint64_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs(); ++j) {
    pool.emplace_back([&] {
      for (std::uint64_t i = next++; i < count; i = next++) outcomes[i] = run_case(i + 1);
    });
  }
  for (auto& t : pool) t.join();
  return outcomes;
}

}  // namespace

int main() {
  ScanTotals scan;

  const Scenario merge = scenario("merge");
  const Scenario partition = scenario("partition");
  const auto merge_runs = run_seeds(merge, merge.seeds, jobs());
  const auto partition_runs = run_seeds(partition, partition.seeds, jobs());
  for (const auto& r : merge_runs) scan.add(r);
  for (const auto& r : partition_runs) scan.add(r);

  // C1
  {
    const OlsrConfig& o = merge.network.olsr;
    const double hello = to_seconds(o.hello_interval);
    const double lo = (o.hellos_to_up - 1) * hello * (1 - o.hello_jitter);
    const double hi = o.hellos_to_up * hello * (1 + o.hello_jitter) + 2.0 + to_seconds(merge.network.probes[0].interval);
    std::vector<std::optional<double>> xs;
    for (const auto& r : merge_runs) xs.push_back(r.summary.connectivity_time_s);
    const Stats s = stats(xs);
    const bool ok = s.unresolved == 0 && s.n >= 20 && s.mean >= 10 && s.mean <= 17 && s.min >= lo && s.max <= hi;
    report(1, ok, "merge connectivity time",
           fmt("n=%zu unresolved=%zu mean=%.3f s (want [10,17]); runs %.3f..%.3f (want [%.2f,%.2f])", s.n,
               s.unresolved, s.mean, s.min, s.max, lo, hi));
  }

  // C2
  {
    const double bound = to_seconds(merge.network.eftm.poll_period) + kSetupAllowance;
    std::vector<std::optional<double>> xs;
    for (const auto& r : merge_runs) xs.push_back(r.summary.selection_delay_s);
    const Stats s = stats(xs);
    const bool ok = s.unresolved == 0 && s.n >= 20 && s.mean >= 1.4 && s.mean <= 2.6 && s.max <= bound;
    report(2, ok, "merge master selection delay",
           fmt("n=%zu unresolved=%zu mean=%.3f s (want [1.4,2.6]); runs %.3f..%.3f (want <= %.2f)", s.n, s.unresolved,
               s.mean, s.min, s.max, bound));
  }

  // C3
  {
    const EftmConfig& e = partition.network.eftm;
    const double detection = to_seconds(e.keepalive_interval) + to_seconds(e.connect_timeout);
    const double bound = detection + to_seconds(e.poll_period) + to_seconds(e.connect_timeout) + kSetupAllowance;
    std::vector<std::optional<double>> xs;
    for (const auto& r : partition_runs) xs.push_back(r.summary.selection_delay_s);
    const Stats s = stats(xs);
    const bool ok = s.unresolved == 0 && s.n >= 20 && s.mean >= 4.0 && s.mean <= 7.0 && s.max <= bound;
    report(3, ok, "partition master selection delay",
           fmt("n=%zu unresolved=%zu mean=%.3f s (want [4,7]); runs %.3f..%.3f (want <= %.2f)", s.n, s.unresolved,
               s.mean, s.min, s.max, bound));
  }

  // C4
  {
    const SimTime event = *partition.measure.event_at;
    const double recovery_delay = to_seconds(partition.network.flows[0].loss_recovery_delay);
    int bad = 0;
    double worst_margin = -1e9;
    std::string first;
    for (const auto& r : partition_runs) {
      const auto a = analyze_throughput(throughput_series(r.observations, *partition.measure.flow), event);
      const auto sel = r.summary.selection_delay_s;
      const auto rec = a.recovery_after(event);
      bool ok = a.steady_bps > 0 && a.reached_zero && sel && rec;
      if (ok) {
        const double allowed = *sel + recovery_delay + 1.0;
        worst_margin = std::max(worst_margin, *rec - allowed);
        ok = *rec <= allowed;
      }
      if (!ok && first.empty()) {
        first = fmt(" (seed %llu: zero=%d recovery=%s)", static_cast<unsigned long long>(r.seed), a.reached_zero,
                    rec ? fmt("%.3f", *rec).c_str() : "none");
      }
      bad += !ok;
    }
    report(4, bad == 0, "partition throughput dip and recovery",
           fmt("%zu seeds, %d failing; worst recovery minus allowance %.3f s%s", partition_runs.size(), bad,
               worst_margin, first.c_str()));
  }

  // C8 runs before C5 so its log joins the exhaustive scan.
  {
    const std::uint64_t seed = merge.seeds.front();
    Network net(merge.network, seed);
    const NodeId wmr1 = net.node_id("wmr1");
    const Address ctrl2 = Address::parse("10.0.255.2");
    std::vector<std::string> before, after;
    std::optional<SimTime> established_at;
    net.on_handover([&](NodeId wmr, HandoverPhase phase, Address, Address) {
      if (wmr != wmr1 || established_at) return;
      if (phase == HandoverPhase::BeforeClose) {
        before = net.flow_switch(wmr1)->table().dump();
      } else {
        after = net.flow_switch(wmr1)->table().dump();
        established_at = net.simulator().now();
      }
    });
    net.start();
    net.run_until(at_seconds(70));
    const bool on_ctrl2 = net.eftm(wmr1)->master() == ctrl2;
    for (int i = 0; i < 5; ++i) {
      FlowRule r;
      r.priority = 100;
      r.match.dst = Prefix(Address(172, 16, static_cast<std::uint8_t>(i), 0), 24);
      r.action = ForwardTo{net.node_id("wmr2")};
      r.origin = ControllerOrigin{ctrl2};
      r.tag = "tagged-" + std::to_string(i);
      net.flow_switch(wmr1)->table().install(r, net.simulator().now());
    }
    net.run_until(merge.duration);
    scan.add(net);

    auto tagged = [](const std::vector<std::string>& dump) {
      return std::count_if(dump.begin(), dump.end(),
                           [](const std::string& s) { return s.find("tagged-") != std::string::npos; });
    };
    // The new controller's flush must come after the comparison point.
    std::optional<SimTime> flushed_at;
    for (const auto& r : net.log().records()) {
      if (r.kind == RecordKind::RuleEvent && r.payload.value("wmr", "") == "wmr1" &&
          r.payload.value("event", "") == "flush" && established_at && r.time >= *established_at) {
        flushed_at = r.time;
        break;
      }
    }
    const bool ok = on_ctrl2 && established_at && before == after && tagged(before) == 5 && flushed_at &&
                    tagged(net.flow_switch(wmr1)->table().dump()) == 0;
    report(8, ok, "handover rule preservation",
           fmt("wmr1 on ctrl2 at t=70: %s; tagged rules before/after handover %ld/%ld, tables %s; new master flushed "
               "at %s",
               on_ctrl2 ? "yes" : "no", tagged(before), tagged(after), before == after ? "identical" : "DIFFER",
               flushed_at ? fmt("t=%.6f (handover t=%.6f)", to_seconds(*flushed_at), to_seconds(*established_at)).c_str()
                          : "never"));
  }

  // C6 / C7
  const std::uint64_t graphs = 200;
  const auto outcomes = run_suite(graphs);
  {
    int checks = 0, bad = 0;
    std::string first;
    for (const auto& o : outcomes) {
      checks += o.checks;
      bad += o.priority_failures;
      if (o.priority_failures && first.empty()) first = " first: " + o.first_problem;
      scan.runs += 1;
      scan.counted += o.violations;
      scan.logged += o.violation_records;
      scan.worst = std::max(scan.worst, o.worst);
    }
    report(6, bad == 0, "priority optimality at quiescence",
           fmt("%llu random graphs, %d quiescent checks, %d WMR mismatches%s", static_cast<unsigned long long>(graphs),
               checks, bad, first.c_str()));
  }
  {
    int reach = 0, loops = 0;
    std::string first;
    for (const auto& o : outcomes) {
      reach += o.routing_failures;
      loops += o.loop_failures;
      if ((o.routing_failures || o.loop_failures) && first.empty()) first = " first: " + o.first_problem;
    }
    report(7, reach == 0 && loops == 0, "routing oracle equivalence",
           fmt("%llu random graphs; reachability mismatches %d, broken or looping next-hop chains %d%s",
               static_cast<unsigned long long>(graphs), reach, loops, first.c_str()));
  }

  // C5
  report(5, scan.counted == 0 && scan.logged == 0 && scan.worst <= 1, "single-master invariant",
         fmt("%llu runs scanned; violations counted %llu, logged %llu; max simultaneous connections per WMR %d",
             static_cast<unsigned long long>(scan.runs), static_cast<unsigned long long>(scan.counted),
             static_cast<unsigned long long>(scan.logged), scan.worst));

  // C9
  {
    int differing = 0;
    std::size_t compared = 0;
    for (const Scenario* sc : {&merge, &partition}) {
      const auto& first = sc == &merge ? merge_runs : partition_runs;
      const auto again = run_seeds(*sc, sc->seeds, jobs());
      for (std::size_t i = 0; i < first.size(); ++i) {
        ++compared;
        if (first[i].log.to_ndjson() != again[i].log.to_ndjson() || to_csv(first[i].summary) != to_csv(again[i].summary) ||
            first[i].trace_digest != again[i].trace_digest) {
          ++differing;
        }
      }
    }
    report(9, differing == 0, "determinism",
           fmt("%zu (scenario, seed) pairs rerun; %d differ in log, summary or event trace", compared, differing));
  }

  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
