#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wmsdn/network.hpp"
#include "wmsdn/scenario.hpp"

namespace testing {

using namespace wmsdn;

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(WMSDN_SCENARIO_DIR) / name;
}

inline Scenario canonical(const std::string& name) { return load_scenario(scenario_path(name + ".yaml")); }

// Independent reference reachability: plain BFS over an adjacency list
// built from Up links. Shares no code with Topology::reachable.
inline std::set<NodeId> bfs_oracle(const Topology& topo, NodeId src) {
  std::map<NodeId, std::vector<NodeId>> adj;
  for (const auto& l : topo.links()) {
    if (l.state != LinkState::Up) continue;
    adj[l.a].push_back(l.b);
    adj[l.b].push_back(l.a);
  }
  std::set<NodeId> seen{src};
  std::deque<NodeId> q{src};
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop_front();
    for (NodeId v : adj[u]) {
      if (seen.insert(v).second) q.push_back(v);
    }
  }
  return seen;
}

// Chain of WMRs w1..wn with mesh addresses 10.0.0.i, optional controllers
// attached to given WMRs. Jitter-free unless asked otherwise.
struct ChainOptions {
  int wmrs = 3;
  std::vector<std::pair<int, std::uint8_t>> controllers;  // (wmr index 1-based, last octet)
  bool randomize = false;
};

inline NetworkConfig chain(const ChainOptions& o) {
  NetworkConfig cfg;
  cfg.olsr.randomize_start = o.randomize;
  if (!o.randomize) cfg.olsr.hello_jitter = 0.0;
  cfg.eftm.randomize_poll_phase = o.randomize;
  auto& topo = cfg.topology;
  std::vector<NodeId> w;
  for (int i = 1; i <= o.wmrs; ++i) {
    Node n;
    n.name = "w" + std::to_string(i);
    n.kind = NodeKind::Wmr;
    n.interfaces.push_back(Interface{Address(10, 0, 0, static_cast<std::uint8_t>(i)), kDefaultControlSubnet,
                                     InterfaceRole::Mesh});
    w.push_back(topo.add_node(n));
  }
  for (int i = 1; i < o.wmrs; ++i) {
    topo.add_link(Link{{}, "l" + std::to_string(i) + std::to_string(i + 1), w[i - 1], w[i], 10e6,
                       std::chrono::microseconds(2000), LinkState::Up});
  }
  for (const auto& [at, octet] : o.controllers) {
    Node c;
    c.name = "c" + std::to_string(octet);
    c.kind = NodeKind::Controller;
    const Address a(10, 0, 255, octet);
    c.interfaces.push_back(Interface{a, Prefix::host(a), InterfaceRole::Mesh});
    const NodeId id = topo.add_node(c);
    topo.add_link(Link{{}, c.name + "-w" + std::to_string(at), id, w[at - 1], 100e6,
                       std::chrono::microseconds(500), LinkState::Up});
    ControllerConfig cc;
    cc.address = a;
    cc.attached_wmr = w[at - 1];
    cfg.controllers[id] = cc;
  }
  return cfg;
}

}  // namespace testing
