#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "wmsdn/address.hpp"
#include "wmsdn/ids.hpp"
#include "wmsdn/rng.hpp"
#include "wmsdn/simulator.hpp"

namespace wmsdn {

struct OlsrConfig {
  Duration hello_interval = std::chrono::seconds(5);
  int hellos_to_up = 3;
  int hello_loss_intervals_to_down = 3;
  Duration tc_interval = std::chrono::seconds(5);
  double hello_jitter = 0.1;  // fraction of the interval, applied +/-
  bool randomize_start = true;

  // Throws ConfigError when a field is out of range.
  void validate() const;
  // Validity of flooded topology/HNA information.
  Duration validity() const { return 3 * tc_interval; }
  Duration neighbor_hold() const { return hello_loss_intervals_to_down * hello_interval; }
};

enum class NeighborStatus { Heard, Sym };

struct NeighborRecord {
  NodeId neighbor{};
  Address address;
  int consecutive_hellos = 0;
  SimTime last_hello_at{};
  NeighborStatus status = NeighborStatus::Heard;
};

struct Hello {
  NodeId origin{};
  Address origin_address;
};

// Combined topology-control and HNA advertisement of one origin.
struct Lsa {
  NodeId origin{};
  Address origin_address;
  std::uint32_t seq = 0;
  std::vector<std::pair<NodeId, Address>> sym_neighbors;
  std::vector<Prefix> hna;
};

struct HnaEntry {
  NodeId origin{};
  Prefix prefix;
  SimTime expiry{};
};

struct Route {
  std::optional<NodeId> next_hop;  // empty when delivered locally
  int hop_count = 0;
  NodeId origin{};
  bool operator==(const Route&) const = default;
};

class RoutingTable {
 public:
  void set(const Prefix& p, Route r) { entries_[p] = r; }
  const std::map<Prefix, Route>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Longest-prefix match.
  std::optional<std::pair<Prefix, Route>> lookup(Address dst) const;
  bool operator==(const RoutingTable&) const = default;

 private:
  std::map<Prefix, Route> entries_;
};

// One node's link-state view: its own symmetric neighbors, its own HNA and
// the live advertisements it holds from other origins.
struct LinkStateView {
  NodeId self{};
  Address self_address;
  std::vector<std::pair<NodeId, Address>> sym_neighbors;
  std::vector<Prefix> own_hna;
  std::vector<Lsa> lsas;
};

// Undirected graph over which shortest paths are computed. An edge between
// two remote origins requires both advertisements to list each other; edges
// of the view owner come from its own symmetric neighbor set.
class LinkGraph {
 public:
  explicit LinkGraph(const LinkStateView& view);

  bool contains(NodeId n) const { return adj_.contains(n); }
  std::optional<Address> address_of(NodeId n) const;
  const std::map<NodeId, std::vector<NodeId>>& adjacency() const { return adj_; }

  // Hop distances from `src` (absent = unreachable).
  std::map<NodeId, int> distances(NodeId src) const;
  // For every node reachable from `src`, the lowest-address first hop among
  // all shortest paths.
  std::map<NodeId, NodeId> first_hops(NodeId src, const std::map<NodeId, int>& dist) const;
  // Hop-by-hop path from src to dst, each hop choosing the lowest-address
  // neighbor that is one step closer. Empty when unreachable.
  std::vector<NodeId> path(NodeId src, NodeId dst) const;

 private:
  std::map<NodeId, std::vector<NodeId>> adj_;
  std::map<NodeId, Address> addresses_;
};

// Shortest-path routes by hop count for the view owner. HNA prefixes route
// toward their (nearest) origin; ties break on lowest next-hop address.
RoutingTable compute_routes(const LinkStateView& view);

class OlsrTransport {
 public:
  virtual ~OlsrTransport() = default;
  // One-hop broadcast on every Up mesh link of `from`.
  virtual void broadcast_hello(NodeId from, const Hello& hello) = 0;
  // One-hop send of advertisements; `to` empty = every Up mesh link except `except`.
  virtual void send_lsas(NodeId from, std::optional<NodeId> to, std::optional<NodeId> except, std::vector<Lsa> lsas,
                         bool sync_request) = 0;
  virtual void routes_changed(NodeId node, const RoutingTable& before, const RoutingTable& after) = 0;
};

// Per-node OLSR-lite daemon: 3-Hello neighbor sensing, full flooding with
// duplicate suppression, database exchange on new adjacencies, HNA.
class OlsrAgent {
 public:
  OlsrAgent(NodeId self, Address address, std::vector<Prefix> own_hna, OlsrConfig config, Simulator& sim,
            Rng& rng, OlsrTransport& transport);

  OlsrAgent(const OlsrAgent&) = delete;
  OlsrAgent& operator=(const OlsrAgent&) = delete;

  // Starts Hello and advertisement timers; the first Hello goes out after `phase`.
  void start(Duration phase);

  void process_hello(const Hello& hello);
  void process_lsas(NodeId from, std::span<const Lsa> lsas, bool sync_request);

  // Immediate origination of a fresh advertisement, flooded to all neighbors.
  void flood_topology_and_hna();

  NodeId self() const { return self_; }
  Address address() const { return address_; }
  const OlsrConfig& config() const { return config_; }
  const RoutingTable& routes() const { return routes_; }
  const std::map<NodeId, NeighborRecord>& neighbors() const { return neighbors_; }
  bool is_sym(NodeId n) const;
  std::vector<HnaEntry> hna_db() const;
  LinkStateView view() const;
  std::size_t lsdb_size() const { return lsdb_.size(); }
  std::uint32_t hellos_sent() const { return hellos_sent_; }

 private:
  struct StoredLsa {
    Lsa lsa;
    SimTime expiry{};
  };

  void emit_hello();
  void schedule_next_hello();
  void schedule_next_lsa();
  Lsa originate();
  void neighbor_check(NodeId n);
  void purge_expired();
  void recompute();
  Duration jittered(Duration base);

  NodeId self_;
  Address address_;
  std::vector<Prefix> own_hna_;
  OlsrConfig config_;
  Simulator& sim_;
  Rng& rng_;
  OlsrTransport& transport_;

  std::uint32_t seq_ = 0;
  std::uint32_t hellos_sent_ = 0;
  std::map<NodeId, NeighborRecord> neighbors_;
  std::map<NodeId, EventHandle> neighbor_timers_;
  std::map<NodeId, StoredLsa> lsdb_;
  EventHandle purge_timer_;
  RoutingTable routes_;
};

}  // namespace wmsdn
