#include "wmsdn/olsr.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

#include "wmsdn/topology.hpp"

namespace wmsdn {

void OlsrConfig::validate() const {
  if (hello_interval <= Duration::zero()) throw ConfigError("olsr.hello_interval must be positive");
  if (tc_interval <= Duration::zero()) throw ConfigError("olsr.tc_interval must be positive");
  if (hellos_to_up < 1) throw ConfigError("olsr.hellos_to_up must be at least 1");
  if (hello_loss_intervals_to_down < 1) throw ConfigError("olsr.hello_loss_intervals_to_down must be at least 1");
  if (!(hello_jitter >= 0.0 && hello_jitter < 0.5)) throw ConfigError("olsr.hello_jitter must lie in [0, 0.5)");
}

std::optional<std::pair<Prefix, Route>> RoutingTable::lookup(Address dst) const {
  std::optional<std::pair<Prefix, Route>> best;
  for (const auto& [prefix, route] : entries_) {
    if (!prefix.contains(dst)) continue;
    if (!best || prefix.length() > best->first.length()) best = {prefix, route};
  }
  return best;
}

LinkGraph::LinkGraph(const LinkStateView& view) {
  addresses_[view.self] = view.self_address;
  adj_[view.self];
  std::map<NodeId, std::set<NodeId>> listed;
  for (const auto& lsa : view.lsas) {
    addresses_[lsa.origin] = lsa.origin_address;
    auto& set = listed[lsa.origin];
    for (const auto& [n, a] : lsa.sym_neighbors) {
      set.insert(n);
      addresses_.try_emplace(n, a);
    }
  }
  std::set<std::pair<NodeId, NodeId>> edges;
  auto add = [&](NodeId a, NodeId b) {
    if (a == b) return;
    edges.insert(std::minmax(a, b));
  };
  for (const auto& [n, a] : view.sym_neighbors) {
    addresses_[n] = a;
    add(view.self, n);
  }
  for (const auto& [u, neigh] : listed) {
    if (u == view.self) continue;
    for (NodeId v : neigh) {
      if (v == view.self) continue;
      auto it = listed.find(v);
      if (it != listed.end() && it->second.contains(u)) add(u, v);
    }
  }
  for (const auto& [a, b] : edges) {
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }
  for (auto& [n, list] : adj_) {
    std::sort(list.begin(), list.end(),
              [this](NodeId x, NodeId y) { return std::tuple(addresses_[x], x) < std::tuple(addresses_[y], y); });
  }
}

std::optional<Address> LinkGraph::address_of(NodeId n) const {
  auto it = addresses_.find(n);
  if (it == addresses_.end()) return std::nullopt;
  return it->second;
}

std::map<NodeId, int> LinkGraph::distances(NodeId src) const {
  std::map<NodeId, int> dist;
  if (!adj_.contains(src)) return dist;
  dist[src] = 0;
  std::deque<NodeId> frontier{src};
  while (!frontier.empty()) {
    const NodeId u = frontier.front();
    frontier.pop_front();
    for (NodeId v : adj_.at(u)) {
      if (dist.contains(v)) continue;
      dist[v] = dist[u] + 1;
      frontier.push_back(v);
    }
  }
  return dist;
}

std::map<NodeId, NodeId> LinkGraph::first_hops(NodeId src, const std::map<NodeId, int>& dist) const {
  std::vector<std::pair<int, NodeId>> order;
  for (const auto& [n, d] : dist) {
    if (n != src) order.emplace_back(d, n);
  }
  std::sort(order.begin(), order.end());
  std::map<NodeId, NodeId> hop;
  auto addr = [this](NodeId n) { return std::tuple(addresses_.at(n), n); };
  for (const auto& [d, v] : order) {
    if (d == 1) {
      hop[v] = v;
      continue;
    }
    std::optional<NodeId> best;
    for (NodeId u : adj_.at(v)) {
      auto it = dist.find(u);
      if (it == dist.end() || it->second != d - 1) continue;
      const NodeId candidate = hop.at(u);
      if (!best || addr(candidate) < addr(*best)) best = candidate;
    }
    hop[v] = *best;
  }
  return hop;
}

std::vector<NodeId> LinkGraph::path(NodeId src, NodeId dst) const {
  const auto to_dst = distances(dst);
  auto it = to_dst.find(src);
  if (it == to_dst.end()) return {};
  std::vector<NodeId> out{src};
  NodeId u = src;
  while (u != dst) {
    const int d = to_dst.at(u);
    // Neighbor lists are address-sorted, so the first closer one wins.
    for (NodeId v : adj_.at(u)) {
      auto dv = to_dst.find(v);
      if (dv != to_dst.end() && dv->second == d - 1) {
        u = v;
        break;
      }
    }
    out.push_back(u);
  }
  return out;
}

RoutingTable compute_routes(const LinkStateView& view) {
  RoutingTable table;
  const LinkGraph graph(view);
  const auto dist = graph.distances(view.self);
  const auto hops = graph.first_hops(view.self, dist);

  table.set(Prefix::host(view.self_address), Route{std::nullopt, 0, view.self});
  for (const auto& p : view.own_hna) table.set(p.canonical(), Route{std::nullopt, 0, view.self});

  for (const auto& [n, d] : dist) {
    if (n == view.self) continue;
    if (auto a = graph.address_of(n)) table.set(Prefix::host(*a), Route{hops.at(n), d, n});
  }

  // Nearest origin wins; then lowest next-hop address; then lowest origin address.
  using Rank = std::tuple<int, Address, Address>;
  std::map<Prefix, std::pair<Rank, Route>> best;
  for (const auto& lsa : view.lsas) {
    auto d = dist.find(lsa.origin);
    if (d == dist.end() || lsa.origin == view.self) continue;
    const NodeId hop = hops.at(lsa.origin);
    const Rank rank{d->second, *graph.address_of(hop), lsa.origin_address};
    for (const auto& raw : lsa.hna) {
      const Prefix p = raw.canonical();
      auto it = best.find(p);
      if (it == best.end() || rank < it->second.first) best[p] = {rank, Route{hop, d->second, lsa.origin}};
    }
  }
  for (const auto& [p, entry] : best) {
    if (auto existing = table.entries().find(p);
        existing != table.entries().end() && !existing->second.next_hop) {
      continue;  // locally attached
    }
    table.set(p, entry.second);
  }
  return table;
}

OlsrAgent::OlsrAgent(NodeId self, Address address, std::vector<Prefix> own_hna, OlsrConfig config, Simulator& sim,
                     Rng& rng, OlsrTransport& transport)
    : self_(self),
      address_(address),
      own_hna_(std::move(own_hna)),
      config_(config),
      sim_(sim),
      rng_(rng),
      transport_(transport) {
  routes_ = compute_routes(view());
}

void OlsrAgent::start(Duration phase) {
  sim_.schedule(phase, self_, EventKind::Timer, [this] { emit_hello(); });
  const Duration lsa_phase = config_.randomize_start ? seconds(rng_.uniform(0.0, to_seconds(config_.tc_interval)))
                                                     : phase;
  sim_.schedule(lsa_phase, self_, EventKind::Timer, [this] {
    flood_topology_and_hna();
    schedule_next_lsa();
  });
}

Duration OlsrAgent::jittered(Duration base) {
  if (config_.hello_jitter == 0.0) return base;
  const double factor = 1.0 + rng_.uniform(-config_.hello_jitter, config_.hello_jitter);
  return seconds(to_seconds(base) * factor);
}

void OlsrAgent::emit_hello() {
  transport_.broadcast_hello(self_, Hello{self_, address_});
  ++hellos_sent_;
  schedule_next_hello();
}

void OlsrAgent::schedule_next_hello() {
  sim_.schedule(jittered(config_.hello_interval), self_, EventKind::Timer, [this] { emit_hello(); });
}

void OlsrAgent::schedule_next_lsa() {
  sim_.schedule(jittered(config_.tc_interval), self_, EventKind::Timer, [this] {
    flood_topology_and_hna();
    schedule_next_lsa();
  });
}

bool OlsrAgent::is_sym(NodeId n) const {
  auto it = neighbors_.find(n);
  return it != neighbors_.end() && it->second.status == NeighborStatus::Sym;
}

Lsa OlsrAgent::originate() {
  Lsa lsa{self_, address_, ++seq_, {}, own_hna_};
  for (const auto& [n, rec] : neighbors_) {
    if (rec.status == NeighborStatus::Sym) lsa.sym_neighbors.emplace_back(n, rec.address);
  }
  return lsa;
}

void OlsrAgent::flood_topology_and_hna() {
  transport_.send_lsas(self_, std::nullopt, std::nullopt, {originate()}, false);
}

void OlsrAgent::process_hello(const Hello& hello) {
  const SimTime now = sim_.now();
  auto it = neighbors_.find(hello.origin);
  if (it != neighbors_.end() && now - it->second.last_hello_at > config_.neighbor_hold()) {
    neighbor_check(hello.origin);
    it = neighbors_.find(hello.origin);
  }
  if (it == neighbors_.end()) {
    it = neighbors_.emplace(hello.origin, NeighborRecord{hello.origin, hello.origin_address, 0, now,
                                                         NeighborStatus::Heard})
             .first;
  }
  NeighborRecord& rec = it->second;
  ++rec.consecutive_hellos;
  rec.last_hello_at = now;
  rec.address = hello.origin_address;

  auto& timer = neighbor_timers_[hello.origin];
  sim_.cancel(timer);
  const NodeId n = hello.origin;
  timer = sim_.schedule(config_.neighbor_hold() + Duration{1}, self_, EventKind::Timer, [this, n] {
    neighbor_timers_[n] = EventHandle{};
    neighbor_check(n);
  });

  if (rec.status == NeighborStatus::Heard && rec.consecutive_hellos >= config_.hellos_to_up) {
    rec.status = NeighborStatus::Sym;
    flood_topology_and_hna();
    // Database exchange with the new adjacency.
    std::vector<Lsa> db;
    for (const auto& [origin, stored] : lsdb_) {
      if (stored.expiry > now) db.push_back(stored.lsa);
    }
    db.push_back(originate());
    transport_.send_lsas(self_, n, std::nullopt, std::move(db), true);
    recompute();
  }
}

void OlsrAgent::neighbor_check(NodeId n) {
  auto it = neighbors_.find(n);
  if (it == neighbors_.end()) return;
  if (sim_.now() - it->second.last_hello_at <= config_.neighbor_hold()) return;
  const bool was_sym = it->second.status == NeighborStatus::Sym;
  neighbors_.erase(it);
  if (was_sym) {
    flood_topology_and_hna();
    recompute();
  }
}

void OlsrAgent::process_lsas(NodeId from, std::span<const Lsa> lsas, bool sync_request) {
  if (!is_sym(from)) return;
  const SimTime now = sim_.now();
  std::vector<Lsa> fresh;
  for (const auto& lsa : lsas) {
    if (lsa.origin == self_) continue;
    auto it = lsdb_.find(lsa.origin);
    if (it != lsdb_.end() && it->second.expiry > now && it->second.lsa.seq >= lsa.seq) continue;
    const SimTime expiry = now + config_.validity();
    lsdb_[lsa.origin] = StoredLsa{lsa, expiry};
    sim_.schedule_at(expiry, self_, EventKind::Timer, [this] { purge_expired(); });
    fresh.push_back(lsa);
  }
  if (!fresh.empty()) {
    transport_.send_lsas(self_, std::nullopt, from, fresh, false);
    recompute();
  }
  if (sync_request) {
    std::vector<Lsa> db;
    for (const auto& [origin, stored] : lsdb_) {
      if (stored.expiry > now) db.push_back(stored.lsa);
    }
    db.push_back(originate());
    transport_.send_lsas(self_, from, std::nullopt, std::move(db), false);
  }
}

void OlsrAgent::purge_expired() {
  const SimTime now = sim_.now();
  const auto removed = std::erase_if(lsdb_, [now](const auto& kv) { return kv.second.expiry <= now; });
  if (removed > 0) recompute();
}

void OlsrAgent::recompute() {
  RoutingTable next = compute_routes(view());
  if (next == routes_) return;
  RoutingTable before = std::exchange(routes_, std::move(next));
  transport_.routes_changed(self_, before, routes_);
}

std::vector<HnaEntry> OlsrAgent::hna_db() const {
  std::vector<HnaEntry> out;
  const SimTime now = sim_.now();
  for (const auto& [origin, stored] : lsdb_) {
    if (stored.expiry <= now) continue;
    for (const auto& p : stored.lsa.hna) out.push_back(HnaEntry{origin, p.canonical(), stored.expiry});
  }
  return out;
}

LinkStateView OlsrAgent::view() const {
  LinkStateView v{self_, address_, {}, own_hna_, {}};
  for (const auto& [n, rec] : neighbors_) {
    if (rec.status == NeighborStatus::Sym) v.sym_neighbors.emplace_back(n, rec.address);
  }
  const SimTime now = sim_.now();
  for (const auto& [origin, stored] : lsdb_) {
    if (stored.expiry > now) v.lsas.push_back(stored.lsa);
  }
  return v;
}

}  // namespace wmsdn
