#include "wmsdn/topology.hpp"

#include <deque>
#include <utility>

namespace wmsdn {

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Wmr: return "wmr";
    case NodeKind::Controller: return "controller";
    case NodeKind::Host: return "host";
  }
  return "?";
}

const char* to_string(LinkState s) { return s == LinkState::Up ? "up" : "down"; }

Address Node::main_address() const {
  for (const auto& iface : interfaces) {
    if (kind == NodeKind::Host || iface.role == InterfaceRole::Mesh) return iface.address;
  }
  return interfaces.empty() ? Address{} : interfaces.front().address;
}

std::vector<Prefix> Node::access_prefixes() const {
  std::vector<Prefix> out;
  for (const auto& iface : interfaces) {
    if (iface.role == InterfaceRole::Access) out.push_back(iface.prefix.canonical());
  }
  return out;
}

bool Node::owns(Address a) const {
  for (const auto& iface : interfaces) {
    if (iface.address == a) return true;
  }
  return false;
}

NodeId Topology::add_node(Node node) {
  if (node_names_.contains(node.name)) throw ConfigError("duplicate node '" + node.name + "'");
  const NodeId id{static_cast<std::uint32_t>(nodes_.size())};
  node.id = id;
  for (const auto& iface : node.interfaces) {
    if (!owners_.emplace(iface.address, id).second) {
      throw ConfigError("address " + iface.address.to_string() + " assigned twice (node '" + node.name + "')");
    }
  }
  node_names_.emplace(node.name, id);
  nodes_.push_back(std::move(node));
  incident_.emplace_back();
  return id;
}

LinkId Topology::add_link(Link link) {
  if (idx(link.a) >= nodes_.size() || idx(link.b) >= nodes_.size()) throw ConfigError("link endpoint does not exist");
  if (link.a == link.b) throw ConfigError("link '" + link.name + "' has identical endpoints");
  if (!(link.capacity_bps > 0)) throw ConfigError("link '" + link.name + "' capacity must be positive");
  if (link.delay < Duration::zero()) throw ConfigError("link '" + link.name + "' delay must be nonnegative");
  if (link_between(link.a, link.b)) throw ConfigError("duplicate link between endpoints of '" + link.name + "'");
  const LinkId id{static_cast<std::uint32_t>(links_.size())};
  link.id = id;
  if (link.name.empty()) link.name = nodes_[idx(link.a)].name + "-" + nodes_[idx(link.b)].name;
  if (!link_names_.emplace(link.name, id).second) throw ConfigError("duplicate link '" + link.name + "'");
  incident_[idx(link.a)].push_back(id);
  incident_[idx(link.b)].push_back(id);
  links_.push_back(std::move(link));
  return id;
}

const Link& Topology::link(LinkId id) const {
  if (idx(id) >= links_.size()) throw ConfigError("unknown link id " + std::to_string(idx(id)));
  return links_[idx(id)];
}

std::optional<NodeId> Topology::find_node(std::string_view name) const {
  auto it = node_names_.find(std::string(name));
  if (it == node_names_.end()) return std::nullopt;
  return it->second;
}

std::optional<LinkId> Topology::find_link(std::string_view name) const {
  auto it = link_names_.find(std::string(name));
  if (it == link_names_.end()) return std::nullopt;
  return it->second;
}

std::optional<LinkId> Topology::link_between(NodeId a, NodeId b) const {
  if (idx(a) >= incident_.size()) return std::nullopt;
  for (LinkId l : incident_[idx(a)]) {
    if (links_[idx(l)].other(a) == b) return l;
  }
  return std::nullopt;
}

std::optional<NodeId> Topology::owner_of(Address a) const {
  auto it = owners_.find(a);
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

LinkState Topology::set_link_state(LinkId id, LinkState state) {
  if (idx(id) >= links_.size()) throw ConfigError("unknown link id " + std::to_string(idx(id)));
  return std::exchange(links_[idx(id)].state, state);
}

bool Topology::reachable(NodeId src, NodeId dst) const {
  if (src == dst) return true;
  std::vector<bool> seen(nodes_.size(), false);
  std::deque<NodeId> frontier{src};
  seen[idx(src)] = true;
  while (!frontier.empty()) {
    const NodeId u = frontier.front();
    frontier.pop_front();
    for (LinkId l : incident_[idx(u)]) {
      const Link& link = links_[idx(l)];
      if (!link.up()) continue;
      const NodeId v = link.other(u);
      if (seen[idx(v)]) continue;
      if (v == dst) return true;
      seen[idx(v)] = true;
      frontier.push_back(v);
    }
  }
  return false;
}

std::vector<std::size_t> Topology::components() const {
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(nodes_.size(), kUnset);
  std::size_t next = 0;
  for (std::size_t s = 0; s < nodes_.size(); ++s) {
    if (label[s] != kUnset) continue;
    std::deque<std::size_t> frontier{s};
    label[s] = next;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop_front();
      for (LinkId l : incident_[u]) {
        const Link& link = links_[idx(l)];
        if (!link.up()) continue;
        const std::size_t v = idx(link.other(NodeId{static_cast<std::uint32_t>(u)}));
        if (label[v] != kUnset) continue;
        label[v] = next;
        frontier.push_back(v);
      }
    }
    ++next;
  }
  return label;
}

}  // namespace wmsdn
