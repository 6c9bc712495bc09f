#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "wmsdn/address.hpp"
#include "wmsdn/ids.hpp"
#include "wmsdn/sim_time.hpp"

namespace wmsdn {

// Invalid topology or scenario configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind { Wmr, Controller, Host };
enum class InterfaceRole { Mesh, Access, Internet };
enum class LinkState { Up, Down };

const char* to_string(NodeKind k);
const char* to_string(LinkState s);

struct Interface {
  Address address;
  Prefix prefix;
  InterfaceRole role = InterfaceRole::Mesh;
};

struct Node {
  NodeId id{};
  std::string name;
  NodeKind kind = NodeKind::Wmr;
  bool gateway = false;
  std::vector<Interface> interfaces;

  // Mesh address for WMRs and controllers, the single address for hosts.
  Address main_address() const;
  std::vector<Prefix> access_prefixes() const;
  bool owns(Address a) const;
  bool runs_olsr() const { return kind != NodeKind::Host; }
};

struct Link {
  LinkId id{};
  std::string name;
  NodeId a{}, b{};
  double capacity_bps = 10e6;
  Duration delay{2000};
  LinkState state = LinkState::Up;

  NodeId other(NodeId n) const { return n == a ? b : a; }
  bool up() const { return state == LinkState::Up; }
};

// The ground-truth physical graph.
class Topology {
 public:
  NodeId add_node(Node node);
  LinkId add_link(Link link);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(idx(id)); }
  const Link& link(LinkId id) const;
  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Link> links() const { return links_; }
  std::span<const LinkId> incident(NodeId id) const { return incident_.at(idx(id)); }

  std::optional<NodeId> find_node(std::string_view name) const;
  std::optional<LinkId> find_link(std::string_view name) const;
  std::optional<LinkId> link_between(NodeId a, NodeId b) const;
  // Node whose interface carries exactly this address.
  std::optional<NodeId> owner_of(Address a) const;

  // Throws ConfigError for an unknown link. Returns the previous state.
  LinkState set_link_state(LinkId id, LinkState state);

  // True iff a path of Up links joins src and dst. Breadth-first search on
  // the physical graph only; never consults protocol state.
  bool reachable(NodeId src, NodeId dst) const;
  // Component label per node, considering Up links only.
  std::vector<std::size_t> components() const;

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<LinkId>> incident_;
  std::unordered_map<std::string, NodeId> node_names_;
  std::unordered_map<std::string, LinkId> link_names_;
  std::unordered_map<Address, NodeId> owners_;
};

}  // namespace wmsdn
