#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wmsdn/address.hpp"
#include "wmsdn/ids.hpp"
#include "wmsdn/olsr.hpp"
#include "wmsdn/packet.hpp"
#include "wmsdn/sim_time.hpp"

namespace wmsdn {

enum class TrafficClass { Basic, Sdn };

const char* to_string(TrafficClass c);

// Basic iff the destination lies in the control subnet.
TrafficClass classify(const Packet& p, const Prefix& control_subnet = kDefaultControlSubnet);

struct RuleMatch {
  Prefix dst;
  std::optional<Prefix> src;

  bool matches(const Packet& p) const { return dst.contains(p.dst) && (!src || src->contains(p.src)); }
  auto operator<=>(const RuleMatch&) const = default;
};

struct ForwardTo {
  NodeId next_hop{};
  bool operator==(const ForwardTo&) const = default;
};
struct DeliverLocal {
  bool operator==(const DeliverLocal&) const = default;
};
struct DropAction {
  bool operator==(const DropAction&) const = default;
};
using RuleAction = std::variant<ForwardTo, DeliverLocal, DropAction>;

struct ControllerOrigin {
  Address controller;
  bool operator==(const ControllerOrigin&) const = default;
};
struct EftmOrigin {
  bool operator==(const EftmOrigin&) const = default;
};
using RuleOrigin = std::variant<ControllerOrigin, EftmOrigin>;

struct FlowRule {
  int priority = 0;
  RuleMatch match;
  RuleAction action = DropAction{};
  RuleOrigin origin = EftmOrigin{};
  Duration idle_timeout{0};  // zero = none
  Duration hard_timeout{0};  // zero = none
  SimTime installed_at{};
  SimTime last_hit{};
  std::string tag;  // free-form label carried into table dumps

  bool expired(SimTime now) const;
  bool operator==(const FlowRule&) const = default;
};

std::string describe(const FlowRule& r);

// Which rules a flush removes.
struct OriginFilter {
  enum class Kind { AnyController, Controller, Eftm, All };
  Kind kind = Kind::AnyController;
  Address controller;

  static OriginFilter any_controller() { return {Kind::AnyController, {}}; }
  static OriginFilter controller_only(Address a) { return {Kind::Controller, a}; }
  static OriginFilter eftm() { return {Kind::Eftm, {}}; }
  static OriginFilter all() { return {Kind::All, {}}; }
  bool selects(const RuleOrigin& o) const;
};

class FlowTable {
 public:
  // Replaces any rule with the same (priority, match). Throws
  // std::invalid_argument for a non-canonical prefix or negative timeout.
  void install(FlowRule rule, SimTime now);

  // Highest priority, then longest destination prefix. Expired rules never
  // match. Updates last_hit of the returned rule.
  const FlowRule* match(const Packet& p, SimTime now);
  const FlowRule* peek(const Packet& p, SimTime now) const;

  // Removes and returns expired rules.
  std::vector<FlowRule> expire(SimTime now);
  std::size_t flush(const OriginFilter& filter);

  std::span<const FlowRule> rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }
  std::vector<std::string> dump() const;

 private:
  std::optional<std::size_t> best(const Packet& p, SimTime now) const;
  std::vector<FlowRule> rules_;
};

struct SentTo {
  NodeId next_hop{};
  bool operator==(const SentTo&) const = default;
};
struct DeliveredLocal {
  bool operator==(const DeliveredLocal&) const = default;
};
struct PacketIn {
  bool operator==(const PacketIn&) const = default;
};
struct Dropped {
  std::string reason;
  bool operator==(const Dropped&) const = default;
};
using Disposition = std::variant<SentTo, DeliveredLocal, PacketIn, Dropped>;

std::string describe(const Disposition& d);

// The hybrid IP/OpenFlow switch of one WMR.
class FlowSwitch {
 public:
  FlowSwitch(NodeId self, Address mesh_address, Prefix control_subnet = kDefaultControlSubnet)
      : self_(self), mesh_address_(mesh_address), control_subnet_(control_subnet) {}

  // Basic-class packets follow the routing table and never touch the flow
  // table. SDN-class packets use the flow table; a miss becomes a packet-in
  // when a controller connection is established, otherwise a drop.
  Disposition forward(const Packet& p, const RoutingTable& routes, bool controller_connected, SimTime now);

  TrafficClass classify(const Packet& p) const { return wmsdn::classify(p, control_subnet_); }
  FlowTable& table() { return table_; }
  const FlowTable& table() const { return table_; }
  NodeId self() const { return self_; }

 private:
  NodeId self_;
  Address mesh_address_;
  Prefix control_subnet_;
  FlowTable table_;
};

}  // namespace wmsdn
