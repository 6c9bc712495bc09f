#include "wmsdn/flow_table.hpp"

#include <algorithm>
#include <stdexcept>

namespace wmsdn {

const char* to_string(TrafficClass c) { return c == TrafficClass::Basic ? "basic" : "sdn"; }

const char* to_string(PacketKind k) {
  switch (k) {
    case PacketKind::OlsrMsg: return "olsr";
    case PacketKind::ControlChannel: return "control";
    case PacketKind::Ping: return "ping";
    case PacketKind::Data: return "data";
  }
  return "?";
}

TrafficClass classify(const Packet& p, const Prefix& control_subnet) {
  return control_subnet.contains(p.dst) ? TrafficClass::Basic : TrafficClass::Sdn;
}

bool FlowRule::expired(SimTime now) const {
  if (hard_timeout > Duration::zero() && now >= installed_at + hard_timeout) return true;
  if (idle_timeout > Duration::zero() && now >= last_hit + idle_timeout) return true;
  return false;
}

std::string describe(const FlowRule& r) {
  std::string out = "prio=" + std::to_string(r.priority) + " dst=" + r.match.dst.to_string();
  if (r.match.src) out += " src=" + r.match.src->to_string();
  out += std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ForwardTo>) return " fwd=" + std::to_string(idx(a.next_hop));
        else if constexpr (std::is_same_v<T, DeliverLocal>) return " local";
        else return " drop";
      },
      r.action);
  if (const auto* c = std::get_if<ControllerOrigin>(&r.origin)) out += " by=" + c->controller.to_string();
  else out += " by=eftm";
  if (!r.tag.empty()) out += " tag=" + r.tag;
  return out;
}

bool OriginFilter::selects(const RuleOrigin& o) const {
  switch (kind) {
    case Kind::All: return true;
    case Kind::Eftm: return std::holds_alternative<EftmOrigin>(o);
    case Kind::AnyController: return std::holds_alternative<ControllerOrigin>(o);
    case Kind::Controller: {
      const auto* c = std::get_if<ControllerOrigin>(&o);
      return c && c->controller == controller;
    }
  }
  return false;
}

void FlowTable::install(FlowRule rule, SimTime now) {
  if (!rule.match.dst.is_canonical() || (rule.match.src && !rule.match.src->is_canonical())) {
    throw std::invalid_argument("malformed rule prefix: " + describe(rule));
  }
  if (rule.idle_timeout < Duration::zero() || rule.hard_timeout < Duration::zero()) {
    throw std::invalid_argument("negative rule timeout");
  }
  rule.installed_at = now;
  rule.last_hit = now;
  auto it = std::find_if(rules_.begin(), rules_.end(), [&](const FlowRule& r) {
    return r.priority == rule.priority && r.match == rule.match;
  });
  if (it != rules_.end()) {
    *it = std::move(rule);
  } else {
    rules_.push_back(std::move(rule));
  }
}

std::optional<std::size_t> FlowTable::best(const Packet& p, SimTime now) const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const FlowRule& r = rules_[i];
    if (r.expired(now) || !r.match.matches(p)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const FlowRule& b = rules_[*best];
    if (r.priority > b.priority || (r.priority == b.priority && r.match.dst.length() > b.match.dst.length())) best = i;
  }
  return best;
}

const FlowRule* FlowTable::match(const Packet& p, SimTime now) {
  auto i = best(p, now);
  if (!i) return nullptr;
  rules_[*i].last_hit = now;
  return &rules_[*i];
}

const FlowRule* FlowTable::peek(const Packet& p, SimTime now) const {
  auto i = best(p, now);
  return i ? &rules_[*i] : nullptr;
}

std::vector<FlowRule> FlowTable::expire(SimTime now) {
  std::vector<FlowRule> gone;
  std::erase_if(rules_, [&](const FlowRule& r) {
    if (!r.expired(now)) return false;
    gone.push_back(r);
    return true;
  });
  return gone;
}

std::size_t FlowTable::flush(const OriginFilter& filter) {
  return std::erase_if(rules_, [&](const FlowRule& r) { return filter.selects(r.origin); });
}

std::vector<std::string> FlowTable::dump() const {
  std::vector<std::string> out;
  out.reserve(rules_.size());
  for (const auto& r : rules_) out.push_back(describe(r));
  return out;
}

std::string describe(const Disposition& d) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, SentTo>) return "sent_to:" + std::to_string(idx(x.next_hop));
        else if constexpr (std::is_same_v<T, DeliveredLocal>) return "delivered_local";
        else if constexpr (std::is_same_v<T, PacketIn>) return "packet_in";
        else return "dropped:" + x.reason;
      },
      d);
}

Disposition FlowSwitch::forward(const Packet& p, const RoutingTable& routes, bool controller_connected, SimTime now) {
  if (classify(p) == TrafficClass::Basic) {
    if (p.dst == mesh_address_) return DeliveredLocal{};
    auto route = routes.lookup(p.dst);
    if (!route) return Dropped{"no route"};
    if (!route->second.next_hop) return DeliveredLocal{};
    return SentTo{*route->second.next_hop};
  }
  const FlowRule* rule = table_.match(p, now);
  if (!rule) {
    if (controller_connected) return PacketIn{};
    return Dropped{"no rule"};
  }
  return std::visit(
      [](const auto& a) -> Disposition {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ForwardTo>) return SentTo{a.next_hop};
        else if constexpr (std::is_same_v<T, DeliverLocal>) return DeliveredLocal{};
        else return Dropped{"drop rule"};
      },
      rule->action);
}

}  // namespace wmsdn
