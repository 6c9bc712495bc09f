#include "wmsdn/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

namespace wmsdn {
namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& message) const {
    std::string where = source_;
    if (at.IsDefined() && !at.Mark().is_null()) {
      where += ":" + std::to_string(at.Mark().line + 1) + ":" + std::to_string(at.Mark().column + 1);
    }
    throw ConfigError(where + ": " + field + ": " + message);
  }

  void require_map(const YAML::Node& n, const std::string& field) const {
    if (!n.IsMap()) fail(n, field, "expected a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& field, std::initializer_list<const char*> allowed) const {
    require_map(n, field);
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        fail(kv.first, field.empty() ? key : field + "." + key, "unknown field");
      }
    }
  }

  template <typename T>
  T as(const YAML::Node& n, const std::string& field) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, field, "cannot convert '" + (n.IsScalar() ? n.Scalar() : std::string("<non-scalar>")) + "'");
    }
  }

  template <typename T>
  T required(const YAML::Node& parent, const char* key, const std::string& field) const {
    const YAML::Node n = parent[key];
    if (!n.IsDefined() || n.IsNull()) fail(parent, join(field, key), "required field missing");
    return as<T>(n, join(field, key));
  }

  template <typename T>
  std::optional<T> optional(const YAML::Node& parent, const char* key, const std::string& field) const {
    const YAML::Node n = parent[key];
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    return as<T>(n, join(field, key));
  }

  Address address(const YAML::Node& parent, const char* key, const std::string& field) const {
    const auto text = required<std::string>(parent, key, field);
    try {
      return Address::parse(text);
    } catch (const std::invalid_argument& e) {
      fail(parent[key], join(field, key), e.what());
    }
  }

  Prefix prefix(const YAML::Node& n, const std::string& field) const {
    const auto text = as<std::string>(n, field);
    try {
      const Prefix p = Prefix::parse(text);
      if (!p.is_canonical()) fail(n, field, "prefix " + text + " has host bits set");
      return p;
    } catch (const std::invalid_argument& e) {
      fail(n, field, e.what());
    }
  }

  Duration duration(const YAML::Node& parent, const char* key, const std::string& field, Duration fallback,
                    bool allow_zero = true) const {
    const auto v = optional<double>(parent, key, field);
    if (!v) return fallback;
    if (!std::isfinite(*v) || *v < 0 || (!allow_zero && *v == 0)) {
      fail(parent[key], join(field, key), allow_zero ? "must be a nonnegative number of seconds"
                                                     : "must be a positive number of seconds");
    }
    return seconds(*v);
  }

  static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

struct LinkDefaults {
  double capacity_bps;
  Duration delay;
};

LinkDefaults read_link_defaults(const Reader& r, const YAML::Node& n, const std::string& field, LinkDefaults d) {
  if (!n.IsDefined() || n.IsNull()) return d;
  r.check_keys(n, field, {"capacity_bps", "delay"});
  if (auto c = r.optional<double>(n, "capacity_bps", field)) {
    if (!(*c > 0)) r.fail(n["capacity_bps"], field + ".capacity_bps", "must be positive");
    d.capacity_bps = *c;
  }
  d.delay = r.duration(n, "delay", field, d.delay);
  return d;
}

void apply_override(YAML::Node root, const Override& o) {
  std::vector<std::string> parts;
  std::stringstream ss(o.key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override: empty key");
  YAML::Node value = YAML::Load(o.value);
  // Descend with fresh handles; yaml-cpp node assignment rebinds rather than writes through.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node cur = chain.back();
    const auto& part = parts[i];
    if (cur.IsSequence()) {
      std::size_t index = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), index);
      if (ec != std::errc{} || index >= cur.size()) throw ConfigError("override " + o.key + ": bad index '" + part + "'");
      chain.push_back(cur[index]);
    } else {
      if (!cur[part].IsDefined()) cur[part] = YAML::Node(YAML::NodeType::Map);
      chain.push_back(cur[part]);
    }
  }
  YAML::Node parent = chain.back();
  const auto& last = parts.back();
  if (parent.IsSequence()) {
    std::size_t index = 0;
    auto [ptr, ec] = std::from_chars(last.data(), last.data() + last.size(), index);
    if (ec != std::errc{} || index >= parent.size()) throw ConfigError("override " + o.key + ": bad index '" + last + "'");
    parent[index] = value;
  } else {
    parent[last] = value;
  }
}

EmergencyPolicy::Kind policy_kind(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.as<std::string>(n, field);
  if (s == "control_only") return EmergencyPolicy::Kind::ControlOnly;
  if (s == "allow_all") return EmergencyPolicy::Kind::AllowAll;
  if (s == "selective") return EmergencyPolicy::Kind::Selective;
  r.fail(n, field, "expected control_only, allow_all or selective, got '" + s + "'");
}

ActionKind action_kind(const Reader& r, const YAML::Node& n, const std::string& field) {
  const auto s = r.as<std::string>(n, field);
  if (s == "link_down") return ActionKind::LinkDown;
  if (s == "link_up") return ActionKind::LinkUp;
  if (s == "start_flow") return ActionKind::StartFlow;
  if (s == "stop_flow") return ActionKind::StopFlow;
  r.fail(n, field, "expected link_down, link_up, start_flow or stop_flow, got '" + s + "'");
}

Scenario build(const YAML::Node& root, const Reader& r) {
  Scenario sc;
  sc.source = r.source();
  r.check_keys(root, "", {"name", "duration", "seeds", "control_subnet", "olsr", "eftm", "link_defaults", "wmrs",
                          "controllers", "hosts", "links", "traffic", "events", "measure", "sample_interval"});
  sc.name = r.required<std::string>(root, "name", "");
  const auto duration = r.required<double>(root, "duration", "");
  if (!(duration > 0) || !std::isfinite(duration)) r.fail(root["duration"], "duration", "must be positive");
  sc.duration = at_seconds(duration);

  if (const auto seeds = root["seeds"]; seeds.IsDefined()) {
    if (seeds.IsSequence()) {
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        sc.seeds.push_back(r.as<std::uint64_t>(seeds[i], "seeds[" + std::to_string(i) + "]"));
      }
    } else {
      try {
        sc.seeds = parse_seed_list(r.as<std::string>(seeds, "seeds"));
      } catch (const ConfigError& e) {
        r.fail(seeds, "seeds", e.what());
      }
    }
  }
  if (sc.seeds.empty()) sc.seeds.push_back(1);

  NetworkConfig& net = sc.network;
  if (root["control_subnet"].IsDefined()) net.control_subnet = r.prefix(root["control_subnet"], "control_subnet");
  net.sample_interval = r.duration(root, "sample_interval", "", net.sample_interval, false);

  if (const auto o = root["olsr"]; o.IsDefined()) {
    r.check_keys(o, "olsr", {"hello_interval", "hellos_to_up", "hello_loss_intervals_to_down", "tc_interval",
                             "hello_jitter", "randomize_start"});
    net.olsr.hello_interval = r.duration(o, "hello_interval", "olsr", net.olsr.hello_interval);
    net.olsr.tc_interval = r.duration(o, "tc_interval", "olsr", net.olsr.tc_interval);
    net.olsr.hellos_to_up = r.optional<int>(o, "hellos_to_up", "olsr").value_or(net.olsr.hellos_to_up);
    net.olsr.hello_loss_intervals_to_down =
        r.optional<int>(o, "hello_loss_intervals_to_down", "olsr").value_or(net.olsr.hello_loss_intervals_to_down);
    net.olsr.hello_jitter = r.optional<double>(o, "hello_jitter", "olsr").value_or(net.olsr.hello_jitter);
    net.olsr.randomize_start = r.optional<bool>(o, "randomize_start", "olsr").value_or(net.olsr.randomize_start);
    try {
      net.olsr.validate();
    } catch (const ConfigError& e) {
      r.fail(o, "olsr", e.what());
    }
  }

  EftmConfig& ec = net.eftm;
  ec.control_subnet = net.control_subnet;
  if (const auto e = root["eftm"]; e.IsDefined()) {
    r.check_keys(e, "eftm", {"poll_period", "connect_timeout", "controller_range", "hysteresis_hold", "keepalive",
                             "keepalive_interval", "emergency_policy", "emergency_allow",
                             "clear_controller_rules_in_emergency", "static_priority", "randomize_poll_phase"});
    ec.poll_period = r.duration(e, "poll_period", "eftm", ec.poll_period, false);
    ec.connect_timeout = r.duration(e, "connect_timeout", "eftm", ec.connect_timeout, false);
    if (e["controller_range"].IsDefined()) ec.controller_range = r.prefix(e["controller_range"], "eftm.controller_range");
    ec.hysteresis_hold = r.duration(e, "hysteresis_hold", "eftm", ec.hysteresis_hold);
    ec.keepalive_enabled = r.optional<bool>(e, "keepalive", "eftm").value_or(ec.keepalive_enabled);
    ec.keepalive_interval = r.duration(e, "keepalive_interval", "eftm", ec.keepalive_interval, false);
    if (e["emergency_policy"].IsDefined()) {
      ec.emergency_policy.kind = policy_kind(r, e["emergency_policy"], "eftm.emergency_policy");
    }
    if (const auto allow = e["emergency_allow"]; allow.IsDefined()) {
      if (!allow.IsSequence()) r.fail(allow, "eftm.emergency_allow", "expected a list of prefixes");
      for (std::size_t i = 0; i < allow.size(); ++i) {
        ec.emergency_policy.allowed.push_back(r.prefix(allow[i], "eftm.emergency_allow[" + std::to_string(i) + "]"));
      }
    }
    ec.clear_controller_rules_in_emergency = r.optional<bool>(e, "clear_controller_rules_in_emergency", "eftm")
                                                 .value_or(ec.clear_controller_rules_in_emergency);
    if (const auto sp = e["static_priority"]; sp.IsDefined()) {
      if (!sp.IsSequence()) r.fail(sp, "eftm.static_priority", "expected a list of addresses");
      for (std::size_t i = 0; i < sp.size(); ++i) {
        const std::string f = "eftm.static_priority[" + std::to_string(i) + "]";
        try {
          ec.static_priority.push_back(Address::parse(r.as<std::string>(sp[i], f)));
        } catch (const std::invalid_argument& ex) {
          r.fail(sp[i], f, ex.what());
        }
      }
    }
    ec.randomize_poll_phase = r.optional<bool>(e, "randomize_poll_phase", "eftm").value_or(ec.randomize_poll_phase);
  }
  try {
    ec.validate();
  } catch (const ConfigError& ex) {
    r.fail(root["eftm"].IsDefined() ? root["eftm"] : root, "eftm", ex.what());
  }

  LinkDefaults mesh{10e6, std::chrono::microseconds(2000)};
  LinkDefaults attach{100e6, std::chrono::microseconds(500)};
  if (const auto ld = root["link_defaults"]; ld.IsDefined()) {
    r.check_keys(ld, "link_defaults", {"mesh", "attach"});
    mesh = read_link_defaults(r, ld["mesh"], "link_defaults.mesh", mesh);
    attach = read_link_defaults(r, ld["attach"], "link_defaults.attach", attach);
  }

  Topology& topo = net.topology;
  auto add_node = [&](Node node, const YAML::Node& at, const std::string& field) {
    try {
      return topo.add_node(std::move(node));
    } catch (const ConfigError& e) {
      r.fail(at, field, e.what());
    }
  };
  auto lookup = [&](const YAML::Node& parent, const char* key, const std::string& field,
                    std::optional<NodeKind> kind) {
    const auto target = r.required<std::string>(parent, key, field);
    auto id = topo.find_node(target);
    if (!id) r.fail(parent[key], field + "." + key, "unknown node '" + target + "'");
    if (kind && topo.node(*id).kind != *kind) {
      r.fail(parent[key], field + "." + key, "'" + target + "' is not a " + to_string(*kind));
    }
    return *id;
  };
  auto add_link = [&](Link link, const YAML::Node& at, const std::string& field) {
    try {
      return topo.add_link(std::move(link));
    } catch (const ConfigError& e) {
      r.fail(at, field, e.what());
    }
  };

  const auto wmrs = root["wmrs"];
  if (!wmrs.IsSequence() || wmrs.size() == 0) r.fail(wmrs.IsDefined() ? wmrs : root, "wmrs", "expected a non-empty list");
  std::vector<Prefix> data_prefixes;
  for (std::size_t i = 0; i < wmrs.size(); ++i) {
    const auto w = wmrs[i];
    const std::string f = "wmrs[" + std::to_string(i) + "]";
    r.check_keys(w, f, {"name", "address", "access", "gateway"});
    Node node;
    node.name = r.required<std::string>(w, "name", f);
    node.kind = NodeKind::Wmr;
    node.gateway = r.optional<bool>(w, "gateway", f).value_or(false);
    const Address mesh_addr = r.address(w, "address", f);
    if (!net.control_subnet.contains(mesh_addr)) {
      r.fail(w["address"], f + ".address", mesh_addr.to_string() + " is outside the control subnet " +
                                               net.control_subnet.to_string());
    }
    if (ec.controller_range.contains(mesh_addr)) {
      r.fail(w["address"], f + ".address", mesh_addr.to_string() + " lies in the controller range");
    }
    node.interfaces.push_back(Interface{mesh_addr, net.control_subnet, InterfaceRole::Mesh});
    if (const auto access = w["access"]; access.IsDefined()) {
      if (!access.IsSequence()) r.fail(access, f + ".access", "expected a list of prefixes");
      for (std::size_t j = 0; j < access.size(); ++j) {
        const std::string af = f + ".access[" + std::to_string(j) + "]";
        const Prefix p = r.prefix(access[j], af);
        if (p.length() > 30) r.fail(access[j], af, "access prefix too small");
        if (net.control_subnet.contains(p) || p.contains(net.control_subnet)) {
          r.fail(access[j], af, p.to_string() + " overlaps the control subnet");
        }
        for (const auto& other : data_prefixes) {
          if (other.contains(p) || p.contains(other)) r.fail(access[j], af, p.to_string() + " overlaps " + other.to_string());
        }
        data_prefixes.push_back(p);
        node.interfaces.push_back(Interface{Address(p.network().value() + 1), p, InterfaceRole::Access});
      }
    }
    add_node(std::move(node), w, f);
  }

  const auto ctrls = root["controllers"];
  if (ctrls.IsDefined() && !ctrls.IsSequence()) r.fail(ctrls, "controllers", "expected a list");
  std::vector<std::pair<NodeId, YAML::Node>> overrides_pending;
  for (std::size_t i = 0; ctrls.IsDefined() && i < ctrls.size(); ++i) {
    const auto c = ctrls[i];
    const std::string f = "controllers[" + std::to_string(i) + "]";
    r.check_keys(c, f, {"name", "address", "attach", "flush_on_connect", "rule_idle_timeout", "path_overrides"});
    Node node;
    node.name = r.required<std::string>(c, "name", f);
    node.kind = NodeKind::Controller;
    const Address a = r.address(c, "address", f);
    if (!ec.controller_range.contains(a)) {
      r.fail(c["address"], f + ".address",
             a.to_string() + " is outside the controller range " + ec.controller_range.to_string());
    }
    node.interfaces.push_back(Interface{a, Prefix::host(a), InterfaceRole::Mesh});
    const NodeId wmr = lookup(c, "attach", f, NodeKind::Wmr);
    const NodeId id = add_node(std::move(node), c, f);
    add_link(Link{{}, topo.node(id).name + "-" + topo.node(wmr).name, id, wmr, attach.capacity_bps, attach.delay,
                  LinkState::Up},
             c, f);
    ControllerConfig cc;
    cc.address = a;
    cc.attached_wmr = wmr;
    cc.flush_on_connect = r.optional<bool>(c, "flush_on_connect", f).value_or(true);
    cc.rule_idle_timeout = r.duration(c, "rule_idle_timeout", f, cc.rule_idle_timeout);
    net.controllers[id] = cc;
    if (c["path_overrides"].IsDefined()) overrides_pending.emplace_back(id, c["path_overrides"]);
  }

  const auto hosts = root["hosts"];
  if (hosts.IsDefined() && !hosts.IsSequence()) r.fail(hosts, "hosts", "expected a list");
  for (std::size_t i = 0; hosts.IsDefined() && i < hosts.size(); ++i) {
    const auto h = hosts[i];
    const std::string f = "hosts[" + std::to_string(i) + "]";
    r.check_keys(h, f, {"name", "address", "attach"});
    Node node;
    node.name = r.required<std::string>(h, "name", f);
    node.kind = NodeKind::Host;
    const Address a = r.address(h, "address", f);
    const NodeId wmr = lookup(h, "attach", f, NodeKind::Wmr);
    std::optional<Prefix> subnet;
    for (const auto& p : topo.node(wmr).access_prefixes()) {
      if (p.contains(a)) subnet = p;
    }
    if (!subnet) {
      r.fail(h["address"], f + ".address",
             a.to_string() + " is not inside an access network of " + topo.node(wmr).name);
    }
    node.interfaces.push_back(Interface{a, *subnet, InterfaceRole::Access});
    const NodeId id = add_node(std::move(node), h, f);
    add_link(Link{{}, topo.node(id).name + "-" + topo.node(wmr).name, id, wmr, attach.capacity_bps, attach.delay,
                  LinkState::Up},
             h, f);
  }

  for (const auto& [id, list] : overrides_pending) {
    const std::string f = "controllers." + topo.node(id).name + ".path_overrides";
    if (!list.IsSequence()) r.fail(list, f, "expected a list");
    for (std::size_t j = 0; j < list.size(); ++j) {
      const auto o = list[j];
      const std::string of = f + "[" + std::to_string(j) + "]";
      r.check_keys(o, of, {"dst", "path"});
      PathOverride po;
      po.dst = r.prefix(o["dst"], of + ".dst");
      const auto path = o["path"];
      if (!path.IsSequence() || path.size() < 1) r.fail(o, of + ".path", "expected a list of WMR names");
      for (std::size_t k = 0; k < path.size(); ++k) {
        const auto hop = r.as<std::string>(path[k], of + ".path");
        auto n = topo.find_node(hop);
        if (!n || topo.node(*n).kind != NodeKind::Wmr) r.fail(path[k], of + ".path", "unknown WMR '" + hop + "'");
        po.path.push_back(*n);
      }
      net.controllers[id].path_overrides.push_back(std::move(po));
    }
  }

  const auto links = root["links"];
  if (links.IsDefined() && !links.IsSequence()) r.fail(links, "links", "expected a list");
  for (std::size_t i = 0; links.IsDefined() && i < links.size(); ++i) {
    const auto l = links[i];
    const std::string f = "links[" + std::to_string(i) + "]";
    r.check_keys(l, f, {"name", "a", "b", "capacity_bps", "delay", "state"});
    Link link;
    link.name = r.optional<std::string>(l, "name", f).value_or("");
    link.a = lookup(l, "a", f, NodeKind::Wmr);
    link.b = lookup(l, "b", f, NodeKind::Wmr);
    link.capacity_bps = r.optional<double>(l, "capacity_bps", f).value_or(mesh.capacity_bps);
    link.delay = r.duration(l, "delay", f, mesh.delay);
    const auto state = r.optional<std::string>(l, "state", f).value_or("up");
    if (state != "up" && state != "down") r.fail(l["state"], f + ".state", "expected up or down");
    link.state = state == "up" ? LinkState::Up : LinkState::Down;
    add_link(std::move(link), l, f);
  }

  auto event_time = [&](const YAML::Node& parent, const char* key, const std::string& field) {
    const auto t = r.required<double>(parent, key, field);
    if (!std::isfinite(t) || t < 0 || t > duration) {
      r.fail(parent[key], field + "." + key, "must lie within [0, duration]");
    }
    return at_seconds(t);
  };

  std::set<std::string> flow_names;
  if (const auto traffic = root["traffic"]; traffic.IsDefined()) {
    r.check_keys(traffic, "traffic", {"probes", "flows"});
    const auto probes = traffic["probes"];
    for (std::size_t i = 0; probes.IsDefined() && i < probes.size(); ++i) {
      const auto p = probes[i];
      const std::string f = "traffic.probes[" + std::to_string(i) + "]";
      r.check_keys(p, f, {"name", "src", "dst", "interval", "start", "stop"});
      PingProbe probe;
      probe.name = r.required<std::string>(p, "name", f);
      probe.src = topo.node(lookup(p, "src", f, std::nullopt)).name;
      const auto dst = r.required<std::string>(p, "dst", f);
      if (auto n = topo.find_node(dst)) {
        probe.dst = topo.node(*n).main_address();
      } else {
        try {
          probe.dst = Address::parse(dst);
        } catch (const std::invalid_argument&) {
          r.fail(p["dst"], f + ".dst", "neither a node name nor an address: '" + dst + "'");
        }
      }
      probe.interval = r.duration(p, "interval", f, probe.interval, false);
      if (p["start"].IsDefined()) probe.start = event_time(p, "start", f);
      if (p["stop"].IsDefined()) probe.stop = event_time(p, "stop", f);
      net.probes.push_back(std::move(probe));
    }
    const auto flows = traffic["flows"];
    for (std::size_t i = 0; flows.IsDefined() && i < flows.size(); ++i) {
      const auto fl = flows[i];
      const std::string f = "traffic.flows[" + std::to_string(i) + "]";
      r.check_keys(fl, f, {"name", "src", "dst", "demand_bps", "loss_recovery_delay", "start", "stop"});
      BulkFlow flow;
      flow.name = r.required<std::string>(fl, "name", f);
      if (!flow_names.insert(flow.name).second) r.fail(fl["name"], f + ".name", "duplicate flow '" + flow.name + "'");
      flow.src = topo.node(lookup(fl, "src", f, NodeKind::Host)).name;
      flow.dst = topo.node(lookup(fl, "dst", f, NodeKind::Host)).name;
      if (const auto d = fl["demand_bps"]; d.IsDefined()) {
        const auto text = r.as<std::string>(d, f + ".demand_bps");
        if (text == "inf" || text == "infinity") {
          flow.demand_bps = std::numeric_limits<double>::infinity();
        } else {
          flow.demand_bps = r.as<double>(d, f + ".demand_bps");
          if (!(flow.demand_bps > 0)) r.fail(d, f + ".demand_bps", "must be positive");
        }
      }
      flow.loss_recovery_delay = r.duration(fl, "loss_recovery_delay", f, flow.loss_recovery_delay);
      if (fl["start"].IsDefined()) net.events.push_back({event_time(fl, "start", f), ActionKind::StartFlow, flow.name});
      if (fl["stop"].IsDefined()) net.events.push_back({event_time(fl, "stop", f), ActionKind::StopFlow, flow.name});
      net.flows.push_back(std::move(flow));
    }
  }

  if (const auto events = root["events"]; events.IsDefined()) {
    if (!events.IsSequence()) r.fail(events, "events", "expected a list");
    SimTime previous{};
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto ev = events[i];
      const std::string f = "events[" + std::to_string(i) + "]";
      r.check_keys(ev, f, {"at", "action", "link", "flow"});
      ScenarioEvent e;
      e.at = event_time(ev, "at", f);
      if (e.at < previous) r.fail(ev["at"], f + ".at", "events must be in time order");
      previous = e.at;
      e.action = action_kind(r, ev["action"], f + ".action");
      if (e.action == ActionKind::LinkDown || e.action == ActionKind::LinkUp) {
        e.target = r.required<std::string>(ev, "link", f);
        if (!topo.find_link(e.target)) r.fail(ev["link"], f + ".link", "unknown link '" + e.target + "'");
      } else {
        e.target = r.required<std::string>(ev, "flow", f);
        if (!flow_names.contains(e.target)) r.fail(ev["flow"], f + ".flow", "unknown flow '" + e.target + "'");
      }
      net.events.push_back(std::move(e));
    }
  }
  std::stable_sort(net.events.begin(), net.events.end(),
                   [](const ScenarioEvent& a, const ScenarioEvent& b) { return a.at < b.at; });

  if (const auto m = root["measure"]; m.IsDefined()) {
    r.check_keys(m, "measure", {"event_at", "reference", "wmrs", "probe", "flow"});
    if (m["event_at"].IsDefined()) sc.measure.event_at = event_time(m, "event_at", "measure");
    const auto ref = r.optional<std::string>(m, "reference", "measure").value_or("event");
    if (ref == "connectivity") sc.measure.reference = MeasureSpec::Reference::Connectivity;
    else if (ref != "event") r.fail(m["reference"], "measure.reference", "expected event or connectivity");
    if (const auto w = m["wmrs"]; w.IsDefined()) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const auto n = r.as<std::string>(w[i], "measure.wmrs");
        auto id = topo.find_node(n);
        if (!id || topo.node(*id).kind != NodeKind::Wmr) r.fail(w[i], "measure.wmrs", "unknown WMR '" + n + "'");
        sc.measure.wmrs.push_back(n);
      }
    }
    sc.measure.probe = r.optional<std::string>(m, "probe", "measure");
    if (sc.measure.probe && std::none_of(net.probes.begin(), net.probes.end(),
                                         [&](const PingProbe& p) { return p.name == *sc.measure.probe; })) {
      r.fail(m["probe"], "measure.probe", "unknown probe '" + *sc.measure.probe + "'");
    }
    sc.measure.flow = r.optional<std::string>(m, "flow", "measure");
    if (sc.measure.flow && !flow_names.contains(*sc.measure.flow)) {
      r.fail(m["flow"], "measure.flow", "unknown flow '" + *sc.measure.flow + "'");
    }
    if (!sc.measure.event_at && (sc.measure.probe || !sc.measure.wmrs.empty() || sc.measure.flow)) {
      r.fail(m, "measure.event_at", "required when metrics are requested");
    }
    if (sc.measure.reference == MeasureSpec::Reference::Connectivity && !sc.measure.probe) {
      r.fail(m, "measure.probe", "a connectivity reference needs a probe");
    }
  }
  return sc;
}

}  // namespace

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
  return Override{text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError("bad seed '" + std::string(s) + "' in '" + text + "'");
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(std::string_view(text).substr(0, dots));
    const auto hi = number(std::string_view(text).substr(dots + 2));
    if (hi < lo) throw ConfigError("empty seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(number(part));
  if (out.empty()) throw ConfigError("no seeds in '" + text + "'");
  return out;
}

Scenario parse_scenario(const std::string& text, const std::string& source, std::span<const Override> overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": parse error: " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source + ": expected a mapping at top level");
  for (const auto& o : overrides) {
    try {
      apply_override(root, o);
    } catch (const YAML::Exception& e) {
      throw ConfigError("override " + o.key + ": " + e.msg);
    }
  }
  return build(root, Reader(source));
}

Scenario load_scenario(const std::filesystem::path& path, std::span<const Override> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string(), overrides);
}

SummaryRow summarize(const Scenario& scenario, const Observations& obs, std::uint64_t seed) {
  SummaryRow row;
  row.seed = seed;
  row.scenario = scenario.name;
  const auto& m = scenario.measure;
  if (!m.event_at) return row;
  row.has_connectivity = m.probe.has_value();
  row.has_selection = !m.wmrs.empty();
  row.has_throughput = m.flow.has_value();
  if (m.probe) row.connectivity_time_s = network_connectivity_time(obs, *m.event_at, *m.probe);
  if (!m.wmrs.empty()) {
    std::optional<SimTime> reference = *m.event_at;
    if (m.reference == MeasureSpec::Reference::Connectivity) {
      reference.reset();
      if (row.connectivity_time_s) reference = *m.event_at + seconds(*row.connectivity_time_s);
    }
    if (reference) row.selection_delay_s = master_selection_delay(obs, *m.event_at, *reference, m.wmrs);
  }
  if (m.flow) {
    const auto series = throughput_series(obs, *m.flow);
    row.throughput_gap_s = analyze_throughput(series, *m.event_at).gap_s();
  }
  return row;
}

RunResult run(const Scenario& scenario, std::uint64_t seed) {
  Network net(scenario.network, seed);
  net.start();
  net.run_until(scenario.duration);
  RunResult result;
  result.seed = seed;
  result.log = net.log();
  result.observations = net.observations();
  result.summary = summarize(scenario, result.observations, seed);
  result.single_master_violations = net.single_master_violations();
  result.controller_messages = net.controller_to_controller_messages();
  result.trace_digest = net.simulator().trace_digest();
  return result;
}

std::vector<RunResult> run_seeds(const Scenario& scenario, std::span<const std::uint64_t> seeds, unsigned jobs) {
  std::vector<RunResult> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        results[i] = run(scenario, seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::string log_file_name(const std::string& scenario, std::uint64_t seed) {
  return scenario + "-seed" + std::to_string(seed) + ".ndjson";
}

void write_results_csv(const std::filesystem::path& file, std::span<const SummaryRow> rows) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << kResultsHeader << '\n';
  for (const auto& row : rows) out << to_csv(row) << '\n';
}

void write_outputs(const std::filesystem::path& dir, const std::string& scenario,
                   std::span<const RunResult> results) {
  std::filesystem::create_directories(dir);
  std::vector<SummaryRow> rows;
  for (const auto& r : results) {
    std::ofstream out(dir / log_file_name(scenario, r.seed));
    if (!out) throw std::runtime_error("cannot write " + (dir / log_file_name(scenario, r.seed)).string());
    r.log.write_ndjson(out);
    rows.push_back(r.summary);
  }
  write_results_csv(dir / "results.csv", rows);
}

}  // namespace wmsdn
