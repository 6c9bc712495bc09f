#include "wmsdn/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace wmsdn {
namespace {

constexpr std::uint32_t kControlSize = 96;
constexpr std::uint32_t kPingSize = 84;
constexpr std::uint32_t kDataSize = 1500;
constexpr std::uint32_t kHelloSize = 48;

std::uint32_t message_size(const MessageBody& body) {
  if (const auto* reply = std::get_if<TopologyReply>(&body)) {
    return kControlSize + 40 * static_cast<std::uint32_t>(reply->view.lsas.size());
  }
  if (const auto* pin = std::get_if<PacketInMessage>(&body)) return kControlSize + std::min(pin->packet.size, 128u);
  if (std::holds_alternative<FlowMod>(body) || std::holds_alternative<FlushRules>(body)) return kControlSize + 32;
  return kControlSize;
}

Duration serialization(std::uint32_t bytes, double capacity_bps) {
  return Duration{static_cast<std::int64_t>(std::llround(bytes * 8.0 / capacity_bps * 1e6))};
}

nlohmann::json route_json(const Topology& topo, const Route& r) {
  return {{"next_hop", r.next_hop ? nlohmann::json(topo.node(*r.next_hop).name) : nlohmann::json(nullptr)},
          {"hops", r.hop_count}};
}

}  // namespace

const char* to_string(ActionKind a) {
  switch (a) {
    case ActionKind::LinkDown: return "link_down";
    case ActionKind::LinkUp: return "link_up";
    case ActionKind::StartFlow: return "start_flow";
    case ActionKind::StopFlow: return "stop_flow";
  }
  return "?";
}

class Network::WmrAgent final : public EftmEnvironment {
 public:
  WmrAgent(Network& net, NodeId id, const Node& node, Rng& rng)
      : net_(net), id_(id), sw_(id, node.main_address(), net.config_.control_subnet),
        eftm_(id, node.name, node.main_address(), net.config_.eftm, rng, *this) {}

  Simulator& simulator() override { return net_.sim_; }
  std::vector<HnaEntry> hna() const override { return net_.olsr(id_)->hna_db(); }
  const RoutingTable& routes() const override { return net_.olsr(id_)->routes(); }
  FlowTable& flow_table() override { return sw_.table(); }
  bool send_control(Address dst, MessageBody body) override {
    return net_.send_control_from_wmr(id_, dst, std::move(body));
  }
  void record(RecordKind kind, nlohmann::json payload) override { net_.record(kind, std::move(payload)); }
  void flow_table_changed(const std::string& cause) override {
    net_.log_rule_event(id_, cause.c_str(), {});
    net_.mark_dirty();
  }
  void forwarding_state_changed() override { net_.mark_dirty(); }
  void handover(HandoverPhase phase, Address from, Address to) override {
    for (const auto& hook : net_.handover_hooks_) hook(id_, phase, from, to);
  }

  FlowSwitch& flow_switch() { return sw_; }
  Eftm& eftm() { return eftm_; }

 private:
  Network& net_;
  NodeId id_;
  FlowSwitch sw_;
  Eftm eftm_;
};

class Network::ControllerAgent final : public ControllerEnvironment {
 public:
  ControllerAgent(Network& net, NodeId id, const Node& node, ControllerConfig config)
      : net_(net), id_(id), logic_(id, node.name, std::move(config), *this) {}

  Simulator& simulator() override { return net_.sim_; }
  void send_to_switch(NodeId wmr, MessageBody body) override { net_.send_from_controller(id_, wmr, std::move(body)); }
  void record(RecordKind kind, nlohmann::json payload) override { net_.record(kind, std::move(payload)); }
  std::string node_name(NodeId n) const override { return net_.name(n); }

  ControllerLogic& logic() { return logic_; }

 private:
  Network& net_;
  NodeId id_;
  ControllerLogic logic_;
};

struct Network::NodeRuntime {
  std::unique_ptr<Rng> olsr_rng;
  std::unique_ptr<Rng> eftm_rng;
  std::unique_ptr<OlsrAgent> olsr;
  std::unique_ptr<WmrAgent> wmr;
  std::unique_ptr<ControllerAgent> ctrl;
  std::optional<Duration> hello_phase;
};

struct Network::FlowRuntime {
  BulkFlow spec;
  NodeId src{}, dst{};
  Address src_addr, dst_addr;
  bool active = false;
  bool path_ok = false;
  std::optional<SimTime> restored_at;
  double rate = 0;
  std::vector<std::pair<LinkId, NodeId>> hops;
  std::map<NodeId, SimTime> last_packet_in;
};

Network::Network(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)), topology_(config_.topology), sim_(seed) {
  config_.olsr.validate();
  config_.eftm.validate();
  for (const Node& node : topology_.nodes()) {
    auto rt = std::make_unique<NodeRuntime>();
    if (node.runs_olsr()) {
      rt->olsr_rng = std::make_unique<Rng>(sim_.make_rng(node.name + "/olsr"));
      std::vector<Prefix> hna = node.access_prefixes();
      if (node.kind == NodeKind::Controller) hna.push_back(Prefix::host(node.main_address()));
      if (node.gateway) hna.push_back(kDefaultRoute);
      rt->olsr = std::make_unique<OlsrAgent>(node.id, node.main_address(), std::move(hna), config_.olsr, sim_,
                                             *rt->olsr_rng, static_cast<OlsrTransport&>(*this));
    }
    if (node.kind == NodeKind::Wmr) {
      rt->eftm_rng = std::make_unique<Rng>(sim_.make_rng(node.name + "/eftm"));
      rt->wmr = std::make_unique<WmrAgent>(*this, node.id, node, *rt->eftm_rng);
    } else if (node.kind == NodeKind::Controller) {
      auto it = config_.controllers.find(node.id);
      ControllerConfig cc = it != config_.controllers.end() ? it->second : ControllerConfig{};
      cc.address = node.main_address();
      if (it == config_.controllers.end()) {
        for (LinkId l : topology_.incident(node.id)) {
          const NodeId other = topology_.link(l).other(node.id);
          if (topology_.node(other).kind == NodeKind::Wmr) {
            cc.attached_wmr = other;
            break;
          }
        }
      }
      controller_addresses_[cc.address] = node.id;
      rt->ctrl = std::make_unique<ControllerAgent>(*this, node.id, node, std::move(cc));
    }
    nodes_.push_back(std::move(rt));
  }
  for (const auto& spec : config_.flows) {
    auto f = std::make_unique<FlowRuntime>();
    f->spec = spec;
    f->src = node_id(spec.src);
    f->dst = node_id(spec.dst);
    f->src_addr = topology_.node(f->src).main_address();
    f->dst_addr = topology_.node(f->dst).main_address();
    flows_.push_back(std::move(f));
  }
  for (const auto& probe : config_.probes) node_id(probe.src);
}

Network::~Network() = default;

NodeId Network::node_id(std::string_view n) const {
  auto id = topology_.find_node(n);
  if (!id) throw ConfigError("unknown node '" + std::string(n) + "'");
  return *id;
}

Eftm* Network::eftm(NodeId n) { return nodes_.at(idx(n))->wmr ? &nodes_[idx(n)]->wmr->eftm() : nullptr; }
OlsrAgent* Network::olsr(NodeId n) { return nodes_.at(idx(n))->olsr.get(); }
FlowSwitch* Network::flow_switch(NodeId n) {
  return nodes_.at(idx(n))->wmr ? &nodes_[idx(n)]->wmr->flow_switch() : nullptr;
}
ControllerLogic* Network::controller(NodeId n) {
  return nodes_.at(idx(n))->ctrl ? &nodes_[idx(n)]->ctrl->logic() : nullptr;
}

std::optional<NodeId> Network::controller_at(Address a) const {
  auto it = controller_addresses_.find(a);
  if (it == controller_addresses_.end()) return std::nullopt;
  return it->second;
}

void Network::record(RecordKind kind, nlohmann::json payload) {
  const SimTime now = sim_.now();
  switch (kind) {
    case RecordKind::EftmTransition:
      if (payload.value("event", "") == "conn_open") {
        online_.connections[payload.at("wmr").get<std::string>()].emplace_back(
            now, payload.at("controller").get<std::string>());
      }
      break;
    case RecordKind::PingResult:
      online_.ping_replies[payload.at("probe").get<std::string>()].push_back(now);
      break;
    case RecordKind::ThroughputSample:
      online_.throughput[payload.at("flow").get<std::string>()].emplace_back(now,
                                                                            payload.at("rate_bps").get<double>());
      break;
    default:
      break;
  }
  log_.append(now, kind, std::move(payload));
}

void Network::start() {
  if (started_) throw std::logic_error("network already started");
  started_ = true;
  for (const Node& node : topology_.nodes()) {
    auto& rt = *nodes_[idx(node.id)];
    if (rt.olsr) {
      const Duration phase = config_.olsr.randomize_start
                                 ? seconds(rt.olsr_rng->uniform(0.0, to_seconds(config_.olsr.hello_interval)))
                                 : Duration::zero();
      rt.olsr->start(phase);
    }
    if (rt.wmr) rt.wmr->eftm().start();
    if (rt.ctrl) rt.ctrl->logic().start();
  }
  for (std::size_t i = 0; i < config_.probes.size(); ++i) {
    const auto& probe = config_.probes[i];
    sim_.schedule_at(probe.start, node_id(probe.src), EventKind::Scenario, [this, i] { send_probe(i, 1); });
  }
  for (const auto& ev : config_.events) {
    sim_.schedule_at(ev.at, kNoNode, EventKind::Scenario, [this, ev] {
      switch (ev.action) {
        case ActionKind::LinkDown:
        case ActionKind::LinkUp: {
          auto link = topology_.find_link(ev.target);
          if (!link) throw ConfigError("unknown link '" + ev.target + "'");
          set_link_state(*link, ev.action == ActionKind::LinkUp ? LinkState::Up : LinkState::Down);
          break;
        }
        case ActionKind::StartFlow: start_flow(ev.target); break;
        case ActionKind::StopFlow: stop_flow(ev.target); break;
      }
    });
  }
  schedule_sample();
  schedule_rule_sweep();
}

void Network::set_link_state(LinkId link, LinkState state) {
  const LinkState previous = topology_.set_link_state(link, state);
  const Link& l = topology_.link(link);
  record(RecordKind::LinkEvent, {{"link", l.name},
                                 {"a", name(l.a)},
                                 {"b", name(l.b)},
                                 {"state", to_string(state)},
                                 {"previous", to_string(previous)}});
  mark_dirty();
}

// ---- OLSR transport ----

void Network::broadcast_hello(NodeId from, const Hello& hello) {
  for (LinkId lid : topology_.incident(from)) {
    const Link& l = topology_.link(lid);
    const NodeId to = l.other(from);
    if (!l.up() || !nodes_[idx(to)]->olsr) continue;
    sim_.schedule(l.delay + serialization(kHelloSize, l.capacity_bps), to, EventKind::Delivery,
                  [this, lid, to, hello] {
                    if (topology_.link(lid).up()) nodes_[idx(to)]->olsr->process_hello(hello);
                  });
  }
}

void Network::send_lsas(NodeId from, std::optional<NodeId> to, std::optional<NodeId> except, std::vector<Lsa> lsas,
                        bool sync_request) {
  auto shared = std::make_shared<const std::vector<Lsa>>(std::move(lsas));
  const auto bytes = static_cast<std::uint32_t>(32 + 48 * shared->size());
  for (LinkId lid : topology_.incident(from)) {
    const Link& l = topology_.link(lid);
    const NodeId v = l.other(from);
    if (!l.up() || !nodes_[idx(v)]->olsr) continue;
    if (to && v != *to) continue;
    if (except && v == *except) continue;
    sim_.schedule(l.delay + serialization(bytes, l.capacity_bps), v, EventKind::Delivery,
                  [this, lid, from, v, shared, sync_request] {
                    if (topology_.link(lid).up()) nodes_[idx(v)]->olsr->process_lsas(from, *shared, sync_request);
                  });
  }
}

void Network::routes_changed(NodeId node, const RoutingTable& before, const RoutingTable& after) {
  nlohmann::json added = nlohmann::json::object(), removed = nlohmann::json::array(),
                 changed = nlohmann::json::object();
  for (const auto& [p, r] : after.entries()) {
    auto it = before.entries().find(p);
    if (it == before.entries().end()) added[p.to_string()] = route_json(topology_, r);
    else if (!(it->second == r)) changed[p.to_string()] = route_json(topology_, r);
  }
  for (const auto& [p, r] : before.entries()) {
    if (!after.entries().contains(p)) removed.push_back(p.to_string());
  }
  record(RecordKind::OlsrRouteChange,
         {{"node", name(node)}, {"added", added}, {"removed", removed}, {"changed", changed}});
  if (auto* e = eftm(node)) e->on_routes_changed();
  mark_dirty();
}

// ---- packet plane ----

void Network::originate(NodeId node, Packet p) {
  const Node& n = topology_.node(node);
  switch (n.kind) {
    case NodeKind::Wmr:
      forward_at_wmr(node, p);
      break;
    case NodeKind::Controller: {
      if (controller_at(p.dst) && p.dst != n.main_address()) ++c2c_messages_;
      auto route = nodes_[idx(node)]->olsr->routes().lookup(p.dst);
      if (!route || !route->second.next_hop) {
        drop(node, p, "no route");
        return;
      }
      transmit(node, *route->second.next_hop, std::move(p));
      break;
    }
    case NodeKind::Host: {
      const auto links = topology_.incident(node);
      if (links.empty()) {
        drop(node, p, "host not attached");
        return;
      }
      transmit(node, topology_.link(links.front()).other(node), std::move(p));
      break;
    }
  }
}

void Network::transmit(NodeId from, NodeId to, Packet p) {
  auto lid = topology_.link_between(from, to);
  if (!lid) {
    drop(from, p, "no link to " + name(to));
    return;
  }
  const Link& l = topology_.link(*lid);
  if (!l.up()) {
    drop(from, p, "link down");
    return;
  }
  const Duration delay = l.delay + serialization(p.size, l.capacity_bps);
  sim_.schedule(delay, to, EventKind::Delivery, [this, from, to, link = *lid, p = std::move(p)] {
    if (!topology_.link(link).up()) {
      drop(from, p, "link down");
      return;
    }
    receive(to, from, p);
  });
}

void Network::receive(NodeId node, NodeId, const Packet& p) {
  const Node& n = topology_.node(node);
  switch (n.kind) {
    case NodeKind::Wmr:
      forward_at_wmr(node, p);
      break;
    case NodeKind::Controller:
      if (p.dst == n.main_address()) deliver_to_controller(node, p);
      else originate(node, p);
      break;
    case NodeKind::Host:
      if (p.dst == n.main_address()) deliver_to_host(node, p);
      else drop(node, p, "not addressed to host");
      break;
  }
}

void Network::forward_at_wmr(NodeId wmr, const Packet& p) {
  auto& agent = *nodes_[idx(wmr)]->wmr;
  const Disposition d =
      agent.flow_switch().forward(p, nodes_[idx(wmr)]->olsr->routes(), agent.eftm().established(), sim_.now());
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, SentTo>) transmit(wmr, x.next_hop, p);
        else if constexpr (std::is_same_v<T, DeliveredLocal>) deliver_local(wmr, p);
        else if constexpr (std::is_same_v<T, PacketIn>) packet_in(wmr, p);
        else drop(wmr, p, x.reason);
      },
      d);
}

std::optional<NodeId> Network::attached_host(NodeId wmr, Address a) const {
  auto owner = topology_.owner_of(a);
  if (!owner || *owner == wmr) return std::nullopt;
  if (!topology_.link_between(wmr, *owner)) return std::nullopt;
  const NodeKind kind = topology_.node(*owner).kind;
  if (kind == NodeKind::Wmr) return std::nullopt;
  return owner;
}

void Network::deliver_local(NodeId wmr, const Packet& p) {
  const Node& n = topology_.node(wmr);
  if (n.owns(p.dst)) {
    deliver_to_wmr(wmr, p);
    return;
  }
  if (auto host = attached_host(wmr, p.dst)) {
    transmit(wmr, *host, p);
    return;
  }
  const bool in_own_access = std::ranges::any_of(n.access_prefixes(), [&](const Prefix& a) { return a.contains(p.dst); });
  if (n.gateway && !in_own_access && !config_.control_subnet.contains(p.dst)) return;  // handed to the Internet
  drop(wmr, p, "no local destination");
}

void Network::deliver_to_wmr(NodeId wmr, const Packet& p) {
  if (!p.msg) return;
  auto& agent = *nodes_[idx(wmr)]->wmr;
  Eftm& e = agent.eftm();
  const MessageBody& body = p.msg->body;
  if (std::holds_alternative<ProbeAck>(body) || std::holds_alternative<OfHelloAck>(body) ||
      std::holds_alternative<EchoReply>(body)) {
    e.on_message(p.src, body);
  } else if (const auto* mod = std::get_if<FlowMod>(&body)) {
    if (e.master() != p.src) {
      log_rule_event(wmr, "flow_mod_rejected", {{"from", p.src.to_string()}, {"rule", describe(mod->rule)}});
      return;
    }
    agent.flow_switch().table().install(mod->rule, sim_.now());
    log_rule_event(wmr, "install", {{"from", p.src.to_string()}, {"rule", describe(mod->rule)}});
    mark_dirty();
    release_buffered(wmr);
  } else if (const auto* flush = std::get_if<FlushRules>(&body)) {
    if (e.master() != p.src) {
      log_rule_event(wmr, "flush_rejected", {{"from", p.src.to_string()}});
      return;
    }
    const std::size_t n = agent.flow_switch().table().flush(flush->filter);
    log_rule_event(wmr, "flush", {{"from", p.src.to_string()}, {"removed", n}});
    mark_dirty();
  } else if (const auto* req = std::get_if<TopologyRequest>(&body)) {
    send_control_from_wmr(wmr, p.src, TopologyReply{req->request_id, wmr, nodes_[idx(wmr)]->olsr->view()});
  } else if (std::holds_alternative<PingRequest>(body)) {
    reply_ping(wmr, p);
  }
}

void Network::deliver_to_controller(NodeId ctrl, const Packet& p) {
  if (!p.msg) return;
  if (std::holds_alternative<PingRequest>(p.msg->body)) {
    reply_ping(ctrl, p);
    return;
  }
  nodes_[idx(ctrl)]->ctrl->logic().on_message(p.msg->body);
}

void Network::deliver_to_host(NodeId host, const Packet& p) {
  if (!p.msg) return;
  if (std::holds_alternative<PingRequest>(p.msg->body)) {
    reply_ping(host, p);
  } else if (const auto* reply = std::get_if<PingReply>(&p.msg->body)) {
    record(RecordKind::PingResult, {{"probe", reply->probe},
                                    {"seq", reply->seq},
                                    {"src", name(host)},
                                    {"dst", p.src.to_string()},
                                    {"sent_us", to_us(reply->sent_at)},
                                    {"rtt_s", to_seconds(sim_.now() - reply->sent_at)}});
  }
}

void Network::reply_ping(NodeId node, const Packet& request) {
  const auto& req = std::get<PingRequest>(request.msg->body);
  originate(node, make_packet(request.dst, request.src, PacketKind::Ping, kPingSize,
                              PingReply{req.probe, req.seq, req.sent_at}));
}

void Network::send_probe(std::size_t index, std::uint64_t seq) {
  const auto& probe = config_.probes[index];
  if (probe.stop && sim_.now() >= *probe.stop) return;
  const NodeId src = node_id(probe.src);
  originate(src, make_packet(topology_.node(src).main_address(), probe.dst, PacketKind::Ping, kPingSize,
                             PingRequest{probe.name, seq, sim_.now()}));
  sim_.schedule(probe.interval, src, EventKind::Scenario, [this, index, seq] { send_probe(index, seq + 1); });
}

void Network::packet_in(NodeId wmr, const Packet& p) {
  Eftm& e = nodes_[idx(wmr)]->wmr->eftm();
  const auto master = e.master();
  if (!master) {
    drop(wmr, p, "no controller");
    return;
  }
  const std::uint64_t id = ++next_buffer_id_;
  buffers_[wmr].push_back(Buffered{id, p});
  ++packet_ins_sent_;
  send_control_from_wmr(wmr, *master, PacketInMessage{wmr, id, p});
  sim_.schedule(config_.packet_in_buffer, wmr, EventKind::Timer, [this, wmr, id] {
    auto& buf = buffers_[wmr];
    auto it = std::find_if(buf.begin(), buf.end(), [id](const Buffered& b) { return b.id == id; });
    if (it == buf.end()) return;
    const Packet p = it->packet;
    buf.erase(it);
    drop(wmr, p, "packet-in buffer timeout");
  });
}

void Network::release_buffered(NodeId wmr) {
  auto it = buffers_.find(wmr);
  if (it == buffers_.end()) return;
  const FlowTable& table = nodes_[idx(wmr)]->wmr->flow_switch().table();
  std::vector<Packet> ready;
  std::erase_if(it->second, [&](const Buffered& b) {
    if (!table.peek(b.packet, sim_.now())) return false;
    ready.push_back(b.packet);
    return true;
  });
  for (const auto& p : ready) forward_at_wmr(wmr, p);
}

void Network::drop(NodeId node, const Packet& p, const std::string& reason) {
  record(RecordKind::PacketDrop, {{"node", node == kNoNode ? std::string("-") : name(node)},
                                  {"src", p.src.to_string()},
                                  {"dst", p.dst.to_string()},
                                  {"kind", to_string(p.kind)},
                                  {"flow", p.flow_id},
                                  {"reason", reason}});
}

bool Network::send_control_from_wmr(NodeId wmr, Address dst, MessageBody body) {
  const Node& n = topology_.node(wmr);
  auto route = nodes_[idx(wmr)]->olsr->routes().lookup(dst);
  if (!route || !route->second.next_hop) return false;
  const auto size = message_size(body);
  Packet p = make_packet(n.main_address(), dst, PacketKind::ControlChannel, size, std::move(body));
  forward_at_wmr(wmr, p);
  return true;
}

void Network::send_from_controller(NodeId ctrl, NodeId wmr, MessageBody body) {
  const auto size = message_size(body);
  originate(ctrl, make_packet(topology_.node(ctrl).main_address(), topology_.node(wmr).main_address(),
                              PacketKind::ControlChannel, size, std::move(body)));
}

void Network::log_rule_event(NodeId wmr, const char* event, nlohmann::json extra) {
  extra["wmr"] = name(wmr);
  extra["event"] = event;
  extra["table"] = nodes_[idx(wmr)]->wmr->flow_switch().table().dump();
  record(RecordKind::RuleEvent, std::move(extra));
}

void Network::schedule_rule_sweep() {
  sim_.schedule(config_.rule_sweep_interval, kNoNode, EventKind::Timer, [this] {
    for (const Node& n : topology_.nodes()) {
      auto* sw = flow_switch(n.id);
      if (!sw) continue;
      const auto expired = sw->table().expire(sim_.now());
      if (expired.empty()) continue;
      nlohmann::json rules = nlohmann::json::array();
      for (const auto& r : expired) rules.push_back(describe(r));
      log_rule_event(n.id, "expire", {{"rules", rules}});
      mark_dirty();
    }
    schedule_rule_sweep();
  });
}

// ---- fluid traffic ----

void Network::start_flow(const std::string& flow) {
  for (auto& f : flows_) {
    if (f->spec.name != flow) continue;
    f->active = true;
    f->path_ok = false;
    f->restored_at.reset();
    mark_dirty();
    return;
  }
  throw ConfigError("unknown flow '" + flow + "'");
}

void Network::stop_flow(const std::string& flow) {
  for (auto& f : flows_) {
    if (f->spec.name != flow) continue;
    f->active = false;
    f->rate = 0;
    mark_dirty();
    return;
  }
  throw ConfigError("unknown flow '" + flow + "'");
}

double Network::flow_rate(const std::string& flow) const {
  for (const auto& f : flows_) {
    if (f->spec.name == flow) return f->rate;
  }
  throw ConfigError("unknown flow '" + flow + "'");
}

void Network::schedule_sample() {
  if (flows_.empty()) return;
  sim_.schedule(config_.sample_interval, kNoNode, EventKind::Timer, [this] {
    evaluate_flows();
    for (const auto& f : flows_) {
      if (!f->active) continue;
      nlohmann::json path = nlohmann::json::array();
      for (const auto& [link, to] : f->hops) path.push_back(name(to));
      record(RecordKind::ThroughputSample, {{"flow", f->spec.name}, {"rate_bps", f->rate}, {"path", path}});
    }
    schedule_sample();
  });
}

void Network::mark_dirty() {
  if (eval_scheduled_ || flows_.empty()) return;
  eval_scheduled_ = true;
  sim_.schedule(Duration::zero(), kNoNode, EventKind::Timer, [this] {
    eval_scheduled_ = false;
    evaluate_flows();
  });
}

bool Network::trace_flow(FlowRuntime& f, std::vector<std::pair<LinkId, NodeId>>& hops) {
  hops.clear();
  Packet p;
  p.src = f.src_addr;
  p.dst = f.dst_addr;
  p.size = kDataSize;
  p.kind = PacketKind::Data;
  p.flow_id = f.spec.name;

  auto step = [&](NodeId from, NodeId to) {
    auto lid = topology_.link_between(from, to);
    if (!lid || !topology_.link(*lid).up()) return false;
    hops.emplace_back(*lid, to);
    return true;
  };

  const auto src_links = topology_.incident(f.src);
  if (src_links.empty()) return false;
  NodeId at = topology_.link(src_links.front()).other(f.src);
  if (!step(f.src, at)) return false;

  std::set<NodeId> visited;
  while (topology_.node(at).kind == NodeKind::Wmr) {
    if (!visited.insert(at).second) return false;  // forwarding loop
    auto& agent = *nodes_[idx(at)]->wmr;
    const Disposition d =
        agent.flow_switch().forward(p, nodes_[idx(at)]->olsr->routes(), agent.eftm().established(), sim_.now());
    if (const auto* sent = std::get_if<SentTo>(&d)) {
      if (!step(at, sent->next_hop)) return false;
      at = sent->next_hop;
    } else if (std::holds_alternative<DeliveredLocal>(d)) {
      auto host = attached_host(at, p.dst);
      return host == f.dst && step(at, f.dst);
    } else if (std::holds_alternative<PacketIn>(d)) {
      auto& last = f.last_packet_in[at];
      const bool limited = last != SimTime{} && sim_.now() - last < config_.packet_in_rate_limit;
      if (!limited) {
        last = sim_.now();
        packet_in(at, p);
      }
      return false;
    } else {
      return false;
    }
  }
  return at == f.dst;
}

void Network::evaluate_flows() {
  const SimTime now = sim_.now();
  std::vector<FlowRuntime*> ramped;
  for (auto& fp : flows_) {
    FlowRuntime& f = *fp;
    if (!f.active) {
      f.rate = 0;
      f.hops.clear();
      continue;
    }
    const bool ok = trace_flow(f, f.hops);
    if (ok && !f.path_ok) {
      f.restored_at = now;
      sim_.schedule(f.spec.loss_recovery_delay, kNoNode, EventKind::Timer, [this] { mark_dirty(); });
    }
    f.path_ok = ok;
    if (!ok) f.restored_at.reset();
    f.rate = 0;
    if (ok && now >= *f.restored_at + f.spec.loss_recovery_delay) ramped.push_back(&f);
  }

  // Max-min fair water filling; each link direction is a separate resource.
  using Resource = std::pair<LinkId, NodeId>;
  std::map<Resource, double> remaining;
  std::map<FlowRuntime*, std::vector<Resource>> uses;
  for (FlowRuntime* f : ramped) {
    for (const auto& hop : f->hops) {
      remaining.try_emplace(hop, topology_.link(hop.first).capacity_bps);
      uses[f].push_back(hop);
    }
  }
  std::vector<FlowRuntime*> open = ramped;
  while (!open.empty()) {
    std::map<Resource, int> users;
    for (FlowRuntime* f : open) {
      for (const auto& r : uses[f]) ++users[r];
    }
    double share = std::numeric_limits<double>::infinity();
    for (const auto& [r, n] : users) share = std::min(share, remaining[r] / n);
    for (FlowRuntime* f : open) share = std::min(share, f->spec.demand_bps - f->rate);
    if (!std::isfinite(share)) break;
    for (FlowRuntime* f : open) {
      f->rate += share;
      for (const auto& r : uses[f]) remaining[r] -= share;
    }
    std::erase_if(open, [&](FlowRuntime* f) {
      if (f->rate >= f->spec.demand_bps) return true;
      return std::ranges::any_of(uses[f], [&](const Resource& r) { return remaining[r] <= 1e-9; });
    });
  }
}

std::uint64_t Network::single_master_violations() const {
  std::uint64_t total = 0;
  for (const auto& rt : nodes_) {
    if (rt->wmr) total += rt->wmr->eftm().single_master_violations();
  }
  return total;
}

}  // namespace wmsdn
