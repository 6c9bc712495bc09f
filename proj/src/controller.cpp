#include "wmsdn/controller.hpp"

#include <algorithm>
#include <tuple>
#include <utility>

namespace wmsdn {

ControllerLogic::ControllerLogic(NodeId self, std::string name, ControllerConfig config, ControllerEnvironment& env)
    : self_(self), name_(std::move(name)), config_(std::move(config)), env_(env) {}

void ControllerLogic::start() {
  schedule_refresh();
  schedule_sweep();
}

void ControllerLogic::schedule_refresh() {
  env_.simulator().schedule(config_.refresh_interval, self_, EventKind::Timer, [this] {
    refresh_topology();
    schedule_refresh();
  });
}

void ControllerLogic::schedule_sweep() {
  env_.simulator().schedule(std::chrono::seconds(1), self_, EventKind::Timer, [this] {
    sweep_switches();
    schedule_sweep();
  });
}

void ControllerLogic::sweep_switches() {
  const SimTime now = env_.simulator().now();
  for (auto it = switches_.begin(); it != switches_.end();) {
    if (now - it->second.last_seen > config_.switch_timeout) {
      log_action("switch_timeout", {{"wmr", env_.node_name(it->first)}});
      it = switches_.erase(it);
    } else {
      ++it;
    }
  }
}

void ControllerLogic::on_message(const MessageBody& body) {
  const SimTime now = env_.simulator().now();
  auto touch = [&](NodeId wmr) {
    if (auto it = switches_.find(wmr); it != switches_.end()) it->second.last_seen = now;
  };
  if (const auto* syn = std::get_if<ProbeSyn>(&body)) {
    touch(syn->wmr);
    env_.send_to_switch(syn->wmr, ProbeAck{syn->probe_id});
  } else if (const auto* hello = std::get_if<OfHello>(&body)) {
    on_switch_connected(hello->wmr, hello->conn_id);
  } else if (const auto* echo = std::get_if<EchoRequest>(&body)) {
    auto it = switches_.find(echo->wmr);
    if (it == switches_.end() || it->second.conn_id != echo->conn_id) return;
    it->second.last_seen = now;
    env_.send_to_switch(echo->wmr, EchoReply{echo->conn_id});
  } else if (const auto* close = std::get_if<CloseConnection>(&body)) {
    auto it = switches_.find(close->wmr);
    if (it != switches_.end() && it->second.conn_id == close->conn_id) {
      switches_.erase(it);
      log_action("switch_disconnected", {{"wmr", env_.node_name(close->wmr)}, {"conn_id", close->conn_id}});
    }
  } else if (const auto* pin = std::get_if<PacketInMessage>(&body)) {
    touch(pin->wmr);
    on_packet_in(pin->wmr, pin->packet);
  } else if (const auto* reply = std::get_if<TopologyReply>(&body)) {
    on_topology_reply(*reply);
  }
}

void ControllerLogic::on_switch_connected(NodeId wmr, std::uint64_t conn_id) {
  const SimTime now = env_.simulator().now();
  auto it = switches_.find(wmr);
  const bool known = it != switches_.end() && it->second.conn_id == conn_id;
  switches_[wmr] = SwitchSession{conn_id, known ? it->second.connected_at : now, now};
  env_.send_to_switch(wmr, OfHelloAck{conn_id});
  if (known) return;
  log_action("switch_connected", {{"wmr", env_.node_name(wmr)}, {"conn_id", conn_id}});
  if (config_.flush_on_connect) {
    env_.send_to_switch(wmr, FlushRules{OriginFilter::any_controller()});
    log_action("flush", {{"wmr", env_.node_name(wmr)}, {"filter", "any_controller"}});
  }
}

void ControllerLogic::on_packet_in(NodeId wmr, const Packet& p) {
  if (!switches_.contains(wmr)) {
    log_action("packet_in_ignored", {{"wmr", env_.node_name(wmr)}, {"dst", p.dst.to_string()}});
    return;
  }
  ++packet_ins_;
  pending_.push_back(PendingPacketIn{wmr, p});
  if (!outstanding_) request_topology();
}

void ControllerLogic::refresh_topology() {
  if (!outstanding_) request_topology();
}

void ControllerLogic::request_topology() {
  const std::uint64_t id = ++next_request_;
  outstanding_ = id;
  env_.send_to_switch(config_.attached_wmr, TopologyRequest{id});
  request_timeout_ = env_.simulator().schedule(config_.topology_timeout, self_, EventKind::Timer,
                                               [this, id] { on_topology_timeout(id); });
}

void ControllerLogic::on_topology_reply(const TopologyReply& reply) {
  if (!outstanding_ || *outstanding_ != reply.request_id) return;
  env_.simulator().cancel(request_timeout_);
  outstanding_.reset();
  view_ = reply.view;
  view_at_ = env_.simulator().now();
  stale_ = false;
  serve_pending();
}

void ControllerLogic::on_topology_timeout(std::uint64_t request_id) {
  if (!outstanding_ || *outstanding_ != request_id) return;
  outstanding_.reset();
  stale_ = true;
  nlohmann::json age = nullptr;
  if (view_) age = to_seconds(env_.simulator().now() - view_at_);
  log_action("topology_stale", {{"age_s", age}});
  serve_pending();
}

void ControllerLogic::serve_pending() {
  auto batch = std::exchange(pending_, {});
  const SimTime now = env_.simulator().now();
  for (const auto& req : batch) {
    if (!view_) {
      log_action("packet_in_unserved", {{"wmr", env_.node_name(req.wmr)}, {"dst", req.packet.dst.to_string()}});
      continue;
    }
    const Plan plan = plan_for(req.wmr, req.packet.dst, *view_, now);
    std::vector<std::string> path;
    for (NodeId n : plan.path) path.push_back(env_.node_name(n));
    for (NodeId n : plan.skipped) {
      log_action("hop_not_connected", {{"wmr", env_.node_name(n)}, {"dst", req.packet.dst.to_string()}});
    }
    for (const auto& [wmr, rule] : plan.rules) env_.send_to_switch(wmr, FlowMod{rule});
    log_action(plan.drop ? "install_drop" : "install_path",
               {{"wmr", env_.node_name(req.wmr)},
                {"dst", req.packet.dst.to_string()},
                {"match", plan.matched ? plan.matched->to_string() : Prefix::host(req.packet.dst).to_string()},
                {"path", path},
                {"stale_view", stale_}});
  }
}

ControllerLogic::Plan ControllerLogic::plan_for(NodeId ingress, Address dst, const LinkStateView& view,
                                                SimTime now) const {
  Plan plan;
  const LinkGraph graph(view);
  const auto dist = graph.distances(ingress);

  // Longest matching HNA prefix; among its origins the nearest one.
  std::optional<std::tuple<int, int, Address, NodeId>> best;  // (-len, hops, addr, origin)
  std::optional<Prefix> best_prefix;
  auto consider = [&](NodeId origin, const Prefix& raw) {
    const Prefix p = raw.canonical();
    if (!p.contains(dst)) return;
    auto d = dist.find(origin);
    if (d == dist.end()) return;
    const auto key = std::tuple(-p.length(), d->second, graph.address_of(origin).value_or(Address{}), origin);
    if (!best || key < *best) {
      best = key;
      best_prefix = p;
    }
  };
  for (const auto& p : view.own_hna) consider(view.self, p);
  for (const auto& lsa : view.lsas) {
    for (const auto& p : lsa.hna) consider(lsa.origin, p);
  }

  if (!best) {
    plan.drop = true;
    FlowRule drop{config_.rule_priority, RuleMatch{Prefix::host(dst), std::nullopt}, DropAction{},
                  ControllerOrigin{config_.address}, Duration::zero(), config_.drop_hard_timeout, now, now, "drop"};
    if (switches_.contains(ingress)) plan.rules.emplace_back(ingress, drop);
    else plan.skipped.push_back(ingress);
    return plan;
  }
  plan.matched = best_prefix;
  const NodeId target = std::get<3>(*best);

  for (const auto& o : config_.path_overrides) {
    if (!o.dst.contains(dst)) continue;
    auto at = std::find(o.path.begin(), o.path.end(), ingress);
    if (at != o.path.end()) {
      plan.path.assign(at, o.path.end());
      break;
    }
  }
  if (plan.path.empty()) plan.path = graph.path(ingress, target);

  for (std::size_t i = plan.path.size(); i-- > 0;) {
    const NodeId hop = plan.path[i];
    if (!switches_.contains(hop)) {
      plan.skipped.push_back(hop);
      continue;
    }
    RuleAction action = i + 1 == plan.path.size() ? RuleAction{DeliverLocal{}} : RuleAction{ForwardTo{plan.path[i + 1]}};
    plan.rules.emplace_back(hop, FlowRule{config_.rule_priority, RuleMatch{*best_prefix, std::nullopt}, action,
                                          ControllerOrigin{config_.address}, config_.rule_idle_timeout,
                                          Duration::zero(), now, now, ""});
  }
  return plan;
}

void ControllerLogic::log_action(const char* action, nlohmann::json extra) {
  extra["controller"] = name_;
  extra["action"] = action;
  env_.record(RecordKind::ControllerAction, std::move(extra));
}

}  // namespace wmsdn
