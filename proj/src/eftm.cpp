#include "wmsdn/eftm.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

#include "wmsdn/topology.hpp"

namespace wmsdn {
namespace {

constexpr int kEmergencyDropPriority = 1;
constexpr int kEmergencyForwardPriority = 2;

std::tuple<std::size_t, Address> priority_key(Address a, const EftmConfig& config) {
  const auto& list = config.static_priority;
  auto it = std::find(list.begin(), list.end(), a);
  const std::size_t pos = it == list.end() ? std::numeric_limits<std::size_t>::max()
                                           : static_cast<std::size_t>(it - list.begin());
  return {pos, a};
}

}  // namespace

const char* to_string(EmergencyPolicy::Kind k) {
  switch (k) {
    case EmergencyPolicy::Kind::ControlOnly: return "control_only";
    case EmergencyPolicy::Kind::AllowAll: return "allow_all";
    case EmergencyPolicy::Kind::Selective: return "selective";
  }
  return "?";
}

void EftmConfig::validate() const {
  if (poll_period <= Duration::zero()) throw ConfigError("eftm.poll_period must be positive");
  if (connect_timeout <= Duration::zero()) throw ConfigError("eftm.connect_timeout must be positive");
  if (keepalive_enabled && keepalive_interval <= Duration::zero()) {
    throw ConfigError("eftm.keepalive_interval must be positive");
  }
  if (hysteresis_hold < Duration::zero()) throw ConfigError("eftm.hysteresis_hold must be nonnegative");
  if (!control_subnet.contains(controller_range)) {
    throw ConfigError("eftm.controller_range " + controller_range.to_string() + " is not inside the control subnet " +
                      control_subnet.to_string());
  }
  for (Address a : static_priority) {
    if (!controller_range.contains(a)) {
      throw ConfigError("eftm.static_priority entry " + a.to_string() + " outside the controller range");
    }
  }
}

bool higher_priority(Address a, Address b, const EftmConfig& config) {
  return priority_key(a, config) < priority_key(b, config);
}

std::vector<ControllerEntry> discover_controllers(std::span<const HnaEntry> hna, const EftmConfig& config,
                                                  const std::map<Address, SimTime>& first_seen) {
  std::vector<Address> found;
  for (const auto& e : hna) {
    if (e.prefix.length() != 32) continue;
    const Address a = e.prefix.network();
    if (!config.controller_range.contains(a)) continue;
    if (std::find(found.begin(), found.end(), a) == found.end()) found.push_back(a);
  }
  std::sort(found.begin(), found.end(),
            [&](Address x, Address y) { return priority_key(x, config) < priority_key(y, config); });
  std::vector<ControllerEntry> out;
  for (std::size_t i = 0; i < found.size(); ++i) {
    auto seen = first_seen.find(found[i]);
    out.push_back(ControllerEntry{found[i], static_cast<int>(i), seen == first_seen.end() ? SimTime{} : seen->second});
  }
  return out;
}

std::string describe(const EftmMode& m) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Disconnected>) return "Disconnected";
        else if constexpr (std::is_same_v<T, Connecting>) return "Connecting(" + x.target.to_string() + ")";
        else if constexpr (std::is_same_v<T, Connected>) return "Connected(" + x.master.to_string() + ")";
        else return std::string("Emergency(") + to_string(x.policy) + ")";
      },
      m);
}

Eftm::Eftm(NodeId wmr, std::string name, Address self_address, EftmConfig config, Rng& rng, EftmEnvironment& env)
    : wmr_(wmr), name_(std::move(name)), self_address_(self_address), config_(std::move(config)), rng_(rng), env_(env) {}

void Eftm::start() {
  const Duration phase = config_.randomize_poll_phase
                             ? seconds(rng_.uniform(0.0, to_seconds(config_.poll_period)))
                             : Duration::zero();
  schedule_periodic_poll(phase);
}

std::optional<Address> Eftm::master() const {
  if (!connection_) return std::nullopt;
  return connection_->controller;
}

void Eftm::schedule_periodic_poll(Duration delay) {
  env_.simulator().schedule(delay, wmr_, EventKind::Timer, [this] {
    schedule_periodic_poll(config_.poll_period);
    poll_tick(false);
  });
}

void Eftm::request_poll() {
  env_.simulator().schedule(Duration::zero(), wmr_, EventKind::Timer, [this] { poll_tick(true); });
}

std::vector<ControllerEntry> Eftm::discover_controllers() {
  const auto hna = env_.hna();
  const SimTime now = env_.simulator().now();
  auto entries = wmsdn::discover_controllers(hna, config_, first_seen_);
  for (auto& e : entries) {
    auto [it, inserted] = first_seen_.try_emplace(e.addr, now);
    e.discovered_at = it->second;
  }
  return entries;
}

void Eftm::poll_tick(bool out_of_cycle) {
  if (poll_.active || pending_) {
    if (out_of_cycle) repoll_ = true;
    return;
  }
  poll_ = PollRound{};
  poll_.active = true;
  const auto master = this->master();
  for (const auto& c : discover_controllers()) {
    if (master) {
      // While connected only strictly better controllers are probed; the
      // master itself is probed when keepalives are off.
      const bool better = higher_priority(c.addr, *master, config_);
      const bool liveness = !config_.keepalive_enabled && c.addr == *master;
      if (!better && !liveness) continue;
    }
    poll_.queue.push_back(c.addr);
  }
  try_next_candidate();
}

void Eftm::try_next_candidate() {
  while (poll_.next < poll_.queue.size()) {
    const Address candidate = poll_.queue[poll_.next++];
    if (master() && candidate == *master()) poll_.master_probed = true;
    const std::uint64_t id = ++next_probe_id_;
    if (!env_.send_control(candidate, ProbeSyn{wmr_, id})) continue;  // no route: immediate failure
    poll_.probing = candidate;
    poll_.probe_id = id;
    poll_.timeout = env_.simulator().schedule(config_.connect_timeout, wmr_, EventKind::Timer,
                                              [this] { on_probe_timeout(); });
    return;
  }
  finish_poll(std::nullopt);
}

void Eftm::on_probe_timeout() {
  poll_.timeout = EventHandle{};
  poll_.probing.reset();
  try_next_candidate();
}

void Eftm::finish_poll(std::optional<Address> accepted) {
  const bool master_probed = poll_.master_probed;
  poll_ = PollRound{};
  const SimTime now = env_.simulator().now();

  if (accepted) {
    if (connection_) {
      if (*accepted == connection_->controller) {
        connection_->last_reply = now;
      } else if (higher_priority(*accepted, connection_->controller, config_)) {
        const bool held = last_handover_ && now - *last_handover_ < config_.hysteresis_hold;
        if (!held) hard_handover(*accepted);
      }
    } else {
      begin_connect(*accepted);
    }
  } else if (connection_ && master_probed) {
    connection_lost();
  } else if (!connection_ && !pending_) {
    enter_emergency();
  }

  if (repoll_ && !poll_.active && !pending_) {
    repoll_ = false;
    request_poll();
  }
}

void Eftm::hard_handover(Address to) {
  if (connection_ && connection_->controller == to) return;
  if (pending_) return;
  begin_connect(to);
}

void Eftm::begin_connect(Address target) {
  const std::uint64_t conn_id = ++next_conn_id_;
  const bool handover = connection_.has_value();
  if (!env_.send_control(target, OfHello{wmr_, conn_id})) {
    log_event("connect_failed", {{"controller", target.to_string()}, {"reason", "no route"}});
    if (!connection_) request_poll();
    return;
  }
  PendingConnect p{target, conn_id, {}, handover};
  p.timeout = env_.simulator().schedule(config_.connect_timeout, wmr_, EventKind::Timer,
                                        [this] { on_connect_timeout(); });
  pending_ = p;
  if (!handover) set_mode(Connecting{target, env_.simulator().now() + config_.connect_timeout});
}

void Eftm::on_connect_timeout() {
  if (!pending_) return;
  const PendingConnect p = *pending_;
  pending_.reset();
  env_.send_control(p.target, CloseConnection{wmr_, p.conn_id});
  log_event("connect_failed", {{"controller", p.target.to_string()}, {"reason", "timeout"}});
  if (connection_) return;  // failed handover: stay with the current master
  if (emergency_rules_installed_) {
    set_mode(Emergency{config_.emergency_policy.kind});
  } else {
    set_mode(Disconnected{});
  }
  request_poll();
}

void Eftm::on_hello_ack(std::uint64_t conn_id) {
  if (!pending_ || pending_->conn_id != conn_id) return;
  const PendingConnect p = *pending_;
  env_.simulator().cancel(pending_->timeout);
  pending_.reset();

  std::optional<Address> from;
  std::vector<std::string> before;
  if (connection_) {
    from = connection_->controller;
    before = env_.flow_table().dump();
    env_.handover(HandoverPhase::BeforeClose, *from, p.target);
    close_connection("handover");
  }
  establish(p.target, conn_id);
  if (from) {
    ++handovers_;
    const auto after = env_.flow_table().dump();
    log_event("handover", {{"from", from->to_string()},
                           {"to", p.target.to_string()},
                           {"rules_before", before},
                           {"rules_after", after},
                           {"rules_unchanged", before == after}});
    env_.handover(HandoverPhase::AfterEstablish, *from, p.target);
  }
  if (repoll_ && !poll_.active) {
    repoll_ = false;
    request_poll();
  }
}

void Eftm::establish(Address controller, std::uint64_t conn_id) {
  const SimTime now = env_.simulator().now();
  if (connection_) {
    ++violations_;
    log_event("single_master_violation", {{"controller", controller.to_string()}});
  }
  connection_ = ControlConnection{wmr_, controller, conn_id, ConnectionStatus::Established, now, now};
  last_handover_ = now;
  log_event("conn_open", {{"controller", controller.to_string()}, {"conn_id", conn_id}});
  leave_emergency_rules();
  set_mode(Connected{controller});
  env_.forwarding_state_changed();
  if (config_.keepalive_enabled) {
    env_.simulator().cancel(keepalive_timer_);
    keepalive_timer_ = env_.simulator().schedule(config_.keepalive_interval, wmr_, EventKind::Timer,
                                                 [this] { keepalive_tick(); });
  }
}

void Eftm::close_connection(const char* reason) {
  if (!connection_) return;
  const ControlConnection c = *connection_;
  env_.send_control(c.controller, CloseConnection{wmr_, c.conn_id});
  connection_.reset();
  env_.simulator().cancel(keepalive_timer_);
  log_event("conn_close", {{"controller", c.controller.to_string()}, {"conn_id", c.conn_id}, {"reason", reason}});
  env_.forwarding_state_changed();
}

void Eftm::connection_lost() {
  close_connection("lost");
  set_mode(Disconnected{});
  request_poll();
}

void Eftm::keepalive_tick() {
  keepalive_timer_ = EventHandle{};
  if (!connection_) return;
  const SimTime now = env_.simulator().now();
  if (now - connection_->last_reply > config_.connect_timeout) {
    connection_lost();
    return;
  }
  env_.send_control(connection_->controller, EchoRequest{wmr_, connection_->conn_id});
  keepalive_timer_ = env_.simulator().schedule(config_.keepalive_interval, wmr_, EventKind::Timer,
                                               [this] { keepalive_tick(); });
}

void Eftm::on_message(Address from, const MessageBody& body) {
  if (const auto* ack = std::get_if<ProbeAck>(&body)) {
    if (poll_.active && poll_.probing && *poll_.probing == from && ack->probe_id == poll_.probe_id) {
      env_.simulator().cancel(poll_.timeout);
      finish_poll(from);
    }
  } else if (const auto* hello = std::get_if<OfHelloAck>(&body)) {
    if (pending_ && pending_->target == from) on_hello_ack(hello->conn_id);
  } else if (const auto* echo = std::get_if<EchoReply>(&body)) {
    if (connection_ && connection_->controller == from && connection_->conn_id == echo->conn_id) {
      connection_->last_reply = env_.simulator().now();
    }
  }
}

void Eftm::enter_emergency() {
  if (std::holds_alternative<Emergency>(mode_)) return;
  set_mode(Emergency{config_.emergency_policy.kind});
  apply_emergency_policy();
}

void Eftm::apply_emergency_policy() {
  FlowTable& table = env_.flow_table();
  const SimTime now = env_.simulator().now();
  std::size_t cleared = 0;
  if (config_.clear_controller_rules_in_emergency) cleared = table.flush(OriginFilter::any_controller());
  table.flush(OriginFilter::eftm());

  auto drop_all = [&] {
    table.install(FlowRule{kEmergencyDropPriority, RuleMatch{kDefaultRoute, std::nullopt}, DropAction{}, EftmOrigin{},
                           Duration::zero(), Duration::zero(), {}, {}, "emergency"},
                  now);
  };
  auto forward_rule = [&](const Prefix& match, const Route& route) {
    RuleAction action = route.next_hop ? RuleAction{ForwardTo{*route.next_hop}} : RuleAction{DeliverLocal{}};
    table.install(FlowRule{kEmergencyForwardPriority, RuleMatch{match, std::nullopt}, action, EftmOrigin{},
                           Duration::zero(), Duration::zero(), {}, {}, "emergency"},
                  now);
  };

  const auto& policy = config_.emergency_policy;
  switch (policy.kind) {
    case EmergencyPolicy::Kind::ControlOnly:
      drop_all();
      break;
    case EmergencyPolicy::Kind::AllowAll:
      for (const auto& [prefix, route] : env_.routes().entries()) {
        if (config_.control_subnet.contains(prefix.network()) && prefix.length() >= config_.control_subnet.length()) {
          continue;
        }
        forward_rule(prefix, route);
      }
      break;
    case EmergencyPolicy::Kind::Selective:
      drop_all();
      for (const auto& allowed : policy.allowed) {
        if (auto route = env_.routes().lookup(allowed.network())) forward_rule(allowed.canonical(), route->second);
      }
      break;
  }
  emergency_rules_installed_ = true;
  log_event("emergency_policy", {{"policy", to_string(policy.kind)}, {"cleared_controller_rules", cleared},
                                 {"rules", table.dump()}});
  env_.flow_table_changed("emergency");
}

void Eftm::leave_emergency_rules() {
  if (!emergency_rules_installed_) return;
  emergency_rules_installed_ = false;
  env_.flow_table().flush(OriginFilter::eftm());
  env_.flow_table_changed("leave_emergency");
}

void Eftm::on_routes_changed() {
  if (!std::holds_alternative<Emergency>(mode_)) return;
  if (config_.emergency_policy.kind == EmergencyPolicy::Kind::ControlOnly) return;
  apply_emergency_policy();
}

void Eftm::set_mode(EftmMode next) {
  if (next == mode_) return;
  nlohmann::json payload{{"wmr", name_},
                         {"event", "mode"},
                         {"old_mode", describe(mode_)},
                         {"new_mode", describe(next)},
                         {"established", established_count()}};
  if (const auto* c = std::get_if<Connected>(&next)) payload["controller"] = c->master.to_string();
  else if (const auto* c2 = std::get_if<Connecting>(&next)) payload["controller"] = c2->target.to_string();
  else payload["controller"] = nullptr;
  mode_ = std::move(next);
  env_.record(RecordKind::EftmTransition, std::move(payload));
  env_.forwarding_state_changed();
}

void Eftm::log_event(const char* event, nlohmann::json extra) {
  extra["wmr"] = name_;
  extra["event"] = event;
  extra["established"] = established_count();
  env_.record(RecordKind::EftmTransition, std::move(extra));
}

}  // namespace wmsdn
