#include <doctest.h>

#include "support.hpp"

using namespace wmsdn;

namespace {

const Address kSelf(10, 0, 0, 1);
const Address kCtrl1(10, 0, 255, 1), kCtrl2(10, 0, 255, 2);
const NodeId kNext{7};

struct FakeController {
  bool answers = true;
  bool refuses_hello = false;
};

// A WMR with hand-driven routing state and controllers that answer after a
// fixed round-trip time.
class FakeEnv final : public EftmEnvironment {
 public:
  explicit FakeEnv(Duration rtt = std::chrono::milliseconds(10)) : rtt_(rtt), sw_(NodeId{0}, kSelf) {}

  Simulator& simulator() override { return sim; }
  std::vector<HnaEntry> hna() const override { return hna_; }
  const RoutingTable& routes() const override { return routes_; }
  FlowTable& flow_table() override { return sw_.table(); }
  bool send_control(Address dst, MessageBody body) override {
    const auto r = routes_.lookup(dst);
    if (!r) return false;
    sent.emplace_back(sim.now(), dst, body);
    auto it = controllers.find(dst);
    if (it == controllers.end() || !it->second.answers) return true;
    std::optional<MessageBody> reply;
    if (const auto* s = std::get_if<ProbeSyn>(&body)) reply = ProbeAck{s->probe_id};
    else if (const auto* h = std::get_if<OfHello>(&body); h && !it->second.refuses_hello) reply = OfHelloAck{h->conn_id};
    else if (const auto* e = std::get_if<EchoRequest>(&body)) reply = EchoReply{e->conn_id};
    if (reply) {
      sim.schedule(rtt_, NodeId{0}, EventKind::Delivery, [this, dst, m = *reply] {
        if (controllers.contains(dst) && controllers[dst].answers) eftm->on_message(dst, m);
      });
    }
    return true;
  }
  void record(RecordKind kind, nlohmann::json payload) override { log.append(sim.now(), kind, std::move(payload)); }
  void flow_table_changed(const std::string&) override {}
  void forwarding_state_changed() override {}
  void handover(HandoverPhase phase, Address from, Address to) override {
    handovers.push_back({phase, from, to, sw_.table().dump()});
  }

  void announce(Address ctrl, bool with_route = true) {
    hna_.push_back(HnaEntry{NodeId{9}, Prefix::host(ctrl), kTimeZero + std::chrono::hours(1)});
    if (with_route) routes_.set(Prefix::host(ctrl), Route{kNext, 3, NodeId{9}});
    controllers.try_emplace(ctrl);
    if (eftm) eftm->on_routes_changed();
  }
  void withdraw(Address ctrl) {
    std::erase_if(hna_, [&](const HnaEntry& e) { return e.prefix == Prefix::host(ctrl); });
    auto entries = routes_.entries();
    routes_ = RoutingTable{};
    for (const auto& [p, r] : entries) {
      if (p != Prefix::host(ctrl)) routes_.set(p, r);
    }
  }
  void add_route(const char* prefix) { routes_.set(Prefix::parse(prefix), Route{kNext, 2, NodeId{9}}); }

  Disposition forward(const char* dst, bool connected = false) {
    Packet p;
    p.src = Address(192, 168, 1, 10);
    p.dst = Address::parse(dst);
    return sw_.forward(p, routes_, connected, sim.now());
  }

  std::vector<MetricRecord> events(const char* name) const {
    std::vector<MetricRecord> out;
    for (const auto& r : log.records()) {
      if (r.kind == RecordKind::EftmTransition && r.payload.value("event", "") == name) out.push_back(r);
    }
    return out;
  }

  struct HandoverSeen {
    HandoverPhase phase;
    Address from, to;
    std::vector<std::string> table;
  };

  Simulator sim;
  Eftm* eftm = nullptr;
  std::map<Address, FakeController> controllers;
  std::vector<std::tuple<SimTime, Address, MessageBody>> sent;
  std::vector<HandoverSeen> handovers;
  MetricLog log;

 private:
  Duration rtt_;
  std::vector<HnaEntry> hna_;
  RoutingTable routes_;
  FlowSwitch sw_;
};

EftmConfig grid_config() {
  EftmConfig c;
  c.randomize_poll_phase = false;
  return c;
}

struct Harness {
  explicit Harness(EftmConfig cfg = grid_config(), Duration rtt = std::chrono::milliseconds(10))
      : env(rtt), rng(1, "eftm"), eftm(NodeId{0}, "wmr1", kSelf, std::move(cfg), rng, env) {
    env.eftm = &eftm;
  }
  FakeEnv env;
  Rng rng;
  Eftm eftm;
};

bool connected_to(const Eftm& e, Address a) {
  const auto* c = std::get_if<Connected>(&e.mode());
  return c && c->master == a && e.master() == a;
}

FlowRule tagged(int i, Address ctrl) {
  FlowRule r;
  r.priority = 100;
  r.match.dst = Prefix(Address(192, 168, static_cast<std::uint8_t>(10 + i), 0), 24);
  r.action = ForwardTo{kNext};
  r.origin = ControllerOrigin{ctrl};
  r.tag = "t" + std::to_string(i);
  return r;
}

}  // namespace

TEST_SUITE("eftm") {
  TEST_CASE("controller discovery") {
    EftmConfig cfg;
    const auto expiry = at_seconds(100);
    std::vector<HnaEntry> hna{{NodeId{1}, Prefix::host(kCtrl2), expiry},
                              {NodeId{2}, Prefix::host(kCtrl1), expiry},
                              {NodeId{3}, Prefix::parse("10.0.7.9/32"), expiry},
                              {NodeId{4}, Prefix::parse("10.0.255.0/24"), expiry},
                              {NodeId{5}, Prefix::host(kCtrl1), expiry}};
    const auto found = discover_controllers(hna, cfg);
    REQUIRE(found.size() == 2);
    CHECK(found[0].addr == kCtrl1);
    CHECK(found[0].priority_rank == 0);
    CHECK(found[1].addr == kCtrl2);
    CHECK(found[1].priority_rank == 1);
    CHECK(discover_controllers({}, cfg).empty());

    cfg.static_priority = {kCtrl2};
    const auto ranked = discover_controllers(hna, cfg);
    CHECK(ranked[0].addr == kCtrl2);
    CHECK(higher_priority(kCtrl2, kCtrl1, cfg));
    CHECK_FALSE(higher_priority(kCtrl1, kCtrl1, cfg));
  }

  TEST_CASE("configuration validation") {
    EftmConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.controller_range = Prefix::parse("10.1.255.0/24");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = EftmConfig{};
    cfg.poll_period = Duration::zero();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = EftmConfig{};
    cfg.static_priority = {Address(10, 0, 0, 9)};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("connect delay follows the poll grid") {
    const Duration rtt = std::chrono::milliseconds(10);
    Harness h(grid_config(), rtt);
    h.eftm.start();
    h.env.sim.schedule_at(at_seconds(4.2), NodeId{0}, EventKind::Timer, [&] { h.env.announce(kCtrl1); });
    h.env.sim.run_until(at_seconds(10));
    REQUIRE(connected_to(h.eftm, kCtrl1));
    const auto opens = h.env.events("conn_open");
    REQUIRE(opens.size() == 1);
    CHECK(opens[0].time - at_seconds(4.2) == seconds(1.8) + 2 * rtt);
  }

  TEST_CASE("no controller leads to control-only emergency") {
    Harness h;
    h.eftm.start();
    h.env.add_route("192.168.2.0/24");
    h.env.sim.run_until(at_seconds(0.5));
    CHECK(h.eftm.mode() == EftmMode{Emergency{EmergencyPolicy::Kind::ControlOnly}});
    CHECK(std::holds_alternative<Dropped>(h.env.forward("192.168.2.10")));
    CHECK(h.env.forward("10.0.255.1") == Disposition{Dropped{"no route"}});
    h.env.add_route("10.0.0.0/16");
    CHECK(h.env.forward("10.0.0.6") == Disposition{SentTo{kNext}});
  }

  TEST_CASE("connecting leaves emergency and removes its rules") {
    Harness h;
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    REQUIRE(std::holds_alternative<Emergency>(h.eftm.mode()));
    REQUIRE_FALSE(h.env.flow_table().empty());
    h.env.announce(kCtrl2);
    h.env.sim.run_until(at_seconds(4));
    CHECK(connected_to(h.eftm, kCtrl2));
    CHECK(h.env.flow_table().empty());
  }

  TEST_CASE("allow-all emergency forwards along olsr routes") {
    EftmConfig cfg = grid_config();
    cfg.emergency_policy.kind = EmergencyPolicy::Kind::AllowAll;
    Harness h(cfg);
    h.env.add_route("0.0.0.0/0");
    h.env.add_route("192.168.2.0/24");
    h.env.add_route("10.0.0.6/32");
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    REQUIRE(std::holds_alternative<Emergency>(h.eftm.mode()));
    CHECK(h.env.forward("8.8.8.8") == Disposition{SentTo{kNext}});
    CHECK(h.env.forward("192.168.2.10") == Disposition{SentTo{kNext}});
    for (const auto& r : h.env.flow_table().rules()) {
      CHECK(std::holds_alternative<EftmOrigin>(r.origin));
      CHECK_FALSE(kDefaultControlSubnet.contains(r.match.dst) );
    }
    h.env.add_route("192.168.5.0/24");
    h.eftm.on_routes_changed();
    CHECK(h.env.forward("192.168.5.1") == Disposition{SentTo{kNext}});
  }

  TEST_CASE("selective emergency forwards only listed prefixes") {
    EftmConfig cfg = grid_config();
    cfg.emergency_policy.kind = EmergencyPolicy::Kind::Selective;
    cfg.emergency_policy.allowed = {Prefix::parse("192.168.2.0/24")};
    Harness h(cfg);
    h.env.add_route("0.0.0.0/0");
    h.env.add_route("192.168.2.0/24");
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    CHECK(h.env.forward("192.168.2.10") == Disposition{SentTo{kNext}});
    CHECK(std::holds_alternative<Dropped>(h.env.forward("8.8.8.8")));
  }

  TEST_CASE("emergency clears controller rules unless configured to keep them") {
    for (const bool clear : {true, false}) {
      EftmConfig cfg = grid_config();
      cfg.clear_controller_rules_in_emergency = clear;
      Harness h(cfg);
      h.env.flow_table().install(tagged(1, kCtrl1), kTimeZero);
      h.eftm.start();
      h.env.sim.run_until(at_seconds(1));
      REQUIRE(std::holds_alternative<Emergency>(h.eftm.mode()));
      const auto rules = h.env.flow_table().rules();
      const bool kept = std::any_of(rules.begin(), rules.end(), [](const FlowRule& r) { return r.tag == "t1"; });
      CHECK(kept == !clear);
    }
  }

  TEST_CASE("merge handover keeps every rule and closes before establishing") {
    Harness h;
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(2));
    REQUIRE(connected_to(h.eftm, kCtrl2));
    for (int i = 0; i < 5; ++i) h.env.flow_table().install(tagged(i, kCtrl2), at_seconds(2));
    const auto before = h.env.flow_table().dump();

    h.env.announce(kCtrl1);
    h.env.sim.run_until(at_seconds(4));
    CHECK(connected_to(h.eftm, kCtrl1));
    CHECK(h.env.flow_table().dump() == before);
    REQUIRE(h.env.handovers.size() == 2);
    CHECK(h.env.handovers[0].phase == HandoverPhase::BeforeClose);
    CHECK(h.env.handovers[1].phase == HandoverPhase::AfterEstablish);
    CHECK(h.env.handovers[0].table == h.env.handovers[1].table);

    std::vector<std::string> order;
    for (const auto& r : h.env.log.records()) {
      const std::string e = r.payload.value("event", "");
      if (e == "conn_close" || e == "conn_open") order.push_back(e + ":" + r.payload.value("controller", ""));
    }
    CHECK(order == std::vector<std::string>{"conn_open:10.0.255.2", "conn_close:10.0.255.2", "conn_open:10.0.255.1"});
    CHECK(h.eftm.single_master_violations() == 0);
    const auto ho = h.env.events("handover");
    REQUIRE(ho.size() == 1);
    CHECK(ho[0].payload["rules_unchanged"] == true);
  }

  TEST_CASE("handover to the current master is a no-op") {
    Harness h;
    h.env.announce(kCtrl1);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    REQUIRE(connected_to(h.eftm, kCtrl1));
    const auto sent = h.env.sent.size();
    h.eftm.hard_handover(kCtrl1);
    CHECK(h.env.sent.size() == sent);
    CHECK(connected_to(h.eftm, kCtrl1));
  }

  TEST_CASE("connected polls probe only strictly better controllers") {
    Harness h;
    h.env.announce(kCtrl1);
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    REQUIRE(connected_to(h.eftm, kCtrl1));
    h.env.sent.clear();
    h.env.sim.run_until(at_seconds(20));
    for (const auto& [t, dst, body] : h.env.sent) CHECK_FALSE(std::holds_alternative<ProbeSyn>(body));
  }

  TEST_CASE("refused handover stays with the current master") {
    Harness h;
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    REQUIRE(connected_to(h.eftm, kCtrl2));
    h.env.announce(kCtrl1);
    h.env.controllers[kCtrl1].refuses_hello = true;
    h.env.sim.run_until(at_seconds(5.5));
    CHECK(connected_to(h.eftm, kCtrl2));
    CHECK(h.env.events("connect_failed").size() == 1);
    h.env.controllers[kCtrl1].refuses_hello = false;
    h.env.sim.run_until(at_seconds(7));
    CHECK(connected_to(h.eftm, kCtrl1));
  }

  TEST_CASE("loss is detected within keepalive interval plus timeout") {
    for (double t1 : {5.0, 5.25, 5.5, 5.999}) {
      Harness h;
      h.env.announce(kCtrl1);
      h.eftm.start();
      h.env.sim.run_until(at_seconds(t1));
      REQUIRE(connected_to(h.eftm, kCtrl1));
      h.env.controllers[kCtrl1].answers = false;
      h.env.sim.run_until(at_seconds(t1 + 5));
      const auto closes = h.env.events("conn_close");
      REQUIRE(closes.size() == 1);
      CHECK(closes[0].payload["reason"] == "lost");
      CHECK(closes[0].time <= at_seconds(t1 + 1 + 2));
    }
  }

  TEST_CASE("a short outage inside one keepalive gap causes no transition") {
    Harness h;
    h.env.announce(kCtrl1);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(5.1));
    h.env.controllers[kCtrl1].answers = false;
    h.env.sim.run_until(at_seconds(5.9));
    h.env.controllers[kCtrl1].answers = true;
    const auto transitions = h.env.events("mode").size();
    h.env.sim.run_until(at_seconds(20));
    CHECK(h.env.events("mode").size() == transitions);
    CHECK(h.env.events("conn_close").empty());
  }

  TEST_CASE("loss with an alternative moves to it after the timeout") {
    Harness h;
    h.env.announce(kCtrl1);
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(10));
    REQUIRE(connected_to(h.eftm, kCtrl1));
    h.env.controllers[kCtrl1].answers = false;
    h.env.sim.run_until(at_seconds(20));
    CHECK(connected_to(h.eftm, kCtrl2));
    const auto lost = h.env.events("conn_close")[0].time;
    const auto open = h.env.events("conn_open").back().time;
    // Out-of-cycle probe of ctrl1 times out, then ctrl2 answers.
    CHECK(open - lost >= std::chrono::seconds(2));
    CHECK(open - lost <= std::chrono::milliseconds(2100));
    CHECK(h.eftm.single_master_violations() == 0);
  }

  TEST_CASE("loss with no alternative ends in emergency") {
    Harness h;
    h.env.announce(kCtrl1);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(10));
    h.env.controllers[kCtrl1].answers = false;
    h.env.sim.run_until(at_seconds(20));
    CHECK(std::holds_alternative<Emergency>(h.eftm.mode()));
    CHECK_FALSE(h.eftm.established());
  }

  TEST_CASE("a probe without a route fails immediately") {
    Harness h;
    h.env.announce(kCtrl1, false);
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(0.5));
    CHECK(connected_to(h.eftm, kCtrl2));
  }

  TEST_CASE("hysteresis delays a better controller") {
    EftmConfig cfg = grid_config();
    cfg.hysteresis_hold = std::chrono::seconds(10);
    Harness h(cfg);
    h.env.announce(kCtrl2);
    h.eftm.start();
    h.env.sim.run_until(at_seconds(1));
    h.env.announce(kCtrl1);
    h.env.sim.run_until(at_seconds(9.5));
    CHECK(connected_to(h.eftm, kCtrl2));
    h.env.sim.run_until(at_seconds(13));
    CHECK(connected_to(h.eftm, kCtrl1));
  }

  TEST_CASE("every transition is logged with old and new mode") {
    Harness h;
    h.eftm.start();
    h.env.sim.schedule_at(at_seconds(2), NodeId{0}, EventKind::Timer, [&] { h.env.announce(kCtrl1); });
    h.env.sim.run_until(at_seconds(5));
    std::vector<std::string> seq;
    for (const auto& r : h.env.events("mode")) {
      CHECK(r.payload["wmr"] == "wmr1");
      seq.push_back(r.payload["old_mode"].get<std::string>() + ">" + r.payload["new_mode"].get<std::string>());
    }
    CHECK(seq == std::vector<std::string>{"Disconnected>Emergency(control_only)",
                                          "Emergency(control_only)>Connecting(10.0.255.1)",
                                          "Connecting(10.0.255.1)>Connected(10.0.255.1)"});
  }
}
