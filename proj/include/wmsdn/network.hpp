#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wmsdn/controller.hpp"
#include "wmsdn/eftm.hpp"
#include "wmsdn/flow_table.hpp"
#include "wmsdn/metric_log.hpp"
#include "wmsdn/olsr.hpp"
#include "wmsdn/simulator.hpp"
#include "wmsdn/topology.hpp"
#include "wmsdn/traffic_metrics.hpp"

namespace wmsdn {

enum class ActionKind { LinkDown, LinkUp, StartFlow, StopFlow };

const char* to_string(ActionKind a);

struct ScenarioEvent {
  SimTime at{};
  ActionKind action = ActionKind::LinkDown;
  std::string target;  // link or flow name
};

struct NetworkConfig {
  Topology topology;
  Prefix control_subnet = kDefaultControlSubnet;
  OlsrConfig olsr;
  EftmConfig eftm;
  std::map<NodeId, ControllerConfig> controllers;
  std::vector<PingProbe> probes;
  std::vector<BulkFlow> flows;
  std::vector<ScenarioEvent> events;
  Duration sample_interval = std::chrono::milliseconds(100);
  Duration packet_in_buffer = std::chrono::seconds(1);
  Duration packet_in_rate_limit = std::chrono::seconds(1);
  Duration rule_sweep_interval = std::chrono::seconds(1);
};

// One simulated wmSDN: every node's agents, the links between them and the
// traffic generators, driven by a single Simulator.
class Network final : private OlsrTransport {
 public:
  Network(NetworkConfig config, std::uint64_t seed);
  ~Network() override;

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // Starts every agent and schedules the scenario events. Call once.
  void start();
  void run_until(SimTime end) { sim_.run_until(end); }

  Simulator& simulator() { return sim_; }
  const Topology& topology() const { return topology_; }
  const NetworkConfig& config() const { return config_; }
  const MetricLog& log() const { return log_; }
  const Observations& observations() const { return online_; }

  NodeId node_id(std::string_view name) const;
  Eftm* eftm(NodeId n);
  OlsrAgent* olsr(NodeId n);
  FlowSwitch* flow_switch(NodeId n);
  ControllerLogic* controller(NodeId n);
  // Controller node announcing `a`, if any.
  std::optional<NodeId> controller_at(Address a) const;

  void set_link_state(LinkId link, LinkState state);
  void start_flow(const std::string& name);
  void stop_flow(const std::string& name);
  // Current fluid rate of a flow in bits/s.
  double flow_rate(const std::string& name) const;

  std::uint64_t single_master_violations() const;
  std::uint64_t controller_to_controller_messages() const { return c2c_messages_; }
  std::uint64_t packet_ins_sent() const { return packet_ins_sent_; }

  using HandoverHook = std::function<void(NodeId wmr, HandoverPhase phase, Address from, Address to)>;
  void on_handover(HandoverHook hook) { handover_hooks_.push_back(std::move(hook)); }

  void record(RecordKind kind, nlohmann::json payload);

 private:
  class WmrAgent;
  class ControllerAgent;
  struct NodeRuntime;
  struct FlowRuntime;
  struct Buffered {
    std::uint64_t id = 0;
    Packet packet;
  };

  // OlsrTransport
  void broadcast_hello(NodeId from, const Hello& hello) override;
  void send_lsas(NodeId from, std::optional<NodeId> to, std::optional<NodeId> except, std::vector<Lsa> lsas,
                 bool sync_request) override;
  void routes_changed(NodeId node, const RoutingTable& before, const RoutingTable& after) override;

  // Packet plane.
  void originate(NodeId node, Packet p);
  void transmit(NodeId from, NodeId to, Packet p);
  void receive(NodeId node, NodeId from, const Packet& p);
  void forward_at_wmr(NodeId wmr, const Packet& p);
  void deliver_local(NodeId wmr, const Packet& p);
  void deliver_to_wmr(NodeId wmr, const Packet& p);
  void deliver_to_controller(NodeId ctrl, const Packet& p);
  void deliver_to_host(NodeId host, const Packet& p);
  void reply_ping(NodeId node, const Packet& request);
  void packet_in(NodeId wmr, const Packet& p);
  void release_buffered(NodeId wmr);
  void drop(NodeId node, const Packet& p, const std::string& reason);
  bool send_control_from_wmr(NodeId wmr, Address dst, MessageBody body);
  void send_from_controller(NodeId ctrl, NodeId wmr, MessageBody body);
  std::optional<NodeId> attached_host(NodeId wmr, Address a) const;

  // Fluid traffic.
  void schedule_sample();
  void mark_dirty();
  void evaluate_flows();
  bool trace_flow(FlowRuntime& f, std::vector<std::pair<LinkId, NodeId>>& hops);
  void send_probe(std::size_t index, std::uint64_t seq);
  void schedule_rule_sweep();

  void log_rule_event(NodeId wmr, const char* event, nlohmann::json extra);
  const std::string& name(NodeId n) const { return topology_.node(n).name; }

  NetworkConfig config_;
  Topology& topology_;
  Simulator sim_;
  MetricLog log_;
  Observations online_;
  std::vector<std::unique_ptr<NodeRuntime>> nodes_;
  std::map<Address, NodeId> controller_addresses_;
  std::vector<std::unique_ptr<FlowRuntime>> flows_;
  std::map<NodeId, std::vector<Buffered>> buffers_;
  std::vector<HandoverHook> handover_hooks_;
  std::uint64_t next_buffer_id_ = 0;
  std::uint64_t c2c_messages_ = 0;
  std::uint64_t packet_ins_sent_ = 0;
  bool eval_scheduled_ = false;
  bool started_ = false;
};

}  // namespace wmsdn
