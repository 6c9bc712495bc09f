#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wmsdn/flow_table.hpp"
#include "wmsdn/messages.hpp"
#include "wmsdn/metric_log.hpp"
#include "wmsdn/olsr.hpp"
#include "wmsdn/simulator.hpp"

namespace wmsdn {

// Forces the controller to route traffic for `dst` along `path` instead of
// the shortest path. Used for traffic-engineering experiments.
struct PathOverride {
  Prefix dst;
  std::vector<NodeId> path;
};

struct ControllerConfig {
  Address address;
  NodeId attached_wmr{};
  bool flush_on_connect = true;
  Duration rule_idle_timeout = std::chrono::seconds(30);
  int rule_priority = 100;
  Duration drop_hard_timeout = std::chrono::seconds(5);
  Duration topology_timeout = std::chrono::seconds(2);
  Duration refresh_interval = std::chrono::seconds(5);
  Duration switch_timeout = std::chrono::seconds(5);
  std::vector<PathOverride> path_overrides;
};

class ControllerEnvironment {
 public:
  virtual ~ControllerEnvironment() = default;
  virtual Simulator& simulator() = 0;
  // Sends a control message to the mesh address of `wmr`.
  virtual void send_to_switch(NodeId wmr, MessageBody body) = 0;
  virtual void record(RecordKind kind, nlohmann::json payload) = 0;
  virtual std::string node_name(NodeId n) const = 0;
};

struct SwitchSession {
  std::uint64_t conn_id = 0;
  SimTime connected_at{};
  SimTime last_seen{};
};

// The SDN controller. It learns topology only from its attached WMR and
// never talks to other controllers.
class ControllerLogic {
 public:
  ControllerLogic(NodeId self, std::string name, ControllerConfig config, ControllerEnvironment& env);

  ControllerLogic(const ControllerLogic&) = delete;
  ControllerLogic& operator=(const ControllerLogic&) = delete;

  void start();
  void on_message(const MessageBody& body);

  void on_switch_connected(NodeId wmr, std::uint64_t conn_id);
  void on_packet_in(NodeId wmr, const Packet& p);
  void refresh_topology();

  // Rules that answer a packet-in for `dst` arriving at `ingress`, computed
  // from `view`. The ingress rule is last. Exposed for tests.
  struct Plan {
    std::vector<std::pair<NodeId, FlowRule>> rules;
    std::vector<NodeId> skipped;
    std::vector<NodeId> path;
    bool drop = false;
    std::optional<Prefix> matched;
  };
  Plan plan_for(NodeId ingress, Address dst, const LinkStateView& view, SimTime now) const;

  const ControllerConfig& config() const { return config_; }
  Address address() const { return config_.address; }
  const std::map<NodeId, SwitchSession>& connected_switches() const { return switches_; }
  const std::optional<LinkStateView>& topo_view() const { return view_; }
  bool view_stale() const { return stale_; }
  std::uint64_t packet_ins() const { return packet_ins_; }

 private:
  struct PendingPacketIn {
    NodeId wmr;
    Packet packet;
  };

  void request_topology();
  void on_topology_reply(const TopologyReply& reply);
  void on_topology_timeout(std::uint64_t request_id);
  void serve_pending();
  void schedule_refresh();
  void schedule_sweep();
  void sweep_switches();
  void log_action(const char* action, nlohmann::json extra);

  NodeId self_;
  std::string name_;
  ControllerConfig config_;
  ControllerEnvironment& env_;

  std::map<NodeId, SwitchSession> switches_;
  std::optional<LinkStateView> view_;
  SimTime view_at_{};
  bool stale_ = false;
  std::uint64_t next_request_ = 0;
  std::optional<std::uint64_t> outstanding_;
  EventHandle request_timeout_;
  std::vector<PendingPacketIn> pending_;
  std::uint64_t packet_ins_ = 0;
};

}  // namespace wmsdn
