#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "wmsdn/flow_table.hpp"
#include "wmsdn/messages.hpp"
#include "wmsdn/metric_log.hpp"
#include "wmsdn/olsr.hpp"
#include "wmsdn/simulator.hpp"

namespace wmsdn {

struct EmergencyPolicy {
  enum class Kind { ControlOnly, AllowAll, Selective };
  Kind kind = Kind::ControlOnly;
  std::vector<Prefix> allowed;  // Selective only
};

const char* to_string(EmergencyPolicy::Kind k);

struct EftmConfig {
  Duration poll_period = std::chrono::seconds(3);
  Duration connect_timeout = std::chrono::seconds(2);
  Prefix control_subnet = kDefaultControlSubnet;
  Prefix controller_range = kDefaultControllerRange;
  Duration hysteresis_hold{0};
  bool keepalive_enabled = true;
  Duration keepalive_interval = std::chrono::seconds(1);
  EmergencyPolicy emergency_policy;
  bool clear_controller_rules_in_emergency = true;
  // Explicit priority order; overrides the address ordering for listed
  // controllers. Unlisted controllers rank after all listed ones.
  std::vector<Address> static_priority;
  bool randomize_poll_phase = true;

  void validate() const;
};

struct ControllerEntry {
  Address addr;
  int priority_rank = 0;  // 0 = highest priority
  SimTime discovered_at{};
  bool operator==(const ControllerEntry&) const = default;
};

// Controllers announced as live /32 HNA entries inside the controller range,
// highest priority first. Without a static list the numerically lowest
// address has the highest priority.
std::vector<ControllerEntry> discover_controllers(std::span<const HnaEntry> hna, const EftmConfig& config,
                                                  const std::map<Address, SimTime>& first_seen = {});

// True when `a` has strictly higher priority than `b`.
bool higher_priority(Address a, Address b, const EftmConfig& config);

struct Disconnected {
  bool operator==(const Disconnected&) const = default;
};
struct Connecting {
  Address target;
  SimTime deadline{};
  bool operator==(const Connecting&) const = default;
};
struct Connected {
  Address master;
  bool operator==(const Connected&) const = default;
};
struct Emergency {
  EmergencyPolicy::Kind policy = EmergencyPolicy::Kind::ControlOnly;
  bool operator==(const Emergency&) const = default;
};
using EftmMode = std::variant<Disconnected, Connecting, Connected, Emergency>;

std::string describe(const EftmMode& m);

enum class ConnectionStatus { Opening, Established, Closed };

struct ControlConnection {
  NodeId wmr{};
  Address controller;
  std::uint64_t conn_id = 0;
  ConnectionStatus status = ConnectionStatus::Opening;
  SimTime opened_at{};
  SimTime last_reply{};
};

enum class HandoverPhase { BeforeClose, AfterEstablish };

// What the EFTM needs from the WMR hosting it.
class EftmEnvironment {
 public:
  virtual ~EftmEnvironment() = default;
  virtual Simulator& simulator() = 0;
  virtual std::vector<HnaEntry> hna() const = 0;
  virtual const RoutingTable& routes() const = 0;
  virtual FlowTable& flow_table() = 0;
  // Sends a Basic-class control packet; false when there is no local route.
  virtual bool send_control(Address dst, MessageBody body) = 0;
  virtual void record(RecordKind kind, nlohmann::json payload) = 0;
  virtual void flow_table_changed(const std::string& cause) = 0;
  virtual void forwarding_state_changed() = 0;
  virtual void handover(HandoverPhase, Address /*from*/, Address /*to*/) {}
};

// Embedded Flow Table Manager: WMR-side master selection and emergency mode.
//
// Controllers are learned from HNA, ranked by priority and probed in order
// every poll_period. At most one control connection is ever established;
// moving to a higher-priority controller closes the old connection before
// the new one is established and leaves the flow table untouched. When no
// controller accepts and none is connected the emergency policy is applied.
class Eftm {
 public:
  Eftm(NodeId wmr, std::string name, Address self_address, EftmConfig config, Rng& rng, EftmEnvironment& env);

  Eftm(const Eftm&) = delete;
  Eftm& operator=(const Eftm&) = delete;

  void start();

  // One polling round. Out-of-cycle rounds are queued while another round
  // or a connection attempt is in progress.
  void poll_tick(bool out_of_cycle = false);
  void hard_handover(Address to);
  void apply_emergency_policy();
  void on_message(Address from, const MessageBody& body);
  void on_routes_changed();

  std::vector<ControllerEntry> discover_controllers();

  const EftmMode& mode() const { return mode_; }
  const EftmConfig& config() const { return config_; }
  bool established() const { return connection_.has_value(); }
  std::optional<Address> master() const;
  const std::optional<ControlConnection>& connection() const { return connection_; }
  int established_count() const { return connection_ ? 1 : 0; }
  std::uint64_t single_master_violations() const { return violations_; }
  std::uint64_t handovers() const { return handovers_; }
  bool poll_in_progress() const { return poll_.active; }

 private:
  struct PollRound {
    bool active = false;
    std::vector<Address> queue;
    std::size_t next = 0;
    std::optional<Address> probing;
    std::uint64_t probe_id = 0;
    EventHandle timeout;
    bool master_probed = false;
  };
  struct PendingConnect {
    Address target;
    std::uint64_t conn_id = 0;
    EventHandle timeout;
    bool handover = false;
  };

  void schedule_periodic_poll(Duration delay);
  void request_poll();
  void try_next_candidate();
  void on_probe_timeout();
  void finish_poll(std::optional<Address> accepted);
  void begin_connect(Address target);
  void on_connect_timeout();
  void on_hello_ack(std::uint64_t conn_id);
  void establish(Address controller, std::uint64_t conn_id);
  void close_connection(const char* reason);
  void connection_lost();
  void keepalive_tick();
  void enter_emergency();
  void leave_emergency_rules();
  void set_mode(EftmMode next);
  void log_event(const char* event, nlohmann::json extra);

  NodeId wmr_;
  std::string name_;
  Address self_address_;
  EftmConfig config_;
  Rng& rng_;
  EftmEnvironment& env_;

  EftmMode mode_ = Disconnected{};
  std::optional<ControlConnection> connection_;
  std::optional<PendingConnect> pending_;
  PollRound poll_;
  bool repoll_ = false;
  bool emergency_rules_installed_ = false;
  std::optional<SimTime> last_handover_;
  std::map<Address, SimTime> first_seen_;
  EventHandle keepalive_timer_;
  std::uint64_t next_probe_id_ = 0;
  std::uint64_t next_conn_id_ = 0;
  std::uint64_t violations_ = 0;
  std::uint64_t handovers_ = 0;
};

}  // namespace wmsdn
