#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "wmsdn/flow_table.hpp"
#include "wmsdn/olsr.hpp"
#include "wmsdn/packet.hpp"

namespace wmsdn {

// Switch -> controller reachability probe (models a TCP connect attempt).
struct ProbeSyn {
  NodeId wmr{};
  std::uint64_t probe_id = 0;
};
struct ProbeAck {
  std::uint64_t probe_id = 0;
};
// Opens the OpenFlow control connection.
struct OfHello {
  NodeId wmr{};
  std::uint64_t conn_id = 0;
};
struct OfHelloAck {
  std::uint64_t conn_id = 0;
};
struct EchoRequest {
  NodeId wmr{};
  std::uint64_t conn_id = 0;
};
struct EchoReply {
  std::uint64_t conn_id = 0;
};
struct CloseConnection {
  NodeId wmr{};
  std::uint64_t conn_id = 0;
};
struct PacketInMessage {
  NodeId wmr{};
  std::uint64_t buffer_id = 0;
  Packet packet;
};
struct FlowMod {
  FlowRule rule;
};
struct FlushRules {
  OriginFilter filter;
};
struct TopologyRequest {
  std::uint64_t request_id = 0;
};
struct TopologyReply {
  std::uint64_t request_id = 0;
  NodeId wmr{};
  LinkStateView view;
};
struct PingRequest {
  std::string probe;
  std::uint64_t seq = 0;
  SimTime sent_at{};
};
struct PingReply {
  std::string probe;
  std::uint64_t seq = 0;
  SimTime sent_at{};
};

using MessageBody = std::variant<ProbeSyn, ProbeAck, OfHello, OfHelloAck, EchoRequest, EchoReply, CloseConnection,
                                 PacketInMessage, FlowMod, FlushRules, TopologyRequest, TopologyReply, PingRequest,
                                 PingReply>;

struct Message {
  MessageBody body;
};

template <typename T>
Packet make_packet(Address src, Address dst, PacketKind kind, std::uint32_t size, T body) {
  Packet p;
  p.src = src;
  p.dst = dst;
  p.kind = kind;
  p.size = size;
  p.msg = std::make_shared<const Message>(Message{MessageBody{std::move(body)}});
  return p;
}

}  // namespace wmsdn
