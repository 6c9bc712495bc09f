#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "wmsdn/address.hpp"

namespace wmsdn {

struct Message;  // control/ping payload, see messages.hpp

enum class PacketKind { OlsrMsg, ControlChannel, Ping, Data };

const char* to_string(PacketKind k);

struct Packet {
  Address src;
  Address dst;
  std::uint32_t size = 64;  // bytes
  PacketKind kind = PacketKind::Data;
  std::string flow_id;
  std::shared_ptr<const Message> msg;
};

}  // namespace wmsdn
