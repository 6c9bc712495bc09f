#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>

namespace wmsdn {

enum class NodeId : std::uint32_t {};
enum class LinkId : std::uint32_t {};

inline constexpr NodeId kNoNode{std::numeric_limits<std::uint32_t>::max()};

constexpr std::size_t idx(NodeId n) { return static_cast<std::size_t>(n); }
constexpr std::size_t idx(LinkId l) { return static_cast<std::size_t>(l); }

}  // namespace wmsdn
