#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace wmsdn {

// IPv4 address as a 32-bit host-order value.
class Address {
 public:
  constexpr Address() = default;
  constexpr explicit Address(std::uint32_t value) : value_(value) {}
  constexpr Address(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  // Dotted quad; throws std::invalid_argument on malformed input.
  static Address parse(std::string_view text);

  constexpr std::uint32_t value() const { return value_; }
  std::string to_string() const;

  constexpr auto operator<=>(const Address&) const = default;

 private:
  std::uint32_t value_ = 0;
};

// Network prefix. Host bits are kept as given; canonical() clears them.
class Prefix {
 public:
  constexpr Prefix() = default;
  // Throws std::invalid_argument when length > 32.
  Prefix(Address network, int length);

  // "a.b.c.d/len" or a bare address (treated as /32).
  static Prefix parse(std::string_view text);
  static Prefix host(Address a) { return Prefix(a, 32); }

  Address network() const { return network_; }
  int length() const { return length_; }
  std::uint32_t mask() const { return length_ == 0 ? 0u : ~std::uint32_t{0} << (32 - length_); }

  Prefix canonical() const { return Prefix(Address(network_.value() & mask()), length_); }
  bool is_canonical() const { return (network_.value() & ~mask()) == 0; }
  bool contains(Address a) const { return (a.value() & mask()) == (network_.value() & mask()); }
  // True when every address of `other` lies in this prefix.
  bool contains(const Prefix& other) const { return other.length_ >= length_ && contains(other.network_); }

  std::string to_string() const;

  auto operator<=>(const Prefix&) const = default;

 private:
  Address network_{};
  int length_ = 0;
};

inline const Prefix kDefaultControlSubnet = Prefix(Address(10, 0, 0, 0), 16);
inline const Prefix kDefaultControllerRange = Prefix(Address(10, 0, 255, 0), 24);
inline const Prefix kDefaultRoute = Prefix(Address(0u), 0);

}  // namespace wmsdn

template <>
struct std::hash<wmsdn::Address> {
  std::size_t operator()(const wmsdn::Address& a) const noexcept { return std::hash<std::uint32_t>{}(a.value()); }
};
