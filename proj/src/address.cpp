#include "wmsdn/address.hpp"

#include <charconv>
#include <stdexcept>

namespace wmsdn {

Address Address::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || next == p || part > 255 || next - p > 3) {
      throw std::invalid_argument("malformed IPv4 address '" + std::string(text) + "'");
    }
    value = (value << 8) | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') throw std::invalid_argument("malformed IPv4 address '" + std::string(text) + "'");
      ++p;
    }
  }
  if (p != end) throw std::invalid_argument("malformed IPv4 address '" + std::string(text) + "'");
  return Address(value);
}

std::string Address::to_string() const {
  return std::to_string(value_ >> 24) + '.' + std::to_string((value_ >> 16) & 0xff) + '.' +
         std::to_string((value_ >> 8) & 0xff) + '.' + std::to_string(value_ & 0xff);
}

Prefix::Prefix(Address network, int length) : network_(network), length_(length) {
  if (length < 0 || length > 32) throw std::invalid_argument("prefix length out of range: " + std::to_string(length));
}

Prefix Prefix::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return Prefix(Address::parse(text), 32);
  const auto len_text = text.substr(slash + 1);
  int len = -1;
  auto [next, ec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), len);
  if (ec != std::errc{} || next != len_text.data() + len_text.size() || len_text.empty()) {
    throw std::invalid_argument("malformed prefix '" + std::string(text) + "'");
  }
  return Prefix(Address::parse(text.substr(0, slash)), len);
}

std::string Prefix::to_string() const { return network_.to_string() + '/' + std::to_string(length_); }

}  // namespace wmsdn
