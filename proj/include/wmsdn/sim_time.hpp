#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace wmsdn {

// Virtual clock with exact microsecond resolution. Event ordering never
// depends on floating point.
struct SimClock {
  using rep = std::int64_t;
  using period = std::micro;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using Duration = SimClock::duration;
using SimTime = SimClock::time_point;

inline constexpr SimTime kTimeZero{};

// Rounds to the nearest microsecond.
inline Duration seconds(double s) {
  if (!std::isfinite(s)) throw std::invalid_argument("non-finite duration");
  return Duration{static_cast<std::int64_t>(std::llround(s * 1e6))};
}

inline SimTime at_seconds(double s) { return kTimeZero + seconds(s); }

inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e6; }
inline double to_seconds(SimTime t) { return to_seconds(t.time_since_epoch()); }
inline std::int64_t to_us(SimTime t) { return t.time_since_epoch().count(); }

}  // namespace wmsdn
