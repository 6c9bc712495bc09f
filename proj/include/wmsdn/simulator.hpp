#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string_view>
#include <utility>

#include "wmsdn/ids.hpp"
#include "wmsdn/rng.hpp"
#include "wmsdn/sim_time.hpp"

namespace wmsdn {

enum class EventKind : std::uint8_t { Timer, Delivery, Scenario };

struct EventHandle {
  SimTime fire_at{};
  std::uint64_t seq = 0;
  bool valid() const { return seq != 0; }
};

// Single-threaded discrete-event core. Events with equal fire time run in
// insertion order.
class Simulator {
 public:
  explicit Simulator(std::uint64_t seed = 0) : seed_(seed) {}

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  // Throws std::invalid_argument on negative delay.
  EventHandle schedule(Duration delay, NodeId target, EventKind kind, std::function<void()> fn);
  EventHandle schedule_at(SimTime at, NodeId target, EventKind kind, std::function<void()> fn);

  // Returns false when the event already fired or was never scheduled.
  bool cancel(EventHandle& handle);

  void run_until(SimTime end);

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t fired() const { return fired_; }
  // Running digest of every fired event (time, seq, target, kind).
  std::uint64_t trace_digest() const { return digest_; }

  Rng make_rng(std::string_view key) const { return Rng(seed_, key); }

 private:
  struct Entry {
    NodeId target;
    EventKind kind;
    std::function<void()> fn;
  };
  using Key = std::pair<std::int64_t, std::uint64_t>;

  std::uint64_t seed_;
  SimTime now_{};
  std::uint64_t next_seq_ = 1;
  std::uint64_t fired_ = 0;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::map<Key, Entry> queue_;
};

}  // namespace wmsdn
