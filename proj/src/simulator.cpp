#include "wmsdn/simulator.hpp"

#include <stdexcept>

namespace wmsdn {

EventHandle Simulator::schedule(Duration delay, NodeId target, EventKind kind, std::function<void()> fn) {
  if (delay < Duration::zero()) throw std::invalid_argument("negative event delay");
  return schedule_at(now_ + delay, target, kind, std::move(fn));
}

EventHandle Simulator::schedule_at(SimTime at, NodeId target, EventKind kind, std::function<void()> fn) {
  if (at < now_) throw std::invalid_argument("event scheduled in the past");
  const std::uint64_t seq = next_seq_++;
  queue_.emplace(Key{to_us(at), seq}, Entry{target, kind, std::move(fn)});
  return EventHandle{at, seq};
}

bool Simulator::cancel(EventHandle& handle) {
  if (!handle.valid()) return false;
  const bool erased = queue_.erase(Key{to_us(handle.fire_at), handle.seq}) > 0;
  handle = EventHandle{};
  return erased;
}

void Simulator::run_until(SimTime end) {
  if (end < now_) throw std::invalid_argument("run_until before current time");
  while (!queue_.empty()) {
    auto it = queue_.begin();
    if (it->first.first > to_us(end)) break;
    const Key key = it->first;
    Entry entry = std::move(it->second);
    queue_.erase(it);
    now_ = SimTime{Duration{key.first}};
    ++fired_;
    for (std::uint64_t v : {static_cast<std::uint64_t>(key.first), key.second,
                            static_cast<std::uint64_t>(entry.target),
                            static_cast<std::uint64_t>(entry.kind)}) {
      digest_ ^= splitmix64(v);
      digest_ *= 0x100000001b3ULL;
    }
    entry.fn();
  }
  now_ = end;
}

}  // namespace wmsdn
