#include "ejfat/receiver.hpp"

#include <algorithm>
#include <cstring>

#include "ejfat/wire.hpp"

namespace ejfat::receiver {

// ---------------------------------------------------------------- Reassembler

Reassembler::Reassembler(Tick tick_window, std::uint64_t timeout_ns)
    : window_(tick_window), timeout_ns_(timeout_ns) {}

bool Reassembler::stale(Tick tick) const noexcept {
  return newest_completed_ && *newest_completed_ >= window_ && tick < *newest_completed_ - window_;
}

void Reassembler::advance_window(Tick completed_tick) {
  if (newest_completed_ && completed_tick <= *newest_completed_) return;
  newest_completed_ = completed_tick;
  if (completed_tick < window_) return;
  const Tick floor = completed_tick - window_;
  completed_.erase(completed_.begin(), completed_.lower_bound(Key{floor, 0}));
  const auto end = buffers_.lower_bound(Key{floor, 0});
  counters_.expired += static_cast<std::uint64_t>(std::distance(buffers_.begin(), end));
  buffers_.erase(buffers_.begin(), end);
}

std::optional<CompletedChannel> Reassembler::ingest(std::span<const std::uint8_t> datagram,
                                                    std::uint64_t now_ns) {
  ++counters_.ingested;
  const auto hdr = wire::decode_re_header(datagram);
  if (!hdr) {
    ++counters_.malformed;
    return std::nullopt;
  }
  const auto slice = datagram.subspan(wire::kReHeaderSize);
  const std::uint64_t begin = hdr->offset;
  const std::uint64_t end = begin + slice.size();
  const bool shape_ok = hdr->total_length <= kMaxChannelPayload && end <= hdr->total_length &&
                        (!slice.empty() || (hdr->total_length == 0 && begin == 0));
  if (!shape_ok) {
    ++counters_.malformed;
    return std::nullopt;
  }
  if (stale(hdr->tick)) {
    ++counters_.stale;
    return std::nullopt;
  }
  const Key key{hdr->tick, hdr->channel};
  if (completed_.count(key)) {
    ++counters_.duplicates;
    return std::nullopt;
  }

  auto [it, inserted] = buffers_.try_emplace(key);
  Buffer& buf = it->second;
  if (inserted) {
    buf.total_length = hdr->total_length;
    buf.payload.resize(hdr->total_length);
    buf.first_seen_ns = now_ns;
  } else if (buf.poisoned || buf.total_length != hdr->total_length) {
    ++counters_.malformed;
    return std::nullopt;
  }

  if (!slice.empty()) {
    // First interval that could overlap [begin, end).
    auto ov = buf.intervals.upper_bound(static_cast<std::uint32_t>(begin));
    if (ov != buf.intervals.begin()) --ov;
    bool overlaps = false;
    bool mismatch = false;
    for (; ov != buf.intervals.end() && ov->first < end; ++ov) {
      const std::uint64_t lo = std::max<std::uint64_t>(begin, ov->first);
      const std::uint64_t hi = std::min<std::uint64_t>(end, ov->second);
      if (lo >= hi) continue;
      overlaps = true;
      if (std::memcmp(buf.payload.data() + lo, slice.data() + (lo - begin), hi - lo) != 0) mismatch = true;
    }
    if (mismatch) {
      buf.poisoned = true;
      ++counters_.poisoned;
      ++counters_.malformed;
      return std::nullopt;
    }
    if (overlaps) {
      ++counters_.duplicates;
      return std::nullopt;
    }
    std::memcpy(buf.payload.data() + begin, slice.data(), slice.size());
    buf.intervals.emplace(static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end));
    buf.covered += slice.size();
  } else if (!inserted) {
    ++counters_.duplicates;
    return std::nullopt;
  }
  ++counters_.applied;

  if (buf.covered != buf.total_length) return std::nullopt;
  CompletedChannel done{key.first, key.second, std::move(buf.payload)};
  buffers_.erase(it);
  completed_.insert(key);
  ++counters_.completed;
  advance_window(key.first);
  return done;
}

void Reassembler::expire(std::uint64_t now_ns) {
  for (auto it = buffers_.begin(); it != buffers_.end();) {
    if (it->second.first_seen_ns + timeout_ns_ <= now_ns) {
      ++counters_.expired;
      it = buffers_.erase(it);
    } else {
      ++it;
    }
  }
}

// ------------------------------------------------------------ EventAggregator

EventAggregator::EventAggregator(std::vector<std::uint16_t> expected_channels, Tick tick_window,
                                 std::uint64_t timeout_ns)
    : expected_(expected_channels.begin(), expected_channels.end()),
      window_(tick_window),
      timeout_ns_(timeout_ns) {}

void EventAggregator::close(Tick tick) {
  pending_.erase(tick);
  closed_.insert(tick);
  const Tick newest = *closed_.rbegin();
  if (newest >= window_) closed_.erase(closed_.begin(), closed_.lower_bound(newest - window_));
}

std::optional<Event> EventAggregator::add(CompletedChannel channel, std::uint64_t now_ns) {
  if (!expected_.count(channel.channel)) {
    ++counters_.unexpected_channels;
    return std::nullopt;
  }
  const bool below_window =
      !closed_.empty() && *closed_.rbegin() >= window_ && channel.tick < *closed_.rbegin() - window_;
  if (below_window || closed_.count(channel.tick)) {
    ++counters_.late_channels;
    return std::nullopt;
  }
  auto [it, inserted] = pending_.try_emplace(channel.tick);
  if (inserted) it->second.first_seen_ns = now_ns;
  if (!it->second.channels.emplace(channel.channel, std::move(channel.payload)).second) {
    ++counters_.late_channels;
    return std::nullopt;
  }
  if (it->second.channels.size() != expected_.size()) return std::nullopt;

  Event e{channel.tick, std::move(it->second.channels)};
  close(channel.tick);
  ++counters_.events;
  return e;
}

std::vector<Tick> EventAggregator::expire(std::uint64_t now_ns) {
  std::vector<Tick> dropped;
  for (const auto& [tick, p] : pending_) {
    if (p.first_seen_ns + timeout_ns_ <= now_ns) dropped.push_back(tick);
  }
  for (Tick t : dropped) {
    ++counters_.timeouts;
    close(t);
  }
  return dropped;
}

// ----------------------------------------------------------------- EventQueue

EventQueue::EventQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

std::optional<Event> EventQueue::push(Event e) {
  std::optional<Event> evicted;
  {
    std::lock_guard lock(mu_);
    if (q_.size() >= capacity_) {
      evicted = std::move(q_.front());
      q_.pop_front();
      ++evicted_;
    }
    q_.push_back(std::move(e));
    ++pushed_;
  }
  cv_.notify_one();
  return evicted;
}

std::optional<Event> EventQueue::try_pop() {
  std::lock_guard lock(mu_);
  if (q_.empty()) return std::nullopt;
  Event e = std::move(q_.front());
  q_.pop_front();
  ++popped_;
  return e;
}

std::optional<Event> EventQueue::pop_wait(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !q_.empty(); })) return std::nullopt;
  Event e = std::move(q_.front());
  q_.pop_front();
  ++popped_;
  return e;
}

std::size_t EventQueue::depth() const {
  std::lock_guard lock(mu_);
  return q_.size();
}

double EventQueue::fill() const {
  std::lock_guard lock(mu_);
  return static_cast<double>(q_.size()) / static_cast<double>(capacity_);
}

std::uint64_t EventQueue::pushed() const {
  std::lock_guard lock(mu_);
  return pushed_;
}

std::uint64_t EventQueue::popped() const {
  std::lock_guard lock(mu_);
  return popped_;
}

std::uint64_t EventQueue::evicted() const {
  std::lock_guard lock(mu_);
  return evicted_;
}

// -------------------------------------------------------------- PidController

double PidController::step(double fill) {
  const double e = gains_.setpoint - fill;
  integral_ = std::clamp(integral_ + e, -gains_.integral_limit, gains_.integral_limit);
  const double derivative = prev_error_ ? e - *prev_error_ : 0.0;
  prev_error_ = e;
  return std::clamp(gains_.kp * e + gains_.ki * integral_ + gains_.kd * derivative, -1.0, 1.0);
}

void PidController::reset() {
  integral_ = 0.0;
  prev_error_.reset();
}

// ------------------------------------------------------------------- Receiver

Receiver::Receiver(ReceiverConfig config)
    : config_(std::move(config)),
      aggregator_(config_.expected_channels, config_.tick_window, config_.reassembly_timeout_ns),
      queue_(config_.queue_capacity),
      pid_(config_.gains) {
  if (config_.port_count == 0) config_.port_count = 1;
  for (std::size_t i = 0; i < config_.port_count; ++i) {
    port_mu_.push_back(std::make_unique<std::mutex>());
    ports_.emplace_back(config_.tick_window, config_.reassembly_timeout_ns);
  }
}

std::optional<Tick> Receiver::ingest(std::size_t port_index, std::span<const std::uint8_t> datagram,
                                     std::uint64_t now_ns) {
  port_index %= ports_.size();
  std::optional<CompletedChannel> done;
  {
    std::lock_guard lock(*port_mu_[port_index]);
    done = ports_[port_index].ingest(datagram, now_ns);
  }
  if (!done) return std::nullopt;

  std::optional<Event> event;
  {
    std::lock_guard lock(agg_mu_);
    event = aggregator_.add(std::move(*done), now_ns);
  }
  if (!event) return std::nullopt;
  const Tick tick = event->tick;
  if (auto evicted = queue_.push(std::move(*event)); evicted && eviction_hook_) eviction_hook_(*evicted);
  return tick;
}

void Receiver::housekeeping(std::uint64_t now_ns) {
  for (std::size_t i = 0; i < ports_.size(); ++i) {
    std::lock_guard lock(*port_mu_[i]);
    ports_[i].expire(now_ns);
  }
  std::lock_guard lock(agg_mu_);
  aggregator_.expire(now_ns);
}

std::optional<Event> Receiver::pop_event() { return queue_.try_pop(); }

std::optional<Event> Receiver::pop_event_wait(std::chrono::milliseconds timeout) {
  return queue_.pop_wait(timeout);
}

controlplane::FillReport Receiver::make_report(controlplane::SessionId session, std::uint64_t now_ns) {
  const double f = fill();
  double c;
  {
    std::lock_guard lock(pid_mu_);
    c = pid_.step(f);
  }
  return controlplane::FillReport{session, f, c, ready(), now_ns};
}

ReceiverCounters Receiver::counters() const {
  ReceiverCounters out;
  for (std::size_t i = 0; i < ports_.size(); ++i) {
    std::lock_guard lock(*port_mu_[i]);
    const auto& c = ports_[i].counters();
    out.reassembly.ingested += c.ingested;
    out.reassembly.applied += c.applied;
    out.reassembly.duplicates += c.duplicates;
    out.reassembly.stale += c.stale;
    out.reassembly.malformed += c.malformed;
    out.reassembly.poisoned += c.poisoned;
    out.reassembly.completed += c.completed;
    out.reassembly.expired += c.expired;
  }
  {
    std::lock_guard lock(agg_mu_);
    out.aggregation = aggregator_.counters();
  }
  out.queued = queue_.pushed();
  out.evicted = queue_.evicted();
  out.consumed = queue_.popped();
  out.depth = queue_.depth();
  return out;
}

}  // namespace ejfat::receiver
