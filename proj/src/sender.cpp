#include "ejfat/sender.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <iterator>
#include <mutex>
#include <string>
#include <thread>

#include "byte_order.hpp"
#include "ejfat/error.hpp"
#include "ejfat/log.hpp"

namespace ejfat::sender {
namespace {

constexpr std::size_t kRecordHeader = 8 + 2 + 4;

void check_mtu(std::size_t mtu) {
  if (mtu == 0 || mtu + wire::kHeaderOverhead > kUdpPayloadLimit) {
    throw Error(ErrorCode::OversizeMtu, "mtu payload " + std::to_string(mtu) + " out of range");
  }
}

}  // namespace

std::size_t fragment_count(const Event& e, std::size_t mtu_payload) {
  check_mtu(mtu_payload);
  std::size_t n = 0;
  for (const auto& [ch, payload] : e.channels) {
    n += payload.empty() ? 1 : (payload.size() + mtu_payload - 1) / mtu_payload;
  }
  return n;
}

std::vector<Bytes> fragment_event(const Event& e, std::size_t mtu_payload) {
  std::vector<Bytes> out;
  out.reserve(fragment_count(e, mtu_payload));
  for (const auto& [ch, payload] : e.channels) {
    if (payload.size() > 0xffffffffULL) throw Error(ErrorCode::InvalidArgument, "channel payload too large");
    const auto total = static_cast<std::uint32_t>(payload.size());
    std::size_t offset = 0;
    do {
      const std::size_t len = std::min(mtu_payload, payload.size() - offset);
      Bytes d(wire::kHeaderOverhead + len);
      wire::encode_lb_header(wire::LbMetaHeader{.channel = ch, .tick = e.tick},
                             std::span<std::uint8_t, wire::kLbHeaderSize>(d.data(), wire::kLbHeaderSize));
      wire::encode_re_header(
          wire::ReassemblyHeader{
              .channel = ch, .offset = static_cast<std::uint32_t>(offset), .total_length = total, .tick = e.tick},
          std::span<std::uint8_t, wire::kReHeaderSize>(d.data() + wire::kLbHeaderSize, wire::kReHeaderSize));
      std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(offset), len, d.begin() + wire::kHeaderOverhead);
      out.push_back(std::move(d));
      offset += len;
    } while (offset < payload.size());
  }
  return out;
}

std::optional<Event> VectorEventSource::next() {
  if (pos_ >= events_.size()) return std::nullopt;
  return std::move(events_[pos_++]);
}

SynthEventSource::SynthEventSource(SynthConfig config) : config_(config), rng_(config.seed) {
  if (config_.tick_step == 0) throw Error(ErrorCode::InvalidArgument, "tick_step must be positive");
}

std::optional<Event> SynthEventSource::next() {
  if (emitted_ >= config_.count) return std::nullopt;
  Event e;
  e.tick = config_.start_tick + emitted_ * config_.tick_step;
  for (std::uint16_t ch = 0; ch < config_.channels; ++ch) {
    Bytes p(config_.size_per_channel);
    std::size_t i = 0;
    while (i < p.size()) {
      std::uint64_t r = rng_();
      for (int k = 0; k < 8 && i < p.size(); ++k, ++i) p[i] = static_cast<std::uint8_t>(r >> (8 * k));
    }
    e.channels.emplace(ch, std::move(p));
  }
  ++emitted_;
  return e;
}

std::vector<Event> synth_events(const SynthConfig& config) {
  SynthEventSource src(config);
  std::vector<Event> out;
  while (auto e = src.next()) out.push_back(std::move(*e));
  return out;
}

void write_event_file(const std::filesystem::path& path, const std::vector<Event>& events) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  for (const auto& e : events) {
    for (const auto& [ch, payload] : e.channels) {
      std::uint8_t hdr[kRecordHeader];
      detail::put_be64(hdr, e.tick);
      detail::put_be16(hdr + 8, ch);
      detail::put_be32(hdr + 10, static_cast<std::uint32_t>(payload.size()));
      out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
      out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    }
  }
  if (!out) throw Error(ErrorCode::InvalidArgument, "short write to " + path.string());
}

std::vector<Event> parse_event_records(std::span<const std::uint8_t> bytes) {
  std::vector<Event> events;
  std::size_t pos = 0;
  auto bad = [&](std::size_t at, const char* why) {
    throw Error(ErrorCode::MalformedRecord, "malformed record at offset " + std::to_string(at) + ": " + why);
  };
  while (pos < bytes.size()) {
    if (bytes.size() - pos < kRecordHeader) bad(pos, "truncated header");
    const Tick tick = detail::get_be64(bytes.data() + pos);
    const std::uint16_t ch = detail::get_be16(bytes.data() + pos + 8);
    const std::uint32_t len = detail::get_be32(bytes.data() + pos + 10);
    if (bytes.size() - pos - kRecordHeader < len) bad(pos, "truncated payload");
    if (events.empty() || events.back().tick != tick) {
      if (!events.empty() && tick <= events.back().tick) bad(pos, "tick not increasing");
      events.push_back(Event{tick, {}});
    } else if (events.back().channels.count(ch)) {
      bad(pos, "repeated channel");
    }
    const auto* p = bytes.data() + pos + kRecordHeader;
    events.back().channels.emplace(ch, Bytes(p, p + len));
    pos += kRecordHeader + len;
  }
  return events;
}

std::vector<Event> load_event_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_event_records(bytes);
}

Sender::Sender(EventSource& source, DatagramSink& sink, std::size_t mtu_payload, std::uint32_t source_id)
    : source_(source), sink_(sink), mtu_(mtu_payload), source_id_(source_id) {
  check_mtu(mtu_);
  pending_ = source_.next();
  if (pending_) latest_tick_.store(pending_->tick, std::memory_order_relaxed);
}

std::optional<Tick> Sender::next_tick() const noexcept {
  if (!pending_) return std::nullopt;
  return pending_->tick;
}

std::optional<Event> Sender::emit_next() {
  if (!pending_) return std::nullopt;
  Event e = std::move(*pending_);
  pending_ = source_.next();
  if (pending_ && pending_->tick <= e.tick) {
    throw Error(ErrorCode::NonMonotonicTick, "source tick " + std::to_string(pending_->tick) + " after " +
                                                 std::to_string(e.tick));
  }
  for (const auto& d : fragment_event(e, mtu_)) {
    if (!sink_.send(d)) ++stats_.send_failures;
    ++stats_.fragments;
    stats_.octets += d.size();
  }
  ++stats_.events;
  latest_tick_.store(e.tick, std::memory_order_relaxed);
  events_.fetch_add(1, std::memory_order_relaxed);
  return e;
}

wire::SyncMessage Sender::make_sync(std::uint64_t now_ns) {
  const std::uint64_t events = events_.load(std::memory_order_relaxed);
  std::uint32_t rate = 0;
  if (synced_ && now_ns > last_sync_ns_) {
    const double r = static_cast<double>(events - last_sync_events_) * 1e9 / static_cast<double>(now_ns - last_sync_ns_);
    rate = static_cast<std::uint32_t>(std::min(r + 0.5, 4294967295.0));
  }
  synced_ = true;
  last_sync_ns_ = now_ns;
  last_sync_events_ = events;
  return wire::SyncMessage{.source_id = source_id_, .latest_tick = latest_tick(), .event_rate_hz = rate,
                           .wallclock_ns = now_ns};
}

StreamStats stream_events(EventSource& source, const StreamOptions& options) {
  net::UdpSocket data;
  data.set_send_buffer(options.send_buffer);
  UdpSink sink(data, options.lb);
  Sender sender(source, sink, options.mtu_payload, options.source_id);

  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::thread sync_thread;
  if (options.control) {
    sync_thread = std::thread([&] {
      net::UdpSocket ctl;
      SystemClock clock;
      const auto period = std::chrono::duration<double>(options.sync_period_s);
      auto next = std::chrono::steady_clock::now();
      std::unique_lock lock(mu);
      while (!done) {
        const auto msg = wire::encode_sync(sender.make_sync(clock.now_ns()));
        try {
          ctl.send_to(msg, *options.control);
        } catch (const Error& e) {
          spdlog::warn("sync send failed: {}", e.what());
        }
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        cv.wait_until(lock, next, [&] { return done; });
      }
    });
  }

  const auto start = std::chrono::steady_clock::now();
  std::chrono::steady_clock::time_point scheduled = start;
  try {
    std::uint64_t i = 0;
    while (!sender.exhausted()) {
      if (options.rate_hz > 0) {
        scheduled = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double>(static_cast<double>(i) / options.rate_hz));
        std::this_thread::sleep_until(scheduled);
      }
      sender.emit_next();
      ++i;
    }
  } catch (...) {
    {
      std::lock_guard lock(mu);
      done = true;
    }
    cv.notify_all();
    if (sync_thread.joinable()) sync_thread.join();
    throw;
  }
  const auto end = std::chrono::steady_clock::now();
  {
    std::lock_guard lock(mu);
    done = true;
  }
  cv.notify_all();
  if (sync_thread.joinable()) sync_thread.join();

  StreamStats stats = sender.stats();
  stats.duration_s = std::chrono::duration<double>(end - start).count();
  if (options.rate_hz > 0) stats.pacing_drift_s = std::chrono::duration<double>(end - scheduled).count();
  return stats;
}

}  // namespace ejfat::sender
