#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ejfat/sender.hpp"
#include "ejfat/wire.hpp"

using namespace ejfat;
using namespace ejfat::sender;

namespace {

Event make_event(Tick tick, std::map<std::uint16_t, std::size_t> sizes, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Event e;
  e.tick = tick;
  for (auto [ch, n] : sizes) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    e.channels[ch] = std::move(b);
  }
  return e;
}

struct CaptureSink : DatagramSink {
  std::vector<Bytes> out;
  bool send(std::span<const std::uint8_t> d) override {
    out.emplace_back(d.begin(), d.end());
    return true;
  }
};

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / (name + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST(Fragment, FourFragmentArithmetic) {
  const auto e = make_event(9, {{0, 4500}});
  const auto frags = fragment_event(e, 1400);
  ASSERT_EQ(frags.size(), 4u);
  const std::uint32_t offsets[] = {0, 1400, 2800, 4200};
  const std::size_t lengths[] = {1400, 1400, 1400, 300};
  for (std::size_t i = 0; i < 4; ++i) {
    auto lb = wire::decode_lb_header(frags[i]);
    auto re = wire::decode_re_header(std::span(frags[i]).subspan(16));
    ASSERT_TRUE(lb && re);
    EXPECT_EQ(lb->tick, 9u);
    EXPECT_EQ(re->offset, offsets[i]);
    EXPECT_EQ(re->total_length, 4500u);
    EXPECT_EQ(frags[i].size() - 36, lengths[i]);
  }
  EXPECT_EQ(fragment_count(e, 1400), 4u);
}

TEST(Fragment, EmptyPayloadIsHeaderOnly) {
  const auto frags = fragment_event(make_event(1, {{5, 0}}));
  ASSERT_EQ(frags.size(), 1u);
  EXPECT_EQ(frags[0].size(), 36u);
  auto re = wire::decode_re_header(std::span(frags[0]).subspan(16));
  EXPECT_EQ(re->channel, 5);
  EXPECT_EQ(re->total_length, 0u);
}

TEST(Fragment, OversizeMtu) {
  const auto e = make_event(1, {{0, 10}});
  EXPECT_THROW(fragment_event(e, 0), Error);
  EXPECT_THROW(fragment_event(e, 65507 - 35), Error);
  EXPECT_NO_THROW(fragment_event(e, 65507 - 36));
}

TEST(FragmentProperty, SlicesConcatenateToPayload) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    std::map<std::uint16_t, std::size_t> sizes;
    const int channels = 1 + static_cast<int>(rng() % 4);
    for (int c = 0; c < channels; ++c) sizes[static_cast<std::uint16_t>(rng() % 1000)] = rng() % 20000;
    const auto e = make_event(rng(), sizes, rng());
    const std::size_t mtu = 1 + rng() % 9000;
    const auto frags = fragment_event(e, mtu);
    std::map<std::uint16_t, Bytes> rebuilt;
    std::map<std::uint16_t, std::uint32_t> next_offset;
    for (const auto& f : frags) {
      auto lb = wire::decode_lb_header(f);
      auto re = wire::decode_re_header(std::span(f).subspan(16));
      ASSERT_TRUE(lb && re);
      ASSERT_EQ(lb->channel, re->channel);
      ASSERT_EQ(re->offset, next_offset[re->channel]);
      ASSERT_LE(f.size() - 36, mtu);
      ASSERT_LE(re->offset + (f.size() - 36), re->total_length);
      auto& b = rebuilt[re->channel];
      b.insert(b.end(), f.begin() + 36, f.end());
      next_offset[re->channel] += static_cast<std::uint32_t>(f.size() - 36);
    }
    ASSERT_EQ(rebuilt, e.channels);
    ASSERT_EQ(frags.size(), fragment_count(e, mtu));
  }
}

TEST(Synth, ShapeAndDeterminism) {
  SynthConfig c;
  c.count = 10;
  c.channels = 2;
  c.size_per_channel = 100;
  c.start_tick = 500;
  const auto a = synth_events(c);
  ASSERT_EQ(a.size(), 10u);
  std::size_t payloads = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tick, 500 + i);
    payloads += a[i].channels.size();
    for (auto& [ch, p] : a[i].channels) EXPECT_EQ(p.size(), 100u);
  }
  EXPECT_EQ(payloads, 20u);
  EXPECT_EQ(a, synth_events(c));
  c.seed = 2;
  EXPECT_NE(a, synth_events(c));
}

TEST(EventFile, RoundTrip) {
  SynthConfig c;
  c.count = 25;
  c.channels = 3;
  c.size_per_channel = 333;
  const auto events = synth_events(c);
  const auto path = temp_path("events.bin");
  write_event_file(path, events);
  EXPECT_EQ(load_event_file(path), events);
  std::filesystem::remove(path);
}

TEST(EventFile, TruncatedReportsOffset) {
  // Two 10-octet records; the second starts at offset 24 (tests/oracles/derive.py).
  std::vector<Event> ev{make_event(1, {{0, 10}}), make_event(2, {{0, 10}})};
  const auto path = temp_path("events-trunc.bin");
  write_event_file(path, ev);
  std::filesystem::resize_file(path, 48 - 3);
  try {
    load_event_file(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("offset 24"), std::string::npos) << e.what();
  }
  std::filesystem::resize_file(path, 24 + 5);
  try {
    load_event_file(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("offset 24"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(EventFile, TickMustIncrease) {
  Bytes blob;
  auto rec = [&](Tick t, std::uint16_t ch) {
    for (int i = 7; i >= 0; --i) blob.push_back(static_cast<std::uint8_t>(t >> (8 * i)));
    blob.push_back(static_cast<std::uint8_t>(ch >> 8));
    blob.push_back(static_cast<std::uint8_t>(ch));
    blob.insert(blob.end(), {0, 0, 0, 1, 0x55});
  };
  rec(5, 0);
  rec(5, 1);  // same tick, new channel: same event
  rec(4, 0);
  try {
    parse_event_records(blob);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("offset 30"), std::string::npos) << e.what();
  }
}

TEST(SenderCore, LookaheadSyncAndStats) {
  SynthConfig c;
  c.count = 5;
  c.size_per_channel = 3000;
  c.start_tick = 100;
  SynthEventSource src(c);
  CaptureSink sink;
  Sender s(src, sink, 1400, 7);
  // Announced start before anything is sent.
  auto first = s.make_sync(10 * kNanosPerSecond);
  EXPECT_EQ(first.latest_tick, 100u);
  EXPECT_EQ(first.event_rate_hz, 0u);
  EXPECT_EQ(first.source_id, 7u);
  EXPECT_TRUE(sink.out.empty());
  while (s.emit_next()) {
  }
  EXPECT_EQ(s.stats().events, 5u);
  EXPECT_EQ(s.stats().fragments, 15u);
  EXPECT_EQ(sink.out.size(), 15u);
  auto second = s.make_sync(11 * kNanosPerSecond);
  EXPECT_EQ(second.latest_tick, 104u);
  EXPECT_EQ(second.event_rate_hz, 5u);
  auto idle = s.make_sync(12 * kNanosPerSecond);
  EXPECT_EQ(idle.latest_tick, 104u);
  EXPECT_EQ(idle.event_rate_hz, 0u);
}

TEST(SenderCore, NonMonotonicSourceRejected) {
  std::vector<Event> ev{make_event(5, {{0, 1}}), make_event(5, {{0, 1}})};
  VectorEventSource src(ev);
  CaptureSink sink;
  Sender s(src, sink);
  try {
    s.emit_next();
    s.emit_next();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTick);
  }
}

TEST(StreamEvents, PacingAndSyncs) {
  net::UdpSocket lb(net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  net::UdpSocket cp(net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  lb.set_receive_buffer(4 << 20);
  SynthConfig c;
  c.count = 250;
  c.size_per_channel = 100;
  SynthEventSource src(c);
  StreamOptions o;
  o.lb = lb.local_address();
  o.control = cp.local_address();
  o.rate_hz = 100;
  const auto st = stream_events(src, o);
  EXPECT_EQ(st.events, 250u);
  EXPECT_EQ(st.fragments, 250u);
  EXPECT_NEAR(st.duration_s, 2.5, 2.5 * 0.05);

  std::vector<wire::SyncMessage> syncs;
  cp.set_receive_timeout_ms(50);
  std::array<std::uint8_t, 64> buf;
  while (auto n = cp.receive_from(buf)) {
    auto m = wire::decode_sync(std::span(buf).first(*n));
    ASSERT_TRUE(m);
    syncs.push_back(*m);
  }
  ASSERT_GE(syncs.size(), 2u);
  EXPECT_EQ(syncs.front().latest_tick, 1u);
  for (std::size_t i = 1; i < syncs.size(); ++i) EXPECT_GE(syncs[i].latest_tick, syncs[i - 1].latest_tick);
  if (syncs.size() >= 3) {
    EXPECT_NEAR(syncs[1].event_rate_hz, 100.0, 10.0);
  }
}

TEST(StreamEvents, UnpacedSendsEverything) {
  net::UdpSocket lb(net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  lb.set_receive_buffer(4 << 20);
  SynthConfig c;
  c.count = 300;
  c.channels = 2;
  c.size_per_channel = 2000;
  SynthEventSource src(c);
  StreamOptions o;
  o.lb = lb.local_address();
  const auto st = stream_events(src, o);
  EXPECT_EQ(st.events, 300u);
  std::size_t expect = 0;
  for (const auto& e : synth_events(c)) expect += fragment_count(e, o.mtu_payload);
  EXPECT_EQ(st.fragments, expect);
}
