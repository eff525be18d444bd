#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "ejfat/wire.hpp"

using namespace ejfat;
using namespace ejfat::wire;

namespace {

template <std::size_t N>
std::string hex(const std::array<std::uint8_t, N>& b) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (auto x : b) {
    s += d[x >> 4];
    s += d[x & 15];
  }
  return s;
}

std::vector<std::uint8_t> unhex(const std::string& s) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) out.push_back(static_cast<std::uint8_t>(std::stoul(s.substr(i, 2), nullptr, 16)));
  return out;
}

}  // namespace

// Golden vectors from tests/oracles/derive.py.
TEST(WireGolden, LbHeaderZero) {
  EXPECT_EQ(hex(encode_lb_header({})), "4c420101000000000000000000000000");
}

TEST(WireGolden, LbHeaderChannelAndTick) {
  LbMetaHeader h;
  h.channel = 3;
  h.tick = 1025;
  EXPECT_EQ(hex(encode_lb_header(h)), "4c420101000000030000000000000401");
}

TEST(WireGolden, LbHeaderMaxTick) {
  LbMetaHeader h;
  h.tick = ~Tick{0};
  EXPECT_EQ(hex(encode_lb_header(h)), "4c42010100000000ffffffffffffffff");
}

TEST(WireGolden, ReassemblyHeader) {
  ReassemblyHeader h;
  h.channel = 2;
  h.offset = 1400;
  h.total_length = 4500;
  h.tick = 7;
  EXPECT_EQ(hex(encode_re_header(h)), "1000000200000578000011940000000000000007");
  EXPECT_EQ(hex(encode_re_header({})), "1000000000000000000000000000000000000000");
}

TEST(WireGolden, Sync) {
  SyncMessage s;
  s.source_id = 1;
  s.latest_tick = 5000;
  s.event_rate_hz = 1000;
  EXPECT_EQ(hex(encode_sync(s)), "4c430100000000010000000000001388000003e80000000000000000");
}

TEST(WireDecode, LbRoundTripAndErrors) {
  const auto bytes = encode_lb_header({});
  auto d = decode_lb_header(bytes);
  ASSERT_TRUE(d);
  EXPECT_EQ(*d, LbMetaHeader{});

  const auto sync = encode_sync({});
  auto bad = decode_lb_header(sync);
  ASSERT_FALSE(bad);
  EXPECT_EQ(bad.error(), WireError::BadMagic);

  auto v2 = bytes;
  v2[2] = 2;
  ASSERT_FALSE(decode_lb_header(v2));
  EXPECT_EQ(decode_lb_header(v2).error(), WireError::BadVersion);

  EXPECT_EQ(decode_lb_header(std::span(bytes).first(15)).error(), WireError::Truncated);
}

TEST(WireDecode, ReservedBitsIgnored) {
  auto b = unhex("4c420101ffff00030000000000000401");
  auto d = decode_lb_header(b);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->channel, 3);
  EXPECT_EQ(d->tick, 1025u);
  EXPECT_EQ(hex(encode_lb_header(*d)), "4c420101000000030000000000000401");

  auto r = unhex("1fff000200000578000011940000000000000007");
  auto dr = decode_re_header(r);
  ASSERT_TRUE(dr);
  EXPECT_EQ(dr->offset, 1400u);
}

TEST(WireDecode, ReBadVersionAndTruncated) {
  auto r = unhex("2000000200000578000011940000000000000007");
  EXPECT_EQ(decode_re_header(r).error(), WireError::BadVersion);
  r = unhex("10000002000005780000119400000000000000");
  EXPECT_EQ(decode_re_header(r).error(), WireError::Truncated);
}

TEST(WireDecode, SyncZeroRoundTripAndTruncation) {
  const auto b = encode_sync({});
  auto d = decode_sync(b);
  ASSERT_TRUE(d);
  EXPECT_EQ(*d, SyncMessage{});
  EXPECT_EQ(decode_sync(std::span(b).first(27)).error(), WireError::Truncated);
  EXPECT_EQ(decode_sync(encode_lb_header({})).error(), WireError::Truncated);
  std::vector<std::uint8_t> lbmagic(b.begin(), b.end());
  lbmagic[1] = 'B';
  EXPECT_EQ(decode_sync(lbmagic).error(), WireError::BadMagic);
}

TEST(WireProperty, RandomRoundTrips) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 100000; ++i) {
    LbMetaHeader lb;
    lb.channel = static_cast<std::uint16_t>(rng());
    lb.tick = rng();
    auto l = decode_lb_header(encode_lb_header(lb));
    ASSERT_TRUE(l);
    ASSERT_EQ(*l, lb);

    ReassemblyHeader re;
    re.channel = static_cast<std::uint16_t>(rng());
    re.offset = static_cast<std::uint32_t>(rng());
    re.total_length = static_cast<std::uint32_t>(rng());
    re.tick = rng();
    auto r = decode_re_header(encode_re_header(re));
    ASSERT_TRUE(r);
    ASSERT_EQ(*r, re);

    SyncMessage s;
    s.source_id = static_cast<std::uint32_t>(rng());
    s.latest_tick = rng();
    s.event_rate_hz = static_cast<std::uint32_t>(rng());
    s.wallclock_ns = rng();
    auto y = decode_sync(encode_sync(s));
    ASSERT_TRUE(y);
    ASSERT_EQ(*y, s);
  }
}

TEST(WireFuzz, DecodersNeverCrash) {
  std::mt19937_64 rng(7);
  std::size_t decoded = 0;
  for (int i = 0; i < 200000; ++i) {
    std::vector<std::uint8_t> buf(rng() % 40);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    // Bias some inputs toward valid magic so the field paths get exercised.
    if (buf.size() >= 4 && (i % 3 == 0)) {
      buf[0] = 'L';
      buf[1] = (i % 2) ? 'B' : 'C';
      buf[2] = 1;
    }
    decoded += decode_lb_header(buf).has_value();
    decoded += decode_re_header(buf).has_value();
    decoded += decode_sync(buf).has_value();
  }
  EXPECT_GT(decoded, 0u);
}
