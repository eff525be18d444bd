#include <gtest/gtest.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "ejfat/control_protocol.hpp"
#include "ejfat/controlplane.hpp"
#include "ejfat/metrics.hpp"

using namespace ejfat;
using namespace ejfat::controlplane;

namespace {

constexpr std::uint64_t kS = kNanosPerSecond;

dataplane::InstanceConfig inst_cfg(std::uint16_t port = 19522) {
  dataplane::InstanceConfig c;
  c.listen = net::SocketAddress{net::Ipv4{0x7f000001}, port};
  return c;
}

dataplane::Endpoint ep(std::uint32_t ip, std::uint16_t base = 20000, std::uint16_t count = 1) {
  return {net::Ipv4{ip}, base, count};
}

wire::SyncMessage sync_msg(std::uint32_t src, Tick tick, std::uint64_t t_ns) {
  wire::SyncMessage s;
  s.source_id = src;
  s.latest_tick = tick;
  s.wallclock_ns = t_ns;
  return s;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / (name + "-" + std::to_string(::getpid()));
}

}  // namespace

TEST(Apportion, ExactDivision) {
  auto t = apportion_slots({{1, 2.0}, {2, 1.0}, {3, 1.0}});
  auto c = t.counts();
  EXPECT_EQ(c[1], 256u);
  EXPECT_EQ(c[2], 128u);
  EXPECT_EQ(c[3], 128u);
  // Interleaved deal: 1,2,3 repeating, tail of 1s.
  EXPECT_EQ((std::vector<SessionId>(t.slots.begin(), t.slots.begin() + 8)),
            (std::vector<SessionId>{1, 2, 3, 1, 2, 3, 1, 2}));
  EXPECT_EQ(t.slots.back(), 1u);
}

TEST(Apportion, TieBreakBySessionId) {
  auto c = apportion_slots({{1, 1.0}, {2, 1.0}, {3, 1.0}}).counts();
  EXPECT_EQ(c[1], 171u);
  EXPECT_EQ(c[2], 171u);
  EXPECT_EQ(c[3], 170u);
}

TEST(Apportion, SingleAndEmpty) {
  EXPECT_EQ(apportion_slots({{7, 0.3}}).counts()[7], 512u);
  EXPECT_EQ(code_of([] { apportion_slots({}); }), ErrorCode::EmptyWeights);
  EXPECT_EQ(code_of([] { apportion_slots({{1, 0.0}}); }), ErrorCode::EmptyWeights);
}

TEST(Apportion, SumsToSlotCountForRandomWeights) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(0.05, 20.0);
  for (int i = 0; i < 500; ++i) {
    WeightVector v;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int k = 1; k <= n; ++k) v[static_cast<SessionId>(k)] = w(rng);
    const auto t = apportion_slots(v);
    std::size_t sum = 0;
    for (auto [id, c] : t.counts()) sum += c;
    ASSERT_EQ(sum, 512u);
    ASSERT_FALSE(t.slots.empty());
    for (auto s : t.slots) ASSERT_NE(s, dataplane::kNoMember);
  }
}

TEST(Predictor, TwoPointLine) {
  TickPredictor p;
  EXPECT_FALSE(p.predict(0));
  p.add_sample(1, 10 * kS, 5000);
  EXPECT_DOUBLE_EQ(p.slope(), 0.0);
  EXPECT_EQ(*p.predict(50 * kS), 5000u);
  p.add_sample(1, 11 * kS, 6000);
  EXPECT_NEAR(p.slope(), 1000.0, 1e-9);
  EXPECT_EQ(*p.predict(13 * kS), 8000u);
  EXPECT_EQ(*p.predict(10 * kS + kS / 2), 6000u);
  EXPECT_FALSE(p.add_sample(1, 12 * kS, 5999));
  EXPECT_TRUE(p.add_sample(2, 12 * kS, 100));  // other source, own history
}

TEST(Predictor, ExactLineExtrapolatesWithinOneTick) {
  TickPredictor p;
  const std::uint64_t t0 = 1'700'000'000ULL * kS;
  for (int i = 0; i < 40; ++i) p.add_sample(1, t0 + i * kS, 1'000'000 + 1000ULL * i);
  for (int k = 40; k < 100; ++k) {
    const auto want = 1'000'000 + 1000ULL * k;
    const auto got = *p.predict(t0 + k * kS);
    EXPECT_LE(got > want ? got - want : want - got, 1u);
  }
  EXPECT_EQ(p.samples().size(), 16u);
}

TEST(Predictor, NoisyLeastSquaresMatchesOracle) {
  // tests/oracles/derive.py: numpy polyfit over t = 10..25 s.
  const int noise[16] = {10, -7, -10, -2, -3, -3, -6, -7, 7, -8, 8, 3, -9, -10, -8, -4};
  TickPredictor p;
  for (int i = 0; i < 16; ++i) {
    const int t = 10 + i;
    p.add_sample(1, static_cast<std::uint64_t>(t) * kS, static_cast<Tick>(1000 * t + noise[i]));
  }
  EXPECT_NEAR(p.slope(), 999.733823529, 1e-6);
  EXPECT_LT(std::abs(p.slope() - 1000.0) / 1000.0, 0.01);
  EXPECT_EQ(*p.predict(30 * kS), 29994u);
}

TEST(Predictor, NoisyRandomSlopeWithinOnePercent) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> noise(-10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    TickPredictor p;
    for (int i = 0; i < 16; ++i) p.add_sample(1, (100 + i) * kS, static_cast<Tick>(1000 * (100 + i) + noise(rng)));
    ASSERT_LT(std::abs(p.slope() - 1000.0), 10.0);
  }
}

TEST(ControlPlaneInstances, CapacityAndReuse) {
  ManualClock clock;
  ControlPlane cp(clock);
  EXPECT_EQ(cp.reserve_instance(inst_cfg()), 0u);
  for (int i = 1; i < 8; ++i) cp.reserve_instance(inst_cfg(static_cast<std::uint16_t>(19522 + i)));
  EXPECT_EQ(cp.available_capacity(), 0u);
  EXPECT_EQ(code_of([&] { cp.reserve_instance(inst_cfg(1)); }), ErrorCode::CapacityExhausted);
  cp.free_instance(0);
  EXPECT_EQ(cp.available_capacity(), 1u);
  EXPECT_EQ(cp.reserve_instance(inst_cfg()), 0u);
  EXPECT_EQ(code_of([&] { cp.free_instance(42); }), ErrorCode::UnknownInstance);
}

TEST(ControlPlaneInstances, FreeTwice) {
  ManualClock clock;
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  cp.free_instance(0);
  EXPECT_EQ(cp.available_capacity(), 8u);
  EXPECT_EQ(code_of([&] { cp.free_instance(0); }), ErrorCode::UnknownInstance);
}

TEST(ControlPlaneMembers, RegisterFirstEpochOwnsAllSlots) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto s = cp.register_member(0, ep(1));
  EXPECT_EQ(code_of([&] { cp.register_member(0, ep(1)); }), ErrorCode::DuplicateEndpoint);
  EXPECT_EQ(code_of([&] { cp.register_member(3, ep(2)); }), ErrorCode::UnknownInstance);
  auto r = cp.control_tick(0, clock.now_ns());
  ASSERT_TRUE(r.emitted);
  EXPECT_EQ(r.emitted->table.counts()[s], 512u);
  // Steady state: nothing new.
  clock.advance(kS);
  EXPECT_FALSE(cp.control_tick(0, clock.now_ns()).emitted);
}

TEST(ControlPlaneMembers, AddedMemberGivesOneFutureEpoch) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  cp.register_member(0, ep(1));
  cp.ingest_sync(0, sync_msg(1, 1000, 100 * kS));
  cp.control_tick(0, clock.now_ns());
  clock.advance(kS);
  cp.ingest_sync(0, sync_msg(1, 2000, 101 * kS));
  cp.register_member(0, ep(2));
  auto r = cp.control_tick(0, clock.now_ns());
  ASSERT_TRUE(r.emitted);
  EXPECT_GT(r.emitted->boundary_tick, 2000u);
  EXPECT_EQ(r.emitted->table.counts().size(), 2u);
  clock.advance(kS);
  EXPECT_FALSE(cp.control_tick(0, clock.now_ns()).emitted);
}

TEST(ControlPlaneMembers, DeregisterSoleMemberGivesNullTable) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto s = cp.register_member(0, ep(1));
  cp.control_tick(0, clock.now_ns());
  cp.deregister_member(s);
  EXPECT_EQ(code_of([&] { cp.deregister_member(s); }), ErrorCode::AlreadyDraining);
  EXPECT_EQ(code_of([&] { cp.deregister_member(999); }), ErrorCode::UnknownSession);
  auto r = cp.control_tick(0, clock.now_ns());
  ASSERT_TRUE(r.emitted);
  EXPECT_TRUE(r.emitted->table.all_null());

  auto dp = cp.dataplane(0);
  wire::LbMetaHeader h;
  h.tick = r.emitted->boundary_tick + 5;
  auto b = wire::encode_lb_header(h);
  std::vector<std::uint8_t> d(b.begin(), b.end());
  d.resize(40);
  auto fr = dp->forward(d);
  ASSERT_TRUE(std::holds_alternative<dataplane::Drop>(fr));
  EXPECT_EQ(std::get<dataplane::Drop>(fr).reason, dataplane::DropReason::NullSlot);
}

TEST(ControlPlaneMembers, RetiredAfterDrainDelay) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto a = cp.register_member(0, ep(1));
  cp.register_member(0, ep(2));
  cp.control_tick(0, clock.now_ns());
  cp.deregister_member(a);
  // Push the epoch referencing `a` out of retention.
  std::vector<SessionId> retired;
  for (int i = 0; i < 12 && retired.empty(); ++i) {
    clock.advance(kS);
    if (i < 5) cp.register_member(0, ep(10 + static_cast<std::uint32_t>(i)));
    retired = cp.control_tick(0, clock.now_ns()).retired;
  }
  EXPECT_EQ(retired, std::vector<SessionId>{a});
  FillReport rep;
  rep.session_id = a;
  EXPECT_EQ(code_of([&] { cp.ingest_fill_report(rep); }), ErrorCode::UnknownSession);
}

TEST(ControlPlaneReports, StoredAndStaleMembersExcluded) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto a = cp.register_member(0, ep(1));
  const auto b = cp.register_member(0, ep(2));
  FillReport r;
  r.session_id = a;
  r.queue_fill = 0.8;
  cp.ingest_fill_report(r);
  auto st = cp.status(0);
  EXPECT_DOUBLE_EQ(st.members.at(0).latest_report->queue_fill, 0.8);
  EXPECT_NE(metrics::render(cp).find("lb_member_fill{instance=\"0\",session=\"1\"} 0.8"), std::string::npos);

  clock.advance(3 * kS);
  r.wallclock_ns = clock.now_ns();
  cp.ingest_fill_report(r);  // only `a` keeps reporting
  const auto w = cp.update_weights(0);
  EXPECT_TRUE(w.count(a));
  EXPECT_FALSE(w.count(b));
}

TEST(ControlPlaneWeights, MultiplicativeStepAndClamp) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto a = cp.register_member(0, ep(1));
  EXPECT_DOUBLE_EQ(cp.update_weights(0).at(a), 1.0);
  FillReport r;
  r.session_id = a;
  r.control_signal = 1.0;
  cp.ingest_fill_report(r);
  EXPECT_DOUBLE_EQ(cp.update_weights(0).at(a), 1.5);
  // Signal is consumed once.
  EXPECT_DOUBLE_EQ(cp.update_weights(0).at(a), 1.5);
  r.control_signal = -1.0;
  double prev = 1.5;
  for (int i = 0; i < 20; ++i) {
    cp.ingest_fill_report(r);
    const double w = cp.update_weights(0).at(a);
    EXPECT_LE(w, prev);
    EXPECT_GE(w, 0.05);
    prev = w;
  }
  EXPECT_DOUBLE_EQ(prev, 0.05);
}

TEST(ControlPlaneWeights, NotReadyMembersExcluded) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  const auto a = cp.register_member(0, ep(1));
  FillReport r;
  r.session_id = a;
  r.ready = false;
  cp.ingest_fill_report(r);
  EXPECT_EQ(code_of([&] { cp.update_weights(0); }), ErrorCode::NoReadyMembers);
}

TEST(ControlPlaneSync, RegressionCounted) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  EXPECT_EQ(code_of([&] { cp.predict_tick(0, 0); }), ErrorCode::NoSyncData);
  cp.ingest_sync(0, sync_msg(1, 5000, 10 * kS));
  cp.ingest_sync(0, sync_msg(1, 6000, 11 * kS));
  EXPECT_EQ(cp.predict_tick(0, 13 * kS), 8000u);
  EXPECT_EQ(code_of([&] { cp.ingest_sync(0, sync_msg(1, 10, 12 * kS)); }), ErrorCode::NonMonotonicTick);
  EXPECT_EQ(cp.status(0).sync_rejected, 1u);
}

TEST(ControlPlaneBoundary, FloorAboveForwardedTraffic) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  cp.register_member(0, ep(1));
  cp.ingest_sync(0, sync_msg(1, 100, 99 * kS));
  cp.control_tick(0, clock.now_ns());
  // Traffic far ahead of a stale prediction.
  auto dp = cp.dataplane(0);
  wire::LbMetaHeader h;
  h.tick = 50000;
  auto b = wire::encode_lb_header(h);
  std::vector<std::uint8_t> d(b.begin(), b.end());
  d.resize(40);
  dp->forward(d);
  cp.register_member(0, ep(2));
  auto r = cp.control_tick(0, clock.now_ns());
  ASSERT_TRUE(r.emitted);
  EXPECT_TRUE(r.floor_applied);
  EXPECT_GT(r.emitted->boundary_tick, 50000u);
  EXPECT_EQ(cp.status(0).boundary_floor_hits, 1u);
}

TEST(Snapshot, MissingFileGivesEmptyState) {
  ManualClock clock;
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  EXPECT_EQ(cp.restore_state(temp_path("no-such-snapshot")), RestoreOutcome::Missing);
  EXPECT_TRUE(cp.instances().empty());
}

TEST(Snapshot, TruncatedAndCorruptRejected) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  cp.register_member(0, ep(1));
  const auto path = temp_path("snap-corrupt");
  cp.persist_state(path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  ControlPlane other(clock);
  EXPECT_EQ(code_of([&] { other.restore_state(path); }), ErrorCode::CorruptSnapshot);
  EXPECT_TRUE(other.instances().empty());

  auto flipped = bytes;
  flipped[20] ^= 0x01;
  EXPECT_EQ(code_of([&] { other.restore_from_bytes(flipped); }), ErrorCode::CorruptSnapshot);
  EXPECT_EQ(code_of([&] { other.restore_from_bytes("garbage"); }), ErrorCode::CorruptSnapshot);
  std::filesystem::remove(path);
}

TEST(Snapshot, ReplayEquivalence) {
  ManualClock clock(100 * kS);
  ControlPlane a(clock);
  a.reserve_instance(inst_cfg());
  std::vector<SessionId> s;
  for (std::uint32_t i = 1; i <= 3; ++i) s.push_back(a.register_member(0, ep(i)));
  Tick tick = 1000;
  auto drive = [&](ControlPlane& cp, int step) {
    cp.ingest_sync(0, sync_msg(1, tick + 1000 * static_cast<Tick>(step), clock.now_ns()));
    for (std::size_t k = 0; k < s.size(); ++k) {
      FillReport r;
      r.session_id = s[k];
      r.queue_fill = 0.1 * static_cast<double>(k + step % 3);
      r.control_signal = 0.2 * static_cast<double>(k) - 0.1 * (step % 2);
      r.wallclock_ns = clock.now_ns();
      cp.ingest_fill_report(r);
    }
    return cp.control_tick(0, clock.now_ns()).emitted;
  };
  for (int i = 0; i < 4; ++i) {
    drive(a, i);
    clock.advance(kS);
  }
  const auto path = temp_path("snap-replay");
  a.persist_state(path);
  ControlPlane b(clock);
  ASSERT_EQ(b.restore_state(path), RestoreOutcome::Restored);
  EXPECT_EQ(a.snapshot(), b.snapshot());
  EXPECT_EQ(a.dataplane(0)->epochs(), b.dataplane(0)->epochs());
  for (int i = 4; i < 12; ++i) {
    const auto ea = drive(a, i);
    const auto eb = drive(b, i);
    ASSERT_EQ(ea.has_value(), eb.has_value());
    if (ea) {
      EXPECT_EQ(*ea, *eb);
    }
    clock.advance(kS);
  }
  EXPECT_EQ(a.snapshot(), b.snapshot());
  std::filesystem::remove(path);
}

TEST(ControlProtocol, VerbsAndErrors) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  using control::json;
  auto res = control::handle_request(cp, {{"verb", "reserve"}, {"listen", "127.0.0.1:19522"}});
  ASSERT_TRUE(res["ok"].get<bool>()) << res.dump();
  EXPECT_EQ(res["instance_id"], 0);
  res = control::handle_request(cp, {{"verb", "register"}, {"instance_id", 0}, {"ip", "10.0.0.2"},
                                     {"base_port", 20000}, {"port_count", 4}});
  ASSERT_TRUE(res["ok"].get<bool>()) << res.dump();
  const auto session = res["session_id"].get<SessionId>();
  res = control::handle_request(cp, {{"verb", "register"}, {"instance_id", 0}, {"ip", "10.0.0.2"},
                                     {"base_port", 20002}, {"port_count", 1}});
  EXPECT_EQ(res["error"], "DuplicateEndpoint");
  res = control::handle_request(cp, {{"verb", "report"}, {"session_id", session}, {"fill", 0.25}, {"control", 0.1}});
  EXPECT_TRUE(res["ok"].get<bool>()) << res.dump();
  res = control::handle_request(cp, {{"verb", "query"}});
  ASSERT_TRUE(res["ok"].get<bool>());
  EXPECT_EQ(res["available"], 7);
  EXPECT_EQ(res["instances"].size(), 1u);
  res = control::handle_request(cp, {{"verb", "deregister"}, {"session_id", 77}});
  EXPECT_EQ(res["error"], "UnknownSession");
  res = control::handle_request(cp, {{"verb", "nope"}});
  EXPECT_EQ(res["error"], "InvalidArgument");
  res = control::handle_request(cp, {{"verb", "report"}, {"session_id", session}, {"fill", 1.5}, {"control", -4}});
  EXPECT_TRUE(res["ok"].get<bool>());
  const auto rep = *cp.status(0).members.at(0).latest_report;
  EXPECT_DOUBLE_EQ(rep.queue_fill, 1.0);
  EXPECT_DOUBLE_EQ(rep.control_signal, -1.0);
  res = control::handle_request(cp, {{"verb", "report"}, {"session_id", session}});
  EXPECT_EQ(res["error"], "InvalidArgument");
  res = control::handle_request(cp, json::array());
  EXPECT_FALSE(res["ok"].get<bool>());
}

TEST(ControlProtocol, OverTcp) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  control::ControlServer server(cp, net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  control::ControlClient client(server.address());
  auto r = client.call({{"verb", "reserve"}, {"listen", "127.0.0.1:0"}});
  EXPECT_EQ(r["instance_id"], 0);
  for (int i = 1; i < 8; ++i) client.call({{"verb", "reserve"}, {"listen", "127.0.0.1:0"}});
  EXPECT_EQ(code_of([&] { client.call({{"verb", "reserve"}, {"listen", "127.0.0.1:0"}}); }),
            ErrorCode::CapacityExhausted);
  server.stop();
  EXPECT_EQ(code_of([&] { client.request({{"verb", "query"}}); }), ErrorCode::SocketError);
}

TEST(SyncListener, RoutesByInstanceOctet) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg(1));
  cp.reserve_instance(inst_cfg(2));
  control::SyncListener listener(cp, net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  net::UdpSocket sock;
  const auto m = wire::encode_sync(sync_msg(control::make_source_id(1, 5), 4242, 100 * kS));
  sock.send_to(m, listener.address());
  for (int i = 0; i < 200; ++i) {
    if (cp.status(1).predicted_tick) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  EXPECT_EQ(cp.status(1).predicted_tick, 4242u);
  EXPECT_FALSE(cp.status(0).predicted_tick);
  listener.stop();
}

TEST(Metrics, ExpositionText) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  cp.register_member(0, ep(1));
  cp.control_tick(0, clock.now_ns());
  const auto text = metrics::render(cp);
  for (const char* needle :
       {"# TYPE lb_received_total counter", "lb_member_slots{instance=\"0\",session=\"1\"} 512",
        "lb_member_weight{instance=\"0\",session=\"1\"} 1", "lb_epochs_total{instance=\"0\"} 1",
        "lb_dropped_total{instance=\"0\",reason=\"NullSlot\"} 0"}) {
    EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
  }
}

TEST(Metrics, HttpEndpoint) {
  ManualClock clock(100 * kS);
  ControlPlane cp(clock);
  cp.reserve_instance(inst_cfg());
  metrics::MetricsServer server(cp, net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  ASSERT_NE(server.port(), 0);
  // Plain TCP GET so the test does not depend on the server library's client.
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in sa{};
  net::SocketAddress{net::Ipv4{0x7f000001}, server.port()}.to_sockaddr(sa);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)), 0);
  const std::string req = "GET /metrics HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n";
  ASSERT_EQ(::send(fd, req.data(), req.size(), 0), static_cast<ssize_t>(req.size()));
  std::string resp;
  char buf[4096];
  for (ssize_t n; (n = ::recv(fd, buf, sizeof(buf), 0)) > 0;) resp.append(buf, static_cast<std::size_t>(n));
  ::close(fd);
  EXPECT_NE(resp.find("200"), std::string::npos);
  EXPECT_NE(resp.find("lb_received_total{instance=\"0\"} 0"), std::string::npos) << resp;
  server.stop();
}
