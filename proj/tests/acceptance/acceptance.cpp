// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status
// is non-zero if any criterion fails.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ejfat/control_protocol.hpp"
#include "ejfat/controlplane.hpp"
#include "ejfat/harness.hpp"
#include "ejfat/receiver.hpp"
#include "ejfat/sender.hpp"
#include "ejfat/wire.hpp"

using namespace ejfat;

namespace {

constexpr std::uint64_t kS = kNanosPerSecond;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::uint64_t g_boundary_violations = 0;
std::size_t g_scenarios_run = 0;

harness::ScenarioReport run_file(const std::string& name) {
  const auto s = harness::load_scenario(std::filesystem::path(EJFAT_SCENARIO_DIR) / (name + ".json"));
  auto r = harness::run_scenario(s);
  g_boundary_violations += r.boundary_violations;
  ++g_scenarios_run;
  return r;
}

harness::ScenarioReport run_inline(const harness::Scenario& s) {
  auto r = harness::run_scenario(s);
  g_boundary_violations += r.boundary_violations;
  ++g_scenarios_run;
  return r;
}

const harness::Verdict* verdict(const harness::ScenarioReport& r, const std::string& name) {
  for (const auto& v : r.verdicts)
    if (v.name == name) return &v;
  return nullptr;
}

void require_verdict(Check& c, const harness::ScenarioReport& r, const std::string& name) {
  const auto* v = verdict(r, name);
  c.require(v && v->pass, name);
  if (v) c.detail << v->detail << "; ";
}

template <std::size_t N>
std::string hex(const std::array<std::uint8_t, N>& b) {
  std::string s;
  char buf[3];
  for (auto x : b) {
    std::snprintf(buf, sizeof buf, "%02x", x);
    s += buf;
  }
  return s;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

// 1: zero-loss churn.
void churn(Check& c) {
  const auto r = run_file("churn");
  c.require(r.emitted == 10000, "10^4 events emitted");
  c.require(r.fate(harness::Fate::Delivered) == 10000, "all delivered");
  c.require(r.sim_duration_s < 30.0, "under 30 s simulated");
  require_verdict(c, r, "zero_loss");
  require_verdict(c, r, "no_split");
  require_verdict(c, r, "digests_match");
  c.detail << "simulated " << r.sim_duration_s << " s";
}

// 2: weighted apportionment and delivery shares.
void weighted(Check& c) {
  auto counts = controlplane::apportion_slots({{1, 2.0}, {2, 1.0}, {3, 1.0}}).counts();
  c.require(counts[1] == 256 && counts[2] == 128 && counts[3] == 128, "slot counts 256/128/128");
  const auto r = run_file("weighted");
  c.require(r.emitted == 50000, "5*10^4 events");
  double total = 0;
  for (auto [n, k] : r.delivered_by) total += static_cast<double>(k);
  const std::map<std::string, double> want{{"a", 0.5}, {"b", 0.25}, {"c", 0.25}};
  c.detail << "slots " << counts[1] << "/" << counts[2] << "/" << counts[3] << "; shares";
  for (auto [n, w] : want) {
    const auto it = r.delivered_by.find(n);
    const double share = it == r.delivered_by.end() || total == 0 ? 0.0 : static_cast<double>(it->second) / total;
    c.require(std::abs(share - w) <= 0.02, "share " + n);
    c.detail << " " << n << "=" << share;
  }
}

// 3: no event split across members under reorder and duplication.
void coherence(Check& c) {
  const auto r = run_file("coherence");
  c.require(r.impairer_duplicated > 0, "duplication exercised");
  c.require(r.split_events == 0, "0 split events");
  c.detail << r.split_events << " split events, " << r.impairer_duplicated << " duplicated datagrams";
}

// 4: PID convergence and 2:1 steady-state ratio.
void pid(Check& c) {
  const auto r = run_file("pid");
  require_verdict(c, r, "fill_convergence");
  require_verdict(c, r, "arrival_ratio");
}

// 5: predictor accuracy and boundary safety across every scenario run here.
void predictor(Check& c) {
  controlplane::TickPredictor exact;
  const std::uint64_t t0 = 1'700'000'000ULL * kS;
  for (int i = 0; i < 40; ++i) exact.add_sample(1, t0 + i * kS, 1'000'000 + 1000ULL * i);
  Tick worst = 0;
  for (int k = 40; k < 100; ++k) {
    const Tick want = 1'000'000 + 1000ULL * k;
    const Tick got = exact.predict(t0 + k * kS).value_or(0);
    worst = std::max(worst, got > want ? got - want : want - got);
  }
  c.require(worst <= 1, "exact line within 1 tick");

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> noise(-10, 10);
  double worst_rel = 0;
  for (int trial = 0; trial < 200; ++trial) {
    controlplane::TickPredictor p;
    for (int i = 0; i < 16; ++i) p.add_sample(1, (100 + i) * kS, static_cast<Tick>(1000 * (100 + i) + noise(rng)));
    worst_rel = std::max(worst_rel, std::abs(p.slope() - 1000.0) / 1000.0);
  }
  c.require(worst_rel < 0.01, "noisy slope within 1%");
  c.require(g_scenarios_run >= 5, "scenarios ran");
  c.require(g_boundary_violations == 0, "0 boundary violations");
  c.detail << "exact max error " << worst << " ticks; noisy max slope error " << worst_rel * 100 << "%; "
           << g_boundary_violations << " boundary violations over " << g_scenarios_run << " scenario runs";
}

// 6: reassembly permutations, stale window, digests under reorder 8.
void reassembly(Check& c) {
  sender::SynthConfig sc;
  sc.count = 1;
  sc.size_per_channel = 4500;
  sc.start_tick = 7;
  const auto e = sender::synth_events(sc).at(0);
  std::vector<Bytes> frags;
  for (auto& f : sender::fragment_event(e, 1400)) frags.emplace_back(f.begin() + 16, f.end());
  c.require(frags.size() == 4, "4 fragments");
  std::vector<std::size_t> idx{0, 1, 2, 3};
  int identical = 0;
  do {
    receiver::Reassembler r;
    std::optional<receiver::CompletedChannel> done;
    for (auto i : idx) done = r.ingest(frags[i], 0);
    identical += done && done->payload == e.channels.at(0);
  } while (std::next_permutation(idx.begin(), idx.end()));
  c.require(identical == 24, "24 permutations identical");

  receiver::Reassembler r;
  wire::ReassemblyHeader h;
  h.total_length = 4;
  auto datagram = [&](Tick t) {
    h.tick = t;
    const auto hdr = wire::encode_re_header(h);
    Bytes d(hdr.begin(), hdr.end());
    d.insert(d.end(), 4, 1);
    return d;
  };
  r.ingest(datagram(1000), 0);
  const bool stale_dropped = !r.ingest(datagram(1000 - 65), 0);
  c.require(stale_dropped && r.counters().stale == 1, "stale packet dropped and counted");

  harness::Scenario s;
  s.name = "reorder8";
  s.seed = 17;
  s.sender.rate_hz = 1000;
  s.sender.count = 10000;
  s.sender.channels = 2;
  s.sender.size_per_channel = 3000;
  s.impairment.reorder = 8;
  s.impairment.seed = 17;
  for (const char* n : {"a", "b"}) {
    harness::ReceiverSpec rs;
    rs.name = n;
    rs.port_count = 2;
    s.receivers.push_back(rs);
  }
  s.expect = {{"zero_loss", true}, {"digests_match", true}};
  const auto rep = run_inline(s);
  require_verdict(c, rep, "zero_loss");
  require_verdict(c, rep, "digests_match");
  c.detail << identical << "/24 permutations; stale counted " << r.counters().stale;
}

// 7: wire codecs.
void wire_codecs(Check& c) {
  wire::LbMetaHeader lb;
  lb.channel = 3;
  lb.tick = 1025;
  c.require(hex(wire::encode_lb_header(lb)) == "4c420101000000030000000000000401", "lb golden");
  wire::ReassemblyHeader re;
  re.channel = 2;
  re.offset = 1400;
  re.total_length = 4500;
  re.tick = 7;
  c.require(hex(wire::encode_re_header(re)) == "1000000200000578000011940000000000000007", "re golden");
  wire::SyncMessage sy;
  sy.source_id = 1;
  sy.latest_tick = 5000;
  sy.event_rate_hz = 1000;
  c.require(hex(wire::encode_sync(sy)) == "4c430100000000010000000000001388000003e80000000000000000", "sync golden");

  std::mt19937_64 rng(20240611);
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    wire::LbMetaHeader l{.channel = static_cast<std::uint16_t>(rng()), .tick = rng()};
    wire::ReassemblyHeader r{.channel = static_cast<std::uint16_t>(rng()), .offset = static_cast<std::uint32_t>(rng()),
                             .total_length = static_cast<std::uint32_t>(rng()), .tick = rng()};
    wire::SyncMessage s{.source_id = static_cast<std::uint32_t>(rng()), .latest_tick = rng(),
                        .event_rate_hz = static_cast<std::uint32_t>(rng()), .wallclock_ns = rng()};
    const auto dl = wire::decode_lb_header(wire::encode_lb_header(l));
    const auto dr = wire::decode_re_header(wire::encode_re_header(r));
    const auto ds = wire::decode_sync(wire::encode_sync(s));
    bad += !dl || !(*dl == l);
    bad += !dr || !(*dr == r);
    bad += !ds || !(*ds == s);
  }
  c.require(bad == 0, "round trips");

  std::size_t fuzzed = 0;
  for (int i = 0; i < 200000; ++i) {
    std::vector<std::uint8_t> buf(rng() % 40);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    if (buf.size() >= 3 && i % 3 == 0) {
      buf[0] = 'L';
      buf[1] = i % 2 ? 'B' : 'C';
      buf[2] = 1;
    }
    (void)wire::decode_lb_header(buf);
    (void)wire::decode_re_header(buf);
    (void)wire::decode_sync(buf);
    ++fuzzed;
  }
  c.detail << "3 golden vectors; 10^5 round trips, " << bad << " mismatches; " << fuzzed << " fuzz inputs";
}

// 8: instance capacity, in process and over the control protocol.
void capacity(Check& c) {
  ManualClock clock(100 * kS);
  controlplane::ControlPlane cp(clock);
  control::ControlServer server(cp, net::SocketAddress{net::Ipv4{0x7f000001}, 0});
  control::ControlClient client(server.address());
  int ok = 0;
  for (int i = 0; i < 8; ++i) {
    const auto r = client.request({{"verb", "reserve"}, {"listen", "127.0.0.1:0"}});
    ok += r.value("ok", false);
  }
  const auto ninth = client.request({{"verb", "reserve"}, {"listen", "127.0.0.1:0"}});
  c.require(ok == 8, "8 reservations succeed");
  c.require(!ninth.value("ok", true) && ninth.value("error", "") == "CapacityExhausted", "9th is CapacityExhausted");
  dataplane::InstanceConfig ic;
  ic.listen = net::SocketAddress{net::Ipv4{0x7f000001}, 0};
  c.require(code_of([&] { cp.reserve_instance(ic); }) == ErrorCode::CapacityExhausted, "in-process 9th");
  server.stop();
  c.detail << ok << " reserved; 9th: " << ninth.value("error", "?");
}

// 9: control-plane crash and snapshot restore.
void restart(Check& c) {
  const auto r = run_file("restart");
  c.require(r.boundary_before_restart && r.first_boundary_after_restart &&
                *r.first_boundary_after_restart > *r.boundary_before_restart,
            "first boundary after restart exceeds boundary before");
  require_verdict(c, r, "zero_loss");
  require_verdict(c, r, "restart_monotone");
}

// 10: real-socket throughput floor.
void throughput(Check& c) {
  harness::ThroughputOptions o;
  o.events = 20000;
  o.channels = 4;
  o.size_per_channel = 8400;
  o.mtu = 8400;
  o.rate_hz = 3000;
  const auto t = harness::run_throughput(o);
  c.require(t.mbps >= 500.0, ">= 500 Mbps");
  c.require(t.dp_drop_fraction < 0.001, "< 0.1% drops");
  c.detail << "measured " << t.mbps << " Mbps, drop fraction " << t.dp_drop_fraction << ", " << t.fragments_sent
           << " fragments, " << t.events_received << " events received";
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"1 zero-loss membership churn", churn},
      {"2 weighted distribution", weighted},
      {"3 epoch coherence", coherence},
      {"4 PID convergence", pid},
      {"6 reassembly", reassembly},
      {"7 wire codecs", wire_codecs},
      {"8 instance capacity", capacity},
      {"9 crash recovery", restart},
      {"5 tick predictor and boundary safety", predictor},
      {"10 throughput floor", throughput},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << "exception: " << e.what();
    }
    failed += !c.ok;
    std::printf("%s criterion %s: %s\n", c.ok ? "PASS" : "FAIL", name.c_str(), c.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
