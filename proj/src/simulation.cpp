#include <unistd.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "ejfat/error.hpp"
#include "ejfat/harness.hpp"
#include "ejfat/log.hpp"

namespace ejfat::harness {
namespace {

using controlplane::SessionId;

// Same-instant ordering of scheduled work.
enum Phase : int {
  kAction,
  kSync,
  kReport,
  kControl,
  kDeliver,
  kEmit,
  kService,
  kHousekeeping,
  kSample,
};

constexpr std::uint64_t kSecond = kNanosPerSecond;
constexpr std::uint64_t kHousekeepingPeriod = kSecond / 10;
constexpr controlplane::InstanceId kInstance = 0;

std::uint64_t to_ns(double s) { return static_cast<std::uint64_t>(std::llround(s * 1e9)); }
double to_s(std::uint64_t ns) { return static_cast<double>(ns) / 1e9; }

struct Item {
  std::uint64_t t;
  int phase;
  std::uint64_t seq;
  std::function<void()> fn;
  bool operator>(const Item& o) const noexcept {
    if (t != o.t) return t > o.t;
    if (phase != o.phase) return phase > o.phase;
    return seq > o.seq;
  }
};

class CollectSink final : public sender::DatagramSink {
 public:
  bool send(std::span<const std::uint8_t> d) override {
    out.emplace_back(d.begin(), d.end());
    return true;
  }
  std::vector<Bytes> out;
};

struct SimReceiver {
  ReceiverSpec spec;
  std::unique_ptr<receiver::Receiver> rx;
  dataplane::Endpoint endpoint;
  std::optional<SessionId> session;
  bool draining = false;
  bool retired = false;
  std::optional<double> rate;
  std::uint64_t service_gen = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t deliveries = 0;
  double last_reported_fill = 0.0;
};

class Simulation {
 public:
  explicit Simulation(const Scenario& s);
  ~Simulation();
  ScenarioReport run();

 private:
  void at(std::uint64_t t, int phase, std::function<void()> fn) {
    queue_.push(Item{t, phase, seq_++, std::move(fn)});
  }
  bool running() const { return !end_ns_ || now() <= *end_ns_; }
  std::uint64_t now() const { return clock_.now_ns(); }

  void do_action(const Action& a);
  void start_sender();
  void emit(std::uint64_t index);
  void sync_tick();
  void finish_sending();
  void deliver(const Bytes& datagram);
  void service(std::size_t r, std::uint64_t gen);
  void consume(std::size_t r, Event&& e);
  void control_tick();
  void reports();
  void housekeeping();
  void sample();
  void kill_cp();
  void restart_cp();
  SimReceiver& by_name(const std::string& name);
  std::string name_of(SessionId s) const;
  void finalize();
  void evaluate();

  const Scenario& sc_;
  ManualClock clock_{0};
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::optional<std::uint64_t> end_ns_;

  std::unique_ptr<controlplane::ControlPlane> cp_;
  std::shared_ptr<dataplane::LbInstance> dp_;
  std::optional<std::filesystem::path> snapshot_path_;
  bool restarted_ = false;

  sender::SynthEventSource source_;
  CollectSink sink_;
  sender::Sender sender_;
  Impairer impairer_;
  bool sending_ = false;
  bool sender_done_ = false;
  std::uint64_t sender_start_ns_ = 0;
  std::optional<double> sender_end_s_;

  std::vector<SimReceiver> receivers_;
  std::map<std::uint32_t, std::size_t> by_ip_;
  std::optional<Tick> max_forwarded_;

  ScenarioReport report_;
};

sender::SynthConfig synth_config(const Scenario& s) {
  sender::SynthConfig c;
  c.count = s.sender.count;
  c.channels = s.sender.channels;
  c.size_per_channel = s.sender.size_per_channel;
  c.start_tick = s.sender.start_tick;
  c.tick_step = s.sender.tick_step;
  c.seed = s.seed * 0x9e3779b97f4a7c15ULL + 1;
  return c;
}

Simulation::Simulation(const Scenario& s)
    : sc_(s),
      source_(synth_config(s)),
      sender_(source_, sink_, s.sender.mtu, 1),
      impairer_(s.impairment) {
  controlplane::ControlConfig cfg = sc_.control;
  for (const auto& a : sc_.actions) {
    if (a.type == "restart_cp") {
      std::ostringstream name;
      name << "ejfat-sim-" << ::getpid() << '-' << reinterpret_cast<std::uintptr_t>(this) << ".snap";
      snapshot_path_ = std::filesystem::temp_directory_path() / name.str();
      cfg.snapshot_path = snapshot_path_;
      break;
    }
  }
  cp_ = std::make_unique<controlplane::ControlPlane>(clock_, cfg);
  dataplane::InstanceConfig ic;
  ic.listen = net::SocketAddress{net::Ipv4{0x0a000001}, 19522};
  cp_->reserve_instance(ic);
  dp_ = cp_->dataplane(kInstance);

  for (std::size_t i = 0; i < sc_.receivers.size(); ++i) {
    const auto& spec = sc_.receivers[i];
    SimReceiver r;
    r.spec = spec;
    r.endpoint = dataplane::Endpoint{net::Ipv4{0x0a010000u + static_cast<std::uint32_t>(i) + 1}, 20000,
                                     spec.port_count};
    receiver::ReceiverConfig rc;
    rc.base_port = r.endpoint.base_port;
    rc.port_count = spec.port_count;
    rc.expected_channels.clear();
    for (std::uint16_t c = 0; c < sc_.sender.channels; ++c) rc.expected_channels.push_back(c);
    rc.queue_capacity = spec.queue_capacity;
    rc.gains = spec.gains;
    r.rx = std::make_unique<receiver::Receiver>(rc);
    r.rate = spec.service_rate_hz;
    by_ip_[r.endpoint.ip.value] = i;
    receivers_.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < receivers_.size(); ++i) {
    receivers_[i].rx->on_eviction([this](const Event& e) {
      if (auto it = report_.ledger.find(e.tick); it != report_.ledger.end()) ++it->second.evictions;
    });
  }
}

Simulation::~Simulation() {
  if (snapshot_path_) {
    std::error_code ec;
    std::filesystem::remove(*snapshot_path_, ec);
    std::filesystem::remove(snapshot_path_->string() + ".tmp", ec);
  }
}

SimReceiver& Simulation::by_name(const std::string& name) {
  for (auto& r : receivers_) {
    if (r.spec.name == name) return r;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown receiver " + name);
}

std::string Simulation::name_of(SessionId s) const {
  for (const auto& r : receivers_) {
    if (r.session == s) return r.spec.name;
  }
  return "session-" + std::to_string(s);
}

// ------------------------------------------------------------------ actions

void Simulation::do_action(const Action& a) {
  if (a.type == "start_sender") {
    start_sender();
  } else if (a.type == "stop") {
    finish_sending();
  } else if (a.type == "restart_cp") {
    kill_cp();
    at(now() + to_ns(a.downtime_s), kAction, [this] { restart_cp(); });
  } else {
    auto& r = by_name(a.receiver);
    if (a.type == "register") {
      if (!cp_) throw Error(ErrorCode::InvalidArgument, "register while the control plane is down");
      r.session = cp_->register_member(kInstance, r.endpoint, r.spec.weight);
      r.rx->set_ready(true);
    } else if (a.type == "deregister") {
      if (!cp_ || !r.session) throw Error(ErrorCode::InvalidArgument, "cannot deregister " + r.spec.name);
      cp_->deregister_member(*r.session);
      r.rx->set_ready(false);
      r.draining = true;
    } else if (a.type == "set_service_rate") {
      r.rate = a.rate_hz;
      const std::size_t idx = static_cast<std::size_t>(&r - receivers_.data());
      const std::uint64_t gen = ++r.service_gen;
      at(now(), kService, [this, idx, gen] { service(idx, gen); });
    }
  }
}

void Simulation::start_sender() {
  if (sending_ || sender_done_) return;
  sending_ = true;
  sender_start_ns_ = now();
  at(now(), kSync, [this] { sync_tick(); });
  at(now(), kEmit, [this] { emit(0); });
}

void Simulation::emit(std::uint64_t index) {
  if (!sending_) return;
  auto e = sender_.emit_next();
  if (!e) {
    finish_sending();
    return;
  }
  auto& rec = report_.ledger[e->tick];
  rec.digest = event_digest(*e);
  ++report_.emitted;
  for (auto& d : sink_.out) {
    for (auto& r : impairer_.push(std::move(d), now())) {
      auto data = std::make_shared<Bytes>(std::move(r.data));
      at(r.deliver_at_ns, kDeliver, [this, data] { deliver(*data); });
    }
  }
  sink_.out.clear();
  if (sender_.exhausted()) {
    finish_sending();
    return;
  }
  const std::uint64_t next =
      sender_start_ns_ + to_ns(static_cast<double>(index + 1) / sc_.sender.rate_hz);
  at(next, kEmit, [this, index] { emit(index + 1); });
}

void Simulation::sync_tick() {
  if (!running()) return;
  const auto msg = sender_.make_sync(now());
  if (cp_) {
    try {
      cp_->ingest_sync(kInstance, msg);
    } catch (const Error& e) {
      spdlog::debug("sim sync rejected: {}", e.what());
    }
  }
  at(now() + kSecond, kSync, [this] { sync_tick(); });
}

void Simulation::finish_sending() {
  if (sender_done_) return;
  sending_ = false;
  sender_done_ = true;
  sender_end_s_ = static_cast<double>(now()) / 1e9;
  for (auto& r : impairer_.flush(now())) {
    auto data = std::make_shared<Bytes>(std::move(r.data));
    at(r.deliver_at_ns, kDeliver, [this, data] { deliver(*data); });
  }
  end_ns_ = now() + to_ns(sc_.drain_s);
}

// --------------------------------------------------------------- data path

void Simulation::deliver(const Bytes& datagram) {
  const auto result = dp_->forward(datagram);
  if (const auto* drop = std::get_if<dataplane::Drop>(&result)) {
    if (auto h = wire::decode_lb_header(datagram)) {
      if (auto it = report_.ledger.find(h->tick); it != report_.ledger.end() && !it->second.dropped) {
        it->second.dropped = drop->reason;
      }
    }
    return;
  }
  const auto& fw = std::get<dataplane::ForwardAction>(result);
  max_forwarded_ = max_forwarded_ ? std::max(*max_forwarded_, fw.tick) : fw.tick;
  auto ri = by_ip_.find(fw.dest.ip.value);
  if (ri == by_ip_.end()) return;
  auto& r = receivers_[ri->second];
  if (auto it = report_.ledger.find(fw.tick); it != report_.ledger.end()) {
    auto& to = it->second.forwarded_to;
    if (std::find(to.begin(), to.end(), r.spec.name) == to.end()) to.push_back(r.spec.name);
  }
  const std::size_t port = fw.dest.port - r.endpoint.base_port;
  if (r.rx->ingest(port, fw.payload, now())) {
    ++r.arrivals;
    if (!r.rate) {
      const std::size_t idx = ri->second;
      const std::uint64_t gen = r.service_gen;
      at(now(), kService, [this, idx, gen] { service(idx, gen); });
    }
  }
}

void Simulation::consume(std::size_t idx, Event&& e) {
  auto& r = receivers_[idx];
  ++r.deliveries;
  auto it = report_.ledger.find(e.tick);
  if (it == report_.ledger.end()) return;
  it->second.delivered_to.push_back(r.spec.name);
  if (event_digest(e) != it->second.digest) it->second.digest_mismatch = true;
}

void Simulation::service(std::size_t idx, std::uint64_t gen) {
  auto& r = receivers_[idx];
  if (gen != r.service_gen) return;
  if (!r.rate) {
    while (auto e = r.rx->pop_event()) consume(idx, std::move(*e));
    return;
  }
  if (*r.rate <= 0) return;
  if (auto e = r.rx->pop_event()) consume(idx, std::move(*e));
  if (running()) {
    at(now() + to_ns(1.0 / *r.rate), kService, [this, idx, gen] { service(idx, gen); });
  }
}

// ------------------------------------------------------------ control path

void Simulation::reports() {
  for (auto& r : receivers_) {
    if (!r.session || r.retired) continue;
    const auto rep = r.rx->make_report(*r.session, now());
    r.last_reported_fill = rep.queue_fill;
    if (!cp_) continue;
    try {
      cp_->ingest_fill_report(rep);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnknownSession) throw;
    }
  }
}

void Simulation::control_tick() {
  if (!cp_) return;
  const auto res = cp_->control_tick(kInstance, now());
  if (res.emitted) {
    EpochRecord er;
    er.t_s = to_s(now());
    er.epoch_id = res.emitted->epoch_id;
    er.boundary = res.emitted->boundary_tick;
    er.max_forwarded = max_forwarded_;
    for (const auto& [s, n] : res.emitted->table.counts()) er.slots[name_of(s)] = n;
    if (max_forwarded_ && er.boundary <= *max_forwarded_) ++report_.boundary_violations;
    if (restarted_ && !report_.first_boundary_after_restart) report_.first_boundary_after_restart = er.boundary;
    report_.epochs.push_back(std::move(er));
  }
  for (SessionId s : res.retired) {
    for (auto& r : receivers_) {
      if (r.session == s) r.retired = true;
    }
  }
}

void Simulation::kill_cp() {
  if (!cp_) return;
  if (const auto e = dp_->newest_epoch()) report_.boundary_before_restart = e->boundary_tick;
  // The data plane keeps forwarding on its last schedule while the CP is down.
  cp_.reset();
  spdlog::info("sim: control plane stopped at {:.3f} s", to_s(now()));
}

void Simulation::restart_cp() {
  controlplane::ControlConfig cfg = sc_.control;
  cfg.snapshot_path = snapshot_path_;
  cp_ = std::make_unique<controlplane::ControlPlane>(clock_, cfg);
  cp_->restore_state(*snapshot_path_);
  dp_ = cp_->dataplane(kInstance);
  restarted_ = true;
  spdlog::info("sim: control plane restored at {:.3f} s", to_s(now()));
}

void Simulation::housekeeping() {
  for (auto& r : receivers_) r.rx->housekeeping(now());
}

void Simulation::sample() {
  Sample s;
  s.t_s = to_s(now());
  std::map<SessionId, double> weights;
  if (cp_) {
    for (const auto& m : cp_->status(kInstance).members) weights[m.session.session_id] = m.weight;
  }
  for (const auto& r : receivers_) {
    if (!r.session) continue;
    s.fill[r.spec.name] = r.last_reported_fill;
    if (auto w = weights.find(*r.session); w != weights.end()) s.weight[r.spec.name] = w->second;
    s.arrivals[r.spec.name] = r.arrivals;
    s.deliveries[r.spec.name] = r.deliveries;
  }
  report_.samples.push_back(std::move(s));
}

// -------------------------------------------------------------------- run

ScenarioReport Simulation::run() {
  report_.name = sc_.name;
  report_.seed = sc_.seed;

  bool explicit_start = false;
  for (const auto& r : receivers_) {
    if (r.spec.auto_register) {
      const std::string name = r.spec.name;
      at(0, kAction, [this, name] { do_action(Action{0.0, "register", name, std::nullopt, 0.0}); });
    }
  }
  for (const auto& a : sc_.actions) {
    if (a.type == "start_sender") explicit_start = true;
    at(to_ns(a.at_s), kAction, [this, a] { do_action(a); });
  }
  if (!explicit_start) at(0, kAction, [this] { start_sender(); });

  std::function<void()> periodic_control = [&] {
    if (!running()) return;
    reports();
    at(now(), kControl, [this] { control_tick(); });
    at(now() + kSecond, kReport, periodic_control);
  };
  at(0, kReport, periodic_control);
  std::function<void()> periodic_housekeeping = [&] {
    if (!running()) return;
    housekeeping();
    at(now() + kHousekeepingPeriod, kHousekeeping, periodic_housekeeping);
  };
  at(0, kHousekeeping, periodic_housekeeping);
  const std::uint64_t sample_period = to_ns(sc_.sample_period_s);
  std::function<void()> periodic_sample = [&] {
    if (!running()) return;
    sample();
    at(now() + sample_period, kSample, periodic_sample);
  };
  at(0, kSample, periodic_sample);

  const std::uint64_t limit = to_ns(sc_.max_sim_s);
  while (!queue_.empty()) {
    Item item = queue_.top();
    queue_.pop();
    if (end_ns_ && item.t > *end_ns_) break;
    if (!end_ns_ && item.t > limit) {
      throw Error(ErrorCode::ScenarioTimeout, "scenario '" + sc_.name + "' exceeded " +
                                                  std::to_string(sc_.max_sim_s) + " s of simulated time");
    }
    clock_.set(item.t);
    item.fn();
  }
  report_.sim_duration_s = to_s(now());
  finalize();
  evaluate();
  return std::move(report_);
}

void Simulation::finalize() {
  std::map<Tick, int> queued;
  for (auto& r : receivers_) {
    while (auto e = r.rx->pop_event()) ++queued[e->tick];
  }
  report_.impairer_lost = impairer_.lost();
  report_.impairer_duplicated = impairer_.duplicated();

  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (char c : s) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [tick, rec] : report_.ledger) {
    Fate f;
    if (rec.delivered_to.size() == 1) {
      f = Fate::Delivered;
    } else if (rec.delivered_to.size() > 1) {
      f = Fate::Duplicated;
    } else if (rec.evictions > 0) {
      f = Fate::Evicted;
    } else if (queued.count(tick)) {
      f = Fate::Queued;
    } else if (rec.dropped) {
      f = Fate::Dropped;
    } else {
      f = Fate::Lost;
    }
    ++report_.fates[f];
    if (rec.forwarded_to.size() > 1) ++report_.split_events;
    if (rec.digest_mismatch) ++report_.digest_mismatches;
    for (const auto& n : rec.delivered_to) ++report_.delivered_by[n];

    mix(std::to_string(tick));
    mix(to_string(f));
    for (const auto& n : rec.forwarded_to) mix(n);
    mix("|");
    for (const auto& n : rec.delivered_to) mix(n);
  }
  report_.ledger_digest = h;
}

void Simulation::evaluate() {
  auto& v = report_.verdicts;
  const auto& ex = sc_.expect;
  std::uint64_t fated = 0;
  for (const auto& [f, n] : report_.fates) fated += n;
  v.push_back({"ledger_conservation", fated == report_.emitted,
               std::to_string(fated) + " terminal fates for " + std::to_string(report_.emitted) + " events"});
  v.push_back({"boundary_safety", report_.boundary_violations == 0,
               std::to_string(report_.boundary_violations) + " boundaries at or below forwarded traffic"});

  if (ex.value("zero_loss", false)) {
    const auto delivered = report_.fate(Fate::Delivered);
    const bool ok = delivered == report_.emitted && report_.split_events == 0 && report_.digest_mismatches == 0;
    std::ostringstream d;
    d << delivered << "/" << report_.emitted << " delivered once, " << report_.fate(Fate::Lost) << " lost, "
      << report_.fate(Fate::Duplicated) << " duplicated, " << report_.fate(Fate::Dropped) << " dropped, "
      << report_.fate(Fate::Evicted) << " evicted, " << report_.digest_mismatches << " digest mismatches";
    v.push_back({"zero_loss", ok, d.str()});
  }
  if (ex.value("no_split", false)) {
    v.push_back({"no_split", report_.split_events == 0, std::to_string(report_.split_events) + " split events"});
  }
  if (ex.value("digests_match", false)) {
    v.push_back({"digests_match", report_.digest_mismatches == 0,
                 std::to_string(report_.digest_mismatches) + " mismatches"});
  }
  if (ex.contains("shares")) {
    const double tol = ex.value("share_tolerance", 0.02);
    std::uint64_t total = 0;
    for (const auto& [n, c] : report_.delivered_by) total += c;
    bool ok = total > 0;
    std::ostringstream d;
    d.precision(4);
    for (const auto& [name, want] : ex.at("shares").items()) {
      const auto it = report_.delivered_by.find(name);
      const double got = total && it != report_.delivered_by.end()
                             ? static_cast<double>(it->second) / static_cast<double>(total)
                             : 0.0;
      ok = ok && std::abs(got - want.get<double>()) <= tol;
      d << name << "=" << got << " (want " << want.get<double>() << ") ";
    }
    v.push_back({"shares", ok, d.str()});
  }
  if (ex.contains("fill_convergence")) {
    const auto& fc = ex.at("fill_convergence");
    const double after = fc.value("after_s", 0.0);
    const double sp = fc.value("setpoint", 0.5);
    const double tol = fc.value("tolerance", 0.1);
    const int within = fc.value("within_intervals", 30);
    // Queues drain once the stream ends, so the window stops there.
    const double until = fc.value("until_s", sender_end_s_.value_or(report_.sim_duration_s));
    std::vector<const Sample*> window;
    for (const auto& s : report_.samples) {
      if (s.t_s > after && s.t_s <= until) window.push_back(&s);
    }
    std::optional<int> settled;
    for (int k = static_cast<int>(window.size()) - 1; k >= 0; --k) {
      bool in = !window[static_cast<std::size_t>(k)]->fill.empty();
      for (const auto& [n, f] : window[static_cast<std::size_t>(k)]->fill) in = in && std::abs(f - sp) < tol;
      if (!in) break;
      settled = k + 1;
    }
    const bool ok = settled && *settled <= within;
    v.push_back({"fill_convergence", ok,
                 settled ? "settled after " + std::to_string(*settled) + " control intervals"
                         : std::string("never settled")});
  }
  if (ex.contains("arrival_ratio")) {
    const auto& ar = ex.at("arrival_ratio");
    const std::string num = ar.at("numerator"), den = ar.at("denominator");
    const double from = ar.value("from_s", 0.0), to = ar.value("to_s", report_.sim_duration_s);
    const double want = ar.at("expected").get<double>(), tol = ar.value("tolerance", 0.1);
    const Sample* a = nullptr;
    const Sample* b = nullptr;
    for (const auto& s : report_.samples) {
      if (!a && s.t_s >= from) a = &s;
      if (s.t_s <= to) b = &s;
    }
    bool ok = false;
    std::string detail = "window has no samples";
    if (a && b && a != b && a->arrivals.count(num) && b->arrivals.count(den) && a->arrivals.count(den)) {
      const double dn = static_cast<double>(b->arrivals.at(num) - a->arrivals.at(num));
      const double dd = static_cast<double>(b->arrivals.at(den) - a->arrivals.at(den));
      const double ratio = dd > 0 ? dn / dd : 0.0;
      ok = std::abs(ratio - want) <= tol * want;
      std::ostringstream d;
      d.precision(4);
      d << num << ":" << den << " arrivals " << ratio << " over [" << a->t_s << ", " << b->t_s << "] s";
      detail = d.str();
    }
    v.push_back({"arrival_ratio", ok, detail});
  }
  if (ex.value("restart_monotone", false)) {
    const bool ok = report_.boundary_before_restart && report_.first_boundary_after_restart &&
                    *report_.first_boundary_after_restart > *report_.boundary_before_restart;
    std::ostringstream d;
    d << "boundary before restart "
      << (report_.boundary_before_restart ? std::to_string(*report_.boundary_before_restart) : "none")
      << ", first after "
      << (report_.first_boundary_after_restart ? std::to_string(*report_.first_boundary_after_restart) : "none");
    v.push_back({"restart_monotone", ok, d.str()});
  }
}

}  // namespace

// ------------------------------------------------------------------ report

std::string_view to_string(Fate f) noexcept {
  switch (f) {
    case Fate::Delivered: return "delivered";
    case Fate::Duplicated: return "duplicated";
    case Fate::Evicted: return "evicted";
    case Fate::Queued: return "queued";
    case Fate::Dropped: return "dropped";
    case Fate::Lost: return "lost";
  }
  return "?";
}

bool ScenarioReport::passed() const noexcept {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

std::uint64_t ScenarioReport::fate(Fate f) const noexcept {
  auto it = fates.find(f);
  return it == fates.end() ? 0 : it->second;
}

json ScenarioReport::to_json(bool include_ledger) const {
  json j;
  j["scenario"] = name;
  j["seed"] = seed;
  j["sim_duration_s"] = sim_duration_s;
  j["events_emitted"] = emitted;
  json jf = json::object();
  for (Fate f : {Fate::Delivered, Fate::Duplicated, Fate::Evicted, Fate::Queued, Fate::Dropped, Fate::Lost}) {
    jf[std::string(to_string(f))] = fate(f);
  }
  j["fates"] = jf;
  j["split_events"] = split_events;
  j["digest_mismatches"] = digest_mismatches;
  j["boundary_violations"] = boundary_violations;
  j["impairment"] = {{"lost", impairer_lost}, {"duplicated", impairer_duplicated}};
  j["delivered_by"] = delivered_by;
  json je = json::array();
  for (const auto& e : epochs) {
    je.push_back({{"t_s", e.t_s},
                  {"epoch_id", e.epoch_id},
                  {"boundary", e.boundary},
                  {"max_forwarded", e.max_forwarded ? json(*e.max_forwarded) : json(nullptr)},
                  {"slots", e.slots}});
  }
  j["epochs"] = je;
  json js = json::array();
  for (const auto& s : samples) {
    js.push_back({{"t_s", s.t_s}, {"fill", s.fill}, {"weight", s.weight}, {"arrivals", s.arrivals},
                  {"deliveries", s.deliveries}});
  }
  j["samples"] = js;
  if (boundary_before_restart) j["boundary_before_restart"] = *boundary_before_restart;
  if (first_boundary_after_restart) j["first_boundary_after_restart"] = *first_boundary_after_restart;
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx", static_cast<unsigned long long>(ledger_digest));
  j["ledger_digest"] = digest;
  json jv = json::array();
  for (const auto& v : verdicts) jv.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  j["verdicts"] = jv;
  j["passed"] = passed();
  if (include_ledger) {
    json jl = json::array();
    for (const auto& [tick, rec] : ledger) {
      json r{{"tick", tick}, {"forwarded_to", rec.forwarded_to}, {"delivered_to", rec.delivered_to}};
      if (rec.evictions) r["evictions"] = rec.evictions;
      if (rec.dropped) r["dropped"] = dataplane::to_string(*rec.dropped);
      if (rec.digest_mismatch) r["digest_mismatch"] = true;
      jl.push_back(std::move(r));
    }
    j["ledger"] = jl;
  }
  return j;
}

ScenarioReport run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  return sim.run();
}

}  // namespace ejfat::harness
