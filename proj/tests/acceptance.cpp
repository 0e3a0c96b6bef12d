// Acceptance suite: eight end-to-end criteria over the deterministic
// simulator, each asserted at its stated tolerance and reported as a single
// PASS/FAIL line. Defaults throughout: latency 10, IA clear 300, IA set
// 1000, MIA/TAIA send 500, recv 1500 (ticks are simulated milliseconds).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "dirnet/scenario.hpp"
#include "dirnet/simnet.hpp"

using namespace dirnet;

namespace {

struct Criterion {
  int number;
  const char* name;
  bool ok = true;
  std::vector<std::string> failures;

  Criterion(int number_, const char* name_) : number(number_), name(name_) {}

  void require(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      failures.push_back(what);
    }
  }

  template <typename A, typename B>
  void equals(A got, B want, const std::string& what) {
    if (!(got == static_cast<A>(want))) {
      ok = false;
      std::ostringstream os;
      os << what << " (got " << got << ", want " << want << ")";
      failures.push_back(os.str());
    }
  }

  ~Criterion() {
    std::printf("ACCEPTANCE %d %-34s %s\n", number, name, ok ? "PASS" : "FAIL");
    for (const std::string& f : failures) {
      std::printf("             - %s\n", f.c_str());
    }
    std::fflush(stdout);
  }
};

SimConfig defaults() {
  SimConfig cfg;
  cfg.n_nodes = 4;
  cfg.run_length = 60000;
  return cfg;
}

Tick first_delivery(const std::vector<TraceEvent>& trace, int node, int type,
                    int subid, Tick from = 0) {
  for (const auto& e : trace) {
    if (e.kind == RecordKind::delivered && e.node == node && e.is_message &&
        e.message.type == type && e.message.subid == subid && e.tick >= from) {
      return e.tick;
    }
  }
  return -1;
}

std::vector<Tick> fired_at(const std::vector<TraceEvent>& trace, int node,
                           int kind, int subid) {
  std::vector<Tick> out;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::fired && e.node == node &&
        e.timeout_kind == kind && e.timeout_subid == subid) {
      out.push_back(e.tick);
    }
  }
  return out;
}

int count_sent(const std::vector<TraceEvent>& trace, int from, int type) {
  int n = 0;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.node == from && e.is_message &&
        e.message.type == type) {
      ++n;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("criterion 1: quiescent stability") {
  Criterion c(1, "quiescent stability");
  SimConfig cfg = defaults();

  const auto started = std::chrono::steady_clock::now();
  World w(cfg);
  w.run();
  const auto elapsed = std::chrono::steady_clock::now() - started;

  const Report& r = w.report();
  c.equals(r.suspicion_events.size(), std::size_t{0}, "no suspicion periods");
  c.equals(r.teif_broadcasts.size(), std::size_t{0}, "no TEIF broadcasts");
  c.equals(r.elections.size(), std::size_t{0}, "no elections");
  c.require(r.replicas_equal, "all four replicas equal");
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      c.require(replicated_content_equal(w.component(a).db, w.component(b).db),
                "pairwise replica equality");
    }
  }
  c.require(elapsed < std::chrono::seconds(1), "runtime under one second");
  CHECK(c.ok);
}

TEST_CASE("criterion 2: agent-crash detection and recovery") {
  Criterion c(2, "agent-crash detection/recovery");
  SimConfig cfg = defaults();
  cfg.faults.push_back({10000, FaultEvent::Kind::crash_component, 2, 0});
  World w(cfg);
  w.run();
  const Report& r = w.report();
  const auto& trace = w.trace();

  // Suspicion within TAIA_RECV + latency + 1 = 1511 ticks of the fault.
  c.require(r.first_suspicion_by_suspect.count(2) == 1, "manager suspected node 2");
  if (r.first_suspicion_by_suspect.count(2) == 1) {
    const Tick at = r.first_suspicion_by_suspect.at(2);
    c.require(at - 10000 <= 1500 + 10 + 1, "suspicion within 1511 ticks");
  }

  // The IAT alarm reaches the manager within 2*SET + latency of the fault.
  const Tick teif_seen = first_delivery(trace, 0, msg::teif, 2);
  c.require(teif_seen >= 0, "TEIF from IAT@2 delivered to the manager");
  c.require(teif_seen >= 0 && teif_seen - 10000 <= 2 * 1000 + 10,
            "TEIF received within 2*SET + latency");

  // Exactly one SPAN to IAT@2; no reboot anywhere.
  c.equals(r.span_requests.size(), std::size_t{1}, "exactly one respawn request");
  if (r.span_requests.size() == 1) {
    c.equals(r.span_requests[0].target, 2, "respawn targets node 2");
  }
  int span_sends = 0;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.is_message &&
        e.message.type == msg::span) {
      ++span_sends;
      c.equals(e.dest, 2, "SPAN addressed to node 2");
      c.equals(e.mbox, iat_mbox, "SPAN addressed to the IAT mailbox");
    }
  }
  c.equals(span_sends, 1, "exactly one SPAN on the wire");
  c.equals(r.reboot_requests.size(), std::size_t{0}, "no node reboot requested");

  // After the respawn the manager announces the node's return.
  bool niua_after_respawn = false;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.node == 0 && e.is_message &&
        e.message.type == msg::niua && e.message.subid == 2 &&
        e.tick > 10000) {
      niua_after_respawn = true;
    }
  }
  c.require(niua_after_respawn, "manager broadcasts NIUA(2) after respawn");
  c.equals(r.active_suspicions_at_end, 0, "suspicion count back to zero");
  CHECK(c.ok);
}

TEST_CASE("criterion 3: node-crash discrimination") {
  Criterion c(3, "node-crash discrimination");
  SimConfig cfg = defaults();
  cfg.faults.push_back({10000, FaultEvent::Kind::crash_node, 2, 0});
  World w(cfg);
  w.run();
  const Report& r = w.report();
  const auto& trace = w.trace();

  // The TEIF wait lapses exactly one SET after the suspicion started.
  c.require(r.first_suspicion_by_suspect.count(2) == 1, "manager suspected node 2");
  const auto teif_firings = fired_at(trace, 0, tmo::teif, 2);
  c.require(!teif_firings.empty(), "manager TEIF timeout fired for node 2");
  if (r.first_suspicion_by_suspect.count(2) == 1 && !teif_firings.empty()) {
    const Tick start = r.first_suspicion_by_suspect.at(2);
    c.require(teif_firings.front() >= start + 1000 - 1 &&
                  teif_firings.front() <= start + 1000 + 1,
              "TEIF timeout at suspicion start + SET +/- 1");
  }

  c.equals(r.reboot_requests.size(), std::size_t{1}, "exactly one reboot request");
  if (!r.reboot_requests.empty()) {
    c.equals(r.reboot_requests[0].target, 2, "reboot targets node 2");
  }
  c.equals(r.span_requests.size(), std::size_t{0}, "zero respawn requests");

  // Post-reboot the node re-identifies itself and is announced up again.
  bool witm_after = false, request_db_after = false;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.node == 2 && e.is_message &&
        e.tick > 12000) {
      witm_after = witm_after || e.message.type == msg::witm;
      request_db_after = request_db_after || e.message.type == msg::request_db;
    }
  }
  c.require(witm_after, "rebooted node 2 asks WITM");
  c.require(request_db_after, "rebooted node 2 requests the database");
  bool niua = false;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.node == 0 && e.is_message &&
        e.message.type == msg::niua && e.message.subid == 2) {
      niua = true;
    }
  }
  c.require(niua, "NIUA(2) broadcast after the reboot");
  CHECK(c.ok);
}

TEST_CASE("criterion 4: manager crash and election") {
  Criterion c(4, "manager crash and election");
  SimConfig cfg = defaults();
  cfg.faults.push_back({10000, FaultEvent::Kind::crash_node, 0, 0});
  World w(cfg);
  w.run();
  const Report& r = w.report();
  const auto& trace = w.trace();

  // Every backup suspects the manager within MIA_RECV + latency + 1.
  std::map<int, Tick> first_by_watcher;
  for (const auto& s : r.suspicion_events) {
    if (s.suspect == 0) {
      first_by_watcher.try_emplace(s.watcher, s.tick);
    }
  }
  for (int backup = 1; backup <= 3; ++backup) {
    c.require(first_by_watcher.count(backup) == 1,
              "backup " + std::to_string(backup) + " suspects the manager");
    if (first_by_watcher.count(backup) == 1) {
      c.require(first_by_watcher[backup] - 10000 <= 1500 + 10 + 1,
                "suspicion within 1511 ticks");
    }
    c.require(!fired_at(trace, backup, tmo::teif_b, 0).empty(),
              "backup " + std::to_string(backup) + " fires its TEIF timeout");
  }

  // ANID goes to every node except the dead manager and the sender.
  std::map<int, std::set<int>> anid_targets;
  for (const auto& e : trace) {
    if (e.kind == RecordKind::sent && e.is_message &&
        e.message.type == msg::anid) {
      anid_targets[e.node].insert(e.dest);
    }
  }
  for (int backup = 1; backup <= 3; ++backup) {
    std::set<int> want = {1, 2, 3};
    want.erase(backup);
    c.require(anid_targets[backup] == want,
              "backup " + std::to_string(backup) + " sends ANID to the others");
  }

  // All survivors elect node 1, at most one election each.
  std::map<int, int> elections_per_node;
  for (const auto& e : r.elections) {
    ++elections_per_node[e.node];
    c.equals(e.old_manager, 0, "election leaves manager 0");
    c.equals(e.new_manager, 1, "election picks manager 1");
  }
  for (const auto& [node, count] : elections_per_node) {
    c.require(count <= 1, "at most one election per survivor");
  }
  c.require(count_sent(trace, 1, msg::mia) > 0, "node 1 heartbeats as manager");
  for (int survivor = 1; survivor <= 3; ++survivor) {
    c.equals(w.component(survivor).managerid, 1,
             "survivor " + std::to_string(survivor) + " follows manager 1");
  }
  c.equals(r.final_managerid, 1, "final manager id is 1");
  CHECK(c.ok);
}

TEST_CASE("criterion 5: timeout engine unit laws") {
  Criterion c(5, "timeout engine unit laws");

  // Cyclic deadline 500 fires at 500/1000/1500 under advance(1600).
  {
    TimeoutList list;
    list.insert(declare(tmo::mia, 1, true, 500));
    c.equals(list.advance(499).size(), std::size_t{0}, "nothing before 500");
    c.equals(list.advance(1).size(), std::size_t{1}, "first firing at 500");
    c.equals(list.advance(499).size(), std::size_t{0}, "nothing before 1000");
    c.equals(list.advance(1).size(), std::size_t{1}, "second firing at 1000");
    c.equals(list.advance(500).size(), std::size_t{1}, "third firing at 1500");
    c.equals(list.advance(100).size(), std::size_t{0}, "three firings in 1600");

    TimeoutList whole;
    whole.insert(declare(tmo::mia, 1, true, 500));
    c.equals(whole.advance(1600).size(), std::size_t{3}, "advance(1600) fires 3x");
  }

  // Renewal at 300 moves the first firing to 800.
  {
    TimeoutList list;
    list.insert(declare(tmo::taia, 2, true, 500));
    list.advance(300);
    list.renew(tmo::taia, 2);
    c.equals(list.advance(499).size(), std::size_t{0}, "no firing before 800");
    c.equals(list.advance(1).size(), std::size_t{1}, "renewed firing at 800");
  }

  // Deletion prevents the firing; close freezes the list.
  {
    TimeoutList list;
    list.insert(declare(tmo::teif, 0, false, 1000));
    list.erase(tmo::teif, 0);
    c.equals(list.advance(5000).size(), std::size_t{0}, "deleted entry is silent");

    TimeoutList frozen;
    frozen.insert(declare(tmo::mia, 0, true, 10));
    frozen.close();
    c.equals(frozen.advance(1000000).size(), std::size_t{0}, "closed list fires nothing");
    c.require(!frozen.insert(declare(tmo::mia, 1, true, 10)), "closed list rejects inserts");
  }

  // Advance-splitting conservation over 1000 randomized schedules.
  std::mt19937_64 rng(0xacce5);
  bool conserved = true;
  for (int round = 0; round < 1000 && conserved; ++round) {
    TimeoutList whole, split;
    const int entries = static_cast<int>(rng() % 6) + 1;
    for (int i = 0; i < entries; ++i) {
      Timeout t = declare(static_cast<int>(rng() % 7) * 10 + 10,
                          static_cast<int>(rng() % 4), rng() % 4 != 0,
                          static_cast<Tick>(rng() % 40 + 1));
      whole.insert(t);
      split.insert(t);
    }
    const Tick a = static_cast<Tick>(rng() % 150);
    const Tick b = static_cast<Tick>(rng() % 150);
    auto combined = whole.advance(a + b);
    auto lhs = split.advance(a);
    auto rhs = split.advance(b);
    lhs.insert(lhs.end(), rhs.begin(), rhs.end());
    conserved = combined == lhs;
  }
  c.require(conserved, "advance(a);advance(b) == advance(a+b) on 1000 schedules");
  CHECK(c.ok);
}

TEST_CASE("criterion 6: IA-flag watchdog law") {
  Criterion c(6, "IA-flag watchdog law");

  // Alive component: never a TEIF (clear period 300 < set period 1000).
  {
    World w(defaults());
    w.run();
    c.equals(w.report().teif_broadcasts.size(), std::size_t{0},
             "no TEIF while the component lives");
  }

  // Frozen for at least two watchdog periods: exactly one TEIF, no later
  // than freeze start + 2*SET + 1.
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10300, FaultEvent::Kind::freeze_component, 2, 2500});
    World w(cfg);
    w.run();
    c.equals(w.report().teif_broadcasts.size(), std::size_t{1},
             "exactly one TEIF for a long freeze");
    if (w.report().teif_broadcasts.size() == 1) {
      c.require(w.report().teif_broadcasts[0].tick <= 10300 + 2 * 1000 + 1,
                "TEIF within freeze start + 2*SET + 1");
      c.equals(w.report().teif_broadcasts[0].node, 2, "TEIF from the frozen node");
    }
  }

  // Shorter than one period: no TEIF at all.
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10300, FaultEvent::Kind::freeze_component, 2, 900});
    World w(cfg);
    w.run();
    c.equals(w.report().teif_broadcasts.size(), std::size_t{0},
             "no TEIF for a freeze shorter than SET");
  }
  CHECK(c.ok);
}

TEST_CASE("criterion 7: db convergence and update propagation") {
  Criterion c(7, "db convergence and propagation");
  SimConfig cfg = defaults();
  cfg.run_length = 12000;
  cfg.db_updates.push_back({5200, 3, {dbop::inc_reboot, 3, 0, 0}});
  cfg.db_updates.push_back({7200, 0, {dbop::new_status, 0, 5, 0}});
  World w(cfg);
  w.run();
  const auto& trace = w.trace();

  // Startup broadcast converged the replicas (checked field-for-field).
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      c.require(replicated_content_equal(w.component(a).db, w.component(b).db),
                "replicas byte-equal");
    }
  }

  // The injected updates reached every replica within latency + 1.
  for (int node = 0; node < 4; ++node) {
    c.equals(w.component(node).db.nodes[3].reboot_nr, 1,
             "reboot counter replicated");
    c.equals(w.component(node).db.nodes[0].status, 5, "status replicated");
  }
  for (int dest = 0; dest < 3; ++dest) {
    const Tick seen = first_delivery(trace, dest, msg::db, 3);
    c.require(seen >= 0 && seen <= 5200 + 10 + 1,
              "update delivered within latency + 1");
  }

  // Piggyback renewals, read off the firing schedule: the backup's TAIA
  // send timer moves from 5500 to 5700, the manager's MIA timers from 7500
  // to 7700.
  auto taia = fired_at(trace, 3, tmo::taia_b, 0);
  bool taia_shifted = true;
  for (Tick t : taia) {
    taia_shifted = taia_shifted && (t <= 5200 || t >= 5700);
  }
  bool taia_at_5700 = false;
  for (Tick t : taia) {
    taia_at_5700 = taia_at_5700 || t == 5700;
  }
  c.require(taia_shifted, "backup TAIA timer renewed by the local update");
  c.require(taia_at_5700, "backup TAIA timer fires at 5700");

  for (int backup = 1; backup <= 3; ++backup) {
    auto mia = fired_at(trace, 0, tmo::mia, backup);
    bool shifted = true, at_7700 = false;
    for (Tick t : mia) {
      if (t > 7200 && t < 7700) {
        shifted = false;
      }
      at_7700 = at_7700 || t == 7700;
    }
    c.require(shifted, "manager MIA timers renewed by the local update");
    c.require(at_7700, "manager MIA timers fire at 7700");
  }
  CHECK(c.ok);
}

TEST_CASE("criterion 8: determinism") {
  Criterion c(8, "determinism");
  std::vector<SimConfig> configs;
  configs.push_back(defaults());
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10000, FaultEvent::Kind::crash_component, 2, 0});
    configs.push_back(cfg);
  }
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10000, FaultEvent::Kind::crash_node, 2, 0});
    configs.push_back(cfg);
  }
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10000, FaultEvent::Kind::crash_node, 0, 0});
    configs.push_back(cfg);
  }
  {
    SimConfig cfg = defaults();
    cfg.faults.push_back({10300, FaultEvent::Kind::freeze_component, 2, 2500});
    configs.push_back(cfg);
  }
  {
    SimConfig cfg = defaults();
    cfg.run_length = 12000;
    cfg.db_updates.push_back({5200, 3, {dbop::inc_reboot, 3, 0, 0}});
    cfg.db_updates.push_back({7200, 0, {dbop::new_status, 0, 5, 0}});
    configs.push_back(cfg);
  }
  {
    // Jittered latency exercises the seeded path as well.
    SimConfig cfg = defaults();
    cfg.latency_min = 5;
    cfg.latency_max = 30;
    cfg.seed = 17;
    cfg.faults.push_back({10000, FaultEvent::Kind::crash_component, 1, 0});
    configs.push_back(cfg);
  }

  int index = 0;
  for (const SimConfig& cfg : configs) {
    RunResult a = run(cfg);
    RunResult b = run(cfg);
    c.require(a.trace_text == b.trace_text,
              "scenario " + std::to_string(index) + " trace is byte-identical");
    c.require(a.report.render_kv() == b.report.render_kv(),
              "scenario " + std::to_string(index) + " report is identical");
    ++index;
  }
  CHECK(c.ok);
}
