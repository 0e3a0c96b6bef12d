#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "dirnet/component.hpp"
#include "dirnet/iatask.hpp"

namespace dirnet {

struct FaultEvent {
  enum class Kind { crash_component, crash_node, freeze_component, reboot_node };

  Tick at = 0;
  Kind kind = Kind::crash_component;
  int node = 0;
  Tick duration = 0;  // freeze only

  friend bool operator==(const FaultEvent&, const FaultEvent&) = default;
};

inline std::string_view fault_label(FaultEvent::Kind k) {
  switch (k) {
    case FaultEvent::Kind::crash_component:
      return "CRASH_COMPONENT";
    case FaultEvent::Kind::crash_node:
      return "CRASH_NODE";
    case FaultEvent::Kind::freeze_component:
      return "FREEZE_COMPONENT";
    case FaultEvent::Kind::reboot_node:
      return "REBOOT_NODE";
  }
  return "?";
}

// Scripted local database change, delivered to the node as a local DB
// message. In a full deployment these originate from the recovery layer and
// user-defined detection tools, which are outside this simulator.
struct DbInjection {
  Tick at = 0;
  int node = 0;
  DbUpdate update;

  friend bool operator==(const DbInjection&, const DbInjection&) = default;
};

struct SimConfig {
  int n_nodes = 4;
  std::vector<Role> roles;  // empty: node 0 manager, rest backups
  TimeoutParams timeouts;
  Tick latency_min = 10;
  Tick latency_max = 10;
  Tick run_length = 60000;
  std::uint64_t seed = 1;
  std::vector<FaultEvent> faults;
  std::vector<DbInjection> db_updates;
  bool inject = false;
  Tick respawn_delay = 500;
  Tick reboot_delay = 2000;
  bool reboot_enabled = true;
  bool persistence_enabled = true;
  std::string persist_dir;
  int tasks_per_node = 2;
  int startup_retry_limit = 5;

  RoleConfig role_config() const {
    RoleConfig cfg;
    if (roles.empty()) {
      cfg.roles.assign(static_cast<std::size_t>(n_nodes), Role::backup);
      cfg.roles[0] = Role::manager;
    } else {
      cfg.roles = roles;
    }
    return cfg;
  }

  void validate() const {
    if (n_nodes < 2 || n_nodes > 64) {
      throw std::invalid_argument("config: n_nodes must be in [2, 64]");
    }
    if (!roles.empty()) {
      if (static_cast<int>(roles.size()) != n_nodes) {
        throw std::invalid_argument("config: role table must cover every node");
      }
      if (!role_config().well_formed()) {
        throw std::invalid_argument("config: role table needs exactly one manager");
      }
    }
    if (latency_min < 0 || latency_max < latency_min) {
      throw std::invalid_argument("config: bad latency range");
    }
    if (run_length <= 0) {
      throw std::invalid_argument("config: run_length must be positive");
    }
    const Tick durations[] = {timeouts.imalive_clear, timeouts.imalive_set,
                              timeouts.mia_send,      timeouts.mia_recv,
                              timeouts.taia_send,     timeouts.taia_recv,
                              timeouts.reply_db,      timeouts.inject_deadline};
    for (Tick d : durations) {
      if (d <= 0) {
        throw std::invalid_argument("config: timeout durations must be positive");
      }
    }
    if (respawn_delay < 0 || reboot_delay < 0) {
      throw std::invalid_argument("config: recovery delays must be non-negative");
    }
    if (tasks_per_node < 0 || tasks_per_node > max_tasks) {
      throw std::invalid_argument("config: tasks_per_node out of range");
    }
    if (startup_retry_limit < 1) {
      throw std::invalid_argument("config: startup_retry_limit must be positive");
    }
    for (const FaultEvent& f : faults) {
      if (f.at < 0 || f.at >= run_length) {
        throw std::invalid_argument("config: fault tick outside the run");
      }
      if (f.node < 0 || f.node >= n_nodes) {
        throw std::invalid_argument("config: fault target out of range");
      }
      if (f.kind == FaultEvent::Kind::freeze_component && f.duration <= 0) {
        throw std::invalid_argument("config: freeze needs a positive duration");
      }
    }
    for (const DbInjection& u : db_updates) {
      if (u.at < 0 || u.at >= run_length) {
        throw std::invalid_argument("config: db update tick outside the run");
      }
      if (u.node < 0 || u.node >= n_nodes) {
        throw std::invalid_argument("config: db update node out of range");
      }
    }
  }

  // Detector-correctness constraints; violating them degrades accuracy but
  // is allowed, so they only warn.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (timeouts.mia_send + 2 * latency_max >= timeouts.mia_recv) {
      out.push_back("mia_send + 2*latency >= mia_recv: manager heartbeats may be falsely missed");
    }
    if (timeouts.taia_send + 2 * latency_max >= timeouts.taia_recv) {
      out.push_back("taia_send + 2*latency >= taia_recv: backup heartbeats may be falsely missed");
    }
    if (timeouts.imalive_clear >= timeouts.imalive_set) {
      out.push_back("imalive_clear >= imalive_set: the IA-flag may alarm under a healthy component");
    }
    return out;
  }

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

enum class RecordKind { sent, delivered, fired, note, fault, recovery };

// One observable line of the run. Message payloads render via encode_trace;
// database payloads render as "part <name> <n>" or "dbcopy <n>".
struct TraceEvent {
  Tick tick = 0;
  int node = 0;
  RecordKind kind = RecordKind::note;

  int dest = -1;
  int src = -1;  // carried for trace consumers; not part of the line format
  int mbox = -1;
  bool is_message = false;
  Message message;
  DbTransfer::Kind part_kind = DbTransfer::Kind::sender_id;
  int part_value = 0;

  int timeout_kind = 0;
  int timeout_subid = 0;

  std::string text;
  int target = -1;

  std::string payload_text() const {
    if (is_message) {
      return encode_trace(message);
    }
    std::ostringstream os;
    switch (part_kind) {
      case DbTransfer::Kind::sender_id:
        os << "part sender " << part_value;
        break;
      case DbTransfer::Kind::task_count:
        os << "part task_nr " << part_value;
        break;
      case DbTransfer::Kind::task_bulk:
        os << "part tasks " << part_value;
        break;
      case DbTransfer::Kind::error_count:
        os << "part error_nr " << part_value;
        break;
      case DbTransfer::Kind::error_bulk:
        os << "part errors " << part_value;
        break;
      case DbTransfer::Kind::snapshot:
        os << "dbcopy " << part_value;
        break;
    }
    return os.str();
  }

  std::string render() const {
    std::ostringstream os;
    os << tick << ' ' << node << ' ';
    switch (kind) {
      case RecordKind::sent:
        os << "SENT " << dest << ' ' << mbox << ' ' << payload_text();
        break;
      case RecordKind::delivered:
        os << "DELIVERED " << mbox << ' ' << payload_text();
        break;
      case RecordKind::fired:
        os << "FIRED " << timeout_kind << ' ' << timeout_subid;
        break;
      case RecordKind::note:
        os << "NOTE " << text;
        break;
      case RecordKind::fault:
        os << "FAULT " << text;
        break;
      case RecordKind::recovery:
        os << "RECOVERY " << text << ' ' << target;
        break;
    }
    return os.str();
  }
};

inline std::string render_trace(const std::vector<TraceEvent>& trace) {
  std::ostringstream os;
  for (const TraceEvent& e : trace) {
    os << e.render() << '\n';
  }
  return os.str();
}

struct Report {
  struct Suspicion {
    Tick tick;
    int watcher;
    int suspect;
  };
  struct TeifBroadcast {
    Tick tick;
    int node;
  };
  struct RecoveryRequest {
    Tick tick;
    int requester;
    int target;
    std::optional<Tick> latency_from_fault;
  };
  struct Election {
    Tick tick;
    int node;
    int old_manager;
    int new_manager;
  };

  int n_nodes = 0;
  Tick run_length = 0;
  std::vector<Suspicion> suspicion_events;
  std::map<int, Tick> first_suspicion_by_suspect;
  int active_suspicions_at_end = 0;
  std::vector<TeifBroadcast> teif_broadcasts;
  std::vector<RecoveryRequest> span_requests;
  std::vector<RecoveryRequest> reboot_requests;
  std::vector<Election> elections;
  std::map<std::string, long long> message_counts;
  bool replicas_equal = false;
  int final_managerid = -1;

  long long metric(std::string_view name) const {
    if (name == "suspicions") {
      return static_cast<long long>(suspicion_events.size());
    }
    if (name == "teif_broadcasts") {
      return static_cast<long long>(teif_broadcasts.size());
    }
    if (name == "spans") {
      return static_cast<long long>(span_requests.size());
    }
    if (name == "reboots") {
      return static_cast<long long>(reboot_requests.size());
    }
    if (name == "elections") {
      return static_cast<long long>(elections.size());
    }
    if (name == "final_managerid") {
      return final_managerid;
    }
    if (name == "replicas_equal") {
      return replicas_equal ? 1 : 0;
    }
    throw std::invalid_argument("unknown report metric: " + std::string(name));
  }

  std::string render_kv() const {
    std::ostringstream os;
    os << "n_nodes " << n_nodes << '\n';
    os << "run_length " << run_length << '\n';
    os << "suspicions " << suspicion_events.size() << '\n';
    for (const auto& [suspect, tick] : first_suspicion_by_suspect) {
      os << "suspicion_first " << suspect << ' ' << tick << '\n';
    }
    os << "active_suspicions " << active_suspicions_at_end << '\n';
    os << "teif_broadcasts " << teif_broadcasts.size() << '\n';
    for (const auto& t : teif_broadcasts) {
      os << "teif_broadcast " << t.node << ' ' << t.tick << '\n';
    }
    os << "spans " << span_requests.size() << '\n';
    for (const auto& r : span_requests) {
      os << "span " << r.requester << ' ' << r.target << ' ' << r.tick;
      if (r.latency_from_fault) {
        os << ' ' << *r.latency_from_fault;
      }
      os << '\n';
    }
    os << "reboots " << reboot_requests.size() << '\n';
    for (const auto& r : reboot_requests) {
      os << "reboot " << r.requester << ' ' << r.target << ' ' << r.tick;
      if (r.latency_from_fault) {
        os << ' ' << *r.latency_from_fault;
      }
      os << '\n';
    }
    os << "elections " << elections.size() << '\n';
    for (const auto& e : elections) {
      os << "election " << e.node << ' ' << e.old_manager << ' '
         << e.new_manager << ' ' << e.tick << '\n';
    }
    for (const auto& [label, count] : message_counts) {
      os << "msg_count " << label << ' ' << count << '\n';
    }
    os << "replicas_equal " << (replicas_equal ? 1 : 0) << '\n';
    os << "final_managerid " << final_managerid << '\n';
    return os.str();
  }

  std::string render_text() const {
    std::ostringstream os;
    os << "run of " << run_length << " ticks over " << n_nodes << " nodes\n";
    os << "suspicion periods entered: " << suspicion_events.size() << '\n';
    for (const auto& s : suspicion_events) {
      os << "  tick " << s.tick << ": node " << s.watcher << " suspects node "
         << s.suspect << '\n';
    }
    os << "suspicions still open at end: " << active_suspicions_at_end << '\n';
    os << "TEIF broadcasts: " << teif_broadcasts.size() << '\n';
    for (const auto& t : teif_broadcasts) {
      os << "  tick " << t.tick << ": IAT@" << t.node << " alarmed\n";
    }
    os << "agent respawn requests: " << span_requests.size() << '\n';
    for (const auto& r : span_requests) {
      os << "  tick " << r.tick << ": node " << r.requester
         << " requested respawn on node " << r.target;
      if (r.latency_from_fault) {
        os << " (" << *r.latency_from_fault << " ticks after the fault)";
      }
      os << '\n';
    }
    os << "node reboot requests: " << reboot_requests.size() << '\n';
    for (const auto& r : reboot_requests) {
      os << "  tick " << r.tick << ": node " << r.requester
         << " requested reboot of node " << r.target;
      if (r.latency_from_fault) {
        os << " (" << *r.latency_from_fault << " ticks after the fault)";
      }
      os << '\n';
    }
    os << "elections: " << elections.size() << '\n';
    for (const auto& e : elections) {
      os << "  tick " << e.tick << ": node " << e.node << " moved from manager "
         << e.old_manager << " to " << e.new_manager << '\n';
    }
    os << "messages sent by type:\n";
    for (const auto& [label, count] : message_counts) {
      os << "  " << label << ": " << count << '\n';
    }
    os << "replicas equal: " << (replicas_equal ? "yes" : "no") << '\n';
    os << "final manager id: " << final_managerid << '\n';
    return os.str();
  }
};

// Deterministic discrete-event harness hosting one component, one I'm Alive
// Task, and one IA-flag cell per node. Equal configurations produce
// byte-equal traces.
class World {
 public:
  explicit World(SimConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    roles_ = cfg_.role_config();
  }

  void run() {
    if (ran_) {
      throw std::logic_error("World::run may only be called once");
    }
    ran_ = true;
    boot();
    loop();
    finish();
  }

  const std::vector<TraceEvent>& trace() const { return trace_; }
  std::string trace_text() const { return render_trace(trace_); }
  const Report& report() const { return report_; }

  // Inspection hooks for tests.
  const ComponentState& component(int node) const { return nodes_[checked(node)].comp; }
  const IatState& iat(int node) const { return nodes_[checked(node)].iat; }
  bool node_alive(int node) const { return nodes_[checked(node)].node_alive; }
  bool component_alive(int node) const { return nodes_[checked(node)].comp.alive; }
  const std::optional<std::string>& persisted(int node) const {
    return nodes_[checked(node)].persist_slot;
  }

 private:
  using Payload = std::variant<Message, DbTransfer>;

  enum class EventKind {
    delivery,
    timer_phase,
    fault,
    respawn_done,
    reboot_done,
    unfreeze,
    startup_retry,
    db_inject,
  };

  // Units drive the per-node timer order: the IAT's list advances before the
  // component's at equal ticks.
  enum class Unit { iat = 0, component = 1 };

  struct Event {
    Tick tick = 0;
    int node = 0;
    int rank = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::delivery;

    int src = -1;
    int mbox = -1;
    Payload payload;
    FaultEvent fault;
    Unit unit = Unit::component;
    int generation = 0;
  };

  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      return std::tuple(a.tick, a.node, a.rank, a.seq) >
             std::tuple(b.tick, b.node, b.rank, b.seq);
    }
  };

  struct Parked {
    int src;
    int mbox;
    Payload payload;
  };

  struct NodeRuntime {
    ComponentState comp;
    IatState iat;
    IaFlag flag;
    bool node_alive = true;
    bool frozen = false;
    std::deque<Parked> parked;
    std::optional<std::string> persist_slot;
    bool reboot_pending = false;
    bool respawn_pending = false;
    bool retry_pending = false;
    int generation = 0;  // bumped whenever the component is replaced
    std::optional<Tick> last_fault_tick;
  };

  static constexpr int rank_delivery = 0;
  static constexpr int rank_timer = 1;
  static constexpr int rank_fault = 2;
  static constexpr int rank_world = 3;

  int checked(int node) const {
    if (node < 0 || node >= cfg_.n_nodes) {
      throw std::out_of_range("node id out of range");
    }
    return node;
  }

  // --- trace helpers ---

  void note(int node, std::string text) {
    TraceEvent e;
    e.tick = now_;
    e.node = node;
    e.kind = RecordKind::note;
    e.text = std::move(text);
    trace_.push_back(std::move(e));
  }

  void trace_payload(RecordKind kind, int node, int src, int dest, int mbox,
                     const Payload& payload) {
    TraceEvent e;
    e.tick = now_;
    e.node = node;
    e.src = src;
    e.dest = dest;
    e.kind = kind;
    e.mbox = mbox;
    if (const Message* m = std::get_if<Message>(&payload)) {
      e.is_message = true;
      e.message = *m;
    } else {
      const DbTransfer& t = std::get<DbTransfer>(payload);
      e.part_kind = t.kind;
      e.part_value = t.kind == DbTransfer::Kind::snapshot
                         ? cfg_.n_nodes
                         : t.value;
    }
    trace_.push_back(std::move(e));
  }

  void count_sent(const Payload& payload) {
    if (const Message* m = std::get_if<Message>(&payload)) {
      std::string label{pretty(m->type)};
      ++report_.message_counts[label];
    } else if (std::get<DbTransfer>(payload).kind == DbTransfer::Kind::snapshot) {
      ++report_.message_counts["DBCOPY"];
    } else {
      ++report_.message_counts["DBPART"];
    }
  }

  // --- network ---

  Tick draw_latency() {
    if (cfg_.latency_min == cfg_.latency_max) {
      return cfg_.latency_min;
    }
    const auto span =
        static_cast<std::uint64_t>(cfg_.latency_max - cfg_.latency_min + 1);
    return cfg_.latency_min + static_cast<Tick>(rng_() % span);
  }

  void deliver(int src, int dest, int mbox, Payload payload) {
    if (dest < 0 || dest >= cfg_.n_nodes) {
      std::ostringstream os;
      os << "message to unknown destination " << dest << " dropped";
      note(src, os.str());
      return;
    }
    trace_payload(RecordKind::sent, src, src, dest, mbox, payload);
    count_sent(payload);
    const Tick latency = src == dest ? 0 : draw_latency();
    Tick& channel = channel_last_[std::tuple(src, dest, mbox)];
    const Tick when = std::max(now_ + latency, channel);
    channel = when;

    Event e;
    e.tick = when;
    e.node = dest;
    e.rank = rank_delivery;
    e.seq = next_seq();
    e.kind = EventKind::delivery;
    e.src = src;
    e.mbox = mbox;
    e.payload = std::move(payload);
    queue_.push(std::move(e));
  }

  // --- component interaction wrapper: collects report metrics ---

  template <typename Fn>
  void interact(int node, Fn&& fn) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    const bool was_running =
        rt.comp.phase == ComponentState::Phase::running;
    const int old_manager = rt.comp.managerid;
    std::vector<int> old_suspicion = rt.comp.suspicion;

    fn();

    for (std::size_t i = 0; i < rt.comp.suspicion.size(); ++i) {
      const int before =
          i < old_suspicion.size() ? old_suspicion[i] : 0;
      if (!before && rt.comp.suspicion[i]) {
        Report::Suspicion s;
        s.tick = now_;
        s.watcher = node;
        s.suspect = static_cast<int>(i);
        report_.suspicion_events.push_back(s);
        report_.first_suspicion_by_suspect.try_emplace(static_cast<int>(i), now_);
      }
    }
    if (was_running && old_manager >= 0 && rt.comp.managerid >= 0 &&
        rt.comp.managerid != old_manager) {
      Report::Election e;
      e.tick = now_;
      e.node = node;
      e.old_manager = old_manager;
      e.new_manager = rt.comp.managerid;
      report_.elections.push_back(e);
    }
    ensure_retry(node);
  }

  // --- action execution ---

  void execute(int node, Unit unit, const Actions& actions) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    TimeoutList& list = unit == Unit::iat ? rt.iat.tom : rt.comp.tom;
    for (const Action& action : actions) {
      if (const auto* send = std::get_if<SendMessage>(&action)) {
        deliver(node, send->dest, send->mbox, send->message);
      } else if (const auto* senddb = std::get_if<SendDb>(&action)) {
        deliver(node, senddb->dest, senddb->mbox, senddb->transfer);
      } else if (const auto* ins = std::get_if<InsertTimeout>(&action)) {
        list.insert(declare(ins->kind, ins->subid, kind_cyclic(ins->kind),
                            kind_deadline(ins->kind, cfg_.timeouts)));
      } else if (const auto* ren = std::get_if<RenewTimeout>(&action)) {
        list.renew(ren->kind, ren->subid);
      } else if (const auto* del = std::get_if<DeleteTimeout>(&action)) {
        list.erase(del->kind, del->subid);
      } else if (std::get_if<ClearIaFlag>(&action) != nullptr) {
        clear_flag(rt.flag);
      } else if (std::get_if<CloseTom>(&action) != nullptr) {
        rt.comp.tom.close();
      } else if (const auto* respawn = std::get_if<RequestAgentRespawn>(&action)) {
        request_respawn(node, respawn->target);
      } else if (const auto* reboot = std::get_if<RequestNodeReboot>(&action)) {
        request_reboot(node, reboot->target);
      } else if (std::get_if<BecomeManagerAndRestart>(&action) != nullptr) {
        restart_component(node);
      } else if (std::get_if<PersistDb>(&action) != nullptr) {
        persist(node);
      } else if (const auto* tracenote = std::get_if<EmitTrace>(&action)) {
        note(node, tracenote->note);
      }
    }
  }

  void restart_component(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    auto [next, actions] = restart_as(rt.comp, Role::manager);
    rt.comp = std::move(next);
    rt.comp.tom = TimeoutList(now_);
    ++rt.generation;
    execute(node, Unit::component, actions);
  }

  void persist(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    if (!cfg_.persistence_enabled) {
      return;
    }
    rt.persist_slot = snapshot(rt.comp.db);
    if (!cfg_.persist_dir.empty()) {
      std::filesystem::create_directories(cfg_.persist_dir);
      std::ofstream out(std::filesystem::path(cfg_.persist_dir) /
                        ("dirdb_node" + std::to_string(node) + ".txt"));
      out << *rt.persist_slot;
    }
  }

  // --- recovery hooks ---

  void request_respawn(int requester, int target) {
    Report::RecoveryRequest r;
    r.tick = now_;
    r.requester = requester;
    r.target = target;
    if (target >= 0 && target < cfg_.n_nodes &&
        nodes_[static_cast<std::size_t>(target)].last_fault_tick) {
      r.latency_from_fault =
          now_ - *nodes_[static_cast<std::size_t>(target)].last_fault_tick;
    }
    report_.span_requests.push_back(r);

    // The spawn request is addressed to the target's I'm Alive Task.
    Message span;
    span.type = msg::span;
    span.subid = target;
    deliver(requester, target, iat_mbox, span);
  }

  void request_reboot(int requester, int target) {
    Report::RecoveryRequest r;
    r.tick = now_;
    r.requester = requester;
    r.target = target;
    if (target >= 0 && target < cfg_.n_nodes &&
        nodes_[static_cast<std::size_t>(target)].last_fault_tick) {
      r.latency_from_fault =
          now_ - *nodes_[static_cast<std::size_t>(target)].last_fault_tick;
    }
    report_.reboot_requests.push_back(r);

    TraceEvent e;
    e.tick = now_;
    e.node = requester;
    e.kind = RecordKind::recovery;
    e.text = "REBOOT";
    e.target = target;
    trace_.push_back(e);

    if (!cfg_.reboot_enabled) {
      note(requester, "node reboot disabled by configuration");
      return;
    }
    if (target < 0 || target >= cfg_.n_nodes) {
      note(requester, "reboot target out of range");
      return;
    }
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(target)];
    if (rt.reboot_pending) {
      note(requester, "reboot already pending for node " + std::to_string(target));
      return;
    }
    kill_node(target);
    rt.reboot_pending = true;
    Event done;
    done.tick = now_ + cfg_.reboot_delay;
    done.node = target;
    done.rank = rank_world;
    done.seq = next_seq();
    done.kind = EventKind::reboot_done;
    queue_.push(done);
  }

  void kill_node(int target) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(target)];
    rt.node_alive = false;
    rt.comp.alive = false;
    rt.comp.tom.close();
    rt.iat.tom.close();
    rt.frozen = false;
    rt.parked.clear();
    ++rt.generation;
  }

  // --- lifecycle events ---

  void boot() {
    nodes_.resize(static_cast<std::size_t>(cfg_.n_nodes));
    for (const std::string& w : cfg_.warnings()) {
      note(0, "config warning: " + w);
    }

    ComponentOptions opts;
    opts.inject = cfg_.inject;
    opts.tasks_per_node = cfg_.tasks_per_node;
    opts.startup_retry_limit = cfg_.startup_retry_limit;

    // The IAT is created before the component so that at equal ticks the
    // watchdog's timers advance first.
    for (int i = 0; i < cfg_.n_nodes; ++i) {
      NodeRuntime& rt = nodes_[static_cast<std::size_t>(i)];
      rt.iat = make_iat(i, cfg_.n_nodes);
      auto [state, actions] = startup(i, true, true, roles_, std::nullopt, opts);
      rt.comp = std::move(state);
      execute(i, Unit::component, actions);
    }

    for (const FaultEvent& f : cfg_.faults) {
      Event e;
      e.tick = f.at;
      e.node = f.node;
      e.rank = rank_fault;
      e.seq = next_seq();
      e.kind = EventKind::fault;
      e.fault = f;
      queue_.push(e);
    }
    for (const DbInjection& u : cfg_.db_updates) {
      Event e;
      e.tick = u.at;
      e.node = u.node;
      e.rank = rank_delivery;
      e.seq = next_seq();
      e.kind = EventKind::db_inject;
      e.src = u.node;
      e.mbox = node_mbox(u.node);
      // Locality of a DB update is judged by subid == self; the local flag
      // stays reserved for timeout-engine messages.
      e.payload = db_update_message(u.node, u.update, false);
      queue_.push(e);
    }
  }

  bool unit_timers_live(const NodeRuntime& rt, Unit unit) const {
    if (!rt.node_alive) {
      return false;
    }
    const TimeoutList& list = unit == Unit::iat ? rt.iat.tom : rt.comp.tom;
    if (list.closed()) {
      return false;
    }
    if (unit == Unit::component && !rt.comp.alive) {
      return false;
    }
    return true;
  }

  void loop() {
    while (true) {
      Tick next = queue_.empty() ? -1 : queue_.top().tick;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (Unit unit : {Unit::iat, Unit::component}) {
          const NodeRuntime& rt = nodes_[i];
          if (!unit_timers_live(rt, unit)) {
            continue;
          }
          const TimeoutList& list =
              unit == Unit::iat ? rt.iat.tom : rt.comp.tom;
          if (auto expiry = list.next_expiry()) {
            const Tick at = std::max(*expiry, now_);
            if (next < 0 || at < next) {
              next = at;
            }
          }
        }
      }
      if (next < 0 || next > cfg_.run_length) {
        break;
      }
      now_ = next;

      // Bring every live clock to the current tick first so that renewals
      // and inserts during this tick's deliveries count from now; due
      // entries fire in the timer phase below.
      for (NodeRuntime& rt : nodes_) {
        rt.iat.tom.sync(now_);
        rt.comp.tom.sync(now_);
      }

      // Synthesize timer-phase events for every unit due at this tick; the
      // IAT is enqueued first per node.
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (Unit unit : {Unit::iat, Unit::component}) {
          NodeRuntime& rt = nodes_[i];
          if (!unit_timers_live(rt, unit)) {
            continue;
          }
          const TimeoutList& list =
              unit == Unit::iat ? rt.iat.tom : rt.comp.tom;
          auto expiry = list.next_expiry();
          if (expiry && *expiry <= now_) {
            Event e;
            e.tick = now_;
            e.node = static_cast<int>(i);
            e.rank = rank_timer;
            e.seq = next_seq();
            e.kind = EventKind::timer_phase;
            e.unit = unit;
            queue_.push(e);
          }
        }
      }

      while (!queue_.empty() && queue_.top().tick == now_) {
        Event e = queue_.top();
        queue_.pop();
        dispatch(e);
      }
    }
    now_ = cfg_.run_length;
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::delivery:
        on_delivery(e);
        break;
      case EventKind::timer_phase:
        on_timer_phase(e);
        break;
      case EventKind::fault:
        apply_fault(e.fault);
        break;
      case EventKind::respawn_done:
        on_respawn_done(e.node);
        break;
      case EventKind::reboot_done:
        on_reboot_done(e.node);
        break;
      case EventKind::unfreeze:
        on_unfreeze(e.node, e.generation);
        break;
      case EventKind::startup_retry:
        on_startup_retry(e.node, e.generation);
        break;
      case EventKind::db_inject:
        // Enters the net as an ordinary local send from the node's own
        // recovery layer.
        if (nodes_[static_cast<std::size_t>(e.node)].node_alive) {
          deliver(e.node, e.node, e.mbox, e.payload);
        } else {
          note(e.node, "scripted db update dropped, node down");
        }
        break;
    }
  }

  void on_delivery(const Event& e) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(e.node)];
    if (!rt.node_alive) {
      std::ostringstream os;
      os << "inbound dropped, node down (mbox " << e.mbox << ")";
      note(e.node, os.str());
      return;
    }
    if (e.mbox == iat_mbox) {
      const Message* m = std::get_if<Message>(&e.payload);
      if (m == nullptr) {
        note(e.node, "non-message payload on the IAT mailbox dropped");
        return;
      }
      trace_payload(RecordKind::delivered, e.node, e.src, -1, e.mbox, e.payload);
      if (m->type == msg::span) {
        // The IAT has no SPAN branch; the recovery layer reacts instead.
        schedule_respawn(e.node);
        return;
      }
      Actions actions = iat_handle(rt.iat, *m, rt.flag);
      if (!actions.empty() && std::get_if<SendMessage>(&actions.front()) &&
          std::get<SendMessage>(actions.front()).message.type == msg::teif) {
        report_.teif_broadcasts.push_back({now_, e.node});
      }
      execute(e.node, Unit::iat, actions);
      return;
    }

    // Component mailboxes. A crashed or frozen component consumes nothing;
    // mail queues unboundedly.
    if (!rt.comp.alive || rt.frozen) {
      rt.parked.push_back(Parked{e.src, e.mbox, e.payload});
      return;
    }
    feed_component(e.node, e.src, e.mbox, e.payload);
  }

  void feed_component(int node, int src, int mbox, const Payload& payload) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    trace_payload(RecordKind::delivered, node, src, -1, mbox, payload);
    interact(node, [&] {
      if (const Message* m = std::get_if<Message>(&payload)) {
        Actions actions = handle_message(rt.comp, *m);
        execute(node, Unit::component, actions);
      } else {
        Actions actions =
            handle_db_transfer(rt.comp, std::get<DbTransfer>(payload));
        execute(node, Unit::component, actions);
      }
    });
  }

  void on_timer_phase(const Event& e) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(e.node)];
    if (!unit_timers_live(rt, e.unit)) {
      return;
    }
    TimeoutList& list = e.unit == Unit::iat ? rt.iat.tom : rt.comp.tom;
    const auto fired = list.advance(now_ - list.now());
    const int mbox = e.unit == Unit::iat ? iat_mbox : node_mbox(e.node);
    for (const auto& [kind, subid] : fired) {
      TraceEvent f;
      f.tick = now_;
      f.node = e.node;
      f.kind = RecordKind::fired;
      f.timeout_kind = kind;
      f.timeout_subid = subid;
      trace_.push_back(f);
      deliver(e.node, e.node, mbox, make_timeout_message(kind, subid));
    }
  }

  void apply_fault(const FaultEvent& f) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(f.node)];
    std::ostringstream label;
    label << fault_label(f.kind);
    if (f.kind == FaultEvent::Kind::freeze_component) {
      label << ' ' << f.duration;
    }
    switch (f.kind) {
      case FaultEvent::Kind::crash_component:
        if (!rt.node_alive || !rt.comp.alive) {
          note(f.node, "fault targets an already-crashed component");
          return;
        }
        trace_fault(f.node, label.str());
        rt.last_fault_tick = now_;
        rt.comp.alive = false;
        rt.comp.tom.close();
        return;
      case FaultEvent::Kind::crash_node:
        if (!rt.node_alive) {
          note(f.node, "fault targets an already-crashed node");
          return;
        }
        trace_fault(f.node, label.str());
        rt.last_fault_tick = now_;
        kill_node(f.node);
        return;
      case FaultEvent::Kind::freeze_component: {
        if (!rt.node_alive || !rt.comp.alive) {
          note(f.node, "fault targets an already-crashed component");
          return;
        }
        if (rt.frozen) {
          note(f.node, "component already frozen");
          return;
        }
        trace_fault(f.node, label.str());
        rt.last_fault_tick = now_;
        rt.frozen = true;
        Event thaw;
        thaw.tick = now_ + f.duration;
        thaw.node = f.node;
        thaw.rank = rank_world;
        thaw.seq = next_seq();
        thaw.kind = EventKind::unfreeze;
        thaw.generation = rt.generation;
        queue_.push(thaw);
        return;
      }
      case FaultEvent::Kind::reboot_node:
        if (rt.reboot_pending) {
          note(f.node, "reboot already pending");
          return;
        }
        trace_fault(f.node, label.str());
        rt.last_fault_tick = now_;
        kill_node(f.node);
        rt.reboot_pending = true;
        Event done;
        done.tick = now_ + cfg_.reboot_delay;
        done.node = f.node;
        done.rank = rank_world;
        done.seq = next_seq();
        done.kind = EventKind::reboot_done;
        queue_.push(done);
        return;
    }
  }

  void trace_fault(int node, std::string text) {
    TraceEvent e;
    e.tick = now_;
    e.node = node;
    e.kind = RecordKind::fault;
    e.text = std::move(text);
    trace_.push_back(std::move(e));
  }

  void trace_recovery(int node, std::string text, int target) {
    TraceEvent e;
    e.tick = now_;
    e.node = node;
    e.kind = RecordKind::recovery;
    e.text = std::move(text);
    e.target = target;
    trace_.push_back(std::move(e));
  }

  void schedule_respawn(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    if (rt.respawn_pending) {
      note(node, "respawn already pending");
      return;
    }
    rt.respawn_pending = true;
    trace_recovery(node, "RESPAWN", node);
    Event e;
    e.tick = now_ + cfg_.respawn_delay;
    e.node = node;
    e.rank = rank_world;
    e.seq = next_seq();
    e.kind = EventKind::respawn_done;
    queue_.push(e);
  }

  void on_respawn_done(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    rt.respawn_pending = false;
    if (!rt.node_alive) {
      note(node, "respawn aborted, node down");
      return;
    }
    ComponentOptions opts;
    opts.inject = cfg_.inject;
    opts.tasks_per_node = cfg_.tasks_per_node;
    opts.startup_retry_limit = cfg_.startup_retry_limit;
    auto started = startup(node, false, true, roles_, std::nullopt, opts);
    Actions actions = std::move(started.second);
    rt.comp = std::move(started.first);
    rt.comp.tom = TimeoutList(now_);
    rt.frozen = false;
    ++rt.generation;
    trace_recovery(node, "RESPAWNED", node);
    interact(node, [&] { execute(node, Unit::component, actions); });
    drain_parked(node);
  }

  void on_reboot_done(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    rt.reboot_pending = false;
    rt.node_alive = true;
    rt.flag = IaFlag{};
    rt.iat = make_iat(node, cfg_.n_nodes);
    rt.iat.tom = TimeoutList(now_);
    rt.frozen = false;
    rt.parked.clear();
    ++rt.generation;

    ComponentOptions opts;
    opts.inject = cfg_.inject;
    opts.tasks_per_node = cfg_.tasks_per_node;
    opts.startup_retry_limit = cfg_.startup_retry_limit;
    std::optional<DirDatabase> persisted;
    if (rt.persist_slot) {
      persisted = load_snapshot(*rt.persist_slot);
    }
    auto started = startup(node, false, true, roles_, std::move(persisted), opts);
    Actions actions = std::move(started.second);
    rt.comp = std::move(started.first);
    rt.comp.tom = TimeoutList(now_);
    trace_recovery(node, "REBOOTED", node);
    interact(node, [&] { execute(node, Unit::component, actions); });
  }

  void on_unfreeze(int node, int generation) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    if (generation != rt.generation || !rt.node_alive || !rt.comp.alive ||
        !rt.frozen) {
      note(node, "stale unfreeze ignored");
      return;
    }
    rt.frozen = false;
    note(node, "component resumes after freeze");
    drain_parked(node);
  }

  void drain_parked(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    while (!rt.parked.empty() && rt.node_alive && rt.comp.alive && !rt.frozen) {
      Parked p = std::move(rt.parked.front());
      rt.parked.pop_front();
      feed_component(node, p.src, p.mbox, p.payload);
    }
  }

  void ensure_retry(int node) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    if (rt.retry_pending || !rt.node_alive || !rt.comp.alive) {
      return;
    }
    if (rt.comp.phase != ComponentState::Phase::await_nmi &&
        rt.comp.phase != ComponentState::Phase::await_db) {
      return;
    }
    rt.retry_pending = true;
    Event e;
    e.tick = now_ + cfg_.timeouts.reply_db;
    e.node = node;
    e.rank = rank_world;
    e.seq = next_seq();
    e.kind = EventKind::startup_retry;
    e.generation = rt.generation;
    queue_.push(e);
  }

  void on_startup_retry(int node, int generation) {
    NodeRuntime& rt = nodes_[static_cast<std::size_t>(node)];
    rt.retry_pending = false;
    if (generation != rt.generation || !rt.node_alive || !rt.comp.alive) {
      return;
    }
    if (rt.comp.phase != ComponentState::Phase::await_nmi &&
        rt.comp.phase != ComponentState::Phase::await_db) {
      return;
    }
    interact(node, [&] {
      Actions actions = startup_retry(rt.comp);
      execute(node, Unit::component, actions);
    });
  }

  void finish() {
    report_.n_nodes = cfg_.n_nodes;
    report_.run_length = cfg_.run_length;

    int active = 0;
    for (const NodeRuntime& rt : nodes_) {
      if (!rt.node_alive || !rt.comp.alive) {
        continue;
      }
      for (int s : rt.comp.suspicion) {
        active += s ? 1 : 0;
      }
    }
    report_.active_suspicions_at_end = active;

    // Replica equality and manager consensus over live, running components.
    const DirDatabase* reference = nullptr;
    bool equal = true;
    int manager = -2;
    for (const NodeRuntime& rt : nodes_) {
      if (!rt.node_alive || !rt.comp.alive ||
          rt.comp.phase != ComponentState::Phase::running) {
        continue;
      }
      if (reference == nullptr) {
        reference = &rt.comp.db;
        manager = rt.comp.managerid;
      } else {
        equal = equal && replicated_content_equal(*reference, rt.comp.db);
        if (rt.comp.managerid != manager) {
          manager = -1;
        }
      }
    }
    report_.replicas_equal = reference != nullptr && equal;
    report_.final_managerid = manager >= 0 ? manager : -1;
  }

  std::uint64_t next_seq() { return seq_++; }

  SimConfig cfg_;
  RoleConfig roles_;
  std::mt19937_64 rng_;
  std::vector<NodeRuntime> nodes_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::map<std::tuple<int, int, int>, Tick> channel_last_;
  std::vector<TraceEvent> trace_;
  Report report_;
  Tick now_ = 0;
  std::uint64_t seq_ = 0;
  bool ran_ = false;
};

struct RunResult {
  std::vector<TraceEvent> trace;
  std::string trace_text;
  Report report;
};

inline RunResult run(const SimConfig& cfg) {
  World world(cfg);
  world.run();
  RunResult r;
  r.trace = world.trace();
  r.trace_text = world.trace_text();
  r.report = world.report();
  return r;
}

}  // namespace dirnet
