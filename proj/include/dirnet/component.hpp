#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "dirnet/actions.hpp"
#include "dirnet/db.hpp"
#include "dirnet/tom.hpp"

namespace dirnet {

// Only two runtime roles exist; AGENT appears in role scripts but has no
// loop of its own.
enum class Role { manager, backup };

inline std::string_view role_label(Role r) {
  return r == Role::manager ? "manager" : "backup agent";
}

// Static role table, one entry per node, exactly one manager.
struct RoleConfig {
  std::vector<Role> roles;

  int size() const { return static_cast<int>(roles.size()); }

  int manager_node() const {
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (roles[i] == Role::manager) {
        return static_cast<int>(i);
      }
    }
    return -1;
  }

  bool well_formed() const {
    if (roles.size() < 2) {
      return false;
    }
    int managers = 0;
    for (Role r : roles) {
      if (r == Role::manager) {
        ++managers;
      }
    }
    return managers == 1;
  }

  friend bool operator==(const RoleConfig&, const RoleConfig&) = default;
};

struct ComponentOptions {
  bool inject = false;
  int tasks_per_node = 2;
  int startup_retry_limit = 5;

  friend bool operator==(const ComponentOptions&, const ComponentOptions&) = default;
};

// Assembles the per-sender pieces of the startup broadcast; parts may arrive
// out of order across the two mailboxes.
struct DbAssembly {
  struct Incoming {
    bool announced = false;
    std::optional<int> task_nr;
    std::optional<int> error_nr;
    std::vector<TaskRecord> tasks;
    std::vector<ErrorRecord> errors;
    bool installed = false;

    friend bool operator==(const Incoming&, const Incoming&) = default;
  };

  std::vector<Incoming> from;
  int completed = 0;

  friend bool operator==(const DbAssembly&, const DbAssembly&) = default;
};

struct ComponentState {
  enum class Phase { await_nmi, await_db, running, stalled };

  int self = 0;
  int n_nodes = 0;
  Role role = Role::backup;
  int managerid = -1;
  std::vector<int> suspicion;
  DirDatabase db;
  TimeoutList tom;
  bool alive = true;
  bool first_activation = true;
  bool primary = true;
  Phase phase = Phase::running;
  ComponentOptions options;

  // Startup bookkeeping.
  int witm_bursts = 0;
  int db_request_target = -1;
  int db_requests_sent = 0;
  int generation = 0;
  bool global_db_ready = false;
  DbAssembly assembly;

  bool suspicion_set() const {
    for (int s : suspicion) {
      if (s) {
        return true;
      }
    }
    return false;
  }

  friend bool operator==(const ComponentState&, const ComponentState&) = default;
};

inline int choose_next_manager(int managerid, int n) {
  ++managerid;
  if (managerid >= n) {
    managerid = 0;
  }
  return managerid;
}

namespace detail {

inline void note(Actions& actions, std::string text) {
  actions.push_back(EmitTrace{std::move(text)});
}

inline SendMessage to_mbox(int dest, Message m) {
  return SendMessage{dest, node_mbox(dest), std::move(m)};
}

inline SendMessage rouse_own_iat(int self) {
  Message m;
  m.type = msg::rouse;
  m.subid = self;
  return SendMessage{self, iat_mbox, m};
}

// Manager timeout set: one MIA send timer and one TAIA receive timer per
// fellow node, the IA-flag timer, and the inject timer when enabled.
inline void insert_manager_timeouts(const ComponentState& s, Actions& actions) {
  for (int i = 0; i < s.n_nodes; ++i) {
    if (i == s.self) {
      continue;
    }
    actions.push_back(InsertTimeout{tmo::mia, i});
  }
  // The inject hook is a one-experiment self-fault; later promotions and
  // reboots do not re-arm it.
  if (s.options.inject && s.first_activation) {
    actions.push_back(InsertTimeout{tmo::inject_fault, 0});
  }
  actions.push_back(InsertTimeout{tmo::ia_flag, 1});
  for (int i = 0; i < s.n_nodes; ++i) {
    if (i == s.self) {
      continue;
    }
    actions.push_back(InsertTimeout{tmo::taia, i});
  }
}

// Backup timeout set: the MIA receive timer keyed to the manager, the
// IA-flag timer, and the TAIA send timer.
inline void insert_backup_timeouts(const ComponentState& s, Actions& actions) {
  actions.push_back(InsertTimeout{tmo::mia_b, s.managerid});
  actions.push_back(InsertTimeout{tmo::ia_flag, 1});
  actions.push_back(InsertTimeout{tmo::taia_b, 0});
}

// Role-specific timeout setup, suspicion reset, IA-flag clear, and IAT
// activation; transitions the component into its main loop.
inline Actions complete_startup(ComponentState& s) {
  Actions actions;
  if (s.role == Role::manager) {
    s.managerid = s.self;
    insert_manager_timeouts(s, actions);
  } else {
    insert_backup_timeouts(s, actions);
  }
  s.suspicion.assign(static_cast<std::size_t>(s.n_nodes), 0);
  actions.push_back(ClearIaFlag{});
  actions.push_back(rouse_own_iat(s.self));
  s.phase = ComponentState::Phase::running;
  ++s.generation;
  std::ostringstream os;
  os << role_label(s.role) << " loop starts, manager is " << s.managerid;
  note(actions, os.str());
  return actions;
}

inline void epilogue(Actions& actions) {
  actions.push_back(ClearIaFlag{});
  actions.push_back(RenewTimeout{tmo::ia_flag, 1});
}

}  // namespace detail

inline std::pair<ComponentState, Actions> startup(
    int self, bool first_activation, bool primary, const RoleConfig& cfg,
    std::optional<DirDatabase> persisted = std::nullopt,
    const ComponentOptions& options = {}) {
  if (!cfg.well_formed()) {
    throw std::invalid_argument("startup: malformed role configuration");
  }
  const int n = cfg.size();
  if (self < 0 || self >= n) {
    throw std::invalid_argument("startup: node id out of range");
  }

  ComponentState s;
  s.self = self;
  s.n_nodes = n;
  s.first_activation = first_activation;
  s.primary = primary;
  s.options = options;
  s.suspicion.assign(static_cast<std::size_t>(n), 0);
  s.assembly.from.resize(static_cast<std::size_t>(n));

  Actions actions;

  if (first_activation && primary) {
    s.role = cfg.roles[static_cast<std::size_t>(self)];
    s.managerid = cfg.manager_node();
    s.db = DirDatabase(n);
    s.db.status.primary = true;
    s.db.status.role =
        s.role == Role::manager ? NodeRole::manager : NodeRole::backup;
    for (int i = 0; i < n; ++i) {
      s.db.nodes[static_cast<std::size_t>(i)].role =
          cfg.roles[static_cast<std::size_t>(i)] == Role::manager
              ? NodeRole::manager
              : NodeRole::backup;
    }
    {
      std::ostringstream os;
      os << "role of " << self << " is " << role_label(s.role);
      detail::note(actions, os.str());
    }

    // Local database build; task statuses come from the runtime stub, which
    // reports everything as running.
    std::vector<TaskStatus> statuses(
        static_cast<std::size_t>(options.tasks_per_node), TaskStatus::running);
    build_local(s.db, self, statuses);

    // Pipelined broadcast, own round only; the other rounds arrive as
    // transfers from the peers.
    for (const BroadcastStep& step : broadcast_plan(self, n)) {
      if (!step.sending) {
        continue;
      }
      for (int target : step.send_targets) {
        for (const DbTransfer& part : transfer_parts(s.db, self)) {
          actions.push_back(SendDb{target, transfer_mailbox(part.kind), part});
        }
      }
    }

    reset_dynamic(s.db);
    actions.push_back(PersistDb{});

    Actions rest = detail::complete_startup(s);
    actions.insert(actions.end(), rest.begin(), rest.end());
    return {std::move(s), std::move(actions)};
  }

  // Rebooted node or respawned component: role and database are recovered
  // from the fellows.
  s.db = persisted.has_value() ? std::move(*persisted) : DirDatabase(n);
  s.db.status.primary = true;
  s.phase = ComponentState::Phase::await_nmi;
  s.witm_bursts = 1;
  detail::note(actions, "asking the neighbouring nodes who is the manager");
  Message witm;
  witm.type = msg::witm;
  witm.subid = self;
  for (int i = 0; i < n; ++i) {
    if (i != self) {
      actions.push_back(detail::to_mbox(i, witm));
    }
  }
  return {std::move(s), std::move(actions)};
}

namespace detail {

// Shared TAIA handling: a fresh heartbeat re-arms watching (announcing the
// node when it was off the list) or ends a suspicion period.
inline void manager_taia(ComponentState& s, int subid, Actions& actions) {
  if (!s.tom.is_present(tmo::taia, subid)) {
    actions.push_back(InsertTimeout{tmo::taia, subid});
    // Node is up again: broadcast the news, skipping self and the node
    // back to life.
    Message niua;
    niua.type = msg::niua;
    niua.subid = subid;
    for (int i = 0; i < s.n_nodes; ++i) {
      if (i != s.self && i != subid) {
        actions.push_back(to_mbox(i, niua));
      }
    }
  }
  if (s.suspicion[static_cast<std::size_t>(subid)]) {
    s.suspicion[static_cast<std::size_t>(subid)] = 0;
    note(actions,
         "got a TAIA while expecting a TEIF, leaving the suspicion period");
  } else {
    actions.push_back(RenewTimeout{tmo::taia, subid});
  }
}

inline bool subid_valid(const ComponentState& s, const Message& m) {
  return m.subid >= 0 && m.subid < s.n_nodes;
}

inline void note_bad_subid(Actions& actions, const Message& m) {
  std::ostringstream os;
  os << "message type " << m.type << " with out-of-range subid " << m.subid
     << " ignored";
  note(actions, os.str());
}

}  // namespace detail

inline Actions manager_handle(ComponentState& s, const Message& m) {
  Actions actions;
  if (!detail::subid_valid(s, m)) {
    detail::note_bad_subid(actions, m);
    detail::epilogue(actions);
    return actions;
  }
  switch (m.type) {
    case tmo::inject_fault:
      detail::note(actions, "fault injection: timeout manager detached");
      actions.push_back(CloseTom{});
      break;
    case tmo::ia_flag:
      actions.push_back(ClearIaFlag{});
      break;
    case tmo::mia: {
      Message mia;
      mia.type = msg::mia;
      mia.subid = m.subid;
      mia.arg[0] = s.self;
      actions.push_back(detail::to_mbox(m.subid, mia));
      actions.push_back(RenewTimeout{tmo::mia, m.subid});
      break;
    }
    case msg::db: {
      const DbUpdate u = db_update_from_message(m);
      if (m.subid == s.self) {
        // Local update: the broadcast below piggybacks a MIA to every
        // backup, so all MIA send timers are renewed.
        for (int i = 0; i < s.n_nodes; ++i) {
          if (i != s.self) {
            actions.push_back(RenewTimeout{tmo::mia, i});
          }
        }
        if (!apply_update(s.db, u)) {
          detail::note(actions, "db update rejected");
        }
        for (int i = 0; i < s.n_nodes; ++i) {
          if (i != s.self) {
            actions.push_back(detail::to_mbox(i, m));
          }
        }
      } else {
        // Remote update doubles as a piggybacked TAIA.
        if (!apply_update(s.db, u)) {
          detail::note(actions, "db update rejected");
        }
        detail::manager_taia(s, m.subid, actions);
      }
      break;
    }
    case msg::taia:
      detail::manager_taia(s, m.subid, actions);
      break;
    case tmo::taia: {
      std::ostringstream os;
      os << "no heartbeat from backup " << m.subid
         << ", entering suspicion period";
      detail::note(actions, os.str());
      s.suspicion[static_cast<std::size_t>(m.subid)] = 1;
      actions.push_back(InsertTimeout{tmo::teif, m.subid});
      actions.push_back(DeleteTimeout{tmo::taia, m.subid});
      break;
    }
    case msg::teif:
      if (s.suspicion[static_cast<std::size_t>(m.subid)]) {
        actions.push_back(DeleteTimeout{tmo::teif, m.subid});
        s.suspicion[static_cast<std::size_t>(m.subid)] = 0;
        actions.push_back(RequestAgentRespawn{m.subid});
      } else if (m.subid == s.self) {
        actions.push_back(ClearIaFlag{});
        actions.push_back(detail::rouse_own_iat(s.self));
      } else {
        Message enia;
        enia.type = msg::enia;
        enia.subid = s.self;
        actions.push_back(detail::to_mbox(m.subid, enia));
      }
      break;
    case tmo::teif:
      if (s.suspicion[static_cast<std::size_t>(m.subid)]) {
        std::ostringstream os;
        os << "suspected node " << m.subid << " has crashed";
        detail::note(actions, os.str());
        actions.push_back(DeleteTimeout{tmo::taia, m.subid});
        s.suspicion[static_cast<std::size_t>(m.subid)] = 0;
        actions.push_back(RequestNodeReboot{m.subid});
      }
      break;
    case msg::enia:
      actions.push_back(ClearIaFlag{});
      actions.push_back(detail::rouse_own_iat(s.self));
      break;
    case msg::witm: {
      Message nmi;
      nmi.type = msg::nmi;
      nmi.subid = s.self;
      nmi.arg[0] = s.self;
      actions.push_back(detail::to_mbox(m.subid, nmi));
      break;
    }
    case msg::niua:
      if (!s.tom.is_present(tmo::taia, m.subid)) {
        actions.push_back(InsertTimeout{tmo::taia, m.subid});
      }
      break;
    case msg::request_db: {
      DbTransfer copy;
      copy.kind = DbTransfer::Kind::snapshot;
      copy.from = s.self;
      copy.copy = snapshot(s.db);
      actions.push_back(SendDb{m.subid, db_mbox, copy});
      break;
    }
    default: {
      std::ostringstream os;
      os << "unhandled message type " << m.type << " (" << pretty(m.type)
         << ")";
      detail::note(actions, os.str());
      break;
    }
  }
  detail::epilogue(actions);
  return actions;
}

inline Actions backup_handle(ComponentState& s, const Message& m) {
  Actions actions;
  if (!detail::subid_valid(s, m)) {
    detail::note_bad_subid(actions, m);
    detail::epilogue(actions);
    return actions;
  }
  switch (m.type) {
    case tmo::ia_flag:
      actions.push_back(ClearIaFlag{});
      break;
    case tmo::taia_b: {
      Message taia;
      taia.type = msg::taia;
      taia.subid = s.self;
      actions.push_back(detail::to_mbox(s.managerid, taia));
      break;
    }
    case msg::db: {
      const DbUpdate u = db_update_from_message(m);
      if (m.subid == s.self) {
        if (!apply_update(s.db, u)) {
          detail::note(actions, "db update rejected");
        }
        // The manager receives this broadcast too, so it carries a TAIA in
        // piggybacking.
        for (int i = 0; i < s.n_nodes; ++i) {
          if (i != s.self) {
            actions.push_back(detail::to_mbox(i, m));
          }
        }
        actions.push_back(RenewTimeout{tmo::taia_b, 0});
      } else {
        if (!apply_update(s.db, u)) {
          detail::note(actions, "db update rejected");
        }
        if (m.subid == s.managerid) {
          actions.push_back(RenewTimeout{tmo::mia_b, s.managerid});
        }
      }
      break;
    }
    case msg::mia:
      if (m.arg[0] < 0 || m.arg[0] >= s.n_nodes) {
        detail::note(actions, "MIA with an out-of-range manager id ignored");
        break;
      }
      if (!s.tom.is_present(tmo::mia_b, m.arg[0])) {
        // A new manager has been chosen.
        actions.push_back(DeleteTimeout{tmo::mia_b, s.managerid});
        s.managerid = m.arg[0];
        std::ostringstream os;
        os << "new manager is " << s.managerid;
        detail::note(actions, os.str());
      }
      actions.push_back(RenewTimeout{tmo::mia_b, s.managerid});
      if (s.suspicion_set()) {
        s.suspicion.assign(s.suspicion.size(), 0);
        detail::note(actions,
                     "got a MIA while expecting a TEIF, leaving the suspicion period");
      }
      break;
    case tmo::mia_b:
      detail::note(actions,
                   "no heartbeat from the manager, entering suspicion period");
      s.suspicion[static_cast<std::size_t>(s.managerid)] = 1;
      actions.push_back(InsertTimeout{tmo::teif_b, s.managerid});
      actions.push_back(DeleteTimeout{tmo::mia_b, s.managerid});
      break;
    case msg::teif:
      if (s.suspicion_set() && m.subid == s.managerid) {
        actions.push_back(DeleteTimeout{tmo::teif_b, s.managerid});
        s.suspicion.assign(s.suspicion.size(), 0);
        detail::note(actions, "manager needs to be recovered");
        actions.push_back(RequestAgentRespawn{s.managerid});
      } else {
        Message enia;
        enia.type = msg::enia;
        enia.subid = s.self;
        actions.push_back(detail::to_mbox(m.subid, enia));
        actions.push_back(RenewTimeout{tmo::mia_b, s.managerid});
      }
      break;
    case tmo::teif_b:
      if (s.suspicion_set()) {
        std::ostringstream os;
        os << "suspected node " << m.subid << " has crashed";
        detail::note(actions, os.str());
        actions.push_back(DeleteTimeout{tmo::mia_b, m.subid});
        s.suspicion.assign(s.suspicion.size(), 0);
        actions.push_back(RequestNodeReboot{m.subid});
        // "A node is down" goes to everyone but the down node.
        Message anid;
        anid.type = msg::anid;
        anid.subid = m.subid;
        for (int i = 0; i < s.n_nodes; ++i) {
          if (i != s.managerid && i != s.self) {
            actions.push_back(detail::to_mbox(i, anid));
          }
        }
        s.managerid = choose_next_manager(s.managerid, s.n_nodes);
        if (s.managerid == s.self) {
          actions.push_back(BecomeManagerAndRestart{});
          // The restart replaces the loop; no epilogue.
          return actions;
        }
        Message enia;
        enia.type = msg::enia;
        enia.subid = s.self;
        actions.push_back(detail::to_mbox(s.managerid, enia));
        actions.push_back(RenewTimeout{tmo::mia_b, s.managerid});
      }
      break;
    case msg::witm: {
      Message nmi;
      nmi.type = msg::nmi;
      nmi.subid = s.self;
      nmi.arg[0] = s.managerid;
      actions.push_back(detail::to_mbox(m.subid, nmi));
      break;
    }
    case msg::enia:
      actions.push_back(ClearIaFlag{});
      actions.push_back(detail::rouse_own_iat(s.self));
      break;
    case msg::nmi:
      if (m.arg[0] != s.managerid) {
        std::ostringstream os;
        os << "node " << m.subid << " thinks the manager is " << m.arg[0]
           << ", while I think it is " << s.managerid;
        detail::note(actions, os.str());
      }
      break;
    case msg::request_db: {
      DbTransfer copy;
      copy.kind = DbTransfer::Kind::snapshot;
      copy.from = s.self;
      copy.copy = snapshot(s.db);
      actions.push_back(SendDb{m.subid, db_mbox, copy});
      break;
    }
    default: {
      std::ostringstream os;
      os << "unhandled message type " << m.type << " (" << pretty(m.type)
         << ")";
      detail::note(actions, os.str());
      break;
    }
  }
  detail::epilogue(actions);
  return actions;
}

// Restart with a forced role, keeping the node's database: fresh timeout
// list, role persisted in the state slot, role-specific setup re-run.
inline std::pair<ComponentState, Actions> restart_as(const ComponentState& old,
                                                     Role role) {
  ComponentState s = old;
  s.tom = TimeoutList{};
  s.role = role;
  s.first_activation = false;
  s.db.status.role =
      role == Role::manager ? NodeRole::manager : NodeRole::backup;
  if (role == Role::manager) {
    s.managerid = s.self;
  }
  ++s.generation;

  Actions actions;
  {
    std::ostringstream os;
    os << "restarting as " << role_label(role);
    detail::note(actions, os.str());
  }
  actions.push_back(PersistDb{});
  Actions rest = detail::complete_startup(s);
  actions.insert(actions.end(), rest.begin(), rest.end());
  return {std::move(s), std::move(actions)};
}

// Entry point for ordinary-mailbox messages; dispatches on startup phase
// first, then on role.
inline Actions handle_message(ComponentState& s, const Message& m) {
  switch (s.phase) {
    case ComponentState::Phase::await_nmi:
      if (m.type == msg::nmi) {
        s.managerid = m.arg[0];
        s.role = s.managerid == s.self ? Role::manager : Role::backup;
        s.phase = ComponentState::Phase::await_db;
        ++s.generation;
        s.db_requests_sent = 1;
        s.db_request_target = choose_next_manager(s.self, s.n_nodes);
        Actions actions;
        {
          std::ostringstream os;
          os << "the manager is on node " << s.managerid
             << ", requesting the database from " << s.db_request_target;
          detail::note(actions, os.str());
        }
        Message req;
        req.type = msg::request_db;
        req.subid = s.self;
        actions.push_back(detail::to_mbox(s.db_request_target, req));
        return actions;
      } else {
        Actions actions;
        std::ostringstream os;
        os << "NMI message expected, " << m.type << " (" << pretty(m.type)
           << ") received";
        detail::note(actions, os.str());
        return actions;
      }
    case ComponentState::Phase::await_db: {
      Actions actions;
      std::ostringstream os;
      os << "still fetching the database, dropping " << m.type << " ("
         << pretty(m.type) << ")";
      detail::note(actions, os.str());
      return actions;
    }
    case ComponentState::Phase::stalled:
      return {};
    case ComponentState::Phase::running:
      break;
  }
  return s.role == Role::manager ? manager_handle(s, m) : backup_handle(s, m);
}

// Entry point for database payloads on either mailbox.
inline Actions handle_db_transfer(ComponentState& s, const DbTransfer& part) {
  Actions actions;

  if (part.kind == DbTransfer::Kind::snapshot) {
    if (s.phase == ComponentState::Phase::await_db) {
      s.db = load_snapshot(part.copy);
      s.db.status.primary = true;
      s.db.status.role =
          s.role == Role::manager ? NodeRole::manager : NodeRole::backup;
      detail::note(actions, "global database OK");
      Actions rest = detail::complete_startup(s);
      actions.insert(actions.end(), rest.begin(), rest.end());
    } else {
      detail::note(actions, "late database copy ignored");
    }
    return actions;
  }

  // Pipelined-broadcast part. Only meaningful while assembling the global
  // database at first activation; stray parts are ignored with a note.
  if (part.from < 0 || part.from >= s.n_nodes || part.from == s.self) {
    detail::note(actions, "db transfer part from unexpected sender");
    return actions;
  }
  auto& in = s.assembly.from[static_cast<std::size_t>(part.from)];
  if (in.installed) {
    detail::note(actions, "duplicate db transfer ignored");
    return actions;
  }
  switch (part.kind) {
    case DbTransfer::Kind::sender_id:
      in.announced = true;
      break;
    case DbTransfer::Kind::task_count:
      in.task_nr = part.value;
      break;
    case DbTransfer::Kind::task_bulk:
      in.tasks = part.tasks;
      break;
    case DbTransfer::Kind::error_count:
      in.error_nr = part.value;
      break;
    case DbTransfer::Kind::error_bulk:
      in.errors = part.errors;
      break;
    case DbTransfer::Kind::snapshot:
      break;
  }

  const bool tasks_ready =
      in.task_nr.has_value() &&
      (*in.task_nr == 0 || static_cast<int>(in.tasks.size()) == *in.task_nr);
  const bool errors_ready =
      in.error_nr.has_value() &&
      (*in.error_nr == 0 || static_cast<int>(in.errors.size()) == *in.error_nr);
  if (in.announced && tasks_ready && errors_ready) {
    NodeRecord& rec = s.db.nodes[static_cast<std::size_t>(part.from)];
    rec.task_nr = *in.task_nr;
    rec.tasks = {};
    for (std::size_t i = 0; i < in.tasks.size(); ++i) {
      rec.tasks[i] = in.tasks[i];
    }
    rec.error_nr = *in.error_nr;
    rec.errors = {};
    for (std::size_t i = 0; i < in.errors.size(); ++i) {
      rec.errors[i] = in.errors[i];
    }
    in.installed = true;
    ++s.assembly.completed;
    if (s.assembly.completed == s.n_nodes - 1 && !s.global_db_ready) {
      s.global_db_ready = true;
      detail::note(actions, "global database OK");
      actions.push_back(PersistDb{});
    }
  }
  return actions;
}

// Resumption hook driven by the harness while the component waits during
// startup: re-burst WITM (bounded), or walk the circular REQUEST_DB
// schedule, proceeding with local data once it is exhausted.
inline Actions startup_retry(ComponentState& s) {
  Actions actions;
  switch (s.phase) {
    case ComponentState::Phase::await_nmi: {
      if (s.witm_bursts >= s.options.startup_retry_limit) {
        s.phase = ComponentState::Phase::stalled;
        ++s.generation;
        std::ostringstream os;
        os << "startup stalled: no NMI after " << s.witm_bursts << " attempts";
        detail::note(actions, os.str());
        return actions;
      }
      ++s.witm_bursts;
      detail::note(actions, "no NMI yet, repeating the WITM burst");
      Message witm;
      witm.type = msg::witm;
      witm.subid = s.self;
      for (int i = 0; i < s.n_nodes; ++i) {
        if (i != s.self) {
          actions.push_back(detail::to_mbox(i, witm));
        }
      }
      return actions;
    }
    case ComponentState::Phase::await_db: {
      if (s.db_requests_sent >= s.n_nodes - 1) {
        detail::note(actions, "no database copy received, proceeding with local data");
        Actions rest = detail::complete_startup(s);
        actions.insert(actions.end(), rest.begin(), rest.end());
        return actions;
      }
      ++s.db_requests_sent;
      s.db_request_target = choose_next_manager(s.db_request_target, s.n_nodes);
      if (s.db_request_target == s.self) {
        s.db_request_target = choose_next_manager(s.db_request_target, s.n_nodes);
      }
      {
        std::ostringstream os;
        os << "database request timed out, asking node " << s.db_request_target;
        detail::note(actions, os.str());
      }
      Message req;
      req.type = msg::request_db;
      req.subid = s.self;
      actions.push_back(detail::to_mbox(s.db_request_target, req));
      return actions;
    }
    default:
      return actions;
  }
}

}  // namespace dirnet
