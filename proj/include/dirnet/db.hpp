#pragma once

#include <array>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dirnet/protocol.hpp"

namespace dirnet {

inline constexpr int max_tasks = 16;
inline constexpr int max_errors = 16;

enum class TaskStatus : int { running = 0, waiting = 1, isolated = 2, faulty = 3 };

enum class NodeRole : int { manager = 0, backup = 1, agent = 2 };

struct TaskRecord {
  TaskStatus status = TaskStatus::running;
  int error_nr = 0;

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

// Error payloads are opaque fixed-size blobs; their structure is not part of
// the protocol.
struct ErrorRecord {
  int code = 0;

  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct NodeRecord {
  int status = 0;
  NodeRole role = NodeRole::backup;
  int reboot_nr = 0;
  int task_nr = 0;
  std::array<TaskRecord, max_tasks> tasks{};
  int error_nr = 0;
  std::array<ErrorRecord, max_errors> errors{};
  int update_nr = 0;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

// Per-component state slot, stored inside the database for the time being.
// Not part of the replicated content.
struct DbStatus {
  bool primary = false;
  NodeRole role = NodeRole::backup;

  friend bool operator==(const DbStatus&, const DbStatus&) = default;
};

struct DirDatabase {
  DbStatus status;
  // Declared-but-unused configuration fields, carried inert.
  int configuration = 0;
  int runlevel = 0;
  std::vector<NodeRecord> nodes;

  DirDatabase() = default;
  explicit DirDatabase(int n_nodes) : nodes(static_cast<std::size_t>(n_nodes)) {}

  int size() const { return static_cast<int>(nodes.size()); }

  friend bool operator==(const DirDatabase&, const DirDatabase&) = default;
};

// The per-node status slot differs between replicas by construction, so
// replica comparison looks at the node table only.
inline bool replicated_content_equal(const DirDatabase& a, const DirDatabase& b) {
  return a.nodes == b.nodes;
}

struct DbUpdate {
  int subcode = 0;
  int subject = 0;
  int op1 = 0;
  int op2 = 0;

  friend bool operator==(const DbUpdate&, const DbUpdate&) = default;
};

// DB messages carry the subcode in arg[0] and operands in arg[1], arg[2];
// the subject is the message's subid.
inline DbUpdate db_update_from_message(const Message& m) {
  return DbUpdate{m.arg[0], m.subid, m.arg[1], m.arg[2]};
}

inline Message db_update_message(int subject, const DbUpdate& u, bool local) {
  Message m;
  m.type = msg::db;
  m.subid = subject;
  m.arg[0] = u.subcode;
  m.arg[1] = u.op1;
  m.arg[2] = u.op2;
  m.local = local;
  return m;
}

// Fills this node's task table from the supplied statuses; per-task error
// counters start at zero.
inline void build_local(DirDatabase& db, int self, std::span<const TaskStatus> statuses) {
  if (self < 0 || self >= db.size()) {
    throw std::out_of_range("build_local: bad node id");
  }
  if (statuses.size() > static_cast<std::size_t>(max_tasks)) {
    throw std::out_of_range("build_local: too many tasks");
  }
  NodeRecord& n = db.nodes[static_cast<std::size_t>(self)];
  n.task_nr = static_cast<int>(statuses.size());
  n.tasks = {};
  for (std::size_t i = 0; i < statuses.size(); ++i) {
    n.tasks[i].status = statuses[i];
    n.tasks[i].error_nr = 0;
  }
}

// Applies one update; returns false (database unchanged) on an unknown
// subcode, a bad subject, or an out-of-range task index.
inline bool apply_update(DirDatabase& db, const DbUpdate& u) {
  if (u.subject < 0 || u.subject >= db.size()) {
    return false;
  }
  NodeRecord& n = db.nodes[static_cast<std::size_t>(u.subject)];
  switch (u.subcode) {
    case dbop::new_status:
      n.status = u.op1;
      return true;
    case dbop::new_role:
      n.role = static_cast<NodeRole>(u.op1);
      return true;
    case dbop::inc_reboot:
      ++n.reboot_nr;
      return true;
    case dbop::new_task_status:
      if (u.op1 < 0 || u.op1 >= n.task_nr) {
        return false;
      }
      n.tasks[static_cast<std::size_t>(u.op1)].status = static_cast<TaskStatus>(u.op2);
      return true;
    case dbop::new_task_error:
      if (u.op1 < 0 || u.op1 >= n.task_nr) {
        return false;
      }
      // Same assignment as new_task_status, plus the error counter bump that
      // makes the subcode distinguishable.
      n.tasks[static_cast<std::size_t>(u.op1)].status = static_cast<TaskStatus>(u.op2);
      ++n.tasks[static_cast<std::size_t>(u.op1)].error_nr;
      return true;
    default:
      return false;
  }
}

// Resets the modifiable counters on every node; task tables are untouched.
inline void reset_dynamic(DirDatabase& db) {
  for (NodeRecord& n : db.nodes) {
    n.error_nr = 0;
    n.update_nr = 0;
    n.reboot_nr = 0;
  }
}

// One unit of the startup database exchange. Counts and the sender id travel
// on the ordinary mailbox; bulk data and full copies use DB_MBOX.
struct DbTransfer {
  enum class Kind { sender_id, task_count, task_bulk, error_count, error_bulk, snapshot };

  Kind kind = Kind::sender_id;
  int from = 0;
  int value = 0;
  std::vector<TaskRecord> tasks;
  std::vector<ErrorRecord> errors;
  std::string copy;

  friend bool operator==(const DbTransfer&, const DbTransfer&) = default;
};

constexpr int transfer_mailbox(DbTransfer::Kind k) {
  switch (k) {
    case DbTransfer::Kind::task_bulk:
    case DbTransfer::Kind::error_bulk:
    case DbTransfer::Kind::snapshot:
      return db_mbox;
    default:
      return dir_mbox_offset;
  }
}

// The five-part point-to-point sequence of the pipelined broadcast. Bulk
// parts are present only when the corresponding count is non-zero.
inline std::vector<DbTransfer> transfer_parts(const DirDatabase& db, int sender) {
  const NodeRecord& n = db.nodes.at(static_cast<std::size_t>(sender));
  std::vector<DbTransfer> parts;
  DbTransfer p;
  p.from = sender;

  p.kind = DbTransfer::Kind::sender_id;
  p.value = sender;
  parts.push_back(p);

  p.kind = DbTransfer::Kind::task_count;
  p.value = n.task_nr;
  parts.push_back(p);

  if (n.task_nr > 0) {
    p.kind = DbTransfer::Kind::task_bulk;
    p.value = n.task_nr;
    p.tasks.assign(n.tasks.begin(), n.tasks.begin() + n.task_nr);
    parts.push_back(p);
    p.tasks.clear();
  }

  p.kind = DbTransfer::Kind::error_count;
  p.value = n.error_nr;
  parts.push_back(p);

  if (n.error_nr > 0) {
    p.kind = DbTransfer::Kind::error_bulk;
    p.value = n.error_nr;
    p.errors.assign(n.errors.begin(), n.errors.begin() + n.error_nr);
    parts.push_back(p);
  }
  return parts;
}

// One step of the broadcast as seen from `self`: in round i node i sends to
// everyone else (ascending, skipping itself) and every other node receives.
struct BroadcastStep {
  int round = 0;
  bool sending = false;
  std::vector<int> send_targets;
  int receive_from = -1;

  friend bool operator==(const BroadcastStep&, const BroadcastStep&) = default;
};

inline std::vector<BroadcastStep> broadcast_plan(int self, int n) {
  if (n < 2) {
    throw std::invalid_argument("broadcast_plan: need at least two nodes");
  }
  std::vector<BroadcastStep> plan;
  plan.reserve(static_cast<std::size_t>(n));
  for (int round = 0; round < n; ++round) {
    BroadcastStep step;
    step.round = round;
    if (round == self) {
      step.sending = true;
      for (int j = 0; j < n; ++j) {
        if (j != self) {
          step.send_targets.push_back(j);
        }
      }
    } else {
      step.receive_from = round;
    }
    plan.push_back(std::move(step));
  }
  return plan;
}

// Snapshot format: header "dirdb v1 <n>", then every field in fixed order.
// The shape is fixed (all task/error slots serialized), so the token count
// does not depend on counter values.
inline std::string snapshot(const DirDatabase& db) {
  std::ostringstream os;
  os << "dirdb v1 " << db.size() << '\n';
  os << static_cast<int>(db.status.primary) << ' '
     << static_cast<int>(db.status.role) << ' ' << db.configuration << ' '
     << db.runlevel << '\n';
  for (const NodeRecord& n : db.nodes) {
    os << n.status << ' ' << static_cast<int>(n.role) << ' ' << n.reboot_nr
       << ' ' << n.task_nr << ' ' << n.error_nr << ' ' << n.update_nr;
    for (const TaskRecord& t : n.tasks) {
      os << ' ' << static_cast<int>(t.status) << ' ' << t.error_nr;
    }
    for (const ErrorRecord& e : n.errors) {
      os << ' ' << e.code;
    }
    os << '\n';
  }
  return os.str();
}

inline DirDatabase load_snapshot(const std::string& copy) {
  std::istringstream is(copy);
  std::string magic, version;
  int n = 0;
  if (!(is >> magic >> version >> n) || magic != "dirdb" || version != "v1" ||
      n < 0) {
    throw std::runtime_error("load_snapshot: bad header");
  }
  DirDatabase db(n);
  int primary = 0, role = 0;
  if (!(is >> primary >> role >> db.configuration >> db.runlevel)) {
    throw std::runtime_error("load_snapshot: truncated status");
  }
  db.status.primary = primary != 0;
  db.status.role = static_cast<NodeRole>(role);
  for (NodeRecord& rec : db.nodes) {
    int node_role = 0;
    if (!(is >> rec.status >> node_role >> rec.reboot_nr >> rec.task_nr >>
          rec.error_nr >> rec.update_nr)) {
      throw std::runtime_error("load_snapshot: truncated node record");
    }
    rec.role = static_cast<NodeRole>(node_role);
    for (TaskRecord& t : rec.tasks) {
      int status = 0;
      if (!(is >> status >> t.error_nr)) {
        throw std::runtime_error("load_snapshot: truncated task table");
      }
      t.status = static_cast<TaskStatus>(status);
    }
    for (ErrorRecord& e : rec.errors) {
      if (!(is >> e.code)) {
        throw std::runtime_error("load_snapshot: truncated error table");
      }
    }
  }
  return db;
}

}  // namespace dirnet
