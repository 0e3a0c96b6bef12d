#pragma once

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dirnet/simnet.hpp"

namespace dirnet {

// Assertion over a report metric, evaluated after the run.
struct ScenarioAssert {
  std::string metric;
  std::string op;  // == != < <= > >=
  long long value = 0;

  bool holds(const Report& report) const {
    const long long got = report.metric(metric);
    if (op == "==") {
      return got == value;
    }
    if (op == "!=") {
      return got != value;
    }
    if (op == "<") {
      return got < value;
    }
    if (op == "<=") {
      return got <= value;
    }
    if (op == ">") {
      return got > value;
    }
    return got >= value;
  }

  friend bool operator==(const ScenarioAssert&, const ScenarioAssert&) = default;
};

struct Scenario {
  SimConfig config;
  std::vector<ScenarioAssert> asserts;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct ScenarioParseError : std::runtime_error {
  int line;
  int column;

  ScenarioParseError(int line_, int column_, const std::string& what_)
      : std::runtime_error("line " + std::to_string(line_) + ", column " +
                           std::to_string(column_) + ": " + what_),
        line(line_),
        column(column_) {}
};

namespace scenario_detail {

struct Cursor {
  std::string_view text;
  int line;
  std::size_t pos = 0;

  void skip_spaces() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) {
      ++pos;
    }
  }

  bool done() {
    skip_spaces();
    return pos >= text.size();
  }

  int column() const { return static_cast<int>(pos) + 1; }

  std::string_view word() {
    skip_spaces();
    if (pos >= text.size()) {
      throw ScenarioParseError(line, column(), "expected another token");
    }
    std::size_t start = pos;
    while (pos < text.size() && text[pos] != ' ' && text[pos] != '\t') {
      ++pos;
    }
    return text.substr(start, pos - start);
  }

  long long integer() {
    skip_spaces();
    const int col = column();
    std::string_view w = word();
    long long value = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
    if (ec != std::errc{} || ptr != w.data() + w.size()) {
      throw ScenarioParseError(line, col,
                               "expected an integer, got '" + std::string(w) + "'");
    }
    return value;
  }

  std::uint64_t unsigned_integer() {
    skip_spaces();
    const int col = column();
    std::string_view w = word();
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
    if (ec != std::errc{} || ptr != w.data() + w.size()) {
      throw ScenarioParseError(
          line, col, "expected an unsigned integer, got '" + std::string(w) + "'");
    }
    return value;
  }

  void expect_end() {
    if (!done()) {
      throw ScenarioParseError(line, column(), "unexpected trailing tokens");
    }
  }
};

inline bool parse_switch(Cursor& c) {
  const int col = c.column();
  std::string_view w = c.word();
  if (w == "on" || w == "1" || w == "true") {
    return true;
  }
  if (w == "off" || w == "0" || w == "false") {
    return false;
  }
  throw ScenarioParseError(c.line, col, "expected on/off");
}

}  // namespace scenario_detail

// Flat line-oriented scenario format: `key = value` lines, '#' comments,
// repeated fault/dbupdate/assert lines. Unknown keys are rejected.
inline Scenario parse_scenario(const std::string& text) {
  using scenario_detail::Cursor;
  Scenario sc;
  std::vector<std::pair<int, Role>> roles;  // (node, role)
  bool saw_n_nodes = false;

  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) {
      raw.resize(hash);
    }
    auto eq = raw.find('=');
    std::string_view view = raw;
    {
      Cursor probe{view, line_no};
      if (probe.done()) {
        continue;
      }
    }
    if (eq == std::string::npos) {
      Cursor c{view, line_no};
      throw ScenarioParseError(line_no, c.column(), "expected 'key = value'");
    }

    Cursor key_cur{view.substr(0, eq), line_no};
    std::string key{key_cur.word()};
    key_cur.expect_end();
    Cursor c{view, line_no};
    c.pos = eq + 1;

    SimConfig& cfg = sc.config;
    if (key == "n_nodes") {
      cfg.n_nodes = static_cast<int>(c.integer());
      saw_n_nodes = true;
    } else if (key == "role") {
      const int node = static_cast<int>(c.integer());
      const int col = c.column();
      std::string_view w = c.word();
      Role role;
      if (w == "MANAGER") {
        role = Role::manager;
      } else if (w == "BACKUP") {
        role = Role::backup;
      } else {
        throw ScenarioParseError(line_no, col, "role must be MANAGER or BACKUP");
      }
      for (const auto& [seen, r] : roles) {
        if (seen == node) {
          throw ScenarioParseError(line_no, col,
                                   "duplicate role line for node " +
                                       std::to_string(node));
        }
      }
      roles.emplace_back(node, role);
    } else if (key == "run_length" || key == "ticks") {
      cfg.run_length = c.integer();
    } else if (key == "seed") {
      cfg.seed = c.unsigned_integer();
    } else if (key == "latency") {
      cfg.latency_min = cfg.latency_max = c.integer();
    } else if (key == "latency_jitter") {
      cfg.latency_min = c.integer();
      cfg.latency_max = c.integer();
    } else if (key == "imalive_clear") {
      cfg.timeouts.imalive_clear = c.integer();
    } else if (key == "imalive_set") {
      cfg.timeouts.imalive_set = c.integer();
    } else if (key == "mia_send") {
      cfg.timeouts.mia_send = c.integer();
    } else if (key == "mia_recv") {
      cfg.timeouts.mia_recv = c.integer();
    } else if (key == "taia_send") {
      cfg.timeouts.taia_send = c.integer();
    } else if (key == "taia_recv") {
      cfg.timeouts.taia_recv = c.integer();
    } else if (key == "reply_db") {
      cfg.timeouts.reply_db = c.integer();
    } else if (key == "inject_deadline") {
      cfg.timeouts.inject_deadline = c.integer();
    } else if (key == "respawn_delay") {
      cfg.respawn_delay = c.integer();
    } else if (key == "reboot_delay") {
      cfg.reboot_delay = c.integer();
    } else if (key == "reboot") {
      cfg.reboot_enabled = scenario_detail::parse_switch(c);
    } else if (key == "persistence") {
      cfg.persistence_enabled = scenario_detail::parse_switch(c);
    } else if (key == "persist_dir") {
      cfg.persist_dir = std::string(c.word());
    } else if (key == "tasks_per_node") {
      cfg.tasks_per_node = static_cast<int>(c.integer());
    } else if (key == "inject") {
      cfg.inject = scenario_detail::parse_switch(c);
    } else if (key == "startup_retries") {
      cfg.startup_retry_limit = static_cast<int>(c.integer());
    } else if (key == "fault") {
      FaultEvent f;
      f.at = c.integer();
      const int col = c.column();
      std::string_view w = c.word();
      if (w == "CRASH_COMPONENT") {
        f.kind = FaultEvent::Kind::crash_component;
      } else if (w == "CRASH_NODE") {
        f.kind = FaultEvent::Kind::crash_node;
      } else if (w == "FREEZE_COMPONENT") {
        f.kind = FaultEvent::Kind::freeze_component;
      } else if (w == "REBOOT_NODE") {
        f.kind = FaultEvent::Kind::reboot_node;
      } else {
        throw ScenarioParseError(line_no, col,
                                 "unknown fault kind '" + std::string(w) + "'");
      }
      f.node = static_cast<int>(c.integer());
      if (f.kind == FaultEvent::Kind::freeze_component) {
        f.duration = c.integer();
      }
      cfg.faults.push_back(f);
    } else if (key == "dbupdate") {
      DbInjection u;
      u.at = c.integer();
      u.node = static_cast<int>(c.integer());
      const int col = c.column();
      std::string_view w = c.word();
      u.update.subject = u.node;
      if (w == "NEW_STATUS") {
        u.update.subcode = dbop::new_status;
        u.update.op1 = static_cast<int>(c.integer());
      } else if (w == "NEW_ROLE") {
        u.update.subcode = dbop::new_role;
        u.update.op1 = static_cast<int>(c.integer());
      } else if (w == "INC_REBOOT") {
        u.update.subcode = dbop::inc_reboot;
      } else if (w == "NEW_TASK_STATUS") {
        u.update.subcode = dbop::new_task_status;
        u.update.op1 = static_cast<int>(c.integer());
        u.update.op2 = static_cast<int>(c.integer());
      } else if (w == "NEW_TASK_ERROR") {
        u.update.subcode = dbop::new_task_error;
        u.update.op1 = static_cast<int>(c.integer());
        u.update.op2 = static_cast<int>(c.integer());
      } else {
        throw ScenarioParseError(line_no, col,
                                 "unknown db update '" + std::string(w) + "'");
      }
      cfg.db_updates.push_back(u);
    } else if (key == "assert") {
      ScenarioAssert a;
      a.metric = std::string(c.word());
      const int col = c.column();
      a.op = std::string(c.word());
      if (a.op != "==" && a.op != "!=" && a.op != "<" && a.op != "<=" &&
          a.op != ">" && a.op != ">=") {
        throw ScenarioParseError(line_no, col, "unknown comparison '" + a.op + "'");
      }
      const char* metrics[] = {"suspicions", "teif_broadcasts", "spans",
                               "reboots",    "elections",       "final_managerid",
                               "replicas_equal"};
      bool known = false;
      for (const char* m : metrics) {
        known = known || a.metric == m;
      }
      if (!known) {
        throw ScenarioParseError(line_no, col,
                                 "unknown metric '" + a.metric + "'");
      }
      a.value = c.integer();
      sc.asserts.push_back(a);
    } else {
      throw ScenarioParseError(line_no, 1, "unknown key '" + key + "'");
    }
    c.expect_end();
  }

  if (!roles.empty()) {
    if (!saw_n_nodes) {
      throw ScenarioParseError(line_no, 1, "role lines require n_nodes");
    }
    sc.config.roles.assign(static_cast<std::size_t>(sc.config.n_nodes),
                           Role::backup);
    std::vector<bool> covered(static_cast<std::size_t>(sc.config.n_nodes));
    for (const auto& [node, role] : roles) {
      if (node < 0 || node >= sc.config.n_nodes) {
        throw ScenarioParseError(line_no, 1,
                                 "role line for node " + std::to_string(node) +
                                     " outside n_nodes");
      }
      sc.config.roles[static_cast<std::size_t>(node)] = role;
      covered[static_cast<std::size_t>(node)] = true;
    }
    for (std::size_t i = 0; i < covered.size(); ++i) {
      if (!covered[i]) {
        throw ScenarioParseError(line_no, 1,
                                 "role table misses node " + std::to_string(i));
      }
    }
  }
  sc.config.validate();
  return sc;
}

// Canonical rendering; parse(print(s)) == s for any valid scenario.
inline std::string print_scenario(const Scenario& sc) {
  const SimConfig& cfg = sc.config;
  std::ostringstream os;
  os << "n_nodes = " << cfg.n_nodes << '\n';
  const RoleConfig roles = cfg.role_config();
  for (int i = 0; i < cfg.n_nodes; ++i) {
    os << "role = " << i << ' '
       << (roles.roles[static_cast<std::size_t>(i)] == Role::manager
               ? "MANAGER"
               : "BACKUP")
       << '\n';
  }
  os << "run_length = " << cfg.run_length << '\n';
  os << "seed = " << cfg.seed << '\n';
  if (cfg.latency_min == cfg.latency_max) {
    os << "latency = " << cfg.latency_min << '\n';
  } else {
    os << "latency_jitter = " << cfg.latency_min << ' ' << cfg.latency_max
       << '\n';
  }
  os << "imalive_clear = " << cfg.timeouts.imalive_clear << '\n';
  os << "imalive_set = " << cfg.timeouts.imalive_set << '\n';
  os << "mia_send = " << cfg.timeouts.mia_send << '\n';
  os << "mia_recv = " << cfg.timeouts.mia_recv << '\n';
  os << "taia_send = " << cfg.timeouts.taia_send << '\n';
  os << "taia_recv = " << cfg.timeouts.taia_recv << '\n';
  os << "reply_db = " << cfg.timeouts.reply_db << '\n';
  os << "inject_deadline = " << cfg.timeouts.inject_deadline << '\n';
  os << "respawn_delay = " << cfg.respawn_delay << '\n';
  os << "reboot_delay = " << cfg.reboot_delay << '\n';
  os << "reboot = " << (cfg.reboot_enabled ? "on" : "off") << '\n';
  os << "persistence = " << (cfg.persistence_enabled ? "on" : "off") << '\n';
  if (!cfg.persist_dir.empty()) {
    os << "persist_dir = " << cfg.persist_dir << '\n';
  }
  os << "tasks_per_node = " << cfg.tasks_per_node << '\n';
  os << "inject = " << (cfg.inject ? "on" : "off") << '\n';
  os << "startup_retries = " << cfg.startup_retry_limit << '\n';
  for (const FaultEvent& f : cfg.faults) {
    os << "fault = " << f.at << ' ' << fault_label(f.kind) << ' ' << f.node;
    if (f.kind == FaultEvent::Kind::freeze_component) {
      os << ' ' << f.duration;
    }
    os << '\n';
  }
  for (const DbInjection& u : cfg.db_updates) {
    os << "dbupdate = " << u.at << ' ' << u.node << ' ';
    switch (u.update.subcode) {
      case dbop::new_status:
        os << "NEW_STATUS " << u.update.op1;
        break;
      case dbop::new_role:
        os << "NEW_ROLE " << u.update.op1;
        break;
      case dbop::inc_reboot:
        os << "INC_REBOOT";
        break;
      case dbop::new_task_status:
        os << "NEW_TASK_STATUS " << u.update.op1 << ' ' << u.update.op2;
        break;
      case dbop::new_task_error:
        os << "NEW_TASK_ERROR " << u.update.op1 << ' ' << u.update.op2;
        break;
    }
    os << '\n';
  }
  for (const ScenarioAssert& a : sc.asserts) {
    os << "assert = " << a.metric << ' ' << a.op << ' ' << a.value << '\n';
  }
  return os.str();
}

}  // namespace dirnet
