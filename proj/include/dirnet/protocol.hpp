#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace dirnet {

using Tick = std::int64_t;

// Mailbox ids. Every node exposes the same set; MBOX(n) is the component's
// ordinary inbox regardless of n.
inline constexpr int dir_mbox_offset = 20;
constexpr int node_mbox(int /*node*/) { return dir_mbox_offset; }
inline constexpr int iat_mbox = dir_mbox_offset + 1;
inline constexpr int rint_mbox = dir_mbox_offset + 2;
inline constexpr int db_mbox = dir_mbox_offset + 3;
inline constexpr int tom_mbox = dir_mbox_offset + 4;

// Timeout identifiers. Timeout-derived message types reuse these codes.
namespace tmo {
inline constexpr int ia_flag = 10;
inline constexpr int mia = 15;
inline constexpr int taia = 20;
inline constexpr int teif = 30;
inline constexpr int iat = 40;
inline constexpr int ia_flag_b = 50;
inline constexpr int mia_b = 55;
inline constexpr int taia_b = 60;
inline constexpr int teif_b = 70;
inline constexpr int inject_fault = 6;
}  // namespace tmo

// Named protocol messages, assigned a contiguous block disjoint from the
// timeout codes.
namespace msg {
inline constexpr int mia = 100;
inline constexpr int taia = 101;
inline constexpr int teif = 102;
inline constexpr int enia = 103;
inline constexpr int witm = 104;
inline constexpr int nmi = 105;
inline constexpr int niua = 106;
inline constexpr int anid = 107;
inline constexpr int span = 108;
inline constexpr int rouse = 109;
inline constexpr int db = 110;
inline constexpr int request_db = 111;
}  // namespace msg

// Database-update subcodes, carried in arg[0] of a DB message.
namespace dbop {
inline constexpr int new_status = 200;
inline constexpr int new_role = 201;
inline constexpr int inc_reboot = 202;
inline constexpr int new_task_status = 203;
inline constexpr int new_task_error = 204;
}  // namespace dbop

inline constexpr int max_arg = 5;

// The fixed-shape protocol datagram. `local` marks messages produced by the
// node's own timeout engine; unused arg slots stay zero.
struct Message {
  int type = 0;
  int subid = 0;
  std::array<int, max_arg> arg{};
  bool local = false;

  friend bool operator==(const Message&, const Message&) = default;
};

// Translates a timeout expiry into the message the owning component consumes.
inline Message make_timeout_message(int kind, int subid) {
  Message m;
  m.type = kind;
  m.subid = subid;
  m.local = true;
  return m;
}

// Tunable timeout durations, in ticks (1 tick = 1 simulated ms).
struct TimeoutParams {
  Tick imalive_clear = 300;
  Tick imalive_set = 1000;
  Tick mia_send = 500;
  Tick mia_recv = 1500;
  Tick taia_send = 500;
  Tick taia_recv = 1500;
  Tick reply_db = 2000;
  Tick inject_deadline = 6000000;

  friend bool operator==(const TimeoutParams&, const TimeoutParams&) = default;
};

// Cyclicity per timeout kind. TEIF timeouts are one-shot; so is the fault
// injector.
constexpr bool kind_cyclic(int kind) {
  switch (kind) {
    case tmo::teif:
    case tmo::teif_b:
    case tmo::inject_fault:
      return false;
    default:
      return true;
  }
}

// Deadline binding per timeout kind.
constexpr Tick kind_deadline(int kind, const TimeoutParams& p) {
  switch (kind) {
    case tmo::ia_flag:
    case tmo::ia_flag_b:
      return p.imalive_clear;
    case tmo::mia:
      return p.mia_send;
    case tmo::taia:
      return p.taia_recv;
    case tmo::teif:
    case tmo::teif_b:
      return p.imalive_set;
    case tmo::iat:
      return p.imalive_set;
    case tmo::mia_b:
      return p.mia_recv;
    case tmo::taia_b:
      return p.taia_send;
    case tmo::inject_fault:
      return p.inject_deadline;
    default:
      return 0;
  }
}

inline std::string_view timeout_label(int code) {
  switch (code) {
    case tmo::ia_flag:
      return "IA flag timeout";
    case tmo::mia:
      return "MIA timeout";
    case tmo::taia:
      return "TAIA timeout";
    case tmo::teif:
      return "TEIF timeout";
    case tmo::ia_flag_b:
      return "IA flag `B' timeout";
    case tmo::mia_b:
      return "MIA `B' timeout";
    case tmo::taia_b:
      return "TAIA `B' timeout";
    case tmo::teif_b:
      return "TEIF `B' timeout";
    case tmo::iat:
      return "IA Task timeout";
    case tmo::inject_fault:
      return "F. Injecting timeout";
    default:
      return "<unknown>";
  }
}

inline std::string_view message_label(int code) {
  switch (code) {
    case msg::mia:
      return "MIA";
    case msg::taia:
      return "TAIA";
    case msg::teif:
      return "TEIF";
    case msg::enia:
      return "ENIA";
    case msg::witm:
      return "WITM";
    case msg::nmi:
      return "NMI";
    case msg::niua:
      return "NIUA";
    case msg::anid:
      return "ANID";
    case msg::span:
      return "SPAN";
    case msg::rouse:
      return "ROUSE";
    case msg::db:
      return "DB";
    case msg::request_db:
      return "REQUEST_DB";
    default:
      return "<unknown>";
  }
}

// Human-readable label for any code: timeout labels first, message names
// second, "<unknown>" otherwise.
inline std::string_view pretty(int code) {
  std::string_view s = timeout_label(code);
  if (s != "<unknown>") {
    return s;
  }
  return message_label(code);
}

// Fixed field order: type subid arg0..arg4 local.
inline std::string encode_trace(const Message& m) {
  std::ostringstream os;
  os << m.type << ' ' << m.subid;
  for (int a : m.arg) {
    os << ' ' << a;
  }
  os << ' ' << (m.local ? 1 : 0);
  return os.str();
}

inline std::optional<Message> decode_trace(std::string_view line) {
  std::istringstream is{std::string(line)};
  Message m;
  int local = 0;
  if (!(is >> m.type >> m.subid)) {
    return std::nullopt;
  }
  for (int& a : m.arg) {
    if (!(is >> a)) {
      return std::nullopt;
    }
  }
  if (!(is >> local) || (local != 0 && local != 1)) {
    return std::nullopt;
  }
  std::string rest;
  if (is >> rest) {
    return std::nullopt;
  }
  m.local = local == 1;
  return m;
}

}  // namespace dirnet
