#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dirnet/db.hpp"
#include "dirnet/protocol.hpp"

namespace dirnet {

// Side effects reified as values; the harness executes them in emission
// order against the emitting unit's timeout list and the network.

struct SendMessage {
  int dest = 0;
  int mbox = dir_mbox_offset;
  Message message;

  friend bool operator==(const SendMessage&, const SendMessage&) = default;
};

// Database payloads (broadcast parts and full copies) do not fit the
// five-arg datagram, so they get their own send action.
struct SendDb {
  int dest = 0;
  int mbox = db_mbox;
  DbTransfer transfer;

  friend bool operator==(const SendDb&, const SendDb&) = default;
};

struct InsertTimeout {
  int kind = 0;
  int subid = 0;

  friend bool operator==(const InsertTimeout&, const InsertTimeout&) = default;
};

struct RenewTimeout {
  int kind = 0;
  int subid = 0;

  friend bool operator==(const RenewTimeout&, const RenewTimeout&) = default;
};

struct DeleteTimeout {
  int kind = 0;
  int subid = 0;

  friend bool operator==(const DeleteTimeout&, const DeleteTimeout&) = default;
};

struct ClearIaFlag {
  friend bool operator==(const ClearIaFlag&, const ClearIaFlag&) = default;
};

struct CloseTom {
  friend bool operator==(const CloseTom&, const CloseTom&) = default;
};

struct RequestAgentRespawn {
  int target = 0;

  friend bool operator==(const RequestAgentRespawn&, const RequestAgentRespawn&) = default;
};

struct RequestNodeReboot {
  int target = 0;

  friend bool operator==(const RequestNodeReboot&, const RequestNodeReboot&) = default;
};

struct BecomeManagerAndRestart {
  friend bool operator==(const BecomeManagerAndRestart&, const BecomeManagerAndRestart&) = default;
};

struct PersistDb {
  friend bool operator==(const PersistDb&, const PersistDb&) = default;
};

struct EmitTrace {
  std::string note;

  friend bool operator==(const EmitTrace&, const EmitTrace&) = default;
};

using Action = std::variant<SendMessage, SendDb, InsertTimeout, RenewTimeout,
                            DeleteTimeout, ClearIaFlag, CloseTom,
                            RequestAgentRespawn, RequestNodeReboot,
                            BecomeManagerAndRestart, PersistDb, EmitTrace>;

using Actions = std::vector<Action>;

template <typename T>
bool contains_action(const Actions& actions) {
  for (const Action& a : actions) {
    if (std::holds_alternative<T>(a)) {
      return true;
    }
  }
  return false;
}

}  // namespace dirnet
