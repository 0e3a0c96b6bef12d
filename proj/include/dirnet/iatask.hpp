#pragma once

#include "dirnet/actions.hpp"
#include "dirnet/tom.hpp"

namespace dirnet {

// Liveness handshake cell shared by a component and its I'm Alive Task.
// The component writes 0, the IAT writes 1; never accessed concurrently.
struct IaFlag {
  int value = 0;

  friend bool operator==(const IaFlag&, const IaFlag&) = default;
};

inline void clear_flag(IaFlag& flag) { flag.value = 0; }

// Per-node watchdog. Dormant until ROUSEd; then it periodically sets the
// IA-flag and expects the guarded component to keep clearing it. A flag
// found still set means the component is gone: broadcast TEIF and go back
// to sleep until the next ROUSE.
struct IatState {
  enum class Phase { dormant, active };

  Phase phase = Phase::dormant;
  int self = 0;
  int guarded = -1;
  int n_nodes = 0;
  TimeoutList tom;

  friend bool operator==(const IatState&, const IatState&) = default;
};

inline IatState make_iat(int self, int n_nodes) {
  IatState s;
  s.self = self;
  s.n_nodes = n_nodes;
  return s;
}

inline Actions iat_handle(IatState& state, const Message& m, IaFlag& flag) {
  Actions actions;
  switch (m.type) {
    case msg::rouse:
      if (state.phase == IatState::Phase::dormant) {
        state.phase = IatState::Phase::active;
        state.guarded = m.subid;
        actions.push_back(InsertTimeout{tmo::iat, state.guarded});
      }
      // A ROUSE while active is ignored.
      break;
    case tmo::iat:
      if (state.phase == IatState::Phase::active) {
        if (flag.value == 0) {
          flag.value = 1;
        } else {
          // The flag was never cleared: alarm and go dormant.
          for (int i = 0; i < state.n_nodes; ++i) {
            if (i != state.guarded && i != state.self) {
              Message teif;
              teif.type = msg::teif;
              teif.subid = state.self;
              actions.push_back(SendMessage{i, node_mbox(i), teif});
            }
          }
          actions.push_back(DeleteTimeout{tmo::iat, state.guarded});
          state.phase = IatState::Phase::dormant;
        }
      }
      break;
    default:
      break;
  }
  return actions;
}

}  // namespace dirnet
