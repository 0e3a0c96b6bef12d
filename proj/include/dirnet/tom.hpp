#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dirnet/protocol.hpp"

namespace dirnet {

// A keyed deadline record. Identity within a list is the (kind, subid) pair.
// `suspended` is carried for completeness but never set by this codebase.
struct Timeout {
  int kind = 0;
  int subid = 0;
  Tick deadline = 0;
  bool cyclic = false;
  Tick remaining = 0;
  bool suspended = false;

  friend bool operator==(const Timeout&, const Timeout&) = default;
};

inline Timeout declare(int kind, int subid, bool cyclic, Tick deadline) {
  if (deadline <= 0) {
    throw std::invalid_argument("declare: deadline must be positive");
  }
  Timeout t;
  t.kind = kind;
  t.subid = subid;
  t.deadline = deadline;
  t.cyclic = cyclic;
  t.remaining = deadline;
  return t;
}

// Time-outs list advanced by a virtual clock. Expirations are returned from
// advance(); the owner translates them into messages itself. After close()
// the list fires nothing and its entries are frozen.
class TimeoutList {
 public:
  TimeoutList() = default;
  explicit TimeoutList(Tick start) : now_(start) {}

  Tick now() const { return now_; }
  bool closed() const { return closed_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool insert(const Timeout& t) {
    if (closed_ || find(t.kind, t.subid) != entries_.end()) {
      return false;
    }
    Entry e;
    e.t = t;
    e.t.remaining = t.deadline;
    e.expiry = now_ + t.deadline;
    entries_.push_back(e);
    return true;
  }

  bool renew(int kind, int subid) {
    if (closed_) {
      return false;
    }
    auto it = find(kind, subid);
    if (it == entries_.end() || it->t.suspended) {
      return false;
    }
    it->t.remaining = it->t.deadline;
    it->expiry = now_ + it->t.deadline;
    return true;
  }

  bool erase(int kind, int subid) {
    if (closed_) {
      return false;
    }
    auto it = find(kind, subid);
    if (it == entries_.end()) {
      return false;
    }
    entries_.erase(it);
    return true;
  }

  bool is_present(int kind, int subid) const {
    return find(kind, subid) != entries_.end();
  }

  // Advances the clock by dt and reports every expiry in order of absolute
  // expiry time, ties broken by ascending (kind, subid). Cyclic entries
  // re-arm with their full deadline and may fire several times within one
  // call; one-shot entries are removed after firing.
  std::vector<std::pair<int, int>> advance(Tick dt) {
    std::vector<std::pair<int, int>> fired;
    if (closed_ || dt < 0) {
      return fired;
    }
    const Tick target = now_ + dt;
    while (true) {
      auto best = entries_.end();
      for (auto it = entries_.begin(); it != entries_.end(); ++it) {
        if (it->expiry > target) {
          continue;
        }
        if (best == entries_.end() || it->expiry < best->expiry ||
            (it->expiry == best->expiry &&
             std::pair(it->t.kind, it->t.subid) <
                 std::pair(best->t.kind, best->t.subid))) {
          best = it;
        }
      }
      if (best == entries_.end()) {
        break;
      }
      fired.emplace_back(best->t.kind, best->t.subid);
      if (best->t.cyclic) {
        best->expiry += best->t.deadline;
      } else {
        entries_.erase(best);
      }
    }
    now_ = target;
    for (auto& e : entries_) {
      e.t.remaining = e.expiry - now_;
    }
    return fired;
  }

  void close() { closed_ = true; }

  // Harness hook: moves the clock forward without evaluating expiries.
  // Entries already due stay armed and fire on the next advance(0).
  void sync(Tick target) {
    if (closed_ || target <= now_) {
      return;
    }
    now_ = target;
    for (auto& e : entries_) {
      e.t.remaining = std::max<Tick>(0, e.expiry - now_);
    }
  }

  // Earliest pending expiry, if the list is live and non-empty.
  std::optional<Tick> next_expiry() const {
    if (closed_ || entries_.empty()) {
      return std::nullopt;
    }
    Tick best = entries_.front().expiry;
    for (const auto& e : entries_) {
      best = std::min(best, e.expiry);
    }
    return best;
  }

  // One line per entry, ordered by (expiry, kind, subid):
  //   <kind-label> subid=<s> remaining=<r> cyclic=<0|1>
  std::string dump() const {
    std::vector<const Entry*> view;
    view.reserve(entries_.size());
    for (const auto& e : entries_) {
      view.push_back(&e);
    }
    std::sort(view.begin(), view.end(), [](const Entry* a, const Entry* b) {
      return std::tuple(a->expiry, a->t.kind, a->t.subid) <
             std::tuple(b->expiry, b->t.kind, b->t.subid);
    });
    std::ostringstream os;
    for (const Entry* e : view) {
      os << timeout_label(e->t.kind) << " subid=" << e->t.subid
         << " remaining=" << std::max<Tick>(0, e->expiry - now_)
         << " cyclic=" << (e->t.cyclic ? 1 : 0) << '\n';
    }
    return os.str();
  }

  friend bool operator==(const TimeoutList&, const TimeoutList&) = default;

 private:
  struct Entry {
    Timeout t;
    Tick expiry = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::vector<Entry>::iterator find(int kind, int subid) {
    return std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
      return e.t.kind == kind && e.t.subid == subid;
    });
  }
  std::vector<Entry>::const_iterator find(int kind, int subid) const {
    return std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
      return e.t.kind == kind && e.t.subid == subid;
    });
  }

  std::vector<Entry> entries_;
  Tick now_ = 0;
  bool closed_ = false;
};

}  // namespace dirnet
