#pragma once

#include <deque>
#include <map>
#include <unordered_map>
#include <vector>

#include "p4sim/types.hpp"

namespace p4sim {

enum class LockPolicy : uint8_t { NoWait, WaitDie };
enum class LockReqMode : uint8_t { Shared, Exclusive };

/// Globally unique transaction timestamp: (counter, node). Smaller is older.
struct Timestamp {
    uint64_t counter = 0;
    uint32_t node = 0;
    auto operator<=>(const Timestamp&) const = default;
};

enum class AcquireResult : uint8_t { Granted, Abort, Enqueued };

/// Per-node 2PL lock table with NO_WAIT and WAIT_DIE deadlock prevention.
class LockTable {
  public:
    AcquireResult acquire(TxnId txn, Timestamp ts, Key key, LockReqMode mode, LockPolicy policy);

    struct Woken {
        TxnId txn;
        Key key;
    };
    // Releases every lock (and queued request) of txn; returns newly granted
    // waiters, oldest first.
    std::vector<Woken> release_all(TxnId txn);

    bool holds(TxnId txn, Key key) const;
    size_t held_count(TxnId txn) const;
    size_t queue_len(Key key) const;

  private:
    struct Holder {
        TxnId txn;
        Timestamp ts;
        LockReqMode mode;
    };
    struct Waiter {
        TxnId txn;
        Timestamp ts;
        LockReqMode mode;
    };
    struct Entry {
        std::vector<Holder> holders;
        std::deque<Waiter> queue; // WAIT_DIE only; all waiters older than holders
    };

    static bool compatible(const Entry& e, TxnId txn, LockReqMode mode);

    std::unordered_map<Key, Entry> table_;
    std::unordered_map<TxnId, std::vector<Key>> keys_of_;
};

} // namespace p4sim
