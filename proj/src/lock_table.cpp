#include "p4sim/lock_table.hpp"

#include <algorithm>

namespace p4sim {

bool LockTable::compatible(const Entry& e, TxnId txn, LockReqMode mode) {
    for (const auto& h : e.holders) {
        if (h.txn == txn) continue;
        if (mode == LockReqMode::Exclusive || h.mode == LockReqMode::Exclusive) return false;
    }
    return true;
}

AcquireResult LockTable::acquire(TxnId txn, Timestamp ts, Key key, LockReqMode mode,
                                 LockPolicy policy) {
    Entry& e = table_[key];
    for (auto& h : e.holders) {
        if (h.txn != txn) continue;
        if (h.mode == LockReqMode::Exclusive || mode == LockReqMode::Shared)
            return AcquireResult::Granted; // re-entrant
        if (e.holders.size() == 1) {       // sole holder: upgrade
            h.mode = LockReqMode::Exclusive;
            return AcquireResult::Granted;
        }
        break;
    }
    if (compatible(e, txn, mode)) {
        // FIFO fairness: an exclusive waiter already queued blocks new shared grants
        bool blocked_by_queue = false;
        for (const auto& w : e.queue)
            if (w.ts < ts) blocked_by_queue = true;
        if (!blocked_by_queue) {
            e.holders.push_back({txn, ts, mode});
            keys_of_[txn].push_back(key);
            return AcquireResult::Granted;
        }
    }
    if (policy == LockPolicy::NoWait) return AcquireResult::Abort;
    // WAIT_DIE: wait only if older than every current holder
    for (const auto& h : e.holders)
        if (h.txn != txn && ts > h.ts) return AcquireResult::Abort;
    e.queue.push_back({txn, ts, mode});
    std::sort(e.queue.begin(), e.queue.end(),
              [](const Waiter& a, const Waiter& b) { return a.ts < b.ts; });
    return AcquireResult::Enqueued;
}

std::vector<LockTable::Woken> LockTable::release_all(TxnId txn) {
    std::vector<Woken> woken;
    auto it = keys_of_.find(txn);
    std::vector<Key> keys = it != keys_of_.end() ? it->second : std::vector<Key>{};
    if (it != keys_of_.end()) keys_of_.erase(it);

    // also drop any queued requests of txn (abort while enqueued)
    for (auto& [key, e] : table_) {
        e.queue.erase(std::remove_if(e.queue.begin(), e.queue.end(),
                                     [&](const Waiter& w) { return w.txn == txn; }),
                      e.queue.end());
    }
    for (Key key : keys) {
        Entry& e = table_[key];
        e.holders.erase(std::remove_if(e.holders.begin(), e.holders.end(),
                                       [&](const Holder& h) { return h.txn == txn; }),
                        e.holders.end());
        // wake compatible waiters in timestamp order, oldest first
        while (!e.queue.empty()) {
            const Waiter& w = e.queue.front();
            if (!compatible(e, w.txn, w.mode)) break;
            e.holders.push_back({w.txn, w.ts, w.mode});
            keys_of_[w.txn].push_back(key);
            woken.push_back({w.txn, key});
            e.queue.pop_front();
        }
        if (e.holders.empty() && e.queue.empty()) table_.erase(key);
    }
    return woken;
}

bool LockTable::holds(TxnId txn, Key key) const {
    auto it = table_.find(key);
    if (it == table_.end()) return false;
    for (const auto& h : it->second.holders)
        if (h.txn == txn) return true;
    return false;
}

size_t LockTable::queue_len(Key key) const {
    auto it = table_.find(key);
    return it == table_.end() ? 0 : it->second.queue.size();
}

size_t LockTable::held_count(TxnId txn) const {
    auto it = keys_of_.find(txn);
    return it == keys_of_.end() ? 0 : it->second.size();
}

} // namespace p4sim
