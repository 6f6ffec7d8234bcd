#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "p4sim/switch_pipeline.hpp"
#include "p4sim/types.hpp"
#include "p4sim/wal.hpp"

namespace p4sim {

/// One switch transaction as reconstructed from the logs: intent always
/// present, gid/results only when the result made it back to a log.
struct SwitchTxnLogView {
    TxnId txn = 0;
    std::optional<Gid> gid;
    std::vector<std::vector<SwitchInstruction>> batches;
    int64_t acc0 = 0;
    bool flag0 = true;
    std::vector<int64_t> results;
};

std::vector<SwitchTxnLogView> collect_switch_txns(const std::vector<const Wal*>& logs);

struct SwitchRecovery {
    std::map<Key, Value> state;  // reconstructed hot-tuple values
    std::vector<TxnId> order;    // replay order actually used
    bool ambiguous = false;      // in-flight txns placed without full evidence
    std::string report;
};

/// Replays anchored (gid-carrying) switch transactions in gid order and
/// inserts in-flight intents wherever the anchored per-op results pin them.
/// Throws InconsistentLogs on duplicate gids, NoConsistentOrder when no
/// insertion reproduces every anchored result.
SwitchRecovery recover_switch(const std::vector<const Wal*>& logs, const LayoutPlan& plan,
                              const std::map<Key, Value>& hot_initial);

enum class TxnDisposition : uint8_t { Committed, PreCommitted, Aborted, InProgress };

struct NodeRecovery {
    std::map<Key, Value> writes;                  // redo image of this node's cold writes
    std::map<TxnId, TxnDisposition> dispositions;
    std::string report;
};

/// Redo pass over one node's log: cold writes of committed and pre-committed
/// (intent logged, no commit) transactions are applied; everything else is
/// dropped.
NodeRecovery recover_node(const Wal& log);

} // namespace p4sim
