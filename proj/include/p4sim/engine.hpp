#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "p4sim/event_loop.hpp"
#include "p4sim/layout.hpp"
#include "p4sim/lock_table.hpp"
#include "p4sim/switch_pipeline.hpp"
#include "p4sim/types.hpp"
#include "p4sim/wal.hpp"
#include "p4sim/workload.hpp"

namespace p4sim {

enum class RunMode : uint8_t { P4db, NoSwitch, LmSwitch };
enum class TxnClass : uint8_t { Hot, Cold, Warm };

/// Classification against the active layout. Throws UnsupportedShape for a
/// cold operation that depends (transitively) on a hot one and was not
/// co-offloaded.
TxnClass classify_txn(const Txn& txn, const LayoutPlan& plan);

struct CrashPlan {
    std::optional<Time> switch_at;
    std::vector<std::pair<int, Time>> nodes_at; // (node id, time)
};

struct EngineConfig {
    RunMode mode = RunMode::P4db;
    LockPolicy policy = LockPolicy::NoWait;
    WorkloadSpec workload;
    uint32_t workers_per_node = 8;

    Time duration = 2'000'000;  // sim-time horizon (ignored when txn_limit set)
    uint64_t txn_limit = 0;     // stop after N transactions started, run to quiescence

    LatencyModel latency;
    SwitchConfig switch_cfg;

    Time cpu_per_op = 25;      // local compute per operation
    Time backoff_base = 200;   // seeded exponential backoff on lock aborts
    uint32_t backoff_cap = 6;  // max exponent
    bool retry_aborts = true;

    uint32_t lm_queue_depth = 16; // lock-manager-mode per-key wait queue bound
    bool audit = false;           // record per-key access orders for the checker
    CrashPlan crash;
    uint64_t seed = 1;
};

/// Response-time components; every waiting interval of a transaction lands in
/// exactly one bucket, so total() equals the measured latency.
struct LatencyBuckets {
    Time lock_acquisition = 0; // waiting on local lock queues
    Time remote_access = 0;    // remote lock/read round trips
    Time switch_round = 0;     // switch packet send until result delivery
    Time local_execute = 0;    // node-side compute
    Time commit = 0;           // vote rounds
    Time backoff = 0;          // post-abort retry delays

    Time total() const {
        return lock_acquisition + remote_access + switch_round + local_execute + commit + backoff;
    }
};

struct Metrics {
    uint64_t attempted = 0; // attempts, so committed + aborted == attempted
    uint64_t committed = 0;
    uint64_t committed_hot = 0;
    uint64_t committed_cold = 0;
    uint64_t committed_warm = 0;
    uint64_t aborts_lock = 0;
    uint64_t aborts_constraint = 0;
    uint64_t unsupported = 0; // rejected by classification, never attempted
    uint64_t retries = 0;
    uint64_t constraint_refusals = 0; // committed with a refused switch guard

    LatencyBuckets buckets; // summed over committed transactions
    Time latency_sum = 0;
    Time latency_max = 0;
    uint64_t latency_count = 0;

    uint64_t single_pass = 0;
    uint64_t multi_pass = 0;
    uint64_t recirculations = 0;
    uint64_t switch_completed = 0;
    uint64_t dropped_messages = 0;
    Time measured_time = 0;

    // commits per million time units (integer to keep CSV output byte-stable)
    uint64_t throughput_per_mtu() const {
        return measured_time > 0 ? committed * 1'000'000 / uint64_t(measured_time) : 0;
    }
};

/// One switch transaction as completed by the pipeline; enough to replay it
/// in gid order against an independent interpreter.
struct SwitchCommitRecord {
    Gid gid = 0;
    TxnId txn = 0;
    std::vector<std::vector<SwitchInstruction>> batches;
    int64_t acc0 = 0;
    bool flag0 = true;
    std::vector<int64_t> results;
};

/// One deterministic experiment: nodes, workers, switch and network on a
/// single event loop.
class Simulation {
  public:
    Simulation(EngineConfig cfg, LayoutPlan plan);
    ~Simulation();
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    void run();

    const Metrics& metrics() const;
    const LayoutPlan& plan() const;
    const Wal& wal(int node) const;
    const std::map<Key, Value>& node_store(int node) const;
    const SwitchPipeline& pipeline() const;

    // hot-key -> initial value manifest loaded into the switch
    const std::map<Key, Value>& hot_initial() const;

    // oracle state: effects of every completed switch transaction, in order
    const std::map<Key, Value>& switch_shadow() const;
    const std::vector<SwitchCommitRecord>& switch_commits() const;

    // crash captures (empty optionals when no crash was injected)
    std::optional<std::map<Key, Value>> switch_shadow_at_crash() const;
    std::optional<std::map<Key, Value>> node_store_at_crash(int node) const;

    /// Conflict-graph acyclicity over committed transactions (needs audit).
    bool audit_serializable() const;

    /// Workload conservation error; 0 when the invariant holds. Only
    /// meaningful for quiescent (txn_limit) runs.
    int64_t conservation_error() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace p4sim
