#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <vector>

#include "p4sim/switch_pipeline.hpp"
#include "p4sim/types.hpp"

namespace p4sim {

/// Directed weighted co-access graph over hot tuples. One record per
/// unordered pair; conflicting orders keep separate forward weights.
struct AccessGraph {
    struct Edge {
        uint64_t forward = 0;  // u -> v dependency weight (u < v canonical)
        uint64_t backward = 0; // v -> u dependency weight
        uint64_t bidir = 0;    // co-access without an ordering dependency
        uint64_t total() const { return forward + backward + bidir; }
    };
    std::vector<Key> nodes;
    std::map<std::pair<Key, Key>, Edge> edges; // key: (min, max)

    const Edge* find(Key a, Key b) const {
        auto it = edges.find({std::min(a, b), std::max(a, b)});
        return it == edges.end() ? nullptr : &it->second;
    }
    uint64_t weighted_degree(Key k) const;
};

enum class PassKind : uint8_t { SinglePass, MultiPass, NotOffloadable };

struct PassClassification {
    PassKind kind = PassKind::SinglePass;
    uint32_t pass_count = 1;
    std::vector<std::vector<int>> batches; // op indices per pass, in execution order
};

struct Partitioning {
    std::vector<std::vector<Key>> partitions;
};

struct Orientation {
    std::vector<uint32_t> order; // partition ids in stage order
    std::vector<std::pair<Key, Key>> removed_edges; // pruned direction (from, to)
    std::set<std::pair<uint32_t, uint32_t>> kept_partition_edges; // directed, post-pruning
};

std::vector<Key> detect_hot_set(const std::vector<Txn>& trace, size_t budget);

AccessGraph build_access_graph(const std::vector<Txn>& trace, const std::set<Key>& hot);

uint64_t cut_weight(const AccessGraph& g, const std::map<Key, uint32_t>& part_of);

/// Size-constrained max-cut heuristic: greedy by descending weighted degree,
/// then first-improvement local search (moves and swaps) to a fixpoint.
Partitioning partition_maxcut(const AccessGraph& g, uint32_t num_partitions,
                              uint32_t max_partition_size, uint64_t seed);

Orientation orient_partitions(const AccessGraph& g, const Partitioning& parts);

LayoutPlan compile_layout(const AccessGraph& g, const Partitioning& parts,
                          const Orientation& orient, const SwitchConfig& cfg);

/// Random placement baseline used for layout-effectiveness comparisons.
LayoutPlan random_layout(const std::vector<Key>& keys, const SwitchConfig& cfg, uint64_t seed);

PassClassification classify_transaction(const std::vector<Op>& ops, const LayoutPlan& plan);

/// Reorders ops by plan stage while honoring dep constraints, so that the
/// greedy classifier sees the most single-pass-friendly order.
std::vector<int> order_ops_for_plan(const std::vector<Op>& ops, const LayoutPlan& plan);

// Trace file: one transaction per line, "txnid op key [dep_key]" groups.
void write_trace(std::ostream& os, const std::vector<Txn>& trace);
std::vector<Txn> read_trace(std::istream& is);

// LayoutPlan CSV: "key,stage,array,slot".
void write_layout_csv(std::ostream& os, const LayoutPlan& plan);
LayoutPlan read_layout_csv(std::istream& is);

} // namespace p4sim
