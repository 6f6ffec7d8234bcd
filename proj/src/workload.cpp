#include "p4sim/workload.hpp"

#include <algorithm>

#include "p4sim/errors.hpp"

namespace p4sim {

Key tpcc_key(TpccTag tag, uint64_t warehouse, uint64_t a, uint64_t b) {
    return (static_cast<uint64_t>(tag) << 56) | ((warehouse & 0xffff) << 40) |
           ((a & 0xfffff) << 20) | (b & 0xfffff);
}

TpccTag tpcc_tag(Key k) { return static_cast<TpccTag>(k >> 56); }
uint64_t tpcc_warehouse(Key k) { return (k >> 40) & 0xffff; }

WorkloadGen::WorkloadGen(const WorkloadSpec& spec, uint32_t node, uint32_t worker)
    : spec_(spec), node_(node),
      rng_(spec.seed * 0x9e3779b97f4a7c15ULL + (uint64_t(node) << 32) + worker + 1) {
    if (spec.nodes == 0) throw ConfigError("workload needs at least one node");
}

Txn WorkloadGen::next(TxnId id) {
    seq_++;
    switch (spec_.kind) {
    case WorkloadKind::Ycsb: return next_ycsb(id);
    case WorkloadKind::SmallBank: return next_smallbank(id);
    case WorkloadKind::Tpcc: return next_tpcc(id);
    }
    throw ConfigError("unknown workload kind");
}

// ---------------------------------------------------------------------------
// YCSB: fixed-length txns over a partitioned table. Keys below
// hot_per_node * nodes are the hot set; the rest are home-partitioned by
// key % nodes.

Txn WorkloadGen::next_ycsb(TxnId id) {
    const auto& y = spec_.ycsb;
    const uint64_t hot = uint64_t(y.hot_per_node) * spec_.nodes;
    const uint64_t per_node = y.table_size / spec_.nodes;
    if (per_node <= y.hot_per_node) throw ConfigError("ycsb table too small for hot set");

    Txn txn;
    txn.id = id;
    last_type_ = 0;
    while (txn.ops.size() < y.ops_per_txn) {
        Key k;
        if (hot > 0 && rng_.chance(y.hot_access_prob)) {
            // single-partition accesses stay on the issuing node's slice of
            // the hot set; distributed ones range over the whole hot set
            if (spec_.nodes > 1 && rng_.chance(spec_.distributed_prob))
                k = rng_.uniform(hot);
            else
                k = rng_.uniform(y.hot_per_node) * spec_.nodes + node_;
        } else {
            uint32_t home = node_;
            if (spec_.nodes > 1 && rng_.chance(spec_.distributed_prob))
                home = (node_ + 1 + uint32_t(rng_.uniform(spec_.nodes - 1))) % spec_.nodes;
            uint64_t idx = y.hot_per_node + rng_.uniform(per_node - y.hot_per_node);
            k = idx * spec_.nodes + home;
        }
        bool dup = false;
        for (const auto& op : txn.ops) dup |= (op.key == k);
        if (dup) continue;
        Op op;
        op.key = k;
        if (rng_.chance(y.write_prob())) {
            op.kind = OpKind::Write;
            op.operand = rng_.range(1, 100);
        } else {
            op.kind = OpKind::Read;
        }
        txn.ops.push_back(op);
    }
    return txn;
}

// ---------------------------------------------------------------------------
// SmallBank: six transaction types over (savings, checking) account pairs.
// Two-account transfers always run from the smaller to the larger account id
// so that key-level dependencies form a DAG across the whole workload.

uint64_t WorkloadGen::draw_hot_account() {
    return rng_.uniform(uint64_t(spec_.smallbank.hot_per_node) * spec_.nodes);
}

uint64_t WorkloadGen::draw_cold_account(bool remote) {
    const auto& sb = spec_.smallbank;
    uint32_t home = node_;
    if (remote && spec_.nodes > 1)
        home = (node_ + 1 + uint32_t(rng_.uniform(spec_.nodes - 1))) % spec_.nodes;
    const uint64_t per_node = sb.accounts / spec_.nodes;
    if (per_node <= sb.hot_per_node) throw ConfigError("smallbank too few accounts for hot set");
    uint64_t idx = sb.hot_per_node + rng_.uniform(per_node - sb.hot_per_node);
    return idx * spec_.nodes + home;
}

Txn WorkloadGen::next_smallbank(TxnId id) {
    const auto& sb = spec_.smallbank;
    double total = 0;
    for (double w : sb.type_weights) total += w;
    double r = static_cast<double>(rng_.next() >> 11) * (1.0 / 9007199254740992.0) * total;
    uint8_t type = 0;
    for (double acc = 0; type < 5; type++) {
        acc += sb.type_weights[type];
        if (r < acc) break;
    }
    last_type_ = type;

    const bool hot_txn = rng_.chance(sb.hot_txn_prob) &&
                         uint64_t(sb.hot_per_node) * spec_.nodes >= 2;
    auto draw_one = [&] {
        return hot_txn ? draw_hot_account()
                       : draw_cold_account(spec_.nodes > 1 && rng_.chance(spec_.distributed_prob));
    };
    auto draw_pair = [&](uint64_t& a, uint64_t& b) {
        a = hot_txn ? draw_hot_account() : draw_cold_account(false);
        do {
            b = draw_one();
        } while (b == a);
        if (a > b) std::swap(a, b); // canonical transfer direction
    };

    Txn txn;
    txn.id = id;
    int64_t amt = rng_.range(1, 100);
    switch (type) {
    case 0: { // Balance: read both balances
        uint64_t a = draw_one();
        txn.ops.push_back({sb_savings(a), OpKind::Read, 0, -1});
        txn.ops.push_back({sb_checking(a), OpKind::Read, 0, -1});
        break;
    }
    case 1: { // DepositChecking
        uint64_t a = draw_one();
        txn.ops.push_back({sb_checking(a), OpKind::Add, amt, -1});
        break;
    }
    case 2: { // TransactSavings: guarded withdrawal
        uint64_t a = draw_one();
        txn.ops.push_back({sb_savings(a), OpKind::SubIfGeq, amt, -1});
        break;
    }
    case 3: { // Amalgamate: drain a's balances into b's checking
        uint64_t a, b;
        draw_pair(a, b);
        txn.ops.push_back({sb_savings(a), OpKind::Write, 0, -1});
        txn.ops.push_back({sb_checking(a), OpKind::Write, 0, 0});
        txn.ops.push_back({sb_checking(b), OpKind::AddIfFlag, 0, 1});
        break;
    }
    case 4: { // WriteCheck: read savings, guarded checking withdrawal
        uint64_t a = draw_one();
        txn.ops.push_back({sb_savings(a), OpKind::Read, 0, -1});
        txn.ops.push_back({sb_checking(a), OpKind::SubIfGeq, amt, 0});
        break;
    }
    default: { // Payment: guarded transfer a -> b
        uint64_t a, b;
        draw_pair(a, b);
        txn.ops.push_back({sb_checking(a), OpKind::SubIfGeq, amt, -1});
        txn.ops.push_back({sb_checking(b), OpKind::AddIfFlag, amt, 0});
        break;
    }
    }
    return txn;
}

// ---------------------------------------------------------------------------
// TPC-C subset: NewOrder and Payment, 50/50. Hot rows are the per-warehouse
// YTD counters, the per-district counters and the stock rows of the top-K
// items; order lines and history rows are insert-only cold keys unique per
// transaction.

Txn WorkloadGen::next_tpcc(TxnId id) {
    const auto& tc = spec_.tpcc;
    if (tc.warehouses == 0) throw ConfigError("tpcc needs at least one warehouse");
    auto local_warehouse = [&]() -> uint64_t {
        uint64_t n_local = 0;
        for (uint64_t w = node_; w < tc.warehouses; w += spec_.nodes) n_local++;
        if (n_local == 0) return node_ % tc.warehouses;
        return node_ + rng_.uniform(n_local) * spec_.nodes;
    };
    auto other_warehouse = [&](uint64_t w) -> uint64_t {
        if (tc.warehouses == 1) return w;
        uint64_t o = rng_.uniform(tc.warehouses - 1);
        return o >= w ? o + 1 : o;
    };

    Txn txn;
    txn.id = id;
    const uint64_t w = local_warehouse();
    const uint64_t d = rng_.uniform(tc.districts);
    if (rng_.chance(0.5)) { // NewOrder
        last_type_ = 0;
        txn.ops.push_back({tpcc_key(TpccTag::DistrictNextOid, w, d), OpKind::Add, 1, -1});
        const int n_items = int(rng_.range(5, 15));
        std::vector<uint64_t> seen;
        for (int i = 0; i < n_items; i++) {
            uint64_t item;
            uint64_t supply;
            do {
                item = (tc.top_k_stock > 0 && rng_.chance(tc.hot_item_prob))
                           ? rng_.uniform(tc.top_k_stock)
                           : rng_.uniform(tc.items);
                supply = (tc.warehouses > 1 && rng_.chance(tc.remote_prob)) ? other_warehouse(w) : w;
            } while (std::find(seen.begin(), seen.end(), supply * tc.items + item) != seen.end());
            seen.push_back(supply * tc.items + item);
            int64_t qty = rng_.range(1, 10);
            txn.ops.push_back({tpcc_key(TpccTag::StockQty, supply, item), OpKind::SubIfGeq, qty, -1});
            txn.ops.push_back(
                {tpcc_key(TpccTag::OrderLine, w, id, uint64_t(i)), OpKind::Write, qty, -1});
        }
    } else { // Payment
        last_type_ = 1;
        const uint64_t cw = (tc.warehouses > 1 && rng_.chance(tc.remote_prob)) ? other_warehouse(w) : w;
        const uint64_t cd = rng_.uniform(tc.districts);
        const uint64_t c = rng_.uniform(tc.customers_per_district);
        int64_t amt = rng_.range(1, 5000);
        txn.ops.push_back({tpcc_key(TpccTag::WarehouseYtd, w), OpKind::Add, amt, -1});
        txn.ops.push_back({tpcc_key(TpccTag::DistrictYtd, w, d), OpKind::Add, amt, -1});
        txn.ops.push_back({tpcc_key(TpccTag::CustomerBalance, cw, cd, c), OpKind::Add, -amt, -1});
        txn.ops.push_back({tpcc_key(TpccTag::History, w, id), OpKind::Write, amt, -1});
    }
    return txn;
}

// ---------------------------------------------------------------------------

int WorkloadGen::home_node(Key k) const {
    switch (spec_.kind) {
    case WorkloadKind::Ycsb:
        return int(k % spec_.nodes);
    case WorkloadKind::SmallBank:
        return int((k / 2) % spec_.nodes);
    case WorkloadKind::Tpcc:
        return int(tpcc_warehouse(k) % spec_.nodes);
    }
    return 0;
}

Value WorkloadGen::initial_value(Key k) const {
    switch (spec_.kind) {
    case WorkloadKind::Ycsb:
        return 0;
    case WorkloadKind::SmallBank:
        return spec_.smallbank.initial_balance;
    case WorkloadKind::Tpcc:
        return tpcc_tag(k) == TpccTag::StockQty ? spec_.tpcc.initial_stock : 0;
    }
    return 0;
}

std::vector<Key> WorkloadGen::hot_candidate_keys() const {
    std::vector<Key> keys;
    switch (spec_.kind) {
    case WorkloadKind::Ycsb: {
        uint64_t hot = uint64_t(spec_.ycsb.hot_per_node) * spec_.nodes;
        for (uint64_t k = 0; k < hot; k++) keys.push_back(k);
        break;
    }
    case WorkloadKind::SmallBank: {
        uint64_t hot = uint64_t(spec_.smallbank.hot_per_node) * spec_.nodes;
        for (uint64_t a = 0; a < hot; a++) {
            keys.push_back(sb_savings(a));
            keys.push_back(sb_checking(a));
        }
        break;
    }
    case WorkloadKind::Tpcc: {
        const auto& tc = spec_.tpcc;
        for (uint64_t w = 0; w < tc.warehouses; w++) {
            keys.push_back(tpcc_key(TpccTag::WarehouseYtd, w));
            for (uint64_t d = 0; d < tc.districts; d++) {
                keys.push_back(tpcc_key(TpccTag::DistrictNextOid, w, d));
                keys.push_back(tpcc_key(TpccTag::DistrictYtd, w, d));
            }
            for (uint64_t i = 0; i < tc.top_k_stock; i++)
                keys.push_back(tpcc_key(TpccTag::StockQty, w, i));
        }
        break;
    }
    }
    return keys;
}

} // namespace p4sim
