#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "p4sim/workload.hpp"

using namespace p4sim;

namespace {

// serial reference interpreter over a plain map, mirroring op semantics
struct SerialStore {
    std::map<Key, Value> store;
    const WorkloadGen& meta;

    explicit SerialStore(const WorkloadGen& m) : meta(m) {}

    Value& at(Key k) { return store.try_emplace(k, meta.initial_value(k)).first->second; }

    void apply(const Txn& txn) {
        int64_t acc = 0;
        bool flag = true;
        for (const auto& op : txn.ops) {
            Value& v = at(op.key);
            switch (op.kind) {
            case OpKind::Read:
                acc += v;
                break;
            case OpKind::Write: {
                Value old = v;
                v = op.operand;
                acc += old;
                break;
            }
            case OpKind::Add:
                v += op.operand;
                break;
            case OpKind::SubIfGeq:
                if (v >= op.operand) {
                    v -= op.operand;
                    flag = true;
                } else {
                    flag = false;
                }
                break;
            case OpKind::AddIfFlag:
                if (flag) v += op.operand + acc;
                break;
            }
        }
    }

    Value sum_of(const Txn& txn) {
        std::set<Key> keys;
        for (const auto& op : txn.ops) keys.insert(op.key);
        Value s = 0;
        for (Key k : keys) s += at(k);
        return s;
    }
};

} // namespace

TEST_CASE("ycsb write ratios per variant within 1% at 1e5 ops") {
    for (auto [variant, expect] : {std::pair{'A', 0.5}, {'B', 0.05}, {'C', 0.0}}) {
        WorkloadSpec spec;
        spec.kind = WorkloadKind::Ycsb;
        spec.ycsb.variant = variant;
        spec.nodes = 4;
        WorkloadGen gen(spec, 0, 0);
        uint64_t writes = 0, ops = 0;
        for (TxnId id = 1; ops < 100'000; id++) {
            Txn t = gen.next(id);
            for (const auto& op : t.ops) {
                ops++;
                if (op_is_write(op.kind)) writes++;
            }
        }
        double ratio = double(writes) / double(ops);
        CHECK_MESSAGE(std::abs(ratio - expect) <= 0.01, "variant ", variant, " ratio ", ratio);
    }
}

TEST_CASE("ycsb hot-access rate tracks the configured probability") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Ycsb;
    spec.nodes = 8;
    spec.ycsb.hot_access_prob = 0.75;
    WorkloadGen gen(spec, 3, 1);
    const uint64_t hot_bound = uint64_t(spec.ycsb.hot_per_node) * spec.nodes;
    uint64_t hot = 0, ops = 0;
    for (TxnId id = 1; ops < 100'000; id++) {
        Txn t = gen.next(id);
        for (const auto& op : t.ops) {
            ops++;
            if (op.key < hot_bound) hot++;
        }
    }
    double rate = double(hot) / double(ops);
    CHECK(std::abs(rate - 0.75) <= 0.01);
}

TEST_CASE("ycsb transactions never repeat a key and cold keys live on their home") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Ycsb;
    spec.nodes = 4;
    spec.distributed_prob = 0.0; // all cold accesses stay local
    WorkloadGen gen(spec, 2, 0);
    const uint64_t hot_bound = uint64_t(spec.ycsb.hot_per_node) * spec.nodes;
    for (TxnId id = 1; id <= 2000; id++) {
        Txn t = gen.next(id);
        std::set<Key> keys;
        for (const auto& op : t.ops) {
            CHECK(keys.insert(op.key).second);
            if (op.key >= hot_bound) CHECK(gen.home_node(op.key) == 2);
        }
    }
}

TEST_CASE("ycsb distributed fraction of cold accesses tracks the knob") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Ycsb;
    spec.nodes = 8;
    spec.distributed_prob = 0.3;
    spec.ycsb.hot_access_prob = 0.0; // isolate the cold path
    WorkloadGen gen(spec, 1, 0);
    uint64_t remote = 0, ops = 0;
    for (TxnId id = 1; ops < 100'000; id++) {
        Txn t = gen.next(id);
        for (const auto& op : t.ops) {
            ops++;
            if (gen.home_node(op.key) != 1) remote++;
        }
    }
    CHECK(std::abs(double(remote) / double(ops) - 0.3) <= 0.01);
}

TEST_CASE("smallbank hot-transaction rate within 1% of 0.90") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::SmallBank;
    spec.nodes = 8;
    WorkloadGen gen(spec, 0, 0);
    auto candidates = gen.hot_candidate_keys();
    std::set<Key> hot(candidates.begin(), candidates.end());
    uint64_t hot_txns = 0;
    const uint64_t N = 100'000;
    for (TxnId id = 1; id <= N; id++) {
        Txn t = gen.next(id);
        bool all_hot = true;
        for (const auto& op : t.ops) all_hot &= hot.count(op.key) != 0;
        if (all_hot) hot_txns++;
    }
    CHECK(std::abs(double(hot_txns) / double(N) - 0.90) <= 0.01);
}

TEST_CASE("smallbank transfers run from the smaller to the larger account") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::SmallBank;
    spec.nodes = 4;
    WorkloadGen gen(spec, 1, 2);
    int pairs = 0;
    for (TxnId id = 1; id <= 20'000; id++) {
        Txn t = gen.next(id);
        std::set<uint64_t> accounts;
        for (const auto& op : t.ops) accounts.insert(op.key / 2);
        if (accounts.size() == 2) {
            pairs++;
            // the second account appears only after the first in op order
            uint64_t first = *accounts.begin(), second = *accounts.rbegin();
            size_t first_last = 0, second_first = t.ops.size();
            for (size_t i = 0; i < t.ops.size(); i++) {
                if (t.ops[i].key / 2 == first) first_last = i;
                if (t.ops[i].key / 2 == second && i < second_first) second_first = i;
            }
            CHECK(first < second);
            CHECK(first_last < second_first);
        }
        // dependency indices stay in range and point backwards
        for (size_t i = 0; i < t.ops.size(); i++)
            if (t.ops[i].dep >= 0) CHECK(size_t(t.ops[i].dep) < i);
    }
    CHECK(pairs > 1000); // amalgamate + payment really occurred
}

TEST_CASE("smallbank conserves total balance per transaction type at 1e5 txns") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::SmallBank;
    spec.nodes = 4;
    WorkloadGen gen(spec, 0, 0);
    SerialStore s(gen);
    uint64_t per_type[6] = {0, 0, 0, 0, 0, 0};
    for (TxnId id = 1; id <= 100'000; id++) {
        Txn t = gen.next(id);
        uint8_t type = gen.last_txn_type();
        per_type[type]++;
        Value before = s.sum_of(t);
        s.apply(t);
        Value delta = s.sum_of(t) - before;
        switch (type) {
        case 0:
        case 3:
        case 5:
            CHECK(delta == 0); // balance checks and transfers conserve money
            break;
        case 1:
            CHECK(delta == t.ops[0].operand); // deposit
            break;
        case 2:
        case 4: {
            int64_t amt = t.ops.back().operand;
            CHECK((delta == 0 || delta == -amt)); // guarded withdrawal or refusal
            break;
        }
        }
    }
    for (int i = 0; i < 6; i++) {
        double frac = double(per_type[i]) / 100'000.0;
        CHECK(std::abs(frac - 1.0 / 6.0) <= 0.01); // uniform type mix
    }
}

TEST_CASE("tpcc key packing round-trips tag and warehouse") {
    Key k = tpcc_key(TpccTag::StockQty, 13, 999, 7);
    CHECK(tpcc_tag(k) == TpccTag::StockQty);
    CHECK(tpcc_warehouse(k) == 13);
    Key k2 = tpcc_key(TpccTag::History, 2, 123456789 & 0xfffff);
    CHECK(tpcc_tag(k2) == TpccTag::History);
    CHECK(tpcc_warehouse(k2) == 2);
    CHECK(k != k2);
}

TEST_CASE("tpcc warehouse ytd equals the payment ledger at 1e5 txns") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Tpcc;
    spec.nodes = 4;
    WorkloadGen gen(spec, 0, 0);
    SerialStore s(gen);
    std::map<uint64_t, int64_t> ledger;
    uint64_t payments = 0, neworders = 0;
    for (TxnId id = 1; id <= 100'000; id++) {
        Txn t = gen.next(id);
        if (gen.last_txn_type() == 1) {
            payments++;
            CHECK(tpcc_tag(t.ops[0].key) == TpccTag::WarehouseYtd);
            ledger[tpcc_warehouse(t.ops[0].key)] += t.ops[0].operand;
        } else {
            neworders++;
        }
        s.apply(t);
    }
    for (const auto& [w, total] : ledger)
        CHECK(s.at(tpcc_key(TpccTag::WarehouseYtd, w)) == total);
    double frac = double(payments) / double(payments + neworders);
    CHECK(std::abs(frac - 0.5) <= 0.01);
}

TEST_CASE("tpcc order lines are unique across transactions and items deduped within") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Tpcc;
    spec.nodes = 2;
    WorkloadGen gen(spec, 0, 0);
    std::set<Key> orderlines;
    for (TxnId id = 1; id <= 5000; id++) {
        Txn t = gen.next(id);
        if (gen.last_txn_type() != 0) continue;
        std::set<Key> stock;
        for (const auto& op : t.ops) {
            if (tpcc_tag(op.key) == TpccTag::OrderLine)
                CHECK(orderlines.insert(op.key).second);
            if (tpcc_tag(op.key) == TpccTag::StockQty)
                CHECK(stock.insert(op.key).second);
        }
        int items = int(stock.size());
        CHECK(items >= 5);
        CHECK(items <= 15);
    }
}

TEST_CASE("tpcc local warehouses belong to the generating node") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Tpcc;
    spec.nodes = 4;
    spec.tpcc.warehouses = 8;
    spec.tpcc.remote_prob = 0.0;
    for (uint32_t node = 0; node < 4; node++) {
        WorkloadGen gen(spec, node, 0);
        for (TxnId id = 1; id <= 500; id++) {
            Txn t = gen.next(id);
            for (const auto& op : t.ops) CHECK(tpcc_warehouse(op.key) % 4 == node);
        }
    }
}

TEST_CASE("streams are reproducible per (seed, node, worker) and distinct across workers") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::SmallBank;
    spec.nodes = 4;
    spec.seed = 42;
    auto fingerprint = [&](uint64_t seed, uint32_t node, uint32_t worker) {
        WorkloadSpec s = spec;
        s.seed = seed;
        WorkloadGen gen(s, node, worker);
        uint64_t h = 0;
        for (TxnId id = 1; id <= 200; id++)
            for (const auto& op : gen.next(id).ops)
                h = h * 1099511628211ULL + op.key * 31 + uint64_t(op.kind) + uint64_t(op.operand);
        return h;
    };
    CHECK(fingerprint(42, 0, 0) == fingerprint(42, 0, 0));
    CHECK(fingerprint(42, 0, 0) != fingerprint(42, 0, 1));
    CHECK(fingerprint(42, 0, 0) != fingerprint(42, 1, 0));
    CHECK(fingerprint(42, 0, 0) != fingerprint(43, 0, 0));
}

TEST_CASE("hot candidate keys are homed across all nodes") {
    WorkloadSpec spec;
    spec.kind = WorkloadKind::Ycsb;
    spec.nodes = 8;
    WorkloadGen gen(spec, 0, 0);
    auto keys = gen.hot_candidate_keys();
    CHECK(keys.size() == 8 * 50);
    std::set<int> homes;
    for (Key k : keys) homes.insert(gen.home_node(k));
    CHECK(homes.size() == 8);
}
