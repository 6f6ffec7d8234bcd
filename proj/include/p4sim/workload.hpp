#pragma once

#include <array>
#include <vector>

#include "p4sim/types.hpp"

namespace p4sim {

enum class WorkloadKind : uint8_t { Ycsb, SmallBank, Tpcc };

struct YcsbSpec {
    char variant = 'A'; // A 50/50, B 95/5 read/write, C read-only
    uint64_t table_size = 1'000'000;
    uint32_t hot_per_node = 50;
    double hot_access_prob = 0.75;
    uint32_t ops_per_txn = 8;

    double write_prob() const {
        switch (variant) {
        case 'A': return 0.5;
        case 'B': return 0.05;
        default: return 0.0;
        }
    }
};

struct SmallBankSpec {
    uint64_t accounts = 100'000;
    uint32_t hot_per_node = 5;
    double hot_txn_prob = 0.90;
    // Balance, DepositChecking, TransactSavings, Amalgamate, WriteCheck, Payment
    std::array<double, 6> type_weights = {1, 1, 1, 1, 1, 1};
    int64_t initial_balance = 10'000;
};

struct TpccSpec {
    uint32_t warehouses = 8;
    uint32_t districts = 10;
    uint32_t items = 1000;
    uint32_t customers_per_district = 100;
    uint32_t top_k_stock = 64;   // stock rows of the most-ordered items are hot
    double hot_item_prob = 0.5;  // order lines drawn from the top-K item set
    double remote_prob = 0.2;
    int64_t initial_stock = 1'000'000'000;
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::Ycsb;
    YcsbSpec ycsb;
    SmallBankSpec smallbank;
    TpccSpec tpcc;
    uint32_t nodes = 8;
    double distributed_prob = 0.2;
    uint64_t seed = 1;
};

// SmallBank key mapping: account a -> savings 2a, checking 2a+1.
inline Key sb_savings(uint64_t a) { return 2 * a; }
inline Key sb_checking(uint64_t a) { return 2 * a + 1; }

// TPC-C key packing: tag in the top byte.
enum class TpccTag : uint64_t {
    WarehouseYtd = 1,
    DistrictNextOid = 2,
    DistrictYtd = 3,
    StockQty = 4,
    CustomerBalance = 5,
    OrderLine = 6,
    History = 7,
};
Key tpcc_key(TpccTag tag, uint64_t warehouse, uint64_t a = 0, uint64_t b = 0);
TpccTag tpcc_tag(Key k);
uint64_t tpcc_warehouse(Key k);

/// Seeded per-worker transaction stream. Streams are bit-reproducible from
/// (spec, node, worker) via seed splitting.
class WorkloadGen {
  public:
    WorkloadGen(const WorkloadSpec& spec, uint32_t node, uint32_t worker);

    Txn next(TxnId id);

    int home_node(Key k) const;
    Value initial_value(Key k) const;

    // keys eligible for offloading (before frequency-based detection)
    std::vector<Key> hot_candidate_keys() const;

    const WorkloadSpec& spec() const { return spec_; }
    uint8_t last_txn_type() const { return last_type_; }

  private:
    Txn next_ycsb(TxnId id);
    Txn next_smallbank(TxnId id);
    Txn next_tpcc(TxnId id);

    uint64_t draw_hot_account();
    uint64_t draw_cold_account(bool remote);

    WorkloadSpec spec_;
    uint32_t node_;
    Rng rng_;
    uint8_t last_type_ = 0;
    uint64_t seq_ = 0;
};

} // namespace p4sim
