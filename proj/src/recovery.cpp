#include "p4sim/recovery.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "p4sim/errors.hpp"

namespace p4sim {

namespace {

struct Replayer {
    std::map<Placement, Key> rev;
    std::map<Key, Value> state;

    Replayer(const LayoutPlan& plan, const std::map<Key, Value>& init) : state(init) {
        for (const auto& [key, p] : plan.placement) rev[p] = key;
    }

    // replay one txn; returns per-instruction results
    std::vector<int64_t> apply(const SwitchTxnLogView& t) {
        std::vector<int64_t> results;
        int64_t acc = t.acc0;
        bool flag = t.flag0;
        for (const auto& batch : t.batches)
            for (const auto& ins : batch) {
                Key k = rev.at(Placement{ins.stage, ins.array, ins.slot});
                results.push_back(apply_instruction(ins, state[k], acc, flag));
            }
        return results;
    }
};

} // namespace

std::vector<SwitchTxnLogView> collect_switch_txns(const std::vector<const Wal*>& logs) {
    std::map<TxnId, SwitchTxnLogView> txns;
    std::set<Gid> gids_seen;
    for (const Wal* log : logs) {
        for (const auto& r : log->records()) {
            if (r.kind == LogKind::SwitchIntent) {
                auto& t = txns[r.txn_id];
                t.txn = r.txn_id;
                t.batches = r.intent;
                t.acc0 = r.acc0;
                t.flag0 = r.flag0;
            } else if (r.kind == LogKind::SwitchResult) {
                if (!gids_seen.insert(r.gid).second)
                    throw InconsistentLogs("duplicate gid " + std::to_string(r.gid));
                auto& t = txns[r.txn_id];
                t.txn = r.txn_id;
                t.gid = r.gid;
                t.results = r.results;
            }
        }
    }
    std::vector<SwitchTxnLogView> out;
    for (auto& [id, t] : txns) {
        if (t.batches.empty())
            throw InconsistentLogs("result without intent for txn " + std::to_string(id));
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

// Complete search over interleavings: anchored txns keep gid order; before
// each anchored txn (and at the end) any ordered subset of the in-flight
// intents may run. A placement is valid iff replay reproduces every anchored
// result vector exactly.
struct OrderSearch {
    const std::vector<const SwitchTxnLogView*>& anchored;
    std::vector<const SwitchTxnLogView*> inflight;
    std::vector<TxnId> order;
    Replayer* best = nullptr;

    bool solve(Replayer state, size_t ai, std::vector<const SwitchTxnLogView*> remaining,
               std::vector<TxnId> prefix) {
        if (ai == anchored.size()) {
            // unconstrained tail: run leftovers in deterministic txn order
            std::sort(remaining.begin(), remaining.end(),
                      [](auto* a, auto* b) { return a->txn < b->txn; });
            for (auto* f : remaining) {
                state.apply(*f);
                prefix.push_back(f->txn);
            }
            order = std::move(prefix);
            *best = std::move(state);
            return true;
        }
        // try the next anchored txn directly
        {
            Replayer s = state;
            auto got = s.apply(*anchored[ai]);
            if (got == anchored[ai]->results) {
                auto p = prefix;
                p.push_back(anchored[ai]->txn);
                if (solve(std::move(s), ai + 1, remaining, std::move(p))) return true;
            }
        }
        // or insert one in-flight txn here and retry
        for (size_t i = 0; i < remaining.size(); i++) {
            Replayer s = state;
            s.apply(*remaining[i]);
            auto rem = remaining;
            rem.erase(rem.begin() + ptrdiff_t(i));
            auto p = prefix;
            p.push_back(remaining[i]->txn);
            if (solve(std::move(s), ai, std::move(rem), std::move(p))) return true;
        }
        return false;
    }
};

} // namespace

SwitchRecovery recover_switch(const std::vector<const Wal*>& logs, const LayoutPlan& plan,
                              const std::map<Key, Value>& hot_initial) {
    auto txns = collect_switch_txns(logs);
    std::vector<const SwitchTxnLogView*> anchored, inflight;
    for (const auto& t : txns) (t.gid ? anchored : inflight).push_back(&t);
    std::sort(anchored.begin(), anchored.end(),
              [](auto* a, auto* b) { return *a->gid < *b->gid; });

    Replayer result(plan, hot_initial);
    OrderSearch search{anchored, inflight, {}, &result};
    if (!search.solve(Replayer(plan, hot_initial), 0, inflight, {}))
        throw NoConsistentOrder("no in-flight ordering reproduces the anchored results");

    SwitchRecovery rec;
    rec.state = result.state;
    rec.order = search.order;
    rec.ambiguous = !inflight.empty();

    std::ostringstream os;
    os << "switch recovery: " << anchored.size() << " anchored, " << inflight.size()
       << " in-flight" << (rec.ambiguous ? " (order partially inferred)" : "") << "\n";
    std::set<TxnId> anchored_ids;
    for (auto* a : anchored) anchored_ids.insert(a->txn);
    for (size_t i = 0; i < rec.order.size(); i++)
        os << "  " << i << ": txn " << rec.order[i]
           << (anchored_ids.count(rec.order[i]) ? " (anchored)" : " (inferred)") << "\n";
    rec.report = os.str();
    return rec;
}

NodeRecovery recover_node(const Wal& log) {
    NodeRecovery rec;
    for (const auto& r : log.records()) {
        auto it = rec.dispositions.find(r.txn_id);
        TxnDisposition d = it == rec.dispositions.end() ? TxnDisposition::InProgress : it->second;
        switch (r.kind) {
        case LogKind::ColdWrite:
            if (d == TxnDisposition::InProgress) rec.dispositions[r.txn_id] = d;
            break;
        case LogKind::SwitchIntent:
            if (d != TxnDisposition::Committed) rec.dispositions[r.txn_id] = TxnDisposition::PreCommitted;
            break;
        case LogKind::SwitchResult:
            break;
        case LogKind::Commit:
            rec.dispositions[r.txn_id] = TxnDisposition::Committed;
            break;
        case LogKind::Abort:
            rec.dispositions[r.txn_id] = TxnDisposition::Aborted;
            break;
        }
    }
    // redo pass: apply cold writes of committed and pre-committed txns in lsn order
    for (const auto& r : log.records()) {
        if (r.kind != LogKind::ColdWrite) continue;
        auto d = rec.dispositions.at(r.txn_id);
        if (d == TxnDisposition::Committed || d == TxnDisposition::PreCommitted)
            rec.writes[r.key] = r.value;
    }
    std::ostringstream os;
    const char* names[] = {"committed", "pre-committed", "aborted", "in-progress"};
    for (const auto& [txn, d] : rec.dispositions)
        os << "txn " << txn << ": " << names[size_t(d)] << "\n";
    rec.report = os.str();
    return rec;
}

} // namespace p4sim
