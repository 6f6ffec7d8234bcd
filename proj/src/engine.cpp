#include "p4sim/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <tuple>

#include "p4sim/errors.hpp"

namespace p4sim {

namespace {

Opcode lower_opcode(OpKind k) {
    switch (k) {
    case OpKind::Read: return Opcode::Read;
    case OpKind::Write: return Opcode::Write;
    case OpKind::Add: return Opcode::AddRead;
    case OpKind::SubIfGeq: return Opcode::SubIfGeq;
    case OpKind::AddIfFlag: return Opcode::AddIfFlag;
    }
    return Opcode::Nop;
}

} // namespace

TxnClass classify_txn(const Txn& txn, const LayoutPlan& plan) {
    std::vector<bool> hot(txn.ops.size());
    bool any_hot = false, any_cold = false;
    for (size_t i = 0; i < txn.ops.size(); i++) {
        hot[i] = plan.contains(txn.ops[i].key);
        (hot[i] ? any_hot : any_cold) = true;
    }
    if (!any_cold) return any_hot ? TxnClass::Hot : TxnClass::Cold;
    if (!any_hot) return TxnClass::Cold;
    // cold op depending (transitively) on a hot one cannot run before the
    // switch sub-transaction; such keys must have been co-offloaded
    for (size_t i = 0; i < txn.ops.size(); i++) {
        if (hot[i]) continue;
        for (int d = txn.ops[i].dep; d >= 0; d = txn.ops[d].dep)
            if (hot[d])
                throw UnsupportedShape("cold op on key " + std::to_string(txn.ops[i].key) +
                                       " depends on hot op");
    }
    return TxnClass::Warm;
}

struct Simulation::Impl {
    EngineConfig cfg;
    LayoutPlan plan_;
    EventLoop loop;
    Network net;
    SwitchPipeline pipe;
    WorkloadGen meta; // home_node / initial_value oracle, rng unused

    std::map<Placement, Key> rev_placement;
    std::map<Key, Value> hot_init;
    std::map<Key, Value> shadow;
    std::vector<SwitchCommitRecord> commits;
    bool tick_scheduled = false;
    bool switch_crashed = false;
    std::optional<std::map<Key, Value>> shadow_at_crash;

    struct SwitchMeta {
        int origin = 0;
        std::vector<int> participants;
        int64_t acc0 = 0;
        bool flag0 = true;
        std::vector<std::vector<SwitchInstruction>> batches;
    };
    std::map<TxnId, SwitchMeta> sw_meta;

    // lock-manager-mode state living at the switch endpoint
    LockTable lm_locks;
    // txn -> (origin node, key, attempt epoch captured at enqueue)
    std::map<TxnId, std::tuple<int, Key, uint64_t>> lm_pending;

    struct NodeState {
        std::map<Key, Value> store;
        LockTable locks;
        Wal wal;
        std::map<TxnId, Key> pending; // enqueued lock waiters
        // waiter's coordinator node and attempt epoch captured at enqueue;
        // a wake for a stale epoch must be dropped, not applied to a retry
        std::map<TxnId, std::pair<int, uint64_t>> pending_from;
        std::map<TxnId, std::vector<std::pair<Key, Value>>> prepared;
        bool crashed = false;
        std::optional<std::map<Key, Value>> store_at_crash;
    };
    std::vector<NodeState> nodes;

    struct Worker {
        int node = 0;
        int widx = 0;
        WorkloadGen gen;
        Rng rng;

        Txn txn;
        uint8_t txn_type = 0;
        TxnClass cls = TxnClass::Cold;
        Timestamp ts;
        uint32_t attempts = 0;
        uint64_t epoch = 0;
        Time txn_start = 0, wait_since = 0;
        LatencyBuckets bk;

        std::vector<Key> lock_keys;
        std::vector<bool> lock_excl;
        size_t li = 0;
        bool lm_locked = false; // current key's switch lock granted, data pending
        std::map<Key, Value> cache;
        std::set<Key> written;
        std::vector<int> hot_ops, cold_ops;
        int64_t acc = 0;
        bool flag = true;
        std::set<int> participants; // remote nodes holding our locks/data
        bool lm_used = false;       // any switch-resident lock taken
        size_t votes_outstanding = 0;
        std::vector<std::vector<SwitchInstruction>> batches;
        std::vector<int64_t> sw_results;

        Worker(const WorkloadSpec& spec, int n, int w)
            : node(n), widx(w), gen(spec, uint32_t(n), uint32_t(w)),
              rng(spec.seed ^ (0xabcd1234ULL + uint64_t(n) * 131 + w)) {}
    };
    std::vector<std::unique_ptr<Worker>> workers;
    std::map<TxnId, Worker*> owner;

    uint64_t ts_counter = 0;
    TxnId next_txn_id = 1;
    uint64_t started = 0;
    Metrics m;

    // serializability audit: per-key access orders of committed txns
    std::map<Key, std::vector<std::pair<TxnId, bool>>> cold_log;
    std::map<Key, std::vector<std::tuple<Gid, TxnId, bool>>> hot_log;

    int64_t expected_delta = 0;            // SmallBank conservation
    std::map<Key, int64_t> ytd_ledger;     // TPC-C payment ledger

    Impl(EngineConfig c, LayoutPlan p)
        : cfg(std::move(c)), plan_(std::move(p)), net(loop, cfg.latency),
          pipe(cfg.switch_cfg), meta(cfg.workload, 0, 0) {
        if (cfg.cpu_per_op < 1) throw ConfigError("cpu_per_op must be >= 1");
        if (cfg.workload.nodes < 1) throw ConfigError("need at least one node");
        nodes.resize(cfg.workload.nodes);
        for (const auto& [key, pl] : plan_.placement) {
            rev_placement[pl] = key;
            hot_init[key] = meta.initial_value(key);
        }
        shadow = hot_init;
        pipe.load_layout(plan_, hot_init);
        for (uint32_t n = 0; n < cfg.workload.nodes; n++)
            for (uint32_t w = 0; w < cfg.workers_per_node; w++)
                workers.push_back(std::make_unique<Worker>(cfg.workload, int(n), int(w)));
    }

    Value& store_get(int n, Key k) {
        return nodes[size_t(n)].store.try_emplace(k, meta.initial_value(k)).first->second;
    }

    int data_home(Key k) const { return meta.home_node(k); }
    int lock_home(Key k) const {
        if (cfg.mode == RunMode::LmSwitch && plan_.contains(k)) return kSwitchEndpoint;
        return data_home(k);
    }

    Worker* find(TxnId txn, uint64_t ep) {
        auto it = owner.find(txn);
        if (it == owner.end() || it->second->epoch != ep) return nullptr;
        // a crashed node executes nothing, including already-queued timers
        if (nodes[it->second->node].crashed) return nullptr;
        return it->second;
    }

    // ---- worker lifecycle -------------------------------------------------

    void begin_txn(Worker& w) {
        if (cfg.txn_limit && started >= cfg.txn_limit) return;
        if (nodes[w.node].crashed) return;
        w.txn = w.gen.next(next_txn_id++);
        w.txn_type = w.gen.last_txn_type();
        started++;

        w.hot_ops.clear();
        w.cold_ops.clear();
        if (cfg.mode == RunMode::P4db) {
            try {
                w.cls = classify_txn(w.txn, plan_);
            } catch (const UnsupportedShape&) {
                m.unsupported++;
                loop.schedule_in(cfg.cpu_per_op, EventKind::Timer, [this, &w] { begin_txn(w); });
                return;
            }
            for (size_t i = 0; i < w.txn.ops.size(); i++)
                (plan_.contains(w.txn.ops[i].key) ? w.hot_ops : w.cold_ops).push_back(int(i));
        } else {
            w.cls = TxnClass::Cold;
            for (size_t i = 0; i < w.txn.ops.size(); i++) w.cold_ops.push_back(int(i));
        }

        w.attempts = 0;
        w.txn_start = loop.now();
        w.bk = {};
        start_attempt(w);
    }

    void start_attempt(Worker& w) {
        m.attempted++;
        w.epoch++;
        w.ts = Timestamp{++ts_counter, uint32_t(w.node)};
        w.cache.clear();
        w.written.clear();
        w.acc = 0;
        w.flag = true;
        w.li = 0;
        w.lm_locked = false;
        w.lm_used = false;
        w.participants.clear();
        w.votes_outstanding = 0;
        w.batches.clear();
        w.sw_results.clear();
        owner[w.txn.id] = &w;

        if (w.cls == TxnClass::Hot) {
            Time cost = cfg.cpu_per_op * Time(w.txn.ops.size());
            uint64_t ep = w.epoch;
            TxnId id = w.txn.id;
            loop.schedule_in(cost, EventKind::Timer, [this, id, ep, cost] {
                if (Worker* w = find(id, ep)) {
                    w->bk.local_execute += cost;
                    send_switch(*w);
                }
            });
            return;
        }

        w.lock_keys.clear();
        w.lock_excl.clear();
        for (int i : w.cold_ops) {
            const Op& op = w.txn.ops[i];
            auto it = std::find(w.lock_keys.begin(), w.lock_keys.end(), op.key);
            if (it == w.lock_keys.end()) {
                w.lock_keys.push_back(op.key);
                w.lock_excl.push_back(op_is_write(op.kind));
            } else if (op_is_write(op.kind)) {
                w.lock_excl[size_t(it - w.lock_keys.begin())] = true;
            }
        }
        continue_locking(w);
    }

    void continue_locking(Worker& w) {
        while (w.li < w.lock_keys.size()) {
            Key k = w.lock_keys[w.li];
            LockReqMode mode = w.lock_excl[w.li] ? LockReqMode::Exclusive : LockReqMode::Shared;
            int lh = lock_home(k);
            if (lh == w.node) {
                auto res = nodes[w.node].locks.acquire(w.txn.id, w.ts, k, mode, cfg.policy);
                if (res == AcquireResult::Granted) {
                    w.cache[k] = store_get(w.node, k);
                    w.li++;
                    continue;
                }
                if (res == AcquireResult::Enqueued) {
                    nodes[w.node].pending[w.txn.id] = k;
                    nodes[w.node].pending_from[w.txn.id] = {w.node, w.epoch};
                    w.wait_since = loop.now();
                    return;
                }
                abort_attempt(w, false);
                return;
            }
            if (lh == kSwitchEndpoint) {
                request_lm_lock(w, k, mode);
                return;
            }
            request_remote_lock(w, k, mode, lh);
            return;
        }
        locks_done(w);
    }

    void request_remote_lock(Worker& w, Key k, LockReqMode mode, int h) {
        w.wait_since = loop.now();
        w.participants.insert(h);
        TxnId id = w.txn.id;
        uint64_t ep = w.epoch;
        Timestamp ts = w.ts;
        int origin = w.node;
        net.send(origin, h, [this, id, ep, ts, k, mode, h, origin] {
            auto res = nodes[h].locks.acquire(id, ts, k, mode, cfg.policy);
            if (res == AcquireResult::Enqueued) {
                nodes[h].pending[id] = k;
                nodes[h].pending_from[id] = {origin, ep};
                return;
            }
            bool granted = res == AcquireResult::Granted;
            Value v = granted ? store_get(h, k) : 0;
            net.send(h, origin, [this, id, ep, k, granted, v] {
                lock_response(id, ep, k, granted, v);
            });
        });
    }

    void lock_response(TxnId id, uint64_t ep, Key k, bool granted, Value v) {
        Worker* w = find(id, ep);
        if (!w) return;
        w->bk.remote_access += loop.now() - w->wait_since;
        if (!granted) {
            abort_attempt(*w, false);
            return;
        }
        w->cache[k] = v;
        w->li++;
        continue_locking(*w);
    }

    // lock-manager mode: lock at the switch, then fetch data from the owner
    void request_lm_lock(Worker& w, Key k, LockReqMode mode) {
        w.wait_since = loop.now();
        w.lm_used = true;
        TxnId id = w.txn.id;
        uint64_t ep = w.epoch;
        Timestamp ts = w.ts;
        int origin = w.node;
        net.send(origin, kSwitchEndpoint, [this, id, ep, ts, k, mode, origin] {
            AcquireResult res;
            if (cfg.policy == LockPolicy::WaitDie && lm_locks.queue_len(k) >= cfg.lm_queue_depth)
                res = AcquireResult::Abort;
            else
                res = lm_locks.acquire(id, ts, k, mode, cfg.policy);
            if (res == AcquireResult::Enqueued) {
                lm_pending[id] = {origin, k, ep};
                return;
            }
            bool granted = res == AcquireResult::Granted;
            net.send(kSwitchEndpoint, origin,
                     [this, id, ep, k, granted] { lm_lock_response(id, ep, k, granted); });
        });
    }

    void lm_lock_response(TxnId id, uint64_t ep, Key k, bool granted) {
        Worker* w = find(id, ep);
        if (!w) return;
        w->bk.remote_access += loop.now() - w->wait_since;
        if (!granted) {
            abort_attempt(*w, false);
            return;
        }
        // lock held at the switch; the tuple still lives on its owner node
        int dh = data_home(k);
        if (dh == w->node) {
            w->cache[k] = store_get(w->node, k);
            w->li++;
            continue_locking(*w);
            return;
        }
        w->wait_since = loop.now();
        w->participants.insert(dh);
        int origin = w->node;
        net.send(origin, dh, [this, id, ep, k, dh, origin] {
            Value v = store_get(dh, k);
            net.send(dh, origin,
                     [this, id, ep, k, v] { lock_response(id, ep, k, true, v); });
        });
    }

    void process_woken(int n, const std::vector<LockTable::Woken>& woken) {
        for (const auto& wk : woken) {
            auto from_it = nodes[n].pending_from.find(wk.txn);
            if (from_it == nodes[n].pending_from.end()) continue;
            auto [origin, ep] = from_it->second;
            nodes[n].pending.erase(wk.txn);
            nodes[n].pending_from.erase(from_it);
            Value v = store_get(n, wk.key);
            TxnId id = wk.txn;
            Key k = wk.key;
            if (origin == n) {
                loop.schedule_in(0, EventKind::Timer, [this, id, ep, k, v] {
                    Worker* w2 = find(id, ep);
                    if (!w2) return;
                    w2->bk.lock_acquisition += loop.now() - w2->wait_since;
                    w2->cache[k] = v;
                    w2->li++;
                    continue_locking(*w2);
                });
            } else {
                net.send(n, origin,
                         [this, id, ep, k, v] { lock_response(id, ep, k, true, v); });
            }
        }
    }

    void process_lm_woken(const std::vector<LockTable::Woken>& woken) {
        for (const auto& wk : woken) {
            auto it = lm_pending.find(wk.txn);
            if (it == lm_pending.end()) continue;
            auto [origin, k, ep] = it->second;
            lm_pending.erase(it);
            TxnId id = wk.txn;
            net.send(kSwitchEndpoint, origin,
                     [this, id, ep, k] { lm_lock_response(id, ep, k, true); });
        }
    }

    void locks_done(Worker& w) {
        Time cost = cfg.cpu_per_op * Time(std::max<size_t>(w.cold_ops.size(), 1));
        TxnId id = w.txn.id;
        uint64_t ep = w.epoch;
        loop.schedule_in(cost, EventKind::Timer, [this, id, ep, cost] {
            if (Worker* w2 = find(id, ep)) {
                w2->bk.local_execute += cost;
                cold_exec(*w2);
            }
        });
    }

    void cold_exec(Worker& w) {
        std::vector<std::pair<Key, bool>> accesses;
        for (int i : w.cold_ops) {
            const Op& op = w.txn.ops[i];
            SwitchInstruction ins;
            ins.opcode = lower_opcode(op.kind);
            ins.operand = op.operand;
            Value& v = w.cache[op.key];
            apply_instruction(ins, v, w.acc, w.flag);
            if (op.kind == OpKind::SubIfGeq && !w.flag) {
                // guarded update failed: integrity constraint violation
                abort_attempt(w, true);
                return;
            }
            if (op_is_write(op.kind)) w.written.insert(op.key);
            accesses.push_back({op.key, op_is_write(op.kind)});
        }
        if (cfg.audit)
            for (const auto& [k, wr] : accesses) cold_log[k].push_back({w.txn.id, wr});

        if (!w.participants.empty()) {
            start_vote(w);
        } else if (w.cls == TxnClass::Warm) {
            send_switch(w);
        } else {
            finalize_commit_cold(w);
        }
    }

    void start_vote(Worker& w) {
        // prepare round: ship each participant its write-set, collect votes
        w.wait_since = loop.now();
        w.votes_outstanding = w.participants.size();
        TxnId id = w.txn.id;
        uint64_t ep = w.epoch;
        int origin = w.node;
        for (int t : w.participants) {
            std::vector<std::pair<Key, Value>> writes;
            for (Key k : w.written)
                if (data_home(k) == t) writes.push_back({k, w.cache[k]});
            net.send(origin, t, [this, id, ep, t, origin, writes] {
                nodes[t].prepared[id] = writes;
                net.send(t, origin, [this, id, ep] {
                    if (Worker* w2 = find(id, ep)) on_vote(*w2);
                });
            });
        }
    }

    void on_vote(Worker& w) {
        if (--w.votes_outstanding > 0) return;
        w.bk.commit += loop.now() - w.wait_since;
        if (w.cls == TxnClass::Warm)
            send_switch(w);
        else
            finalize_commit_cold(w);
    }

    // ---- switch path ------------------------------------------------------

    void build_batches(Worker& w) {
        std::vector<Op> hops;
        std::map<int, int> remap;
        for (int i : w.hot_ops) {
            remap[i] = int(hops.size());
            hops.push_back(w.txn.ops[i]);
        }
        for (auto& op : hops) {
            auto it = op.dep >= 0 ? remap.find(op.dep) : remap.end();
            op.dep = it != remap.end() ? it->second : -1;
        }
        std::vector<int> order = order_ops_for_plan(hops, plan_);
        std::vector<Op> ordered;
        for (int i : order) ordered.push_back(hops[size_t(i)]);
        PassClassification pc = classify_transaction(ordered, plan_);
        w.batches.clear();
        for (const auto& batch : pc.batches) {
            std::vector<SwitchInstruction> instrs;
            for (int i : batch) {
                const Op& op = ordered[size_t(i)];
                const Placement& p = plan_.at(op.key);
                SwitchInstruction ins;
                ins.stage = uint8_t(p.stage);
                ins.array = uint8_t(p.array);
                ins.slot = p.slot;
                ins.opcode = lower_opcode(op.kind);
                ins.operand = op.operand;
                instrs.push_back(ins);
            }
            w.batches.push_back(std::move(instrs));
        }
    }

    void send_switch(Worker& w) {
        build_batches(w);
        SwitchTxnPacket pkt;
        pkt.txn_id = w.txn.id;
        pkt.is_multipass = w.batches.size() > 1;
        pkt.pass_plan = w.batches;
        pkt.accumulator = w.acc;
        pkt.flag = w.flag;
        if (cfg.switch_cfg.lock_mode == SwitchLockMode::SinglePipelineLock) {
            pkt.locks = LockRequest{1, 0};
        } else {
            for (const auto& batch : w.batches)
                for (const auto& ins : batch)
                    (ins.array == 0 ? pkt.locks.left : pkt.locks.right) = 1;
        }

        // the txn is pre-committed from here on: log local cold writes and
        // the switch intent before the packet leaves the node
        log_local_writes(w.node, w);
        LogRecord intent;
        intent.txn_id = w.txn.id;
        intent.kind = LogKind::SwitchIntent;
        intent.intent = w.batches;
        intent.acc0 = w.acc;
        intent.flag0 = w.flag;
        nodes[w.node].wal.append(std::move(intent));

        SwitchMeta smeta;
        smeta.origin = w.node;
        smeta.participants.assign(w.participants.begin(), w.participants.end());
        smeta.participants.push_back(w.node);
        smeta.acc0 = w.acc;
        smeta.flag0 = w.flag;
        smeta.batches = w.batches;
        sw_meta[w.txn.id] = std::move(smeta);

        w.wait_since = loop.now();
        net.send(w.node, kSwitchEndpoint, [this, pkt = std::move(pkt)]() mutable {
            pipe.submit(std::move(pkt));
            ensure_tick();
        });
    }

    void ensure_tick() {
        if (tick_scheduled || switch_crashed) return;
        tick_scheduled = true;
        loop.schedule_in(1, EventKind::SwitchTick, [this] { do_tick(); });
    }

    void do_tick() {
        tick_scheduled = false;
        if (switch_crashed) return;
        auto done = pipe.tick();
        for (auto& c : done) {
            auto mit = sw_meta.find(c.txn_id);
            assert(mit != sw_meta.end());
            SwitchMeta& sm = mit->second;

            // completed-transaction oracle: replay effects onto the shadow
            int64_t acc = sm.acc0;
            bool flag = sm.flag0;
            size_t ri = 0;
            for (const auto& batch : sm.batches) {
                for (const auto& ins : batch) {
                    Key k = rev_placement.at(Placement{ins.stage, ins.array, ins.slot});
                    apply_instruction(ins, shadow[k], acc, flag);
                    if (cfg.audit) {
                        bool wr = ins.opcode != Opcode::Read;
                        hot_log[k].push_back({c.gid, c.txn_id, wr});
                    }
                    ri++;
                }
            }
            (void)ri;
            commits.push_back(
                SwitchCommitRecord{c.gid, c.txn_id, sm.batches, sm.acc0, sm.flag0, c.results});

            for (int t : sm.participants) {
                TxnId id = c.txn_id;
                Gid gid = c.gid;
                auto results = c.results;
                net.send(kSwitchEndpoint, t, [this, t, id, gid, results] {
                    on_switch_result(t, id, gid, results);
                });
            }
            sw_meta.erase(mit);
        }
        if (!pipe.idle()) ensure_tick();
    }

    void on_switch_result(int n, TxnId id, Gid gid, const std::vector<int64_t>& results) {
        auto oit = owner.find(id);
        if (oit != owner.end() && oit->second->node == n) {
            Worker& w = *oit->second;
            w.bk.switch_round += loop.now() - w.wait_since;
            w.sw_results = results;
            NodeState& N = nodes[n];
            LogRecord res;
            res.txn_id = id;
            res.kind = LogKind::SwitchResult;
            res.gid = gid;
            res.results = results;
            N.wal.append(std::move(res));
            apply_local_writes(n, w, /*log=*/false); // writes logged at intent time
            LogRecord cr;
            cr.txn_id = id;
            cr.kind = LogKind::Commit;
            N.wal.append(std::move(cr));
            process_woken(n, N.locks.release_all(id));
            commit_metrics(w);
            return;
        }
        // participant: apply prepared cold writes, commit locally, release
        NodeState& P = nodes[n];
        auto pit = P.prepared.find(id);
        if (pit != P.prepared.end()) {
            for (const auto& [k, v] : pit->second) {
                store_get(n, k) = v;
                LogRecord lr;
                lr.txn_id = id;
                lr.kind = LogKind::ColdWrite;
                lr.key = k;
                lr.value = v;
                P.wal.append(std::move(lr));
            }
            P.prepared.erase(pit);
        }
        LogRecord cr;
        cr.txn_id = id;
        cr.kind = LogKind::Commit;
        P.wal.append(std::move(cr));
        process_woken(n, P.locks.release_all(id));
    }

    // ---- commit / abort ---------------------------------------------------

    void log_local_writes(int n, Worker& w) {
        NodeState& N = nodes[n];
        for (Key k : w.written) {
            if (data_home(k) != n) continue;
            LogRecord lr;
            lr.txn_id = w.txn.id;
            lr.kind = LogKind::ColdWrite;
            lr.key = k;
            lr.value = w.cache[k];
            N.wal.append(std::move(lr));
        }
    }

    void apply_local_writes(int n, Worker& w, bool log) {
        if (log) log_local_writes(n, w);
        for (Key k : w.written) {
            if (data_home(k) != n) continue;
            store_get(n, k) = w.cache[k];
        }
    }

    void finalize_commit_cold(Worker& w) {
        int n = w.node;
        NodeState& N = nodes[n];
        apply_local_writes(n, w, /*log=*/true);
        LogRecord cr;
        cr.txn_id = w.txn.id;
        cr.kind = LogKind::Commit;
        N.wal.append(std::move(cr));
        process_woken(n, N.locks.release_all(w.txn.id));
        if (w.lm_used) release_lm(w.txn.id, n);

        for (int t : w.participants) {
            TxnId id = w.txn.id;
            net.send(n, t, [this, t, id] {
                NodeState& P = nodes[t];
                auto pit = P.prepared.find(id);
                if (pit != P.prepared.end()) {
                    for (const auto& [k, v] : pit->second) {
                        store_get(t, k) = v;
                        LogRecord lr;
                        lr.txn_id = id;
                        lr.kind = LogKind::ColdWrite;
                        lr.key = k;
                        lr.value = v;
                        P.wal.append(std::move(lr));
                    }
                    P.prepared.erase(pit);
                }
                LogRecord pc;
                pc.txn_id = id;
                pc.kind = LogKind::Commit;
                P.wal.append(std::move(pc));
                process_woken(t, P.locks.release_all(id));
            });
        }
        commit_metrics(w);
    }

    void release_lm(TxnId id, int origin) {
        net.send(origin, kSwitchEndpoint, [this, id] {
            lm_pending.erase(id);
            process_lm_woken(lm_locks.release_all(id));
        });
    }

    void commit_metrics(Worker& w) {
        owner.erase(w.txn.id);
        w.epoch++;
        m.committed++;
        switch (w.cls) {
        case TxnClass::Hot: m.committed_hot++; break;
        case TxnClass::Cold: m.committed_cold++; break;
        case TxnClass::Warm: m.committed_warm++; break;
        }
        Time lat = loop.now() - w.txn_start;
        m.latency_sum += lat;
        m.latency_count++;
        m.latency_max = std::max(m.latency_max, lat);
        m.buckets.lock_acquisition += w.bk.lock_acquisition;
        m.buckets.remote_access += w.bk.remote_access;
        m.buckets.switch_round += w.bk.switch_round;
        m.buckets.local_execute += w.bk.local_execute;
        m.buckets.commit += w.bk.commit;
        m.buckets.backoff += w.bk.backoff;

        track_invariants(w);
        begin_txn(w);
    }

    // refused guard on the switch: committed, but the guarded update was a no-op
    bool switch_guard_refused(const Worker& w) const {
        size_t i = 0;
        for (const auto& batch : w.batches)
            for (const auto& ins : batch) {
                if (ins.opcode == Opcode::SubIfGeq && i < w.sw_results.size() &&
                    w.sw_results[i] < ins.operand)
                    return true;
                i++;
            }
        return false;
    }

    void track_invariants(Worker& w) {
        bool refused = switch_guard_refused(w);
        if (refused) m.constraint_refusals++;
        if (cfg.workload.kind == WorkloadKind::SmallBank) {
            // expected aggregate-balance change per committed transaction type
            int64_t amt = w.txn.ops.empty() ? 0 : w.txn.ops.back().operand;
            switch (w.txn_type) {
            case 1: expected_delta += w.txn.ops[0].operand; break;          // deposit
            case 2: expected_delta -= refused ? 0 : w.txn.ops[0].operand; break;
            case 4: expected_delta -= refused ? 0 : amt; break;             // write check
            default: break; // balance/amalgamate/payment conserve
            }
        } else if (cfg.workload.kind == WorkloadKind::Tpcc && w.txn_type == 1) {
            ytd_ledger[w.txn.ops[0].key] += w.txn.ops[0].operand;
        }
    }

    void abort_attempt(Worker& w, bool constraint) {
        // release everywhere we might hold or queue a lock
        NodeState& N = nodes[w.node];
        N.pending.erase(w.txn.id);
        N.pending_from.erase(w.txn.id);
        process_woken(w.node, N.locks.release_all(w.txn.id));
        std::set<int> remote;
        for (size_t i = 0; i <= w.li && i < w.lock_keys.size(); i++) {
            int lh = lock_home(w.lock_keys[i]);
            if (lh != w.node && lh != kSwitchEndpoint) remote.insert(lh);
        }
        TxnId id = w.txn.id;
        for (int h : remote) {
            net.send(w.node, h, [this, h, id] {
                nodes[h].pending.erase(id);
                nodes[h].pending_from.erase(id);
                nodes[h].prepared.erase(id);
                process_woken(h, nodes[h].locks.release_all(id));
            });
        }
        if (w.lm_used) release_lm(id, w.node);

        w.epoch++;
        if (constraint) {
            m.aborts_constraint++;
            LogRecord ab;
            ab.txn_id = id;
            ab.kind = LogKind::Abort;
            nodes[w.node].wal.append(std::move(ab));
            owner.erase(id);
            loop.schedule_in(cfg.cpu_per_op, EventKind::Timer, [this, &w] { begin_txn(w); });
            return;
        }
        m.aborts_lock++;
        if (!cfg.retry_aborts) {
            owner.erase(id);
            loop.schedule_in(cfg.cpu_per_op, EventKind::Timer, [this, &w] { begin_txn(w); });
            return;
        }
        m.retries++;
        uint32_t exp = std::min(w.attempts, cfg.backoff_cap);
        Time backoff = cfg.backoff_base * (Time(1) << exp) +
                       Time(w.rng.uniform(uint64_t(cfg.backoff_base)));
        w.attempts++;
        w.bk.backoff += backoff;
        uint64_t gen_epoch = w.epoch;
        loop.schedule_in(backoff, EventKind::Timer, [this, &w, gen_epoch] {
            if (w.epoch == gen_epoch && !nodes[w.node].crashed) start_attempt(w);
        });
    }

    // ---- crash handling ---------------------------------------------------

    void crash_switch() {
        if (switch_crashed) return;
        switch_crashed = true;
        net.crash(kSwitchEndpoint);
        shadow_at_crash = shadow;
    }

    void crash_node(int n) {
        if (nodes[n].crashed) return;
        nodes[n].crashed = true;
        net.crash(n);
        nodes[n].store_at_crash = nodes[n].store;
    }

    // ---- run --------------------------------------------------------------

    void run() {
        if (cfg.txn_limit == 0 && cfg.duration <= 0) return;
        for (auto& w : workers) {
            Worker* wp = w.get();
            loop.schedule_at(0, EventKind::Timer, [this, wp] { begin_txn(*wp); });
        }
        if (cfg.crash.switch_at)
            loop.schedule_at(*cfg.crash.switch_at, EventKind::Timer, [this] { crash_switch(); });
        for (const auto& [n, t] : cfg.crash.nodes_at)
            loop.schedule_at(t, EventKind::Timer, [this, n = n] { crash_node(n); });

        if (cfg.txn_limit > 0) {
            loop.run_until_quiescent();
            m.measured_time = loop.now();
        } else {
            loop.run_until(cfg.duration);
            m.measured_time = cfg.duration;
        }
        m.single_pass = pipe.completed_count() - pipe.multipass_completed();
        m.multi_pass = pipe.multipass_completed();
        m.recirculations = pipe.recirculation_count();
        m.switch_completed = pipe.completed_count();
        m.dropped_messages = net.dropped_count();
    }

    // ---- audits -----------------------------------------------------------

    bool audit_serializable() const {
        std::map<TxnId, std::set<TxnId>> adj;
        auto add_seq = [&](const std::vector<std::pair<TxnId, bool>>& seq) {
            for (size_t i = 0; i < seq.size(); i++)
                for (size_t j = i + 1; j < seq.size(); j++) {
                    if (seq[i].first == seq[j].first) continue;
                    if (seq[i].second || seq[j].second) adj[seq[i].first].insert(seq[j].first);
                }
        };
        for (const auto& [k, seq] : cold_log) add_seq(seq);
        for (const auto& [k, entries] : hot_log) {
            auto sorted = entries;
            std::sort(sorted.begin(), sorted.end());
            std::vector<std::pair<TxnId, bool>> seq;
            for (const auto& [gid, txn, wr] : sorted) seq.push_back({txn, wr});
            add_seq(seq);
        }
        // DFS cycle check
        std::map<TxnId, int> color;
        std::vector<std::pair<TxnId, bool>> stack;
        for (const auto& [start, _] : adj) {
            if (color[start]) continue;
            stack.push_back({start, false});
            while (!stack.empty()) {
                auto [u, processed] = stack.back();
                stack.pop_back();
                if (processed) {
                    color[u] = 2;
                    continue;
                }
                if (color[u] == 2) continue;
                if (color[u] == 1) continue;
                color[u] = 1;
                stack.push_back({u, true});
                auto it = adj.find(u);
                if (it == adj.end()) continue;
                for (TxnId v : it->second) {
                    if (color[v] == 1) return false; // back edge
                    if (color[v] == 0) stack.push_back({v, false});
                }
            }
        }
        return true;
    }

    int64_t conservation_error() const {
        // keys in the plan live on the switch only in full in-network mode
        bool switch_resident = cfg.mode == RunMode::P4db;
        if (cfg.workload.kind == WorkloadKind::SmallBank) {
            int64_t actual = 0;
            for (const auto& ns : nodes)
                for (const auto& [k, v] : ns.store)
                    if (!(switch_resident && plan_.contains(k)))
                        actual += v - meta.initial_value(k);
            if (switch_resident)
                for (const auto& [k, v] : shadow) actual += v - meta.initial_value(k);
            return actual - expected_delta;
        }
        if (cfg.workload.kind == WorkloadKind::Tpcc) {
            int64_t err = 0;
            std::set<Key> wh_keys;
            for (uint64_t w = 0; w < cfg.workload.tpcc.warehouses; w++)
                wh_keys.insert(tpcc_key(TpccTag::WarehouseYtd, w));
            for (Key k : wh_keys) {
                int64_t final_v = 0;
                if (switch_resident && plan_.contains(k)) {
                    auto it = shadow.find(k);
                    final_v = it != shadow.end() ? it->second : 0;
                } else {
                    int n = meta.home_node(k);
                    auto it = nodes[size_t(n)].store.find(k);
                    final_v = it != nodes[size_t(n)].store.end() ? it->second : 0;
                }
                auto lit = ytd_ledger.find(k);
                int64_t expect = lit != ytd_ledger.end() ? lit->second : 0;
                err += std::abs(final_v - expect);
            }
            return err;
        }
        return 0;
    }
};

Simulation::Simulation(EngineConfig cfg, LayoutPlan plan)
    : impl_(std::make_unique<Impl>(std::move(cfg), std::move(plan))) {}
Simulation::~Simulation() = default;

void Simulation::run() { impl_->run(); }
const Metrics& Simulation::metrics() const { return impl_->m; }
const LayoutPlan& Simulation::plan() const { return impl_->plan_; }
const Wal& Simulation::wal(int node) const { return impl_->nodes.at(size_t(node)).wal; }
const std::map<Key, Value>& Simulation::node_store(int node) const {
    return impl_->nodes.at(size_t(node)).store;
}
const SwitchPipeline& Simulation::pipeline() const { return impl_->pipe; }
const std::map<Key, Value>& Simulation::hot_initial() const { return impl_->hot_init; }
const std::map<Key, Value>& Simulation::switch_shadow() const { return impl_->shadow; }
const std::vector<SwitchCommitRecord>& Simulation::switch_commits() const {
    return impl_->commits;
}
std::optional<std::map<Key, Value>> Simulation::switch_shadow_at_crash() const {
    return impl_->shadow_at_crash;
}
std::optional<std::map<Key, Value>> Simulation::node_store_at_crash(int node) const {
    return impl_->nodes.at(size_t(node)).store_at_crash;
}
bool Simulation::audit_serializable() const { return impl_->audit_serializable(); }
int64_t Simulation::conservation_error() const { return impl_->conservation_error(); }

} // namespace p4sim
