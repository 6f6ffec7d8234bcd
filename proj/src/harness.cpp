#include "p4sim/harness.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "p4sim/errors.hpp"
#include "p4sim/recovery.hpp"

namespace p4sim {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "workload", "mode", "policy", "nodes", "workers_per_node", "distributed_prob",
        "hot_ratio", "ycsb_variant", "ycsb_table_size", "ycsb_hot_per_node", "ycsb_ops_per_txn",
        "sb_accounts", "sb_hot_per_node", "sb_initial_balance", "tpcc_warehouses",
        "tpcc_remote_prob", "tpcc_top_k_stock", "layout", "duration", "txn_limit", "trace_txns",
        "hot_budget", "switch_stages", "switch_arrays", "switch_slots", "switch_lock_mode",
        "recirc_ports", "recirc_threshold", "rtt", "jitter", "cpu_per_op", "backoff_base",
        "retry", "audit", "lm_queue_depth", "seed", "crash_switch_at", "crash_node",
        "crash_node_at",
    };
    return keys;
}

} // namespace

std::map<std::string, std::string> parse_kv(std::istream& is) {
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!known_keys().count(key)) throw ConfigError("unknown config key: " + key);
        kv[key] = val;
    }
    return kv;
}

ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv) {
    auto get = [&](const std::string& k, const std::string& dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : it->second;
    };
    auto get_u64 = [&](const std::string& k, uint64_t dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : uint64_t(std::stoull(it->second));
    };
    auto get_i64 = [&](const std::string& k, int64_t dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : int64_t(std::stoll(it->second));
    };
    auto get_d = [&](const std::string& k, double dflt) {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : std::stod(it->second);
    };

    ExperimentConfig cfg;
    EngineConfig& e = cfg.engine;

    std::string wl = get("workload", "ycsb");
    if (wl == "ycsb") e.workload.kind = WorkloadKind::Ycsb;
    else if (wl == "smallbank") e.workload.kind = WorkloadKind::SmallBank;
    else if (wl == "tpcc") e.workload.kind = WorkloadKind::Tpcc;
    else throw ConfigError("unknown workload: " + wl);

    std::string mode = get("mode", "p4db");
    if (mode == "p4db") e.mode = RunMode::P4db;
    else if (mode == "no-switch") e.mode = RunMode::NoSwitch;
    else if (mode == "lm-switch") e.mode = RunMode::LmSwitch;
    else throw ConfigError("unknown mode: " + mode);

    std::string pol = get("policy", "no-wait");
    if (pol == "no-wait") e.policy = LockPolicy::NoWait;
    else if (pol == "wait-die") e.policy = LockPolicy::WaitDie;
    else throw ConfigError("unknown policy: " + pol);

    e.workload.nodes = uint32_t(get_u64("nodes", 8));
    e.workers_per_node = uint32_t(get_u64("workers_per_node", 8));
    e.workload.distributed_prob = get_d("distributed_prob", 0.2);

    e.workload.ycsb.variant = get("ycsb_variant", "A")[0];
    e.workload.ycsb.table_size = get_u64("ycsb_table_size", 1'000'000);
    e.workload.ycsb.hot_per_node = uint32_t(get_u64("ycsb_hot_per_node", 50));
    e.workload.ycsb.ops_per_txn = uint32_t(get_u64("ycsb_ops_per_txn", 8));
    e.workload.smallbank.accounts = get_u64("sb_accounts", 100'000);
    e.workload.smallbank.hot_per_node = uint32_t(get_u64("sb_hot_per_node", 5));
    e.workload.smallbank.initial_balance = get_i64("sb_initial_balance", 10'000);
    e.workload.tpcc.warehouses = uint32_t(get_u64("tpcc_warehouses", 8));
    e.workload.tpcc.remote_prob = get_d("tpcc_remote_prob", 0.2);
    e.workload.tpcc.top_k_stock = uint32_t(get_u64("tpcc_top_k_stock", 64));

    if (kv.count("hot_ratio")) {
        double hr = get_d("hot_ratio", 0.75);
        e.workload.ycsb.hot_access_prob = hr;
        e.workload.smallbank.hot_txn_prob = hr;
        e.workload.tpcc.hot_item_prob = hr;
    }

    cfg.layout_kind = get("layout", "optimal");
    if (cfg.layout_kind != "optimal" && cfg.layout_kind != "random")
        throw ConfigError("layout must be optimal or random");
    e.duration = get_i64("duration", 2'000'000);
    e.txn_limit = get_u64("txn_limit", 0);
    cfg.trace_txns = get_u64("trace_txns", 2000);
    cfg.hot_budget = get_u64("hot_budget", 0);

    e.switch_cfg.num_stages = uint32_t(get_u64("switch_stages", 12));
    e.switch_cfg.arrays_per_stage = uint32_t(get_u64("switch_arrays", 2));
    e.switch_cfg.slots_per_array = uint32_t(get_u64("switch_slots", 65536));
    std::string lm = get("switch_lock_mode", "two-bit");
    if (lm == "two-bit") e.switch_cfg.lock_mode = SwitchLockMode::TwoBitLock;
    else if (lm == "single") e.switch_cfg.lock_mode = SwitchLockMode::SinglePipelineLock;
    else throw ConfigError("switch_lock_mode must be two-bit or single");
    e.switch_cfg.num_recirc_ports = uint32_t(get_u64("recirc_ports", 3));
    e.switch_cfg.recirc_priority_threshold = uint32_t(get_u64("recirc_threshold", 8));

    e.latency.node_to_node_rtt = get_i64("rtt", 2000);
    e.latency.jitter_bound = get_i64("jitter", 0);
    e.cpu_per_op = get_i64("cpu_per_op", 25);
    e.backoff_base = get_i64("backoff_base", 200);
    e.retry_aborts = get_u64("retry", 1) != 0;
    e.audit = get_u64("audit", 0) != 0;
    e.lm_queue_depth = uint32_t(get_u64("lm_queue_depth", 16));

    e.seed = get_u64("seed", 1);
    e.workload.seed = e.seed;
    e.latency.jitter_seed = e.seed;

    if (kv.count("crash_switch_at")) e.crash.switch_at = get_i64("crash_switch_at", 0);
    if (kv.count("crash_node") != kv.count("crash_node_at"))
        throw ConfigError("crash_node and crash_node_at must be given together");
    if (kv.count("crash_node"))
        e.crash.nodes_at.push_back({int(get_i64("crash_node", 0)), get_i64("crash_node_at", 0)});
    return cfg;
}

namespace {

std::vector<Txn> offline_trace(const WorkloadSpec& spec, uint64_t txns) {
    std::vector<Txn> trace;
    std::vector<WorkloadGen> gens;
    for (uint32_t n = 0; n < spec.nodes; n++) gens.emplace_back(spec, n, 100000u + n);
    for (uint64_t i = 0; i < txns; i++)
        trace.push_back(gens[size_t(i % spec.nodes)].next(i + 1));
    return trace;
}

// flag cold keys that warm transactions would need after a hot op, to fixpoint
void co_offload(const std::vector<Txn>& trace, std::set<Key>& hot) {
    for (int round = 0; round < 10; round++) {
        bool changed = false;
        for (const auto& txn : trace) {
            std::vector<bool> is_hot(txn.ops.size());
            bool any_hot = false, any_cold = false;
            for (size_t i = 0; i < txn.ops.size(); i++) {
                is_hot[i] = hot.count(txn.ops[i].key) != 0;
                (is_hot[i] ? any_hot : any_cold) = true;
            }
            if (!any_hot || !any_cold) continue;
            for (size_t i = 0; i < txn.ops.size(); i++) {
                if (is_hot[i]) continue;
                for (int d = txn.ops[i].dep; d >= 0; d = txn.ops[size_t(d)].dep) {
                    if (is_hot[size_t(d)]) {
                        changed |= hot.insert(txn.ops[i].key).second;
                        break;
                    }
                }
            }
        }
        if (!changed) return;
    }
}

} // namespace

LayoutPlan plan_from_trace(const std::vector<Txn>& trace, const SwitchConfig& sw, size_t budget,
                           uint64_t seed, bool random_placement) {
    if (budget == 0) budget = size_t(sw.total_slots());
    std::vector<Key> ordered = detect_hot_set(trace, budget);
    std::set<Key> hot(ordered.begin(), ordered.end());
    co_offload(trace, hot);
    for (Key k : hot)
        if (std::find(ordered.begin(), ordered.end(), k) == ordered.end()) ordered.push_back(k);

    if (ordered.size() > sw.total_slots()) ordered.resize(size_t(sw.total_slots()));
    for (int attempt = 0; attempt < 20; attempt++) {
        try {
            if (random_placement) return random_layout(ordered, sw, seed);
            std::set<Key> hotset(ordered.begin(), ordered.end());
            AccessGraph g = build_access_graph(trace, hotset);
            Partitioning parts = partition_maxcut(
                g, sw.num_stages, sw.arrays_per_stage * sw.slots_per_array, seed);
            Orientation orient = orient_partitions(g, parts);
            return compile_layout(g, parts, orient, sw);
        } catch (const CapacityExceeded&) {
        } catch (const Infeasible&) {
        }
        size_t drop = std::max<size_t>(ordered.size() / 10, 1);
        if (drop >= ordered.size()) break;
        ordered.resize(ordered.size() - drop);
    }
    if (ordered.empty()) return LayoutPlan{};
    if (random_placement) return random_layout(ordered, sw, seed);
    throw CapacityExceeded("hot set cannot be laid out on this switch");
}

LayoutPlan build_layout_for(const ExperimentConfig& cfg) {
    auto trace = offline_trace(cfg.engine.workload, cfg.trace_txns);
    size_t budget = cfg.hot_budget;
    if (budget == 0)
        budget = WorkloadGen(cfg.engine.workload, 0, 0).hot_candidate_keys().size();
    return plan_from_trace(trace, cfg.engine.switch_cfg, budget, cfg.engine.seed,
                           cfg.layout_kind == "random");
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    LayoutPlan plan = build_layout_for(cfg);
    Simulation sim(cfg.engine, plan);
    sim.run();
    RunResult r;
    r.metrics = sim.metrics();
    std::ostringstream note;

    if (r.metrics.buckets.total() != r.metrics.latency_sum) {
        r.invariants_ok = false;
        note << "latency breakdown does not sum to measured latency; ";
    }
    if (r.metrics.committed + r.metrics.aborts_lock + r.metrics.aborts_constraint >
        r.metrics.attempted) {
        r.invariants_ok = false;
        note << "attempt accounting broken; ";
    }
    if (cfg.engine.audit && !sim.audit_serializable()) {
        r.invariants_ok = false;
        note << "conflict graph cyclic; ";
    }
    if (cfg.engine.txn_limit > 0 && !cfg.engine.crash.switch_at &&
        cfg.engine.crash.nodes_at.empty()) {
        int64_t err = sim.conservation_error();
        if (err != 0) {
            r.invariants_ok = false;
            note << "conservation error " << err << "; ";
        }
    }
    r.audit_note = note.str();
    return r;
}

void csv_header(std::ostream& os) {
    os << "mode,policy,workload,layout,seed,nodes,workers,distributed_prob,hot_ratio,duration,"
          "txn_limit,attempted,committed,committed_hot,committed_cold,committed_warm,"
          "aborts_lock,aborts_constraint,unsupported,retries,constraint_refusals,throughput,"
          "avg_latency,max_latency,bk_lock,bk_remote,bk_switch,bk_exec,bk_commit,bk_backoff,"
          "single_pass,multi_pass,recirculations,switch_txns,dropped\n";
}

namespace {

const char* mode_name(RunMode m) {
    switch (m) {
    case RunMode::P4db: return "p4db";
    case RunMode::NoSwitch: return "no-switch";
    case RunMode::LmSwitch: return "lm-switch";
    }
    return "?";
}

const char* workload_name(WorkloadKind k) {
    switch (k) {
    case WorkloadKind::Ycsb: return "ycsb";
    case WorkloadKind::SmallBank: return "smallbank";
    case WorkloadKind::Tpcc: return "tpcc";
    }
    return "?";
}

double hot_ratio_of(const WorkloadSpec& w) {
    switch (w.kind) {
    case WorkloadKind::Ycsb: return w.ycsb.hot_access_prob;
    case WorkloadKind::SmallBank: return w.smallbank.hot_txn_prob;
    case WorkloadKind::Tpcc: return w.tpcc.hot_item_prob;
    }
    return 0;
}

} // namespace

void csv_row(std::ostream& os, const ExperimentConfig& cfg, const Metrics& m) {
    const EngineConfig& e = cfg.engine;
    os << mode_name(e.mode) << ',' << (e.policy == LockPolicy::NoWait ? "no-wait" : "wait-die")
       << ',' << workload_name(e.workload.kind) << ',' << cfg.layout_kind << ',' << e.seed << ','
       << e.workload.nodes << ',' << e.workers_per_node << ',' << std::fixed
       << std::setprecision(4) << e.workload.distributed_prob << ',' << hot_ratio_of(e.workload)
       << ',' << e.duration << ',' << e.txn_limit << ',' << m.attempted << ',' << m.committed
       << ',' << m.committed_hot << ',' << m.committed_cold << ',' << m.committed_warm << ','
       << m.aborts_lock << ',' << m.aborts_constraint << ',' << m.unsupported << ',' << m.retries
       << ',' << m.constraint_refusals << ',' << m.throughput_per_mtu() << ','
       << (m.latency_count ? m.latency_sum / Time(m.latency_count) : 0) << ',' << m.latency_max
       << ',' << m.buckets.lock_acquisition << ',' << m.buckets.remote_access << ','
       << m.buckets.switch_round << ',' << m.buckets.local_execute << ',' << m.buckets.commit
       << ',' << m.buckets.backoff << ',' << m.single_pass << ',' << m.multi_pass << ','
       << m.recirculations << ',' << m.switch_completed << ',' << m.dropped_messages << '\n';
}

size_t sweep(const std::map<std::string, std::string>& kv, std::ostream& csv, bool* all_ok) {
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    for (const auto& [k, v] : kv) {
        std::vector<std::string> vals;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) vals.push_back(trim(item));
        if (vals.empty()) vals.push_back("");
        axes.push_back({k, vals});
    }
    csv_header(csv);
    size_t rows = 0;
    std::vector<size_t> idx(axes.size(), 0);
    for (;;) {
        std::map<std::string, std::string> combo;
        for (size_t i = 0; i < axes.size(); i++) combo[axes[i].first] = axes[i].second[idx[i]];
        ExperimentConfig cfg = config_from_kv(combo);
        RunResult r = run_experiment(cfg);
        if (all_ok && !r.invariants_ok) *all_ok = false;
        csv_row(csv, cfg, r.metrics);
        rows++;
        size_t d = 0;
        while (d < axes.size() && ++idx[d] == axes[d].second.size()) idx[d++] = 0;
        if (d == axes.size()) break;
    }
    return rows;
}

CrashOutcome crash_test(const ExperimentConfig& cfg) {
    if (!cfg.engine.crash.switch_at && cfg.engine.crash.nodes_at.empty())
        throw ConfigError("crash-test config has no crash plan");
    LayoutPlan plan = build_layout_for(cfg);
    Simulation sim(cfg.engine, plan);
    sim.run();

    CrashOutcome out;
    out.ok = true;
    std::ostringstream rep;
    WorkloadGen meta(cfg.engine.workload, 0, 0);

    if (cfg.engine.crash.switch_at) {
        std::vector<const Wal*> wals;
        for (uint32_t n = 0; n < cfg.engine.workload.nodes; n++) wals.push_back(&sim.wal(int(n)));
        auto oracle = sim.switch_shadow_at_crash();
        try {
            SwitchRecovery rec = recover_switch(wals, plan, sim.hot_initial());
            if (!rec.ambiguous) {
                bool match = oracle && rec.state == *oracle;
                out.ok &= match;
                rep << "switch state: " << (match ? "exact match" : "MISMATCH") << "\n";
            } else {
                rep << "switch state: reconstructed with inferred in-flight order\n";
            }
            rep << rec.report;
        } catch (const std::runtime_error& e) {
            out.ok = false;
            rep << "switch recovery failed: " << e.what() << "\n";
        }
    }

    for (const auto& [n, t] : cfg.engine.crash.nodes_at) {
        NodeRecovery nr = recover_node(sim.wal(n));
        auto live = sim.node_store_at_crash(n);
        std::map<Key, Value> expected = live ? *live : std::map<Key, Value>{};
        // pre-committed local writes are redone even though the node died
        // before applying them
        for (const auto& r : sim.wal(n).records()) {
            if (r.kind != LogKind::ColdWrite) continue;
            auto dit = nr.dispositions.find(r.txn_id);
            if (dit != nr.dispositions.end() && dit->second == TxnDisposition::PreCommitted)
                expected[r.key] = r.value;
        }
        bool match = true;
        std::set<Key> all;
        for (const auto& [k, v] : expected) all.insert(k);
        for (const auto& [k, v] : nr.writes) all.insert(k);
        for (Key k : all) {
            Value want = expected.count(k) ? expected.at(k) : meta.initial_value(k);
            Value got = nr.writes.count(k) ? nr.writes.at(k) : meta.initial_value(k);
            if (want != got) match = false;
        }
        out.ok &= match;
        rep << "node " << n << " store: " << (match ? "exact match" : "MISMATCH") << "\n";
        rep << nr.report;
    }
    out.report = rep.str();
    return out;
}

} // namespace p4sim
