#include "p4sim/layout.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace p4sim {

uint64_t AccessGraph::weighted_degree(Key k) const {
    uint64_t d = 0;
    for (const auto& [pair, e] : edges)
        if (pair.first == k || pair.second == k) d += e.total();
    return d;
}

std::vector<Key> detect_hot_set(const std::vector<Txn>& trace, size_t budget) {
    std::unordered_map<Key, uint64_t> freq;
    for (const auto& txn : trace)
        for (const auto& op : txn.ops) freq[op.key]++;
    std::vector<std::pair<Key, uint64_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (items.size() > budget) items.resize(budget);
    std::vector<Key> out;
    out.reserve(items.size());
    for (const auto& [k, f] : items) out.push_back(k);
    return out;
}

AccessGraph build_access_graph(const std::vector<Txn>& trace, const std::set<Key>& hot) {
    AccessGraph g;
    g.nodes.assign(hot.begin(), hot.end());
    for (const auto& txn : trace) {
        std::vector<int> hot_ops;
        for (int i = 0; i < static_cast<int>(txn.ops.size()); i++)
            if (hot.count(txn.ops[i].key)) hot_ops.push_back(i);
        // direction per unordered pair within this txn; dep wins over plain co-access
        std::map<std::pair<Key, Key>, int> dir; // 0 bidir, 1 first->second, -1 second->first
        for (size_t a = 0; a < hot_ops.size(); a++) {
            for (size_t b = a + 1; b < hot_ops.size(); b++) {
                const Op& oa = txn.ops[hot_ops[a]];
                const Op& ob = txn.ops[hot_ops[b]];
                if (oa.key == ob.key) continue;
                Key u = std::min(oa.key, ob.key), v = std::max(oa.key, ob.key);
                int d = 0;
                if (ob.dep == hot_ops[a]) d = (oa.key == u) ? 1 : -1;
                auto [it, inserted] = dir.insert({{u, v}, d});
                if (!inserted && d != 0) it->second = d;
            }
        }
        for (const auto& [pair, d] : dir) {
            auto& e = g.edges[pair];
            if (d > 0) e.forward++;
            else if (d < 0) e.backward++;
            else e.bidir++;
        }
    }
    return g;
}

uint64_t cut_weight(const AccessGraph& g, const std::map<Key, uint32_t>& part_of) {
    uint64_t w = 0;
    for (const auto& [pair, e] : g.edges)
        if (part_of.at(pair.first) != part_of.at(pair.second)) w += e.total();
    return w;
}

namespace {

// weight of node k against current members of a partition
uint64_t intra_weight(const AccessGraph& g, Key k, const std::vector<Key>& members,
                      Key exclude = ~0ULL) {
    uint64_t w = 0;
    for (Key m : members) {
        if (m == k || m == exclude) continue;
        if (const auto* e = g.find(k, m)) w += e->total();
    }
    return w;
}

} // namespace

Partitioning partition_maxcut(const AccessGraph& g, uint32_t num_partitions,
                              uint32_t max_partition_size, uint64_t seed) {
    (void)seed; // heuristic is deterministic; seed kept for interface stability
    if (g.nodes.size() > uint64_t(num_partitions) * max_partition_size)
        throw Infeasible("nodes exceed num_partitions * max_partition_size");

    std::vector<Key> order = g.nodes;
    std::vector<std::pair<uint64_t, Key>> deg;
    deg.reserve(order.size());
    for (Key k : order) deg.push_back({g.weighted_degree(k), k});
    std::sort(deg.begin(), deg.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    Partitioning out;
    out.partitions.assign(num_partitions, {});
    std::map<Key, uint32_t> part_of;

    for (const auto& [d, k] : deg) {
        (void)d;
        uint32_t best = num_partitions;
        uint64_t best_w = ~0ULL;
        for (uint32_t p = 0; p < num_partitions; p++) {
            if (out.partitions[p].size() >= max_partition_size) continue;
            uint64_t w = intra_weight(g, k, out.partitions[p]);
            if (w < best_w) { best_w = w; best = p; }
        }
        assert(best < num_partitions);
        out.partitions[best].push_back(k);
        part_of[k] = best;
    }

    // first-improvement local search: single-node moves, then pair swaps
    const int max_rounds = 200;
    for (int round = 0; round < max_rounds; round++) {
        bool improved = false;
        for (Key k : g.nodes) {
            uint32_t cur = part_of[k];
            uint64_t cur_intra = intra_weight(g, k, out.partitions[cur]);
            for (uint32_t p = 0; p < num_partitions && !improved; p++) {
                if (p == cur || out.partitions[p].size() >= max_partition_size) continue;
                uint64_t new_intra = intra_weight(g, k, out.partitions[p]);
                if (new_intra < cur_intra) {
                    auto& src = out.partitions[cur];
                    src.erase(std::find(src.begin(), src.end(), k));
                    out.partitions[p].push_back(k);
                    part_of[k] = p;
                    improved = true;
                }
            }
            if (improved) break;
        }
        if (improved) continue;
        for (size_t i = 0; i < g.nodes.size() && !improved; i++) {
            Key u = g.nodes[i];
            for (size_t j = i + 1; j < g.nodes.size() && !improved; j++) {
                Key v = g.nodes[j];
                uint32_t pu = part_of[u], pv = part_of[v];
                if (pu == pv) continue;
                uint64_t uv = g.find(u, v) ? g.find(u, v)->total() : 0;
                uint64_t before = intra_weight(g, u, out.partitions[pu]) +
                                  intra_weight(g, v, out.partitions[pv]);
                uint64_t after = intra_weight(g, u, out.partitions[pv], v) + uv +
                                 intra_weight(g, v, out.partitions[pu], u) + uv;
                if (after < before) {
                    auto& a = out.partitions[pu];
                    auto& b = out.partitions[pv];
                    a.erase(std::find(a.begin(), a.end(), u));
                    b.erase(std::find(b.begin(), b.end(), v));
                    a.push_back(v);
                    b.push_back(u);
                    part_of[u] = pv;
                    part_of[v] = pu;
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }
    for (auto& p : out.partitions) std::sort(p.begin(), p.end());
    return out;
}

namespace {

// directed aggregate weights between partitions plus contributing key edges
struct DirAgg {
    std::map<std::pair<uint32_t, uint32_t>, uint64_t> weight;
    std::map<std::pair<uint32_t, uint32_t>, std::vector<std::pair<Key, Key>>> key_edges;
    void add(uint32_t from, uint32_t to, uint64_t w, Key ku, Key kv) {
        if (w == 0) return;
        weight[{from, to}] += w;
        key_edges[{from, to}].push_back({ku, kv});
    }
};

bool find_cycle(const std::set<std::pair<uint32_t, uint32_t>>& edges, uint32_t n,
                std::vector<std::pair<uint32_t, uint32_t>>& cycle_out) {
    std::vector<std::vector<uint32_t>> adj(n);
    for (const auto& [a, b] : edges) adj[a].push_back(b);
    std::vector<int> state(n, 0);
    std::vector<uint32_t> stack;
    std::function<bool(uint32_t)> dfs = [&](uint32_t u) -> bool {
        state[u] = 1;
        stack.push_back(u);
        for (uint32_t v : adj[u]) {
            if (state[v] == 1) {
                auto it = std::find(stack.begin(), stack.end(), v);
                cycle_out.clear();
                for (auto p = it; p + 1 != stack.end(); ++p)
                    cycle_out.push_back({*p, *(p + 1)});
                cycle_out.push_back({stack.back(), v});
                return true;
            }
            if (state[v] == 0 && dfs(v)) return true;
        }
        stack.pop_back();
        state[u] = 2;
        return false;
    };
    for (uint32_t u = 0; u < n; u++)
        if (state[u] == 0 && dfs(u)) return true;
    return false;
}

} // namespace

Orientation orient_partitions(const AccessGraph& g, const Partitioning& parts) {
    uint32_t n = static_cast<uint32_t>(parts.partitions.size());
    std::map<Key, uint32_t> part_of;
    for (uint32_t p = 0; p < n; p++)
        for (Key k : parts.partitions[p]) part_of[k] = p;

    DirAgg agg;
    for (const auto& [pair, e] : g.edges) {
        auto iu = part_of.find(pair.first);
        auto iv = part_of.find(pair.second);
        if (iu == part_of.end() || iv == part_of.end()) continue;
        uint32_t pu = iu->second, pv = iv->second;
        if (pu == pv) continue;
        agg.add(pu, pv, e.forward, pair.first, pair.second);
        agg.add(pv, pu, e.backward, pair.second, pair.first);
    }

    Orientation out;
    std::set<std::pair<uint32_t, uint32_t>> kept;
    // prune the lighter direction of each conflicting partition pair
    for (uint32_t a = 0; a < n; a++) {
        for (uint32_t b = a + 1; b < n; b++) {
            uint64_t wab = agg.weight.count({a, b}) ? agg.weight[{a, b}] : 0;
            uint64_t wba = agg.weight.count({b, a}) ? agg.weight[{b, a}] : 0;
            if (wab == 0 && wba == 0) continue;
            if (wab > 0 && wba > 0) {
                auto drop = (wab >= wba) ? std::pair{b, a} : std::pair{a, b};
                for (const auto& ke : agg.key_edges[drop]) out.removed_edges.push_back(ke);
                if (drop == std::pair{b, a}) kept.insert({a, b});
                else kept.insert({b, a});
            } else if (wab > 0) {
                kept.insert({a, b});
            } else {
                kept.insert({b, a});
            }
        }
    }
    // break any remaining cycles by dropping the lightest aggregate edge
    std::vector<std::pair<uint32_t, uint32_t>> cycle;
    while (find_cycle(kept, n, cycle)) {
        auto lightest = cycle.front();
        uint64_t wmin = ~0ULL;
        for (const auto& e : cycle) {
            uint64_t w = agg.weight.count(e) ? agg.weight[e] : 0;
            if (w < wmin) { wmin = w; lightest = e; }
        }
        kept.erase(lightest);
        for (const auto& ke : agg.key_edges[lightest]) out.removed_edges.push_back(ke);
    }
    // Kahn topological order, ties by partition id
    std::vector<uint32_t> indeg(n, 0);
    for (const auto& [a, b] : kept) { (void)a; indeg[b]++; }
    std::set<uint32_t> ready;
    for (uint32_t p = 0; p < n; p++)
        if (indeg[p] == 0) ready.insert(p);
    while (!ready.empty()) {
        uint32_t p = *ready.begin();
        ready.erase(ready.begin());
        out.order.push_back(p);
        for (const auto& [a, b] : kept)
            if (a == p && --indeg[b] == 0) ready.insert(b);
    }
    assert(out.order.size() == n);
    out.kept_partition_edges = std::move(kept);
    return out;
}

LayoutPlan compile_layout(const AccessGraph& g, const Partitioning& parts,
                          const Orientation& orient, const SwitchConfig& cfg) {
    (void)g;
    LayoutPlan plan;
    std::vector<uint32_t> nonempty;
    for (uint32_t p : orient.order)
        if (!parts.partitions[p].empty()) nonempty.push_back(p);
    if (nonempty.size() > uint64_t(cfg.num_stages) * cfg.arrays_per_stage)
        throw CapacityExceeded("more partitions than stage/array pairs");
    for (uint32_t p : nonempty)
        if (parts.partitions[p].size() > cfg.slots_per_array)
            throw CapacityExceeded("partition larger than a register array");

    auto place = [&](uint32_t pid, uint32_t stage, uint32_t array) {
        uint32_t slot = 0;
        for (Key k : parts.partitions[pid]) {
            plan.placement[k] = Placement{stage, array, slot++};
            plan.partition_of[k] = pid;
        }
        plan.stage_of_partition[pid] = stage;
    };

    if (nonempty.size() <= cfg.num_stages) {
        for (uint32_t i = 0; i < nonempty.size(); i++) place(nonempty[i], i, 0);
        return plan;
    }
    // pack multiple partitions per stage; co-staged partitions must have no
    // retained directed edge between them
    uint32_t stage = 0, array = 0;
    std::vector<uint32_t> in_stage;
    for (uint32_t pid : nonempty) {
        bool conflict = false;
        for (uint32_t q : in_stage)
            if (orient.kept_partition_edges.count({q, pid}) ||
                orient.kept_partition_edges.count({pid, q}))
                conflict = true;
        if (array >= cfg.arrays_per_stage || conflict) {
            stage++;
            array = 0;
            in_stage.clear();
        }
        if (stage >= cfg.num_stages) throw CapacityExceeded("partitions do not fit stages");
        place(pid, stage, array++);
        in_stage.push_back(pid);
    }
    return plan;
}

LayoutPlan random_layout(const std::vector<Key>& keys, const SwitchConfig& cfg, uint64_t seed) {
    if (keys.size() > cfg.total_slots()) throw CapacityExceeded("more keys than slots");
    Rng rng(seed);
    std::vector<Key> shuffled = keys;
    for (size_t i = shuffled.size(); i > 1; i--)
        std::swap(shuffled[i - 1], shuffled[rng.uniform(i)]);
    LayoutPlan plan;
    std::vector<std::vector<uint32_t>> next_slot(cfg.num_stages,
                                                 std::vector<uint32_t>(cfg.arrays_per_stage, 0));
    for (Key k : shuffled) {
        for (;;) {
            uint32_t s = static_cast<uint32_t>(rng.uniform(cfg.num_stages));
            uint32_t a = static_cast<uint32_t>(rng.uniform(cfg.arrays_per_stage));
            if (next_slot[s][a] < cfg.slots_per_array) {
                plan.placement[k] = Placement{s, a, next_slot[s][a]++};
                plan.partition_of[k] = s * cfg.arrays_per_stage + a;
                break;
            }
        }
    }
    return plan;
}

PassClassification classify_transaction(const std::vector<Op>& ops, const LayoutPlan& plan) {
    PassClassification out;
    std::vector<int> batch;
    std::set<std::pair<uint32_t, uint32_t>> used;
    int last_stage = -1;
    for (int i = 0; i < static_cast<int>(ops.size()); i++) {
        const Placement& p = plan.at(ops[i].key);
        bool fits = static_cast<int>(p.stage) > last_stage && !used.count({p.stage, p.array});
        if (!fits && !batch.empty()) {
            out.batches.push_back(batch);
            batch.clear();
            used.clear();
            last_stage = -1;
        }
        batch.push_back(i);
        used.insert({p.stage, p.array});
        last_stage = static_cast<int>(p.stage);
    }
    if (!batch.empty()) out.batches.push_back(batch);
    out.pass_count = static_cast<uint32_t>(out.batches.size());
    out.kind = out.pass_count <= 1 ? PassKind::SinglePass : PassKind::MultiPass;
    return out;
}

std::vector<int> order_ops_for_plan(const std::vector<Op>& ops, const LayoutPlan& plan) {
    int n = static_cast<int>(ops.size());
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> succ(n);
    for (int i = 0; i < n; i++) {
        if (ops[i].dep >= 0) {
            succ[ops[i].dep].push_back(i);
            indeg[i]++;
        }
    }
    auto rank = [&](int i) {
        const Placement& p = plan.at(ops[i].key);
        return std::tuple{p.stage, p.array, p.slot, i};
    };
    std::vector<int> ready, out;
    for (int i = 0; i < n; i++)
        if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
        auto it = std::min_element(ready.begin(), ready.end(),
                                   [&](int a, int b) { return rank(a) < rank(b); });
        int i = *it;
        ready.erase(it);
        out.push_back(i);
        for (int s : succ[i])
            if (--indeg[s] == 0) ready.push_back(s);
    }
    return out;
}

namespace {

char op_letter(OpKind k) {
    switch (k) {
    case OpKind::Read: return 'r';
    case OpKind::Write: return 'w';
    case OpKind::Add: return 'a';
    case OpKind::SubIfGeq: return 's';
    case OpKind::AddIfFlag: return 'f';
    }
    return '?';
}

OpKind letter_op(char c) {
    switch (c) {
    case 'r': return OpKind::Read;
    case 'w': return OpKind::Write;
    case 'a': return OpKind::Add;
    case 's': return OpKind::SubIfGeq;
    case 'f': return OpKind::AddIfFlag;
    }
    throw ConfigError(std::string("bad op letter in trace: ") + c);
}

} // namespace

void write_trace(std::ostream& os, const std::vector<Txn>& trace) {
    for (const auto& txn : trace) {
        os << txn.id;
        for (const auto& op : txn.ops) {
            os << ' ' << op_letter(op.kind) << ' ' << op.key;
            if (op.dep >= 0) os << ' ' << txn.ops[op.dep].key;
        }
        os << '\n';
    }
}

std::vector<Txn> read_trace(std::istream& is) {
    std::vector<Txn> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Txn txn;
        ls >> txn.id;
        std::string tok;
        while (ls >> tok) {
            Op op;
            op.kind = letter_op(tok[0]);
            ls >> op.key;
            // optional dep_key: numeric lookahead
            std::streampos mark = ls.tellg();
            std::string maybe;
            if (ls >> maybe) {
                if (!maybe.empty() && (isdigit(maybe[0]))) {
                    Key dep_key = std::stoull(maybe);
                    for (int i = static_cast<int>(txn.ops.size()) - 1; i >= 0; i--)
                        if (txn.ops[i].key == dep_key) { op.dep = i; break; }
                } else {
                    ls.clear();
                    ls.seekg(mark);
                }
            }
            txn.ops.push_back(op);
        }
        out.push_back(std::move(txn));
    }
    return out;
}

void write_layout_csv(std::ostream& os, const LayoutPlan& plan) {
    os << "key,stage,array,slot\n";
    for (const auto& [k, p] : plan.placement)
        os << k << ',' << p.stage << ',' << p.array << ',' << p.slot << '\n';
}

LayoutPlan read_layout_csv(std::istream& is) {
    LayoutPlan plan;
    std::string line;
    std::getline(is, line); // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        Key k;
        Placement p;
        ls >> k >> p.stage >> p.array >> p.slot;
        plan.placement[k] = p;
    }
    return plan;
}

} // namespace p4sim
