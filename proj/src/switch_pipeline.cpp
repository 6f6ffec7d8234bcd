#include "p4sim/switch_pipeline.hpp"

#include <algorithm>
#include <set>

namespace p4sim {

int64_t apply_instruction(const SwitchInstruction& ins, Value& v, int64_t& accumulator, bool& flag) {
    switch (ins.opcode) {
    case Opcode::Read:
        accumulator += v;
        return v;
    case Opcode::Write: {
        int64_t old = v;
        v = ins.operand;
        accumulator += old;
        return old;
    }
    case Opcode::AddRead: {
        int64_t old = v;
        v = old + ins.operand;
        return old;
    }
    case Opcode::ConstrainedWrite:
        if (ins.predicate == Predicate::ResultNonNegative) {
            if (ins.operand >= 0) { v = ins.operand; return 1; }
            return 0;
        }
        // GeqOperand: write the accumulator iff the stored value clears the bar
        if (v >= ins.operand) { v = accumulator; return 1; }
        return 0;
    case Opcode::SubIfGeq: {
        int64_t old = v;
        if (v >= ins.operand) {
            v -= ins.operand;
            flag = true;
        } else {
            flag = false;
        }
        return old;
    }
    case Opcode::AddIfFlag:
        if (flag) {
            v += ins.operand + accumulator;
            return v;
        }
        return v;
    case Opcode::Nop:
        return 0;
    }
    return 0;
}

bool batch_is_single_pass_legal(const std::vector<SwitchInstruction>& batch) {
    int last_stage = -1;
    std::set<std::pair<uint8_t, uint8_t>> used;
    for (const auto& ins : batch) {
        if (static_cast<int>(ins.stage) <= last_stage) return false;
        if (!used.insert({ins.stage, ins.array}).second) return false;
        last_stage = ins.stage;
    }
    return true;
}

SwitchPipeline::SwitchPipeline(SwitchConfig cfg) : cfg_(cfg) {
    if (cfg_.num_stages < 1) throw ConfigError("num_stages must be >= 1");
    if (cfg_.num_recirc_ports < 2) throw ConfigError("need at least 2 recirculation ports");
    regs_.assign(cfg_.num_stages,
                 std::vector<std::vector<Value>>(cfg_.arrays_per_stage,
                                                 std::vector<Value>(cfg_.slots_per_array, 0)));
    stages_.assign(cfg_.num_stages, std::nullopt);
    recirc_queues_.assign(cfg_.num_recirc_ports, {});
}

void SwitchPipeline::load_layout(const LayoutPlan& plan, const std::map<Key, Value>& initial) {
    for (const auto& [key, p] : plan.placement) {
        if (p.stage >= cfg_.num_stages || p.array >= cfg_.arrays_per_stage ||
            p.slot >= cfg_.slots_per_array)
            throw CapacityExceeded("placement out of range for key " + std::to_string(key));
    }
    for (const auto& [key, val] : initial) {
        (void)val;
        if (!plan.contains(key))
            throw UnknownKey("initial value for unplaced key " + std::to_string(key));
    }
    for (auto& stage : regs_)
        for (auto& arr : stage)
            std::fill(arr.begin(), arr.end(), 0);
    plan_ = plan;
    for (const auto& [key, val] : initial) {
        const auto& p = plan_.at(key);
        regs_[p.stage][p.array][p.slot] = val;
    }
}

void SwitchPipeline::validate(const SwitchTxnPacket& pkt) const {
    if (pkt.pass_plan.empty()) throw MalformedPacket("packet has no instruction batches");
    if (pkt.pass_plan.size() > 1 && !pkt.is_multipass)
        throw MalformedPacket("multi-batch packet not flagged multipass");
    for (const auto& batch : pkt.pass_plan) {
        if (!batch_is_single_pass_legal(batch))
            throw MalformedPacket("batch violates stage order or repeats a register");
        for (const auto& ins : batch) {
            if (ins.stage >= cfg_.num_stages || ins.array >= cfg_.arrays_per_stage ||
                ins.slot >= cfg_.slots_per_array)
                throw MalformedPacket("instruction register out of range");
            bool needs_pred = ins.opcode == Opcode::ConstrainedWrite;
            bool has_pred = ins.predicate != Predicate::None;
            if (needs_pred != has_pred)
                throw MalformedPacket("opcode/predicate combination not allowed");
        }
    }
}

void SwitchPipeline::submit(SwitchTxnPacket pkt) {
    validate(pkt);
    pkt.pass_index = 0;
    pkt.holds_lock = false;
    pkt.gid.reset();
    pkt.results.clear();
    admission_queue_.push_back(std::move(pkt));
}

bool SwitchPipeline::try_acquire_lock(LockRequest req) {
    if (!lock_.compatible(req)) return false;
    lock_.add(req);
    return true;
}

void SwitchPipeline::release_lock(LockRequest req) { lock_.sub(req); }

uint32_t SwitchPipeline::route_recirculation(SwitchTxnPacket&& pkt) {
    uint32_t port;
    if (pkt.holds_lock) {
        port = 0;
    } else {
        uint32_t n_wait = cfg_.num_recirc_ports - 1;
        port = 1 + (recirc_rr_out_ % n_wait);
        recirc_rr_out_++;
    }
    if (recirc_queues_[port].size() >= cfg_.recirc_queue_capacity)
        throw QueueOverflow("recirculation port " + std::to_string(port) + " full");
    recirc_count_++;
    recirc_queues_[port].push_back(std::move(pkt));
    return port;
}

std::optional<SwitchTxnPacket> SwitchPipeline::pick_admission_candidate() {
    // 1. lock holders on the fast port
    if (!recirc_queues_[0].empty()) {
        SwitchTxnPacket p = std::move(recirc_queues_[0].front());
        recirc_queues_[0].pop_front();
        return p;
    }
    // 2. long-waiting recirculated packets preempt new arrivals
    uint32_t n_wait = cfg_.num_recirc_ports - 1;
    for (uint32_t i = 0; i < n_wait; i++) {
        uint32_t port = 1 + ((recirc_rr_in_ + i) % n_wait);
        if (!recirc_queues_[port].empty() &&
            recirc_queues_[port].front().nb_recircs >= cfg_.recirc_priority_threshold) {
            SwitchTxnPacket p = std::move(recirc_queues_[port].front());
            recirc_queues_[port].pop_front();
            recirc_rr_in_ = port; // continue scan after this port next time
            return p;
        }
    }
    // 3. new arrivals
    if (!admission_queue_.empty()) {
        SwitchTxnPacket p = std::move(admission_queue_.front());
        admission_queue_.pop_front();
        return p;
    }
    // 4. waiting recirculated packets, round-robin over ports
    for (uint32_t i = 0; i < n_wait; i++) {
        uint32_t port = 1 + ((recirc_rr_in_ + i) % n_wait);
        if (!recirc_queues_[port].empty()) {
            SwitchTxnPacket p = std::move(recirc_queues_[port].front());
            recirc_queues_[port].pop_front();
            recirc_rr_in_ = port;
            return p;
        }
    }
    return std::nullopt;
}

void SwitchPipeline::execute_stage(SwitchTxnPacket& pkt, uint32_t stage) {
    auto& batch = pkt.pass_plan[pkt.pass_index];
    for (const auto& ins : batch) {
        if (ins.stage != stage) continue;
        Value& v = regs_[ins.stage][ins.array][ins.slot];
        pkt.results.push_back(apply_instruction(ins, v, pkt.accumulator, pkt.flag));
    }
}

std::vector<CompletedPacket> SwitchPipeline::tick() {
    cycle_++;
    std::vector<CompletedPacket> done;

    // Admission: one decision per cycle, pipeline-lock checked in stage 0.
    if (!stages_[0].has_value()) {
        if (auto cand = pick_admission_candidate()) {
            SwitchTxnPacket p = std::move(*cand);
            bool admit;
            if (p.holds_lock) {
                admit = true;
                // final pass releases the pipeline-lock directly at admission
                if (p.pass_index + 1 == p.pass_plan.size()) {
                    lock_.sub(p.locks);
                    p.holds_lock = false;
                }
            } else if (!lock_.compatible(p.locks)) {
                admit = false;
            } else {
                admit = true;
                if (p.is_multipass && p.pass_plan.size() > 1) {
                    lock_.add(p.locks);
                    p.holds_lock = true;
                } else if (p.is_multipass && p.pass_plan.size() == 1) {
                    // degenerate multipass: single batch, no lock needed
                }
            }
            if (admit) {
                if (!p.gid.has_value()) p.gid = next_gid_++;
                stages_[0] = std::move(p);
            } else {
                p.nb_recircs++;
                route_recirculation(std::move(p));
            }
        }
    }

    // Advance from the back; each in-flight packet executes its current
    // stage's instructions, the last stage exits.
    for (int i = static_cast<int>(cfg_.num_stages) - 1; i >= 0; i--) {
        if (!stages_[i].has_value()) continue;
        SwitchTxnPacket pkt = std::move(*stages_[i]);
        stages_[i].reset();
        execute_stage(pkt, static_cast<uint32_t>(i));
        if (static_cast<uint32_t>(i) + 1 < cfg_.num_stages) {
            stages_[i + 1] = std::move(pkt);
        } else if (pkt.pass_index + 1 < pkt.pass_plan.size()) {
            pkt.pass_index++;
            pkt.nb_recircs++;
            route_recirculation(std::move(pkt));
        } else {
            if (pkt.is_multipass) multipass_completed_++;
            completed_count_++;
            done.push_back(CompletedPacket{pkt.txn_id, *pkt.gid, std::move(pkt.results),
                                           pkt.nb_recircs, cycle_});
        }
    }
    return done;
}

bool SwitchPipeline::idle() const {
    if (!admission_queue_.empty()) return false;
    for (const auto& q : recirc_queues_)
        if (!q.empty()) return false;
    for (const auto& s : stages_)
        if (s.has_value()) return false;
    return true;
}

RegisterSnapshot SwitchPipeline::snapshot_registers() const {
    RegisterSnapshot snap;
    snap.consistent = idle();
    for (const auto& [key, p] : plan_.placement)
        snap.values[key] = regs_[p.stage][p.array][p.slot];
    return snap;
}

Value SwitchPipeline::register_value(uint32_t stage, uint32_t array, uint32_t slot) const {
    return regs_.at(stage).at(array).at(slot);
}

} // namespace p4sim
