#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "p4sim/errors.hpp"
#include "p4sim/types.hpp"

namespace p4sim {

enum class Opcode : uint8_t {
    Read = 0,
    Write = 1,            // exchange: returns old value
    AddRead = 2,          // fetch-add: returns old value
    ConstrainedWrite = 3, // write iff predicate holds
    SubIfGeq = 4,         // subtract operand iff value >= operand, sets flag
    AddIfFlag = 5,        // add operand + accumulator iff flag set
    Nop = 6,
};

enum class Predicate : uint8_t {
    None = 0,
    ResultNonNegative = 1,
    GeqOperand = 2,
};

struct SwitchInstruction {
    uint8_t stage = 0;
    uint8_t array = 0;
    uint32_t slot = 0;
    Opcode opcode = Opcode::Nop;
    int64_t operand = 0;
    Predicate predicate = Predicate::None;
};

enum class SwitchLockMode : uint8_t { SinglePipelineLock, TwoBitLock };

struct SwitchConfig {
    uint32_t num_stages = 12;
    uint32_t arrays_per_stage = 2;
    uint32_t slots_per_array = 65536;
    uint32_t num_recirc_ports = 3; // port 0 is the fast (lock-holder) port
    SwitchLockMode lock_mode = SwitchLockMode::TwoBitLock;
    uint32_t recirc_priority_threshold = 8;
    uint32_t recirc_queue_capacity = 4096;

    uint64_t total_slots() const {
        return uint64_t(num_stages) * arrays_per_stage * slots_per_array;
    }
    // calibration matching a full hardware pipeline (>= 820K 8-byte slots)
    static SwitchConfig hardware_scale() {
        SwitchConfig c;
        c.num_stages = 12;
        c.arrays_per_stage = 2;
        c.slots_per_array = 35000;
        return c; // 840,000 slots
    }
};

// Lock request carried in the packet header. With TwoBitLock left/right are
// independent locks; SinglePipelineLock uses left only. For single-pass
// packets the request names the locks that must be *free* for admission,
// for multi-pass packets the locks acquired on the first pass and released
// at admission of the final pass.
struct LockRequest {
    uint8_t left = 0;
    uint8_t right = 0;
};

struct LockState {
    int left = 0;
    int right = 0;
    bool compatible(LockRequest r) const {
        return (r.left + left) != 2 && (r.right + right) != 2;
    }
    void add(LockRequest r) { left += r.left; right += r.right; }
    void sub(LockRequest r) { left -= r.left; right -= r.right; }
};

struct SwitchTxnPacket {
    TxnId txn_id = 0;
    bool is_multipass = false;
    LockRequest locks;
    uint16_t nb_recircs = 0;
    std::vector<std::vector<SwitchInstruction>> pass_plan;
    int64_t accumulator = 0;
    bool flag = true;
    std::optional<Gid> gid;
    std::vector<int64_t> results;

    // execution-side state, not part of the wire format
    uint32_t pass_index = 0;
    bool holds_lock = false;

    size_t total_instructions() const {
        size_t n = 0;
        for (const auto& b : pass_plan) n += b.size();
        return n;
    }
};

struct CompletedPacket {
    TxnId txn_id = 0;
    Gid gid = 0;
    std::vector<int64_t> results;
    uint16_t nb_recircs = 0;
    uint64_t completion_cycle = 0;
};

struct Placement {
    uint32_t stage = 0;
    uint32_t array = 0;
    uint32_t slot = 0;
    auto operator<=>(const Placement&) const = default;
};

struct LayoutPlan {
    std::map<Key, Placement> placement;
    std::map<Key, uint32_t> partition_of;
    std::map<uint32_t, uint32_t> stage_of_partition;

    const Placement& at(Key k) const {
        auto it = placement.find(k);
        if (it == placement.end()) throw UnknownKey("key not in layout plan: " + std::to_string(k));
        return it->second;
    }
    bool contains(Key k) const { return placement.count(k) != 0; }
};

struct RegisterSnapshot {
    std::map<Key, Value> values;
    bool consistent = true; // false if taken while packets were in flight
};

/// Applies one instruction to a value, mirroring the per-stage ALU. Shared
/// by the pipeline, the recovery replayer and packet builders.
int64_t apply_instruction(const SwitchInstruction& ins, Value& v, int64_t& accumulator, bool& flag);

// Batch legality: strictly increasing stages, no repeated (stage, array).
bool batch_is_single_pass_legal(const std::vector<SwitchInstruction>& batch);

/// Cycle-driven model of a PISA-style pipeline storing hot tuples in
/// per-stage register arrays. Single-threaded; callers serialize access.
class SwitchPipeline {
  public:
    explicit SwitchPipeline(SwitchConfig cfg);

    void load_layout(const LayoutPlan& plan, const std::map<Key, Value>& initial);
    void submit(SwitchTxnPacket pkt); // throws MalformedPacket
    std::vector<CompletedPacket> tick();
    RegisterSnapshot snapshot_registers() const;

    // Listing-1 grant function; mutates lock state on grant.
    bool try_acquire_lock(LockRequest req);
    void release_lock(LockRequest req);
    LockState lock_state() const { return lock_; }

    uint32_t route_recirculation(SwitchTxnPacket&& pkt); // returns port index

    bool idle() const;
    uint64_t cycle() const { return cycle_; }
    Gid next_gid() const { return next_gid_; }
    const SwitchConfig& config() const { return cfg_; }
    Value register_value(uint32_t stage, uint32_t array, uint32_t slot) const;

    uint64_t completed_count() const { return completed_count_; }
    uint64_t recirculation_count() const { return recirc_count_; }
    uint64_t multipass_completed() const { return multipass_completed_; }

  private:
    void validate(const SwitchTxnPacket& pkt) const;
    void execute_stage(SwitchTxnPacket& pkt, uint32_t stage);
    std::optional<SwitchTxnPacket> pick_admission_candidate();

    SwitchConfig cfg_;
    std::vector<std::vector<std::vector<Value>>> regs_; // [stage][array][slot]
    std::vector<std::optional<SwitchTxnPacket>> stages_;
    std::deque<SwitchTxnPacket> admission_queue_;
    std::vector<std::deque<SwitchTxnPacket>> recirc_queues_;
    uint32_t recirc_rr_out_ = 0; // round-robin cursor for routing waiters
    uint32_t recirc_rr_in_ = 0;  // round-robin cursor for draining waiters
    LockState lock_;
    Gid next_gid_ = 0;
    uint64_t cycle_ = 0;
    LayoutPlan plan_;
    uint64_t completed_count_ = 0;
    uint64_t recirc_count_ = 0;
    uint64_t multipass_completed_ = 0;
};

// Binary-stable packet codec for trace files (little-endian).
std::vector<uint8_t> encode_packet(const SwitchTxnPacket& pkt);
SwitchTxnPacket decode_packet(const std::vector<uint8_t>& buf);

} // namespace p4sim
