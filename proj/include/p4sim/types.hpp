#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace p4sim {

using Key = uint64_t;
using Value = int64_t;
using Time = int64_t;
using TxnId = uint64_t;
using Gid = uint64_t;

/// Operation kinds as issued by workloads. Hot operations are lowered to
/// switch instructions, cold operations run against the node store.
enum class OpKind : uint8_t {
    Read,      // result = value
    Write,     // exchange: value = operand, result = old value
    Add,       // fetch-add: value += operand, result = old value
    SubIfGeq,  // value -= operand iff value >= operand, sets flag
    AddIfFlag, // value += operand + accumulator iff flag set
};

inline bool op_is_write(OpKind k) { return k != OpKind::Read; }

struct Op {
    Key key = 0;
    OpKind kind = OpKind::Read;
    int64_t operand = 0;
    int dep = -1; // index of an earlier op this one depends on, or -1
};

struct Txn {
    TxnId id = 0;
    std::vector<Op> ops;
};

/// Seeded deterministic RNG (splitmix64 core). std:: distributions are
/// implementation-defined, so all sampling goes through this.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed = 0) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [0, n)
    uint64_t uniform(uint64_t n) { return n ? next() % n : 0; }
    // uniform in [lo, hi]
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform(static_cast<uint64_t>(hi - lo + 1)));
    }
    bool chance(double p) {
        return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0) < p;
    }
    Rng split() { return Rng(next() ^ 0xd1b54a32d192ed03ULL); }
};

} // namespace p4sim
