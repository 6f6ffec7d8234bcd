#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "p4sim/switch_pipeline.hpp"
#include "p4sim/types.hpp"

namespace p4sim {

enum class LogKind : uint8_t {
    ColdWrite = 0,
    SwitchIntent = 1,
    SwitchResult = 2,
    Commit = 3,
    Abort = 4,
};

struct LogRecord {
    uint64_t lsn = 0;
    TxnId txn_id = 0;
    LogKind kind = LogKind::ColdWrite;

    // ColdWrite
    Key key = 0;
    Value value = 0;

    // SwitchIntent: the intended switch operations plus the packet's initial
    // accumulator/flag (carried in the packet, needed for exact replay)
    std::vector<std::vector<SwitchInstruction>> intent;
    int64_t acc0 = 0;
    bool flag0 = true;

    // SwitchResult
    Gid gid = 0;
    std::vector<int64_t> results;
};

/// Per-node write-ahead log. In-memory record list with a binary
/// (length-prefixed, little-endian) persistence format and a text dump.
class Wal {
  public:
    uint64_t append(LogRecord rec); // returns assigned lsn
    const std::vector<LogRecord>& records() const { return records_; }

    void serialize(std::ostream& os) const;
    static Wal deserialize(std::istream& is);
    void text_dump(std::ostream& os) const;

  private:
    std::vector<LogRecord> records_;
    uint64_t next_lsn_ = 0;
};

} // namespace p4sim
