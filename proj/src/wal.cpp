#include "p4sim/wal.hpp"

#include <istream>
#include <ostream>

#include "p4sim/errors.hpp"

namespace p4sim {

namespace {

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
    for (size_t i = 0; i < sizeof(T); i++)
        out.push_back(static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::vector<uint8_t>& buf, size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw InconsistentLogs("truncated log record");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); i++)
        v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
}

const char* kind_name(LogKind k) {
    switch (k) {
    case LogKind::ColdWrite: return "cold_write";
    case LogKind::SwitchIntent: return "switch_intent";
    case LogKind::SwitchResult: return "switch_result";
    case LogKind::Commit: return "commit";
    case LogKind::Abort: return "abort";
    }
    return "?";
}

} // namespace

uint64_t Wal::append(LogRecord rec) {
    rec.lsn = next_lsn_++;
    records_.push_back(std::move(rec));
    return records_.back().lsn;
}

void Wal::serialize(std::ostream& os) const {
    for (const auto& r : records_) {
        std::vector<uint8_t> body;
        put_le<uint64_t>(body, r.lsn);
        put_le<uint64_t>(body, r.txn_id);
        put_le<uint8_t>(body, static_cast<uint8_t>(r.kind));
        put_le<uint64_t>(body, r.key);
        put_le<int64_t>(body, r.value);
        put_le<uint64_t>(body, r.gid);
        put_le<int64_t>(body, r.acc0);
        put_le<uint8_t>(body, r.flag0 ? 1 : 0);
        put_le<uint32_t>(body, static_cast<uint32_t>(r.intent.size()));
        for (const auto& batch : r.intent) {
            put_le<uint32_t>(body, static_cast<uint32_t>(batch.size()));
            for (const auto& ins : batch) {
                put_le<uint8_t>(body, ins.stage);
                put_le<uint8_t>(body, ins.array);
                put_le<uint32_t>(body, ins.slot);
                put_le<uint8_t>(body, static_cast<uint8_t>(ins.opcode));
                put_le<int64_t>(body, ins.operand);
                put_le<uint8_t>(body, static_cast<uint8_t>(ins.predicate));
            }
        }
        put_le<uint32_t>(body, static_cast<uint32_t>(r.results.size()));
        for (int64_t v : r.results) put_le<int64_t>(body, v);

        std::vector<uint8_t> hdr;
        put_le<uint32_t>(hdr, static_cast<uint32_t>(body.size()));
        os.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
        os.write(reinterpret_cast<const char*>(body.data()), body.size());
    }
}

Wal Wal::deserialize(std::istream& is) {
    Wal wal;
    for (;;) {
        char lenbuf[4];
        if (!is.read(lenbuf, 4)) break;
        uint32_t len = 0;
        for (int i = 0; i < 4; i++)
            len |= static_cast<uint32_t>(static_cast<uint8_t>(lenbuf[i])) << (8 * i);
        std::vector<uint8_t> body(len);
        if (!is.read(reinterpret_cast<char*>(body.data()), len))
            throw InconsistentLogs("torn log record");
        size_t pos = 0;
        LogRecord r;
        r.lsn = get_le<uint64_t>(body, pos);
        r.txn_id = get_le<uint64_t>(body, pos);
        r.kind = static_cast<LogKind>(get_le<uint8_t>(body, pos));
        r.key = get_le<uint64_t>(body, pos);
        r.value = get_le<int64_t>(body, pos);
        r.gid = get_le<uint64_t>(body, pos);
        r.acc0 = get_le<int64_t>(body, pos);
        r.flag0 = get_le<uint8_t>(body, pos) != 0;
        uint32_t nbatches = get_le<uint32_t>(body, pos);
        r.intent.resize(nbatches);
        for (auto& batch : r.intent) {
            uint32_t n = get_le<uint32_t>(body, pos);
            batch.resize(n);
            for (auto& ins : batch) {
                ins.stage = get_le<uint8_t>(body, pos);
                ins.array = get_le<uint8_t>(body, pos);
                ins.slot = get_le<uint32_t>(body, pos);
                ins.opcode = static_cast<Opcode>(get_le<uint8_t>(body, pos));
                ins.operand = get_le<int64_t>(body, pos);
                ins.predicate = static_cast<Predicate>(get_le<uint8_t>(body, pos));
            }
        }
        uint32_t nres = get_le<uint32_t>(body, pos);
        r.results.resize(nres);
        for (auto& v : r.results) v = get_le<int64_t>(body, pos);
        wal.records_.push_back(std::move(r));
        wal.next_lsn_ = wal.records_.back().lsn + 1;
    }
    return wal;
}

void Wal::text_dump(std::ostream& os) const {
    for (const auto& r : records_) {
        os << r.lsn << ',' << r.txn_id << ',' << kind_name(r.kind) << ',';
        switch (r.kind) {
        case LogKind::ColdWrite:
            os << r.key << '=' << r.value;
            break;
        case LogKind::SwitchIntent:
            os << r.intent.size() << " batches " << [&] {
                size_t n = 0;
                for (const auto& b : r.intent) n += b.size();
                return n;
            }() << " ops";
            break;
        case LogKind::SwitchResult:
            os << "gid=" << r.gid << " results=" << r.results.size();
            break;
        default:
            break;
        }
        os << '\n';
    }
}

} // namespace p4sim
