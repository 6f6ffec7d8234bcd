#include "p4sim/switch_pipeline.hpp"

namespace p4sim {

namespace {

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
    for (size_t i = 0; i < sizeof(T); i++)
        out.push_back(static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::vector<uint8_t>& buf, size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw MalformedPacket("truncated packet buffer");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); i++)
        v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
}

} // namespace

std::vector<uint8_t> encode_packet(const SwitchTxnPacket& pkt) {
    std::vector<uint8_t> out;
    put_le<uint64_t>(out, pkt.txn_id);
    put_le<uint8_t>(out, pkt.is_multipass ? 1 : 0);
    uint16_t locks = static_cast<uint16_t>(pkt.locks.left | (pkt.locks.right << 8));
    put_le<uint16_t>(out, locks);
    put_le<uint16_t>(out, pkt.nb_recircs);
    put_le<uint8_t>(out, static_cast<uint8_t>(pkt.pass_plan.size()));
    for (const auto& batch : pkt.pass_plan) {
        put_le<uint16_t>(out, static_cast<uint16_t>(batch.size()));
        for (const auto& ins : batch) {
            put_le<uint8_t>(out, ins.stage);
            put_le<uint8_t>(out, ins.array);
            put_le<uint32_t>(out, ins.slot);
            put_le<uint8_t>(out, static_cast<uint8_t>(ins.opcode));
            put_le<int64_t>(out, ins.operand);
            put_le<uint8_t>(out, static_cast<uint8_t>(ins.predicate));
        }
    }
    return out;
}

SwitchTxnPacket decode_packet(const std::vector<uint8_t>& buf) {
    size_t pos = 0;
    SwitchTxnPacket pkt;
    pkt.txn_id = get_le<uint64_t>(buf, pos);
    pkt.is_multipass = get_le<uint8_t>(buf, pos) != 0;
    uint16_t locks = get_le<uint16_t>(buf, pos);
    pkt.locks.left = static_cast<uint8_t>(locks & 0xff);
    pkt.locks.right = static_cast<uint8_t>(locks >> 8);
    pkt.nb_recircs = get_le<uint16_t>(buf, pos);
    uint8_t batches = get_le<uint8_t>(buf, pos);
    pkt.pass_plan.resize(batches);
    for (auto& batch : pkt.pass_plan) {
        uint16_t n = get_le<uint16_t>(buf, pos);
        batch.resize(n);
        for (auto& ins : batch) {
            ins.stage = get_le<uint8_t>(buf, pos);
            ins.array = get_le<uint8_t>(buf, pos);
            ins.slot = get_le<uint32_t>(buf, pos);
            ins.opcode = static_cast<Opcode>(get_le<uint8_t>(buf, pos));
            ins.operand = get_le<int64_t>(buf, pos);
            ins.predicate = static_cast<Predicate>(get_le<uint8_t>(buf, pos));
        }
    }
    if (pos != buf.size()) throw MalformedPacket("trailing bytes in packet buffer");
    return pkt;
}

} // namespace p4sim
