#pragma once

#include <stdexcept>
#include <string>

namespace p4sim {

struct CapacityExceeded : std::runtime_error {
    explicit CapacityExceeded(const std::string& m) : std::runtime_error(m) {}
};

struct MalformedPacket : std::runtime_error {
    explicit MalformedPacket(const std::string& m) : std::runtime_error(m) {}
};

struct QueueOverflow : std::runtime_error {
    explicit QueueOverflow(const std::string& m) : std::runtime_error(m) {}
};

struct Infeasible : std::runtime_error {
    explicit Infeasible(const std::string& m) : std::runtime_error(m) {}
};

struct UnknownKey : std::runtime_error {
    explicit UnknownKey(const std::string& m) : std::runtime_error(m) {}
};

struct InconsistentLogs : std::runtime_error {
    explicit InconsistentLogs(const std::string& m) : std::runtime_error(m) {}
};

struct NoConsistentOrder : std::runtime_error {
    explicit NoConsistentOrder(const std::string& m) : std::runtime_error(m) {}
};

struct UnsupportedShape : std::runtime_error {
    explicit UnsupportedShape(const std::string& m) : std::runtime_error(m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

} // namespace p4sim
