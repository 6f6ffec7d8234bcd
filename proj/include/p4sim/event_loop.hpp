#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "p4sim/types.hpp"

namespace p4sim {

enum class EventKind : uint8_t { Deliver, SwitchTick, Timer };

/// One-way latencies: the switch sits at a quarter round-trip, so a switch
/// request + reply costs half a node-to-node round trip.
struct LatencyModel {
    Time node_to_node_rtt = 2000;
    Time jitter_bound = 0; // optional seeded bounded noise
    uint64_t jitter_seed = 0;

    Time node_oneway() const { return node_to_node_rtt / 2; }
    Time node_to_switch_oneway() const { return node_to_node_rtt / 4; }
};

/// Deterministic discrete-event loop. Events run in nondecreasing time,
/// ties broken by insertion sequence.
class EventLoop {
  public:
    using Fn = std::function<void()>;

    void schedule_at(Time at, EventKind kind, Fn fn);
    void schedule_in(Time delay, EventKind kind, Fn fn) { schedule_at(now_ + delay, kind, fn); }

    Time now() const { return now_; }
    bool empty() const { return queue_.empty(); }

    uint64_t run_until(Time limit);   // processes events with t <= limit
    uint64_t run_until_quiescent();   // processes everything

    void stop() { stopped_ = true; }
    bool stopped() const { return stopped_; }

    // trace hook for determinism checks and debug dumps
    std::function<void(Time, EventKind)> on_event;

  private:
    struct Ev {
        Time t;
        uint64_t seq;
        EventKind kind;
        Fn fn;
        bool operator>(const Ev& o) const {
            if (t != o.t) return t > o.t;
            return seq > o.seq;
        }
    };
    std::priority_queue<Ev, std::vector<Ev>, std::greater<>> queue_;
    Time now_ = 0;
    uint64_t next_seq_ = 0;
    bool stopped_ = false;
};

constexpr int kSwitchEndpoint = -1;

/// Message transport over the event loop. Destination crash drops the
/// message silently; FIFO per ordered endpoint pair.
class Network {
  public:
    Network(EventLoop& loop, LatencyModel lat) : loop_(loop), lat_(lat), jitter_rng_(lat.jitter_seed) {}

    void send(int from, int to, EventLoop::Fn deliver);
    void multicast(int from, const std::vector<int>& targets,
                   std::function<void(int)> deliver);

    void crash(int endpoint) { crashed_.insert(endpoint); }
    bool is_crashed(int endpoint) const { return crashed_.count(endpoint) != 0; }

    Time latency(int from, int to) const;
    const LatencyModel& model() const { return lat_; }
    uint64_t dropped_count() const { return dropped_; }

  private:
    EventLoop& loop_;
    LatencyModel lat_;
    Rng jitter_rng_;
    std::set<int> crashed_;
    std::map<std::pair<int, int>, Time> last_delivery_;
    uint64_t dropped_ = 0;
};

} // namespace p4sim
