#include "p4sim/event_loop.hpp"

#include <map>

namespace p4sim {

void EventLoop::schedule_at(Time at, EventKind kind, Fn fn) {
    queue_.push(Ev{at, next_seq_++, kind, std::move(fn)});
}

uint64_t EventLoop::run_until(Time limit) {
    uint64_t n = 0;
    while (!queue_.empty() && !stopped_ && queue_.top().t <= limit) {
        Ev ev = queue_.top();
        queue_.pop();
        now_ = ev.t;
        if (on_event) on_event(ev.t, ev.kind);
        ev.fn();
        n++;
    }
    if (now_ < limit && !stopped_) now_ = limit;
    return n;
}

uint64_t EventLoop::run_until_quiescent() {
    uint64_t n = 0;
    while (!queue_.empty() && !stopped_) {
        Ev ev = queue_.top();
        queue_.pop();
        now_ = ev.t;
        if (on_event) on_event(ev.t, ev.kind);
        ev.fn();
        n++;
    }
    return n;
}

Time Network::latency(int from, int to) const {
    if (from == kSwitchEndpoint || to == kSwitchEndpoint) return lat_.node_to_switch_oneway();
    return lat_.node_oneway();
}

void Network::send(int from, int to, EventLoop::Fn deliver) {
    if (crashed_.count(to) || crashed_.count(from)) {
        dropped_++;
        return;
    }
    // a message in flight toward a node that crashes before it arrives is
    // lost with the node, so re-check the crash set at delivery time too
    auto guarded = [this, to, fn = std::move(deliver)] {
        if (crashed_.count(to)) {
            dropped_++;
            return;
        }
        fn();
    };
    EventLoop::Fn deliver_fn = std::move(guarded);
    Time delay = latency(from, to);
    if (lat_.jitter_bound > 0) {
        // clamp so jitter cannot reorder messages within a channel
        Time t = loop_.now() + delay +
                 static_cast<Time>(jitter_rng_.uniform(static_cast<uint64_t>(lat_.jitter_bound)));
        Time& prev = last_delivery_[{from, to}];
        if (t < prev) t = prev;
        prev = t;
        loop_.schedule_at(t, EventKind::Deliver, std::move(deliver_fn));
        return;
    }
    loop_.schedule_in(delay, EventKind::Deliver, std::move(deliver_fn));
}

void Network::multicast(int from, const std::vector<int>& targets,
                        std::function<void(int)> deliver) {
    for (int t : targets) {
        auto fn = [deliver, t] { deliver(t); };
        send(from, t, fn);
    }
}

} // namespace p4sim
