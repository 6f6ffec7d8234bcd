#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "p4sim/event_loop.hpp"

using namespace p4sim;

TEST_CASE("events run in time order, ties broken by insertion sequence") {
    EventLoop loop;
    std::vector<int> order;
    loop.schedule_at(10, EventKind::Timer, [&] { order.push_back(1); });
    loop.schedule_at(5, EventKind::Timer, [&] { order.push_back(2); });
    loop.schedule_at(10, EventKind::Timer, [&] { order.push_back(3); });
    loop.run_until_quiescent();
    CHECK(order == std::vector<int>{2, 1, 3});
    CHECK(loop.now() == 10);
}

TEST_CASE("run_until stops at the limit and advances the clock to it") {
    EventLoop loop;
    int fired = 0;
    loop.schedule_at(5, EventKind::Timer, [&] { fired++; });
    loop.schedule_at(50, EventKind::Timer, [&] { fired++; });
    loop.run_until(20);
    CHECK(fired == 1);
    CHECK(loop.now() == 20);
    loop.run_until_quiescent();
    CHECK(fired == 2);
    CHECK(loop.now() == 50);
}

TEST_CASE("handlers may schedule more events, including at the current time") {
    EventLoop loop;
    std::vector<int> order;
    loop.schedule_at(1, EventKind::Timer, [&] {
        order.push_back(1);
        loop.schedule_in(0, EventKind::Timer, [&] { order.push_back(2); });
    });
    loop.schedule_at(1, EventKind::Timer, [&] { order.push_back(3); });
    loop.run_until_quiescent();
    CHECK(order == std::vector<int>{1, 3, 2}); // the same-time insert runs after existing ties
}

TEST_CASE("stop halts processing") {
    EventLoop loop;
    int fired = 0;
    loop.schedule_at(1, EventKind::Timer, [&] {
        fired++;
        loop.stop();
    });
    loop.schedule_at(2, EventKind::Timer, [&] { fired++; });
    loop.run_until_quiescent();
    CHECK(fired == 1);
    CHECK(loop.stopped());
}

TEST_CASE("latency model: switch hop is a quarter round trip, node hop a half") {
    LatencyModel lat;
    lat.node_to_node_rtt = 2000;
    EventLoop loop;
    Network net(loop, lat);
    CHECK(net.latency(0, 1) == 1000);
    CHECK(net.latency(0, kSwitchEndpoint) == 500);
    CHECK(net.latency(kSwitchEndpoint, 2) == 500);

    Time node_at = -1, switch_at = -1;
    net.send(0, 1, [&] { node_at = loop.now(); });
    net.send(0, kSwitchEndpoint, [&] { switch_at = loop.now(); });
    loop.run_until_quiescent();
    CHECK(node_at == 1000);
    CHECK(switch_at == 500);
}

TEST_CASE("jitter keeps per-channel FIFO order and stays within bounds") {
    LatencyModel lat;
    lat.node_to_node_rtt = 2000;
    lat.jitter_bound = 300;
    lat.jitter_seed = 5;
    EventLoop loop;
    Network net(loop, lat);
    std::vector<int> arrivals;
    std::vector<Time> times;
    for (int i = 0; i < 50; i++)
        net.send(0, 1, [&, i] {
            arrivals.push_back(i);
            times.push_back(loop.now());
        });
    loop.run_until_quiescent();
    REQUIRE(arrivals.size() == 50);
    for (int i = 0; i < 50; i++) {
        CHECK(arrivals[size_t(i)] == i); // never reordered
        CHECK(times[size_t(i)] >= 1000);
        CHECK(times[size_t(i)] < 1000 + 300);
        if (i) CHECK(times[size_t(i)] >= times[size_t(i) - 1]);
    }
}

TEST_CASE("messages to or from a crashed endpoint are dropped and counted") {
    EventLoop loop;
    Network net(loop, LatencyModel{});
    int delivered = 0;
    net.crash(1);
    net.send(0, 1, [&] { delivered++; });
    net.send(1, 0, [&] { delivered++; });
    net.send(0, 2, [&] { delivered++; });
    loop.run_until_quiescent();
    CHECK(delivered == 1);
    CHECK(net.dropped_count() == 2);
    CHECK(net.is_crashed(1));
}

TEST_CASE("multicast delivers to every live target with its id") {
    EventLoop loop;
    Network net(loop, LatencyModel{});
    net.crash(2);
    std::vector<int> got;
    net.multicast(0, {1, 2, 3}, [&](int t) { got.push_back(t); });
    loop.run_until_quiescent();
    CHECK(got == std::vector<int>{1, 3});
}

TEST_CASE("identical seeds produce identical delivery schedules") {
    auto trace = [](uint64_t seed) {
        LatencyModel lat;
        lat.jitter_bound = 100;
        lat.jitter_seed = seed;
        EventLoop loop;
        Network net(loop, lat);
        std::vector<Time> times;
        for (int i = 0; i < 20; i++)
            net.send(i % 3, (i + 1) % 3, [&] { times.push_back(loop.now()); });
        loop.run_until_quiescent();
        return times;
    };
    CHECK(trace(7) == trace(7));
    CHECK(trace(7) != trace(8));
}
