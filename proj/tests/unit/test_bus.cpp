#include <doctest.h>

#include <map>
#include <thread>

#include "dstreamon/bus/broker.hpp"
#include "dstreamon/bus/client.hpp"

using namespace dstreamon;
using namespace dstreamon::bus;
using namespace std::chrono_literals;

namespace {

struct TestBroker {
  explicit TestBroker(BrokerOptions o = {}) : broker([&] {
    o.listen = {"127.0.0.1", 0};
    return o;
  }()) {
    port = broker.start();
  }
  net::Endpoint ep() const { return {"127.0.0.1", port}; }
  Broker broker;
  std::uint16_t port;
};

std::vector<MonitoringEvent> drain(Client& c) {
  std::vector<MonitoringEvent> out;
  REQUIRE(c.sync());
  while (auto e = c.next(0ms)) out.push_back(*e);
  return out;
}

}  // namespace

TEST_CASE("frames have the documented byte layout") {
  auto f = encode_pub({"t", 2, packet::CaptureTime{3}, "xy"});
  Bytes want = {0, 0, 0, 22, 3, 0, 1, 't', 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 3, 'x', 'y'};
  CHECK(f == want);
  CHECK(encode_hello(Role::Subscriber, "c") == Bytes{0, 0, 0, 5, 1, 2, 0, 1, 'c'});
  CHECK(encode_sub("") == Bytes{0, 0, 0, 3, 2, 0, 0});
  auto ev = decode_pub(Bytes(f.begin() + 5, f.end()));
  CHECK(ev == MonitoringEvent{"t", 2, packet::CaptureTime{3}, "xy"});
  CHECK_THROWS_AS(decode_hello(Bytes{9, 0, 0}), ProtocolError);
  CHECK(make_topic("p1", xfsm::Severity::Alert, "synflood") == "probe/p1/alert/synflood");
}

TEST_CASE("broker routes by byte prefix, exactly once per subscriber") {
  TestBroker tb;
  std::vector<std::string> prefixes = {"",          "probe/",          "probe/p1",      "probe/p1/",
                                       "probe/p1/alert", "probe/p1/alert/synflood", "probe/p2", "probe/p1/log",
                                       "probe/p10", "x"};
  std::vector<std::string> topics = {"probe/p1/alert/synflood", "probe/p1/log/heartbeat", "probe/p10/info/a",
                                     "probe/p2/warning/w"};
  std::vector<std::unique_ptr<Client>> subs;
  for (auto& p : prefixes) {
    subs.push_back(Client::connect(tb.ep(), Role::Subscriber, "s:" + p));
    subs.back()->subscribe(p);
    subs.back()->subscribe(p);  // duplicate: no-op
    REQUIRE(subs.back()->sync());
  }
  // One subscriber holding two overlapping prefixes.
  auto both = Client::connect(tb.ep(), Role::Subscriber, "both");
  both->subscribe("probe/p1");
  both->subscribe("probe/p1/alert");
  REQUIRE(both->sync());

  auto pub = Client::connect(tb.ep(), Role::Publisher, "pub");
  for (auto& t : topics) pub->publish(t, packet::CaptureTime{1}, "x");
  REQUIRE(pub->sync());

  std::size_t pairs = 0;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    auto got = drain(*subs[i]);
    std::vector<std::string> got_topics, want_topics;
    for (auto& e : got) got_topics.push_back(e.topic);
    for (auto& t : topics) {
      ++pairs;
      if (t.compare(0, prefixes[i].size(), prefixes[i]) == 0) want_topics.push_back(t);
    }
    INFO("prefix '" << prefixes[i] << "'");
    CHECK(got_topics == want_topics);
  }
  CHECK(pairs >= 20);
  auto b = drain(*both);
  // "probe/p1" is a byte prefix of "probe/p10/...", so three events, each once.
  REQUIRE(b.size() == 3);
  CHECK(b[0].topic == "probe/p1/alert/synflood");
  CHECK(b[1].topic == "probe/p1/log/heartbeat");
  CHECK(b[2].topic == "probe/p10/info/a");
}

TEST_CASE("subscribers see seq 1,2,3 in order and no replay of earlier events") {
  TestBroker tb;
  auto pub = Client::connect(tb.ep(), Role::Publisher, "p");
  for (int i = 0; i < 5; ++i) pub->publish("probe/a/info/x", packet::CaptureTime{1}, std::to_string(i));
  REQUIRE(pub->sync());
  auto sub = Client::connect(tb.ep(), Role::Subscriber, "late");
  sub->subscribe("");
  REQUIRE(sub->sync());
  for (int i = 5; i < 8; ++i) pub->publish("probe/a/info/x", packet::CaptureTime{1}, std::to_string(i));
  REQUIRE(pub->sync());
  auto got = drain(*sub);
  REQUIRE(got.size() == 3);
  CHECK(got[0].seq == 6);
  CHECK(got[1].seq == 7);
  CHECK(got[2].seq == 8);
  CHECK(got[0].payload == "5");
}

TEST_CASE("three concurrent publishers: 300 events, per-publisher FIFO without gaps") {
  TestBroker tb;
  auto sub = Client::connect(tb.ep(), Role::Subscriber, "all");
  sub->subscribe("");
  REQUIRE(sub->sync());
  std::vector<std::jthread> pubs;
  for (int p = 0; p < 3; ++p)
    pubs.emplace_back([&, p] {
      auto c = Client::connect(tb.ep(), Role::Publisher, "p" + std::to_string(p));
      for (int i = 0; i < 100; ++i) c->publish("probe/p" + std::to_string(p) + "/info/n", packet::CaptureTime{0}, "");
      c->sync();
    });
  pubs.clear();
  auto got = drain(*sub);
  CHECK(got.size() == 300);
  std::map<std::string, std::uint64_t> last;
  for (auto& e : got) {
    CHECK(e.seq == last[e.topic] + 1);
    last[e.topic] = e.seq;
  }
  CHECK(last.size() == 3);
}

TEST_CASE("the sink sees every event before subscribers, in routing order") {
  TestBroker tb;
  std::vector<std::string> seen;
  std::mutex mu;
  tb.broker.set_sink([&](const MonitoringEvent& e, const std::string& who) {
    std::lock_guard lk(mu);
    seen.push_back(who + ":" + e.payload);
  });
  auto pub = Client::connect(tb.ep(), Role::Publisher, "pp");
  pub->publish("t", packet::CaptureTime{0}, "a");
  pub->publish("t", packet::CaptureTime{0}, "b");
  REQUIRE(pub->sync());
  std::lock_guard lk(mu);
  CHECK(seen == std::vector<std::string>{"pp:a", "pp:b"});
}

TEST_CASE("protocol violations close the offending connection only") {
  TestBroker tb;
  auto sub = Client::connect(tb.ep(), Role::Subscriber, "s");
  sub->subscribe("");
  REQUIRE(sub->sync());

  // PUB without HELLO.
  auto raw = net::connect_tcp(tb.ep());
  REQUIRE(net::write_all(raw.get(), encode_pub({"t", 1, {}, ""})));
  std::uint8_t b;
  CHECK_FALSE(net::read_exact(raw.get(), {&b, 1}));

  // Subscriber-only connection may not publish.
  auto wrong = Client::connect(tb.ep(), Role::Subscriber, "w");
  try {
    wrong->publish("t", {}, "");
  } catch (const net::NetError&) {
  }
  CHECK_FALSE(wrong->sync(2s));

  // Oversize frame.
  auto big = net::connect_tcp(tb.ep());
  Bytes hdr = {0x00, 0x20, 0x00, 0x00, 3};
  REQUIRE(net::write_all(big.get(), hdr));
  CHECK_FALSE(net::read_exact(big.get(), {&b, 1}));

  CHECK(drain(*sub).empty());
  CHECK(sub->connected());
  CHECK(tb.broker.stats().protocol_errors >= 3);
}

TEST_CASE("a slow subscriber is disconnected without blocking publishers") {
  BrokerOptions o;
  o.subscriber_queue = 16;
  TestBroker tb(o);
  // Subscribes but never reads: its socket buffers fill, then its queue.
  auto stalled = net::connect_tcp(tb.ep());
  REQUIRE(net::write_all(stalled.get(), encode_hello(Role::Subscriber, "stalled")));
  REQUIRE(net::write_all(stalled.get(), encode_sub("")));
  auto good = Client::connect(tb.ep(), Role::Subscriber, "good");
  good->subscribe("");
  REQUIRE(good->sync());

  auto pub = Client::connect(tb.ep(), Role::Publisher, "p");
  std::string payload(60'000, 'x');
  auto start = std::chrono::steady_clock::now();
  std::size_t received = 0;
  // Paced to the healthy consumer, so only the stalled one can fall behind.
  for (int i = 0; i < 200; ++i) {
    pub->publish("probe/p/info/bulk", {}, payload);
    if (good->next(5s)) ++received;
  }
  REQUIRE(pub->sync(10s));
  CHECK(std::chrono::steady_clock::now() - start < 10s);
  CHECK(tb.broker.stats().slow_disconnects == 1);
  CHECK(good->connected());
  CHECK(received == 200);
}

TEST_CASE("connections that stop answering pings are dropped") {
  BrokerOptions o;
  o.ping_interval = 50ms;
  TestBroker tb(o);
  auto silent = net::connect_tcp(tb.ep());
  REQUIRE(net::write_all(silent.get(), encode_hello(Role::Subscriber, "silent")));
  auto live = Client::connect(tb.ep(), Role::Subscriber, "live");  // answers pings
  std::this_thread::sleep_for(600ms);
  CHECK(tb.broker.stats().keepalive_drops == 1);
  CHECK(live->connected());
  CHECK(live->sync());
}
