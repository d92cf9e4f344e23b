#include <doctest.h>

#include <thread>

#include "solarmon/drivers.hpp"
#include "solarmon/ingest_session.hpp"
#include "solarmon/logger_client.hpp"
#include "solarmon/net.hpp"
#include "solarmon/protocol.hpp"
#include "solarmon/service.hpp"
#include "test_support.hpp"

using namespace solarmon;
using testsupport::kNoon0;
using testsupport::reading;
using testsupport::small_fleet;
using testsupport::TempDir;
using Clock = LoggerClient::Clock;

namespace {

ServerConfig mem_config() {
  ServerConfig c;
  c.fsync = false;
  return c;
}

// Feeds a multi-line chunk and concatenates the replies.
std::string feed(IngestSession& s, std::string_view chunk) {
  std::string out;
  while (!chunk.empty()) {
    const auto nl = chunk.find('\n');
    out += s.on_line(chunk.substr(0, nl));
    chunk.remove_prefix(nl == std::string_view::npos ? chunk.size() : nl + 1);
  }
  return out;
}

std::vector<PanelReading> step_batch(const Fleet& fleet, Timestamp ts, std::uint64_t seq) {
  std::vector<PanelReading> rs;
  for (const auto& p : fleet.panels()) rs.push_back(reading(p.panel_id, ts, seq, 100.0 + static_cast<double>(seq)));
  return rs;
}

}  // namespace

TEST_CASE("session transcript") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  IngestSession s(svc);
  CHECK(s.on_line("HELLO L1 1") == "WELCOME 1 0\n");
  CHECK(svc.sessions() == 1);

  const auto b1 = protocol::encode_batch("L1", 1, step_batch(svc.fleet(), kNoon0, 1));
  CHECK(feed(s, b1) == "OK 1\n");
  CHECK(svc.store().reading_count() == 2);

  // Redelivery is acknowledged and not stored again.
  CHECK(feed(s, b1) == "OK 1\n");
  CHECK(svc.store().reading_count() == 2);

  // An operator command rides on the next acknowledgement.
  const auto cmd = svc.queue_command("S01-P0002", CommandAction::kDisable, std::nullopt);
  CHECK(cmd.command_id == "C000001");
  CHECK(cmd.state == CommandState::kQueued);
  const auto b2 = protocol::encode_batch("L1", 2, step_batch(svc.fleet(), kNoon0 + 300, 2));
  CHECK(feed(s, b2) == "CMD C000001 S01-P0002 disable\nOK 2\n");
  CHECK(svc.command("C000001")->state == CommandState::kDelivered);
  CHECK(s.on_line("CMDACK C000001").empty());
  CHECK(svc.command("C000001")->state == CommandState::kApplied);
  CHECK(svc.control(1).status == PanelStatus::kDisabled);

  // Corrupted payload.
  auto b3 = protocol::encode_batch("L1", 3, step_batch(svc.fleet(), kNoon0 + 600, 3));
  b3[b3.find("R S01") + 2] = 'X';
  CHECK(feed(s, b3).starts_with("ERR E_CHECKSUM "));
  CHECK_FALSE(s.closed());

  // Unknown panels.
  const auto b4 = protocol::encode_batch("L1", 4, {reading("ZZ-P1", kNoon0 + 600, 1, 1)});
  CHECK(feed(s, b4).starts_with("ERR E_UNKNOWN_PANEL "));

  // Readings that break an invariant.
  auto bad = reading("S01-P0001", kNoon0 + 600, 3, 100);
  bad.watts = 50;
  CHECK(feed(s, protocol::encode_batch("L1", 5, {bad})).starts_with("ERR E_MALFORMED "));
  CHECK(s.on_line("WHAT").starts_with("ERR E_MALFORMED"));

  s.on_disconnect();
  CHECK(svc.sessions() == 0);

  // A new session resumes from the high-water marks.
  IngestSession s2(svc);
  CHECK(s2.on_line("HELLO L1 1") == "WELCOME 1 2\nHW S01-P0001 2\nHW S01-P0002 2\n");
}

TEST_CASE("session rejects bad greetings") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  IngestSession a(svc);
  CHECK(a.on_line("HELLO L1 2").starts_with("ERR E_VERSION "));
  CHECK(a.closed());
  CHECK(a.on_line("HELLO L1 1").empty());
  IngestSession b(svc);
  CHECK(b.on_line("BATCH 1 0").starts_with("ERR E_MALFORMED "));
  CHECK(b.closed());
  CHECK(svc.sessions() == 0);
}

TEST_CASE("commands reach only the logger that owns the panel") {
  MonitorService svc(small_fleet(2, 1), mem_config(), {});
  IngestSession a(svc), b(svc);
  a.on_line("HELLO A 1");
  b.on_line("HELLO B 1");
  feed(a, protocol::encode_batch("A", 1, {reading("S01-P0001", kNoon0, 1, 10)}));
  feed(b, protocol::encode_batch("B", 1, {reading("S02-P0001", kNoon0, 1, 10)}));
  svc.queue_command("S01-P0001", CommandAction::kSetDerate, 0.5);
  CHECK(feed(b, protocol::encode_batch("B", 2, {})) == "OK 2\n");
  CHECK(feed(a, protocol::encode_batch("A", 2, {})) == "CMD C000001 S01-P0001 set_derate 0.5\nOK 2\n");
}

TEST_CASE("queue_command validation") {
  MonitorService svc(small_fleet(1, 1), mem_config(), {});
  const auto code = [&](std::string_view panel, CommandAction a, std::optional<double> d) {
    try {
      svc.queue_command(panel, a, d);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  CHECK(code("nope", CommandAction::kDisable, std::nullopt) == ErrorCode::kUnknownPanel);
  CHECK(code("S01-P0001", CommandAction::kSetDerate, std::nullopt) == ErrorCode::kBadAction);
  CHECK(code("S01-P0001", CommandAction::kSetDerate, 0.0) == ErrorCode::kBadAction);
  CHECK(code("S01-P0001", CommandAction::kSetDerate, 1.5) == ErrorCode::kBadAction);
  CHECK(code("S01-P0001", CommandAction::kEnable, 0.5) == ErrorCode::kBadAction);
  CHECK_NOTHROW(svc.queue_command("S01-P0001", CommandAction::kSetDerate, 1.0));
  CHECK_FALSE(svc.command_applied("C000001"));  // not delivered yet
  CHECK_FALSE(svc.command_applied("C999999"));
}

TEST_CASE("logger client: healthy path") {
  MonitorService svc(small_fleet(1, 3), mem_config(), {});
  LoggerClientOptions o;
  o.logger_id = "L";
  LoggerClient client(o, [&] { return std::make_unique<LoopbackTransport>(svc); });
  for (int i = 0; i < 20; ++i) {
    client.enqueue(step_batch(svc.fleet(), kNoon0 + 300 * i, static_cast<std::uint64_t>(i + 1)));
    CHECK(client.pump(Clock::now()));
  }
  CHECK(client.stats().retries == 0);
  CHECK(client.stats().frames_acked == 20);
  CHECK(client.stats().readings_acked == 60);
  CHECK(client.stats().connects == 1);
  CHECK(svc.store().reading_count() == 60);
}

TEST_CASE("logger client: server down for three steps") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  bool down = false;
  std::vector<std::uint64_t> order;
  LoggerClientOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  o.backoff_cap = std::chrono::milliseconds(4);
  LoggerClient client(o, [&]() -> std::unique_ptr<LineTransport> {
    if (down) return nullptr;
    return std::make_unique<LoopbackTransport>(svc, [&](std::string_view chunk) {
      if (down) return LoopbackFault::kDropBefore;
      if (chunk.starts_with("BATCH")) {
        const auto f = protocol::parse_frame(chunk);
        for (const auto& r : f.readings) {
          if (r.panel_id == "S01-P0001") order.push_back(r.seq);
        }
      }
      return LoopbackFault::kNone;
    });
  });
  client.enqueue(step_batch(svc.fleet(), kNoon0, 1));
  CHECK(client.pump(Clock::now()));
  down = true;
  for (int i = 1; i <= 3; ++i) {
    client.enqueue(step_batch(svc.fleet(), kNoon0 + 300 * i, static_cast<std::uint64_t>(i + 1)));
    CHECK_FALSE(client.pump(Clock::now()));
  }
  CHECK(client.pending_frames() == 3);
  down = false;
  CHECK(client.flush(Clock::now() + std::chrono::seconds(5)));
  CHECK(svc.store().reading_count() == 8);
  CHECK(order == std::vector<std::uint64_t>{1, 2, 3, 4});
  CHECK(client.stats().readings_dropped == 0);
  CHECK(client.stats().connects == 2);
}

TEST_CASE("logger client: buffer overflow drops the oldest reading") {
  MonitorService svc(small_fleet(1, 1), mem_config(), {});
  std::vector<std::string> logs;
  bool down = true;
  LoggerClientOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  o.backoff_cap = std::chrono::milliseconds(1);
  o.log = [&](std::string_view m) { logs.emplace_back(m); };
  LoggerClient client(o, [&]() -> std::unique_ptr<LineTransport> {
    if (down) return nullptr;
    return std::make_unique<LoopbackTransport>(svc);
  });
  for (int i = 0; i < 10001; ++i) {
    client.enqueue({reading("S01-P0001", kNoon0 + 300 * i, static_cast<std::uint64_t>(i + 1), 5)});
  }
  CHECK(client.pending_readings() == 10000);
  CHECK(client.stats().readings_dropped == 1);
  down = false;
  CHECK(client.flush(Clock::now() + std::chrono::seconds(30)));
  CHECK(svc.store().reading_count() == 10000);
  CHECK_FALSE(svc.store().query_raw("S01-P0001", kNoon0, kNoon0 + 1).size());
  bool reported = false;
  for (const auto& l : logs) reported = reported || l.find("dropped 1") != std::string::npos;
  CHECK(reported);
}

TEST_CASE("logger client: commands are applied and acknowledged") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  std::vector<std::string> applied;
  LoggerClient client({}, [&] { return std::make_unique<LoopbackTransport>(svc); },
                      [&](Command& c) {
                        applied.push_back(c.command_id);
                        return true;
                      });
  client.enqueue(step_batch(svc.fleet(), kNoon0, 1));
  client.pump(Clock::now());
  svc.queue_command("S01-P0001", CommandAction::kDisable, std::nullopt);
  client.enqueue(step_batch(svc.fleet(), kNoon0 + 300, 2));
  client.pump(Clock::now());
  CHECK(applied == std::vector<std::string>{"C000001"});
  CHECK(svc.command("C000001")->state == CommandState::kApplied);
  CHECK(client.stats().commands_applied == 1);
}

TEST_CASE("logger client: reconnect resends only unacknowledged data") {
  MonitorService svc(small_fleet(1, 2), mem_config(), {});
  int frames_seen = 0;
  bool lose_reply = false;
  LoggerClientOptions o;
  o.backoff_base = std::chrono::milliseconds(1);
  LoggerClient client(o, [&] {
    return std::make_unique<LoopbackTransport>(svc, [&](std::string_view chunk) {
      if (!chunk.starts_with("BATCH")) return LoopbackFault::kNone;
      ++frames_seen;
      if (lose_reply) {
        lose_reply = false;
        return LoopbackFault::kDropAfter;
      }
      return LoopbackFault::kNone;
    });
  });
  client.enqueue(step_batch(svc.fleet(), kNoon0, 1));
  lose_reply = true;
  client.pump(Clock::now());
  CHECK(svc.store().reading_count() == 2);
  CHECK(client.flush(Clock::now() + std::chrono::seconds(5)));
  // The stored frame is pruned on reconnect instead of being resent.
  CHECK(frames_seen == 1);
  CHECK(client.stats().readings_pruned == 2);
}

TEST_CASE("tcp ingest server end to end") {
  TempDir dir;
  MonitorService svc(small_fleet(1, 4), mem_config(), dir.path());
  IngestServer server(svc, TcpListener::bind(parse_host_port("127.0.0.1:0")));
  server.start();
  const HostPort addr{"127.0.0.1", server.port()};

  SimulateOptions so;
  so.seed = 5;
  so.speedup = 1e9;
  so.start_ts = kNoon0;
  so.duration_s = 3600;
  const auto sum = run_simulation(svc.fleet(), so, tcp_connector(addr));
  CHECK(sum.drained);
  CHECK(sum.steps == 12);
  CHECK(sum.client.readings_acked == 48);
  CHECK(svc.store().reading_count() == 48);

  // Raw lines on a socket.
  auto s = TcpStream::connect(addr, std::chrono::seconds(2));
  REQUIRE(s.has_value());
  REQUIRE(s->send_all("HELLO raw 1\n"));
  std::string line;
  REQUIRE(s->read_line(line, std::chrono::seconds(2)) == ReadStatus::kLine);
  CHECK(line == "WELCOME 1 4");
  for (int i = 0; i < 4; ++i) s->read_line(line, std::chrono::seconds(2));
  REQUIRE(s->send_all("garbage\n"));
  REQUIRE(s->read_line(line, std::chrono::seconds(2)) == ReadStatus::kLine);
  CHECK(line.starts_with("ERR E_MALFORMED"));
  s->close();
  server.stop();
}

TEST_CASE("replay through the protocol is idempotent") {
  TempDir src, dst;
  const auto fleet = small_fleet(1, 3);
  {
    MonitorService svc(fleet, mem_config(), src.path());
    SimulateOptions so;
    so.speedup = 1e9;
    so.start_ts = kNoon0;
    so.duration_s = 7200;
    run_simulation(fleet, so, [&] { return std::make_unique<LoopbackTransport>(svc); });
  }
  MonitorService svc(fleet, mem_config(), dst.path());
  const auto connector = [&] { return std::make_unique<LoopbackTransport>(svc); };
  const auto r1 = run_replay(src.path(), connector);
  CHECK(r1.drained);
  CHECK(r1.readings == 72);
  CHECK(r1.corrupt_lines == 0);
  CHECK(svc.store().reading_count() == 72);
  const auto r2 = run_replay(src.path(), connector);
  CHECK(r2.client.readings_pruned == 72);
  CHECK(svc.store().reading_count() == 72);
  CHECK(testsupport::snapshot_dir(src.path()) == testsupport::snapshot_dir(dst.path()));
}

TEST_CASE("host:port parsing") {
  CHECK(parse_host_port("127.0.0.1:8080").port == 8080);
  CHECK(parse_host_port(":7070").host.empty());
  CHECK(parse_host_port("[::1]:9").host == "::1");
  CHECK_THROWS_AS(parse_host_port("nohost"), Error);
  CHECK_THROWS_AS(parse_host_port("h:99999"), Error);
}

TEST_CASE("binding a taken port fails with E_IO") {
  auto a = TcpListener::bind(parse_host_port("127.0.0.1:0"));
  try {
    TcpListener::bind({"127.0.0.1", a.port()});
    FAIL("expected bind failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}
