#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/ingest_session.hpp"
#include "solarmon/model.hpp"
#include "solarmon/net.hpp"

namespace solarmon {

// Line-oriented duplex channel to the ingest server.
class LineTransport {
 public:
  virtual ~LineTransport() = default;
  // Bytes may hold several '\n' terminated lines. False once the channel is
  // gone.
  virtual bool send(std::string_view bytes) = 0;
  virtual ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) = 0;
};

// Returns nullptr when the server cannot be reached.
using Connector = std::function<std::unique_ptr<LineTransport>()>;

Connector tcp_connector(HostPort addr, std::chrono::milliseconds timeout = std::chrono::seconds(5));

// What a LoopbackTransport does with one outgoing chunk.
enum class LoopbackFault {
  kNone,
  kDropBefore,  // connection dies, server never sees the chunk
  kDropAfter,   // server processes the chunk, the reply is lost with the connection
  kDuplicate,   // server sees the chunk twice
};

// In-process transport wired straight into an IngestSession, for tests and
// fault injection.
class LoopbackTransport : public LineTransport {
 public:
  using FaultHook = std::function<LoopbackFault(std::string_view chunk)>;

  explicit LoopbackTransport(MonitorService& service, FaultHook hook = {});
  ~LoopbackTransport() override;

  bool send(std::string_view bytes) override;
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) override;

 private:
  void deliver(std::string_view bytes);
  void disconnect();

  std::unique_ptr<IngestSession> session_;
  FaultHook hook_;
  std::deque<std::string> inbox_;
  bool open_ = true;
};

struct LoggerClientOptions {
  std::string logger_id = "logger";
  std::size_t max_buffered_readings = 10000;
  std::chrono::milliseconds backoff_base = std::chrono::seconds(1);
  std::chrono::milliseconds backoff_cap = std::chrono::seconds(60);
  std::chrono::milliseconds reply_timeout = std::chrono::seconds(10);
  // Consecutive E_CHECKSUM rejections of one frame before it is abandoned.
  int max_checksum_retries = 5;
  // Diagnostics such as drop reports.
  std::function<void(std::string_view)> log;
};

struct LoggerClientStats {
  std::uint64_t frames_sent = 0;  // transmissions, including retries
  std::uint64_t frames_acked = 0;
  std::uint64_t readings_acked = 0;
  std::uint64_t retries = 0;
  std::uint64_t readings_dropped = 0;  // buffer overflow
  std::uint64_t readings_pruned = 0;   // already stored according to the server
  std::uint64_t frames_rejected = 0;   // abandoned after ERR
  std::uint64_t connects = 0;
  std::uint64_t commands_applied = 0;
};

// Logger side of the session: buffers one frame per enqueue, delivers them in
// order with stop-and-wait, reconnects with exponential backoff and resumes
// from the server's high-water marks.
class LoggerClient {
 public:
  using Clock = std::chrono::steady_clock;
  // Applies a delivered command; returning false withholds the CMDACK.
  using CommandHandler = std::function<bool(Command&)>;

  LoggerClient(LoggerClientOptions opts, Connector connector, CommandHandler on_command = {});

  // Queues one frame. Beyond max_buffered_readings the oldest readings are
  // dropped.
  void enqueue(std::vector<PanelReading> readings);

  // Delivers as much as possible without waiting out a backoff. Returns true
  // when nothing is pending.
  bool pump(Clock::time_point now);
  // Pumps, sleeping through backoffs, until drained or the deadline passes.
  bool flush(Clock::time_point deadline);

  bool connected() const { return transport_ != nullptr; }
  std::size_t pending_frames() const { return frames_.size(); }
  std::size_t pending_readings() const { return buffered_; }
  std::optional<Clock::time_point> next_attempt() const { return next_attempt_; }
  const LoggerClientStats& stats() const { return stats_; }
  void disconnect();

 private:
  struct PendingFrame {
    std::uint64_t batch_id;
    std::vector<PanelReading> readings;
    bool heartbeat;  // enqueued empty
    int checksum_rejections = 0;
  };
  enum class Outcome { kAcked, kRejected, kResend, kLost };

  bool connect(Clock::time_point now);
  void prune(const std::map<std::string, std::uint64_t, std::less<>>& marks);
  Outcome exchange(PendingFrame& frame);
  void handle_command(std::string_view line);
  void fail(Clock::time_point now);
  void note(const std::string& msg);

  LoggerClientOptions opts_;
  Connector connector_;
  CommandHandler on_command_;
  std::unique_ptr<LineTransport> transport_;
  std::deque<PendingFrame> frames_;
  std::size_t buffered_ = 0;
  std::uint64_t next_batch_id_ = 1;
  std::uint64_t unreported_drops_ = 0;
  int failures_ = 0;
  std::optional<Clock::time_point> next_attempt_;
  LoggerClientStats stats_;
};

}  // namespace solarmon
