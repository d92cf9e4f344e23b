#include "solarmon/logger_client.hpp"

#include <algorithm>
#include <thread>

#include "solarmon/protocol.hpp"

namespace solarmon {

// --- transports ------------------------------------------------------------------

namespace {

class TcpLineTransport : public LineTransport {
 public:
  explicit TcpLineTransport(TcpStream s) : stream_(std::move(s)) {}
  bool send(std::string_view bytes) override { return stream_.send_all(bytes); }
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout) override {
    return stream_.read_line(line, timeout);
  }

 private:
  TcpStream stream_;
};

}  // namespace

Connector tcp_connector(HostPort addr, std::chrono::milliseconds timeout) {
  return [addr = std::move(addr), timeout]() -> std::unique_ptr<LineTransport> {
    auto s = TcpStream::connect(addr, timeout);
    if (!s) return nullptr;
    return std::make_unique<TcpLineTransport>(std::move(*s));
  };
}

LoopbackTransport::LoopbackTransport(MonitorService& service, FaultHook hook)
    : session_(std::make_unique<IngestSession>(service)), hook_(std::move(hook)) {}

LoopbackTransport::~LoopbackTransport() { disconnect(); }

void LoopbackTransport::disconnect() {
  open_ = false;
  if (session_) session_->on_disconnect();
}

void LoopbackTransport::deliver(std::string_view bytes) {
  while (!bytes.empty() && open_) {
    const auto nl = bytes.find('\n');
    const std::string_view line = bytes.substr(0, nl);
    bytes.remove_prefix(nl == std::string_view::npos ? bytes.size() : nl + 1);
    std::string reply = session_->on_line(line);
    std::string_view r = reply;
    while (!r.empty()) {
      const auto rn = r.find('\n');
      inbox_.emplace_back(r.substr(0, rn));
      r.remove_prefix(rn == std::string_view::npos ? r.size() : rn + 1);
    }
    if (session_->closed()) disconnect();
  }
}

bool LoopbackTransport::send(std::string_view bytes) {
  if (!open_) return false;
  switch (hook_ ? hook_(bytes) : LoopbackFault::kNone) {
    case LoopbackFault::kNone:
      deliver(bytes);
      break;
    case LoopbackFault::kDropBefore:
      disconnect();
      return false;
    case LoopbackFault::kDropAfter:
      deliver(bytes);
      inbox_.clear();
      disconnect();
      break;
    case LoopbackFault::kDuplicate:
      deliver(bytes);
      deliver(bytes);
      break;
  }
  return open_;
}

ReadStatus LoopbackTransport::read_line(std::string& line, std::chrono::milliseconds) {
  if (inbox_.empty()) return open_ ? ReadStatus::kTimeout : ReadStatus::kClosed;
  line = std::move(inbox_.front());
  inbox_.pop_front();
  return ReadStatus::kLine;
}

// --- LoggerClient ----------------------------------------------------------------

LoggerClient::LoggerClient(LoggerClientOptions opts, Connector connector,
                           CommandHandler on_command)
    : opts_(std::move(opts)), connector_(std::move(connector)), on_command_(std::move(on_command)) {}

void LoggerClient::note(const std::string& msg) {
  if (opts_.log) opts_.log(msg);
}

void LoggerClient::enqueue(std::vector<PanelReading> readings) {
  buffered_ += readings.size();
  const bool heartbeat = readings.empty();
  frames_.push_back({next_batch_id_++, std::move(readings), heartbeat});
  while (buffered_ > opts_.max_buffered_readings) {
    auto& front = frames_.front();
    const std::size_t excess = buffered_ - opts_.max_buffered_readings;
    const std::size_t n = std::min(excess, front.readings.size());
    front.readings.erase(front.readings.begin(), front.readings.begin() + static_cast<long>(n));
    buffered_ -= n;
    stats_.readings_dropped += n;
    unreported_drops_ += n;
    if (front.readings.empty()) frames_.pop_front();
  }
}

void LoggerClient::disconnect() { transport_.reset(); }

void LoggerClient::fail(Clock::time_point now) {
  transport_.reset();
  auto delay = opts_.backoff_base;
  for (int i = 0; i < failures_ && delay < opts_.backoff_cap; ++i) delay *= 2;
  delay = std::min(delay, opts_.backoff_cap);
  ++failures_;
  next_attempt_ = now + delay;
}

bool LoggerClient::connect(Clock::time_point now) {
  if (next_attempt_ && now < *next_attempt_) return false;
  transport_ = connector_();
  if (!transport_) {
    fail(now);
    return false;
  }
  ++stats_.connects;
  std::string line = "HELLO " + opts_.logger_id + " 1\n";
  if (!transport_->send(line) ||
      transport_->read_line(line, opts_.reply_timeout) != ReadStatus::kLine) {
    fail(now);
    return false;
  }
  const auto tok = protocol::split_tokens(line);
  std::optional<std::uint64_t> k;
  if (tok.size() == 3 && tok[0] == "WELCOME" && tok[1] == "1") k = protocol::parse_u64(tok[2]);
  if (!k) {
    note("handshake rejected: " + line);
    fail(now);
    return false;
  }
  std::map<std::string, std::uint64_t, std::less<>> marks;
  for (std::uint64_t i = 0; i < *k; ++i) {
    if (transport_->read_line(line, opts_.reply_timeout) != ReadStatus::kLine) {
      fail(now);
      return false;
    }
    const auto hw = protocol::split_tokens(line);
    const auto seq = hw.size() == 3 && hw[0] == "HW" ? protocol::parse_u64(hw[2]) : std::nullopt;
    if (!seq) {
      fail(now);
      return false;
    }
    marks.emplace(std::string(hw[1]), *seq);
  }
  failures_ = 0;
  next_attempt_.reset();
  if (unreported_drops_ > 0) {
    note("dropped " + std::to_string(unreported_drops_) +
         " buffered readings while the server was unreachable");
    unreported_drops_ = 0;
  }
  prune(marks);
  return true;
}

void LoggerClient::prune(const std::map<std::string, std::uint64_t, std::less<>>& marks) {
  for (auto it = frames_.begin(); it != frames_.end();) {
    auto& rs = it->readings;
    const std::size_t before = rs.size();
    std::erase_if(rs, [&](const PanelReading& r) {
      auto m = marks.find(r.panel_id);
      return m != marks.end() && r.seq <= m->second;
    });
    buffered_ -= before - rs.size();
    stats_.readings_pruned += before - rs.size();
    if (rs.empty() && !it->heartbeat) {
      it = frames_.erase(it);
    } else {
      ++it;
    }
  }
}

void LoggerClient::handle_command(std::string_view line) {
  protocol::CommandLine cl;
  try {
    cl = protocol::parse_command(line);
  } catch (const Error& e) {
    note(std::string("ignoring bad command: ") + e.what());
    return;
  }
  Command cmd{cl.command_id, cl.panel_id, cl.action, cl.derate, 0, CommandState::kDelivered};
  bool applied = true;
  if (on_command_) {
    try {
      applied = on_command_(cmd);
    } catch (const std::exception& e) {
      note("command " + cl.command_id + " failed: " + e.what());
      applied = false;
    }
  }
  if (!applied) return;
  ++stats_.commands_applied;
  transport_->send("CMDACK " + cl.command_id + "\n");
}

LoggerClient::Outcome LoggerClient::exchange(PendingFrame& frame) {
  ++stats_.frames_sent;
  if (!transport_->send(protocol::encode_batch(opts_.logger_id, frame.batch_id, frame.readings))) {
    return Outcome::kLost;
  }
  const std::string ok = std::to_string(frame.batch_id);
  std::string line;
  for (;;) {
    if (transport_->read_line(line, opts_.reply_timeout) != ReadStatus::kLine) {
      return Outcome::kLost;
    }
    if (line.starts_with("CMD ")) {
      handle_command(line);
    } else if (line.starts_with("OK ")) {
      // Replies to an earlier transmission of an acked frame are stale.
      if (std::string_view(line).substr(3) == ok) return Outcome::kAcked;
    } else if (line.starts_with("ERR ")) {
      if (line.starts_with("ERR E_CHECKSUM")) return Outcome::kResend;
      note("frame " + ok + " rejected: " + line);
      return Outcome::kRejected;
    }
  }
}

bool LoggerClient::pump(Clock::time_point now) {
  while (!frames_.empty()) {
    if (!transport_ && !connect(now)) return false;
    if (frames_.empty()) break;
    PendingFrame& frame = frames_.front();
    switch (exchange(frame)) {
      case Outcome::kAcked:
        ++stats_.frames_acked;
        stats_.readings_acked += frame.readings.size();
        buffered_ -= frame.readings.size();
        frames_.pop_front();
        break;
      case Outcome::kRejected:
        ++stats_.frames_rejected;
        buffered_ -= frame.readings.size();
        frames_.pop_front();
        break;
      case Outcome::kResend:
        ++stats_.retries;
        if (++frame.checksum_rejections > opts_.max_checksum_retries) {
          ++stats_.frames_rejected;
          buffered_ -= frame.readings.size();
          frames_.pop_front();
        }
        break;
      case Outcome::kLost:
        ++stats_.retries;
        fail(now);
        return false;
    }
  }
  return true;
}

bool LoggerClient::flush(Clock::time_point deadline) {
  for (;;) {
    const auto now = Clock::now();
    if (pump(now)) return true;
    if (now >= deadline) return false;
    auto wake = next_attempt_.value_or(now + std::chrono::milliseconds(10));
    std::this_thread::sleep_until(std::min(wake, deadline));
  }
}

}  // namespace solarmon
