#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "solarmon/service.hpp"

namespace solarmon {

// Server side of one logger connection, independent of the transport. Feed
// it one line at a time (without the newline); it returns the bytes to send
// back, possibly empty.
class IngestSession {
 public:
  // Frames above this many bytes are rejected and the session closed.
  static constexpr std::size_t kMaxFrameBytes = 16u << 20;

  explicit IngestSession(MonitorService& service);
  ~IngestSession();
  IngestSession(const IngestSession&) = delete;
  IngestSession& operator=(const IngestSession&) = delete;

  std::string on_line(std::string_view line);
  // The peer went away. Safe to call more than once.
  void on_disconnect();

  // The server has given up on this connection; the transport should close.
  bool closed() const { return closed_; }
  const std::string& logger_id() const { return logger_id_; }

 private:
  std::string on_hello(std::string_view line);
  std::string on_frame();
  std::string error_reply(ErrorCode code, std::string_view message);

  MonitorService& service_;
  std::string logger_id_;
  bool greeted_ = false;
  bool in_batch_ = false;
  bool closed_ = false;
  bool counted_ = false;
  std::string frame_;
};

}  // namespace solarmon
