#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

namespace solarmon {

class MonitorService;

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port" or ":port" (all interfaces). Throws Error(kInvalidArgument).
HostPort parse_host_port(std::string_view addr);

enum class ReadStatus { kLine, kTimeout, kClosed };

// Blocking TCP stream with newline framing on the read side.
class TcpStream {
 public:
  // Lines longer than this end the stream.
  static constexpr std::size_t kMaxLine = 1u << 20;

  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream();
  TcpStream(TcpStream&& other) noexcept;
  TcpStream& operator=(TcpStream&& other) noexcept;

  // nullopt when the peer cannot be reached within the timeout.
  static std::optional<TcpStream> connect(const HostPort& addr, std::chrono::milliseconds timeout);

  bool send_all(std::string_view bytes);
  // Line without its '\n'.
  ReadStatus read_line(std::string& line, std::chrono::milliseconds timeout);
  // Wakes a blocked reader; the stream reads as closed afterwards.
  void shutdown();
  void close();
  bool is_open() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
  std::string buf_;
};

class TcpListener {
 public:
  TcpListener() = default;
  ~TcpListener();
  TcpListener(TcpListener&& other) noexcept;
  TcpListener& operator=(TcpListener&& other) noexcept;

  // Throws Error(kIo) when the address cannot be bound. Port 0 picks one.
  static TcpListener bind(const HostPort& addr);
  std::uint16_t port() const { return port_; }
  // nullopt on timeout or after close().
  std::optional<TcpStream> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Accepts logger connections and runs one IngestSession per connection on
// its own thread.
class IngestServer {
 public:
  IngestServer(MonitorService& service, TcpListener listener);
  ~IngestServer();
  IngestServer(const IngestServer&) = delete;
  IngestServer& operator=(const IngestServer&) = delete;

  void start();
  // Stops accepting, disconnects every session and joins their threads.
  void stop();
  std::uint16_t port() const { return listener_.port(); }

 private:
  struct Connection {
    TcpStream stream;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Connection& conn);
  void reap(bool all);

  MonitorService& service_;
  TcpListener listener_;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::unique_ptr<Connection>> conns_;
};

}  // namespace solarmon
