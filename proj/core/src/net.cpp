#include "solarmon/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "solarmon/ingest_session.hpp"
#include "solarmon/model.hpp"
#include "solarmon/protocol.hpp"

namespace solarmon {

namespace {

int poll_timeout(std::chrono::milliseconds t) {
  if (t.count() < 0) return -1;
  return t.count() > INT32_MAX ? INT32_MAX : static_cast<int>(t.count());
}

// getaddrinfo for IPv4/IPv6 streams.
struct AddrList {
  addrinfo* head = nullptr;
  ~AddrList() {
    if (head) freeaddrinfo(head);
  }
};

bool resolve(const HostPort& addr, bool passive, AddrList& out) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const std::string port = std::to_string(addr.port);
  const char* host = addr.host.empty() ? nullptr : addr.host.c_str();
  return getaddrinfo(host, port.c_str(), &hints, &out.head) == 0;
}

}  // namespace

HostPort parse_host_port(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "address must be host:port: " + std::string(addr));
  }
  const auto port = protocol::parse_u64(addr.substr(colon + 1));
  if (!port || *port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "bad port in " + std::string(addr));
  }
  std::string host(addr.substr(0, colon));
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  return {host, static_cast<std::uint16_t>(*port)};
}

// --- TcpStream -------------------------------------------------------------------

TcpStream::~TcpStream() { close(); }

TcpStream::TcpStream(TcpStream&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buf_(std::move(other.buf_)) {}

TcpStream& TcpStream::operator=(TcpStream&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    buf_ = std::move(other.buf_);
  }
  return *this;
}

std::optional<TcpStream> TcpStream::connect(const HostPort& addr,
                                            std::chrono::milliseconds timeout) {
  AddrList list;
  HostPort target = addr;
  if (target.host.empty() || target.host == "0.0.0.0") target.host = "127.0.0.1";
  if (!resolve(target, false, list)) return std::nullopt;
  for (addrinfo* ai = list.head; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      if (::poll(&p, 1, poll_timeout(timeout)) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
      }
    }
    if (rc == 0) {
      fcntl(fd, F_SETFL, flags);
      int one = 1;
      setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return TcpStream(fd);
    }
    ::close(fd);
  }
  return std::nullopt;
}

bool TcpStream::send_all(std::string_view bytes) {
  while (!bytes.empty()) {
    if (fd_ < 0) return false;
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

ReadStatus TcpStream::read_line(std::string& line, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto nl = buf_.find('\n'); nl != std::string::npos) {
      line.assign(buf_, 0, nl);
      buf_.erase(0, nl + 1);
      return ReadStatus::kLine;
    }
    if (fd_ < 0 || buf_.size() > kMaxLine) return ReadStatus::kClosed;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 && timeout.count() >= 0) return ReadStatus::kTimeout;
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, timeout.count() < 0 ? -1 : poll_timeout(left));
    if (rc < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::kClosed;
    }
    if (rc == 0) return ReadStatus::kTimeout;
    char chunk[8192];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return ReadStatus::kClosed;
    buf_.append(chunk, static_cast<std::size_t>(n));
  }
}

void TcpStream::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void TcpStream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  buf_.clear();
}

// --- TcpListener -----------------------------------------------------------------

TcpListener::~TcpListener() { close(); }

TcpListener::TcpListener(TcpListener&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    port_ = other.port_;
  }
  return *this;
}

TcpListener TcpListener::bind(const HostPort& addr) {
  AddrList list;
  HostPort target = addr;
  if (target.host == "0.0.0.0" || target.host == "*") target.host.clear();
  if (!resolve(target, true, list)) {
    throw Error(ErrorCode::kIo, "cannot resolve " + addr.host);
  }
  std::string last_error = "no usable address";
  for (addrinfo* ai = list.head; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      sockaddr_storage ss{};
      socklen_t len = sizeof ss;
      getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
      TcpListener l;
      l.fd_ = fd;
      l.port_ = ss.ss_family == AF_INET6
                    ? ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port)
                    : ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
      return l;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw Error(ErrorCode::kIo, "cannot bind " + addr.host + ":" + std::to_string(addr.port) +
                                  ": " + last_error);
}

std::optional<TcpStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) return std::nullopt;
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, poll_timeout(timeout)) != 1) return std::nullopt;
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return std::nullopt;
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return TcpStream(fd);
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

// --- IngestServer ----------------------------------------------------------------

IngestServer::IngestServer(MonitorService& service, TcpListener listener)
    : service_(service), listener_(std::move(listener)) {}

IngestServer::~IngestServer() { stop(); }

void IngestServer::start() {
  if (running_.exchange(true)) return;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void IngestServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  reap(true);
}

void IngestServer::accept_loop() {
  while (running_) {
    auto stream = listener_.accept(std::chrono::milliseconds(100));
    reap(false);
    if (!stream) continue;
    auto conn = std::make_unique<Connection>();
    conn->stream = std::move(*stream);
    Connection* raw = conn.get();
    std::lock_guard lock(mu_);
    conns_.push_back(std::move(conn));
    raw->thread = std::thread([this, raw] { serve(*raw); });
  }
}

void IngestServer::serve(Connection& conn) {
  IngestSession session(service_);
  std::string line;
  while (running_ && !session.closed()) {
    const auto st = conn.stream.read_line(line, std::chrono::milliseconds(200));
    if (st == ReadStatus::kTimeout) continue;
    if (st == ReadStatus::kClosed) break;
    const std::string reply = session.on_line(line);
    if (!reply.empty() && !conn.stream.send_all(reply)) break;
  }
  session.on_disconnect();
  conn.stream.shutdown();
  conn.done = true;
}

void IngestServer::reap(bool all) {
  std::list<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (all) (*it)->stream.shutdown();
      if (all || (*it)->done) {
        finished.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) {
    if (c->thread.joinable()) c->thread.join();
  }
}

}  // namespace solarmon
