#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "solarmon/net.hpp"
#include "solarmon/service.hpp"

namespace solarmon {

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using QueryParams = std::map<std::string, std::string, std::less<>>;

// JSON endpoints under /api/v1, independent of the HTTP server. Errors are
// `{"code": ..., "message": ...}` with a 4xx status.
class WebApi {
 public:
  static constexpr std::int64_t kMaxRangeS = 366 * kSecondsPerDay;

  explicit WebApi(MonitorService& service) : service_(service) {}

  ApiResponse handle(std::string_view method, std::string_view path, const QueryParams& query,
                     std::string_view body);

 private:
  ApiResponse health() const;
  ApiResponse fleet() const;
  ApiResponse panel(std::string_view id) const;
  ApiResponse series(std::string_view id, const QueryParams& q) const;
  ApiResponse site_yield(std::string_view id, const QueryParams& q) const;
  ApiResponse alerts(const QueryParams& q) const;
  ApiResponse ack(std::string_view id);
  ApiResponse post_command(std::string_view panel_id, std::string_view body);
  ApiResponse command(std::string_view id) const;

  MonitorService& service_;
};

ApiResponse api_error(int status, ErrorCode code, std::string_view message);

// HTTP/1.1 front end: the API, the SSE event stream at /api/v1/stream and,
// optionally, static files at "/".
class HttpServer {
 public:
  HttpServer(MonitorService& service, std::filesystem::path static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Throws Error(kIo) when the address cannot be bound. Port 0 picks one.
  void bind(const HostPort& addr);
  std::uint16_t port() const;
  // Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace solarmon
