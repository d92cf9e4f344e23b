#include "solarmon/ingest_session.hpp"

#include "solarmon/protocol.hpp"

namespace solarmon {

namespace {

// Messages travel on one line.
std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

}  // namespace

IngestSession::IngestSession(MonitorService& service) : service_(service) {}

IngestSession::~IngestSession() { on_disconnect(); }

void IngestSession::on_disconnect() {
  closed_ = true;
  if (counted_) {
    counted_ = false;
    service_.session_closed();
  }
}

std::string IngestSession::error_reply(ErrorCode code, std::string_view message) {
  std::string out = "ERR ";
  out += to_string(code);
  out += ' ';
  out += one_line(message);
  out += '\n';
  return out;
}

std::string IngestSession::on_line(std::string_view line) {
  if (closed_) return {};
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  if (!greeted_) return on_hello(line);

  if (in_batch_) {
    frame_.append(line);
    frame_ += '\n';
    if (frame_.size() > kMaxFrameBytes) {
      closed_ = true;
      frame_.clear();
      return error_reply(ErrorCode::kMalformed, "frame too large");
    }
    if (line.starts_with("END")) return on_frame();
    return {};
  }

  if (line.starts_with("BATCH")) {
    in_batch_ = true;
    frame_.assign(line);
    frame_ += '\n';
    return {};
  }
  if (line.starts_with("CMDACK ")) {
    service_.command_applied(line.substr(7));
    return {};
  }
  if (line.empty()) return {};
  return error_reply(ErrorCode::kMalformed, "unexpected line");
}

std::string IngestSession::on_hello(std::string_view line) {
  try {
    auto hello = protocol::parse_hello(line);
    logger_id_ = std::move(hello.logger_id);
  } catch (const Error& e) {
    closed_ = true;
    return error_reply(e.code(), e.what());
  }
  greeted_ = true;
  counted_ = true;
  service_.session_opened();
  const auto marks = service_.high_water_marks();
  std::string out = "WELCOME 1 " + std::to_string(marks.size()) + "\n";
  for (const auto& [panel, seq] : marks) {
    out += "HW ";
    out += panel;
    out += ' ';
    out += std::to_string(seq);
    out += '\n';
  }
  return out;
}

std::string IngestSession::on_frame() {
  in_batch_ = false;
  std::string bytes;
  bytes.swap(frame_);
  protocol::Frame frame;
  try {
    frame = protocol::parse_frame(bytes);
  } catch (const Error& e) {
    return error_reply(e.code(), e.what());
  }
  for (const auto& r : frame.readings) {
    if (!service_.fleet().panel_index(r.panel_id)) {
      return error_reply(ErrorCode::kUnknownPanel, "unknown panel " + r.panel_id);
    }
    const auto violations = validate_reading(r);
    if (!violations.empty()) {
      return error_reply(ErrorCode::kMalformed, "invalid reading for " + r.panel_id + ": " +
                                                    std::string(to_string(violations.front())));
    }
  }
  try {
    service_.ingest(logger_id_, frame.readings);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) closed_ = true;
    return error_reply(e.code(), e.what());
  }
  std::string out;
  for (const auto& cmd : service_.deliver_commands(logger_id_)) {
    out += protocol::format_command(cmd);
    out += '\n';
  }
  out += "OK " + std::to_string(frame.batch_id) + "\n";
  return out;
}

}  // namespace solarmon
