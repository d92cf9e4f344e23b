#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/model.hpp"

// Telemetry wire protocol v1. Line oriented, UTF-8, '\n' terminated:
//
//   C->S  HELLO <logger_id> 1
//   S->C  WELCOME 1 <k>, then k lines HW <panel_id> <seq>
//   C->S  BATCH <batch_id> <count>
//         R <panel_id> <ts> <seq> <volts> <amps> <watts> <temp_c>   (x count)
//         END <crc32-hex-lowercase-8>
//   S->C  OK <batch_id> | ERR <code> <message>
//   S->C  CMD <command_id> <panel_id> <action> [<derate>]
//   C->S  CMDACK <command_id>
//
// The END checksum covers the reading lines, newlines included.
namespace solarmon::protocol {

inline constexpr int kVersion = 1;

// CRC-32/ISO-HDLC (reflected 0x04C11DB7, init and xorout 0xFFFFFFFF).
std::uint32_t crc32(std::string_view bytes);
std::uint32_t crc32_update(std::uint32_t crc, std::string_view bytes);

std::string crc32_hex(std::uint32_t crc);

struct Frame {
  std::uint64_t batch_id = 0;
  std::string logger_id;  // supplied by the session, not carried in the bytes
  std::vector<PanelReading> readings;

  bool operator==(const Frame&) const = default;
};

// `R <panel_id> <ts> <seq> <volts> <amps> <watts> <temp_c>` without newline.
std::string format_reading(const PanelReading& r);
void append_reading(std::string& out, const PanelReading& r);
// Throws Error(kMalformed).
PanelReading parse_reading(std::string_view line);

// Deterministic frame bytes. logger_id is accepted for symmetry with the
// session; it is not part of the frame.
std::string encode_batch(std::string_view logger_id, std::uint64_t batch_id,
                         const std::vector<PanelReading>& readings);

// Strict parse of one complete frame, BATCH line through END line inclusive.
// Throws Error(kMalformed) or Error(kChecksum). Never reads past `bytes`.
Frame parse_frame(std::string_view bytes);

struct Hello {
  std::string logger_id;
  int version = 0;
};

// Throws Error(kMalformed) for bad structure, Error(kVersion) for versions
// other than 1.
Hello parse_hello(std::string_view line);

struct CommandLine {
  std::string command_id;
  std::string panel_id;
  CommandAction action = CommandAction::kEnable;
  std::optional<double> derate;
};

std::string format_command(const Command& cmd);
CommandLine parse_command(std::string_view line);

// Splits on single spaces; empty tokens (double spaces) are kept so callers
// can reject them.
std::vector<std::string_view> split_tokens(std::string_view line);
std::optional<std::uint64_t> parse_u64(std::string_view s);

}  // namespace solarmon::protocol
