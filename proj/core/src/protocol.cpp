#include "solarmon/protocol.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "solarmon/number_format.hpp"

namespace solarmon::protocol {

namespace {

constexpr std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformed, what);
}

// Next '\n'-terminated line starting at pos; the returned view excludes the
// newline. Returns false when no complete line remains.
bool next_line(std::string_view bytes, std::size_t& pos, std::string_view& line) {
  if (pos >= bytes.size()) return false;
  const std::size_t nl = bytes.find('\n', pos);
  if (nl == std::string_view::npos) return false;
  line = bytes.substr(pos, nl - pos);
  pos = nl + 1;
  return true;
}

bool parse_hex32(std::string_view s, std::uint32_t& out) {
  if (s.size() != 8) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 16);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

double parse_real(std::string_view s, const char* what) {
  auto v = parse_double(s);
  if (!v || !std::isfinite(*v)) malformed(std::string("bad ") + what);
  return *v;
}

}  // namespace

std::uint32_t crc32_update(std::uint32_t crc, std::string_view bytes) {
  crc = ~crc;
  for (unsigned char b : bytes) crc = kCrcTable[(crc ^ b) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

std::uint32_t crc32(std::string_view bytes) { return crc32_update(0, bytes); }

std::string crc32_hex(std::uint32_t crc) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(8, '0');
  for (int i = 7; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[crc & 0xf];
    crc >>= 4;
  }
  return out;
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t sp = line.find(' ', pos);
    out.push_back(line.substr(pos, sp == std::string_view::npos ? line.npos : sp - pos));
    if (sp == std::string_view::npos) break;
    pos = sp + 1;
  }
  return out;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (s.empty() || s.size() > 20) return std::nullopt;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void append_reading(std::string& out, const PanelReading& r) {
  out += "R ";
  out += r.panel_id;
  out += ' ';
  out += std::to_string(r.ts);
  out += ' ';
  out += std::to_string(r.seq);
  for (double v : {r.volts, r.amps, r.watts, r.module_temp_c}) {
    out += ' ';
    append_double(out, v);
  }
}

std::string format_reading(const PanelReading& r) {
  std::string s;
  append_reading(s, r);
  return s;
}

PanelReading parse_reading(std::string_view line) {
  const auto tok = split_tokens(line);
  if (tok.size() != 8 || tok[0] != "R") malformed("reading line needs 8 fields");
  PanelReading r;
  if (!is_valid_id(tok[1])) malformed("bad panel id");
  r.panel_id = std::string(tok[1]);
  auto ts = parse_u64(tok[2]);
  if (!ts || *ts > static_cast<std::uint64_t>(INT64_MAX)) malformed("bad ts");
  r.ts = static_cast<Timestamp>(*ts);
  auto seq = parse_u64(tok[3]);
  if (!seq) malformed("bad seq");
  r.seq = *seq;
  r.volts = parse_real(tok[4], "volts");
  r.amps = parse_real(tok[5], "amps");
  r.watts = parse_real(tok[6], "watts");
  r.module_temp_c = parse_real(tok[7], "temp_c");
  return r;
}

std::string encode_batch(std::string_view /*logger_id*/, std::uint64_t batch_id,
                         const std::vector<PanelReading>& readings) {
  std::string payload;
  payload.reserve(readings.size() * 72);
  for (const auto& r : readings) {
    append_reading(payload, r);
    payload += '\n';
  }
  std::string out = "BATCH " + std::to_string(batch_id) + " " + std::to_string(readings.size()) +
                    "\n";
  out += payload;
  out += "END ";
  out += crc32_hex(crc32(payload));
  out += '\n';
  return out;
}

Frame parse_frame(std::string_view bytes) {
  std::size_t pos = 0;
  std::string_view header;
  if (!next_line(bytes, pos, header)) malformed("missing BATCH line");
  const auto htok = split_tokens(header);
  if (htok.size() != 3 || htok[0] != "BATCH") malformed("bad BATCH line");
  auto batch_id = parse_u64(htok[1]);
  auto count = parse_u64(htok[2]);
  if (!batch_id || !count) malformed("bad BATCH numbers");

  // The END line is the final line; nothing may follow it.
  if (bytes.back() != '\n') malformed("frame not newline terminated");
  const std::size_t last_start = [&] {
    const std::size_t prev = bytes.rfind('\n', bytes.size() - 2);
    return prev == std::string_view::npos ? std::size_t{0} : prev + 1;
  }();
  if (last_start < pos) malformed("missing END line");
  const std::string_view end_line = bytes.substr(last_start, bytes.size() - 1 - last_start);
  const auto etok = split_tokens(end_line);
  std::uint32_t declared = 0;
  if (etok.size() != 2 || etok[0] != "END" || !parse_hex32(etok[1], declared)) {
    malformed("bad END line");
  }
  const std::string_view payload = bytes.substr(pos, last_start - pos);
  if (crc32(payload) != declared) throw Error(ErrorCode::kChecksum, "checksum mismatch");

  Frame frame;
  frame.batch_id = *batch_id;
  std::size_t ppos = 0;
  std::string_view line;
  while (next_line(payload, ppos, line)) {
    if (frame.readings.size() >= *count) malformed("more reading lines than declared");
    frame.readings.push_back(parse_reading(line));
  }
  if (frame.readings.size() != *count) malformed("fewer reading lines than declared");
  return frame;
}

Hello parse_hello(std::string_view line) {
  const auto tok = split_tokens(line);
  if (tok.size() != 3 || tok[0] != "HELLO" || !is_valid_id(tok[1])) malformed("bad HELLO");
  auto ver = parse_u64(tok[2]);
  if (!ver) malformed("bad HELLO version");
  if (*ver != static_cast<std::uint64_t>(kVersion)) {
    throw Error(ErrorCode::kVersion, "unsupported protocol version " + std::string(tok[2]));
  }
  return {std::string(tok[1]), kVersion};
}

std::string format_command(const Command& cmd) {
  std::string out = "CMD " + cmd.command_id + " " + cmd.panel_id + " ";
  out += to_string(cmd.action);
  if (cmd.action == CommandAction::kSetDerate && cmd.derate) {
    out += ' ';
    append_double(out, *cmd.derate);
  }
  return out;
}

CommandLine parse_command(std::string_view line) {
  const auto tok = split_tokens(line);
  if (tok.size() < 4 || tok.size() > 5 || tok[0] != "CMD") malformed("bad CMD line");
  CommandLine c;
  if (!is_valid_id(tok[1]) || !is_valid_id(tok[2])) malformed("bad CMD ids");
  c.command_id = std::string(tok[1]);
  c.panel_id = std::string(tok[2]);
  auto action = parse_command_action(tok[3]);
  if (!action) malformed("bad CMD action");
  c.action = *action;
  if (tok.size() == 5) c.derate = parse_real(tok[4], "derate");
  if ((c.action == CommandAction::kSetDerate) != c.derate.has_value()) {
    malformed("derate required iff set_derate");
  }
  return c;
}

}  // namespace solarmon::protocol
