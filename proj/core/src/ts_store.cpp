#include "solarmon/ts_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>

#include "solarmon/protocol.hpp"

namespace solarmon {

namespace fs = std::filesystem;

namespace {

std::string encode_path_component(std::string_view id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xf];
    }
  }
  return out;
}

std::string utc_date(Timestamp ts) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{floor_div(ts, kSecondsPerDay)}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

template <typename NextBoundary, typename Add>
void split_segment(Timestamp t0, double p0, Timestamp t1, double p1, NextBoundary next_boundary,
                   Add add) {
  Timestamp a = t0;
  double pa = p0;
  const double span = static_cast<double>(t1 - t0);
  while (a < t1) {
    const Timestamp boundary = next_boundary(a);
    const Timestamp b = std::min(boundary, t1);
    const double pb = b == t1 ? p1 : p0 + (p1 - p0) * static_cast<double>(b - t0) / span;
    add(a, (pa + pb) / 2.0 * static_cast<double>(b - a) / 3600.0);
    a = b;
    pa = pb;
  }
}

}  // namespace

double integrate_energy(std::span<const PanelReading> readings, std::int64_t sample_interval_s) {
  double wh = 0.0;
  const std::int64_t max_gap = 3 * sample_interval_s;
  for (std::size_t i = 1; i < readings.size(); ++i) {
    const std::int64_t dt = readings[i].ts - readings[i - 1].ts;
    if (dt <= 0 || dt > max_gap) continue;
    wh += (readings[i - 1].watts + readings[i].watts) / 2.0 * static_cast<double>(dt) / 3600.0;
  }
  return wh;
}

std::string format_log_line(const PanelReading& r) {
  const std::string body = protocol::format_reading(r);
  return protocol::crc32_hex(protocol::crc32(body)) + " " + body;
}

LogLineStatus parse_log_line(std::string_view line, PanelReading& out) {
  if (line.size() < 10 || line[8] != ' ') return LogLineStatus::kMalformed;
  const std::string_view body = line.substr(9);
  if (protocol::crc32_hex(protocol::crc32(body)) != line.substr(0, 8)) {
    return LogLineStatus::kBadChecksum;
  }
  try {
    out = protocol::parse_reading(body);
  } catch (const Error&) {
    return LogLineStatus::kMalformed;
  }
  return LogLineStatus::kOk;
}

fs::path log_file_path(const fs::path& data_dir, std::string_view site_id, Timestamp ts) {
  return data_dir / encode_path_component(site_id) / (utc_date(ts) + ".log");
}

// Keeps a handful of log files open for appending.
class TsStore::LogWriter {
 public:
  LogWriter(fs::path dir, bool fsync) : dir_(std::move(dir)), fsync_(fsync) {}
  ~LogWriter() {
    for (auto& [path, f] : files_) std::fclose(f.file);
  }

  void write(std::string_view site_id, Timestamp ts, const std::string& line) {
    const fs::path path = log_file_path(dir_, site_id, ts);
    auto it = files_.find(path);
    if (it == files_.end()) {
      if (files_.size() >= kMaxOpen) evict_oldest();
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
      std::FILE* f = std::fopen(path.c_str(), "ab");
      if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
      it = files_.emplace(path, OpenFile{f, ++clock_, false}).first;
    }
    it->second.last_use = ++clock_;
    it->second.dirty = true;
    if (std::fwrite(line.data(), 1, line.size(), it->second.file) != line.size() ||
        std::fputc('\n', it->second.file) == EOF) {
      throw Error(ErrorCode::kIo, "write failed on " + path.string());
    }
  }

  void flush() {
    for (auto& [path, f] : files_) {
      if (!f.dirty) continue;
      if (std::fflush(f.file) != 0) throw Error(ErrorCode::kIo, "flush failed on " + path.string());
      if (fsync_ && ::fsync(::fileno(f.file)) != 0) {
        throw Error(ErrorCode::kIo, "fsync failed on " + path.string());
      }
      f.dirty = false;
    }
  }

 private:
  static constexpr std::size_t kMaxOpen = 16;
  struct OpenFile {
    std::FILE* file;
    std::uint64_t last_use;
    bool dirty;
  };

  void evict_oldest() {
    auto oldest = std::min_element(files_.begin(), files_.end(), [](const auto& a, const auto& b) {
      return a.second.last_use < b.second.last_use;
    });
    std::fflush(oldest->second.file);
    if (fsync_) ::fsync(::fileno(oldest->second.file));
    std::fclose(oldest->second.file);
    files_.erase(oldest);
  }

  fs::path dir_;
  bool fsync_;
  std::map<fs::path, OpenFile> files_;
  std::uint64_t clock_ = 0;
};

TsStore::TsStore(Fleet fleet, StoreOptions opts)
    : fleet_(std::move(fleet)), opts_(std::move(opts)), index_(fleet_.panel_count()) {
  if (opts_.sample_interval_s < 1) throw Error(ErrorCode::kInvalidArgument, "bad sample interval");
  if (!opts_.data_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opts_.data_dir, ec);
    if (!fs::is_directory(opts_.data_dir)) {
      throw Error(ErrorCode::kIo, "data directory unusable: " + opts_.data_dir.string());
    }
    recover();
    writer_ = std::make_unique<LogWriter>(opts_.data_dir, opts_.fsync);
  }
}

TsStore::~TsStore() = default;

BucketTotals& TsStore::bucket_at(BucketSeries& series, Timestamp start) {
  if (series.empty() || series.back().first < start) {
    series.emplace_back(start, BucketTotals{});
    return series.back().second;
  }
  auto it = std::lower_bound(series.begin(), series.end(), start,
                             [](const auto& e, Timestamp t) { return e.first < t; });
  if (it == series.end() || it->first != start) it = series.insert(it, {start, BucketTotals{}});
  return it->second;
}

BucketTotals TsStore::bucket_lookup(const BucketSeries& series, Timestamp start) {
  auto it = std::lower_bound(series.begin(), series.end(), start,
                             [](const auto& e, Timestamp t) { return e.first < t; });
  if (it == series.end() || it->first != start) return {};
  return it->second;
}

void TsStore::accumulate(std::size_t panel_idx, const PanelReading& prev, const PanelReading& cur) {
  const std::int64_t dt = cur.ts - prev.ts;
  if (dt <= 0 || dt > 3 * opts_.sample_interval_s) return;
  PanelIndex& pi = index_[panel_idx];
  const int offset = fleet_.sites()[fleet_.site_of_panel(panel_idx)].utc_offset_min;
  split_segment(
      prev.ts, prev.watts, cur.ts, cur.watts,
      [](Timestamp t) { return bucket_start(t, Resolution::kHour, 0) + kSecondsPerHour; },
      [&](Timestamp a, double wh) {
        bucket_at(pi.hours, bucket_start(a, Resolution::kHour, 0)).energy_wh += wh;
      });
  split_segment(
      prev.ts, prev.watts, cur.ts, cur.watts,
      [offset](Timestamp t) { return bucket_start(t, Resolution::kDay, offset) + kSecondsPerDay; },
      [&](Timestamp a, double wh) {
        bucket_at(pi.days, bucket_start(a, Resolution::kDay, offset)).energy_wh += wh;
      });
}

AppendResult TsStore::apply_locked(std::size_t panel_idx, const PanelReading& r, bool write) {
  PanelIndex& pi = index_[panel_idx];
  if (pi.latest && r.seq <= pi.latest->seq) return AppendResult::kDuplicate;
  if (write && writer_) {
    writer_->write(fleet_.sites()[fleet_.site_of_panel(panel_idx)].site_id, r.ts,
                   format_log_line(r));
  }
  const int offset = fleet_.sites()[fleet_.site_of_panel(panel_idx)].utc_offset_min;
  bucket_at(pi.hours, bucket_start(r.ts, Resolution::kHour, 0)).samples += 1;
  bucket_at(pi.days, bucket_start(r.ts, Resolution::kDay, offset)).samples += 1;
  if (pi.latest) accumulate(panel_idx, *pi.latest, r);

  if (pi.tail.empty() || pi.tail.back().ts <= r.ts) {
    pi.tail.push_back({r.ts, r.seq, r.volts, r.amps, r.watts, r.module_temp_c});
  } else {
    auto it = std::upper_bound(pi.tail.begin(), pi.tail.end(), r.ts,
                               [](Timestamp t, const RawPoint& p) { return t < p.ts; });
    pi.tail.insert(it, {r.ts, r.seq, r.volts, r.amps, r.watts, r.module_temp_c});
  }
  if (opts_.raw_retention_s > 0) {
    const Timestamp horizon = pi.tail.back().ts - opts_.raw_retention_s;
    while (!pi.tail.empty() && pi.tail.front().ts < horizon) {
      pi.tail_complete_from = std::max(pi.tail_complete_from, pi.tail.front().ts + 1);
      pi.tail.pop_front();
    }
  }

  pi.latest = r;
  pi.count += 1;
  total_ += 1;
  max_ts_ = max_ts_ ? std::max(*max_ts_, r.ts) : r.ts;
  return AppendResult::kStored;
}

AppendResult TsStore::append(const PanelReading& r) {
  return append_batch(std::span<const PanelReading>(&r, 1)).front();
}

std::vector<AppendResult> TsStore::append_batch(std::span<const PanelReading> readings) {
  std::vector<std::size_t> indices;
  indices.reserve(readings.size());
  for (const auto& r : readings) {
    auto idx = fleet_.panel_index(r.panel_id);
    if (!idx) throw Error(ErrorCode::kUnknownPanel, "unknown panel " + r.panel_id);
    indices.push_back(*idx);
  }
  std::unique_lock lock(mu_);
  if (failed_) throw Error(ErrorCode::kIo, "store is in a failed state");
  std::vector<AppendResult> results;
  results.reserve(readings.size());
  try {
    for (std::size_t i = 0; i < readings.size(); ++i) {
      results.push_back(apply_locked(indices[i], readings[i], true));
    }
    if (writer_) writer_->flush();
  } catch (const Error&) {
    failed_ = true;
    throw;
  }
  return results;
}

std::vector<PanelReading> TsStore::read_logs(std::size_t panel_idx, Timestamp from,
                                             Timestamp to) const {
  std::vector<PanelReading> out;
  const PanelSpec& spec = fleet_.panels()[panel_idx];
  const std::string& site_id = fleet_.sites()[fleet_.site_of_panel(panel_idx)].site_id;
  for (std::int64_t day = floor_div(from, kSecondsPerDay); day <= floor_div(to - 1, kSecondsPerDay);
       ++day) {
    std::ifstream in(log_file_path(opts_.data_dir, site_id, day * kSecondsPerDay));
    if (!in) continue;
    std::string line;
    while (std::getline(in, line)) {
      PanelReading r;
      if (parse_log_line(line, r) != LogLineStatus::kOk) continue;
      if (r.panel_id == spec.panel_id && r.ts >= from && r.ts < to) out.push_back(std::move(r));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PanelReading& a, const PanelReading& b) { return a.ts < b.ts; });
  return out;
}

std::vector<PanelReading> TsStore::query_raw(std::string_view panel_id, Timestamp from,
                                             Timestamp to) const {
  auto idx = fleet_.panel_index(panel_id);
  if (!idx || from >= to) return {};
  std::shared_lock lock(mu_);
  const PanelIndex& pi = index_[*idx];
  if (from < pi.tail_complete_from && !opts_.data_dir.empty()) {
    return read_logs(*idx, from, to);
  }
  std::vector<PanelReading> out;
  auto it = std::lower_bound(pi.tail.begin(), pi.tail.end(), from,
                             [](const RawPoint& p, Timestamp t) { return p.ts < t; });
  for (; it != pi.tail.end() && it->ts < to; ++it) {
    out.push_back({std::string(panel_id), it->ts, it->seq, it->volts, it->amps, it->watts,
                   it->temp_c});
  }
  return out;
}

std::optional<PanelReading> TsStore::latest(std::string_view panel_id) const {
  auto idx = fleet_.panel_index(panel_id);
  if (!idx) return std::nullopt;
  return latest(*idx);
}

std::optional<PanelReading> TsStore::latest(std::size_t panel_idx) const {
  std::shared_lock lock(mu_);
  return index_[panel_idx].latest;
}

std::optional<std::uint64_t> TsStore::high_water(std::string_view panel_id) const {
  auto r = latest(panel_id);
  if (!r) return std::nullopt;
  return r->seq;
}

std::vector<std::pair<std::string, std::uint64_t>> TsStore::high_water_marks() const {
  std::shared_lock lock(mu_);
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (std::size_t i = 0; i < index_.size(); ++i) {
    if (index_[i].latest) out.emplace_back(fleet_.panels()[i].panel_id, index_[i].latest->seq);
  }
  return out;
}

BucketTotals TsStore::panel_bucket(std::size_t panel_idx, Resolution res, Timestamp start) const {
  std::shared_lock lock(mu_);
  const PanelIndex& pi = index_[panel_idx];
  return bucket_lookup(res == Resolution::kHour ? pi.hours : pi.days, start);
}

std::optional<double> TsStore::mean_watts(std::size_t panel_idx, Timestamp from,
                                          Timestamp to) const {
  std::shared_lock lock(mu_);
  const auto& tail = index_[panel_idx].tail;
  double sum = 0;
  std::size_t n = 0;
  for (auto it = tail.rbegin(); it != tail.rend() && it->ts > from; ++it) {
    if (it->ts <= to) {
      sum += it->watts;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<EnergyBucket> TsStore::rollup(SubjectKind kind, std::string_view subject_id,
                                          Resolution res, Timestamp from, Timestamp to) const {
  std::vector<std::size_t> members;
  int offset = 0;
  if (kind == SubjectKind::kPanel) {
    if (auto idx = fleet_.panel_index(subject_id)) {
      members.push_back(*idx);
      offset = fleet_.sites()[fleet_.site_of_panel(*idx)].utc_offset_min;
    }
  } else if (auto sidx = fleet_.site_index(subject_id)) {
    members = fleet_.panels_of_site(*sidx);
    offset = fleet_.sites()[*sidx].utc_offset_min;
  }
  std::vector<EnergyBucket> out;
  if (from >= to) return out;
  const std::int64_t len = resolution_seconds(res);
  std::shared_lock lock(mu_);
  for (Timestamp start = bucket_start(from, res, offset); start < to; start += len) {
    EnergyBucket b{kind, std::string(subject_id), start, res, 0.0, 0};
    for (std::size_t m : members) {
      const PanelIndex& pi = index_[m];
      const BucketTotals t = bucket_lookup(res == Resolution::kHour ? pi.hours : pi.days, start);
      b.energy_wh += t.energy_wh;
      b.samples += t.samples;
    }
    if (b.samples == 0) b.energy_wh = 0.0;
    out.push_back(std::move(b));
  }
  return out;
}

std::uint64_t TsStore::reading_count() const {
  std::shared_lock lock(mu_);
  return total_;
}

std::optional<Timestamp> TsStore::max_ts() const {
  std::shared_lock lock(mu_);
  return max_ts_;
}

void TsStore::recover() {
  struct Record {
    std::size_t panel_idx;
    PanelReading reading;
  };
  std::vector<Record> records;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(opts_.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".log") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t good_end = 0;
    while (pos < content.size()) {
      const std::size_t nl = content.find('\n', pos);
      if (nl == std::string::npos) {
        ++torn_lines_;  // partial final write
        break;
      }
      PanelReading r;
      const auto status = parse_log_line(std::string_view(content).substr(pos, nl - pos), r);
      if (status != LogLineStatus::kOk) {
        if (nl + 1 == content.size()) {
          ++torn_lines_;
          break;
        }
        throw Error(ErrorCode::kCorrupt,
                    "corrupt log line at byte " + std::to_string(pos) + " of " + path.string());
      }
      auto idx = fleet_.panel_index(r.panel_id);
      if (!idx) {
        throw Error(ErrorCode::kCorrupt, "log " + path.string() + " names unknown panel " + r.panel_id);
      }
      records.push_back({*idx, std::move(r)});
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end < content.size()) {
      std::error_code ec;
      fs::resize_file(path, good_end, ec);
      if (ec) throw Error(ErrorCode::kIo, "cannot truncate " + path.string());
    }
  }

  std::stable_sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    return a.panel_idx != b.panel_idx ? a.panel_idx < b.panel_idx
                                      : a.reading.seq < b.reading.seq;
  });
  for (const auto& rec : records) apply_locked(rec.panel_idx, rec.reading, false);
}

}  // namespace solarmon
