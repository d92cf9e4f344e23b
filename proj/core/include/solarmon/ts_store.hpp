#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "solarmon/fleet.hpp"
#include "solarmon/model.hpp"

namespace solarmon {

// Trapezoidal energy in Wh over readings sorted by ts. Pairs further apart
// than 3 * sample_interval_s contribute nothing; fewer than two readings
// integrate to 0.
double integrate_energy(std::span<const PanelReading> readings, std::int64_t sample_interval_s);

struct StoreOptions {
  // Directory for the append-only logs; empty means memory only.
  std::filesystem::path data_dir;
  std::int64_t sample_interval_s = 300;
  bool fsync = true;
  // Raw readings kept in memory per panel, measured back from the latest
  // reading. 0 keeps everything. Older ranges are read back from the logs.
  std::int64_t raw_retention_s = 2 * kSecondsPerDay;
};

enum class AppendResult { kStored, kDuplicate };

struct BucketTotals {
  double energy_wh = 0.0;
  std::int64_t samples = 0;
};

// Log line `<crc32-hex> R <panel_id> <ts> <seq> <volts> <amps> <watts> <temp_c>`;
// the checksum covers the text after the first space.
std::string format_log_line(const PanelReading& r);

enum class LogLineStatus { kOk, kBadChecksum, kMalformed };
// Parses one log line without its newline.
LogLineStatus parse_log_line(std::string_view line, PanelReading& out);

// Log file name for a site and UTC day: <site>/<YYYY-MM-DD>.log.
std::filesystem::path log_file_path(const std::filesystem::path& data_dir,
                                    std::string_view site_id, Timestamp ts);

// Durable append-only reading log with an in-memory index (high-water marks,
// latest readings, hour/day energy accumulators). The index is rebuilt from
// the logs on construction.
//
// Appends are serialized; queries run concurrently with each other and
// observe whole batches only.
class TsStore {
 public:
  // Recovers from opts.data_dir when set. Throws Error(kCorrupt) for damaged
  // lines before the tail of a log and Error(kIo) when the directory is not
  // usable.
  TsStore(Fleet fleet, StoreOptions opts);
  ~TsStore();
  TsStore(const TsStore&) = delete;
  TsStore& operator=(const TsStore&) = delete;

  // Throws Error(kUnknownPanel) for panels outside the fleet and Error(kIo)
  // when the log cannot be written; after an I/O failure every append fails.
  AppendResult append(const PanelReading& r);
  // Appends in order and makes the batch durable before returning.
  std::vector<AppendResult> append_batch(std::span<const PanelReading> readings);

  // Stored readings with from <= ts < to, ascending ts.
  std::vector<PanelReading> query_raw(std::string_view panel_id, Timestamp from,
                                      Timestamp to) const;
  std::optional<PanelReading> latest(std::string_view panel_id) const;
  std::optional<std::uint64_t> high_water(std::string_view panel_id) const;
  // Panels with at least one stored reading.
  std::vector<std::pair<std::string, std::uint64_t>> high_water_marks() const;

  // One bucket per aligned period intersecting [from, to), zero-filled.
  // Site buckets sum the member panels. Unknown subjects yield zeros.
  std::vector<EnergyBucket> rollup(SubjectKind kind, std::string_view subject_id,
                                   Resolution res, Timestamp from, Timestamp to) const;

  BucketTotals panel_bucket(std::size_t panel_idx, Resolution res, Timestamp start) const;
  // Mean watts of retained readings with from < ts <= to.
  std::optional<double> mean_watts(std::size_t panel_idx, Timestamp from, Timestamp to) const;
  std::optional<PanelReading> latest(std::size_t panel_idx) const;

  std::uint64_t reading_count() const;
  // Largest stored reading timestamp.
  std::optional<Timestamp> max_ts() const;
  // Lines dropped from the log tails during recovery.
  std::size_t torn_lines_discarded() const { return torn_lines_; }

  const Fleet& fleet() const { return fleet_; }
  const StoreOptions& options() const { return opts_; }

 private:
  struct RawPoint {
    Timestamp ts;
    std::uint64_t seq;
    double volts, amps, watts, temp_c;
  };
  using BucketSeries = std::vector<std::pair<Timestamp, BucketTotals>>;
  struct PanelIndex {
    std::optional<PanelReading> latest;
    std::uint64_t count = 0;
    BucketSeries hours;
    BucketSeries days;
    std::deque<RawPoint> tail;
    // Readings before this ts may have been evicted from `tail`.
    Timestamp tail_complete_from = INT64_MIN;
  };
  class LogWriter;

  AppendResult apply_locked(std::size_t panel_idx, const PanelReading& r, bool write);
  void accumulate(std::size_t panel_idx, const PanelReading& prev, const PanelReading& cur);
  static BucketTotals& bucket_at(BucketSeries& series, Timestamp start);
  static BucketTotals bucket_lookup(const BucketSeries& series, Timestamp start);
  void recover();
  std::vector<PanelReading> read_logs(std::size_t panel_idx, Timestamp from, Timestamp to) const;

  Fleet fleet_;
  StoreOptions opts_;
  std::vector<PanelIndex> index_;
  std::uint64_t total_ = 0;
  std::optional<Timestamp> max_ts_;
  std::size_t torn_lines_ = 0;
  bool failed_ = false;
  std::unique_ptr<LogWriter> writer_;
  mutable std::shared_mutex mu_;
};

}  // namespace solarmon
