#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "solarmon/config.hpp"
#include "solarmon/fleet.hpp"
#include "solarmon/model.hpp"
#include "solarmon/ts_store.hpp"
#include "solarmon/watchdog.hpp"

namespace solarmon {

// Fan-out of server-push events. Every subscriber sees the same sequence.
class EventBus {
 public:
  struct Event {
    std::uint64_t id = 0;
    std::string type;
    std::string data;  // one-line JSON
  };

  class Subscription {
   public:
    // nullopt on timeout or after close().
    std::optional<Event> pop(std::chrono::milliseconds timeout);
    void close();
    // Events discarded because the subscriber fell too far behind.
    std::uint64_t overflowed() const;

   private:
    friend class EventBus;
    void push(const Event& e);

    static constexpr std::size_t kMaxQueued = 10000;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Event> queue_;
    bool closed_ = false;
    std::uint64_t overflowed_ = 0;
  };

  std::shared_ptr<Subscription> subscribe();
  void publish(std::string type, std::string data);
  std::size_t subscriber_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::weak_ptr<Subscription>> subs_;
  std::uint64_t next_id_ = 1;
};

struct IngestOutcome {
  std::size_t stored = 0;
  std::size_t duplicates = 0;
};

// Server-side state behind the ingest sessions and the HTTP API: the store,
// the watchdog and its alert registry, panel controls and the command queue.
// Appends and sweeps are serialized; reads may run concurrently.
class MonitorService {
 public:
  // `data_dir` empty keeps everything in memory. Otherwise the store is
  // recovered from its logs and the rest from the state file beside them.
  // Throws Error(kCorrupt) when either is damaged.
  MonitorService(Fleet fleet, ServerConfig config, std::filesystem::path data_dir);

  // Ingest side.
  std::vector<std::pair<std::string, std::uint64_t>> high_water_marks() const;
  // Readings must already be validated. Throws Error(kIo) when the store
  // cannot make them durable and Error(kUnknownPanel) for foreign panels.
  IngestOutcome ingest(std::string_view logger_id, const std::vector<PanelReading>& readings);
  // Queued commands for panels last reported by this logger; they become
  // delivered.
  std::vector<Command> deliver_commands(std::string_view logger_id);
  // Returns false for unknown or not-yet-delivered commands.
  bool command_applied(std::string_view command_id);
  void session_opened();
  void session_closed();
  std::size_t sessions() const;

  // Operator side. Throws Error(kUnknownPanel) / Error(kBadAction).
  Command queue_command(std::string_view panel_id, CommandAction action,
                        std::optional<double> derate);
  std::optional<Command> command(std::string_view command_id) const;
  // Throws Error(kNotFound).
  Alert ack_alert(std::string_view alert_id);
  std::vector<Alert> alerts(std::optional<bool> open) const;

  // Server clock: newest stored reading (data mode) or the system clock.
  Timestamp now() const;
  // Runs a watchdog sweep at `now` and publishes its events.
  std::vector<AlertTransition> sweep(Timestamp now);
  // Wall-clock mode driver.
  void tick();

  const Fleet& fleet() const { return fleet_; }
  const ServerConfig& config() const { return config_; }
  const TsStore& store() const { return *store_; }
  const AlertRegistry& alert_registry() const { return watchdog_.alerts(); }
  PanelControl control(std::size_t panel_idx) const;
  EventBus& events() { return events_; }

  // Latest reading newer than the offline timeout, else nothing.
  std::optional<PanelReading> fresh_reading(std::size_t panel_idx, Timestamp now) const;

 private:
  std::vector<AlertTransition> sweep_locked(Timestamp now);
  void publish_transition(const AlertTransition& t);
  void load_state();
  void save_state();
  void save_state_locked();  // caller holds writer_mu_

  Fleet fleet_;
  ServerConfig config_;
  std::unique_ptr<TsStore> store_;
  Watchdog watchdog_;
  EventBus events_;

  std::filesystem::path state_path_;  // alerts, detector memory, controls, commands
  std::mutex writer_mu_;  // appends + sweeps + state file
  std::optional<std::int64_t> last_sweep_slot_;

  mutable std::mutex state_mu_;  // controls, commands, ownership, sessions
  std::vector<PanelControl> controls_;
  std::vector<std::string> panel_owner_;
  std::vector<Command> commands_;
  std::map<std::string, std::size_t, std::less<>> command_by_id_;
  std::size_t sessions_ = 0;
};

}  // namespace solarmon
