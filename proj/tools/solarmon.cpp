// solarmon: serve, simulate, replay and scenario studies.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "solarmon/config.hpp"
#include "solarmon/drivers.hpp"
#include "solarmon/fleet.hpp"
#include "solarmon/net.hpp"
#include "solarmon/scenario.hpp"
#include "solarmon/service.hpp"
#include "solarmon/web_api.hpp"

namespace fs = std::filesystem;
using namespace solarmon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;

struct ServeArgs {
  std::string http = "127.0.0.1:8080";
  std::string ingest = "127.0.0.1:7070";
  std::string data_dir;
  std::string config;
};

struct SimulateArgs {
  std::string server;
  std::string fleet;
  std::string sites;
  std::string faults;
  std::uint64_t seed = 1;
  double speedup = 1.0;
  std::int64_t interval = 300;
  double variability = 0.0;
  std::int64_t start = 0;
  std::int64_t duration = kSecondsPerDay;
};

struct ReplayArgs {
  std::string input;
  std::string server;
};

struct ScenarioArgs {
  int days = 365;
  std::size_t panels = 100;
  std::string profile;
  std::string repair = "monitored";
  std::uint64_t seed = 1;
};

void log_stderr(std::string_view msg) { std::cerr << "solarmon: " << msg << "\n"; }

int serve(const ServeArgs& a) {
  ServerConfig cfg;
  if (!a.config.empty()) cfg = load_server_config(a.config);
  const fs::path data_dir(a.data_dir);
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create data dir " + a.data_dir + ": " + ec.message());

  const fs::path fleet_file = cfg.fleet_file.empty() ? data_dir / "fleet.csv" : cfg.fleet_file;
  const fs::path sites_file = cfg.sites_file.empty() ? data_dir / "sites.csv" : cfg.sites_file;
  Fleet fleet;
  if (fs::exists(fleet_file) || fs::exists(sites_file)) {
    fleet = load_fleet(fleet_file, sites_file);
  } else {
    log_stderr("no fleet registry at " + fleet_file.string() + "; serving an empty fleet");
  }

  // Signals are consumed by sigtimedwait below, never by a handler.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  MonitorService service(std::move(fleet), cfg, data_dir);
  IngestServer ingest(service, TcpListener::bind(parse_host_port(a.ingest)));
  HttpServer http(service, cfg.static_dir);
  const HostPort http_addr = parse_host_port(a.http);
  http.bind(http_addr);
  ingest.start();
  http.start();
  std::cout << "serving http=" << http_addr.host << ":" << http.port()
            << " ingest=" << parse_host_port(a.ingest).host << ":" << ingest.port()
            << " readings=" << service.store().reading_count() << std::endl;

  const std::int64_t tick = cfg.clock == ClockMode::kWall ? cfg.detectors.sweep_interval_s : 1;
  for (;;) {
    timespec ts{static_cast<time_t>(tick), 0};
    const int sig = sigtimedwait(&sigs, nullptr, &ts);
    if (sig == SIGINT || sig == SIGTERM) break;
    if (cfg.clock == ClockMode::kWall) service.tick();
  }
  http.stop();
  ingest.stop();
  std::cout << "stopped readings=" << service.store().reading_count() << std::endl;
  return kExitOk;
}

int simulate(const SimulateArgs& a) {
  const Fleet fleet = load_fleet(a.fleet, a.sites);
  SimulateOptions opts;
  opts.seed = a.seed;
  opts.speedup = a.speedup;
  opts.sample_interval_s = a.interval;
  opts.cloud_variability = a.variability;
  opts.start_ts = a.start;
  opts.duration_s = a.duration;
  opts.log = log_stderr;
  if (!a.faults.empty()) {
    std::ifstream in(a.faults);
    if (!in) throw Error(ErrorCode::kIo, "cannot open faults " + a.faults);
    opts.faults = parse_faults(in, a.faults, &fleet);
  }
  const auto s = run_simulation(fleet, opts, tcp_connector(parse_host_port(a.server)));
  std::cout << "steps=" << s.steps << ",readings_generated=" << s.readings_generated
            << ",readings_sent=" << s.client.readings_acked << ",acks=" << s.client.frames_acked
            << ",retries=" << s.client.retries << ",drops=" << s.client.readings_dropped
            << ",commands_applied=" << s.client.commands_applied << "\n";
  if (!s.drained) {
    log_stderr("server unreachable; undelivered readings remain");
    return kExitUsage;
  }
  return kExitOk;
}

int replay(const ReplayArgs& a) {
  const auto s = run_replay(a.input, tcp_connector(parse_host_port(a.server)),
                            std::chrono::seconds(120), log_stderr);
  std::cout << "readings=" << s.readings << ",sent=" << s.client.readings_acked
            << ",already_stored=" << s.client.readings_pruned << ",frames=" << s.frames
            << ",corrupt_lines=" << s.corrupt_lines << "\n";
  if (!s.drained) {
    log_stderr("server unreachable; replay incomplete");
    return kExitUsage;
  }
  return kExitOk;
}

int scenario(const ScenarioArgs& a) {
  ScenarioOptions opts;
  opts.days = a.days;
  opts.panels = a.panels;
  opts.seed = a.seed;
  opts.repair = *parse_repair_policy(a.repair);
  if (!a.profile.empty()) opts.profile = load_fault_profile(a.profile);
  const auto report = run_lost_energy(opts);
  std::cout << format_report_line(report) << "\n" << format_report_table(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"solarmon: solar panel fleet monitoring"};
  app.require_subcommand(1);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the ingest listener, watchdog and HTTP API");
  serve_cmd->add_option("--http", serve_args.http, "HTTP listen address host:port")->required();
  serve_cmd->add_option("--ingest", serve_args.ingest, "Logger listen address host:port")
      ->required();
  serve_cmd->add_option("--data-dir", serve_args.data_dir, "Store directory")->required();
  serve_cmd->add_option("--config", serve_args.config, "Server config file")
      ->check(CLI::ExistingFile);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the simulated farm against a server");
  sim_cmd->add_option("--server", sim_args.server, "Ingest address host:port")->required();
  sim_cmd->add_option("--fleet", sim_args.fleet, "Panel CSV")->required();
  sim_cmd->add_option("--sites", sim_args.sites, "Site CSV")->required();
  sim_cmd->add_option("--faults", sim_args.faults, "Fault CSV");
  sim_cmd->add_option("--seed", sim_args.seed, "Simulation seed")->required();
  sim_cmd->add_option("--speedup", sim_args.speedup, "Virtual seconds per wall second")
      ->required()
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--interval", sim_args.interval, "Sample interval, s")
      ->check(CLI::PositiveNumber);
  sim_cmd->add_option("--variability", sim_args.variability, "Cloud variability 0..1")
      ->check(CLI::Range(0.0, 1.0));
  sim_cmd->add_option("--start", sim_args.start, "Virtual start, UTC seconds");
  sim_cmd->add_option("--duration", sim_args.duration, "Virtual duration, s")
      ->check(CLI::NonNegativeNumber);

  ReplayArgs replay_args;
  auto* replay_cmd = app.add_subcommand("replay", "Re-send stored logs to a server");
  replay_cmd->add_option("--input", replay_args.input, "Log file or data directory")->required();
  replay_cmd->add_option("--server", replay_args.server, "Ingest address host:port")->required();

  auto* scenario_cmd = app.add_subcommand("scenario", "Scenario studies");
  scenario_cmd->require_subcommand(1);
  ScenarioArgs sc_args;
  auto* lost_cmd =
      scenario_cmd->add_subcommand("lost-energy", "Monitored vs unmonitored energy loss");
  lost_cmd->add_option("--days", sc_args.days, "Simulated days")->check(CLI::NonNegativeNumber);
  lost_cmd->add_option("--panels", sc_args.panels, "Panel count")->check(CLI::PositiveNumber);
  lost_cmd->add_option("--fault-profile", sc_args.profile, "Fault profile file")
      ->check(CLI::ExistingFile);
  lost_cmd->add_option("--repair", sc_args.repair, "monitored or none")
      ->check(CLI::IsMember({"monitored", "none"}));
  lost_cmd->add_option("--seed", sc_args.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*serve_cmd) return serve(serve_args);
    if (*sim_cmd) return simulate(sim_args);
    if (*replay_cmd) return replay(replay_args);
    if (*lost_cmd) return scenario(sc_args);
  } catch (const Error& e) {
    std::cerr << "solarmon: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "solarmon: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
