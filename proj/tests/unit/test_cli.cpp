#include <doctest.h>
#include <httplib.h>

#include <csignal>
#include <fcntl.h>
#include <json.hpp>
#include <poll.h>
#include <regex>
#include <sys/wait.h>
#include <unistd.h>

#include "solarmon/net.hpp"
#include "solarmon/ts_store.hpp"
#include "test_support.hpp"

using nlohmann::json;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kData = SOLARMON_DATA_DIR;

// A child process with its stdout and stderr on pipes.
class Child {
 public:
  explicit Child(std::vector<std::string> args) {
    args.insert(args.begin(), SOLARMON_CLI_PATH);
    int out[2], err[2];
    REQUIRE(::pipe(out) == 0);
    REQUIRE(::pipe(err) == 0);
    pid_ = ::fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      ::dup2(out[1], 1);
      ::dup2(err[1], 2);
      ::close(out[0]);
      ::close(err[0]);
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(out[1]);
    ::close(err[1]);
    out_ = out[0];
    err_ = err[0];
  }
  ~Child() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      wait();
    }
    if (out_ >= 0) ::close(out_);
    if (err_ >= 0) ::close(err_);
  }

  // Next stdout line, waiting up to `timeout_ms`.
  std::optional<std::string> line(int timeout_ms = 20000) {
    for (;;) {
      if (const auto nl = buf_.find('\n'); nl != std::string::npos) {
        auto l = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return l;
      }
      pollfd p{out_, POLLIN, 0};
      if (::poll(&p, 1, timeout_ms) <= 0) return std::nullopt;
      char tmp[4096];
      const auto n = ::read(out_, tmp, sizeof tmp);
      if (n <= 0) return std::nullopt;
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

  int wait() {
    if (pid_ <= 0) return code_;
    std::string rest_out = drain(out_), rest_err = drain(err_);
    buf_ += rest_out;
    err_text_ += rest_err;
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return code_;
  }
  void signal(int sig) { ::kill(pid_, sig); }
  const std::string& out() const { return buf_; }
  const std::string& err() const { return err_text_; }

 private:
  static std::string drain(int fd) {
    std::string s;
    char tmp[4096];
    for (;;) {
      const auto n = ::read(fd, tmp, sizeof tmp);
      if (n <= 0) break;
      s.append(tmp, static_cast<std::size_t>(n));
    }
    return s;
  }

  pid_t pid_ = -1;
  int out_ = -1, err_ = -1;
  int code_ = -1;
  std::string buf_, err_text_;
};

struct Served {
  std::unique_ptr<Child> child;
  std::uint16_t http = 0, ingest = 0;
  std::size_t readings = 0;
};

Served serve(const fs::path& data_dir, std::string ingest = "127.0.0.1:0") {
  Served s;
  s.child = std::make_unique<Child>(std::vector<std::string>{
      "serve", "--http", "127.0.0.1:0", "--ingest", ingest, "--data-dir", data_dir.string(),
      "--config", kData + "/server.conf"});
  const auto l = s.child->line();
  REQUIRE(l.has_value());
  std::smatch m;
  REQUIRE(std::regex_search(*l, m, std::regex("http=[^:]+:(\\d+) ingest=[^:]+:(\\d+) readings=(\\d+)")));
  s.http = static_cast<std::uint16_t>(std::stoi(m[1]));
  s.ingest = static_cast<std::uint16_t>(std::stoi(m[2]));
  s.readings = std::stoul(m[3]);
  return s;
}

std::string get(std::uint16_t port, const std::string& path) {
  httplib::Client c("127.0.0.1", port);
  auto r = c.Get(path);
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return r->body;
}

int simulate(std::uint16_t ingest, std::vector<std::string> extra = {}) {
  std::vector<std::string> args = {"simulate", "--server", "127.0.0.1:" + std::to_string(ingest),
                                   "--fleet", kData + "/fleet.csv", "--sites", kData + "/sites.csv",
                                   "--seed", "3", "--speedup", "1000000", "--start", "1735646400",
                                   "--duration", "21600"};
  args.insert(args.end(), extra.begin(), extra.end());
  Child c(args);
  const int code = c.wait();
  INFO(c.err());
  return code;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  Child unknown({"serve", "--bogus"});
  CHECK(unknown.wait() == 2);
  Child none({});
  CHECK(none.wait() == 2);
  Child missing({"simulate", "--server", "127.0.0.1:1"});
  CHECK(missing.wait() == 2);
}

TEST_CASE("bad fault line exits 2 with its line number") {
  TempDir dir;
  std::ofstream(dir / "faults.csv") << "dead,S01-P0001,1735689600,0\nexploded,S01-P0002,1,0\n";
  Child c({"simulate", "--server", "127.0.0.1:1", "--fleet", kData + "/fleet.csv", "--sites",
           kData + "/sites.csv", "--faults", (dir / "faults.csv").string(), "--seed", "1",
           "--speedup", "1"});
  CHECK(c.wait() == 2);
  CHECK(c.err().find("faults.csv:2:") != std::string::npos);
}

TEST_CASE("port conflict exits 2") {
  TempDir dir;
  auto taken = solarmon::TcpListener::bind(solarmon::parse_host_port("127.0.0.1:0"));
  Child c({"serve", "--http", "127.0.0.1:0", "--ingest", "127.0.0.1:" + std::to_string(taken.port()),
           "--data-dir", dir.path().string()});
  CHECK(c.wait() == 2);
  CHECK(c.err().find("E_IO") != std::string::npos);
}

TEST_CASE("serve, simulate, restart, replay") {
  TempDir first, second;
  std::string fleet_a, yield_a;
  {
    auto s = serve(first.path());
    CHECK(s.readings == 0);
    CHECK(json::parse(get(s.http, "/api/v1/health"))["status"] == "ok");
    CHECK(simulate(s.ingest, {"--faults", kData + "/faults.csv"}) == 0);
    const auto h = json::parse(get(s.http, "/api/v1/health"));
    CHECK(h["store_readings"].get<std::size_t>() > 1000);
    fleet_a = get(s.http, "/api/v1/fleet");
    yield_a = get(s.http, "/api/v1/sites/S01/yield?res=hour&from=1735646400&to=1735732800");
    s.child->signal(SIGTERM);
    CHECK(s.child->wait() == 0);
    CHECK(s.child->out().find("stopped readings=") != std::string::npos);
  }
  std::size_t stored = 0;
  {
    // Recovery on restart.
    auto s = serve(first.path());
    CHECK(s.readings > 1000);
    stored = s.readings;
    CHECK(get(s.http, "/api/v1/fleet") == fleet_a);
    s.child->signal(SIGINT);
    CHECK(s.child->wait() == 0);
  }
  {
    auto s = serve(second.path());
    Child r({"replay", "--input", first.path().string(), "--server", "127.0.0.1:" + std::to_string(s.ingest)});
    CHECK(r.wait() == 0);
    CHECK(r.out().find("readings=" + std::to_string(stored) + ",sent=" + std::to_string(stored)) == 0);
    Child again({"replay", "--input", first.path().string(), "--server", "127.0.0.1:" + std::to_string(s.ingest)});
    CHECK(again.wait() == 0);
    CHECK(again.out().find(",sent=0,already_stored=" + std::to_string(stored)) != std::string::npos);
    CHECK(get(s.http, "/api/v1/fleet") == fleet_a);
    CHECK(get(s.http, "/api/v1/sites/S01/yield?res=hour&from=1735646400&to=1735732800") == yield_a);
  }
}

TEST_CASE("replay skips and reports a corrupt line") {
  TempDir logs, srv;
  // 1000 readings for one panel, one of them damaged.
  {
    solarmon::StoreOptions o;
    o.data_dir = logs.path();
    o.fsync = false;
    solarmon::TsStore store(testsupport::small_fleet(1, 1), o);
    for (int i = 0; i < 1000; ++i) {
      store.append(testsupport::reading("S01-P0001", testsupport::kDay0 + 60 * i, static_cast<std::uint64_t>(i + 1), 1));
    }
  }
  const auto file = solarmon::log_file_path(logs.path(), "S01", testsupport::kDay0);
  auto text = testsupport::read_file(file);
  std::size_t pos = 0;
  for (int i = 0; i < 500; ++i) pos = text.find('\n', pos) + 1;
  text[pos + 20] = text[pos + 20] == '7' ? '8' : '7';
  std::ofstream(file, std::ios::binary | std::ios::trunc) << text;

  // No --config: the registry is read from the data dir.
  std::ofstream(srv / "fleet.csv") << "panel_id,site_id,rated_watts_peak,tilt_deg,azimuth_deg,temp_coeff_per_c\nS01-P0001,S01,300,0,0,-0.004\n";
  std::ofstream(srv / "sites.csv") << "site_id,name,latitude_deg,longitude_deg,utc_offset_min\nS01,s,-18.14,178.44,720\n";
  Child server({"serve", "--http", "127.0.0.1:0", "--ingest", "127.0.0.1:0", "--data-dir", srv.path().string()});
  const auto l = server.line();
  REQUIRE(l);
  std::smatch m;
  REQUIRE(std::regex_search(*l, m, std::regex("ingest=[^:]+:(\\d+)")));
  Child r({"replay", "--input", logs.path().string(), "--server", "127.0.0.1:" + m[1].str()});
  CHECK(r.wait() == 0);
  CHECK(r.out().find("readings=999,sent=999,") == 0);
  CHECK(r.out().find("corrupt_lines=1") != std::string::npos);
}

TEST_CASE("scenario lost-energy report") {
  Child c({"scenario", "lost-energy", "--days", "5", "--panels", "10", "--repair", "none", "--seed", "2",
           "--fault-profile", kData + "/default-year.profile"});
  CHECK(c.wait() == 0);
  CHECK(std::regex_search(c.out(), std::regex("^ideal_wh=[0-9.]+,actual_wh=[0-9.]+,lost_pct=[0-9.]+,"
                                               "alerts_raised=[0-9]+,mean_detection_latency_s=[0-9]+\n")));
  Child bad({"scenario", "lost-energy", "--repair", "sometimes"});
  CHECK(bad.wait() == 2);
}
