// dstreamon-probe: runs one monitoring probe. Control channel on stdin/stdout:
// one request per line ("STATUS" | "STOP"), one "OK <json>" / "ERR <msg>" reply.

#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dstreamon/net/socket.hpp"
#include "dstreamon/probe/config.hpp"
#include "dstreamon/probe/runtime.hpp"

namespace {

std::mutex out_mu;
std::condition_variable idle_cv;
int in_flight = 0;

void reply(const std::string& line) {
  std::lock_guard lk(out_mu);
  std::fwrite(line.data(), 1, line.size(), stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"D-StreaMon monitoring probe"};
  std::string config_path;
  std::string status_path;
  std::string log_level = "info";
  bool exit_on_eof = false;
  app.add_option("--config", config_path, "probe configuration (key=value file)")->required();
  app.add_option("--status-file", status_path, "status snapshot path (default: status.json beside the config)");
  app.add_flag("--exit-on-control-eof", exit_on_eof, "stop when the control channel (stdin) closes");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dstreamon::probe::exit_code::kConfig;
  }

  // stdout is the control channel; logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("probe"));
  spdlog::set_level(spdlog::level::from_str(log_level));
  dstreamon::net::ignore_sigpipe();

  dstreamon::probe::ProbeConfig config;
  try {
    config = dstreamon::probe::load_probe_config(config_path);
  } catch (const std::exception& e) {
    spdlog::error("config error: {}", e.what());
    return dstreamon::probe::exit_code::kConfig;
  }

  dstreamon::probe::RuntimeOptions opts;
  opts.status_path = !status_path.empty()
                         ? status_path
                         : (std::filesystem::path(config_path).parent_path() / "status.json").string();
  dstreamon::probe::ProbeRuntime runtime(config, opts);

  std::thread([&runtime, exit_on_eof] {
    std::string line;
    while (std::getline(std::cin, line)) {
      {
        std::lock_guard lk(out_mu);
        ++in_flight;
      }
      reply(runtime.handle_command(line));
      {
        std::lock_guard lk(out_mu);
        --in_flight;
      }
      idle_cv.notify_all();
    }
    if (exit_on_eof) {
      spdlog::info("control channel closed; stopping");
      runtime.request_stop();
    }
  }).detach();

  int code = runtime.run();
  spdlog::info("probe {} finished with exit code {}", config.probe_id, code);

  // Let an in-flight STOP/STATUS reply go out before exiting.
  {
    std::unique_lock lk(out_mu);
    idle_cv.wait_for(lk, std::chrono::seconds(2), [] { return in_flight == 0; });
  }
  std::fflush(stdout);
  std::fflush(stderr);
  spdlog::shutdown();
  std::_Exit(code);
}
