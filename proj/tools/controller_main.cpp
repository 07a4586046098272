// dstreamon-controller: config store, probe lifecycle manager, event bus
// broker and event log behind an HTTP API.

#include <signal.h>

#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dstreamon/controller/controller.hpp"
#include "dstreamon/controller/http_api.hpp"
#include "dstreamon/net/socket.hpp"

int main(int argc, char** argv) {
  CLI::App app{"D-StreaMon controller"};
  std::string data_dir = "dstreamon-data";
  std::string host = "127.0.0.1";
  std::uint16_t http_port = 7080;
  std::uint16_t bus_port = 7500;
  std::string probe_binary;
  std::string ui_dir;
  std::string log_level = "info";
  app.add_option("--data-dir", data_dir, "directory for configs, artifacts, registry and event log")
      ->envname("DSTREAMON_DATA_DIR")
      ->capture_default_str();
  app.add_option("--host", host, "address to bind the HTTP API and bus on")->capture_default_str();
  app.add_option("--http-port", http_port, "HTTP API port (0 = any free port)")
      ->envname("DSTREAMON_HTTP_PORT")
      ->capture_default_str();
  app.add_option("--bus-port", bus_port, "event bus port (0 = any free port)")
      ->envname("DSTREAMON_BUS_PORT")
      ->capture_default_str();
  app.add_option("--probe-binary", probe_binary, "probe executable (default: dstreamon-probe beside this binary)");
  app.add_option("--ui-dir", ui_dir, "dashboard asset directory served under /ui/");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  spdlog::set_default_logger(spdlog::stderr_color_mt("controller"));
  spdlog::set_level(spdlog::level::from_str(log_level));
  dstreamon::net::ignore_sigpipe();

  // Block termination signals before any thread starts; main waits for them.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  try {
    dstreamon::controller::ControllerOptions opts;
    opts.data_dir = data_dir;
    opts.bus_listen = {host, bus_port};
    opts.probe_binary = probe_binary;
    dstreamon::controller::Controller controller(opts);
    auto bound_bus = controller.start();
    dstreamon::controller::HttpApi api(controller, ui_dir);
    auto bound_http = api.start(host, http_port);
    std::printf("http_port=%u bus_port=%u\n", static_cast<unsigned>(bound_http), static_cast<unsigned>(bound_bus));
    std::fflush(stdout);
    spdlog::info("controller ready: http://{}:{}/ui/ bus {}:{} data {}", host, bound_http, host, bound_bus, data_dir);

    int sig = 0;
    sigwait(&sigs, &sig);
    spdlog::info("signal {} received; shutting down", sig);
    api.stop();
    controller.shutdown();
  } catch (const std::exception& e) {
    spdlog::error("controller: {}", e.what());
    return 1;
  }
  return 0;
}
