#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "dstreamon/controller/controller.hpp"

namespace httplib {
class Server;
}

namespace dstreamon::controller {

/// The controller's HTTP API (JSON bodies) plus static dashboard assets
/// under /ui/.
class HttpApi {
 public:
  /// `ui_dir`: directory with dashboard assets; empty serves the built-in page.
  explicit HttpApi(Controller& controller, std::string ui_dir = {});
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  std::uint16_t start(const std::string& host, std::uint16_t port);
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void routes();

  Controller& ctl_;
  std::string ui_dir_;
  std::unique_ptr<httplib::Server> svr_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
};

/// Minimal dashboard served when no asset directory is configured.
std::string_view builtin_dashboard_html();

}  // namespace dstreamon::controller
