#include "dstreamon/controller/http_api.hpp"

#include <charconv>
#include <filesystem>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace dstreamon::controller {
namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", kJson);
}

void reply_error(httplib::Response& res, const ApiError& e) { reply(res, e.status, e.body); }

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ApiError(400, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::uint64_t uint_param(const httplib::Request& req, const char* name, std::uint64_t fallback) {
  if (!req.has_param(name)) return fallback;
  auto s = req.get_param_value(name);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ApiError(400, std::string("query parameter '") + name + "' must be an unsigned integer");
  return v;
}

std::string string_field(const nlohmann::json& j, const char* name, bool required) {
  if (!j.is_object() || !j.contains(name) || j[name].is_null()) {
    if (required) throw ApiError(400, std::string("missing field '") + name + "'");
    return {};
  }
  if (!j[name].is_string()) throw ApiError(400, std::string("field '") + name + "' must be a string");
  return j[name].get<std::string>();
}

nlohmann::json array_of(const std::vector<ProbeDescriptor>& v) {
  auto a = nlohmann::json::array();
  for (const auto& d : v) a.push_back(to_json(d));
  return a;
}

// Wraps a handler so ApiErrors and unexpected failures become JSON replies.
template <class F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

HttpApi::HttpApi(Controller& controller, std::string ui_dir)
    : ctl_(controller), ui_dir_(std::move(ui_dir)), svr_(std::make_unique<httplib::Server>()) {
  // Streaming connections hold a worker each.
  svr_->new_task_queue = [] { return new httplib::ThreadPool(64); };
  routes();
}

HttpApi::~HttpApi() { stop(); }

std::uint16_t HttpApi::start(const std::string& host, std::uint16_t port) {
  int bound = port == 0 ? svr_->bind_to_any_port(host) : (svr_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw std::runtime_error("cannot bind HTTP API to " + host + ":" + std::to_string(port));
  port_ = static_cast<std::uint16_t>(bound);
  thread_ = std::thread([this] { svr_->listen_after_bind(); });
  // stop() is a no-op until the server is accepting, so never return before that.
  svr_->wait_until_ready();
  return port_;
}

void HttpApi::stop() {
  if (stopping_.exchange(true)) return;
  svr_->stop();
  if (thread_.joinable()) thread_.join();
}

void HttpApi::routes() {
  auto& s = *svr_;

  s.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
          auto h = ctl_.health();
          h["http_port"] = port_;
          reply(res, 200, h);
        }));

  // ---- configs
  s.Post("/api/configs", guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto r = ctl_.upload_config(req.body);
           if (auto* c = std::get_if<StoredConfig>(&r)) {
             reply(res, 201, to_json(*c));
           } else {
             reply(res, 422, to_json(std::get<compiler::ValidationReport>(r)));
           }
         }));
  s.Get("/api/configs", guarded([this](const httplib::Request&, httplib::Response& res) {
          auto a = nlohmann::json::array();
          for (const auto& c : ctl_.list_configs()) a.push_back(to_json(c));
          reply(res, 200, a);
        }));

  // ---- probes
  s.Get("/api/probes", guarded([this](const httplib::Request&, httplib::Response& res) {
          reply(res, 200, array_of(ctl_.list_probes()));
        }));
  s.Post("/api/probes", guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto j = parse_body(req);
           reply(res, 201, to_json(ctl_.add_probe(string_field(j, "probe_id", true), string_field(j, "host_label", false))));
         }));
  s.Get(R"(/api/probes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          reply(res, 200, to_json(ctl_.get_probe(req.matches[1])));
        }));
  s.Delete(R"(/api/probes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
             reply(res, 200, to_json(ctl_.remove_probe(req.matches[1])));
           }));
  s.Post(R"(/api/probes/([^/]+)/install)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           std::string id = req.matches[1];
           auto j = parse_body(req);
           ArtifactRef ref;
           ref.program_id = string_field(j, "program_id", true);
           if (j.contains("version") && !j["version"].is_null()) {
             if (!j["version"].is_number_unsigned()) throw ApiError(400, "field 'version' must be a positive integer");
             ref.version = j["version"].get<std::uint32_t>();
           } else {
             // Latest stored revision.
             for (const auto& c : ctl_.list_configs())
               if (c.program_id == ref.program_id) ref.version = std::max(ref.version, c.version);
           }
           if (!j.contains("attach")) throw ApiError(400, "missing field 'attach'");
           // Unknown probe / illegal transition take precedence over body problems.
           ctl_.require(id, Command::Install);
           reply(res, 200, to_json(ctl_.install(id, ref, attach_from_json(j["attach"]))));
         }));
  s.Post(R"(/api/probes/([^/]+)/start)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           reply(res, 200, to_json(ctl_.start_probe(req.matches[1])));
         }));
  s.Post(R"(/api/probes/([^/]+)/stop)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           reply(res, 200, to_json(ctl_.stop_probe(req.matches[1])));
         }));

  // ---- events
  s.Get("/api/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto prefix = req.get_param_value("prefix");
          auto since = uint_param(req, "since", 0);
          auto limit = uint_param(req, "limit", 1000);
          auto a = nlohmann::json::array();
          for (const auto& r : ctl_.query_events(prefix, since, limit)) a.push_back(to_json(r));
          reply(res, 200, a);
        }));
  s.Get("/api/events/stream", guarded([this](const httplib::Request& req, httplib::Response& res) {
          std::optional<std::uint64_t> since;
          if (req.has_param("since")) since = uint_param(req, "since", 0);
          auto stream = ctl_.stream_events(req.get_param_value("prefix"), since);
          res.set_header("Cache-Control", "no-cache");
          res.set_chunked_content_provider(
              "application/x-ndjson",
              [this, stream](std::size_t, httplib::DataSink& sink) {
                if (stopping_) return false;
                if (auto r = stream->next(std::chrono::milliseconds(250))) {
                  auto line = to_json(*r).dump() + "\n";
                  return sink.write(line.data(), line.size());
                }
                if (stream->closed()) {
                  sink.done();
                  return true;
                }
                return sink.is_writable();
              },
              [this, stream](bool) { ctl_.close_stream(stream); });
        }));

  // ---- dashboard
  if (!ui_dir_.empty() && std::filesystem::is_directory(ui_dir_)) {
    s.set_mount_point("/ui", ui_dir_);
  } else {
    s.Get("/ui/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string(builtin_dashboard_html()), "text/html; charset=utf-8");
    });
  }
  s.Get("/ui", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
  s.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });

  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty() && req.path.rfind("/api/", 0) == 0)
      res.set_content(nlohmann::json{{"error", "no such endpoint: " + req.method + " " + req.path}}.dump() + "\n",
                      kJson);
  });
}

}  // namespace dstreamon::controller
