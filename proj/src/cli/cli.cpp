#include "dstreamon/cli/cli.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "dstreamon/compiler/programs.hpp"
#include "dstreamon/packet/pcap.hpp"
#include "dstreamon/packet/source.hpp"
#include "dstreamon/packet/synth.hpp"
#include "dstreamon/probe/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dstreamon::cli {
namespace {

/// A failure already worth one line of operator-facing text.
struct Failure {
  int code;
  std::string message;
  std::vector<std::string> details;
};

enum class Format { Table, Json };

struct Ctx {
  std::string url;
  Format format = Format::Table;
  std::ostream& out;
  std::ostream& err;
};

std::string url_encode(std::string_view s) {
  std::ostringstream o;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') o << c;
    else o << '%' << std::uppercase << std::hex << std::setw(2) << std::setfill('0') << int(c);
  }
  return o.str();
}

// ---- HTTP ---------------------------------------------------------------------

class Api {
 public:
  explicit Api(const std::string& url) : url_(url), client_(url) {
    client_.set_connection_timeout(std::chrono::seconds(3));
    client_.set_read_timeout(std::chrono::seconds(30));
  }

  json get(const std::string& path) { return check(client_.Get(path), "GET", path); }
  json post(const std::string& path, const json& body) {
    return check(client_.Post(path, body.dump(), "application/json"), "POST", path);
  }
  json post_text(const std::string& path, const std::string& body) {
    return check(client_.Post(path, body, "application/xml"), "POST", path);
  }
  json del(const std::string& path) { return check(client_.Delete(path), "DELETE", path); }

  /// Streams NDJSON records to `on_record` until it returns false, the server
  /// closes, or `timeout` of silence elapses.
  void stream(const std::string& path, std::chrono::seconds timeout, const std::function<bool(const json&)>& on_record) {
    httplib::Client c(url_);
    c.set_connection_timeout(std::chrono::seconds(3));
    c.set_read_timeout(timeout);
    std::string buf;
    bool stopped = false;
    std::string parse_error;
    auto res = c.Get(path, [&](const char* data, std::size_t n) {
      buf.append(data, n);
      for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (line.empty()) continue;
        try {
          if (!on_record(json::parse(line))) {
            stopped = true;
            return false;
          }
        } catch (const json::exception& e) {
          parse_error = e.what();
          return false;
        }
      }
      return true;
    });
    if (stopped) return;
    if (!parse_error.empty()) throw Failure{exit_code::kApiError, "malformed event stream record: " + parse_error, {}};
    if (!res) {
      if (res.error() == httplib::Error::Read)
        throw Failure{exit_code::kApiError, "event stream timed out after " + std::to_string(timeout.count()) + " s",
                      {}};
      throw unreachable(res.error());
    }
    if (res->status >= 400) check(res, "GET", path);
  }

 private:
  Failure unreachable(httplib::Error e) const {
    return {exit_code::kApiError,
            "cannot reach the controller at " + url_ + " (" + httplib::to_string(e) + ")",
            {"is dstreamon-controller running? point the CLI at it with --url or " + std::string(kUrlEnv)}};
  }

  json check(const httplib::Result& res, const char* method, const std::string& path) const {
    if (!res) throw unreachable(res.error());
    json body;
    try {
      body = res->body.empty() ? json() : json::parse(res->body);
    } catch (const json::exception&) {
      body = res->body;
    }
    if (res->status < 400) return body;
    Failure f{exit_code::kApiError, std::string(method) + " " + path + " failed with HTTP " + std::to_string(res->status), {}};
    if (body.is_object() && body.contains("error")) f.message = body["error"].get<std::string>();
    if (body.is_object() && body.contains("errors")) {
      f.message = "validation failed";
      for (const auto& i : body["errors"])
        f.details.push_back("error: " + i.value("path", std::string{}) + ": " + i.value("message", std::string{}));
      for (const auto& i : body.value("warnings", json::array()))
        f.details.push_back("warning: " + i.value("path", std::string{}) + ": " + i.value("message", std::string{}));
    }
    throw f;
  }

  std::string url_;
  httplib::Client client_;
};

// ---- rendering --------------------------------------------------------------------

void table(std::ostream& out, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) {
      s += r[i];
      if (i + 1 < r.size()) s += std::string(w[i] - r[i].size() + 2, ' ');
    }
    out << s << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string hex32(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(8) << std::setfill('0') << v;
  return o.str();
}

std::string str(const json& j) {
  if (j.is_null()) return "-";
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

std::string event_line(const json& r) {
  return std::to_string(r.at("offset").get<std::uint64_t>()) + " " + r.at("topic").get<std::string>() + " " +
         r.at("payload").get<std::string>();
}

void render_probe(Ctx& c, const json& d) {
  if (c.format == Format::Json) {
    c.out << d.dump() << "\n";
    return;
  }
  c.out << d.at("probe_id").get<std::string>() << ": " << d.at("lifecycle").get<std::string>();
  if (!d.value("reason", std::string{}).empty()) c.out << " (" << d["reason"].get<std::string>() << ")";
  c.out << "\n";
}

// ---- commands ------------------------------------------------------------------------

json upload(Api& api, const std::string& dsl) { return api.post_text("/api/configs", dsl); }

std::string probe_path(const std::string& id) { return "/api/probes/" + url_encode(id); }

void write_trace(const std::vector<std::string>& stanza_words, const std::string& path, Ctx& c) {
  std::string stanza;
  for (const auto& w : stanza_words) stanza += (stanza.empty() ? "" : " ") + w;
  packet::TraceSpec spec;
  try {
    spec = packet::parse_trace_spec(stanza);
    auto pkts = packet::synthesize(spec);
    packet::write_pcap(path, pkts);
    if (c.format == Format::Json)
      c.out << json{{"path", path}, {"packets", pkts.size()}}.dump() << "\n";
    else
      c.out << "wrote " << pkts.size() << " packets to " << path << "\n";
  } catch (const std::invalid_argument& e) {
    throw Failure{exit_code::kUsage, std::string("invalid trace spec: ") + e.what(), {}};
  }
}

struct ScenarioPlan {
  std::string program;  // builtin program name
  std::string trace;    // trace stanza
};

std::optional<ScenarioPlan> scenario_plan(const std::string& name) {
  if (name == "synflood") return ScenarioPlan{"synflood", "syn_flood count=20 gap_us=1000"};
  if (name == "portscan") return ScenarioPlan{"portscan", "port_scan ports=1-100 gap_us=1000"};
  if (name == "benign") return ScenarioPlan{"synflood", "benign flows=20 packets=4 gap_us=1000"};
  return std::nullopt;
}

struct ScenarioArgs {
  std::string name;
  std::string probe_id = "p1";
  std::string attach = "direct";
  std::string trace;    // override stanza
  std::string program;  // override builtin program
  int timeout_s = 30;
  bool keep = false;
};

int run_scenario(Ctx& c, const ScenarioArgs& a) {
  auto plan = scenario_plan(a.name);
  if (!plan) throw Failure{exit_code::kUsage, "unknown scenario '" + a.name + "' (synflood, portscan, benign)", {}};
  if (!a.trace.empty()) plan->trace = a.trace;
  if (!a.program.empty()) plan->program = a.program;
  auto dsl = programs::builtin(plan->program);
  if (!dsl) throw Failure{exit_code::kUsage, "unknown builtin program '" + plan->program + "'", {}};
  if (a.attach != "direct" && a.attach != "mirrored")
    throw Failure{exit_code::kUsage, "--attach must be direct or mirrored", {}};

  Api api(c.url);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(a.timeout_s);

  // 1. trace
  auto work = fs::temp_directory_path() / ("dstreamon-scenario-" + std::to_string(::getpid()));
  fs::create_directories(work);
  struct Cleanup {
    fs::path p;
    bool keep;
    ~Cleanup() {
      std::error_code ec;
      if (!keep) fs::remove_all(p, ec);
    }
  } cleanup{work, a.keep};
  std::vector<packet::PacketRecord> pkts;
  try {
    pkts = packet::synthesize(packet::parse_trace_spec(plan->trace));
  } catch (const std::invalid_argument& e) {
    throw Failure{exit_code::kUsage, std::string("invalid trace spec: ") + e.what(), {}};
  }
  auto pcap = (work / "trace.pcap").string();
  packet::write_pcap(pcap, pkts);
  c.err << "scenario " << a.name << ": " << pkts.size() << " packets (" << plan->trace << ")\n";

  // 2. config
  auto cfg = upload(api, std::string(*dsl));
  c.err << "uploaded " << cfg["program_id"].get<std::string>() << " version " << cfg["version"] << "\n";

  // 3. probe
  api.post("/api/probes", {{"probe_id", a.probe_id}, {"host_label", "localhost"}});
  std::unique_ptr<packet::TapServer> tap;
  json attach = {{"mode", a.attach}, {"source", pcap}};
  if (a.attach == "mirrored") {
    tap = std::make_unique<packet::TapServer>(pkts, 1, net::Endpoint{"127.0.0.1", 0});
    auto port = tap->start();
    attach["source"] = "tcp://127.0.0.1:" + std::to_string(port);
  }
  api.post(probe_path(a.probe_id) + "/install",
           {{"program_id", cfg["program_id"]}, {"version", cfg["version"]}, {"attach", attach}});
  auto since = api.get("/api/health").at("events").get<std::uint64_t>();
  api.post(probe_path(a.probe_id) + "/start", json::object());
  c.err << "probe " << a.probe_id << " running (" << a.attach << " attach)\n";

  // 4. await eof
  const std::string topic_prefix = "probe/" + a.probe_id + "/";
  const std::string alert_prefix = topic_prefix + "alert/";
  const std::string eof = probe::eof_topic(a.probe_id);
  std::vector<json> alerts;
  std::optional<json> eof_record;
  auto left = std::chrono::duration_cast<std::chrono::seconds>(deadline - std::chrono::steady_clock::now());
  api.stream("/api/events/stream?prefix=" + url_encode(topic_prefix) + "&since=" + std::to_string(since),
             std::max(left, std::chrono::seconds(1)), [&](const json& r) {
               auto topic = r.at("topic").get<std::string>();
               if (topic.rfind(alert_prefix, 0) == 0) {
                 alerts.push_back(r);
                 if (c.format == Format::Table) c.out << event_line(r) << std::endl;
               }
               if (topic == eof) {
                 eof_record = r;
                 return false;
               }
               return std::chrono::steady_clock::now() < deadline;
             });
  if (tap) tap->stop();
  if (!eof_record) throw Failure{exit_code::kApiError, "timed out waiting for " + eof, {}};
  c.err << "eof: " << eof_record->at("payload").get<std::string>() << "\n";
  if (c.format == Format::Json) {
    c.out << json{{"scenario", a.name}, {"probe_id", a.probe_id}, {"alerts", alerts}, {"eof", *eof_record}}.dump()
          << "\n";
  }
  return exit_code::kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"D-StreaMon operator CLI", "dstreamon"};
  app.require_subcommand(1);
  std::string url;
  std::string format = "table";
  app.add_option("--url", url, std::string("controller URL (default $") + kUrlEnv + " or " + kDefaultUrl + ")");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"table", "json"}));

  std::function<int(Ctx&)> action;

  // config
  auto* config = app.add_subcommand("config", "monitoring program configs")->require_subcommand(1);
  std::string dsl_file;
  auto* config_upload = config->add_subcommand("upload", "validate, compile and store a DSL file");
  config_upload->add_option("file", dsl_file, "DSL (XML) file")->required();
  config_upload->callback([&] {
    action = [&](Ctx& c) {
      std::string dsl;
      try {
        auto b = read_file(dsl_file);
        dsl.assign(b.begin(), b.end());
      } catch (const std::exception& e) {
        throw Failure{exit_code::kUsage, "cannot read " + dsl_file + ": " + e.what(), {}};
      }
      Api api(c.url);
      auto r = upload(api, dsl);
      if (c.format == Format::Json) c.out << r.dump() << "\n";
      else
        c.out << "uploaded " << r["program_id"].get<std::string>() << " version " << r["version"] << " checksum "
              << hex32(r["checksum"].get<std::uint64_t>()) << "\n";
      return 0;
    };
  });
  config->add_subcommand("list", "list stored configs")->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      auto r = api.get("/api/configs");
      if (c.format == Format::Json) {
        c.out << r.dump() << "\n";
        return 0;
      }
      std::vector<std::vector<std::string>> rows;
      for (const auto& x : r)
        rows.push_back({x["program_id"].get<std::string>(), str(x["version"]), str(x["dsl_version"]),
                        hex32(x["checksum"].get<std::uint64_t>())});
      table(c.out, {"PROGRAM", "VERSION", "DSL_VERSION", "CHECKSUM"}, rows);
      return 0;
    };
  });

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "probe registry and lifecycle")->require_subcommand(1);
  std::string probe_id, host_label = "localhost", program_id, source, attach_mode, pacing;
  std::uint32_t version = 0;
  auto* probe_add = probe_cmd->add_subcommand("add", "register a probe");
  probe_add->add_option("id", probe_id)->required();
  probe_add->add_option("--host-label", host_label, "informational host name")->capture_default_str();
  probe_add->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      render_probe(c, api.post("/api/probes", {{"probe_id", probe_id}, {"host_label", host_label}}));
      return 0;
    };
  });
  auto* probe_install = probe_cmd->add_subcommand("install", "push a compiled config to a probe");
  probe_install->add_option("id", probe_id)->required();
  probe_install->add_option("--program", program_id, "program id")->required();
  probe_install->add_option("--version", version, "config version (default: latest)");
  probe_install->add_option("--source", source, "pcap path or tcp://host:port tap endpoint")->required();
  probe_install->add_option("--attach", attach_mode, "direct|mirrored (default: mirrored for tcp:// sources)")
      ->check(CLI::IsMember({"direct", "mirrored"}));
  probe_install->add_option("--pacing", pacing, "as_fast_as_possible|honor_timestamps")
      ->check(CLI::IsMember({"as_fast_as_possible", "honor_timestamps"}));
  probe_install->callback([&] {
    action = [&](Ctx& c) {
      bool tap = packet::is_tap_uri(source);
      json attach = {{"mode", attach_mode.empty() ? (tap ? "mirrored" : "direct") : attach_mode},
                     {"source", tap ? source : fs::absolute(source).string()}};
      if (!pacing.empty()) attach["pacing"] = pacing;
      json body = {{"program_id", program_id}, {"attach", attach}};
      if (version) body["version"] = version;
      Api api(c.url);
      render_probe(c, api.post(probe_path(probe_id) + "/install", body));
      return 0;
    };
  });
  for (const char* verb : {"start", "stop", "remove"}) {
    auto* sc = probe_cmd->add_subcommand(verb, std::string(verb) + " a probe");
    sc->add_option("id", probe_id)->required();
    sc->callback([&, v = std::string(verb)] {
      action = [&, v](Ctx& c) {
        Api api(c.url);
        render_probe(c, v == "remove" ? api.del(probe_path(probe_id))
                                      : api.post(probe_path(probe_id) + "/" + v, json::object()));
        return 0;
      };
    });
  }
  auto* probe_status = probe_cmd->add_subcommand("status", "show one probe");
  probe_status->add_option("id", probe_id)->required();
  probe_status->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      auto d = api.get(probe_path(probe_id));
      if (c.format == Format::Json) c.out << d.dump() << "\n";
      else c.out << d.dump(2) << "\n";
      return 0;
    };
  });
  probe_cmd->add_subcommand("list", "list probes")->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      auto r = api.get("/api/probes");
      if (c.format == Format::Json) {
        c.out << r.dump() << "\n";
        return 0;
      }
      std::vector<std::vector<std::string>> rows;
      for (const auto& d : r) {
        std::string prog = d["artifact"].is_null() ? "-"
                                                   : d["artifact"]["program_id"].get<std::string>() + "@" +
                                                         str(d["artifact"]["version"]);
        const auto& st = d["last_status"];
        rows.push_back({d["probe_id"].get<std::string>(), d["host_label"].get<std::string>(),
                        d["lifecycle"].get<std::string>(), prog, str(d["pid"]),
                        st.is_null() ? "-" : str(st["packets_processed"]),
                        st.is_null() ? "-" : str(st["events_published"])});
      }
      table(c.out, {"ID", "HOST", "STATE", "PROGRAM", "PID", "PACKETS", "EVENTS"}, rows);
      return 0;
    };
  });

  // events
  auto* events = app.add_subcommand("events", "event log")->require_subcommand(1);
  std::string prefix;
  std::uint64_t since = 0, limit = 1000, count = 0;
  std::optional<std::uint64_t> tail_since;
  int idle_timeout = 24 * 3600;
  auto* events_query = events->add_subcommand("query", "query the event log");
  events_query->add_option("--prefix", prefix, "topic prefix");
  events_query->add_option("--since", since, "only records after this offset")->capture_default_str();
  events_query->add_option("--limit", limit, "maximum records")->capture_default_str();
  events_query->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      auto r = api.get("/api/events?prefix=" + url_encode(prefix) + "&since=" + std::to_string(since) +
                       "&limit=" + std::to_string(limit));
      if (c.format == Format::Json) c.out << r.dump() << "\n";
      else
        for (const auto& rec : r) c.out << event_line(rec) << "\n";
      return 0;
    };
  });
  auto* events_tail = events->add_subcommand("tail", "follow live events: <offset> <topic> <payload>");
  events_tail->add_option("--prefix", prefix, "topic prefix");
  events_tail->add_option("--since", tail_since, "replay records after this offset first");
  events_tail->add_option("--count", count, "exit after this many events (0 = run until interrupted)");
  events_tail->add_option("--idle-timeout", idle_timeout, "give up after this many seconds without data");
  events_tail->callback([&] {
    action = [&](Ctx& c) {
      Api api(c.url);
      std::uint64_t seen = 0;
      std::string path = "/api/events/stream?prefix=" + url_encode(prefix);
      if (tail_since) path += "&since=" + std::to_string(*tail_since);
      api.stream(path, std::chrono::seconds(idle_timeout), [&](const json& r) {
        if (c.format == Format::Json) c.out << r.dump() << std::endl;
        else c.out << event_line(r) << std::endl;
        return count == 0 || ++seen < count;
      });
      return 0;
    };
  });

  // trace
  auto* trace = app.add_subcommand("trace", "traffic harness")->require_subcommand(1);
  std::vector<std::string> stanza;
  std::string out_path;
  auto* trace_synth = trace->add_subcommand(
      "synth", "synthesize a pcap, e.g. `trace synth syn_flood count=6 -o flood.pcap`");
  trace_synth->add_option("spec", stanza, "scenario and key=value parameters")->required();
  trace_synth->add_option("-o,--output", out_path, "pcap file to write")->required();
  trace_synth->callback([&] {
    action = [&](Ctx& c) {
      write_trace(stanza, out_path, c);
      return 0;
    };
  });
  std::string pcap_in, listen = "127.0.0.1:0";
  std::size_t n_taps = 1;
  auto* trace_mirror = trace->add_subcommand("mirror", "serve a pcap to N mirrored taps over TCP");
  trace_mirror->add_option("pcap", pcap_in, "capture to mirror")->required();
  trace_mirror->add_option("--taps", n_taps, "number of taps; mirroring starts once all are connected")
      ->capture_default_str();
  trace_mirror->add_option("--listen", listen, "host:port to listen on")->capture_default_str();
  trace_mirror->callback([&] {
    action = [&](Ctx& c) {
      packet::Capture cap;
      net::Endpoint ep;
      try {
        cap = packet::read_pcap(pcap_in);
        auto parsed = net::parse_endpoint(listen);
        if (!parsed) throw std::invalid_argument("--listen must be host:port, got '" + listen + "'");
        ep = *parsed;
      } catch (const std::exception& e) {
        throw Failure{exit_code::kUsage, e.what(), {}};
      }
      packet::TapServer server(std::move(cap.packets), n_taps, ep);
      auto port = server.start();
      std::string uri = "tcp://" + ep.host + ":" + std::to_string(port);
      if (c.format == Format::Json) c.out << json{{"source", uri}, {"taps", n_taps}}.dump() << std::endl;
      else c.out << "mirroring " << pcap_in << " to " << n_taps << " tap(s) at " << uri << std::endl;
      server.wait();
      return 0;
    };
  });

  // scenario
  auto* scenario = app.add_subcommand("scenario", "end-to-end scenarios")->require_subcommand(1);
  ScenarioArgs sargs;
  auto* scenario_run = scenario->add_subcommand(
      "run", "synthesize, upload, install, start, await eof and print alerts (synflood|portscan|benign)");
  scenario_run->add_option("name", sargs.name)->required()->check(CLI::IsMember({"synflood", "portscan", "benign"}));
  scenario_run->add_option("--probe", sargs.probe_id, "probe id to register")->capture_default_str();
  scenario_run->add_option("--attach", sargs.attach, "direct|mirrored")
      ->check(CLI::IsMember({"direct", "mirrored"}))
      ->capture_default_str();
  scenario_run->add_option("--trace", sargs.trace, "override the trace stanza");
  scenario_run->add_option("--program", sargs.program, "override the builtin program (synflood|portscan)");
  scenario_run->add_option("--timeout", sargs.timeout_s, "seconds to wait for eof")->capture_default_str();
  scenario_run->add_flag("--keep", sargs.keep, "keep the synthesized trace");
  scenario_run->callback([&] { action = [&](Ctx& c) { return run_scenario(c, sargs); }; });

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_code::kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_code::kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    // Show help for the innermost subcommand that was reached.
    const CLI::App* deepest = &app;
    for (const CLI::App* sub = &app; sub;) {
      auto subs = sub->get_subcommands();
      sub = subs.empty() ? nullptr : subs.front();
      if (sub) deepest = sub;
    }
    err << deepest->help();
    return exit_code::kUsage;
  }

  if (url.empty()) {
    const char* env = std::getenv(kUrlEnv);
    url = env && *env ? env : kDefaultUrl;
  }
  static const std::regex url_re(R"(^http://[A-Za-z0-9.\-\[\]:]+(:[0-9]{1,5})?/?$)");
  if (!std::regex_match(url, url_re)) {
    err << "usage error: controller URL '" << url << "' is not of the form http://host[:port]\n";
    return exit_code::kUsage;
  }
  if (url.back() == '/') url.pop_back();

  Ctx ctx{url, format == "json" ? Format::Json : Format::Table, out, err};
  try {
    return action(ctx);
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    for (const auto& d : f.details) err << "  " << d << "\n";
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kApiError;
  }
}

}  // namespace dstreamon::cli
