#include "dstreamon/probe/config.hpp"

#include <map>
#include <set>
#include <sstream>

#include "dstreamon/common/bytes.hpp"
#include "dstreamon/packet/source.hpp"

namespace dstreamon::probe {
namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(AttachMode m) { return m == AttachMode::Direct ? "direct" : "mirrored"; }

std::string_view to_string(Pacing p) {
  return p == Pacing::AsFastAsPossible ? "as_fast_as_possible" : "honor_timestamps";
}

ProbeConfig parse_probe_config(std::string_view text) {
  static const std::set<std::string> kKeys = {"probe_id",    "attach",        "source",
                                              "bus_address", "artifact_path", "replay_pacing"};
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (!kKeys.count(key)) throw ConfigError("line " + std::to_string(n) + ": unknown key '" + key + "'");
    if (!kv.emplace(key, value).second)
      throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
  }
  for (const auto& k : {"probe_id", "source", "bus_address", "artifact_path"})
    if (!kv.count(k) || kv[k].empty()) throw ConfigError(std::string("missing required key '") + k + "'");

  ProbeConfig c;
  c.probe_id = kv["probe_id"];
  if (c.probe_id.find('/') != std::string::npos) throw ConfigError("probe_id must not contain '/'");
  if (auto a = kv.find("attach"); a != kv.end()) {
    if (a->second == "direct") c.attach = AttachMode::Direct;
    else if (a->second == "mirrored") c.attach = AttachMode::Mirrored;
    else throw ConfigError("attach must be 'direct' or 'mirrored'");
  }
  c.source = kv["source"];
  if (c.attach == AttachMode::Mirrored && !packet::is_tap_uri(c.source))
    throw ConfigError("mirrored attach needs a tap endpoint source (tcp://host:port)");
  auto ep = net::parse_endpoint(kv["bus_address"]);
  if (!ep) throw ConfigError("bus_address must be host:port");
  c.bus_address = *ep;
  c.artifact_path = kv["artifact_path"];
  if (auto p = kv.find("replay_pacing"); p != kv.end()) {
    if (p->second == "as_fast_as_possible") c.replay_pacing = Pacing::AsFastAsPossible;
    else if (p->second == "honor_timestamps") c.replay_pacing = Pacing::HonorTimestamps;
    else throw ConfigError("replay_pacing must be 'as_fast_as_possible' or 'honor_timestamps'");
  }
  return c;
}

ProbeConfig load_probe_config(const std::string& path) {
  Bytes b;
  try {
    b = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_probe_config(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::string to_text(const ProbeConfig& c) {
  std::string out;
  out += "probe_id=" + c.probe_id + "\n";
  out += "attach=" + std::string(to_string(c.attach)) + "\n";
  out += "source=" + c.source + "\n";
  out += "bus_address=" + c.bus_address.to_string() + "\n";
  out += "artifact_path=" + c.artifact_path + "\n";
  out += "replay_pacing=" + std::string(to_string(c.replay_pacing)) + "\n";
  return out;
}

}  // namespace dstreamon::probe
