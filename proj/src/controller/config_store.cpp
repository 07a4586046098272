#include "dstreamon/controller/config_store.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>

#include "dstreamon/compiler/artifact.hpp"

namespace fs = std::filesystem;

namespace dstreamon::controller {

nlohmann::json to_json(const StoredConfig& c) {
  return {{"program_id", c.program_id},
          {"version", c.version},
          {"dsl_version", c.dsl_version},
          {"checksum", c.checksum}};
}

nlohmann::json to_json(const compiler::ValidationReport& r) {
  auto issues = [](const std::vector<xfsm::Issue>& v) {
    auto a = nlohmann::json::array();
    for (const auto& i : v) a.push_back({{"path", i.path}, {"message", i.message}});
    return a;
  };
  return {{"errors", issues(r.errors)}, {"warnings", issues(r.warnings)}};
}

bool storable_program_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

ConfigStore::ConfigStore(std::string data_dir) : dir_(std::move(data_dir)) {
  fs::create_directories(fs::path(dir_) / "configs");
  fs::create_directories(fs::path(dir_) / "artifacts");
}

std::string ConfigStore::artifact_path(const std::string& program_id, std::uint32_t version) const {
  return (fs::path(dir_) / "artifacts" / program_id / (std::to_string(version) + ".dsmc")).string();
}

std::string ConfigStore::dsl_path(const std::string& program_id, std::uint32_t version) const {
  return (fs::path(dir_) / "configs" / program_id / (std::to_string(version) + ".xml")).string();
}

ConfigStore::UploadResult ConfigStore::upload(std::string_view dsl) {
  auto parsed = compiler::parse_dsl(dsl);
  if (!parsed.report.ok()) return parsed.report;
  const auto& prog = *parsed.program;
  if (!storable_program_id(prog.program_id)) {
    compiler::ValidationReport r = parsed.report;
    r.errors.push_back({"program/@id", "program id '" + prog.program_id +
                                           "' must use only letters, digits, '_', '-' and '.' to be stored"});
    return r;
  }
  auto art = compiler::compile_ir(prog);

  std::lock_guard lk(mu_);
  std::uint32_t version = 1;
  for (const char* sub : {"configs", "artifacts"})
    for (auto v : revisions(sub, prog.program_id)) version = std::max(version, v + 1);
  fs::create_directories(fs::path(artifact_path(prog.program_id, version)).parent_path());
  fs::create_directories(fs::path(dsl_path(prog.program_id, version)).parent_path());
  // Artifact first: a config is only listed once its DSL text exists too.
  write_file_atomic(artifact_path(prog.program_id, version), art.bytes);
  write_file_atomic(dsl_path(prog.program_id, version), dsl);
  return StoredConfig{prog.program_id, version, prog.version, art.checksum};
}

std::vector<std::uint32_t> ConfigStore::revisions(const std::string& sub, const std::string& program_id) const {
  std::vector<std::uint32_t> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(fs::path(dir_) / sub / program_id, ec)) {
    const auto stem = e.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); }))
      continue;
    if (e.path().extension() != (sub == "configs" ? ".xml" : ".dsmc")) continue;
    out.push_back(static_cast<std::uint32_t>(std::stoul(stem)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<StoredConfig> ConfigStore::find(const std::string& program_id, std::uint32_t version) const {
  if (!storable_program_id(program_id)) return std::nullopt;
  std::error_code ec;
  if (!fs::exists(dsl_path(program_id, version), ec) || !fs::exists(artifact_path(program_id, version), ec))
    return std::nullopt;
  try {
    auto art = compiler::load_artifact(artifact_path(program_id, version));
    return StoredConfig{program_id, version, art.version, art.checksum};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<StoredConfig> ConfigStore::list() const {
  std::lock_guard lk(mu_);
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(fs::path(dir_) / "configs", ec))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  std::vector<StoredConfig> out;
  for (const auto& id : ids)
    for (auto v : revisions("configs", id))
      if (auto c = find(id, v)) out.push_back(*c);
  return out;
}

}  // namespace dstreamon::controller
