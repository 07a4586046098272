#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dstreamon/compiler/dsl.hpp"

namespace dstreamon::controller {

struct StoredConfig {
  std::string program_id;
  std::uint32_t version = 0;      // storage revision, 1-based per program_id
  std::uint32_t dsl_version = 0;  // the DSL's own version attribute
  std::uint32_t checksum = 0;

  bool operator==(const StoredConfig&) const = default;
};

nlohmann::json to_json(const StoredConfig& c);
nlohmann::json to_json(const compiler::ValidationReport& r);

/// configs/<program_id>/<version>.xml and artifacts/<program_id>/<version>.dsmc
/// under a data directory. An upload is listed once both files exist.
class ConfigStore {
 public:
  explicit ConfigStore(std::string data_dir);

  using UploadResult = std::variant<StoredConfig, compiler::ValidationReport>;
  UploadResult upload(std::string_view dsl);

  std::vector<StoredConfig> list() const;
  std::optional<StoredConfig> find(const std::string& program_id, std::uint32_t version) const;
  std::string artifact_path(const std::string& program_id, std::uint32_t version) const;
  std::string dsl_path(const std::string& program_id, std::uint32_t version) const;

 private:
  std::vector<std::uint32_t> revisions(const std::string& sub, const std::string& program_id) const;

  std::string dir_;
  mutable std::mutex mu_;
};

/// Program ids double as directory names.
bool storable_program_id(std::string_view id);

}  // namespace dstreamon::controller
