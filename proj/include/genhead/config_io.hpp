#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "genhead/harness.hpp"

namespace genhead {

// Malformed or unknown configuration content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration file:
//   { "gan": {...}, "sr": {...}, "compare": {"heads": [...], "seeds": [...]} }
// Every section and key is optional; missing keys keep the built-in default and
// unknown keys are rejected.
struct RunConfig {
  GanConfig gan;
  SrConfig sr;
  std::vector<OutputHeadKind> heads{OutputHeadKind::kTanhAlone, OutputHeadKind::kBnTanh,
                                    OutputHeadKind::kBnClip};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

nlohmann::json to_json(const GanConfig& c);
nlohmann::json to_json(const SrConfig& c);
nlohmann::json to_json(const RunConfig& c);

// Overlay the keys present in `j` onto `base`.
GanConfig gan_config_from_json(const nlohmann::json& j, GanConfig base = {});
SrConfig sr_config_from_json(const nlohmann::json& j, SrConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace genhead
