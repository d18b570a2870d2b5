#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "knreader/training.hpp"

namespace knreader::config {

using Json = nlohmann::json;

// Every field materialized; interaction masks as short-name lists.
Json to_json(const training::TrainConfig& config);

// Overlays the keys present in `j` onto `base`. Unknown keys and ill-typed
// values are ConfigErrors; the result is validated.
training::TrainConfig overlay(training::TrainConfig base, const Json& j);

// "toy" / "paper" presets, a TrainConfig JSON file, or a run manifest (its
// "config" member is used).
training::TrainConfig resolve(const std::string& preset_or_path);

inline constexpr const char* kToolVersion = "knreader 1.0.0";

struct RunManifest {
  std::string subcommand;
  Json config = Json::object();
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::uint64_t seed = 0;
  Json results = Json::object();  // accuracies and similar summaries
  std::string tool_version = kToolVersion;

  Json to_json() const;
  static RunManifest from_json(const Json& j);
  // Pretty-printed, keys sorted, no timestamps: identical runs give identical files.
  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

}  // namespace knreader::config
