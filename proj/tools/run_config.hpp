#pragma once

// Every tunable of the pipeline, addressable by a dotted key such as
// "sampler.t-init". Values come from defaults, then an optional JSON file,
// then command-line flags.

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "drum/sampler.hpp"
#include "drum/toy_scene.hpp"
#include "drum/training.hpp"

namespace drum::cli {

struct RunConfig {
  SensorIntrinsics sensor;
  ToySceneConfig toy;
  std::uint32_t toy_sim_count = 100;
  std::uint32_t toy_real_count = 100;
  TrainConfig train;
  SamplerConfig sampler;

  void validate() const;
};

enum class ValueKind { real, integer, boolean, text };

struct ConfigKey {
  std::string key;
  ValueKind kind;
  std::string help;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Throws InvalidArgument for unknown keys or ill-typed values.
void apply_value(RunConfig& cfg, const std::string& key, const nlohmann::json& value);
void apply_text(RunConfig& cfg, const std::string& key, const std::string& text);

// Accepts nested objects ({"sampler": {"t-init": 0.8}}) and dotted keys.
void apply_json(RunConfig& cfg, const nlohmann::json& doc);
void apply_json_file(RunConfig& cfg, const std::string& path);

// Nested object of every key.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace drum::cli
