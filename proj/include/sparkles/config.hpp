#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "sparkles/llm_client.hpp"
#include "sparkles/train_builder.hpp"

namespace sparkles {

inline constexpr std::string_view kVersion = "0.1.0";

struct EndpointConfig {
  Endpoint endpoint;
  GenerationConfig generation;
  double requests_per_minute = 0.0;
};

struct GenerationSettings {
  std::string mode = "vg";  // vg | cc
  std::size_t count = 1;    // requests
  int max_attempts = 3;
  std::optional<int> num_images;  // vg: fix the first-turn image count
  double weight_two = 1.0;
  double weight_three = 1.0;
  std::size_t min_valid_per_request = 2;
};

struct EvalSettings {
  int max_judge_retries = 2;
  std::optional<std::size_t> max_unrecoverable;
  int max_regen = 3;
};

struct PipelineConfig {
  EndpointConfig data_llm;
  EndpointConfig judge;
  EndpointConfig model_under_test;
  RetryPolicy retry;
  GenerationSettings generation;
  EvalSettings eval;
  FramingConfig framing;
  std::string turn_ratio = "2:1";
  std::size_t parallelism = 4;
  std::uint64_t seed = 0;
  std::optional<std::string> mock_fixture;
  /// Named input files (pool, demos, bench, task_data, ...), resolved
  /// against the config file's directory.
  std::map<std::string, std::string> paths;
};

PipelineConfig default_pipeline_config();

/// Reads keys present in `j` over the defaults. Relative paths are resolved
/// against `base_dir`. Throws ConfigError for non-integer seeds, unknown
/// sections and input paths that do not exist.
PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// SPARKLES_SEED, SPARKLES_PARALLELISM, SPARKLES_MOCK_FIXTURE and
/// SPARKLES_{DATA_LLM,JUDGE,MODEL_UNDER_TEST}_{BASE_URL,MODEL}.
void apply_env_overrides(PipelineConfig& cfg, const EnvLookup& env);

/// Fills each endpoint's api_key from the variable its api_key_env names.
void resolve_secrets(PipelineConfig& cfg, const EnvLookup& env);

/// Effective configuration without secrets.
OrderedJson config_to_json(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

}  // namespace sparkles
