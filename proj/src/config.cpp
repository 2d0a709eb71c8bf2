#include "sparkles/config.hpp"

#include <chrono>
#include <cstdlib>
#include <set>

#include "sparkles/error.hpp"

namespace sparkles {

namespace {

const std::set<std::string> kOptionalPaths = {"pool_state"};

std::uint64_t read_seed(const Json& j) {
  if (!j.is_number_integer()) throw ConfigError("seed must be an integer, got " + j.dump());
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const auto v = j.get<std::int64_t>();
  if (v < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <typename T>
void read_if(const Json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j[key].is_null()) return;
  T v{};
  read_if(j, key, v);
  out = v;
}

void read_endpoint(const Json& j, EndpointConfig& ep) {
  if (!j.is_object()) throw ConfigError("endpoint entries must be objects");
  read_if(j, "base_url", ep.endpoint.base_url);
  read_if(j, "model", ep.endpoint.model);
  read_if(j, "api_key_env", ep.endpoint.api_key_env);
  read_if(j, "requests_per_minute", ep.requests_per_minute);
  if (j.contains("api_key")) throw ConfigError("api keys are read from the environment only");
  if (j.contains("generation")) ep.generation = generation_config_from_json(j["generation"], ep.generation);
  ep.generation.check();
}

OrderedJson endpoint_to_json(const EndpointConfig& ep) {
  const GenerationConfig& g = ep.generation;
  OrderedJson gen;
  gen["temperature"] = g.temperature;
  gen["top_p"] = g.top_p;
  gen["max_tokens"] = g.max_tokens;
  gen["frequency_penalty"] = g.frequency_penalty;
  gen["presence_penalty"] = g.presence_penalty;
  if (g.beam_size) gen["beam_size"] = *g.beam_size;
  if (g.repetition_penalty) gen["repetition_penalty"] = *g.repetition_penalty;
  if (g.length_penalty) gen["length_penalty"] = *g.length_penalty;
  OrderedJson j;
  j["base_url"] = ep.endpoint.base_url;
  j["model"] = ep.endpoint.model;
  j["api_key_env"] = ep.endpoint.api_key_env;
  j["requests_per_minute"] = ep.requests_per_minute;
  j["generation"] = std::move(gen);
  return j;
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_relative() && !base.empty()) ? (base / path).lexically_normal().string() : p;
}

}  // namespace

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.data_llm.endpoint = {"https://api.openai.com/v1", "gpt-4", "OPENAI_API_KEY", ""};
  c.data_llm.generation = default_generation_config(ClientRole::data_llm);
  c.judge.endpoint = {"https://api.openai.com/v1", "gpt-4", "OPENAI_API_KEY", ""};
  c.judge.generation = default_generation_config(ClientRole::judge);
  c.model_under_test.endpoint = {"", "sparkleschat", "SPARKLES_MODEL_API_KEY", ""};
  c.model_under_test.generation = default_generation_config(ClientRole::model_under_test);
  return c;
}

PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {
      "endpoints", "retry", "generation", "eval", "framing", "turn_ratio",
      "parallelism", "seed", "mock_fixture", "paths"};
  for (const auto& [key, _] : j.items())
    if (!kSections.count(key)) throw ConfigError("unknown config section '" + key + "'");

  PipelineConfig c = default_pipeline_config();
  if (j.contains("seed")) c.seed = read_seed(j["seed"]);
  read_if(j, "parallelism", c.parallelism);
  if (c.parallelism == 0) throw ConfigError("parallelism must be >= 1");
  read_if(j, "turn_ratio", c.turn_ratio);
  TurnRatio::parse(c.turn_ratio);

  if (j.contains("endpoints")) {
    const Json& e = j["endpoints"];
    for (const auto& [key, value] : e.items()) {
      if (key == "data_llm") read_endpoint(value, c.data_llm);
      else if (key == "judge") read_endpoint(value, c.judge);
      else if (key == "model_under_test") read_endpoint(value, c.model_under_test);
      else throw ConfigError("unknown endpoint role '" + key + "'");
    }
  }
  if (j.contains("retry")) {
    const Json& r = j["retry"];
    read_if(r, "max_attempts", c.retry.max_attempts);
    long base = c.retry.base_delay.count(), cap = c.retry.max_delay.count();
    read_if(r, "base_delay_ms", base);
    read_if(r, "max_delay_ms", cap);
    read_if(r, "multiplier", c.retry.multiplier);
    c.retry.base_delay = std::chrono::milliseconds(base);
    c.retry.max_delay = std::chrono::milliseconds(cap);
    if (c.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  }
  if (j.contains("generation")) {
    const Json& g = j["generation"];
    read_if(g, "mode", c.generation.mode);
    read_if(g, "count", c.generation.count);
    read_if(g, "max_attempts", c.generation.max_attempts);
    read_if(g, "num_images", c.generation.num_images);
    read_if(g, "weight_two", c.generation.weight_two);
    read_if(g, "weight_three", c.generation.weight_three);
    read_if(g, "min_valid_per_request", c.generation.min_valid_per_request);
    if (c.generation.mode != "vg" && c.generation.mode != "cc")
      throw ConfigError("generation.mode must be vg or cc");
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    read_if(e, "max_judge_retries", c.eval.max_judge_retries);
    read_if(e, "max_unrecoverable", c.eval.max_unrecoverable);
    read_if(e, "max_regen", c.eval.max_regen);
  }
  if (j.contains("framing")) {
    c.framing = framing_from_json(j["framing"]);
    c.framing.check();
  }
  if (j.contains("mock_fixture")) {
    c.mock_fixture = resolve(base_dir, j["mock_fixture"].get<std::string>());
    if (!std::filesystem::exists(*c.mock_fixture))
      throw ConfigError("mock fixture not found: " + *c.mock_fixture);
  }
  if (j.contains("paths")) {
    for (const auto& [key, value] : j["paths"].items()) {
      if (!value.is_string()) throw ConfigError("paths." + key + " must be a string");
      const std::string p = resolve(base_dir, value.get<std::string>());
      if (!kOptionalPaths.count(key) && !std::filesystem::exists(p))
        throw ConfigError("paths." + key + " does not exist: " + p);
      c.paths[key] = p;
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  Json j;
  try {
    j = json_text::parse_strict(read_file(path));
  } catch (const SyntaxError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

void apply_env_overrides(PipelineConfig& cfg, const EnvLookup& env) {
  if (auto v = env("SPARKLES_SEED")) {
    const Json j = Json::parse(*v, nullptr, false);
    if (j.is_discarded()) throw ConfigError("SPARKLES_SEED must be an integer");
    cfg.seed = read_seed(j);
  }
  if (auto v = env("SPARKLES_PARALLELISM")) {
    try {
      cfg.parallelism = std::stoul(*v);
    } catch (const std::exception&) {
      throw ConfigError("SPARKLES_PARALLELISM must be a positive integer");
    }
    if (cfg.parallelism == 0) throw ConfigError("SPARKLES_PARALLELISM must be >= 1");
  }
  if (auto v = env("SPARKLES_MOCK_FIXTURE")) cfg.mock_fixture = *v;
  const std::pair<const char*, EndpointConfig*> roles[] = {
      {"DATA_LLM", &cfg.data_llm}, {"JUDGE", &cfg.judge},
      {"MODEL_UNDER_TEST", &cfg.model_under_test}};
  for (const auto& [name, ep] : roles) {
    if (auto v = env(std::string("SPARKLES_") + name + "_BASE_URL")) ep->endpoint.base_url = *v;
    if (auto v = env(std::string("SPARKLES_") + name + "_MODEL")) ep->endpoint.model = *v;
  }
}

void resolve_secrets(PipelineConfig& cfg, const EnvLookup& env) {
  for (EndpointConfig* ep : {&cfg.data_llm, &cfg.judge, &cfg.model_under_test}) {
    if (ep->endpoint.api_key_env.empty()) continue;
    if (auto v = env(ep->endpoint.api_key_env)) ep->endpoint.api_key = *v;
  }
}

OrderedJson config_to_json(const PipelineConfig& cfg) {
  OrderedJson j;
  j["seed"] = cfg.seed;
  j["parallelism"] = cfg.parallelism;
  j["turn_ratio"] = cfg.turn_ratio;
  j["endpoints"] = OrderedJson{{"data_llm", endpoint_to_json(cfg.data_llm)},
                               {"judge", endpoint_to_json(cfg.judge)},
                               {"model_under_test", endpoint_to_json(cfg.model_under_test)}};
  j["retry"] = OrderedJson{{"max_attempts", cfg.retry.max_attempts},
                           {"base_delay_ms", cfg.retry.base_delay.count()},
                           {"multiplier", cfg.retry.multiplier},
                           {"max_delay_ms", cfg.retry.max_delay.count()}};
  const GenerationSettings& g = cfg.generation;
  j["generation"] = OrderedJson{{"mode", g.mode},
                                {"count", g.count},
                                {"max_attempts", g.max_attempts},
                                {"num_images", g.num_images ? OrderedJson(*g.num_images) : OrderedJson(nullptr)},
                                {"weight_two", g.weight_two},
                                {"weight_three", g.weight_three},
                                {"min_valid_per_request", g.min_valid_per_request}};
  j["eval"] = OrderedJson{
      {"max_judge_retries", cfg.eval.max_judge_retries},
      {"max_unrecoverable", cfg.eval.max_unrecoverable ? OrderedJson(*cfg.eval.max_unrecoverable)
                                                       : OrderedJson(nullptr)},
      {"max_regen", cfg.eval.max_regen}};
  j["framing"] = framing_to_json(cfg.framing);
  j["mock_fixture"] = cfg.mock_fixture ? OrderedJson(*cfg.mock_fixture) : OrderedJson(nullptr);
  OrderedJson paths = OrderedJson::object();
  for (const auto& [k, v] : cfg.paths) paths[k] = v;
  j["paths"] = std::move(paths);
  return j;
}

std::string config_hash(const PipelineConfig& cfg) {
  return json_text::fnv1a_hex(config_to_json(cfg).dump());
}

}  // namespace sparkles
