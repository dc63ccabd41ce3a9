#include "unprm/config.hpp"

#include "unprm/error.hpp"
#include "unprm/simulator.hpp"

#include <fstream>

namespace unprm {

ProviderKind provider_from_string(std::string_view name) {
  if (name == "sim") return ProviderKind::sim;
  if (name == "http") return ProviderKind::http;
  throw UsageError("unknown provider '" + std::string(name) + "'");
}

AppConfig app_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw UsageError("config must be a JSON object");
  }
  AppConfig c;
  try {
    if (j.contains("provider")) c.provider = provider_from_string(j["provider"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("sim")) c.sim = j["sim"];
    if (j.contains("http")) c.http = endpoint_config_from_json(j["http"]);
    c.annotate = annotation_config_from_json(j.contains("annotate") ? j["annotate"] : j);
    if (j.contains("generation")) {
      const auto& g = j["generation"];
      c.generation.k = g.value("k", c.generation.k);
      c.generation.sampling.temperature = g.value("temperature", c.generation.sampling.temperature);
      c.generation.sampling.max_tokens = g.value("max_tokens", c.generation.sampling.max_tokens);
      c.generation.sampling.prompt_template = g.value("prompt_template", c.generation.sampling.prompt_template);
      c.generation.generator_tag = g.value("generator_tag", c.generation.generator_tag);
    }
    if (j.contains("scorer")) {
      const auto& s = j["scorer"];
      c.oracle.epsilon = s.value("epsilon", c.oracle.epsilon);
      c.oracle.flip_probability = s.value("flip_probability", c.oracle.flip_probability);
      c.oracle.seed = s.value("seed", c.oracle.seed);
    }
    c.alpha = j.value("alpha", c.alpha);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  if (!j.contains("annotate") || !j["annotate"].contains("seed")) {
    c.annotate.seed = c.seed;
  }
  c.generation.seed = c.seed;
  return c;
}

AppConfig load_app_config(const std::optional<std::filesystem::path>& path) {
  if (!path) return app_config_from_json(nlohmann::json::object());
  std::ifstream in(*path);
  if (!in) {
    throw UsageError("cannot open config " + path->string());
  }
  try {
    return app_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path->string() + " is not valid JSON: " + e.what());
  }
}

void apply_seed(AppConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.annotate.seed = seed;
  config.generation.seed = seed;
  config.oracle.seed = seed;
  config.http.retry.seed = seed;
}

std::unique_ptr<CompletionProvider> make_provider(const AppConfig& config, std::span<const Question> questions) {
  if (config.provider == ProviderKind::http) {
    return std::make_unique<HttpProvider>(config.http);
  }
  return make_simulator(config.sim, questions, config.sim.value("seed", config.seed));
}

}  // namespace unprm
