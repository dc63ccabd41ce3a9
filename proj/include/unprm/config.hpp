#pragma once

#include "unprm/annotate.hpp"
#include "unprm/backend.hpp"
#include "unprm/datagen.hpp"
#include "unprm/http_backend.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace unprm {

enum class ProviderKind { sim, http };

ProviderKind provider_from_string(std::string_view name);

/// Whole-run configuration. Every section is optional:
/// {"provider", "seed", "sim", "http", "annotate", "generation", "scorer", "alpha"}.
/// Annotation fields may also sit at the top level.
struct AppConfig {
  ProviderKind provider = ProviderKind::sim;
  std::uint64_t seed = 0;
  nlohmann::json sim = nlohmann::json::object();
  EndpointConfig http;
  AnnotationConfig annotate;
  GenerationConfig generation;
  OracleScorerConfig oracle;
  double alpha = 0.5;
};

AppConfig app_config_from_json(const nlohmann::json& j);

/// Reads a config file; a missing path gives the defaults.
AppConfig load_app_config(const std::optional<std::filesystem::path>& path);

/// Applies a seed to every component that takes one.
void apply_seed(AppConfig& config, std::uint64_t seed);

std::unique_ptr<CompletionProvider> make_provider(const AppConfig& config, std::span<const Question> questions);

}  // namespace unprm
