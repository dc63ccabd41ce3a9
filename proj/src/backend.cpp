#include "unprm/backend.hpp"

#include "unprm/error.hpp"
#include "unprm/rng.hpp"
#include "unprm/text.hpp"

namespace unprm {

void validate(const SamplingRequest& request) {
  if (request.n < 1) {
    throw UsageError("sampling request needs n >= 1");
  }
  if (!(request.temperature >= 0.0)) {
    throw UsageError("sampling temperature must be >= 0");
  }
  if (request.max_tokens < 1) {
    throw UsageError("max_tokens must be >= 1");
  }
}

std::string render_prompt(std::string_view prompt_template, const Question& question,
                          std::span<const std::string> prefix_steps) {
  std::string steps;
  for (const auto& s : prefix_steps) {
    steps += s;
    steps += "\n\n";
  }
  std::string out;
  std::size_t i = 0;
  while (i < prompt_template.size()) {
    if (prompt_template.compare(i, 10, "{question}") == 0) {
      out += question.statement;
      i += 10;
    } else if (prompt_template.compare(i, 7, "{steps}") == 0) {
      out += steps;
      i += 7;
    } else {
      out.push_back(prompt_template[i++]);
    }
  }
  return out;
}

SamplingRequest make_request(const Question& question, std::span<const Step> prefix, int n,
                             const SamplingDefaults& defaults, std::optional<std::uint64_t> seed) {
  SamplingRequest request;
  request.question_id = question.id;
  for (const auto& step : prefix) request.prefix_steps.push_back(step.text);
  request.prompt = render_prompt(defaults.prompt_template, question, request.prefix_steps);
  request.n = n;
  request.temperature = defaults.temperature;
  request.max_tokens = defaults.max_tokens;
  request.seed = seed;
  return request;
}

nlohmann::json to_json(const CostSnapshot& cost) {
  return {{"verified_steps", cost.verified_steps},
          {"sampled_completions", cost.sampled_completions},
          {"generated_tokens", cost.generated_tokens}};
}

CostSnapshot cost_from_json(const nlohmann::json& j) {
  try {
    return {j.at("verified_steps").get<std::uint64_t>(), j.at("sampled_completions").get<std::uint64_t>(),
            j.at("generated_tokens").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed cost report: ") + e.what());
  }
}

SampledSolution solution_from_completion(std::string question_id, std::string_view text,
                                         std::vector<TokenRecord> tokens, std::string generator_tag) {
  SampledSolution solution;
  solution.question_id = std::move(question_id);
  solution.generator_tag = std::move(generator_tag);
  if (text.empty()) {
    return solution;
  }
  solution.steps = split_into_steps(text, tokens);
  solution.final_answer = extract_final_answer(text);
  return solution;
}

std::uint64_t solution_key(std::string_view question_id, std::span<const Step> steps) {
  std::uint64_t h = fnv1a(question_id);
  for (const auto& step : steps) {
    h = fnv1a("\x1f", h);
    h = fnv1a(step.text, h);
  }
  return h;
}

OracleScorer::OracleScorer(LabelLookup lookup, OracleScorerConfig config)
    : lookup_(std::move(lookup)), config_(config) {
  if (config_.epsilon < 0.0 || config_.epsilon > 1.0) {
    throw UsageError("oracle epsilon must lie in [0, 1]");
  }
  if (config_.flip_probability < 0.0 || config_.flip_probability > 1.0) {
    throw UsageError("oracle flip probability must lie in [0, 1]");
  }
}

StepScoreVector OracleScorer::score(const Question& question, std::span<const Step> steps) {
  calls_.fetch_add(1);
  if (steps.empty()) {
    throw DataError("cannot score a solution without steps");
  }
  auto labels = lookup_(question, steps);
  if (!labels) {
    throw DataError("oracle scorer has no labels for a solution of question '" + question.id + "'");
  }
  if (labels->size() != steps.size()) {
    throw DataError("score cardinality mismatch");
  }
  const auto key = mix_seed(config_.seed, solution_key(question.id, steps));
  StepScoreVector scores(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    bool label = (*labels)[t];
    if (config_.flip_probability > 0.0) {
      Rng rng(mix_seed(key, t));
      if (rng.bernoulli(config_.flip_probability)) label = !label;
    }
    scores[t] = label ? 1.0 - config_.epsilon : config_.epsilon;
  }
  return scores;
}

LabelLookup OracleScorer::from_labeled(std::span<const LabeledSolution> labeled) {
  auto table = std::make_shared<std::unordered_map<std::uint64_t, std::vector<bool>>>();
  for (const auto& l : labeled) {
    table->emplace(solution_key(l.solution().question_id, l.solution().steps), l.labels());
  }
  return [table](const Question& q, std::span<const Step> steps) -> std::optional<std::vector<bool>> {
    auto it = table->find(solution_key(q.id, steps));
    if (it == table->end()) return std::nullopt;
    return it->second;
  };
}

StepScoreVector CachingScorer::score(const Question& question, std::span<const Step> steps) {
  const auto key = solution_key(question.id, steps);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto scores = inner_.score(question, steps);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace(key, scores);
  return scores;
}

}  // namespace unprm
