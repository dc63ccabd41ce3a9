#pragma once

#include "unprm/types.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace unprm {

/// One sampling call: n completions of the rendered prompt. prefix_steps are
/// the solution steps already committed in the prompt (empty for a fresh
/// solution), kept separately so offline providers need not parse the prompt.
struct SamplingRequest {
  std::string question_id;
  std::string prompt;
  std::vector<std::string> prefix_steps;
  int n = 1;
  double temperature = 0.8;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

void validate(const SamplingRequest& request);

/// Prompt template with {question} and {steps} placeholders. Steps are joined
/// with blank lines and followed by one when present, so completions continue
/// on a new step.
inline constexpr const char* kDefaultPromptTemplate = "{question}\n\n{steps}";

std::string render_prompt(std::string_view prompt_template, const Question& question,
                          std::span<const std::string> prefix_steps);

struct SamplingDefaults {
  double temperature = 0.8;
  int max_tokens = 1024;
  std::string prompt_template = kDefaultPromptTemplate;
};

SamplingRequest make_request(const Question& question, std::span<const Step> prefix, int n,
                             const SamplingDefaults& defaults, std::optional<std::uint64_t> seed);

struct CostSnapshot {
  std::uint64_t verified_steps = 0;
  std::uint64_t sampled_completions = 0;
  std::uint64_t generated_tokens = 0;

  friend bool operator==(const CostSnapshot&, const CostSnapshot&) = default;
};

nlohmann::json to_json(const CostSnapshot& cost);
CostSnapshot cost_from_json(const nlohmann::json& j);

/// Monotone annotation cost counters; safe to update from several threads.
class CostLedger {
public:
  void add_verified_steps(std::uint64_t n = 1) { verified_steps_.fetch_add(n); }
  void add_completions(std::uint64_t completions, std::uint64_t tokens) {
    sampled_completions_.fetch_add(completions);
    generated_tokens_.fetch_add(tokens);
  }

  std::uint64_t verified_steps() const { return verified_steps_.load(); }
  std::uint64_t sampled_completions() const { return sampled_completions_.load(); }
  std::uint64_t generated_tokens() const { return generated_tokens_.load(); }

  CostSnapshot snapshot() const {
    return {verified_steps(), sampled_completions(), generated_tokens()};
  }

private:
  std::atomic<std::uint64_t> verified_steps_{0};
  std::atomic<std::uint64_t> sampled_completions_{0};
  std::atomic<std::uint64_t> generated_tokens_{0};
};

/// Source of sampled completions with token log-probabilities. Implementations
/// return solutions with steps split and final answers extracted, but leave
/// is_correct unset, and charge every completion to the ledger.
class CompletionProvider {
public:
  virtual ~CompletionProvider() = default;
  virtual std::vector<SampledSolution> sample(const SamplingRequest& request, CostLedger& ledger) = 0;
};

/// Builds a solution from a raw completion: splits steps and extracts the
/// final answer. An empty completion gives a format-invalid solution.
SampledSolution solution_from_completion(std::string question_id, std::string_view text,
                                         std::vector<TokenRecord> tokens, std::string generator_tag);

/// Process reward model: one score in [0, 1] per step.
class StepScorer {
public:
  virtual ~StepScorer() = default;
  virtual StepScoreVector score(const Question& question, std::span<const Step> steps) = 0;
};

/// Stable identity of a solution's step texts within a question.
std::uint64_t solution_key(std::string_view question_id, std::span<const Step> steps);

using LabelLookup =
    std::function<std::optional<std::vector<bool>>(const Question&, std::span<const Step>)>;

struct OracleScorerConfig {
  double epsilon = 0.0;           // True steps score 1-epsilon, False steps epsilon
  double flip_probability = 0.0;  // per-step chance the label is inverted
  std::uint64_t seed = 0;
};

/// Scores steps from known labels. Noise is a deterministic function of
/// (seed, solution, step), so repeated calls agree.
class OracleScorer : public StepScorer {
public:
  OracleScorer(LabelLookup lookup, OracleScorerConfig config);

  StepScoreVector score(const Question& question, std::span<const Step> steps) override;

  std::uint64_t calls() const { return calls_.load(); }

  /// Lookup over already labeled solutions, keyed by step texts.
  static LabelLookup from_labeled(std::span<const LabeledSolution> labeled);

private:
  LabelLookup lookup_;
  OracleScorerConfig config_;
  std::atomic<std::uint64_t> calls_{0};
};

/// Memoizes another scorer by solution_key.
class CachingScorer : public StepScorer {
public:
  explicit CachingScorer(StepScorer& inner) : inner_(inner) {}
  StepScoreVector score(const Question& question, std::span<const Step> steps) override;

private:
  StepScorer& inner_;
  std::mutex mutex_;
  std::unordered_map<std::uint64_t, StepScoreVector> cache_;
};

}  // namespace unprm
