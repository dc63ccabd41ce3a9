#pragma once

#include "unprm/backend.hpp"
#include "unprm/types.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace unprm {

/// Shape of the simulated token stream. A step's "intensity" h in [0, 1]
/// moves its token logprobs from the skewed calm profile (h = 0) towards the
/// nearly flat spike profile (h = 1), raising the step entropy monotonically.
struct StepProfile {
  int min_steps = 4;
  int max_steps = 10;
  int min_tokens = 12;  // word tokens per step, before the answer sentence
  int max_tokens = 16;
  double calm_spread = 8.0;
  double spike_level = 1.0;
  double spike_jitter = 0.1;
  double precursor_probability = 0.3;  // chance step e-1 is already agitated
  double precursor_min = 0.3;
  double precursor_max = 0.6;
  double spurious_probability = 0.05;  // per calm step
  double spurious_max = 0.5;
};

struct SimulatedWorld {
  std::map<std::string, double> answers;  // answer -> probability
  std::optional<int> planted_error_step;
  int first_error_step_min = 2;
  /// Chance a continuation from a clean prefix of depth d reaches gold; entry
  /// d-1. Depths past the end use clean_recovery.
  std::vector<double> recovery_by_depth;
  std::optional<double> clean_recovery;  // default: gold + 0.8 * (1 - gold)
  double corrupted_recovery = 0.02;
  double format_invalid_probability = 0.0;
};

/// Throws UsageError when the world is inconsistent: probabilities must be in
/// [0, 1] and sum to 1 within 1e-9, and every clean recovery must be at least
/// the corrupted one.
void validate(const SimulatedWorld& world);

SimulatedWorld world_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimulatedWorld& world);
StepProfile profile_from_json(const nlohmann::json& j);

struct RawCompletion {
  std::string text;
  std::vector<TokenRecord> tokens;
};

/// Deterministic reasoner over registered questions. Each question's solution
/// follows a fixed chain of running totals; an erroneous step leaves the chain
/// and carries the entropy spike. Every completion is a pure function of
/// (seed, request seed, question, prefix, completion index).
class SimulatedProvider : public CompletionProvider {
public:
  explicit SimulatedProvider(std::uint64_t seed, StepProfile profile = {});

  void add_question(const Question& question, SimulatedWorld world);

  std::vector<SampledSolution> sample(const SamplingRequest& request, CostLedger& ledger) override;

  /// n raw completions continuing the prefix, numbered from first_index.
  std::vector<RawCompletion> complete(const std::string& question_id,
                                      std::span<const std::string> prefix_steps, int n,
                                      std::optional<std::uint64_t> request_seed,
                                      int first_index = 0) const;

  /// 1-based position of the first step that leaves the chain, if any.
  std::optional<int> first_error(const std::string& question_id,
                                 std::span<const std::string> step_texts) const;

  /// True labels of a complete solution: True before the first off-chain step.
  std::vector<bool> ground_truth_labels(const std::string& question_id,
                                        std::span<const Step> steps) const;

  /// Label source for an oracle scorer backed by the ground truth.
  LabelLookup label_lookup() const;

  const Question& question(const std::string& question_id) const;
  const SimulatedWorld& world(const std::string& question_id) const;
  const StepProfile& profile() const noexcept { return profile_; }

  std::uint64_t completions_served() const { return served_completions_.load(); }
  std::uint64_t tokens_served() const { return served_tokens_.load(); }

private:
  struct Entry {
    Question question;
    SimulatedWorld world;
    std::uint64_t chain_seed;
  };

  const Entry& entry(const std::string& question_id) const;
  long long chain_value(const Entry& e, int step) const;
  RawCompletion complete_one(const Entry& e, std::span<const std::string> prefix_steps,
                             std::uint64_t seed) const;

  std::uint64_t seed_;
  StepProfile profile_;
  std::unordered_map<std::string, Entry> entries_;
  mutable std::atomic<std::uint64_t> served_completions_{0};
  mutable std::atomic<std::uint64_t> served_tokens_{0};
};

/// World for a question from summary parameters: gold with gold_probability,
/// the rest spread evenly over num_wrong distinct wrong answers.
SimulatedWorld simple_world(const Question& question, double gold_probability, int num_wrong);

/// Wrong answer number i for a gold answer (gold + i + 1 for integers).
std::string wrong_answer(const std::string& gold, int i);

/// Builds a simulator from a JSON config section:
/// {"seed", "profile": {...}, "worlds": {id: world}, "default_world": {...}}.
/// Questions without a world use default_world, given as
/// {"gold_probability", "num_wrong"} plus any world field; a question with
/// neither is a UsageError.
std::unique_ptr<SimulatedProvider> make_simulator(const nlohmann::json& config,
                                                  std::span<const Question> questions,
                                                  std::uint64_t seed);

/// Records every sampled batch keyed by request, for later replay.
class RecordingProvider : public CompletionProvider {
public:
  explicit RecordingProvider(CompletionProvider& inner) : inner_(inner) {}
  std::vector<SampledSolution> sample(const SamplingRequest& request, CostLedger& ledger) override;
  nlohmann::json recording() const;

private:
  CompletionProvider& inner_;
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<SampledSolution>> batches_;
};

/// Serves completions from a recording; an unrecorded request is a ProviderError.
class ReplayProvider : public CompletionProvider {
public:
  explicit ReplayProvider(const nlohmann::json& recording);
  std::vector<SampledSolution> sample(const SamplingRequest& request, CostLedger& ledger) override;

private:
  std::map<std::string, std::vector<SampledSolution>> batches_;
};

/// Key identifying a request for recording and replay.
std::string request_fingerprint(const SamplingRequest& request);

}  // namespace unprm
