#pragma once

#include "unprm/backend.hpp"
#include "unprm/types.hpp"
#include "unprm/uncertainty.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unprm {

enum class TauMode { per_question, fixed };
enum class FallbackPolicy { discard, highest_delta };

struct AnnotationConfig {
  int n0 = 8;
  int n_min = 4;
  int n_max = 64;
  double growth_factor = 2.0;
  TauMode tau_mode = TauMode::per_question;
  double fixed_tau = 0.5;
  FallbackPolicy fallback = FallbackPolicy::discard;
  UncertaintyOptions uncertainty;
  SamplingDefaults sampling;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Throws UsageError unless 1 <= n_min <= n0 <= n_max and growth_factor > 1.
void validate(const AnnotationConfig& config);

AnnotationConfig annotation_config_from_json(const nlohmann::json& j);

/// Trajectories sampled from one prefix; correct[k] says whether trajectory k
/// reached the gold answer.
struct RolloutBatch {
  int prefix_step_index = 0;  // 0 = question only
  std::vector<SampledSolution> trajectories;
  std::vector<bool> correct;
  int n_sampled = 0;
  int n_correct = 0;
  int rounds = 0;
  bool failed = false;  // provider error before the schedule finished
  std::string error_message;
};

/// Ratio of summed log-perplexities of correct trajectories to that of all
/// trajectories. A zero denominator yields 0 without correct trajectories and
/// 1 otherwise, with a warning. Throws DataError on an empty batch or a
/// trajectory without tokens.
double mc_ppl(std::span<const double> log_ppl, const std::vector<bool>& correct);
double mc_ppl(const RolloutBatch& batch);

/// Cumulative sample totals of the schedule: n0, n0*f, n0*f^2, ... capped at n_max.
std::vector<int> rollout_schedule(const AnnotationConfig& config);

/// Samples continuations of question + prefix following the schedule until
/// n_correct >= n_min or the budget is spent. Provider errors end the batch
/// early with failed set.
RolloutBatch adaptive_rollout(const Question& question, std::span<const Step> prefix,
                              const AnnotationConfig& config, CompletionProvider& provider,
                              CostLedger& ledger);

class TauCache {
public:
  std::optional<double> find(const std::string& question_id) const;
  void store(const std::string& question_id, double tau);
  /// Cached value, or compute() run once per question even under concurrency.
  double get_or_compute(const std::string& question_id, const std::function<double()>& compute);

private:
  struct Slot {
    std::mutex mutex;
    std::optional<double> value;
  };
  std::shared_ptr<Slot> slot(const std::string& question_id) const;

  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<Slot>> slots_;
};

/// mc_ppl of a rollout from the question alone (or fixed_tau), cached per question.
double compute_tau(const Question& question, const AnnotationConfig& config,
                   CompletionProvider& provider, CostLedger& ledger, TauCache& cache);

/// Uncertainty-ordered search. Correct solutions are labeled all True without
/// sampling. For incorrect ones, steps are probed in delta_probe_order; the
/// first step whose prefix rollout falls below tau is the error. Returns
/// nullopt when the fallback policy discards the solution.
std::optional<LabeledSolution> annotate_uncertainty(const SampledSolution& solution,
                                                    const Question& question,
                                                    const AnnotationConfig& config,
                                                    CompletionProvider& provider, CostLedger& ledger,
                                                    TauCache& cache);

/// Binary search for the first failing prefix, assuming recoverability only
/// drops along the solution. The final index is confirmed by a probe.
std::optional<LabeledSolution> annotate_binary_search(const SampledSolution& solution,
                                                      const Question& question,
                                                      const AnnotationConfig& config,
                                                      CompletionProvider& provider,
                                                      CostLedger& ledger, TauCache& cache);

/// Uniform error index in 1..T, no sampling; correct solutions are all True.
LabeledSolution annotate_random(const SampledSolution& solution, std::uint64_t seed);

enum class AnnotatorKind { uncertainty, binary_search, random };

AnnotatorKind annotator_from_string(std::string_view name);

/// Annotates every candidate (in parallel when config.workers > 1) and returns
/// the kept results in input order. is_correct is verified against the gold
/// answer when missing.
std::vector<LabeledSolution> annotate_all(std::span<const SampledSolution> candidates,
                                          std::span<const Question> questions, AnnotatorKind kind,
                                          const AnnotationConfig& config, CompletionProvider& provider,
                                          CostLedger& ledger);

struct RankSummary {
  std::vector<int> ranks;   // per incorrect labeled solution, 0 = top delta
  std::vector<int> probes;  // per incorrect labeled solution with probe counts
  double mean_rank = 0.0;
  double mean_probes = 0.0;
};

/// Rank of each chosen error step within the delta-descending probe order.
RankSummary error_rank_statistics(std::span<const LabeledSolution> labeled,
                                  const UncertaintyOptions& options = {});

}  // namespace unprm
