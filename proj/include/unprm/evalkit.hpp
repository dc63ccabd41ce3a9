#pragma once

#include "unprm/aggregate.hpp"
#include "unprm/backend.hpp"
#include "unprm/types.hpp"
#include "unprm/uncertainty.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unprm {

struct QuestionSamples {
  Question question;
  std::vector<SampledSolution> samples;
};

/// Pairs each question with its samples, in question order. Samples of
/// unknown questions are a DataError.
std::vector<QuestionSamples> pair_samples(std::span<const Question> questions,
                                          std::span<const SampledSolution> samples);

struct SweepResult {
  Strategy strategy = Strategy::majority;
  std::vector<int> sample_sizes;
  std::vector<double> accuracy_per_size;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const SweepResult& result);

/// Accuracy of a strategy on nested prefixes of each question's pool after a
/// seeded shuffle. Sizes must be strictly increasing; a pool smaller than the
/// largest size is a DataError naming the question.
SweepResult bon_sweep(std::span<const QuestionSamples> dataset, Strategy strategy, StepScorer* scorer,
                      std::span<const int> sizes, std::uint64_t seed, double alpha = 0.5);

/// The pool order bon_sweep uses for one question.
std::vector<SampledSolution> shuffled_pool(const QuestionSamples& entry, std::uint64_t seed);

struct F1Report {
  double error_accuracy = 0.0;
  double correct_accuracy = 0.0;
  double f1 = 0.0;
  int erroneous = 0;
  int correct = 0;
};

nlohmann::json to_json(const F1Report& report);

double harmonic_f1(double error_accuracy, double correct_accuracy);

/// Error accuracy counts exact first-error matches on erroneous references;
/// correct accuracy counts "no error" predictions on correct references.
F1Report processbench_f1(std::span<const std::optional<int>> predictions,
                         std::span<const std::optional<int>> references);

struct TagStats {
  int samples = 0;
  int incorrect = 0;
  double avg_probes = 0.0;
  double avg_rank = 0.0;
};

/// Per generator tag: sample count, mean probes per incorrect solution and
/// mean uncertainty rank of the chosen error step.
std::map<std::string, TagStats> dataset_stats(std::span<const LabeledSolution> labeled,
                                              const UncertaintyOptions& options = {});

nlohmann::json to_json(const std::map<std::string, TagStats>& stats);

struct FrequencyBucket {
  int lo = 0;
  int hi = 0;
  int questions = 0;
  std::map<std::string, int> correct;    // by strategy name
  std::map<std::string, int> incorrect;  // by strategy name
};

struct FrequencyReport {
  int pool_size = 0;
  std::vector<int> gold_frequency;  // per question, in dataset order
  std::vector<FrequencyBucket> buckets;
};

/// Bucket bounds for a pool of n: {0}, then 1..19, 20..40, 41..63 and 64..n,
/// scaled from a pool of 128.
std::vector<std::pair<int, int>> frequency_buckets(int n);

int gold_frequency(const QuestionSamples& entry);

/// Gold-answer frequency histogram with per-strategy tallies. decisions maps a
/// strategy name to one decision per question (matched by question id).
FrequencyReport frequency_analysis(std::span<const QuestionSamples> dataset,
                                   const std::map<std::string, std::vector<Decision>>& decisions);

std::string to_csv(const FrequencyReport& report);

struct TrainingRecord {
  std::string question_id;
  std::string problem;
  std::string input;
  std::string target;
};

nlohmann::json to_json(const TrainingRecord& record);
TrainingRecord training_record_from_json(const nlohmann::json& j);

inline constexpr std::string_view kStepTag = "\xC5\x9F";      // U+015F
inline constexpr std::string_view kEscapeChar = "\xEE\x80\x80";  // U+E000

std::string escape_step_text(std::string_view text);
std::string unescape_step_text(std::string_view text);

TrainingRecord export_training_record(const LabeledSolution& labeled, const Question& question);

std::vector<TrainingRecord> export_training_data(std::span<const LabeledSolution> labeled,
                                                 std::span<const Question> questions);

struct ParsedTraining {
  std::string problem;
  std::vector<std::string> steps;
  std::vector<bool> labels;
};

/// Inverts export_training_record. Throws DataError on malformed input.
ParsedTraining parse_training_record(const TrainingRecord& record);

/// Number of unescaped step tags in an exported input.
std::size_t count_step_tags(std::string_view input);

}  // namespace unprm
