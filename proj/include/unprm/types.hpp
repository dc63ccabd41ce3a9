#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unprm {

// Natural-log probabilities are clamped into [kLogprobFloor, 0].
inline constexpr double kLogprobFloor = -1e4;

double clamp_logprob(double logprob);

struct TokenRecord {
  std::string text;
  double logprob = 0.0;

  TokenRecord() = default;
  TokenRecord(std::string token_text, double lp);

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

struct Step {
  int index = 1;  // 1-based position within the solution
  std::string text;
  std::vector<TokenRecord> tokens;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Question {
  std::string id;
  std::string statement;
  std::string gold_answer;

  friend bool operator==(const Question&, const Question&) = default;
};

/// Throws DataError when statement or gold answer is empty.
void validate(const Question& question);

struct SampledSolution {
  std::string question_id;
  std::vector<Step> steps;
  std::optional<std::string> final_answer;  // canonical form
  std::optional<bool> is_correct;           // set only after verification
  std::optional<double> sequence_uncertainty;
  std::string generator_tag;

  bool format_valid() const { return final_answer.has_value() && !steps.empty(); }
  std::size_t token_count() const;
  std::vector<double> logprobs() const;
  /// Concatenation of all token texts, i.e. the raw completion.
  std::string text() const;

  friend bool operator==(const SampledSolution&, const SampledSolution&) = default;
};

enum class AnnotationMethod { uncertainty, binary_search, random, all_true };

std::string_view to_string(AnnotationMethod method);
AnnotationMethod annotation_method_from_string(std::string_view name);

/// A solution with monotone step labels (True* then False*).
/// Construction rejects labelings that violate the invariants.
class LabeledSolution {
public:
  LabeledSolution(SampledSolution solution, std::vector<bool> labels, AnnotationMethod method,
                  std::optional<int> probes = std::nullopt);

  /// Labels [1, error_index) True and [error_index, T] False; nullopt means all True.
  static LabeledSolution from_error_index(SampledSolution solution, std::optional<int> error_index,
                                          AnnotationMethod method,
                                          std::optional<int> probes = std::nullopt);

  const SampledSolution& solution() const noexcept { return solution_; }
  const std::vector<bool>& labels() const noexcept { return labels_; }
  std::optional<int> error_index() const noexcept { return error_index_; }
  AnnotationMethod method() const noexcept { return method_; }
  /// Number of step prefixes verified by rollouts, when the method probes.
  std::optional<int> probes() const noexcept { return probes_; }

  friend bool operator==(const LabeledSolution&, const LabeledSolution&) = default;

private:
  SampledSolution solution_;
  std::vector<bool> labels_;
  std::optional<int> error_index_;
  AnnotationMethod method_;
  std::optional<int> probes_;
};

using StepScoreVector = std::vector<double>;

}  // namespace unprm
