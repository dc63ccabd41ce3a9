#pragma once

#include "unprm/backend.hpp"
#include "unprm/types.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unprm {

/// Minimum step score. Throws DataError on an empty vector.
double solution_reward(std::span<const double> scores);

struct MajorityResult {
  std::string answer;
  int frequency = 0;
  int n = 0;  // candidates with an answer
};

/// Most frequent canonical answer; ties go to the earliest first occurrence.
/// Throws DataError("no valid candidates") when no answer is present.
MajorityResult majority_vote(std::span<const std::string> answers);

/// Answer of the highest reward; ties go to the lowest index.
std::string prm_bon(std::span<const std::string> answers, std::span<const double> rewards);

using RewardSource = std::function<std::vector<double>()>;

/// Majority answer when it covers at least half the candidates; otherwise the
/// best-of-N answer. rewards is only called in the second case.
std::string hmr_vote(std::span<const std::string> answers, const RewardSource& rewards);

struct AnswerGroup {
  std::string answer;
  std::vector<double> rewards;
  int frequency = 0;
  double mean_reward = 0.0;
  double norm_reward = 0.0;
  double norm_freq = 0.0;
  double combined = 0.0;
};

/// Groups in first-occurrence order with every WRF statistic filled in.
std::vector<AnswerGroup> wrf_groups(std::span<const std::string> answers, std::span<const double> rewards,
                                    double alpha);

/// Answer with the highest alpha * norm_reward + (1 - alpha) * norm_freq;
/// ties go to the group seen first.
std::string wrf_vote(std::span<const std::string> answers, std::span<const double> rewards, double alpha);

enum class Strategy { majority, prm, hmr, wrf };

Strategy strategy_from_string(std::string_view name);
std::string_view to_string(Strategy strategy);

/// Canonical answers of the solutions that have one, with their positions.
struct CandidatePool {
  std::vector<std::string> answers;
  std::vector<std::size_t> positions;
};

CandidatePool candidate_answers(std::span<const SampledSolution> solutions);

struct Decision {
  std::string question_id;
  Strategy strategy = Strategy::majority;
  std::string answer;
  std::optional<bool> is_correct;
  int n = 0;
  int majority_frequency = 0;
  int scorer_calls = 0;
};

nlohmann::json to_json(const Decision& decision);

/// Runs one strategy over a question's solutions. The scorer is consulted
/// lazily, once per candidate with an answer, and only when needed.
Decision aggregate(Strategy strategy, std::span<const SampledSolution> solutions, const Question& question,
                   StepScorer* scorer, double alpha = 0.5);

}  // namespace unprm
