#include "unprm/aggregate.hpp"

#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/text.hpp"

#include <algorithm>
#include <map>

namespace unprm {
namespace {

void require_candidates(std::span<const std::string> answers) {
  if (answers.empty()) {
    throw DataError("no valid candidates");
  }
}

void require_rewards(std::span<const std::string> answers, std::span<const double> rewards) {
  require_candidates(answers);
  if (rewards.size() != answers.size()) {
    throw DataError("reward count does not match candidate count");
  }
}

double normalized(double v, double lo, double hi) { return hi == lo ? 1.0 : (v - lo) / (hi - lo); }

}  // namespace

double solution_reward(std::span<const double> scores) {
  if (scores.empty()) {
    throw DataError("cannot reward a solution without step scores");
  }
  return *std::min_element(scores.begin(), scores.end());
}

MajorityResult majority_vote(std::span<const std::string> answers) {
  require_candidates(answers);
  std::vector<std::pair<std::string, int>> counts;
  std::map<std::string, std::size_t> slot;
  for (const auto& a : answers) {
    auto [it, fresh] = slot.emplace(a, counts.size());
    if (fresh) counts.emplace_back(a, 0);
    ++counts[it->second].second;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i].second > counts[best].second) best = i;
  }
  return {counts[best].first, counts[best].second, static_cast<int>(answers.size())};
}

std::string prm_bon(std::span<const std::string> answers, std::span<const double> rewards) {
  require_rewards(answers, rewards);
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best]) best = i;
  }
  return answers[best];
}

std::string hmr_vote(std::span<const std::string> answers, const RewardSource& rewards) {
  auto maj = majority_vote(answers);
  if (static_cast<double>(maj.frequency) >= static_cast<double>(maj.n) / 2.0) {
    return maj.answer;
  }
  const auto r = rewards();
  return prm_bon(answers, r);
}

std::vector<AnswerGroup> wrf_groups(std::span<const std::string> answers, std::span<const double> rewards,
                                    double alpha) {
  require_rewards(answers, rewards);
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError("alpha must lie in [0, 1]");
  }
  std::vector<AnswerGroup> groups;
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    auto [it, fresh] = slot.emplace(answers[i], groups.size());
    if (fresh) groups.push_back(AnswerGroup{answers[i], {}, 0, 0.0, 0.0, 0.0, 0.0});
    groups[it->second].rewards.push_back(rewards[i]);
  }
  double m_lo = 0.0, m_hi = 0.0;
  int f_lo = 0, f_hi = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& group = groups[g];
    group.frequency = static_cast<int>(group.rewards.size());
    double sum = 0.0;
    for (double r : group.rewards) sum += r;
    group.mean_reward = sum / group.frequency;
    if (g == 0) {
      m_lo = m_hi = group.mean_reward;
      f_lo = f_hi = group.frequency;
    }
    m_lo = std::min(m_lo, group.mean_reward);
    m_hi = std::max(m_hi, group.mean_reward);
    f_lo = std::min(f_lo, group.frequency);
    f_hi = std::max(f_hi, group.frequency);
  }
  for (auto& group : groups) {
    group.norm_reward = normalized(group.mean_reward, m_lo, m_hi);
    group.norm_freq = normalized(group.frequency, f_lo, f_hi);
    group.combined = alpha * group.norm_reward + (1.0 - alpha) * group.norm_freq;
  }
  return groups;
}

std::string wrf_vote(std::span<const std::string> answers, std::span<const double> rewards, double alpha) {
  auto groups = wrf_groups(answers, rewards, alpha);
  std::size_t best = 0;
  for (std::size_t g = 1; g < groups.size(); ++g) {
    if (groups[g].combined > groups[best].combined) best = g;
  }
  return groups[best].answer;
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "majority") return Strategy::majority;
  if (name == "prm") return Strategy::prm;
  if (name == "hmr") return Strategy::hmr;
  if (name == "wrf") return Strategy::wrf;
  throw UsageError("unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::majority: return "majority";
    case Strategy::prm: return "prm";
    case Strategy::hmr: return "hmr";
    case Strategy::wrf: return "wrf";
  }
  return "majority";
}

CandidatePool candidate_answers(std::span<const SampledSolution> solutions) {
  CandidatePool pool;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    const auto& s = solutions[i];
    if (!s.final_answer || s.steps.empty()) continue;
    pool.answers.push_back(normalize_answer(*s.final_answer));
    pool.positions.push_back(i);
  }
  return pool;
}

nlohmann::json to_json(const Decision& d) {
  return {{"schema", kSchemaTag},
          {"question_id", d.question_id},
          {"strategy", std::string(to_string(d.strategy))},
          {"answer", d.answer},
          {"is_correct", d.is_correct ? nlohmann::json(*d.is_correct) : nlohmann::json(nullptr)},
          {"n", d.n},
          {"majority_frequency", d.majority_frequency},
          {"scorer_calls", d.scorer_calls}};
}

Decision aggregate(Strategy strategy, std::span<const SampledSolution> solutions, const Question& question,
                   StepScorer* scorer, double alpha) {
  auto pool = candidate_answers(solutions);
  Decision d;
  d.question_id = question.id;
  d.strategy = strategy;
  auto maj = majority_vote(pool.answers);
  d.n = maj.n;
  d.majority_frequency = maj.frequency;

  RewardSource rewards = [&]() {
    if (scorer == nullptr) {
      throw UsageError("strategy '" + std::string(to_string(strategy)) + "' needs a scorer");
    }
    std::vector<double> r;
    r.reserve(pool.positions.size());
    for (auto pos : pool.positions) {
      r.push_back(solution_reward(scorer->score(question, solutions[pos].steps)));
      ++d.scorer_calls;
    }
    return r;
  };

  switch (strategy) {
    case Strategy::majority:
      d.answer = maj.answer;
      break;
    case Strategy::prm:
      d.answer = prm_bon(pool.answers, rewards());
      break;
    case Strategy::hmr:
      d.answer = hmr_vote(pool.answers, rewards);
      break;
    case Strategy::wrf:
      d.answer = wrf_vote(pool.answers, rewards(), alpha);
      break;
  }
  d.is_correct = answers_match(d.answer, question.gold_answer);
  return d;
}

}  // namespace unprm
