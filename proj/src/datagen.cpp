#include "unprm/datagen.hpp"

#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/log.hpp"
#include "unprm/rng.hpp"
#include "unprm/text.hpp"
#include "unprm/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unprm {
namespace {

struct Ranked {
  std::size_t index;
  double key;
};

std::vector<SampledSolution> take_ranked(std::span<const SampledSolution> pool, std::vector<Ranked> ranked,
                                         int limit, bool descending) {
  std::stable_sort(ranked.begin(), ranked.end(), [descending](const Ranked& a, const Ranked& b) {
    return descending ? a.key > b.key : a.key < b.key;
  });
  if (static_cast<int>(ranked.size()) > limit) ranked.resize(static_cast<std::size_t>(limit));
  std::stable_sort(ranked.begin(), ranked.end(), [&](const Ranked& a, const Ranked& b) {
    return pool[a.index].sequence_uncertainty.value_or(0.0) > pool[b.index].sequence_uncertainty.value_or(0.0);
  });
  std::vector<SampledSolution> out;
  for (const auto& r : ranked) out.push_back(pool[r.index]);
  return out;
}

bool eligible(const SampledSolution& s) { return s.format_valid() && s.is_correct.has_value(); }

void check_counts(int m, int n) {
  if (m < 0 || n < 0) {
    throw UsageError("selection sizes must be >= 0");
  }
}

std::string pool_question(std::span<const SampledSolution> pool) {
  std::string id = pool.empty() ? std::string() : pool.front().question_id;
  for (const auto& s : pool) {
    if (s.question_id != id) {
      throw DataError("selection pool mixes questions '" + id + "' and '" + s.question_id + "'");
    }
  }
  return id;
}

}  // namespace

std::vector<SampledSolution> generate_pool(const Question& question, const GenerationConfig& config,
                                           CompletionProvider& provider, CostLedger& ledger) {
  if (config.k < 1) {
    throw UsageError("k must be >= 1");
  }
  auto request = make_request(question, {}, config.k, config.sampling,
                              mix_seed(config.seed, fnv1a(question.id)));
  auto pool = provider.sample(request, ledger);
  std::size_t valid = 0;
  for (auto& s : pool) {
    s.question_id = question.id;
    if (!config.generator_tag.empty()) s.generator_tag = config.generator_tag;
    if (s.token_count() > 0) s.sequence_uncertainty = sequence_entropy(s.logprobs());
    if (s.format_valid()) {
      s.is_correct = answers_match(*s.final_answer, question.gold_answer);
      ++valid;
    } else {
      s.is_correct.reset();
    }
  }
  if (valid == 0) {
    log_warning("all " + std::to_string(pool.size()) + " solutions for question '" + question.id +
                "' are format-invalid");
    return {};
  }
  return pool;
}

nlohmann::json to_json(const CandidateSet& set) {
  return {{"schema", kSchemaTag},
          {"question_id", set.question_id},
          {"pool_size", set.pool_size},
          {"correct_selected", to_json_records(set.correct_selected)},
          {"incorrect_selected", to_json_records(set.incorrect_selected)}};
}

CandidateSet select_uncertain(std::span<const SampledSolution> pool, int m, int n) {
  check_counts(m, n);
  CandidateSet set;
  set.question_id = pool_question(pool);
  set.pool_size = static_cast<int>(pool.size());
  std::vector<Ranked> correct;
  std::vector<Ranked> incorrect;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!eligible(pool[i])) continue;
    Ranked r{i, pool[i].sequence_uncertainty.value_or(0.0)};
    (*pool[i].is_correct ? correct : incorrect).push_back(r);
  }
  set.correct_selected = take_ranked(pool, std::move(correct), m, true);
  set.incorrect_selected = take_ranked(pool, std::move(incorrect), n, true);
  return set;
}

TokenCounts bag_of_tokens(const SampledSolution& solution) {
  TokenCounts counts;
  for (const auto& step : solution.steps) {
    for (const auto& t : step.tokens) counts[t.text] += 1.0;
  }
  return counts;
}

double cosine_similarity(const TokenCounts& a, const TokenCounts& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [k, v] : a) {
    na += v * v;
    auto it = b.find(k);
    if (it != b.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : b) nb += v * v;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

CandidateSet select_similar(std::span<const SampledSolution> pool, int m, int n) {
  check_counts(m, n);
  CandidateSet set;
  set.question_id = pool_question(pool);
  set.pool_size = static_cast<int>(pool.size());
  std::vector<std::size_t> classes[2];
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (eligible(pool[i])) classes[*pool[i].is_correct ? 1 : 0].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    const auto& members = classes[c];
    std::vector<TokenCounts> bags;
    for (auto i : members) bags.push_back(bag_of_tokens(pool[i]));
    std::vector<Ranked> ranked;
    for (std::size_t a = 0; a < members.size(); ++a) {
      double sum = 0.0;
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (a != b) sum += cosine_similarity(bags[a], bags[b]);
      }
      const double mean = members.size() > 1 ? sum / static_cast<double>(members.size() - 1) : 0.0;
      ranked.push_back({members[a], mean});
    }
    auto chosen = take_ranked(pool, std::move(ranked), c == 1 ? m : n, false);
    (c == 1 ? set.correct_selected : set.incorrect_selected) = std::move(chosen);
  }
  return set;
}

std::vector<std::vector<SampledSolution>> group_by_question(std::span<const SampledSolution> pool) {
  std::vector<std::vector<SampledSolution>> groups;
  std::map<std::string, std::size_t> slot;
  for (const auto& s : pool) {
    auto [it, fresh] = slot.emplace(s.question_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(s);
  }
  return groups;
}

}  // namespace unprm
