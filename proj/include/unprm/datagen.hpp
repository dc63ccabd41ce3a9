#pragma once

#include "unprm/backend.hpp"
#include "unprm/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace unprm {

struct GenerationConfig {
  int k = 32;
  SamplingDefaults sampling;
  std::uint64_t seed = 0;
  std::string generator_tag;  // overrides the provider's tag when set
};

/// k solutions for one question: steps split, answers verified against gold,
/// sequence entropy attached. Format-invalid solutions keep is_correct unset.
std::vector<SampledSolution> generate_pool(const Question& question, const GenerationConfig& config,
                                           CompletionProvider& provider, CostLedger& ledger);

struct CandidateSet {
  std::string question_id;
  std::vector<SampledSolution> correct_selected;
  std::vector<SampledSolution> incorrect_selected;
  int pool_size = 0;
};

nlohmann::json to_json(const CandidateSet& set);

/// Top m correct and top n incorrect solutions by sequence_uncertainty
/// descending (ties: lower pool index). Format-invalid solutions are skipped.
CandidateSet select_uncertain(std::span<const SampledSolution> pool, int m, int n);

using TokenCounts = std::map<std::string, double>;

TokenCounts bag_of_tokens(const SampledSolution& solution);

/// Cosine of two count vectors; 0 when either is all zeros.
double cosine_similarity(const TokenCounts& a, const TokenCounts& b);

/// m correct and n incorrect solutions with the lowest mean cosine similarity
/// to the rest of their correctness class (ties: lower pool index). A class
/// of one has similarity 0. Selected lists are ordered like select_uncertain.
CandidateSet select_similar(std::span<const SampledSolution> pool, int m, int n);

/// Splits a multi-question pool into per-question pools in first-seen order.
std::vector<std::vector<SampledSolution>> group_by_question(std::span<const SampledSolution> pool);

}  // namespace unprm
