#pragma once

#include "unprm/types.hpp"

#include <span>
#include <utility>
#include <vector>

namespace unprm {

/// Softmax over one sequence's token log-probabilities (max-subtracted).
/// Inputs are clamped to the logprob floor first. Throws DataError("no tokens").
std::vector<double> softmax_probs(std::span<const double> logprobs);

/// u = -sum z_i ln z_i with z = softmax_probs(logprobs). In [0, ln n].
double sequence_entropy(std::span<const double> logprobs);

/// sequence_entropy / ln n for n > 1, 0 for a single token.
double normalized_entropy(std::span<const double> logprobs);

/// -(1/L) sum log p; the natural log of perplexity.
double log_perplexity(std::span<const double> logprobs);

/// exp(-(1/L) sum log p) >= 1.
double perplexity(std::span<const double> logprobs);

struct UncertaintyOptions {
  /// Score each step by the entropy of the prefix s_1..s_t instead of the
  /// step's own tokens.
  bool prefix_mode = false;
  /// Divide entropies by ln n (n = tokens scored).
  bool normalized = false;
};

struct StepDelta {
  int step_index;  // t >= 2
  double delta;    // u(s_t) - u(s_{t-1})

  friend bool operator==(const StepDelta&, const StepDelta&) = default;
};

struct UncertaintyProfile {
  double sequence_u = 0.0;
  std::vector<double> step_u;
  std::vector<StepDelta> deltas;
};

/// Per-step entropies and their deltas. Throws DataError("empty step") when a
/// step has no tokens.
UncertaintyProfile step_uncertainties(const SampledSolution& solution,
                                      const UncertaintyOptions& options = {});

/// Step indices ordered by delta descending (ties: lower index first), with
/// step 1 appended last. This is the probe order of the uncertainty search.
std::vector<int> delta_probe_order(const UncertaintyProfile& profile);

}  // namespace unprm
