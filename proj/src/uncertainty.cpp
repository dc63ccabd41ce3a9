#include "unprm/uncertainty.hpp"

#include "unprm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unprm {

std::vector<double> softmax_probs(std::span<const double> logprobs) {
  if (logprobs.empty()) {
    throw DataError("no tokens");
  }
  std::vector<double> out(logprobs.size());
  double max_lp = kLogprobFloor;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    out[i] = std::max(logprobs[i], kLogprobFloor);
    if (std::isnan(out[i]) || std::isinf(out[i])) {
      throw DataError("non-finite logprob");
    }
    max_lp = std::max(max_lp, out[i]);
  }
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - max_lp);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

double sequence_entropy(std::span<const double> logprobs) {
  const auto z = softmax_probs(logprobs);
  double u = 0.0;
  for (double p : z) {
    if (p > 0.0) u -= p * std::log(p);
  }
  // Rounding can push the sum a hair outside [0, ln n].
  const double upper = std::log(static_cast<double>(z.size()));
  return std::clamp(u, 0.0, upper);
}

double normalized_entropy(std::span<const double> logprobs) {
  if (logprobs.size() == 1) {
    sequence_entropy(logprobs);
    return 0.0;
  }
  return sequence_entropy(logprobs) / std::log(static_cast<double>(logprobs.size()));
}

double log_perplexity(std::span<const double> logprobs) {
  if (logprobs.empty()) {
    throw DataError("no tokens");
  }
  double sum = 0.0;
  for (double lp : logprobs) sum += std::max(lp, kLogprobFloor);
  return -sum / static_cast<double>(logprobs.size());
}

double perplexity(std::span<const double> logprobs) { return std::exp(log_perplexity(logprobs)); }

UncertaintyProfile step_uncertainties(const SampledSolution& solution,
                                      const UncertaintyOptions& options) {
  UncertaintyProfile profile;
  std::vector<double> all;
  const auto score = [&](std::span<const double> lps) {
    return options.normalized ? normalized_entropy(lps) : sequence_entropy(lps);
  };
  for (const auto& step : solution.steps) {
    if (step.tokens.empty()) {
      throw DataError("empty step");
    }
    std::vector<double> own;
    own.reserve(step.tokens.size());
    for (const auto& tok : step.tokens) {
      own.push_back(tok.logprob);
      all.push_back(tok.logprob);
    }
    profile.step_u.push_back(options.prefix_mode ? score(all) : score(own));
  }
  if (!all.empty()) {
    profile.sequence_u = score(all);
  }
  for (std::size_t t = 1; t < profile.step_u.size(); ++t) {
    profile.deltas.push_back({static_cast<int>(t) + 1, profile.step_u[t] - profile.step_u[t - 1]});
  }
  return profile;
}

std::vector<int> delta_probe_order(const UncertaintyProfile& profile) {
  auto sorted = profile.deltas;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const StepDelta& a, const StepDelta& b) { return a.delta > b.delta; });
  std::vector<int> order;
  order.reserve(sorted.size() + 1);
  for (const auto& d : sorted) order.push_back(d.step_index);
  if (!profile.step_u.empty()) order.push_back(1);
  return order;
}

}  // namespace unprm
