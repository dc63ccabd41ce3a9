#pragma once

#include "unprm/backend.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace unprm {

struct RetryPolicy {
  int attempts = 5;
  double base_delay = 0.5;  // seconds
  double factor = 2.0;
  std::uint64_t seed = 0;
};

/// Full-jitter delay before retry number k (0-based): uniform in
/// [0, base_delay * factor^k).
double retry_delay(const RetryPolicy& policy, int k, std::uint64_t draw_seed);

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model;
  std::string api_key_env = "UNPRM_API_KEY";
  std::string completions_path = "/v1/completions";
  std::string scorer_path = "/v1/prm/score";
  int concurrency = 8;
  int max_n_per_call = 32;
  double timeout_seconds = 120.0;
  RetryPolicy retry;
};

EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

using SleepFn = std::function<void(double seconds)>;

/// Sleeps on the calling thread.
void sleep_for_seconds(double seconds);

/// Sizes of the calls a request of n completions is split into.
std::vector<int> chunk_sizes(int n, int max_per_call);

/// Completions from an OpenAI-compatible /v1/completions endpoint with token
/// logprobs. Requests above max_n_per_call are split; up to `concurrency`
/// calls run at once and results come back in request order. Chunk k > 0
/// carries a seed derived from the request seed and k.
class HttpProvider : public CompletionProvider {
public:
  explicit HttpProvider(EndpointConfig config, SleepFn sleep = sleep_for_seconds);

  std::vector<SampledSolution> sample(const SamplingRequest& request, CostLedger& ledger) override;

  std::uint64_t calls() const { return calls_.load(); }

private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  EndpointConfig config_;
  SleepFn sleep_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> retry_draws_{0};

  friend class HttpScorer;
};

/// Step scores from POST {scorer_path} with {"model", "question", "steps"}
/// answered by {"scores": [...]}.
class HttpScorer : public StepScorer {
public:
  explicit HttpScorer(EndpointConfig config, SleepFn sleep = sleep_for_seconds);
  StepScoreVector score(const Question& question, std::span<const Step> steps) override;

private:
  HttpProvider transport_;
};

/// Parses one completions response into raw (text, tokens) pairs ordered by
/// choice index.
std::vector<std::pair<std::string, std::vector<TokenRecord>>> parse_completions_response(
    const nlohmann::json& body);

}  // namespace unprm
