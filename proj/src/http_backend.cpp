#include "unprm/http_backend.hpp"

#include "unprm/error.hpp"
#include "unprm/log.hpp"
#include "unprm/rng.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace unprm {
namespace {

bool retryable(int status) { return status == 429 || status >= 500; }

template <typename Fn>
void run_bounded(std::size_t tasks, int concurrency, Fn&& fn) {
  if (tasks == 0) return;
  const auto workers = std::min<std::size_t>(tasks, static_cast<std::size_t>(std::max(1, concurrency)));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = tasks;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

double retry_delay(const RetryPolicy& policy, int k, std::uint64_t draw_seed) {
  Rng rng(mix_seed(policy.seed, draw_seed));
  return rng.uniform(0.0, policy.base_delay * std::pow(policy.factor, k));
}

EndpointConfig endpoint_config_from_json(const nlohmann::json& j) {
  EndpointConfig c;
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.completions_path = j.value("completions_path", c.completions_path);
    c.scorer_path = j.value("scorer_path", c.scorer_path);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.max_n_per_call = j.value("max_n_per_call", c.max_n_per_call);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      c.retry.attempts = r.value("attempts", c.retry.attempts);
      c.retry.base_delay = r.value("base_delay", c.retry.base_delay);
      c.retry.factor = r.value("factor", c.retry.factor);
      c.retry.seed = r.value("seed", c.retry.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed http config: ") + e.what());
  }
  if (c.concurrency < 1 || c.max_n_per_call < 1 || c.retry.attempts < 1) {
    throw UsageError("http concurrency, max_n_per_call and retry attempts must be >= 1");
  }
  return c;
}

void sleep_for_seconds(double seconds) {
  if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

std::vector<int> chunk_sizes(int n, int max_per_call) {
  if (n < 1 || max_per_call < 1) {
    throw UsageError("chunking needs n >= 1 and a positive per-call limit");
  }
  std::vector<int> out;
  for (int left = n; left > 0; left -= max_per_call) out.push_back(std::min(left, max_per_call));
  return out;
}

std::vector<std::pair<std::string, std::vector<TokenRecord>>> parse_completions_response(
    const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array()) {
    throw ProviderError("completions response has no choices");
  }
  std::vector<std::pair<int, std::pair<std::string, std::vector<TokenRecord>>>> indexed;
  int position = 0;
  for (const auto& choice : body["choices"]) {
    const auto lp = choice.find("logprobs");
    if (lp == choice.end() || lp->is_null() || !lp->contains("tokens") || !lp->contains("token_logprobs")) {
      throw ProviderError("provider does not expose logprobs");
    }
    const auto& tokens = (*lp)["tokens"];
    const auto& values = (*lp)["token_logprobs"];
    if (!tokens.is_array() || !values.is_array() || tokens.size() != values.size()) {
      throw ProviderError("provider does not expose logprobs");
    }
    std::vector<TokenRecord> records;
    records.reserve(tokens.size());
    try {
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        const double v = values[i].is_null() ? 0.0 : values[i].get<double>();
        records.emplace_back(tokens[i].get<std::string>(), v);
      }
      const int index = choice.value("index", position);
      indexed.push_back({index, {choice.value("text", std::string()), std::move(records)}});
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed completions response: ") + e.what());
    }
    ++position;
  }
  std::stable_sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::string, std::vector<TokenRecord>>> out;
  out.reserve(indexed.size());
  for (auto& item : indexed) out.push_back(std::move(item.second));
  return out;
}

HttpProvider::HttpProvider(EndpointConfig config, SleepFn sleep)
    : config_(std::move(config)), sleep_(std::move(sleep)) {}

nlohmann::json HttpProvider::post(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(config_.base_url);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt < config_.retry.attempts; ++attempt) {
    if (attempt > 0) {
      sleep_(retry_delay(config_.retry, attempt - 1, retry_draws_++));
    }
    calls_.fetch_add(1);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable(res->status)) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("provider rejected the request with status " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw ProviderError("provider returned malformed JSON");
    }
  }
  throw ProviderError("provider unavailable (" + last_error + ")");
}

std::vector<SampledSolution> HttpProvider::sample(const SamplingRequest& request, CostLedger& ledger) {
  validate(request);
  const auto sizes = chunk_sizes(request.n, config_.max_n_per_call);
  std::vector<std::vector<SampledSolution>> parts(sizes.size());
  run_bounded(sizes.size(), config_.concurrency, [&](std::size_t c) {
    nlohmann::json body = {{"model", config_.model},
                           {"prompt", request.prompt},
                           {"n", sizes[c]},
                           {"temperature", request.temperature},
                           {"max_tokens", request.max_tokens},
                           {"logprobs", 1}};
    if (request.seed) body["seed"] = c == 0 ? *request.seed : mix_seed(*request.seed, c);
    auto choices = parse_completions_response(post(config_.completions_path, body));
    if (static_cast<int>(choices.size()) != sizes[c]) {
      throw ProviderError("provider returned " + std::to_string(choices.size()) + " choices for n=" +
                          std::to_string(sizes[c]));
    }
    std::uint64_t tokens = 0;
    for (const auto& ch : choices) tokens += ch.second.size();
    ledger.add_completions(choices.size(), tokens);
    for (auto& [text, toks] : choices) {
      parts[c].push_back(solution_from_completion(request.question_id, text, std::move(toks), config_.model));
    }
  });
  std::vector<SampledSolution> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (auto& p : parts) {
    for (auto& s : p) out.push_back(std::move(s));
  }
  return out;
}

HttpScorer::HttpScorer(EndpointConfig config, SleepFn sleep) : transport_(std::move(config), std::move(sleep)) {}

StepScoreVector HttpScorer::score(const Question& question, std::span<const Step> steps) {
  if (steps.empty()) {
    throw DataError("cannot score a solution without steps");
  }
  nlohmann::json texts = nlohmann::json::array();
  for (const auto& s : steps) texts.push_back(s.text);
  const nlohmann::json body = {{"model", transport_.config_.model}, {"question", question.statement}, {"steps", texts}};
  auto reply = transport_.post(transport_.config_.scorer_path, body);
  if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array()) {
    throw ProviderError("scorer response has no scores");
  }
  const auto& scores = reply["scores"];
  if (scores.size() != steps.size()) {
    throw ProviderError("score cardinality mismatch");
  }
  StepScoreVector out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    if (!s.is_number()) {
      throw ProviderError("scorer returned a non-numeric score");
    }
    const double v = s.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ProviderError("scorer returned a score outside [0, 1]");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace unprm
