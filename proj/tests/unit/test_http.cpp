#include "fixtures.hpp"
#include "stub_server.hpp"
#include "unprm/annotate.hpp"
#include "unprm/error.hpp"
#include "unprm/http_backend.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/log.hpp"
#include "unprm/text.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace unprm;
using unprm::testing::StubReply;
using unprm::testing::StubServer;

namespace {

const std::vector<std::pair<std::string, double>> kThreeTokens{{"Step 1:", -0.1}, {" x", -0.2}, {" \\boxed{4}", -0.3}};

EndpointConfig endpoint(const StubServer& server) {
  EndpointConfig c;
  c.base_url = server.base_url();
  c.model = "stub-model";
  c.timeout_seconds = 5;
  c.retry.base_delay = 0.001;
  return c;
}

SamplingRequest request(int n, std::optional<std::uint64_t> seed = 5) {
  SamplingRequest r;
  r.question_id = "q";
  r.prompt = "P\n\n";
  r.n = n;
  r.seed = seed;
  return r;
}

std::vector<SampledSolution> sim_candidates(const SimulatedProvider& sim, const std::vector<Question>& qs) {
  std::vector<SampledSolution> out;
  for (const auto& q : qs) {
    for (auto& c : sim.complete(q.id, {}, 8, 101)) {
      auto s = solution_from_completion(q.id, c.text, c.tokens, "sim");
      s.is_correct = answers_match(*s.final_answer, q.gold_answer);
      if (!*s.is_correct) out.push_back(s);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("single stubbed completion") {
  StubServer server;
  server.on_completions([](const nlohmann::json& body) { return testing::fixed_completion(body, kThreeTokens); });
  HttpProvider provider(endpoint(server));
  CostLedger ledger;
  auto out = provider.sample(request(1), ledger);
  REQUIRE(out.size() == 1);
  CHECK(out[0].final_answer == std::optional<std::string>("4"));
  CHECK(ledger.sampled_completions() == 1);
  CHECK(ledger.generated_tokens() == 3);
  auto log = server.requests("/v1/completions");
  REQUIRE(log.size() == 1);
  CHECK(log[0]["logprobs"] == 1);
  CHECK(log[0]["model"] == "stub-model");
  CHECK(log[0]["seed"] == 5);
}

TEST_CASE("large requests are chunked") {
  CHECK(chunk_sizes(70, 32) == std::vector<int>{32, 32, 6});
  CHECK(chunk_sizes(32, 32) == std::vector<int>{32});
  StubServer server;
  server.on_completions([](const nlohmann::json& body) { return testing::fixed_completion(body, kThreeTokens); });
  auto cfg = endpoint(server);
  cfg.concurrency = 2;
  HttpProvider provider(cfg);
  CostLedger ledger;
  CHECK(provider.sample(request(70), ledger).size() == 70);
  auto log = server.requests("/v1/completions");
  REQUIRE(log.size() == 3);
  std::vector<int> ns;
  std::set<std::uint64_t> seeds;
  for (auto& b : log) {
    ns.push_back(b["n"]);
    seeds.insert(b["seed"].get<std::uint64_t>());
  }
  std::sort(ns.begin(), ns.end());
  CHECK(ns == std::vector<int>{6, 32, 32});
  CHECK(seeds.size() == 3);
  CHECK(seeds.count(5) == 1);
  CHECK(ledger.sampled_completions() == 70);
  CHECK(ledger.generated_tokens() == 210);
}

TEST_CASE("rate limits are retried on the configured schedule") {
  StubServer server;
  server.on_completions([](const nlohmann::json& body) { return testing::fixed_completion(body, kThreeTokens); });
  server.fail_next(429, 2);
  std::vector<double> slept;
  auto cfg = endpoint(server);
  cfg.retry.base_delay = 0.5;
  cfg.retry.seed = 77;
  HttpProvider provider(cfg, [&](double s) { slept.push_back(s); });
  CostLedger ledger;
  CHECK(provider.sample(request(2), ledger).size() == 2);
  CHECK(server.request_count() == 3);
  CHECK(provider.calls() == 3);
  REQUIRE(slept.size() == 2);
  CHECK(slept[0] == retry_delay(cfg.retry, 0, 0));
  CHECK(slept[1] == retry_delay(cfg.retry, 1, 1));
  CHECK(slept[0] >= 0.0);
  CHECK(slept[0] < 0.5);
  CHECK(slept[1] < 1.0);
  CHECK(ledger.sampled_completions() == 2);
}

TEST_CASE("retry delays use full jitter") {
  RetryPolicy p;
  for (int k = 0; k < 5; ++k) {
    double hi = 0;
    for (std::uint64_t d = 0; d < 2000; ++d) {
      const double v = retry_delay(p, k, d);
      CHECK(v >= 0.0);
      CHECK(v < p.base_delay * std::pow(p.factor, k));
      hi = std::max(hi, v);
    }
    CHECK(hi > 0.9 * p.base_delay * std::pow(p.factor, k));
  }
}

TEST_CASE("exhausted retries become a provider error") {
  StubServer server;
  server.on_completions([](const nlohmann::json& body) { return testing::fixed_completion(body, kThreeTokens); });
  server.fail_next(503, 10);
  HttpProvider provider(endpoint(server), [](double) {});
  CostLedger ledger;
  try {
    provider.sample(request(1), ledger);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("provider unavailable") != std::string::npos);
  }
  CHECK(server.request_count() == 5);
  CHECK(ledger.sampled_completions() == 0);
}

TEST_CASE("client errors are not retried") {
  StubServer server;
  server.on_completions([](const nlohmann::json&) { return StubReply{400, {{"error", "bad"}}}; });
  HttpProvider provider(endpoint(server), [](double) {});
  CostLedger ledger;
  CHECK_THROWS_AS(provider.sample(request(1), ledger), ProviderError);
  CHECK(server.request_count() == 1);
}

TEST_CASE("connection failures are provider errors") {
  EndpointConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.timeout_seconds = 1;
  cfg.retry.attempts = 2;
  HttpProvider provider(cfg, [](double) {});
  CostLedger ledger;
  CHECK_THROWS_AS(provider.sample(request(1), ledger), ProviderError);
}

TEST_CASE("missing logprobs are refused") {
  StubServer server;
  server.on_completions([](const nlohmann::json&) {
    nlohmann::json choice = {{"index", 0}, {"text", "hi"}};
    choice["logprobs"] = nullptr;
    nlohmann::json body;
    body["choices"] = nlohmann::json::array({choice});
    return StubReply{200, body};
  });
  HttpProvider provider(endpoint(server));
  CostLedger ledger;
  try {
    provider.sample(request(1), ledger);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()) == "provider does not expose logprobs");
  }
}

TEST_CASE("response parsing orders choices by index and maps null logprobs") {
  nlohmann::json body = {
      {"choices",
       {{{"index", 1}, {"text", "b"}, {"logprobs", {{"tokens", {"b"}}, {"token_logprobs", {-1.0}}}}},
        {{"index", 0}, {"text", "a"}, {"logprobs", {{"tokens", {"a"}}, {"token_logprobs", {nullptr}}}}}}}};
  auto parsed = parse_completions_response(body);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].first == "a");
  CHECK(parsed[0].second[0].logprob == 0.0);
  CHECK(parsed[1].second[0].logprob == -1.0);
}

TEST_CASE("api key is sent as a bearer token") {
  StubServer server;
  server.on_completions([](const nlohmann::json& body) { return testing::fixed_completion(body, kThreeTokens); });
  auto cfg = endpoint(server);
  cfg.api_key_env = "UNPRM_TEST_KEY";
  ::setenv("UNPRM_TEST_KEY", "secret", 1);
  HttpProvider provider(cfg);
  CostLedger ledger;
  provider.sample(request(1), ledger);
  CHECK(server.last_authorization() == "Bearer secret");
  ::unsetenv("UNPRM_TEST_KEY");
  provider.sample(request(1), ledger);
  CHECK(server.last_authorization().empty());
}

TEST_CASE("remote scorer") {
  StubServer server;
  server.on_score([](const nlohmann::json& body) {
    nlohmann::json scores = nlohmann::json::array();
    for (std::size_t i = 0; i < body["steps"].size(); ++i) scores.push_back(0.25 * static_cast<double>(i + 1));
    return StubReply{200, {{"scores", scores}}};
  });
  HttpScorer scorer(endpoint(server));
  Question q{"q", "What?", "1"};
  auto s = testing::solution_with_steps({"a", "b", "c"});
  CHECK(scorer.score(q, s.steps) == StepScoreVector{0.25, 0.5, 0.75});
  auto log = server.requests("/v1/prm/score");
  REQUIRE(log.size() == 1);
  CHECK(log[0]["question"] == "What?");
  CHECK(log[0]["steps"].size() == 3);

  server.on_score([](const nlohmann::json&) { return StubReply{200, {{"scores", {0.5}}}}; });
  try {
    scorer.score(q, s.steps);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()) == "score cardinality mismatch");
  }
  server.on_score([](const nlohmann::json&) { return StubReply{200, {{"scores", {0.5, 2.0, 0.1}}}}; });
  CHECK_THROWS_AS(scorer.score(q, s.steps), ProviderError);
}

TEST_CASE("ledger totals reconcile with the stub's own counters") {
  std::vector<Question> qs{{"a", "Track puzzle a.", "30"}, {"b", "Track puzzle b.", "31"}};
  SimulatedProvider sim(21);
  for (const auto& q : qs) sim.add_question(q, simple_world(q, 0.4, 2));
  StubServer server;
  server.on_completions(testing::simulated_completions(sim, qs));
  auto cfg = endpoint(server);
  cfg.max_n_per_call = 5;
  cfg.concurrency = 3;
  HttpProvider provider(cfg);
  auto candidates = sim_candidates(sim, qs);
  REQUIRE_FALSE(candidates.empty());
  AnnotationConfig ac;
  ac.workers = 2;
  ac.fallback = FallbackPolicy::highest_delta;
  CostLedger ledger;
  auto labeled = annotate_all(candidates, qs, AnnotatorKind::uncertainty, ac, provider, ledger);
  CHECK(labeled.size() == candidates.size());
  CHECK(ledger.sampled_completions() == server.served_completions());
  CHECK(ledger.generated_tokens() == server.served_tokens());
  CHECK(ledger.sampled_completions() > 0);
}

TEST_CASE("recorded http sessions replay to identical annotations") {
  std::vector<Question> qs{{"a", "Track puzzle a.", "30"}};
  SimulatedProvider sim(22);
  sim.add_question(qs[0], simple_world(qs[0], 0.4, 2));
  StubServer server;
  server.on_completions(testing::simulated_completions(sim, qs));
  auto cfg = endpoint(server);
  cfg.concurrency = 1;
  HttpProvider provider(cfg);
  RecordingProvider recorder(provider);
  auto candidates = sim_candidates(sim, qs);
  AnnotationConfig ac;
  ac.fallback = FallbackPolicy::highest_delta;
  CostLedger live_ledger;
  auto live = annotate_all(candidates, qs, AnnotatorKind::binary_search, ac, recorder, live_ledger);
  const auto calls = server.request_count();

  ReplayProvider replay(recorder.recording());
  CostLedger replay_ledger;
  auto again = annotate_all(candidates, qs, AnnotatorKind::binary_search, ac, replay, replay_ledger);
  CHECK(again == live);
  CHECK(replay_ledger.snapshot() == live_ledger.snapshot());
  CHECK(server.request_count() == calls);
}

TEST_CASE("endpoint config validation") {
  CHECK_THROWS_AS(endpoint_config_from_json({{"concurrency", 0}}), UsageError);
  auto c = endpoint_config_from_json({{"base_url", "http://x"}, {"max_n_per_call", 8}, {"retry", {{"attempts", 2}}}});
  CHECK(c.base_url == "http://x");
  CHECK(c.max_n_per_call == 8);
  CHECK(c.retry.attempts == 2);
  CHECK(c.api_key_env == "UNPRM_API_KEY");
}
