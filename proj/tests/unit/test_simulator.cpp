#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/simulator.hpp"
#include "unprm/text.hpp"

#include <doctest.h>

using namespace unprm;

namespace {

SamplingRequest request_for(const Question& q, std::vector<std::string> prefix, int n, std::uint64_t seed) {
  SamplingRequest r;
  r.question_id = q.id;
  r.prompt = render_prompt(kDefaultPromptTemplate, q, prefix);
  r.prefix_steps = std::move(prefix);
  r.n = n;
  r.seed = seed;
  return r;
}

std::vector<std::string> step_texts(const SampledSolution& s) {
  std::vector<std::string> out;
  for (const auto& st : s.steps) out.push_back(st.text);
  return out;
}

}  // namespace

TEST_CASE("a certain world always gives its answer") {
  SimulatedProvider sim(1);
  Question q{"q", "Q", "12"};
  sim.add_question(q, simple_world(q, 1.0, 0));
  CostLedger ledger;
  auto out = sim.sample(request_for(q, {}, 50, 3), ledger);
  REQUIRE(out.size() == 50);
  for (const auto& s : out) {
    CHECK(s.final_answer == std::optional<std::string>("12"));
    CHECK_FALSE(sim.first_error(q.id, step_texts(s)).has_value());
  }
}

TEST_CASE("same seed gives byte-identical output") {
  auto run = [] {
    SimulatedProvider sim(5);
    Question q{"q", "Q", "40"};
    sim.add_question(q, simple_world(q, 0.5, 3));
    CostLedger ledger;
    std::string dump;
    for (const auto& s : sim.sample(request_for(q, {}, 20, 8), ledger)) dump += dump_line(to_json(s));
    return dump;
  };
  CHECK(run() == run());
}

TEST_CASE("different request seeds differ") {
  SimulatedProvider sim(5);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.5, 3));
  auto a = sim.complete(q.id, {}, 4, 1);
  auto b = sim.complete(q.id, {}, 4, 2);
  CHECK(a[0].text != b[0].text);
}

TEST_CASE("completion indices are stable across batch sizes") {
  SimulatedProvider sim(2);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.5, 3));
  auto whole = sim.complete(q.id, {}, 6, 9);
  auto tail = sim.complete(q.id, {}, 3, 9, 3);
  CHECK(whole[4].text == tail[1].text);
}

TEST_CASE("recovery probabilities before and after the planted error") {
  SimulatedProvider sim(8);
  Question q{"q", "Q", "40"};
  SimulatedWorld w = simple_world(q, 0.3, 2);
  w.planted_error_step = 3;
  w.recovery_by_depth = {0.9, 0.9, 0.9, 0.9};
  w.clean_recovery = 0.9;
  w.corrupted_recovery = 0.1;
  sim.add_question(q, w);
  CostLedger ledger;
  std::optional<SampledSolution> wrong;
  for (const auto& s : sim.sample(request_for(q, {}, 40, 1), ledger)) {
    if (!answers_match(*s.final_answer, q.gold_answer)) {
      wrong = s;
      break;
    }
  }
  REQUIRE(wrong.has_value());
  auto texts = step_texts(*wrong);
  CHECK(sim.first_error(q.id, texts) == std::optional<int>(3));

  auto fraction = [&](std::size_t depth) {
    std::vector<std::string> prefix(texts.begin(), texts.begin() + static_cast<long>(depth));
    int hits = 0;
    auto batch = sim.sample(request_for(q, prefix, 1000, 77), ledger);
    for (const auto& s : batch) hits += answers_match(*s.final_answer, q.gold_answer);
    return hits / 1000.0;
  };
  CHECK(std::abs(fraction(2) - 0.9) <= 0.03);
  CHECK(std::abs(fraction(3) - 0.1) <= 0.03);
}

TEST_CASE("answer distribution is honored at depth zero") {
  SimulatedProvider sim(4);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.25, 3));
  CostLedger ledger;
  int gold = 0;
  for (const auto& s : sim.sample(request_for(q, {}, 2000, 5), ledger)) gold += answers_match(*s.final_answer, "40");
  CHECK(std::abs(gold / 2000.0 - 0.25) <= 0.03);
}

TEST_CASE("ground truth labels follow the chain") {
  SimulatedProvider sim(4);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.0, 1));
  CostLedger ledger;
  for (const auto& s : sim.sample(request_for(q, {}, 30, 5), ledger)) {
    auto labels = sim.ground_truth_labels(q.id, s.steps);
    auto err = sim.first_error(q.id, step_texts(s));
    REQUIRE(err.has_value());
    CHECK(labels[*err - 1] == false);
    for (int i = 0; i + 1 < *err; ++i) CHECK(labels[i]);
    CHECK(*err >= 2);
  }
}

TEST_CASE("served counters match the ledger") {
  SimulatedProvider sim(4);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.6, 2));
  CostLedger ledger;
  sim.sample(request_for(q, {}, 13, 5), ledger);
  sim.sample(request_for(q, {}, 7, 6), ledger);
  CHECK(ledger.sampled_completions() == sim.completions_served());
  CHECK(ledger.generated_tokens() == sim.tokens_served());
  CHECK(sim.completions_served() == 20);
}

TEST_CASE("world validation") {
  SimulatedWorld w;
  w.answers = {{"1", 0.5}, {"2", 0.4}};
  CHECK_THROWS_AS(validate(w), UsageError);
  w.answers = {{"1", 0.5}, {"2", 0.5}};
  w.recovery_by_depth = {0.01};
  w.corrupted_recovery = 0.02;
  CHECK_THROWS_AS(validate(w), UsageError);
}

TEST_CASE("world json round trip") {
  Question q{"q", "Q", "40"};
  auto w = simple_world(q, 0.4, 3);
  w.planted_error_step = 4;
  w.recovery_by_depth = {0.5, 0.4};
  auto back = world_from_json(to_json(w));
  CHECK(back.answers == w.answers);
  CHECK(back.planted_error_step == w.planted_error_step);
  CHECK(back.recovery_by_depth == w.recovery_by_depth);
}

TEST_CASE("make_simulator uses default world and rejects unknown questions") {
  std::vector<Question> qs{{"a", "A", "5"}, {"b", "B", "6"}};
  nlohmann::json cfg = {{"default_world", {{"gold_probability", 1.0}, {"num_wrong", 0}}}};
  auto sim = make_simulator(cfg, qs, 1);
  CHECK(sim->world("b").answers.at("6") == 1.0);
  CHECK_THROWS_AS(make_simulator(nlohmann::json::object(), qs, 1), UsageError);
}

TEST_CASE("record and replay are interchangeable") {
  SimulatedProvider sim(3);
  Question q{"q", "Q", "40"};
  sim.add_question(q, simple_world(q, 0.5, 2));
  RecordingProvider rec(sim);
  CostLedger a;
  auto first = rec.sample(request_for(q, {}, 5, 1), a);
  ReplayProvider replay(rec.recording());
  CostLedger b;
  CHECK(replay.sample(request_for(q, {}, 5, 1), b) == first);
  CHECK(b.snapshot() == a.snapshot());
  CHECK_THROWS_AS(replay.sample(request_for(q, {}, 5, 2), b), ProviderError);
}

TEST_CASE("format-invalid completions have no answer") {
  SimulatedProvider sim(3);
  Question q{"q", "Q", "40"};
  auto w = simple_world(q, 0.5, 2);
  w.format_invalid_probability = 1.0;
  sim.add_question(q, w);
  CostLedger ledger;
  for (const auto& s : sim.sample(request_for(q, {}, 5, 1), ledger)) CHECK_FALSE(s.format_valid());
}
