#include "fixtures.hpp"
#include "unprm/backend.hpp"
#include "unprm/error.hpp"
#include "unprm/simulator.hpp"

#include <doctest.h>

using namespace unprm;

namespace {

LabelLookup fixed_labels(std::vector<bool> labels) {
  return [labels](const Question&, std::span<const Step>) -> std::optional<std::vector<bool>> { return labels; };
}

class CountingScorer : public StepScorer {
public:
  StepScoreVector score(const Question&, std::span<const Step> steps) override {
    ++calls;
    return StepScoreVector(steps.size(), 0.5);
  }
  int calls = 0;
};

}  // namespace

TEST_CASE("prompt rendering") {
  Question q{"q", "What is 1+1?", "2"};
  std::vector<std::string> none;
  CHECK(render_prompt(kDefaultPromptTemplate, q, none) == "What is 1+1?\n\n");
  std::vector<std::string> two{"a", "b"};
  CHECK(render_prompt(kDefaultPromptTemplate, q, two) == "What is 1+1?\n\na\n\nb\n\n");
  CHECK(render_prompt("Q: {question} | {steps}", q, two) == "Q: What is 1+1? | a\n\nb\n\n");
}

TEST_CASE("request validation") {
  SamplingRequest r;
  r.n = 0;
  CHECK_THROWS_AS(validate(r), UsageError);
  r.n = 1;
  r.temperature = -0.1;
  CHECK_THROWS_AS(validate(r), UsageError);
  r.temperature = 0.0;
  r.max_tokens = 0;
  CHECK_THROWS_AS(validate(r), UsageError);
}

TEST_CASE("make_request carries the prefix") {
  Question q{"q", "Q", "1"};
  auto s = testing::solution_with_steps({"first", "second", "third"});
  auto r = make_request(q, std::span<const Step>(s.steps).first(2), 8, SamplingDefaults{}, 99);
  CHECK(r.prefix_steps == std::vector<std::string>{"first", "second"});
  CHECK(r.prompt == "Q\n\nfirst\n\nsecond\n\n");
  CHECK(r.n == 8);
  CHECK(r.seed == std::optional<std::uint64_t>(99));
}

TEST_CASE("completion parsing") {
  std::vector<TokenRecord> toks{{"Step 1: x", -0.1}, {"\n\n", -0.2}, {"so \\boxed{7}", -0.3}};
  auto s = solution_from_completion("q", "Step 1: x\n\nso \\boxed{7}", toks, "m");
  CHECK(s.steps.size() == 2);
  CHECK(s.final_answer == std::optional<std::string>("7"));
  CHECK(s.format_valid());
  auto empty = solution_from_completion("q", "", {}, "m");
  CHECK_FALSE(empty.format_valid());
}

TEST_CASE("cost snapshot json") {
  CostSnapshot c{3, 40, 500};
  auto j = to_json(c);
  CHECK(j.size() == 3);
  CHECK(cost_from_json(j) == c);
}

TEST_CASE("ledger is monotone and additive") {
  CostLedger l;
  l.add_verified_steps();
  l.add_verified_steps(2);
  l.add_completions(5, 70);
  CHECK(l.snapshot() == CostSnapshot{3, 5, 70});
}

TEST_CASE("noiseless and epsilon oracle scores") {
  Question q{"q", "Q", "1"};
  auto s = testing::solution_with_steps({"a", "b", "c"});
  OracleScorer exact(fixed_labels({true, true, false}), {});
  CHECK(exact.score(q, s.steps) == StepScoreVector{1.0, 1.0, 0.0});
  OracleScorer eps(fixed_labels({true, true, false}), {0.1, 0.0, 0});
  auto v = eps.score(q, s.steps);
  CHECK(v[0] == doctest::Approx(0.9));
  CHECK(v[1] == doctest::Approx(0.9));
  CHECK(v[2] == doctest::Approx(0.1));
  CHECK(eps.calls() == 1);
}

TEST_CASE("noisy oracle flip rate") {
  Question q{"q", "Q", "1"};
  int flips = 0, total = 0;
  for (int sol = 0; sol < 100; ++sol) {
    std::vector<std::string> texts;
    for (int i = 0; i < 100; ++i) texts.push_back("s" + std::to_string(sol) + "t" + std::to_string(i));
    auto s = testing::solution_with_steps(texts);
    OracleScorer noisy(fixed_labels(std::vector<bool>(100, true)), {0.0, 0.2, 17});
    for (double v : noisy.score(q, s.steps)) {
      flips += v == 0.0;
      ++total;
    }
  }
  CHECK(total == 10000);
  CHECK(std::abs(flips / 10000.0 - 0.2) <= 0.01);
}

TEST_CASE("oracle noise is deterministic") {
  Question q{"q", "Q", "1"};
  auto s = testing::solution_with_steps({"a", "b", "c", "d", "e", "f"});
  OracleScorer a(fixed_labels(std::vector<bool>(6, true)), {0.0, 0.5, 4});
  OracleScorer b(fixed_labels(std::vector<bool>(6, true)), {0.0, 0.5, 4});
  CHECK(a.score(q, s.steps) == b.score(q, s.steps));
  CHECK(a.score(q, s.steps) == a.score(q, s.steps));
}

TEST_CASE("oracle without labels is a data error") {
  Question q{"q", "Q", "1"};
  auto s = testing::solution_with_steps({"a"});
  OracleScorer missing([](const Question&, std::span<const Step>) { return std::optional<std::vector<bool>>(); }, {});
  CHECK_THROWS_AS(missing.score(q, s.steps), DataError);
  OracleScorer wrong_size(fixed_labels({true, false}), {});
  CHECK_THROWS_AS(wrong_size.score(q, s.steps), DataError);
}

TEST_CASE("oracle from labeled solutions") {
  Question q{"q1", "Q", "1"};
  auto s = testing::solution_with_steps({"a", "b"});
  std::vector<LabeledSolution> labeled{LabeledSolution::from_error_index(s, 2, AnnotationMethod::random)};
  OracleScorer o(OracleScorer::from_labeled(labeled), {});
  CHECK(o.score(q, s.steps) == StepScoreVector{1.0, 0.0});
}

TEST_CASE("caching scorer calls through once per solution") {
  Question q{"q1", "Q", "1"};
  CountingScorer inner;
  CachingScorer cache(inner);
  auto a = testing::solution_with_steps({"a", "b"});
  auto b = testing::solution_with_steps({"a", "c"});
  cache.score(q, a.steps);
  cache.score(q, a.steps);
  cache.score(q, b.steps);
  CHECK(inner.calls == 2);
}

TEST_CASE("solution key depends on question and step texts") {
  auto a = testing::solution_with_steps({"a", "b"});
  auto b = testing::solution_with_steps({"ab"});
  CHECK(solution_key("q", a.steps) != solution_key("q", b.steps));
  CHECK(solution_key("q", a.steps) != solution_key("r", a.steps));
  CHECK(solution_key("q", a.steps) == solution_key("q", a.steps));
}
