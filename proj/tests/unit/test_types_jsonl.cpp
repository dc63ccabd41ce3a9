#include "fixtures.hpp"
#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace unprm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "unprm_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

bool monotone(const std::vector<bool>& labels) {
  bool seen_false = false;
  for (bool b : labels) {
    if (b && seen_false) return false;
    if (!b) seen_false = true;
  }
  return true;
}

}  // namespace

TEST_CASE("labeled solutions accept exactly the monotone labelings") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int t = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<std::string> texts;
    for (int i = 0; i < t; ++i) texts.push_back("step " + std::to_string(i));
    std::vector<bool> labels(t);
    for (int i = 0; i < t; ++i) labels[i] = rng.bernoulli(0.5);
    auto s = testing::solution_with_steps(texts);
    if (monotone(labels)) {
      LabeledSolution l(s, labels, AnnotationMethod::random);
      std::optional<int> expect;
      for (int i = 0; i < t; ++i) {
        if (!labels[i]) {
          expect = i + 1;
          break;
        }
      }
      CHECK(l.error_index() == expect);
    } else {
      CHECK_THROWS_AS(LabeledSolution(s, labels, AnnotationMethod::random), DataError);
    }
  }
}

TEST_CASE("label count must match step count") {
  auto s = testing::solution_with_steps({"a", "b"});
  CHECK_THROWS_AS(LabeledSolution(s, {true}, AnnotationMethod::random), DataError);
}

TEST_CASE("error index construction") {
  auto s = testing::solution_with_steps({"a", "b", "c"});
  auto l = LabeledSolution::from_error_index(s, 2, AnnotationMethod::binary_search, 3);
  CHECK(l.labels() == std::vector<bool>{true, false, false});
  CHECK(l.probes() == std::optional<int>(3));
  CHECK(LabeledSolution::from_error_index(s, std::nullopt, AnnotationMethod::all_true).labels() ==
        std::vector<bool>{true, true, true});
  CHECK_THROWS_AS(LabeledSolution::from_error_index(s, 4, AnnotationMethod::random), DataError);
}

TEST_CASE("question validation") {
  CHECK_THROWS_AS(validate(Question{"q", "", "1"}), DataError);
  CHECK_THROWS_AS(validate(Question{"q", "what", ""}), DataError);
  CHECK_NOTHROW(validate(Question{"q", "what", "1"}));
}

TEST_CASE("empty jsonl round trip") {
  auto path = temp_file("empty.jsonl");
  write_jsonl(path, {});
  CHECK(std::filesystem::file_size(path) == 0);
  CHECK(read_jsonl(path).empty());
}

TEST_CASE("questions round trip") {
  std::vector<Question> qs{{"a", "one?", "1"}, {"b", "two?", "2"}, {"c", "three?", "3/4"}};
  auto path = temp_file("questions.jsonl");
  write_jsonl(path, to_json_records(qs));
  std::ifstream in(path);
  int lines = 0;
  for (std::string line; std::getline(in, line);) {
    ++lines;
    CHECK(line.find("\"schema\":\"unprm/v1\"") != std::string::npos);
  }
  CHECK(lines == 3);
  CHECK(read_questions(path) == qs);
}

TEST_CASE("step tag character survives a round trip") {
  auto s = testing::solution_with_steps({"tag \xC5\x9F inside", "plain"});
  s.steps[0].tokens[0].text = s.steps[0].text;
  auto l = LabeledSolution::from_error_index(s, 2, AnnotationMethod::uncertainty, 1);
  auto path = temp_file("tagged.jsonl");
  write_jsonl(path, {to_json(l)});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.find("\\u015f") != std::string::npos);
  auto back = read_labeled(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == l);
}

TEST_CASE("solution json round trip keeps optional fields") {
  auto s = testing::solution_with_logprobs({{-0.5, -1.0}, {-2.0}});
  s.is_correct = false;
  s.sequence_uncertainty = 0.75;
  CHECK(solution_from_json(to_json(s)) == s);
  s.final_answer.reset();
  s.is_correct.reset();
  CHECK(solution_from_json(to_json(s)) == s);
}

TEST_CASE("malformed lines name their line number") {
  auto path = temp_file("bad.jsonl");
  {
    std::ofstream out(path);
    out << "{\"id\":\"a\"}\n{not json\n";
  }
  try {
    read_jsonl(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(read_jsonl(temp_file("missing.jsonl")), DataError);
}

TEST_CASE("labeled records carry exact fields") {
  auto s = testing::solution_with_steps({"a", "b"});
  auto j = to_json(LabeledSolution::from_error_index(s, 1, AnnotationMethod::random));
  for (const char* key : {"schema", "question_id", "steps", "labels", "error_index", "annotation_method"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["annotation_method"] == "random");
  CHECK(has_labels(j));
  CHECK_FALSE(has_labels(to_json(s)));
}
