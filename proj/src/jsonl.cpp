#include "unprm/jsonl.hpp"

#include "unprm/error.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace unprm {
namespace {

template <typename T>
T field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw DataError(std::string("missing field '") + name + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
json nullable(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json to_json(const TokenRecord& token) { return {{"text", token.text}, {"logprob", token.logprob}}; }

json to_json(const Step& step) {
  json tokens = json::array();
  for (const auto& t : step.tokens) tokens.push_back(to_json(t));
  return {{"index", step.index}, {"text", step.text}, {"tokens", std::move(tokens)}};
}

json to_json(const Question& question) {
  return {{"schema", kSchemaTag},
          {"id", question.id},
          {"statement", question.statement},
          {"gold_answer", question.gold_answer}};
}

json to_json(const SampledSolution& solution) {
  json steps = json::array();
  for (const auto& s : solution.steps) steps.push_back(to_json(s));
  return {{"schema", kSchemaTag},
          {"question_id", solution.question_id},
          {"generator_tag", solution.generator_tag},
          {"final_answer", nullable(solution.final_answer)},
          {"is_correct", nullable(solution.is_correct)},
          {"sequence_uncertainty", nullable(solution.sequence_uncertainty)},
          {"steps", std::move(steps)}};
}

json to_json(const LabeledSolution& labeled) {
  json j = to_json(labeled.solution());
  json labels = json::array();
  for (bool b : labeled.labels()) labels.push_back(b);
  j["labels"] = std::move(labels);
  j["error_index"] = nullable(labeled.error_index());
  j["annotation_method"] = std::string(to_string(labeled.method()));
  if (labeled.probes()) j["probes"] = *labeled.probes();
  return j;
}

TokenRecord token_from_json(const json& j) {
  return TokenRecord(field<std::string>(j, "text"), field<double>(j, "logprob"));
}

Step step_from_json(const json& j) {
  Step step;
  step.index = field<int>(j, "index");
  step.text = field<std::string>(j, "text");
  for (const auto& t : field<json>(j, "tokens")) step.tokens.push_back(token_from_json(t));
  return step;
}

Question question_from_json(const json& j) {
  Question q{field<std::string>(j, "id"), field<std::string>(j, "statement"),
             field<std::string>(j, "gold_answer")};
  validate(q);
  return q;
}

SampledSolution solution_from_json(const json& j) {
  SampledSolution s;
  s.question_id = field<std::string>(j, "question_id");
  s.generator_tag = optional_field<std::string>(j, "generator_tag").value_or("");
  s.final_answer = optional_field<std::string>(j, "final_answer");
  s.is_correct = optional_field<bool>(j, "is_correct");
  s.sequence_uncertainty = optional_field<double>(j, "sequence_uncertainty");
  for (const auto& st : field<json>(j, "steps")) s.steps.push_back(step_from_json(st));
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    if (s.steps[i].index != static_cast<int>(i) + 1) {
      throw DataError("step indices are not contiguous from 1");
    }
  }
  return s;
}

bool has_labels(const json& j) { return j.contains("labels"); }

LabeledSolution labeled_from_json(const json& j) {
  auto solution = solution_from_json(j);
  auto labels = field<std::vector<bool>>(j, "labels");
  auto method = annotation_method_from_string(field<std::string>(j, "annotation_method"));
  LabeledSolution labeled(std::move(solution), std::move(labels), method,
                          optional_field<int>(j, "probes"));
  if (labeled.error_index() != optional_field<int>(j, "error_index")) {
    throw DataError("error_index does not match labels");
  }
  return labeled;
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', /*ensure_ascii=*/true); }

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ": malformed JSON on line " + std::to_string(line_no) + ": " +
                      e.what());
    }
  }
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write " + tmp.string());
    }
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move " + tmp.string() + " into place");
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string contents;
  for (const auto& r : records) {
    contents += dump_line(r);
    contents += '\n';
  }
  write_text_atomic(path, contents);
}

std::vector<Question> read_questions(const std::filesystem::path& path) {
  auto questions = read_records<Question>(path, question_from_json);
  std::set<std::string> seen;
  for (const auto& q : questions) {
    if (!seen.insert(q.id).second) {
      throw DataError("duplicate question id '" + q.id + "' in " + path.string());
    }
  }
  return questions;
}

std::vector<SampledSolution> read_solutions(const std::filesystem::path& path) {
  return read_records<SampledSolution>(path, solution_from_json);
}

std::vector<LabeledSolution> read_labeled(const std::filesystem::path& path) {
  return read_records<LabeledSolution>(path, labeled_from_json);
}

}  // namespace unprm
