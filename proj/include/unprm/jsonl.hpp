#pragma once

#include "unprm/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace unprm {

using json = nlohmann::json;

inline constexpr const char* kSchemaTag = "unprm/v1";

json to_json(const TokenRecord& token);
json to_json(const Step& step);
json to_json(const Question& question);
json to_json(const SampledSolution& solution);
json to_json(const LabeledSolution& labeled);

TokenRecord token_from_json(const json& j);
Step step_from_json(const json& j);
Question question_from_json(const json& j);
SampledSolution solution_from_json(const json& j);
LabeledSolution labeled_from_json(const json& j);

/// True when the record carries step labels (a labeled.jsonl line).
bool has_labels(const json& j);

/// One compact JSON document per line, non-ASCII escaped. Lines are parsed
/// independently; a malformed line raises DataError naming its line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Atomic write of arbitrary text (used for CSV/JSON reports).
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);

std::string dump_line(const json& j);

template <typename T, typename Fn>
std::vector<T> read_records(const std::filesystem::path& path, Fn&& from_json) {
  std::vector<T> out;
  for (const auto& j : read_jsonl(path)) out.push_back(from_json(j));
  return out;
}

std::vector<Question> read_questions(const std::filesystem::path& path);
std::vector<SampledSolution> read_solutions(const std::filesystem::path& path);
std::vector<LabeledSolution> read_labeled(const std::filesystem::path& path);

template <typename T>
std::vector<json> to_json_records(const std::vector<T>& items) {
  std::vector<json> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(to_json(item));
  return out;
}

}  // namespace unprm
