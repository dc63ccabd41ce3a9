#include "unprm/evalkit.hpp"

#include "unprm/annotate.hpp"
#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/log.hpp"
#include "unprm/rng.hpp"
#include "unprm/text.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace unprm {
namespace {

int scaled(int x, int n) { return static_cast<int>(std::floor(x * static_cast<double>(n) / 128.0 + 0.5)); }

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << v;
  return out.str();
}

}  // namespace

std::vector<QuestionSamples> pair_samples(std::span<const Question> questions,
                                          std::span<const SampledSolution> samples) {
  std::vector<QuestionSamples> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& q : questions) {
    slot.emplace(q.id, out.size());
    out.push_back({q, {}});
  }
  for (const auto& s : samples) {
    auto it = slot.find(s.question_id);
    if (it == slot.end()) {
      throw DataError("sample refers to unknown question '" + s.question_id + "'");
    }
    out[it->second].samples.push_back(s);
  }
  return out;
}

nlohmann::json to_json(const SweepResult& r) {
  return {{"schema", kSchemaTag},
          {"strategy", std::string(to_string(r.strategy))},
          {"sample_sizes", r.sample_sizes},
          {"accuracy_per_size", r.accuracy_per_size},
          {"seed", r.seed},
          {"subset_protocol", "nested_prefix_of_seeded_shuffle"}};
}

std::vector<SampledSolution> shuffled_pool(const QuestionSamples& entry, std::uint64_t seed) {
  auto pool = entry.samples;
  Rng rng(mix_seed(seed, fnv1a(entry.question.id)));
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  return pool;
}

SweepResult bon_sweep(std::span<const QuestionSamples> dataset, Strategy strategy, StepScorer* scorer,
                      std::span<const int> sizes, std::uint64_t seed, double alpha) {
  if (sizes.empty()) {
    throw UsageError("sweep needs at least one sample size");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1 || (i > 0 && sizes[i] <= sizes[i - 1])) {
      throw UsageError("sweep sizes must be positive and strictly increasing");
    }
  }
  const int largest = sizes.back();
  SweepResult result;
  result.strategy = strategy;
  result.sample_sizes.assign(sizes.begin(), sizes.end());
  result.seed = seed;
  std::vector<int> hits(sizes.size(), 0);
  for (const auto& entry : dataset) {
    if (static_cast<int>(entry.samples.size()) < largest) {
      throw DataError("question '" + entry.question.id + "' has " + std::to_string(entry.samples.size()) +
                      " samples, fewer than " + std::to_string(largest));
    }
    const auto pool = shuffled_pool(entry, seed);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto prefix = std::span<const SampledSolution>(pool).first(static_cast<std::size_t>(sizes[k]));
      if (candidate_answers(prefix).answers.empty()) continue;
      if (aggregate(strategy, prefix, entry.question, scorer, alpha).is_correct.value_or(false)) ++hits[k];
    }
  }
  for (int h : hits) {
    result.accuracy_per_size.push_back(dataset.empty() ? 0.0 : static_cast<double>(h) / dataset.size());
  }
  return result;
}

nlohmann::json to_json(const F1Report& r) {
  return {{"error_accuracy", r.error_accuracy},
          {"correct_accuracy", r.correct_accuracy},
          {"f1", r.f1},
          {"erroneous", r.erroneous},
          {"correct", r.correct}};
}

double harmonic_f1(double ea, double ca) { return ea + ca > 0.0 ? 2.0 * ea * ca / (ea + ca) : 0.0; }

F1Report processbench_f1(std::span<const std::optional<int>> predictions,
                         std::span<const std::optional<int>> references) {
  if (predictions.size() != references.size()) {
    throw DataError("predictions and references differ in length");
  }
  F1Report r;
  int error_hits = 0;
  int correct_hits = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (references[i]) {
      ++r.erroneous;
      if (predictions[i] == references[i]) ++error_hits;
    } else {
      ++r.correct;
      if (!predictions[i]) ++correct_hits;
    }
  }
  if (r.erroneous == 0 || r.correct == 0) {
    log_warning("F1 undefined: a reference class is empty");
    r.error_accuracy = r.erroneous ? static_cast<double>(error_hits) / r.erroneous : 0.0;
    r.correct_accuracy = r.correct ? static_cast<double>(correct_hits) / r.correct : 0.0;
    r.f1 = 0.0;
    return r;
  }
  r.error_accuracy = static_cast<double>(error_hits) / r.erroneous;
  r.correct_accuracy = static_cast<double>(correct_hits) / r.correct;
  r.f1 = harmonic_f1(r.error_accuracy, r.correct_accuracy);
  return r;
}

std::map<std::string, TagStats> dataset_stats(std::span<const LabeledSolution> labeled,
                                              const UncertaintyOptions& options) {
  std::map<std::string, std::vector<LabeledSolution>> by_tag;
  for (const auto& l : labeled) by_tag[l.solution().generator_tag].push_back(l);
  std::map<std::string, TagStats> out;
  for (const auto& [tag, items] : by_tag) {
    auto summary = error_rank_statistics(items, options);
    TagStats s;
    s.samples = static_cast<int>(items.size());
    s.incorrect = static_cast<int>(summary.ranks.size());
    s.avg_probes = summary.mean_probes;
    s.avg_rank = summary.mean_rank;
    out[tag] = s;
  }
  return out;
}

nlohmann::json to_json(const std::map<std::string, TagStats>& stats) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [tag, s] : stats) {
    j[tag] = {{"samples", s.samples},
              {"incorrect", s.incorrect},
              {"avg_probes", s.avg_probes},
              {"avg_rank", s.avg_rank}};
  }
  return j;
}

std::vector<std::pair<int, int>> frequency_buckets(int n) {
  std::vector<std::pair<int, int>> raw = {{0, 0},
                                          {1, scaled(20, n) - 1},
                                          {scaled(20, n), scaled(40, n)},
                                          {scaled(40, n) + 1, scaled(64, n) - 1},
                                          {scaled(64, n), n}};
  std::vector<std::pair<int, int>> out;
  for (const auto& b : raw) {
    if (b.first <= b.second) out.push_back(b);
  }
  return out;
}

int gold_frequency(const QuestionSamples& entry) {
  int f = 0;
  for (const auto& s : entry.samples) {
    if (s.final_answer && answers_match(*s.final_answer, entry.question.gold_answer)) ++f;
  }
  return f;
}

FrequencyReport frequency_analysis(std::span<const QuestionSamples> dataset,
                                   const std::map<std::string, std::vector<Decision>>& decisions) {
  FrequencyReport report;
  for (const auto& e : dataset) report.pool_size = std::max(report.pool_size, static_cast<int>(e.samples.size()));
  for (const auto& [lo, hi] : frequency_buckets(report.pool_size)) {
    FrequencyBucket b;
    b.lo = lo;
    b.hi = hi;
    for (const auto& [name, list] : decisions) {
      b.correct[name] = 0;
      b.incorrect[name] = 0;
    }
    report.buckets.push_back(std::move(b));
  }
  std::map<std::string, std::map<std::string, bool>> outcome;
  for (const auto& [name, list] : decisions) {
    for (const auto& d : list) outcome[name][d.question_id] = d.is_correct.value_or(false);
  }
  for (const auto& e : dataset) {
    const int f = gold_frequency(e);
    report.gold_frequency.push_back(f);
    auto bucket = std::find_if(report.buckets.begin(), report.buckets.end(),
                               [f](const FrequencyBucket& b) { return b.lo <= f && f <= b.hi; });
    if (bucket == report.buckets.end()) continue;
    ++bucket->questions;
    for (const auto& [name, by_question] : outcome) {
      auto it = by_question.find(e.question.id);
      const bool ok = it != by_question.end() && it->second;
      ++(ok ? bucket->correct[name] : bucket->incorrect[name]);
    }
  }
  return report;
}

std::string to_csv(const FrequencyReport& report) {
  std::string out = "bucket_lo,bucket_hi,questions,strategy,correct,incorrect,accuracy\n";
  for (const auto& b : report.buckets) {
    if (b.correct.empty()) {
      out += std::to_string(b.lo) + "," + std::to_string(b.hi) + "," + std::to_string(b.questions) + ",,,,\n";
      continue;
    }
    for (const auto& [name, c] : b.correct) {
      const int w = b.incorrect.at(name);
      const double acc = c + w > 0 ? static_cast<double>(c) / (c + w) : 0.0;
      out += std::to_string(b.lo) + "," + std::to_string(b.hi) + "," + std::to_string(b.questions) + "," + name +
             "," + std::to_string(c) + "," + std::to_string(w) + "," + format_double(acc) + "\n";
    }
  }
  return out;
}

nlohmann::json to_json(const TrainingRecord& r) {
  return {{"schema", kSchemaTag},
          {"question_id", r.question_id},
          {"problem", r.problem},
          {"input", r.input},
          {"target", r.target}};
}

TrainingRecord training_record_from_json(const nlohmann::json& j) {
  try {
    return {j.at("question_id").get<std::string>(), j.at("problem").get<std::string>(),
            j.at("input").get<std::string>(), j.at("target").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed training record: ") + e.what());
  }
}

std::string escape_step_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, kEscapeChar.size()) == kEscapeChar) {
      out += kEscapeChar;
      out += kEscapeChar;
      i += kEscapeChar.size();
    } else if (text.substr(i, kStepTag.size()) == kStepTag) {
      out += kEscapeChar;
      out += 't';
      i += kStepTag.size();
    } else {
      out += text[i++];
    }
  }
  return out;
}

std::string unescape_step_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.substr(i, kEscapeChar.size()) != kEscapeChar) {
      out += text[i++];
      continue;
    }
    i += kEscapeChar.size();
    if (text.substr(i, kEscapeChar.size()) == kEscapeChar) {
      out += kEscapeChar;
      i += kEscapeChar.size();
    } else if (i < text.size() && text[i] == 't') {
      out += kStepTag;
      ++i;
    } else {
      throw DataError("dangling escape in training text");
    }
  }
  return out;
}

TrainingRecord export_training_record(const LabeledSolution& labeled, const Question& question) {
  const auto& steps = labeled.solution().steps;
  if (steps.empty()) {
    throw DataError("cannot export a solution without steps");
  }
  TrainingRecord r;
  r.question_id = question.id;
  r.problem = question.statement;
  r.input = escape_step_text(question.statement) + "\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) r.input += "\n";
    r.input += escape_step_text(steps[i].text);
    r.input += kStepTag;
    r.target += labeled.labels()[i] ? '+' : '-';
  }
  return r;
}

std::vector<TrainingRecord> export_training_data(std::span<const LabeledSolution> labeled,
                                                 std::span<const Question> questions) {
  std::map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;
  std::vector<TrainingRecord> out;
  out.reserve(labeled.size());
  for (const auto& l : labeled) {
    auto it = by_id.find(l.solution().question_id);
    if (it == by_id.end()) {
      throw DataError("labeled solution refers to unknown question '" + l.solution().question_id + "'");
    }
    out.push_back(export_training_record(l, *it->second));
  }
  return out;
}

std::size_t count_step_tags(std::string_view input) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < input.size()) {
    if (input.substr(i, kEscapeChar.size()) == kEscapeChar) {
      i += kEscapeChar.size();
      if (input.substr(i, kEscapeChar.size()) == kEscapeChar) {
        i += kEscapeChar.size();
      } else {
        ++i;
      }
    } else if (input.substr(i, kStepTag.size()) == kStepTag) {
      ++n;
      i += kStepTag.size();
    } else {
      ++i;
    }
  }
  return n;
}

ParsedTraining parse_training_record(const TrainingRecord& record) {
  ParsedTraining parsed;
  parsed.problem = record.problem;
  const std::string head = escape_step_text(record.problem) + "\n";
  std::string_view rest = record.input;
  if (rest.substr(0, head.size()) != head) {
    throw DataError("training input does not start with its problem");
  }
  rest.remove_prefix(head.size());

  std::string current;
  std::size_t i = 0;
  while (i < rest.size()) {
    if (rest.substr(i, kEscapeChar.size()) == kEscapeChar) {
      const std::size_t width = rest.substr(i + kEscapeChar.size(), kEscapeChar.size()) == kEscapeChar
                                    ? 2 * kEscapeChar.size()
                                    : kEscapeChar.size() + 1;
      current.append(rest.substr(i, width));
      i += width;
    } else if (rest.substr(i, kStepTag.size()) == kStepTag) {
      parsed.steps.push_back(unescape_step_text(current));
      current.clear();
      i += kStepTag.size();
      if (i < rest.size()) {
        if (rest[i] != '\n') {
          throw DataError("step tag not followed by a newline");
        }
        ++i;
        if (i == rest.size()) {
          throw DataError("training input ends with a newline");
        }
      }
    } else {
      current += rest[i++];
    }
  }
  if (!current.empty() || parsed.steps.empty()) {
    throw DataError("training input does not end with a step tag");
  }
  if (record.target.size() != parsed.steps.size()) {
    throw DataError("target length does not match the step count");
  }
  for (char c : record.target) {
    if (c != '+' && c != '-') {
      throw DataError("target holds a character other than '+' or '-'");
    }
    parsed.labels.push_back(c == '+');
  }
  return parsed;
}

}  // namespace unprm
