#include "unprm/types.hpp"

#include "unprm/error.hpp"

#include <cmath>

namespace unprm {

double clamp_logprob(double logprob) {
  if (std::isnan(logprob)) {
    throw DataError("token logprob is NaN");
  }
  if (logprob < kLogprobFloor) {
    return kLogprobFloor;
  }
  // Providers occasionally report tiny positive values from rounding.
  if (logprob > 0.0) {
    return 0.0;
  }
  return logprob;
}

TokenRecord::TokenRecord(std::string token_text, double lp)
    : text(std::move(token_text)), logprob(clamp_logprob(lp)) {}

void validate(const Question& question) {
  if (question.id.empty()) {
    throw DataError("question id is empty");
  }
  if (question.statement.empty()) {
    throw DataError("question '" + question.id + "' has an empty statement");
  }
  if (question.gold_answer.empty()) {
    throw DataError("question '" + question.id + "' has an empty gold answer");
  }
}

std::size_t SampledSolution::token_count() const {
  std::size_t n = 0;
  for (const auto& step : steps) {
    n += step.tokens.size();
  }
  return n;
}

std::vector<double> SampledSolution::logprobs() const {
  std::vector<double> out;
  out.reserve(token_count());
  for (const auto& step : steps) {
    for (const auto& tok : step.tokens) {
      out.push_back(tok.logprob);
    }
  }
  return out;
}

std::string SampledSolution::text() const {
  std::string out;
  for (const auto& step : steps) {
    for (const auto& tok : step.tokens) {
      out += tok.text;
    }
  }
  return out;
}

std::string_view to_string(AnnotationMethod method) {
  switch (method) {
    case AnnotationMethod::uncertainty:
      return "uncertainty";
    case AnnotationMethod::binary_search:
      return "binary_search";
    case AnnotationMethod::random:
      return "random";
    case AnnotationMethod::all_true:
      return "all_true";
  }
  return "unknown";
}

AnnotationMethod annotation_method_from_string(std::string_view name) {
  if (name == "uncertainty") return AnnotationMethod::uncertainty;
  if (name == "binary_search" || name == "binary") return AnnotationMethod::binary_search;
  if (name == "random") return AnnotationMethod::random;
  if (name == "all_true") return AnnotationMethod::all_true;
  throw DataError("unknown annotation method '" + std::string(name) + "'");
}

LabeledSolution::LabeledSolution(SampledSolution solution, std::vector<bool> labels,
                                 AnnotationMethod method, std::optional<int> probes)
    : solution_(std::move(solution)), labels_(std::move(labels)), method_(method), probes_(probes) {
  if (labels_.size() != solution_.steps.size()) {
    throw DataError("label count " + std::to_string(labels_.size()) + " does not match step count " +
                    std::to_string(solution_.steps.size()));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!labels_[i]) {
      if (!error_index_) {
        error_index_ = static_cast<int>(i) + 1;
      }
    } else if (error_index_) {
      throw DataError("labels are not monotone: step " + std::to_string(i + 1) +
                      " is True after a False step");
    }
  }
  if (probes_ && *probes_ < 0) {
    throw DataError("negative probe count");
  }
}

LabeledSolution LabeledSolution::from_error_index(SampledSolution solution,
                                                  std::optional<int> error_index,
                                                  AnnotationMethod method, std::optional<int> probes) {
  const auto steps = static_cast<int>(solution.steps.size());
  if (error_index && (*error_index < 1 || *error_index > steps)) {
    throw DataError("error index " + std::to_string(*error_index) + " outside 1.." +
                    std::to_string(steps));
  }
  std::vector<bool> labels(solution.steps.size(), true);
  if (error_index) {
    for (int t = *error_index; t <= steps; ++t) {
      labels[static_cast<std::size_t>(t - 1)] = false;
    }
  }
  return LabeledSolution(std::move(solution), std::move(labels), method, probes);
}

}  // namespace unprm
