#pragma once

#include "unprm/types.hpp"

#include <string>
#include <vector>

namespace unprm::testing {

/// Solution whose step t carries one token per entry of logprobs[t].
inline SampledSolution solution_with_logprobs(const std::vector<std::vector<double>>& logprobs,
                                              std::string question_id = "q1",
                                              std::string answer = "1") {
  SampledSolution s;
  s.question_id = std::move(question_id);
  s.generator_tag = "fixture";
  int index = 1;
  for (const auto& step : logprobs) {
    Step st;
    st.index = index;
    st.text = "s" + std::to_string(index);
    int k = 0;
    for (double lp : step) st.tokens.emplace_back(k++ == 0 ? st.text : std::string(), lp);
    s.steps.push_back(std::move(st));
    ++index;
  }
  s.final_answer = std::move(answer);
  return s;
}

/// Solution with given step texts, one token per step.
inline SampledSolution solution_with_steps(const std::vector<std::string>& texts, std::string question_id = "q1",
                                           std::optional<std::string> answer = "1") {
  SampledSolution s;
  s.question_id = std::move(question_id);
  s.generator_tag = "fixture";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Step st;
    st.index = static_cast<int>(i + 1);
    st.text = texts[i];
    st.tokens.emplace_back(texts[i], -0.5);
    s.steps.push_back(std::move(st));
  }
  s.final_answer = std::move(answer);
  return s;
}

}  // namespace unprm::testing
