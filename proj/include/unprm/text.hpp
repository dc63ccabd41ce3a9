#pragma once

#include "unprm/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unprm {

/// Splits a completion into steps. Blank lines (two or more newlines with only
/// whitespace between them) separate steps; when the text has none, lines that
/// start with a numbered-step prefix ("Step 3:", "3.", "3)") start new steps.
/// Each token is assigned to the step holding its first character; separator
/// characters belong to the preceding step. Step text excludes the separator.
///
/// Throws DataError("empty solution") for empty text and
/// DataError("token alignment failure") when the tokens do not concatenate to
/// the text.
std::vector<Step> split_into_steps(std::string_view solution_text,
                                   std::span<const TokenRecord> token_stream);

/// Inverse of split_into_steps: concatenates every token of every step.
std::string join_steps(std::span<const Step> steps);

/// Whitespace-preserving word tokenizer, " word" style. Concatenating the
/// pieces gives back the input.
std::vector<std::string> tokenize_words(std::string_view text);

/// Raw content of the last \boxed{...} or answer marker, if any.
std::optional<std::string> extract_marked_answer(std::string_view text);

/// Canonical answer form. Deterministic and idempotent.
std::string normalize_answer(std::string_view raw);

/// Canonical final answer of a completion, or nullopt when the completion has
/// no boxed or marked answer.
std::optional<std::string> extract_final_answer(std::string_view completion);

struct Rational {
  __int128 num = 0;
  __int128 den = 1;  // > 0, gcd(num, den) == 1
};

/// Exact rational value of an integer, decimal ("1,000.25") or fraction
/// ("3/4", "\frac{3}{4}") string; nullopt otherwise or on overflow.
std::optional<Rational> parse_rational(std::string_view text);

/// Verifies a candidate answer against the gold answer: equal canonical forms,
/// or equal exact rationals when both sides are numeric.
bool answers_match(std::string_view candidate, std::string_view gold);

}  // namespace unprm
