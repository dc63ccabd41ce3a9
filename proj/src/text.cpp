#include "unprm/text.hpp"

#include "unprm/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>

namespace unprm {
namespace {

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

bool has_content(std::string_view text, std::size_t from, std::size_t to) {
  for (std::size_t i = from; i < to; ++i) {
    if (!is_blank(text[i])) return true;
  }
  return false;
}

struct Boundary {
  std::size_t text_end;    // end of step text, start of separator
  std::size_t next_start;  // start of the following step
};

// Blank-line separators: a newline followed by whitespace holding at least one
// more newline. The separator ends after the last newline of the run.
std::vector<Boundary> blank_line_boundaries(std::string_view text) {
  std::vector<Boundary> out;
  std::size_t step_start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '\n') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    std::size_t last_newline = i;
    int newlines = 1;
    while (j < text.size() && is_blank(text[j])) {
      if (text[j] == '\n') {
        ++newlines;
        last_newline = j;
      }
      ++j;
    }
    if (newlines >= 2 && has_content(text, step_start, i) && has_content(text, j, text.size())) {
      out.push_back({i, last_newline + 1});
      step_start = last_newline + 1;
    }
    i = j;
  }
  return out;
}

bool starts_numbered_step(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  auto rest = line.substr(i);
  auto digits_at = [&](std::size_t p) {
    std::size_t q = p;
    while (q < rest.size() && std::isdigit(static_cast<unsigned char>(rest[q]))) ++q;
    return q;
  };
  if (rest.size() >= 4) {
    std::string head(rest.substr(0, 4));
    std::transform(head.begin(), head.end(), head.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (head == "step") {
      std::size_t p = 4;
      while (p < rest.size() && rest[p] == ' ') ++p;
      return digits_at(p) > p;
    }
  }
  std::size_t q = digits_at(0);
  return q > 0 && q < rest.size() && (rest[q] == '.' || rest[q] == ')');
}

// Fallback rule: each line with a numbered-step prefix starts a new step; the
// newline before it is the separator.
std::vector<Boundary> numbered_line_boundaries(std::string_view text) {
  std::vector<Boundary> out;
  std::size_t step_start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\n') continue;
    auto line_end = text.find('\n', i + 1);
    auto line = text.substr(i + 1, line_end == std::string_view::npos ? std::string_view::npos
                                                                      : line_end - i - 1);
    if (starts_numbered_step(line) && has_content(text, step_start, i)) {
      out.push_back({i, i + 1});
      step_start = i + 1;
    }
  }
  return out;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_blank(s[b])) ++b;
  while (e > b && is_blank(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Content of the braces starting at `open` (which must be '{'); nullopt when unbalanced.
std::optional<std::pair<std::string, std::size_t>> braced(std::string_view s, std::size_t open) {
  if (open >= s.size() || s[open] != '{') return std::nullopt;
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) {
        return std::make_pair(std::string(s.substr(open + 1, i - open - 1)), i + 1);
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> last_boxed(std::string_view s) {
  std::optional<std::string> found;
  for (std::string_view cmd : {std::string_view("\\boxed"), std::string_view("\\fbox")}) {
    std::size_t pos = s.rfind(cmd);
    while (pos != std::string_view::npos) {
      std::size_t open = pos + cmd.size();
      while (open < s.size() && s[open] == ' ') ++open;
      if (auto content = braced(s, open)) {
        found = content->first;
        return found;
      }
      if (pos == 0) break;
      pos = s.rfind(cmd, pos - 1);
    }
  }
  return found;
}

std::optional<std::string> after_answer_marker(std::string_view s) {
  static constexpr std::array<std::string_view, 4> kMarkers = {"final answer is", "the answer is",
                                                               "final answer:", "answer:"};
  const std::string lower = ascii_lower(s);
  std::size_t best_end = std::string::npos;
  std::size_t best_pos = 0;
  for (auto marker : kMarkers) {
    auto pos = lower.rfind(marker);
    if (pos == std::string::npos) continue;
    if (best_end == std::string::npos || pos + marker.size() > best_end ||
        (pos + marker.size() == best_end && pos < best_pos)) {
      best_end = pos + marker.size();
      best_pos = pos;
    }
  }
  if (best_end == std::string::npos) return std::nullopt;
  auto rest = s.substr(best_end);
  auto nl = rest.find('\n');
  return std::string(rest.substr(0, nl));
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// \text{X} -> X for the listed wrappers, when the braces balance.
void unwrap_commands(std::string& s) {
  static constexpr std::array<std::string_view, 5> kWrappers = {"\\text", "\\textbf", "\\mathrm",
                                                                "\\mathbf", "\\mbox"};
  for (auto cmd : kWrappers) {
    std::size_t pos = 0;
    while ((pos = s.find(cmd, pos)) != std::string::npos) {
      std::size_t open = pos + cmd.size();
      if (open < s.size() && s[open] == '{') {
        if (auto content = braced(s, open)) {
          s.replace(pos, content->second - pos, content->first);
          continue;
        }
      }
      pos = open;
    }
  }
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_space = false;
  for (char c : s) {
    if (is_blank(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

std::string strip_delimiters(std::string s) {
  for (bool changed = true; changed;) {
    changed = false;
    s = trim(s);
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = s.substr(1, s.size() - 2);
      changed = true;
    } else if (s.size() >= 4 && ((s.starts_with("\\(") && s.ends_with("\\)")) ||
                                 (s.starts_with("\\[") && s.ends_with("\\]")))) {
      s = s.substr(2, s.size() - 4);
      changed = true;
    }
    while (!s.empty() && (s.back() == '.' || is_blank(s.back()))) {
      s.pop_back();
      changed = true;
    }
  }
  return s;
}

// "x = 3" -> "3": keep the right-hand side of the last plain '='.
std::string trailing_equation(std::string s) {
  for (std::size_t i = s.size(); i-- > 0;) {
    if (s[i] != '=') continue;
    const bool compound = (i > 0 && (s[i - 1] == '<' || s[i - 1] == '>' || s[i - 1] == '!' ||
                                     s[i - 1] == '=')) ||
                          (i + 1 < s.size() && s[i + 1] == '=');
    if (compound) return s;
    auto rhs = trim(std::string_view(s).substr(i + 1));
    if (rhs.empty()) return s;
    return rhs;
  }
  return s;
}

// Lowercases runs of two or more letters that are not LaTeX command names.
std::string lowercase_words(std::string s) {
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isalpha(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
    const bool command = i > 0 && s[i - 1] == '\\';
    if (!command && j - i >= 2) {
      for (std::size_t k = i; k < j; ++k) {
        s[k] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[k])));
      }
    }
    i = j;
  }
  return s;
}

__int128 gcd128(__int128 a, __int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    auto t = a % b;
    a = b;
    b = t;
  }
  return a;
}

constexpr __int128 kRationalLimit = static_cast<__int128>(1) << 100;

std::optional<__int128> parse_integer_digits(std::string_view digits) {
  if (digits.empty()) return std::nullopt;
  __int128 v = 0;
  for (char c : digits) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
    if (v > kRationalLimit) return std::nullopt;
  }
  return v;
}

// Accepts [+-]digits with optional thousands groups and decimal part.
std::optional<Rational> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  auto dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  std::string int_digits;
  if (int_part.find(',') != std::string_view::npos) {
    // Thousands separators must group exactly three digits.
    std::size_t first = int_part.find(',');
    if (first == 0 || first > 3) return std::nullopt;
    for (std::size_t p = first; p < int_part.size(); p += 4) {
      if (int_part[p] != ',' || p + 4 > int_part.size()) return std::nullopt;
    }
    for (char c : int_part) {
      if (c != ',') int_digits.push_back(c);
    }
  } else {
    int_digits = std::string(int_part);
  }
  if (int_digits.empty()) int_digits = "0";
  if (dot != std::string_view::npos && frac_part.empty() && int_part.empty()) return std::nullopt;
  auto whole = parse_integer_digits(int_digits);
  if (!whole) return std::nullopt;
  __int128 num = *whole;
  __int128 den = 1;
  for (char c : frac_part) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    num = num * 10 + (c - '0');
    den *= 10;
    if (num > kRationalLimit || den > kRationalLimit) return std::nullopt;
  }
  if (negative) num = -num;
  auto g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational{num, den};
}

std::optional<Rational> divide(const Rational& a, const Rational& b) {
  if (b.num == 0) return std::nullopt;
  // Operands are bounded by 2^100; reduce before multiplying to avoid overflow.
  auto g1 = gcd128(a.num, b.num);
  auto g2 = gcd128(a.den, b.den);
  if (g1 == 0) g1 = 1;
  __int128 an = a.num / g1;
  __int128 bn = b.num / g1;
  __int128 ad = a.den / g2;
  __int128 bd = b.den / g2;
  auto bound = [](__int128 v) { return v < 0 ? -v : v; };
  if (bound(an) > (static_cast<__int128>(1) << 60) || bound(bd) > (static_cast<__int128>(1) << 60) ||
      bound(ad) > (static_cast<__int128>(1) << 60) || bound(bn) > (static_cast<__int128>(1) << 60)) {
    return std::nullopt;
  }
  __int128 num = an * bd;
  __int128 den = ad * bn;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  auto g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational{num, den};
}

std::string int128_to_string(__int128 v) {
  if (v == 0) return "0";
  bool negative = v < 0;
  if (negative) v = -v;
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  if (negative) out.push_back('-');
  std::reverse(out.begin(), out.end());
  return out;
}

// Exact decimal when the denominator is 2^a 5^b, otherwise "p/q".
std::string format_rational(const Rational& r) {
  if (r.den == 1) return int128_to_string(r.num);
  __int128 d = r.den;
  int twos = 0;
  int fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d != 1) return int128_to_string(r.num) + "/" + int128_to_string(r.den);
  const int places = std::max(twos, fives);
  __int128 scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  if (scale > kRationalLimit * 1024) return int128_to_string(r.num) + "/" + int128_to_string(r.den);
  __int128 scaled = r.num * (scale / r.den);
  bool negative = scaled < 0;
  if (negative) scaled = -scaled;
  std::string digits = int128_to_string(scaled);
  if (static_cast<int>(digits.size()) <= places) {
    digits.insert(0, static_cast<std::size_t>(places + 1) - digits.size(), '0');
  }
  digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  while (digits.back() == '0') digits.pop_back();
  if (digits.back() == '.') digits.pop_back();
  return (negative ? "-" : "") + digits;
}

std::string canonicalize_once(std::string_view raw) {
  std::string s = trim(raw);
  if (auto boxed = last_boxed(s)) {
    s = *boxed;
  } else if (auto marked = after_answer_marker(s)) {
    s = *marked;
  }
  s = strip_delimiters(s);
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  replace_all(s, "\\!", "");
  replace_all(s, "\\,", "");
  replace_all(s, "\\;", "");
  replace_all(s, "^{\\circ}", "");
  replace_all(s, "^\\circ", "");
  replace_all(s, "\\%", "%");
  unwrap_commands(s);
  s = collapse_spaces(s);
  s = strip_delimiters(s);
  s = trailing_equation(s);
  s = lowercase_words(s);
  if (auto value = parse_rational(s)) {
    s = format_rational(*value);
  }
  return s;
}

}  // namespace

std::vector<Step> split_into_steps(std::string_view solution_text,
                                   std::span<const TokenRecord> token_stream) {
  if (solution_text.empty()) {
    throw DataError("empty solution");
  }
  std::size_t offset = 0;
  for (const auto& tok : token_stream) {
    if (offset + tok.text.size() > solution_text.size() ||
        solution_text.compare(offset, tok.text.size(), tok.text) != 0) {
      throw DataError("token alignment failure");
    }
    offset += tok.text.size();
  }
  if (offset != solution_text.size()) {
    throw DataError("token alignment failure");
  }

  auto boundaries = blank_line_boundaries(solution_text);
  if (boundaries.empty()) {
    boundaries = numbered_line_boundaries(solution_text);
  }

  std::vector<Step> steps(boundaries.size() + 1);
  std::vector<std::size_t> starts{0};
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    starts.push_back(boundaries[k].next_start);
  }
  for (std::size_t k = 0; k < steps.size(); ++k) {
    steps[k].index = static_cast<int>(k) + 1;
    std::size_t begin = starts[k];
    std::size_t end = k < boundaries.size() ? boundaries[k].text_end : solution_text.size();
    if (k + 1 == steps.size()) {
      // A trailing blank run is the last step's separator.
      while (end > begin && is_blank(solution_text[end - 1])) --end;
      if (end == begin) end = solution_text.size();
    }
    steps[k].text = std::string(solution_text.substr(begin, end - begin));
  }

  offset = 0;
  std::size_t current = 0;
  for (const auto& tok : token_stream) {
    while (current + 1 < steps.size() && offset >= starts[current + 1]) ++current;
    steps[current].tokens.push_back(tok);
    offset += tok.text.size();
  }
  return steps;
}

std::string join_steps(std::span<const Step> steps) {
  std::string out;
  for (const auto& step : steps) {
    for (const auto& tok : step.tokens) out += tok.text;
  }
  return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  auto word_follows = [&](std::size_t p) {
    return text[p] == ' ' && p + 1 < text.size() && !is_blank(text[p + 1]);
  };
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    if (word_follows(i)) {
      ++j;
      while (j < text.size() && !is_blank(text[j])) ++j;
    } else if (is_blank(text[i])) {
      while (j < text.size() && is_blank(text[j]) && !word_follows(j)) ++j;
    } else {
      while (j < text.size() && !is_blank(text[j])) ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::optional<std::string> extract_marked_answer(std::string_view text) {
  if (auto boxed = last_boxed(text)) return boxed;
  return after_answer_marker(text);
}

std::string normalize_answer(std::string_view raw) {
  std::string current(raw);
  for (int i = 0; i < 16; ++i) {
    std::string next = canonicalize_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::optional<std::string> extract_final_answer(std::string_view completion) {
  auto marked = extract_marked_answer(completion);
  if (!marked) return std::nullopt;
  auto canonical = normalize_answer(*marked);
  if (canonical.empty()) return std::nullopt;
  return canonical;
}

std::optional<Rational> parse_rational(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  bool negative = false;
  std::string_view body = s;
  if (body.starts_with("-\\frac")) {
    negative = true;
    body.remove_prefix(1);
  }
  if (body.starts_with("\\frac")) {
    auto num = braced(body, 5);
    if (!num) return std::nullopt;
    auto den = braced(body, num->second);
    if (!den || den->second != body.size()) return std::nullopt;
    auto a = parse_decimal(trim(num->first));
    auto b = parse_decimal(trim(den->first));
    if (!a || !b) return std::nullopt;
    auto r = divide(*a, *b);
    if (r && negative) r->num = -r->num;
    return r;
  }
  auto slash = s.find('/');
  if (slash != std::string::npos) {
    auto a = parse_decimal(trim(std::string_view(s).substr(0, slash)));
    auto b = parse_decimal(trim(std::string_view(s).substr(slash + 1)));
    if (!a || !b) return std::nullopt;
    return divide(*a, *b);
  }
  return parse_decimal(s);
}

bool answers_match(std::string_view candidate, std::string_view gold) {
  const auto a = normalize_answer(candidate);
  const auto b = normalize_answer(gold);
  if (a == b) return true;
  auto ra = parse_rational(a);
  auto rb = parse_rational(b);
  return ra && rb && ra->num == rb->num && ra->den == rb->den;
}

}  // namespace unprm
