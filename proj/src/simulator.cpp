#include "unprm/simulator.hpp"

#include "unprm/error.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/rng.hpp"
#include "unprm/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace unprm {
namespace {

constexpr const char* kFiller[] = {
    "we",     "now",   "take",    "the",    "next",  "term",   "and",      "add",
    "it",     "to",    "carry",   "over",   "then",  "check",  "each",     "part",
    "value",  "using", "previous", "result", "first", "apply",  "rule",     "simplify",
    "again",  "this",  "gives",   "us",     "count", "both",   "sides",    "after",
};
constexpr std::size_t kFillerSize = sizeof(kFiller) / sizeof(kFiller[0]);

constexpr std::string_view kTotalMarker = "running total is ";

std::optional<long long> parse_total(std::string_view text) {
  auto pos = text.rfind(kTotalMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  const char* first = text.data() + pos + kTotalMarker.size();
  const char* last = text.data() + text.size();
  long long v = 0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr == first) return std::nullopt;
  return v;
}

double gold_mass(const SimulatedWorld& world, const std::string& gold) {
  double p = 0.0;
  for (const auto& [answer, prob] : world.answers) {
    if (answers_match(answer, gold)) p += prob;
  }
  return p;
}

double clean_recovery_at(const SimulatedWorld& world, double gold_p, std::size_t depth) {
  if (depth >= 1 && depth <= world.recovery_by_depth.size()) {
    return world.recovery_by_depth[depth - 1];
  }
  return world.clean_recovery.value_or(gold_p + 0.8 * (1.0 - gold_p));
}

// Calm logprobs are stratified over [-calm_spread, 0] so the calm entropy
// depends on the token count and little else.
std::vector<double> step_logprobs(Rng& rng, const StepProfile& profile, double intensity, std::size_t n) {
  std::vector<std::size_t> strata(n);
  for (std::size_t i = 0; i < n; ++i) strata[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(strata[i - 1], strata[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double calm = profile.calm_spread * (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(n);
    const double jitter = profile.spike_jitter * std::abs(rng.normal());
    out[i] = -(intensity * (profile.spike_level + jitter) + (1.0 - intensity) * calm);
  }
  return out;
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw UsageError(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

void validate(const SimulatedWorld& world) {
  if (world.answers.empty()) {
    throw UsageError("simulated world has no answers");
  }
  double total = 0.0;
  for (const auto& [answer, p] : world.answers) {
    check_probability(p, "answer probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw UsageError("answer probabilities do not sum to 1");
  }
  check_probability(world.corrupted_recovery, "corrupted_recovery");
  check_probability(world.format_invalid_probability, "format_invalid_probability");
  for (double r : world.recovery_by_depth) {
    check_probability(r, "recovery probability");
    if (r < world.corrupted_recovery) {
      throw UsageError("clean recovery below corrupted recovery");
    }
  }
  if (world.clean_recovery) {
    check_probability(*world.clean_recovery, "clean_recovery");
    if (*world.clean_recovery < world.corrupted_recovery) {
      throw UsageError("clean recovery below corrupted recovery");
    }
  }
  if (world.planted_error_step && *world.planted_error_step < 1) {
    throw UsageError("planted_error_step must be >= 1");
  }
  if (world.first_error_step_min < 1) {
    throw UsageError("first_error_step_min must be >= 1");
  }
}

SimulatedWorld world_from_json(const nlohmann::json& j) {
  SimulatedWorld w;
  try {
    for (const auto& [answer, p] : j.at("answers").items()) w.answers[answer] = p.get<double>();
    if (j.contains("planted_error_step") && !j["planted_error_step"].is_null()) {
      w.planted_error_step = j["planted_error_step"].get<int>();
    }
    w.first_error_step_min = j.value("first_error_step_min", w.first_error_step_min);
    if (j.contains("recovery_by_depth")) {
      w.recovery_by_depth = j["recovery_by_depth"].get<std::vector<double>>();
    }
    if (j.contains("clean_recovery") && !j["clean_recovery"].is_null()) {
      w.clean_recovery = j["clean_recovery"].get<double>();
    }
    w.corrupted_recovery = j.value("corrupted_recovery", w.corrupted_recovery);
    w.format_invalid_probability = j.value("format_invalid_probability", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed simulated world: ") + e.what());
  }
  validate(w);
  return w;
}

nlohmann::json to_json(const SimulatedWorld& world) {
  nlohmann::json answers = nlohmann::json::object();
  for (const auto& [a, p] : world.answers) answers[a] = p;
  nlohmann::json j = {{"answers", answers},
                      {"first_error_step_min", world.first_error_step_min},
                      {"corrupted_recovery", world.corrupted_recovery},
                      {"format_invalid_probability", world.format_invalid_probability}};
  if (world.planted_error_step) j["planted_error_step"] = *world.planted_error_step;
  if (!world.recovery_by_depth.empty()) j["recovery_by_depth"] = world.recovery_by_depth;
  if (world.clean_recovery) j["clean_recovery"] = *world.clean_recovery;
  return j;
}

StepProfile profile_from_json(const nlohmann::json& j) {
  StepProfile p;
  try {
    p.min_steps = j.value("min_steps", p.min_steps);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.min_tokens = j.value("min_tokens", p.min_tokens);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.calm_spread = j.value("calm_spread", p.calm_spread);
    p.spike_level = j.value("spike_level", p.spike_level);
    p.spike_jitter = j.value("spike_jitter", p.spike_jitter);
    p.precursor_probability = j.value("precursor_probability", p.precursor_probability);
    p.precursor_min = j.value("precursor_min", p.precursor_min);
    p.precursor_max = j.value("precursor_max", p.precursor_max);
    p.spurious_probability = j.value("spurious_probability", p.spurious_probability);
    p.spurious_max = j.value("spurious_max", p.spurious_max);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed simulator profile: ") + e.what());
  }
  if (p.min_steps < 1 || p.max_steps < p.min_steps || p.min_tokens < 1 || p.max_tokens < p.min_tokens) {
    throw UsageError("simulator profile ranges are inconsistent");
  }
  return p;
}

SimulatedProvider::SimulatedProvider(std::uint64_t seed, StepProfile profile)
    : seed_(seed), profile_(profile) {}

void SimulatedProvider::add_question(const Question& question, SimulatedWorld world) {
  validate(question);
  validate(world);
  const auto chain_seed = mix_seed(seed_, fnv1a(question.id));
  entries_.insert_or_assign(question.id, Entry{question, std::move(world), chain_seed});
}

const SimulatedProvider::Entry& SimulatedProvider::entry(const std::string& question_id) const {
  auto it = entries_.find(question_id);
  if (it == entries_.end()) {
    throw DataError("unknown question id '" + question_id + "'");
  }
  return it->second;
}

const Question& SimulatedProvider::question(const std::string& question_id) const {
  return entry(question_id).question;
}

const SimulatedWorld& SimulatedProvider::world(const std::string& question_id) const {
  return entry(question_id).world;
}

long long SimulatedProvider::chain_value(const Entry& e, int step) const {
  const auto base = static_cast<long long>(e.chain_seed % 50) + 1;
  const auto stride = static_cast<long long>((e.chain_seed >> 16) % 7) + 2;
  return base + stride * step;
}

std::optional<int> SimulatedProvider::first_error(const std::string& question_id,
                                                  std::span<const std::string> step_texts) const {
  const auto& e = entry(question_id);
  for (std::size_t i = 0; i < step_texts.size(); ++i) {
    auto v = parse_total(step_texts[i]);
    if (v && *v != chain_value(e, static_cast<int>(i) + 1)) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

std::vector<bool> SimulatedProvider::ground_truth_labels(const std::string& question_id,
                                                         std::span<const Step> steps) const {
  std::vector<std::string> texts;
  for (const auto& s : steps) texts.push_back(s.text);
  auto err = first_error(question_id, texts);
  std::vector<bool> labels(steps.size(), true);
  if (err) {
    std::fill(labels.begin() + (*err - 1), labels.end(), false);
  }
  return labels;
}

LabelLookup SimulatedProvider::label_lookup() const {
  return [this](const Question& q, std::span<const Step> steps) -> std::optional<std::vector<bool>> {
    return ground_truth_labels(q.id, steps);
  };
}

RawCompletion SimulatedProvider::complete_one(const Entry& e, std::span<const std::string> prefix_steps,
                                              std::uint64_t seed) const {
  const auto& world = e.world;
  const auto& profile = profile_;
  Rng rng(seed);

  const int depth = static_cast<int>(prefix_steps.size());
  const bool corrupted = first_error(e.question.id, prefix_steps).has_value();
  const double gold_p = gold_mass(world, e.question.gold_answer);
  const double p_correct = corrupted ? world.corrupted_recovery
                           : depth == 0
                               ? gold_p
                               : clean_recovery_at(world, gold_p, static_cast<std::size_t>(depth));
  const bool correct = rng.bernoulli(p_correct);

  std::string answer = e.question.gold_answer;
  if (!correct) {
    double wrong_total = 0.0;
    for (const auto& [a, p] : world.answers) {
      if (!answers_match(a, e.question.gold_answer)) wrong_total += p;
    }
    const double u = rng.uniform() * wrong_total;
    answer = wrong_answer(e.question.gold_answer, 0);
    double acc = 0.0;
    for (const auto& [a, p] : world.answers) {
      if (answers_match(a, e.question.gold_answer)) continue;
      acc += p;
      answer = a;
      if (u < acc) break;
    }
  }

  const bool plant = !correct && !corrupted;
  int lo = std::max(depth + 1, profile.min_steps);
  if (plant && world.planted_error_step) lo = std::max(lo, *world.planted_error_step);
  const int hi = std::max(lo, profile.max_steps);
  const int total_steps = static_cast<int>(rng.uniform_int(lo, hi));

  int error_step = 0;
  if (plant) {
    if (world.planted_error_step) {
      error_step = std::clamp(*world.planted_error_step, depth + 1, total_steps);
    } else {
      const int elo = std::min(std::max(depth + 1, world.first_error_step_min), total_steps);
      error_step = static_cast<int>(rng.uniform_int(elo, total_steps));
    }
  }
  const long long offset = rng.uniform_int(1, 9) * (rng.bernoulli(0.5) ? 1 : -1);
  const bool precursor = rng.bernoulli(profile.precursor_probability);
  const bool format_invalid = rng.bernoulli(world.format_invalid_probability);

  RawCompletion out;
  for (int t = depth + 1; t <= total_steps; ++t) {
    const bool off_chain = corrupted ? !correct : (error_step > 0 && t >= error_step);
    const long long value = chain_value(e, t) + (off_chain ? offset : 0);

    double intensity = 0.0;
    if (t == error_step) {
      intensity = 1.0;
    } else if (precursor && t == error_step - 1) {
      intensity = rng.uniform(profile.precursor_min, profile.precursor_max);
    } else if (rng.bernoulli(profile.spurious_probability)) {
      intensity = rng.uniform(0.0, profile.spurious_max);
    }

    const bool answer_here = t == total_steps && !format_invalid;
    const int n_tokens = static_cast<int>(rng.uniform_int(profile.min_tokens, profile.max_tokens));
    std::string step = "Step " + std::to_string(t) + ":";
    for (int w = 0; w < std::max(1, n_tokens - (answer_here ? 12 : 8)); ++w) {
      step += ' ';
      step += kFiller[rng.uniform_int(0, kFillerSize - 1)];
    }
    step += " so the running total is " + std::to_string(value) + ".";
    if (answer_here) {
      step += " The answer is \\boxed{" + answer + "}.";
    }
    if (t < total_steps) step += "\n\n";

    auto pieces = tokenize_words(step);
    auto lps = step_logprobs(rng, profile, intensity, pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) out.tokens.emplace_back(std::move(pieces[i]), lps[i]);
    out.text += step;
  }
  return out;
}

std::vector<RawCompletion> SimulatedProvider::complete(const std::string& question_id,
                                                       std::span<const std::string> prefix_steps,
                                                       int n, std::optional<std::uint64_t> request_seed,
                                                       int first_index) const {
  const auto& e = entry(question_id);
  std::uint64_t prefix_hash = fnv1a("");
  for (const auto& s : prefix_steps) {
    prefix_hash = fnv1a("\x1f", prefix_hash);
    prefix_hash = fnv1a(s, prefix_hash);
  }
  const auto base = mix_seed(mix_seed(mix_seed(seed_, request_seed.value_or(0)), e.chain_seed), prefix_hash);
  std::vector<RawCompletion> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    out.push_back(complete_one(e, prefix_steps, mix_seed(base, static_cast<std::uint64_t>(first_index + j))));
  }
  return out;
}

std::vector<SampledSolution> SimulatedProvider::sample(const SamplingRequest& request, CostLedger& ledger) {
  validate(request);
  auto raw = complete(request.question_id, request.prefix_steps, request.n, request.seed);
  std::vector<SampledSolution> out;
  out.reserve(raw.size());
  std::uint64_t tokens = 0;
  for (auto& r : raw) {
    tokens += r.tokens.size();
    out.push_back(solution_from_completion(request.question_id, r.text, std::move(r.tokens), "sim"));
  }
  served_completions_.fetch_add(out.size());
  served_tokens_.fetch_add(tokens);
  ledger.add_completions(out.size(), tokens);
  return out;
}

std::string wrong_answer(const std::string& gold, int i) {
  auto r = parse_rational(normalize_answer(gold));
  if (r && r->den == 1 && r->num < (static_cast<__int128>(1) << 62) &&
      r->num > -(static_cast<__int128>(1) << 62)) {
    return std::to_string(static_cast<long long>(r->num) + i + 1);
  }
  return gold + std::string(static_cast<std::size_t>(i) + 1, '1');
}

SimulatedWorld simple_world(const Question& question, double gold_probability, int num_wrong) {
  check_probability(gold_probability, "gold_probability");
  if (num_wrong < 0 || (num_wrong == 0 && gold_probability < 1.0)) {
    throw UsageError("a world with gold probability below 1 needs wrong answers");
  }
  SimulatedWorld w;
  w.answers[question.gold_answer] = gold_probability;
  for (int i = 0; i < num_wrong; ++i) {
    w.answers[wrong_answer(question.gold_answer, i)] = (1.0 - gold_probability) / num_wrong;
  }
  return w;
}

std::unique_ptr<SimulatedProvider> make_simulator(const nlohmann::json& config,
                                                  std::span<const Question> questions,
                                                  std::uint64_t seed) {
  StepProfile profile;
  if (config.contains("profile")) profile = profile_from_json(config["profile"]);
  auto sim = std::make_unique<SimulatedProvider>(seed, profile);
  const auto worlds = config.value("worlds", nlohmann::json::object());
  for (const auto& q : questions) {
    if (worlds.contains(q.id)) {
      sim->add_question(q, world_from_json(worlds[q.id]));
      continue;
    }
    if (!config.contains("default_world")) {
      throw UsageError("no simulated world for question '" + q.id + "'");
    }
    const auto& d = config["default_world"];
    SimulatedWorld w;
    try {
      w = simple_world(q, d.value("gold_probability", 0.5), d.value("num_wrong", 3));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("malformed default_world: ") + e.what());
    }
    auto entry = d;
    entry["answers"] = to_json(w)["answers"];
    sim->add_question(q, world_from_json(entry));
  }
  return sim;
}

std::string request_fingerprint(const SamplingRequest& request) {
  nlohmann::json j = {request.question_id, request.prefix_steps, request.n,
                      request.seed ? nlohmann::json(*request.seed) : nlohmann::json(nullptr),
                      request.temperature, request.max_tokens, request.prompt};
  return j.dump();
}

std::vector<SampledSolution> RecordingProvider::sample(const SamplingRequest& request, CostLedger& ledger) {
  auto out = inner_.sample(request, ledger);
  std::lock_guard<std::mutex> lock(mutex_);
  batches_[request_fingerprint(request)] = out;
  return out;
}

nlohmann::json RecordingProvider::recording() const {
  std::lock_guard<std::mutex> lock(mutex_);
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, batch] : batches_) j[key] = to_json_records(batch);
  return j;
}

ReplayProvider::ReplayProvider(const nlohmann::json& recording) {
  for (const auto& [key, batch] : recording.items()) {
    auto& dst = batches_[key];
    for (const auto& s : batch) dst.push_back(solution_from_json(s));
  }
}

std::vector<SampledSolution> ReplayProvider::sample(const SamplingRequest& request, CostLedger& ledger) {
  auto it = batches_.find(request_fingerprint(request));
  if (it == batches_.end()) {
    throw ProviderError("request not present in the replay recording");
  }
  std::uint64_t tokens = 0;
  for (const auto& s : it->second) tokens += s.token_count();
  ledger.add_completions(it->second.size(), tokens);
  return it->second;
}

}  // namespace unprm
