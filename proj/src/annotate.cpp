#include "unprm/annotate.hpp"

#include "unprm/error.hpp"
#include "unprm/log.hpp"
#include "unprm/rng.hpp"
#include "unprm/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

namespace unprm {
namespace {

bool reaches_gold(const SampledSolution& s, const Question& question) {
  return s.final_answer && answers_match(*s.final_answer, question.gold_answer);
}

void require_correctness(const SampledSolution& solution) {
  if (!solution.is_correct) {
    throw DataError("solution of question '" + solution.question_id + "' has no correctness flag");
  }
  if (solution.steps.empty()) {
    throw DataError("solution of question '" + solution.question_id + "' has no steps");
  }
}

class Prober {
public:
  Prober(const SampledSolution& solution, const Question& question, const AnnotationConfig& config,
         CompletionProvider& provider, CostLedger& ledger, double tau)
      : solution_(solution), question_(question), config_(config), provider_(provider),
        ledger_(ledger), tau_(tau) {}

  /// True when the rollout after committing to steps 1..i falls below tau.
  bool fails_at(int i) {
    auto prefix = std::span<const Step>(solution_.steps).first(static_cast<std::size_t>(i));
    auto batch = adaptive_rollout(question_, prefix, config_, provider_, ledger_);
    if (batch.failed) {
      throw ProviderError(batch.error_message);
    }
    ledger_.add_verified_steps();
    ++probes_;
    return mc_ppl(batch) < tau_;
  }

  int probes() const { return probes_; }

private:
  const SampledSolution& solution_;
  const Question& question_;
  const AnnotationConfig& config_;
  CompletionProvider& provider_;
  CostLedger& ledger_;
  double tau_;
  int probes_ = 0;
};

std::optional<LabeledSolution> fall_back(const SampledSolution& solution, const AnnotationConfig& config,
                                         AnnotationMethod method, int probes) {
  if (config.fallback == FallbackPolicy::discard) {
    log_info("no step of a solution to question '" + solution.question_id +
             "' fell below tau; solution discarded");
    return std::nullopt;
  }
  auto order = delta_probe_order(step_uncertainties(solution, config.uncertainty));
  return LabeledSolution::from_error_index(solution, order.front(), method, probes);
}

std::uint64_t prefix_seed(const AnnotationConfig& config, const Question& question,
                          std::span<const Step> prefix) {
  return mix_seed(mix_seed(config.seed, fnv1a(question.id)), solution_key(question.id, prefix));
}

}  // namespace

void validate(const AnnotationConfig& config) {
  if (!(1 <= config.n_min && config.n_min <= config.n0 && config.n0 <= config.n_max)) {
    throw UsageError("annotation config needs 1 <= n_min <= n0 <= n_max");
  }
  if (!(config.growth_factor > 1.0)) {
    throw UsageError("growth_factor must be > 1");
  }
  if (config.workers < 1) {
    throw UsageError("workers must be >= 1");
  }
  if (config.tau_mode == TauMode::fixed && !(config.fixed_tau >= 0.0 && config.fixed_tau <= 1.0)) {
    throw UsageError("fixed tau must lie in [0, 1]");
  }
}

AnnotationConfig annotation_config_from_json(const nlohmann::json& j) {
  AnnotationConfig c;
  try {
    c.n0 = j.value("n0", c.n0);
    c.n_min = j.value("n_min", c.n_min);
    c.n_max = j.value("n_max", c.n_max);
    c.growth_factor = j.value("growth_factor", c.growth_factor);
    auto tau = j.value("tau_mode", std::string("per_question"));
    if (tau == "per_question" || tau == "per-question") {
      c.tau_mode = TauMode::per_question;
    } else if (tau == "fixed") {
      c.tau_mode = TauMode::fixed;
    } else {
      throw UsageError("unknown tau_mode '" + tau + "'");
    }
    c.fixed_tau = j.value("tau", c.fixed_tau);
    auto fallback = j.value("fallback_policy", std::string("discard"));
    if (fallback == "discard") {
      c.fallback = FallbackPolicy::discard;
    } else if (fallback == "highest_delta") {
      c.fallback = FallbackPolicy::highest_delta;
    } else {
      throw UsageError("unknown fallback_policy '" + fallback + "'");
    }
    c.uncertainty.prefix_mode = j.value("prefix_entropy", false);
    c.uncertainty.normalized = j.value("normalized_entropy", false);
    c.sampling.temperature = j.value("temperature", c.sampling.temperature);
    c.sampling.max_tokens = j.value("max_tokens", c.sampling.max_tokens);
    c.sampling.prompt_template = j.value("prompt_template", c.sampling.prompt_template);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed annotation config: ") + e.what());
  }
  validate(c);
  return c;
}

double mc_ppl(std::span<const double> log_ppl, const std::vector<bool>& correct) {
  if (log_ppl.empty()) {
    throw DataError("mc_ppl of an empty batch");
  }
  if (log_ppl.size() != correct.size()) {
    throw DataError("mc_ppl inputs differ in length");
  }
  double num = 0.0;
  double den = 0.0;
  bool any_correct = false;
  for (std::size_t k = 0; k < log_ppl.size(); ++k) {
    den += log_ppl[k];
    if (correct[k]) {
      num += log_ppl[k];
      any_correct = true;
    }
  }
  if (den == 0.0) {
    log_warning("mc_ppl denominator is zero (all trajectories have perplexity 1)");
    return any_correct ? 1.0 : 0.0;
  }
  return num / den;
}

double mc_ppl(const RolloutBatch& batch) {
  std::vector<double> lp;
  lp.reserve(batch.trajectories.size());
  for (const auto& t : batch.trajectories) {
    if (t.token_count() == 0) {
      throw DataError("rollout trajectory without tokens");
    }
    lp.push_back(log_perplexity(t.logprobs()));
  }
  return mc_ppl(lp, batch.correct);
}

std::vector<int> rollout_schedule(const AnnotationConfig& config) {
  validate(config);
  std::vector<int> totals;
  double target = config.n0;
  int last = 0;
  while (last < config.n_max) {
    int next = std::min(config.n_max, std::max(last + 1, static_cast<int>(std::llround(target))));
    totals.push_back(next);
    last = next;
    target *= config.growth_factor;
  }
  return totals;
}

RolloutBatch adaptive_rollout(const Question& question, std::span<const Step> prefix,
                              const AnnotationConfig& config, CompletionProvider& provider,
                              CostLedger& ledger) {
  RolloutBatch batch;
  batch.prefix_step_index = static_cast<int>(prefix.size());
  const auto base = prefix_seed(config, question, prefix);
  for (int total : rollout_schedule(config)) {
    const int need = total - batch.n_sampled;
    auto request = make_request(question, prefix, need, config.sampling,
                                mix_seed(base, static_cast<std::uint64_t>(batch.rounds)));
    std::vector<SampledSolution> got;
    try {
      got = provider.sample(request, ledger);
    } catch (const ProviderError& e) {
      batch.failed = true;
      batch.error_message = e.what();
      break;
    }
    ++batch.rounds;
    batch.n_sampled += static_cast<int>(got.size());
    for (auto& s : got) {
      if (s.token_count() == 0) continue;
      const bool ok = reaches_gold(s, question);
      batch.n_correct += ok ? 1 : 0;
      batch.correct.push_back(ok);
      batch.trajectories.push_back(std::move(s));
    }
    if (batch.n_correct >= config.n_min) break;
  }
  return batch;
}

std::shared_ptr<TauCache::Slot> TauCache::slot(const std::string& question_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& entry = slots_[question_id];
  if (!entry) entry = std::make_shared<Slot>();
  return entry;
}

std::optional<double> TauCache::find(const std::string& question_id) const {
  auto s = slot(question_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  return s->value;
}

void TauCache::store(const std::string& question_id, double tau) {
  auto s = slot(question_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  if (!s->value) s->value = tau;
}

double TauCache::get_or_compute(const std::string& question_id, const std::function<double()>& compute) {
  auto s = slot(question_id);
  std::lock_guard<std::mutex> lock(s->mutex);
  if (!s->value) s->value = compute();
  return *s->value;
}

double compute_tau(const Question& question, const AnnotationConfig& config,
                   CompletionProvider& provider, CostLedger& ledger, TauCache& cache) {
  if (config.tau_mode == TauMode::fixed) return config.fixed_tau;
  return cache.get_or_compute(question.id, [&] {
    auto batch = adaptive_rollout(question, {}, config, provider, ledger);
    if (batch.failed) {
      throw ProviderError(batch.error_message);
    }
    if (batch.trajectories.empty()) {
      throw DataError("no usable rollouts for question '" + question.id + "'");
    }
    return mc_ppl(batch);
  });
}

std::optional<LabeledSolution> annotate_uncertainty(const SampledSolution& solution,
                                                    const Question& question,
                                                    const AnnotationConfig& config,
                                                    CompletionProvider& provider, CostLedger& ledger,
                                                    TauCache& cache) {
  require_correctness(solution);
  if (*solution.is_correct) {
    return LabeledSolution::from_error_index(solution, std::nullopt, AnnotationMethod::uncertainty, 0);
  }
  const auto order = delta_probe_order(step_uncertainties(solution, config.uncertainty));
  const double tau = compute_tau(question, config, provider, ledger, cache);
  Prober prober(solution, question, config, provider, ledger, tau);
  for (int i : order) {
    if (prober.fails_at(i)) {
      return LabeledSolution::from_error_index(solution, i, AnnotationMethod::uncertainty,
                                               prober.probes());
    }
  }
  return fall_back(solution, config, AnnotationMethod::uncertainty, prober.probes());
}

std::optional<LabeledSolution> annotate_binary_search(const SampledSolution& solution,
                                                      const Question& question,
                                                      const AnnotationConfig& config,
                                                      CompletionProvider& provider,
                                                      CostLedger& ledger, TauCache& cache) {
  require_correctness(solution);
  if (*solution.is_correct) {
    return LabeledSolution::from_error_index(solution, std::nullopt, AnnotationMethod::binary_search, 0);
  }
  const double tau = compute_tau(question, config, provider, ledger, cache);
  Prober prober(solution, question, config, provider, ledger, tau);
  int lo = 1;
  int hi = static_cast<int>(solution.steps.size());
  std::map<int, bool> seen;
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    const bool bad = prober.fails_at(mid);
    seen[mid] = bad;
    if (bad) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  auto it = seen.find(lo);
  const bool bad = it != seen.end() ? it->second : prober.fails_at(lo);
  if (bad) {
    return LabeledSolution::from_error_index(solution, lo, AnnotationMethod::binary_search,
                                             prober.probes());
  }
  return fall_back(solution, config, AnnotationMethod::binary_search, prober.probes());
}

LabeledSolution annotate_random(const SampledSolution& solution, std::uint64_t seed) {
  require_correctness(solution);
  if (*solution.is_correct) {
    return LabeledSolution::from_error_index(solution, std::nullopt, AnnotationMethod::random);
  }
  Rng rng(mix_seed(seed, solution_key(solution.question_id, solution.steps)));
  const auto t = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(solution.steps.size())));
  return LabeledSolution::from_error_index(solution, t, AnnotationMethod::random);
}

AnnotatorKind annotator_from_string(std::string_view name) {
  if (name == "uncertainty") return AnnotatorKind::uncertainty;
  if (name == "binary" || name == "binary_search") return AnnotatorKind::binary_search;
  if (name == "random") return AnnotatorKind::random;
  throw UsageError("unknown annotation method '" + std::string(name) + "'");
}

std::vector<LabeledSolution> annotate_all(std::span<const SampledSolution> candidates,
                                          std::span<const Question> questions, AnnotatorKind kind,
                                          const AnnotationConfig& config, CompletionProvider& provider,
                                          CostLedger& ledger) {
  validate(config);
  std::map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;

  std::vector<const Question*> owners(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto it = by_id.find(candidates[i].question_id);
    if (it == by_id.end()) {
      throw DataError("candidate refers to unknown question '" + candidates[i].question_id + "'");
    }
    owners[i] = it->second;
  }

  TauCache cache;
  std::vector<std::optional<LabeledSolution>> results(candidates.size());
  auto run_one = [&](std::size_t i) {
    auto solution = candidates[i];
    if (!solution.is_correct) {
      solution.is_correct = solution.final_answer && answers_match(*solution.final_answer, owners[i]->gold_answer);
    }
    switch (kind) {
      case AnnotatorKind::uncertainty:
        results[i] = annotate_uncertainty(solution, *owners[i], config, provider, ledger, cache);
        break;
      case AnnotatorKind::binary_search:
        results[i] = annotate_binary_search(solution, *owners[i], config, provider, ledger, cache);
        break;
      case AnnotatorKind::random:
        results[i] = annotate_random(solution, mix_seed(config.seed, i));
        break;
    }
  };

  if (config.workers == 1 || candidates.size() < 2) {
    for (std::size_t i = 0; i < candidates.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), candidates.size());
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < candidates.size(); i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = candidates.size();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<LabeledSolution> out;
  for (auto& r : results) {
    if (r) out.push_back(std::move(*r));
  }
  return out;
}

RankSummary error_rank_statistics(std::span<const LabeledSolution> labeled,
                                  const UncertaintyOptions& options) {
  RankSummary summary;
  for (const auto& l : labeled) {
    if (!l.error_index()) continue;
    const auto order = delta_probe_order(step_uncertainties(l.solution(), options));
    auto it = std::find(order.begin(), order.end(), *l.error_index());
    summary.ranks.push_back(static_cast<int>(it - order.begin()));
    if (l.probes()) summary.probes.push_back(*l.probes());
  }
  auto mean = [](const std::vector<int>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (int x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  summary.mean_rank = mean(summary.ranks);
  summary.mean_probes = mean(summary.probes);
  return summary;
}

}  // namespace unprm
