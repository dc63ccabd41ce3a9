#include "unprm/cli.hpp"

#include "unprm/aggregate.hpp"
#include "unprm/annotate.hpp"
#include "unprm/config.hpp"
#include "unprm/datagen.hpp"
#include "unprm/error.hpp"
#include "unprm/evalkit.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/log.hpp"
#include "unprm/rng.hpp"
#include "unprm/simulator.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

namespace unprm {
namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string provider;
};

AppConfig resolve_config(const Globals& g) {
  auto config = load_app_config(g.config_path.empty() ? std::nullopt
                                                      : std::optional<std::filesystem::path>(g.config_path));
  if (g.seed) apply_seed(config, *g.seed);
  if (!g.provider.empty()) config.provider = provider_from_string(g.provider);
  return config;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(out_path, text);
  }
}

std::string pretty(const nlohmann::json& j) { return j.dump(2, ' ', true) + "\n"; }

/// Solutions of a JSONL file; labeled records contribute their labels too.
struct SampleFile {
  std::vector<SampledSolution> solutions;
  std::vector<LabeledSolution> labeled;
};

SampleFile read_sample_file(const std::string& path) {
  SampleFile f;
  auto records = read_jsonl(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      if (has_labels(records[i])) {
        f.labeled.push_back(labeled_from_json(records[i]));
        f.solutions.push_back(f.labeled.back().solution());
      } else {
        f.solutions.push_back(solution_from_json(records[i]));
      }
    } catch (const DataError& e) {
      throw DataError(path + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return f;
}

/// Scorer selection for aggregate, sweep and freq. The oracle reads labels
/// from the input records when present, else the simulator's ground truth.
struct ScorerBundle {
  std::unique_ptr<CompletionProvider> provider;
  std::unique_ptr<StepScorer> base;
  std::unique_ptr<CachingScorer> cached;
};

ScorerBundle make_scorer(const std::string& kind, const AppConfig& config, const SampleFile& samples,
                         const std::vector<Question>& questions) {
  ScorerBundle b;
  if (kind == "http") {
    b.base = std::make_unique<HttpScorer>(config.http);
  } else if (kind == "oracle") {
    LabelLookup lookup;
    if (!samples.labeled.empty()) {
      lookup = OracleScorer::from_labeled(samples.labeled);
    } else if (config.provider == ProviderKind::sim) {
      b.provider = make_provider(config, questions);
      lookup = static_cast<SimulatedProvider*>(b.provider.get())->label_lookup();
    } else {
      throw UsageError("the oracle scorer needs labeled input or the simulated provider");
    }
    b.base = std::make_unique<OracleScorer>(std::move(lookup), config.oracle);
  } else {
    throw UsageError("unknown scorer '" + kind + "'");
  }
  b.cached = std::make_unique<CachingScorer>(*b.base);
  return b;
}

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto piece = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      int v = std::stoi(piece, &used);
      if (used != piece.size()) throw std::invalid_argument(piece);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("bad sample size '" + piece + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = text.find(',', pos);
    out.push_back(text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_generate(const Globals& g, const std::string& questions_path, int k, std::optional<double> temp,
                 const std::string& out) {
  auto config = resolve_config(g);
  auto questions = read_questions(questions_path);
  config.generation.k = k;
  if (temp) config.generation.sampling.temperature = *temp;
  auto provider = make_provider(config, questions);
  CostLedger ledger;
  std::vector<nlohmann::json> records;
  for (const auto& q : questions) {
    for (const auto& s : generate_pool(q, config.generation, *provider, ledger)) records.push_back(to_json(s));
  }
  write_jsonl(out, records);
  log_info("generated " + std::to_string(records.size()) + " solutions for " + std::to_string(questions.size()) +
           " questions");
  return 0;
}

int cmd_select(const std::string& method, int m, int n, const std::string& in, const std::string& out) {
  if (method != "uncertain" && method != "similar") {
    throw UsageError("unknown selection method '" + method + "'");
  }
  auto pool = read_solutions(in);
  std::vector<nlohmann::json> records;
  for (const auto& group : group_by_question(pool)) {
    auto set = method == "uncertain" ? select_uncertain(group, m, n) : select_similar(group, m, n);
    for (const auto& s : set.correct_selected) records.push_back(to_json(s));
    for (const auto& s : set.incorrect_selected) records.push_back(to_json(s));
  }
  write_jsonl(out, records);
  return 0;
}

int cmd_annotate(const Globals& g, const std::string& method, const std::string& in,
                 const std::string& questions_path, const std::string& out, const std::string& cost_path) {
  auto config = resolve_config(g);
  const auto kind = annotator_from_string(method);
  auto questions = read_questions(questions_path);
  auto candidates = read_solutions(in);
  auto provider = make_provider(config, questions);
  CostLedger ledger;
  auto labeled = annotate_all(candidates, questions, kind, config.annotate, *provider, ledger);
  write_jsonl(out, to_json_records(labeled));
  if (!cost_path.empty()) write_text_atomic(cost_path, pretty(to_json(ledger.snapshot())));
  log_info("labeled " + std::to_string(labeled.size()) + " of " + std::to_string(candidates.size()) +
           " candidates; verified steps " + std::to_string(ledger.verified_steps()));
  return 0;
}

int cmd_aggregate(const Globals& g, const std::string& strategy_name, std::optional<double> alpha,
                  const std::string& scorer_kind, const std::string& in, const std::string& questions_path,
                  const std::string& out) {
  auto config = resolve_config(g);
  const auto strategy = strategy_from_string(strategy_name);
  auto questions = read_questions(questions_path);
  auto samples = read_sample_file(in);
  ScorerBundle scorer;
  if (strategy != Strategy::majority) scorer = make_scorer(scorer_kind, config, samples, questions);
  std::vector<nlohmann::json> records;
  for (const auto& entry : pair_samples(questions, samples.solutions)) {
    if (entry.samples.empty()) continue;
    auto d = aggregate(strategy, entry.samples, entry.question, scorer.cached.get(), alpha.value_or(config.alpha));
    records.push_back(to_json(d));
  }
  write_jsonl(out, records);
  return 0;
}

int cmd_sweep(const Globals& g, const std::string& strategies, const std::string& sizes_text,
              std::optional<double> alpha, const std::string& scorer_kind, const std::string& in,
              const std::string& questions_path, const std::string& out) {
  auto config = resolve_config(g);
  auto questions = read_questions(questions_path);
  auto samples = read_sample_file(in);
  const auto sizes = parse_sizes(sizes_text);
  auto dataset = pair_samples(questions, samples.solutions);
  ScorerBundle scorer;
  std::vector<nlohmann::json> records;
  for (const auto& name : split_list(strategies)) {
    const auto strategy = strategy_from_string(name);
    if (strategy != Strategy::majority && !scorer.cached) scorer = make_scorer(scorer_kind, config, samples, questions);
    auto result = bon_sweep(dataset, strategy, scorer.cached.get(), sizes, config.seed, alpha.value_or(config.alpha));
    records.push_back(to_json(result));
  }
  write_jsonl(out, records);
  return 0;
}

std::optional<int> error_index_of(const nlohmann::json& j) {
  auto it = j.find("error_index");
  if (it == j.end()) {
    throw DataError("record has no error_index");
  }
  if (it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) {
    throw DataError("error_index must be an integer or null");
  }
  return it->get<int>();
}

int cmd_f1(const std::string& pred_path, const std::string& ref_path, const std::string& out) {
  auto preds = read_jsonl(pred_path);
  auto refs = read_jsonl(ref_path);
  std::vector<std::optional<int>> p, r;
  for (const auto& j : preds) p.push_back(error_index_of(j));
  for (const auto& j : refs) r.push_back(error_index_of(j));
  emit(out, pretty(to_json(processbench_f1(p, r))));
  return 0;
}

int cmd_stats(const std::string& in, const std::string& out) {
  auto labeled = read_labeled(in);
  emit(out, pretty(to_json(dataset_stats(labeled))));
  return 0;
}

int cmd_freq(const Globals& g, const std::string& in, const std::string& questions_path,
             const std::vector<std::string>& decision_paths, const std::string& out) {
  (void)g;
  auto questions = read_questions(questions_path);
  auto samples = read_sample_file(in);
  auto dataset = pair_samples(questions, samples.solutions);
  std::map<std::string, std::vector<Decision>> decisions;
  for (const auto& path : decision_paths) {
    for (const auto& j : read_jsonl(path)) {
      Decision d;
      try {
        d.question_id = j.at("question_id").get<std::string>();
        d.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        d.answer = j.at("answer").get<std::string>();
        if (!j.at("is_correct").is_null()) d.is_correct = j["is_correct"].get<bool>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": malformed decision: " + e.what());
      }
      decisions[std::string(to_string(d.strategy))].push_back(d);
    }
  }
  emit(out, to_csv(frequency_analysis(dataset, decisions)));
  return 0;
}

int cmd_export(const std::string& in, const std::string& questions_path, const std::string& out) {
  auto questions = read_questions(questions_path);
  auto labeled = read_labeled(in);
  std::vector<nlohmann::json> records;
  for (const auto& r : export_training_data(labeled, questions)) records.push_back(to_json(r));
  write_jsonl(out, records);
  return 0;
}

int cmd_cost_report(const std::vector<std::string>& inputs, const std::string& out) {
  CostSnapshot total;
  for (const auto& path : inputs) {
    std::ifstream f(path);
    if (!f) {
      throw DataError("cannot open " + path);
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + " is not valid JSON: " + e.what());
    }
    auto c = cost_from_json(j);
    total.verified_steps += c.verified_steps;
    total.sampled_completions += c.sampled_completions;
    total.generated_tokens += c.generated_tokens;
  }
  emit(out, pretty(to_json(total)));
  return 0;
}

int cmd_synth(const Globals& g, int count, const std::string& questions_out, const std::string& config_out) {
  if (count < 1) {
    throw UsageError("--count must be >= 1");
  }
  const std::uint64_t seed = g.seed.value_or(0);
  Rng rng(mix_seed(seed, fnv1a("synth")));
  std::vector<nlohmann::json> questions;
  nlohmann::json worlds = nlohmann::json::object();
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "q%04d", i + 1);
    Question q{id, "Follow the running total of puzzle " + std::to_string(i + 1) + " to the end.",
               std::to_string(rng.uniform_int(10, 999))};
    questions.push_back(to_json(q));
    worlds[q.id] = to_json(simple_world(q, rng.uniform(0.3, 0.8), static_cast<int>(rng.uniform_int(1, 4))));
  }
  write_jsonl(questions_out, questions);
  nlohmann::json config = {{"provider", "sim"},
                           {"seed", seed},
                           {"sim", {{"worlds", worlds}}},
                           {"annotate", {{"n0", 8}, {"n_min", 4}, {"n_max", 64}, {"growth_factor", 2.0}}}};
  write_text_atomic(config_out, pretty(config));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Uncertainty-driven step annotation and reward aggregation"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "JSON config file");
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for every random component");
  app.add_option("--provider", g.provider, "Completion provider")->check(CLI::IsMember({"sim", "http"}));

  std::string questions, in, out, method, strategy, scorer = "oracle", cost, sizes = "1,2,4,8,16,32,64,128";
  std::string strategies = "majority,prm,hmr,wrf", pred, ref, questions_out, config_out;
  std::vector<std::string> inputs, decision_files;
  int k = 32, m = 2, n = 6, count = 20;
  std::optional<double> temp, alpha;

  auto* generate = app.add_subcommand("generate", "Sample candidate solutions per question");
  generate->add_option("--questions", questions)->required();
  generate->add_option("--k", k);
  generate->add_option("--temp", temp);
  generate->add_option("--out", out)->required();

  auto* select = app.add_subcommand("select", "Choose the annotation pool");
  select->add_option("--method", method)->required()->check(CLI::IsMember({"uncertain", "similar"}));
  select->add_option("--m", m);
  select->add_option("--n", n);
  select->add_option("--in", in)->required();
  select->add_option("--out", out)->required();

  auto* annotate = app.add_subcommand("annotate", "Label solution steps");
  annotate->add_option("--method", method)->required()->check(CLI::IsMember({"uncertainty", "binary", "random"}));
  annotate->add_option("--in", in)->required();
  annotate->add_option("--questions", questions)->required();
  annotate->add_option("--out", out)->required();
  annotate->add_option("--cost-report", cost);

  auto* aggregate_cmd = app.add_subcommand("aggregate", "Pick one answer per question");
  aggregate_cmd->add_option("--strategy", strategy)->required()->check(CLI::IsMember({"majority", "prm", "hmr", "wrf"}));
  aggregate_cmd->add_option("--alpha", alpha);
  aggregate_cmd->add_option("--scorer", scorer)->check(CLI::IsMember({"oracle", "http"}));
  aggregate_cmd->add_option("--in", in)->required();
  aggregate_cmd->add_option("--questions", questions)->required();
  aggregate_cmd->add_option("--out", out)->required();

  auto* sweep = app.add_subcommand("sweep", "Accuracy against sample count");
  sweep->add_option("--strategies,--strategy", strategies);
  sweep->add_option("--sizes", sizes);
  sweep->add_option("--alpha", alpha);
  sweep->add_option("--scorer", scorer)->check(CLI::IsMember({"oracle", "http"}));
  sweep->add_option("--in", in)->required();
  sweep->add_option("--questions", questions)->required();
  sweep->add_option("--out", out)->required();

  auto* f1 = app.add_subcommand("f1", "Error-step F1 of predictions against references");
  f1->add_option("--pred", pred)->required();
  f1->add_option("--ref", ref)->required();
  f1->add_option("--out", out);

  auto* stats = app.add_subcommand("stats", "Per-generator annotation statistics");
  stats->add_option("--in", in)->required();
  stats->add_option("--out", out);

  auto* freq = app.add_subcommand("freq", "Gold-answer frequency analysis as CSV");
  freq->add_option("--in", in)->required();
  freq->add_option("--questions", questions)->required();
  freq->add_option("--decisions", decision_files)->required();
  freq->add_option("--out", out);

  auto* export_cmd = app.add_subcommand("export", "Write step-tagged training records");
  export_cmd->add_option("--in", in)->required();
  export_cmd->add_option("--questions", questions)->required();
  export_cmd->add_option("--out", out)->required();

  auto* cost_cmd = app.add_subcommand("cost-report", "Sum cost reports");
  cost_cmd->add_option("--in", inputs)->required();
  cost_cmd->add_option("--out", out);

  auto* synth = app.add_subcommand("synth", "Write demo questions and a simulator config");
  synth->add_option("--count", count);
  synth->add_option("--questions-out", questions_out)->required();
  synth->add_option("--config-out", config_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (generate->parsed()) return cmd_generate(g, questions, k, temp, out);
    if (select->parsed()) return cmd_select(method, m, n, in, out);
    if (annotate->parsed()) return cmd_annotate(g, method, in, questions, out, cost);
    if (aggregate_cmd->parsed()) return cmd_aggregate(g, strategy, alpha, scorer, in, questions, out);
    if (sweep->parsed()) return cmd_sweep(g, strategies, sizes, alpha, scorer, in, questions, out);
    if (f1->parsed()) return cmd_f1(pred, ref, out);
    if (stats->parsed()) return cmd_stats(in, out);
    if (freq->parsed()) return cmd_freq(g, in, questions, decision_files, out);
    if (export_cmd->parsed()) return cmd_export(in, questions, out);
    if (cost_cmd->parsed()) return cmd_cost_report(inputs, out);
    if (synth->parsed()) return cmd_synth(g, count, questions_out, config_out);
  } catch (const Error& e) {
    std::cerr << "unprm: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "unprm: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
  return 1;
}

}  // namespace unprm
