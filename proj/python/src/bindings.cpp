#include "unprm/aggregate.hpp"
#include "unprm/annotate.hpp"
#include "unprm/cli.hpp"
#include "unprm/error.hpp"
#include "unprm/evalkit.hpp"
#include "unprm/jsonl.hpp"
#include "unprm/text.hpp"
#include "unprm/uncertainty.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;

namespace {

py::dict f1_dict(const unprm::F1Report& r) {
  py::dict d;
  d["error_accuracy"] = r.error_accuracy;
  d["correct_accuracy"] = r.correct_accuracy;
  d["f1"] = r.f1;
  return d;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "unprm");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  py::gil_scoped_release release;
  return unprm::run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Uncertainty-driven step labeling and answer aggregation";

  auto& error = py::register_exception<unprm::Error>(m, "Error");
  py::register_exception<unprm::UsageError>(m, "UsageError", error.ptr());
  py::register_exception<unprm::ProviderError>(m, "ProviderError", error.ptr());
  py::register_exception<unprm::DataError>(m, "DataError", error.ptr());

  m.def("sequence_entropy", [](const std::vector<double>& lp) { return unprm::sequence_entropy(lp); },
        py::arg("logprobs"));
  m.def("normalized_entropy", [](const std::vector<double>& lp) { return unprm::normalized_entropy(lp); },
        py::arg("logprobs"));
  m.def("log_perplexity", [](const std::vector<double>& lp) { return unprm::log_perplexity(lp); },
        py::arg("logprobs"));
  m.def("mc_ppl",
        [](const std::vector<double>& log_ppl, const std::vector<bool>& correct) {
          return unprm::mc_ppl(log_ppl, correct);
        },
        py::arg("log_ppl"), py::arg("correct"));

  m.def("majority_vote",
        [](const std::vector<std::string>& answers) {
          auto r = unprm::majority_vote(answers);
          return std::make_tuple(r.answer, r.frequency, r.n);
        },
        py::arg("answers"));
  m.def("prm_bon",
        [](const std::vector<std::string>& answers, const std::vector<double>& rewards) {
          return unprm::prm_bon(answers, rewards);
        },
        py::arg("answers"), py::arg("rewards"));
  m.def("wrf_vote",
        [](const std::vector<std::string>& answers, const std::vector<double>& rewards, double alpha) {
          return unprm::wrf_vote(answers, rewards, alpha);
        },
        py::arg("answers"), py::arg("rewards"), py::arg("alpha") = 0.5);
  m.def("solution_reward", [](const std::vector<double>& scores) { return unprm::solution_reward(scores); },
        py::arg("scores"));

  m.def("harmonic_f1", &unprm::harmonic_f1, py::arg("error_accuracy"), py::arg("correct_accuracy"));
  m.def("processbench_f1",
        [](const std::vector<std::optional<int>>& predictions, const std::vector<std::optional<int>>& references) {
          return f1_dict(unprm::processbench_f1(predictions, references));
        },
        py::arg("predictions"), py::arg("references"));

  m.def("normalize_answer", [](const std::string& s) { return unprm::normalize_answer(s); }, py::arg("raw"));
  m.def("answers_match", [](const std::string& a, const std::string& b) { return unprm::answers_match(a, b); },
        py::arg("candidate"), py::arg("gold"));

  m.def("escape_step_text", [](const std::string& s) { return unprm::escape_step_text(s); }, py::arg("text"));
  m.def("unescape_step_text", [](const std::string& s) { return unprm::unescape_step_text(s); }, py::arg("text"));
  m.def("count_step_tags", [](const std::string& s) { return unprm::count_step_tags(s); }, py::arg("input"));
  m.def("export_record",
        [](const std::string& labeled_line, const std::string& question_line) {
          auto labeled = unprm::labeled_from_json(nlohmann::json::parse(labeled_line));
          auto question = unprm::question_from_json(nlohmann::json::parse(question_line));
          return unprm::dump_line(unprm::to_json(unprm::export_training_record(labeled, question)));
        },
        py::arg("labeled"), py::arg("question"), "Training record line from labeled and question JSON lines.");
  m.def("parse_record",
        [](const std::string& line) {
          auto p = unprm::parse_training_record(unprm::training_record_from_json(nlohmann::json::parse(line)));
          return std::make_tuple(p.problem, p.steps, p.labels);
        },
        py::arg("record"), "(problem, steps, labels) of a training record line.");

  m.def("run_cli", &cli, py::arg("args"), "Runs the command line with the given arguments and returns its exit code.");
}
