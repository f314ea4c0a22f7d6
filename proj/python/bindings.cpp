#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "forge/distill.hpp"
#include "forge/error.hpp"
#include "forge/filters.hpp"
#include "forge/grpo.hpp"
#include "forge/judge.hpp"
#include "forge/metrics.hpp"
#include "forge/parser.hpp"
#include "forge/reward.hpp"
#include "forge/split.hpp"
#include "forge/synth.hpp"

namespace py = pybind11;
using namespace forge;

namespace {

std::optional<Label> label_arg(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  auto l = label_from_canonical(*s);
  if (!l) throw Error(ErrorCode::kInvalidArgument, "unknown label '" + *s + "'");
  return l;
}

std::vector<std::optional<Label>> label_list(const std::vector<std::optional<std::string>>& v) {
  std::vector<std::optional<Label>> out;
  for (const auto& s : v) out.push_back(label_arg(s));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines of the sarcasm_forge pipeline";

  py::register_exception<Error>(m, "ForgeError");
  m.def("error_code_of", [](const std::string& message) {
    return message.substr(0, message.find_first_of("(:"));
  }, "Error code name at the front of a ForgeError message.");

  py::enum_<Label>(m, "Label")
      .value("SARCASTIC", Label::kSarcastic)
      .value("NON_SARCASTIC", Label::kNonSarcastic);

  py::class_<MultimodalInstance>(m, "MultimodalInstance")
      .def(py::init<>())
      .def_readwrite("id", &MultimodalInstance::id)
      .def_readwrite("transcript", &MultimodalInstance::transcript)
      .def_readwrite("audio_ref", &MultimodalInstance::audio_ref)
      .def_readwrite("video_ref", &MultimodalInstance::video_ref)
      .def_readwrite("features", &MultimodalInstance::features)
      .def_readwrite("gold_label", &MultimodalInstance::gold_label)
      .def("__repr__", [](const MultimodalInstance& i) {
        return "<MultimodalInstance " + i.id + " " + std::string(label_name(i.gold_label)) + ">";
      });

  py::class_<ParsedTrajectory>(m, "ParsedTrajectory")
      .def_readonly("think", &ParsedTrajectory::think)
      .def_readonly("answer_text", &ParsedTrajectory::answer_text)
      .def_readonly("predicted", &ParsedTrajectory::predicted)
      .def_readonly("format_ok", &ParsedTrajectory::format_ok);

  m.def("parse_trajectory",
        [](const std::string& text, bool lenient) {
          return parse_trajectory(text, lenient ? ParseMode::kLenient : ParseMode::kStrict);
        },
        py::arg("text"), py::arg("lenient") = false);
  m.def("format_reward", [](const std::string& text) {
    return format_reward(parse_trajectory(text));
  });
  m.def("extract_label", [](const std::string& answer) { return extract_label(answer); });

  py::class_<RepetitionConfig>(m, "RepetitionConfig")
      .def(py::init<>())
      .def_readwrite("n", &RepetitionConfig::n)
      .def_readwrite("min_normalized_entropy", &RepetitionConfig::min_normalized_entropy)
      .def_readwrite("max_ngram_repeat", &RepetitionConfig::max_ngram_repeat)
      .def_readwrite("min_tokens", &RepetitionConfig::min_tokens);
  m.def("ngram_entropy", &ngram_entropy, py::arg("text"), py::arg("n") = 3);
  m.def("anti_repetition_filter", &anti_repetition_filter, py::arg("text"),
        py::arg("config") = RepetitionConfig{});
  m.def("trigram_jaccard", &trigram_jaccard);

  py::class_<RewardWeights>(m, "RewardWeights")
      .def(py::init<>())
      .def(py::init([](double a, double f, double g) { return RewardWeights{a, f, g}; }),
           py::arg("lambda_a"), py::arg("lambda_f"), py::arg("lambda_g"))
      .def_readwrite("lambda_a", &RewardWeights::lambda_a)
      .def_readwrite("lambda_f", &RewardWeights::lambda_f)
      .def_readwrite("lambda_g", &RewardWeights::lambda_g);
  m.def("total_reward", &total_reward, py::arg("r_acc"), py::arg("r_fmt"), py::arg("r_genrm"),
        py::arg("weights") = RewardWeights{});

  m.def("group_advantages",
        [](const std::vector<double>& r, double eps) { return group_advantages(r, eps); },
        py::arg("rewards"), py::arg("std_epsilon") = 1e-8);
  m.def("kl_estimate", [](const std::vector<double>& cur, const std::vector<double>& ref) {
    return kl_estimate(cur, ref);
  });

  py::class_<ConfusionMatrix>(m, "ConfusionMatrix")
      .def(py::init<>())
      .def(py::init([](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
             return ConfusionMatrix{tp, fp, fn, tn};
           }),
           py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"))
      .def_readwrite("tp", &ConfusionMatrix::tp)
      .def_readwrite("fp", &ConfusionMatrix::fp)
      .def_readwrite("fn", &ConfusionMatrix::fn)
      .def_readwrite("tn", &ConfusionMatrix::tn);
  m.def("confusion",
        [](const std::vector<std::optional<std::string>>& preds, const std::vector<std::string>& golds) {
          std::vector<Label> g;
          for (const auto& s : golds) g.push_back(*label_arg(s));
          return confusion(label_list(preds), g);
        },
        "Labels are 'sarcastic' / 'non-sarcastic'; None marks a missing prediction.");
  m.def("accuracy", &accuracy);
  m.def("macro_f1", &macro_f1);
  m.def("normalize_rows", &normalize_rows);

  m.def("generate_instances", &synth::generate_instances, py::arg("count"), py::arg("seed"));
  m.def("stratified_split",
        [](const std::vector<MultimodalInstance>& items, std::array<double, 3> ratios,
           std::uint64_t seed) {
          const auto s = stratified_split(items, ratios, seed);
          return py::make_tuple(s.train, s.val, s.test);
        },
        py::arg("instances"), py::arg("ratios") = std::array<double, 3>{0.7, 0.15, 0.15},
        py::arg("seed") = 0);
  m.def("oracle_score", [](const MultimodalInstance& inst, const std::string& text) {
    return synth::OracleJudge{}.score(text, &inst);
  });
  m.def("render_prompt", [](const MultimodalInstance& inst, const std::string& template_id) {
    return render_prompt(inst, template_id);
  }, py::arg("instance"), py::arg("template_id") = "thinking");
}
