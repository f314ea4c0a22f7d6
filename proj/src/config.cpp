#include "forge/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "forge/error.hpp"

namespace forge {

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

double parse_double(const std::string& key, const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kConfig, key + ": '" + text + "' is not a number");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kConfig, key + ": '" + text + "' is not an integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw Error(ErrorCode::kConfig, key + ": '" + text + "' is not a boolean");
}

[[noreturn]] void bad_choice(const std::string& key, const std::string& text,
                             const std::string& allowed) {
  throw Error(ErrorCode::kConfig, key + ": '" + text + "' is not one of " + allowed);
}

struct KeyDef {
  std::string key;  // section.name
  std::string description;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

#define FORGE_DOUBLE(K, FIELD, DESC)                                                        \
  KeyDef {                                                                                  \
    K, DESC, [](const PipelineConfig& c) { return fmt_double(c.FIELD); },                   \
        [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_double(K, v); }      \
  }
#define FORGE_INT(K, FIELD, DESC)                                                           \
  KeyDef {                                                                                  \
    K, DESC, [](const PipelineConfig& c) { return std::to_string(c.FIELD); },               \
        [](PipelineConfig& c, const std::string& v) {                                       \
          c.FIELD = parse_int<std::remove_cvref_t<decltype(c.FIELD)>>(K, v);                \
        }                                                                                   \
  }
#define FORGE_BOOL(K, FIELD, DESC)                                                          \
  KeyDef {                                                                                  \
    K, DESC, [](const PipelineConfig& c) { return fmt_bool(c.FIELD); },                     \
        [](PipelineConfig& c, const std::string& v) { c.FIELD = parse_bool(K, v); }        \
  }
#define FORGE_STRING(K, FIELD, DESC)                                                        \
  KeyDef {                                                                                  \
    K, DESC, [](const PipelineConfig& c) { return std::string(c.FIELD); },                  \
        [](PipelineConfig& c, const std::string& v) { c.FIELD = v; }                        \
  }

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> defs = {
      FORGE_INT("run.seed", seed, "Global seed; every stage derives its own stream from it."),
      KeyDef{"run.output_dir", "Directory that receives every stage's outputs.",
             [](const PipelineConfig& c) { return c.output_dir.string(); },
             [](PipelineConfig& c, const std::string& v) { c.output_dir = v; }},
      KeyDef{"run.backend", "Teacher/judge transport: mock or http.",
             [](const PipelineConfig& c) { return std::string(backend_kind_name(c.backend)); },
             [](PipelineConfig& c, const std::string& v) {
               if (v == "mock") c.backend = BackendKind::kMock;
               else if (v == "http") c.backend = BackendKind::kHttp;
               else bad_choice("run.backend", v, "mock, http");
             }},

      KeyDef{"data.dataset", "Instance record file; empty generates the synthetic world.",
             [](const PipelineConfig& c) { return c.dataset ? c.dataset->string() : std::string(); },
             [](PipelineConfig& c, const std::string& v) {
               if (v.empty()) c.dataset.reset();
               else c.dataset = v;
             }},
      FORGE_INT("data.synth_instances", synth_instances,
                "Size of the generated synthetic world when no dataset is given."),
      FORGE_DOUBLE("data.train_ratio", split_ratios[0], "Train share of each class."),
      FORGE_DOUBLE("data.val_ratio", split_ratios[1], "Validation share of each class."),
      FORGE_DOUBLE("data.test_ratio", split_ratios[2], "Test share of each class."),

      FORGE_INT("sampling.n", sampling.n, "Trajectories sampled per instance."),
      FORGE_DOUBLE("sampling.temperature", sampling.temperature, "Teacher sampling temperature."),
      FORGE_DOUBLE("sampling.top_p", sampling.top_p, "Teacher nucleus threshold."),

      KeyDef{"mine.template", "Teacher prompt template: thinking or instruct.",
             [](const PipelineConfig& c) { return std::string(template_name(c.prompt_template)); },
             [](PipelineConfig& c, const std::string& v) { c.prompt_template = template_from_name(v); }},
      FORGE_BOOL("mine.include_greedy", include_greedy,
                 "Also request one temperature-0 trajectory per instance."),

      FORGE_INT("filters.ngram_n", repetition.n, "n-gram order of the repetition filter."),
      FORGE_DOUBLE("filters.min_normalized_entropy", repetition.min_normalized_entropy,
                   "Reject below this normalized n-gram entropy."),
      FORGE_INT("filters.max_ngram_repeat", repetition.max_ngram_repeat,
                "Reject when one n-gram occurs more often than this."),
      FORGE_INT("filters.min_tokens", repetition.min_tokens,
                "Shorter texts pass unchecked; -1 means twice ngram_n."),

      KeyDef{"distill.strategy", "SFT selection: greedy, best-of-n or diverse.",
             [](const PipelineConfig& c) { return std::string(strategy_name(c.strategy)); },
             [](PipelineConfig& c, const std::string& v) {
               const auto s = strategy_from_name(v);
               if (!s) bad_choice("distill.strategy", v, "greedy, best-of-n, diverse");
               c.strategy = *s;
             }},
      FORGE_DOUBLE("distill.similarity_cap", similarity_cap,
                   "Diverse strategy: maximum trigram Jaccard between kept trajectories."),
      FORGE_INT("distill.k_max", k_max, "Diverse strategy: trajectories kept per instance."),
      KeyDef{"distill.best_of_n_scorer",
             "Best-of-n ranking: auto (judge if available, else log-prob), judge or logprob.",
             [](const PipelineConfig& c) {
               switch (c.best_of_n_scorer) {
                 case ScorerChoice::kJudge: return std::string("judge");
                 case ScorerChoice::kLogprob: return std::string("logprob");
                 default: return std::string("auto");
               }
             },
             [](PipelineConfig& c, const std::string& v) {
               if (v == "auto") c.best_of_n_scorer = ScorerChoice::kAuto;
               else if (v == "judge") c.best_of_n_scorer = ScorerChoice::kJudge;
               else if (v == "logprob") c.best_of_n_scorer = ScorerChoice::kLogprob;
               else bad_choice("distill.best_of_n_scorer", v, "auto, judge, logprob");
             }},
      KeyDef{"distill.labeler", "Groundedness labeler: oracle, annotation_file or external_judge.",
             [](const PipelineConfig& c) { return std::string(labeler_mode_name(c.labeler)); },
             [](PipelineConfig& c, const std::string& v) {
               if (v == "oracle") c.labeler = LabelerMode::kOracle;
               else if (v == "annotation_file") c.labeler = LabelerMode::kAnnotationFile;
               else if (v == "external_judge") c.labeler = LabelerMode::kExternalJudge;
               else bad_choice("distill.labeler", v, "oracle, annotation_file, external_judge");
             }},
      KeyDef{"distill.annotations", "Annotation file for the annotation_file labeler.",
             [](const PipelineConfig& c) {
               return c.annotations ? c.annotations->string() : std::string();
             },
             [](PipelineConfig& c, const std::string& v) {
               if (v.empty()) c.annotations.reset();
               else c.annotations = v;
             }},

      KeyDef{"judge.kind", "Reward judge used by grpo: toy, oracle or external.",
             [](const PipelineConfig& c) { return std::string(judge_kind_name(c.judge)); },
             [](PipelineConfig& c, const std::string& v) {
               if (v == "toy") c.judge = JudgeKind::kToy;
               else if (v == "oracle") c.judge = JudgeKind::kOracle;
               else if (v == "external") c.judge = JudgeKind::kExternal;
               else bad_choice("judge.kind", v, "toy, oracle, external");
             }},
      FORGE_DOUBLE("judge.learning_rate", judge_hyper.learning_rate, "Toy judge step size."),
      FORGE_INT("judge.epochs", judge_hyper.epochs, "Toy judge full-batch epochs."),
      FORGE_DOUBLE("judge.l2", judge_hyper.l2, "Toy judge L2 penalty."),
      FORGE_DOUBLE("judge.val_fraction", judge_val_fraction,
                   "Share of the judge dataset held out for accuracy."),

      FORGE_DOUBLE("reward.lambda_a", weights.lambda_a, "Weight of the accuracy reward."),
      FORGE_DOUBLE("reward.lambda_f", weights.lambda_f, "Weight of the format reward."),
      FORGE_DOUBLE("reward.lambda_g", weights.lambda_g, "Weight of the judge reward."),

      FORGE_INT("grpo.group_size", grpo.group_size, "Trajectories per group (G)."),
      FORGE_DOUBLE("grpo.learning_rate", grpo.learning_rate, "Policy step size."),
      FORGE_DOUBLE("grpo.kl_beta", grpo.kl_beta, "KL penalty coefficient."),
      FORGE_DOUBLE("grpo.clip_epsilon", grpo.clip_epsilon, "Ratio clip range; inf disables."),
      FORGE_INT("grpo.epochs", grpo.epochs, "Passes over the training split."),
      FORGE_DOUBLE("grpo.std_epsilon", grpo.std_epsilon, "Advantage denominator guard."),
      FORGE_INT("grpo.batch_instances", grpo.batch_instances, "Instances per optimizer step."),
      FORGE_INT("grpo.max_steps", grpo.max_steps, "Step cap; 0 derives it from epochs."),
      FORGE_INT("grpo.updates_per_batch", grpo.updates_per_batch,
                "Gradient steps per sampled batch."),
      FORGE_INT("grpo.probe_every", grpo.probe_every, "Probe metrics cadence in steps."),
      FORGE_BOOL("grpo.warm_start", warm_start, "Behavior-clone the SFT set before training."),
      FORGE_DOUBLE("grpo.bc_learning_rate", behavior_cloning.learning_rate,
                   "Warm-start step size."),
      FORGE_INT("grpo.bc_epochs", behavior_cloning.epochs, "Warm-start epochs."),

      KeyDef{"eval.probe_judge", "Judge for probe and test GAR: oracle or reward.",
             [](const PipelineConfig& c) {
               return std::string(c.probe_judge == ProbeJudgeChoice::kOracle ? "oracle" : "reward");
             },
             [](PipelineConfig& c, const std::string& v) {
               if (v == "oracle") c.probe_judge = ProbeJudgeChoice::kOracle;
               else if (v == "reward") c.probe_judge = ProbeJudgeChoice::kReward;
               else bad_choice("eval.probe_judge", v, "oracle, reward");
             }},
      FORGE_DOUBLE("eval.gar_threshold", gar_threshold, "Judge score counted as accepted."),

      FORGE_STRING("backend.base_url", backend_cfg.base_url, "Chat-completions base URL."),
      FORGE_STRING("backend.model", backend_cfg.model_name, "Model name sent with requests."),
      FORGE_STRING("backend.auth_token_env", backend_cfg.auth_token_env_var,
                   "Environment variable holding the bearer token."),
      FORGE_DOUBLE("backend.timeout_seconds", backend_cfg.request_timeout_seconds,
                   "Per-request timeout."),
      FORGE_INT("backend.max_parallel", backend_cfg.max_parallel_requests,
                "Concurrent requests."),
      FORGE_INT("backend.max_attempts", backend_cfg.retry.max_attempts, "Attempts per request."),
      FORGE_DOUBLE("backend.backoff_seconds", backend_cfg.retry.backoff_base_seconds,
                   "Base of the exponential retry delay."),
      FORGE_INT("backend.max_tokens", backend_cfg.max_tokens, "Completion length cap."),
  };
  return defs;
}

#undef FORGE_DOUBLE
#undef FORGE_INT
#undef FORGE_BOOL
#undef FORGE_STRING

PipelineConfig from_ptree(const boost::property_tree::ptree& tree) {
  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw Error(ErrorCode::kConfig, "key '" + section + "' must be inside a [section]");
    }
    for (const auto& [name, value] : body) {
      set_config_value(cfg, section + "." + name, value.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

std::string_view backend_kind_name(BackendKind kind) {
  return kind == BackendKind::kMock ? "mock" : "http";
}

std::string_view judge_kind_name(JudgeKind kind) {
  switch (kind) {
    case JudgeKind::kToy: return "toy";
    case JudgeKind::kOracle: return "oracle";
    case JudgeKind::kExternal: return "external";
  }
  return "toy";
}

void PipelineConfig::validate() const {
  sampling.validate();
  repetition.validate();
  weights.validate();
  grpo.validate();
  if (backend == BackendKind::kHttp) backend_cfg.validate();
  if (similarity_cap < 0.0 || similarity_cap > 1.0) {
    throw Error(ErrorCode::kConfig, "distill.similarity_cap must be in [0, 1]");
  }
  if (k_max < 1) throw Error(ErrorCode::kConfig, "distill.k_max must be >= 1");
  if (!(judge_val_fraction > 0.0 && judge_val_fraction < 1.0)) {
    throw Error(ErrorCode::kConfig, "judge.val_fraction must be in (0, 1)");
  }
  if (labeler == LabelerMode::kAnnotationFile && !annotations) {
    throw Error(ErrorCode::kConfig, "distill.labeler = annotation_file needs distill.annotations");
  }
}

void set_config_value(PipelineConfig& cfg, const std::string& dotted_key, const std::string& value) {
  for (const auto& def : registry()) {
    if (def.key == dotted_key) {
      try {
        def.set(cfg, value);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kConfig) throw;
        throw Error(ErrorCode::kConfig, dotted_key + ": " + e.detail());
      }
      return;
    }
  }
  throw Error(ErrorCode::kConfig, "unknown config key '" + dotted_key + "'");
}

PipelineConfig parse_config_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  return from_ptree(tree);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  return from_ptree(tree);
}

std::vector<std::pair<std::string, std::string>> effective_config(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& def : registry()) out.emplace_back(def.key, def.get(cfg));
  return out;
}

std::vector<ConfigKeyDoc> config_reference() {
  const PipelineConfig defaults;
  std::vector<ConfigKeyDoc> out;
  for (const auto& def : registry()) out.push_back({def.key, def.get(defaults), def.description});
  return out;
}

}  // namespace forge
