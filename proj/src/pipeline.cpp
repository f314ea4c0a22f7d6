#include "forge/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "forge/error.hpp"
#include "forge/parser.hpp"
#include "forge/records.hpp"
#include "forge/rng.hpp"
#include "forge/split.hpp"

namespace forge {

namespace {

using ojson = nlohmann::ordered_json;

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

ojson config_object(const PipelineConfig& cfg) {
  ojson out = ojson::object();
  for (const auto& [k, v] : effective_config(cfg)) out[k] = v;
  return out;
}

void write_manifest(const std::filesystem::path& path, std::string_view command,
                    const PipelineConfig& cfg, ojson body,
                    const std::vector<std::filesystem::path>& outputs) {
  ojson doc;
  doc["command"] = command;
  doc["code_version"] = kCodeVersion;
  doc["world_rule"] = synth::kWorldRuleVersion;
  doc["config"] = config_object(cfg);
  for (auto& [k, v] : body.items()) doc[k] = v;
  ojson files = ojson::object();
  for (const auto& out : outputs) {
    files[out.filename().string()] = {{"fnv1a64", file_digest(out)}};
  }
  doc["outputs"] = files;
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << doc.dump(2) << '\n';
}

DatasetSplit load_split(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  for (const char* name : {"train", "val", "test"}) {
    if (!std::filesystem::exists(p.split(name))) {
      throw Error(ErrorCode::kIo, p.split(name).string() +
                                      " is missing; run `forge synth` or `forge mine` first");
    }
  }
  DatasetSplit split;
  split.train = read_records_as<MultimodalInstance>(p.split("train"));
  split.val = read_records_as<MultimodalInstance>(p.split("val"));
  split.test = read_records_as<MultimodalInstance>(p.split("test"));
  split.ratios = cfg.split_ratios;
  split.seed = derive_seed(cfg.seed, "split");
  return split;
}

std::vector<MultimodalInstance> all_instances(const DatasetSplit& split) {
  std::vector<MultimodalInstance> all = split.train;
  all.insert(all.end(), split.val.begin(), split.val.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  return all;
}

void append_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + path.string());
  for (const auto& l : lines) out << l << '\n';
  out.flush();
}

ojson selection_stats_json(const SelectionStats& s) {
  return {{"instances", s.instances},
          {"candidates", s.candidates},
          {"admitted", s.admitted},
          {"rejected_consistency", s.rejected_consistency},
          {"rejected_format", s.rejected_format},
          {"rejected_repetition", s.rejected_repetition},
          {"dropped_similarity", s.dropped_similarity},
          {"dropped_k_max", s.dropped_k_max},
          {"emitted", s.emitted},
          {"instances_without_output", s.instances_without_output}};
}

ojson judge_stats_json(const JudgeDatasetStats& s) {
  return {{"total", s.total},
          {"positives", s.positives},
          {"negatives", s.negatives},
          {"wrong_answer", s.wrong_answer},
          {"hallucinated_evidence", s.hallucinated},
          {"malformed", s.malformed},
          {"positive_fraction", s.positive_fraction()}};
}

// Reward judge per configuration. `holder` owns whatever object backs it.
struct JudgeHolder {
  std::unique_ptr<Backend> backend;
  std::unique_ptr<Judge> judge;
};

JudgeHolder make_reward_judge(const PipelineConfig& cfg) {
  JudgeHolder h;
  const StagePaths p{cfg.output_dir};
  switch (cfg.judge) {
    case JudgeKind::kToy:
      if (!std::filesystem::exists(p.toy_judge())) {
        throw Error(ErrorCode::kIo, p.toy_judge().string() + " is missing; run `forge judge-train`");
      }
      h.judge = std::make_unique<ToyJudge>(ToyJudge::load(p.toy_judge()));
      break;
    case JudgeKind::kOracle:
      h.judge = std::make_unique<synth::OracleJudge>();
      break;
    case JudgeKind::kExternal:
      h.backend = make_backend(cfg);
      h.judge = std::make_unique<BackendJudge>(*h.backend);
      break;
  }
  return h;
}

}  // namespace

OutputLock::OutputLock(const std::filesystem::path& dir) : path_(dir / ".forge.lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::kLocked, dir.string() + " is in use by another command (remove " +
                                        path_.string() + " if that command died)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg) {
  if (cfg.backend == BackendKind::kMock) return std::make_unique<MockBackend>();
  return std::make_unique<HttpBackend>(cfg.backend_cfg);
}

std::vector<Trajectory> mine_instances(const Backend& backend,
                                       std::span<const MultimodalInstance> instances,
                                       const SamplingConfig& sampling, PromptTemplate prompt,
                                       bool include_greedy, int max_parallel) {
  std::vector<std::string> prompts;
  prompts.reserve(instances.size());
  for (const auto& inst : instances) prompts.push_back(render_prompt(inst, prompt));
  std::vector<std::vector<Completion>> sampled;
  try {
    sampled = backend.sample_batch(prompts, sampling, max_parallel);
  } catch (const Error& e) {
    throw Error(e.code(), "mining failed: " + e.detail(), e.index());
  }
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (std::size_t j = 0; j < sampled[i].size(); ++j) {
      Trajectory t;
      t.instance_id = instances[i].id;
      t.raw_text = std::move(sampled[i][j].text);
      t.origin = TrajectoryOrigin::kTeacherSampled;
      t.sample_index = static_cast<int>(j);
      t.sampling = sampling;
      t.token_logprobs = std::move(sampled[i][j].token_logprobs);
      out.push_back(std::move(t));
    }
    if (include_greedy) {
      Completion c = backend.greedy(prompts[i], sampling.seed);
      Trajectory t;
      t.instance_id = instances[i].id;
      t.raw_text = std::move(c.text);
      t.origin = TrajectoryOrigin::kGreedy;
      t.sample_index = 0;
      t.sampling = SamplingConfig{1, 0.0, 1.0, sampling.seed};
      t.token_logprobs = std::move(c.token_logprobs);
      out.push_back(std::move(t));
    }
  }
  return out;
}

DistillOutput distill_pool(const TrajectoryPool& pool, const InstanceIndex& instances,
                           const SelectionConfig& selection, const TrajectoryScorer* scorer,
                           const std::string& scorer_name, const GroundednessLabeler& labeler) {
  DistillOutput out;
  out.sft = select_sft(pool, instances, selection, scorer);
  out.scorer = scorer ? scorer_name : "none";
  for (SftStrategy s : {SftStrategy::kGreedy, SftStrategy::kBestOfN, SftStrategy::kDiverse}) {
    if (s == selection.strategy) {
      out.strategy_counts[s] = out.sft.stats.emitted;
      continue;
    }
    if (s == SftStrategy::kBestOfN && scorer == nullptr) continue;
    SelectionConfig other = selection;
    other.strategy = s;
    try {
      out.strategy_counts[s] = select_sft(pool, instances, other, scorer).stats.emitted;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingScorer) throw;
    }
  }
  out.epoch_multipliers = epoch_multipliers(out.strategy_counts);
  out.judge = build_judge_dataset(pool, instances, labeler, selection.parse_mode);
  return out;
}

JudgeExampleSplit split_judge_examples(std::span<const JudgeExample> examples,
                                       double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "judge/split"));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(examples.size()) * val_fraction + 1e-9));
  std::vector<bool> is_val(examples.size(), false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;
  JudgeExampleSplit out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (is_val[i] ? out.val : out.train).push_back(examples[i]);
  }
  return out;
}

synth::ToyPolicy warm_start_policy(std::span<const SftExample> sft, const InstanceIndex& instances,
                                   const synth::BehaviorCloningConfig& cfg,
                                   std::vector<double>* loss_history) {
  synth::ToyPolicy policy;
  const auto demos = synth::demonstrations_from_sft(sft, instances);
  auto losses = synth::behavior_clone(policy, demos, cfg);
  if (loss_history) *loss_history = std::move(losses);
  return policy;
}

// ---------------------------------------------------------------------------

DatasetSplit cmd_prepare(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  std::vector<MultimodalInstance> all =
      cfg.dataset ? read_records_as<MultimodalInstance>(*cfg.dataset)
                  : synth::generate_instances(cfg.synth_instances, derive_seed(cfg.seed, "synth"));
  DatasetSplit split = stratified_split(all, cfg.split_ratios, derive_seed(cfg.seed, "split"));
  write_records<MultimodalInstance>(p.instances(), all);
  write_records<MultimodalInstance>(p.split("train"), split.train);
  write_records<MultimodalInstance>(p.split("val"), split.val);
  write_records<MultimodalInstance>(p.split("test"), split.test);

  auto class_counts = [](const std::vector<MultimodalInstance>& v) {
    std::size_t s = 0;
    for (const auto& i : v) s += i.gold_label == Label::kSarcastic ? 1 : 0;
    return ojson{{"total", v.size()}, {"sarcastic", s}, {"non_sarcastic", v.size() - s}};
  };
  ojson body{{"source", cfg.dataset ? "dataset" : "synthetic"},
             {"splits", {{"train", class_counts(split.train)},
                         {"val", class_counts(split.val)},
                         {"test", class_counts(split.test)}}}};
  write_manifest(p.data_manifest(), "prepare", cfg, body,
                 {p.instances(), p.split("train"), p.split("val"), p.split("test")});
  spdlog::info("dataset: {} instances -> train {} / val {} / test {}", all.size(),
               split.train.size(), split.val.size(), split.test.size());
  return split;
}

void cmd_mine(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  const DatasetSplit split = cmd_prepare(cfg);
  const auto backend = make_backend(cfg);

  SamplingConfig sampling = cfg.sampling;
  sampling.seed = derive_seed(cfg.seed, "mine");

  std::filesystem::create_directories(p.pool().parent_path());
  std::set<std::string> done;
  std::vector<std::string> done_order;
  if (std::filesystem::exists(p.mine_ledger())) {
    std::ifstream in(p.mine_ledger());
    std::string id;
    while (std::getline(in, id)) {
      if (!id.empty() && done.insert(id).second) done_order.push_back(id);
    }
  }
  // Keep only pool lines of completed instances; a crash can leave a partial tail.
  std::vector<std::string> kept_lines;
  if (!done.empty() && std::filesystem::exists(p.pool())) {
    std::ifstream in(p.pool(), std::ios::binary);
    std::vector<std::string> raw;
    for (std::string line; std::getline(in, line);) raw.push_back(line);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].empty()) continue;
      Record rec;
      try {
        rec = decode_record(raw[i], i + 1);
      } catch (const Error&) {
        if (i + 1 == raw.size()) break;  // torn final write
        throw;
      }
      const auto* t = std::get_if<Trajectory>(&rec);
      if (!t) throw Error(ErrorCode::kSchemaMismatch, p.pool().string() + ": not a trajectory", i + 1);
      if (done.count(t->instance_id)) kept_lines.push_back(encode_record(*t));
    }
  }
  write_record_lines(p.pool(), kept_lines);
  {
    std::ofstream ledger(p.mine_ledger(), std::ios::binary | std::ios::trunc);
    for (const auto& id : done_order) ledger << id << '\n';
  }

  std::vector<MultimodalInstance> todo;
  for (const auto& inst : split.train) {
    if (!done.count(inst.id)) todo.push_back(inst);
  }
  spdlog::info("mine: {} of {} train instances already complete, {} to fetch", done.size(),
               split.train.size(), todo.size());

  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.backend_cfg.max_parallel_requests));
  for (std::size_t begin = 0; begin < todo.size(); begin += chunk) {
    const std::size_t end = std::min(todo.size(), begin + chunk);
    const std::span<const MultimodalInstance> batch(todo.data() + begin, end - begin);
    std::vector<Trajectory> mined;
    try {
      mined = mine_instances(*backend, batch, sampling, cfg.prompt_template, cfg.include_greedy,
                             cfg.backend_cfg.max_parallel_requests);
    } catch (const Error& e) {
      throw Error(e.code(), "instances " + batch.front().id + ".." + batch.back().id + ": " +
                                e.detail(), e.index());
    }
    std::vector<std::string> lines;
    for (const auto& t : mined) lines.push_back(encode_record(t));
    append_lines(p.pool(), lines);
    std::vector<std::string> ids;
    for (const auto& inst : batch) ids.push_back(inst.id);
    append_lines(p.mine_ledger(), ids);
  }

  const auto pool = read_records_as<Trajectory>(p.pool());
  ojson body{{"template", template_name(cfg.prompt_template)},
             {"backend", backend->name()},
             {"sampling", {{"n", sampling.n},
                           {"temperature", sampling.temperature},
                           {"top_p", sampling.top_p},
                           {"seed", sampling.seed}}},
             {"instances", split.train.size()},
             {"resumed_instances", done.size()},
             {"trajectories", pool.size()}};
  write_manifest(p.mine_manifest(), "mine", cfg, body, {p.pool()});
  spdlog::info("mine: pool holds {} trajectories", pool.size());
}

void cmd_distill(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  const DatasetSplit split = load_split(cfg);
  const InstanceIndex index = index_instances(split.train);
  if (!std::filesystem::exists(p.pool())) {
    throw Error(ErrorCode::kIo, p.pool().string() + " is missing; run `forge mine` first");
  }
  const auto trajectories = read_records_as<Trajectory>(p.pool());
  const TrajectoryPool pool = pool_by_instance(trajectories);

  SelectionConfig selection;
  selection.strategy = cfg.strategy;
  selection.similarity_cap = cfg.similarity_cap;
  selection.k_max = cfg.k_max;
  selection.repetition = cfg.repetition;
  selection.prompt_template = cfg.prompt_template;

  // Best-of-n scorer: a judge when one is available, else mean log-probability.
  bool use_judge = cfg.best_of_n_scorer == ScorerChoice::kJudge;
  if (cfg.best_of_n_scorer == ScorerChoice::kAuto) {
    use_judge = cfg.judge != JudgeKind::kToy || std::filesystem::exists(p.toy_judge());
  }
  JudgeHolder scorer_judge;
  TrajectoryScorer scorer;
  std::string scorer_name;
  if (use_judge) {
    try {
      scorer_judge = make_reward_judge(cfg);
    } catch (const Error& e) {
      throw Error(ErrorCode::kMissingScorer, "best-of-n judge scorer unavailable: " + e.detail());
    }
    scorer = judge_scorer(*scorer_judge.judge);
    scorer_name = "judge:" + scorer_judge.judge->name();
  } else {
    scorer = mean_logprob_scorer();
    scorer_name = "mean_logprob";
  }

  std::unique_ptr<Backend> labeler_backend;
  std::unique_ptr<Judge> labeler_judge;
  GroundednessLabeler labeler = GroundednessLabeler::oracle();
  if (cfg.labeler == LabelerMode::kAnnotationFile) {
    labeler = GroundednessLabeler::load_annotations(*cfg.annotations);
  } else if (cfg.labeler == LabelerMode::kExternalJudge) {
    labeler_backend = make_backend(cfg);
    labeler_judge = std::make_unique<BackendJudge>(*labeler_backend);
    labeler = GroundednessLabeler::external(*labeler_judge);
  }

  const DistillOutput out = distill_pool(pool, index, selection, &scorer, scorer_name, labeler);
  if (cfg.strategy == SftStrategy::kGreedy && out.sft.stats.candidates == 0) {
    spdlog::warn("distill: strategy greedy found no greedy-origin trajectories "
                 "(set mine.include_greedy = true); the SFT set is empty");
  }
  write_records<SftExample>(p.sft(), out.sft.examples);
  write_records<JudgeExample>(p.judge_dataset(), out.judge.examples);

  ojson multipliers = ojson::object();
  for (const auto& [s, m] : out.epoch_multipliers) {
    multipliers[std::string(strategy_name(s))] = {{"examples", out.strategy_counts.at(s)},
                                                  {"epoch_multiplier", m}};
  }
  ojson body{{"strategy", strategy_name(cfg.strategy)},
             {"best_of_n_scorer", out.scorer},
             {"labeler", labeler_mode_name(cfg.labeler)},
             {"pool_size", trajectories.size()},
             {"selection", selection_stats_json(out.sft.stats)},
             {"judge_dataset", judge_stats_json(out.judge.stats)},
             {"strategy_sizes", multipliers}};
  write_manifest(p.distill_manifest(), "distill", cfg, body, {p.sft(), p.judge_dataset()});
  spdlog::info("distill: {} SFT examples ({}), judge dataset {} (+{} / -{})",
               out.sft.examples.size(), strategy_name(cfg.strategy), out.judge.stats.total,
               out.judge.stats.positives, out.judge.stats.negatives);
}

void cmd_judge_train(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  const DatasetSplit split = load_split(cfg);
  const InstanceIndex index = index_instances(all_instances(split));
  if (!std::filesystem::exists(p.judge_dataset())) {
    throw Error(ErrorCode::kIo, p.judge_dataset().string() + " is missing; run `forge distill`");
  }
  const auto examples = read_records_as<JudgeExample>(p.judge_dataset());
  const std::uint64_t seed = derive_seed(cfg.seed, "judge");
  const auto parts = split_judge_examples(examples, cfg.judge_val_fraction, seed);
  const auto result = train_toy_judge(parts.train, index, cfg.judge_hyper, seed, parts.val);
  result.judge.save(p.toy_judge());

  ojson body{{"train_examples", parts.train.size()},
             {"val_examples", parts.val.size()},
             {"final_loss", result.final_loss},
             {"heldout_accuracy", result.heldout_accuracy ? ojson(*result.heldout_accuracy)
                                                          : ojson(nullptr)},
             {"weights", std::vector<double>(result.judge.weights().begin(),
                                             result.judge.weights().end())},
             {"bias", result.judge.bias()}};
  write_manifest(p.judge_manifest(), "judge-train", cfg, body, {p.toy_judge()});
  spdlog::info("judge-train: loss {:.4f}, held-out accuracy {}", result.final_loss,
               result.heldout_accuracy ? std::to_string(*result.heldout_accuracy) : "n/a");
}

void cmd_grpo(const PipelineConfig& cfg, bool resume) {
  const StagePaths p{cfg.output_dir};
  const DatasetSplit split = load_split(cfg);
  const InstanceIndex train_index = index_instances(split.train);

  synth::ToyPolicy policy;
  std::vector<double> bc_losses;
  std::size_t demos = 0;
  if (cfg.warm_start) {
    if (!std::filesystem::exists(p.sft())) {
      throw Error(ErrorCode::kIo, p.sft().string() + " is missing; run `forge distill` or pass --no-sft");
    }
    const auto sft = read_records_as<SftExample>(p.sft());
    demos = synth::demonstrations_from_sft(sft, train_index).actions.size();
    policy = warm_start_policy(sft, train_index, cfg.behavior_cloning, &bc_losses);
  }

  JudgeHolder reward = make_reward_judge(cfg);
  synth::OracleJudge oracle;
  const Judge& probe_judge =
      cfg.probe_judge == ProbeJudgeChoice::kOracle ? static_cast<const Judge&>(oracle) : *reward.judge;

  GrpoConfig grpo = cfg.grpo;
  grpo.seed = derive_seed(cfg.seed, "train");
  TrainingOptions options;
  options.probe_judge = &probe_judge;
  options.gar_threshold = cfg.gar_threshold;
  options.checkpoint_path = p.checkpoint();
  options.reward_trace_path = p.reward_trace();
  if (resume) {
    if (!std::filesystem::exists(p.checkpoint())) {
      throw Error(ErrorCode::kIo, "no checkpoint to resume from at " + p.checkpoint().string());
    }
    options.resume_from = p.checkpoint();
  } else {
    std::filesystem::remove(p.reward_trace());
  }

  const TrainingWorld world{split.train, split.val};
  const TrainingHistory history = run_training(world, policy, *reward.judge, cfg.weights, grpo, options);
  std::filesystem::remove(p.checkpoint());
  policy.save(p.policy());
  write_history(p.history(), history);

  ojson body{{"initialization", cfg.warm_start ? "warm_start" : "cold_start"},
             {"demonstrations", demos},
             {"bc_loss_first", bc_losses.empty() ? ojson(nullptr) : ojson(bc_losses.front())},
             {"bc_loss_last", bc_losses.empty() ? ojson(nullptr) : ojson(bc_losses.back())},
             {"reward_judge", reward.judge->name()},
             {"probe_judge", probe_judge.name()},
             {"effective_weights", {cfg.weights.lambda_a, cfg.weights.lambda_f, cfg.weights.lambda_g}},
             {"steps", history.steps.size()}};
  if (!history.steps.empty()) {
    const auto& last = history.steps.back();
    body["final"] = {{"mean_reward", last.mean_reward}, {"kl", last.kl},
                     {"accuracy", last.accuracy}, {"gar", last.gar}};
  }
  write_manifest(p.grpo_manifest(), "grpo", cfg, body, {p.policy(), p.history()});
  if (!history.steps.empty()) {
    spdlog::info("grpo: {} steps, probe accuracy {:.4f}, GAR {:.4f}", history.steps.size(),
                 history.steps.back().accuracy, history.steps.back().gar);
  }
}

std::vector<std::optional<Label>> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::optional<Label>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string norm = normalize_answer(line);
    if (norm.empty() || norm == "none") {
      out.push_back(std::nullopt);
      continue;
    }
    const auto label = extract_label(line);
    if (!label) throw Error(ErrorCode::kParseError, path.string() + ": unknown label '" + line + "'", line_no);
    out.push_back(label);
  }
  return out;
}

MetricsReport cmd_eval(const PipelineConfig& cfg,
                       const std::optional<std::filesystem::path>& predictions) {
  const StagePaths p{cfg.output_dir};
  const DatasetSplit split = load_split(cfg);
  std::vector<Label> golds;
  for (const auto& inst : split.test) golds.push_back(inst.gold_label);

  MetricsReport report;
  std::vector<std::filesystem::path> outputs;
  std::string source;
  std::filesystem::create_directories(p.eval_dir());
  if (predictions) {
    const auto preds = read_predictions(*predictions);
    report = make_report(preds, golds, std::nullopt);
    source = "predictions_file";
  } else {
    const auto policy = synth::ToyPolicy::load(p.policy());
    std::vector<std::optional<Label>> preds;
    std::vector<std::string> texts;
    std::vector<const MultimodalInstance*> contexts;
    std::vector<Trajectory> decoded;
    for (const auto& inst : split.test) {
      Trajectory t = policy.greedy(inst);
      preds.push_back(parse_trajectory(t.raw_text).predicted);
      texts.push_back(t.raw_text);
      contexts.push_back(&inst);
      decoded.push_back(std::move(t));
    }
    JudgeHolder reward;
    synth::OracleJudge oracle;
    const Judge* judge = &oracle;
    if (cfg.probe_judge == ProbeJudgeChoice::kReward) {
      reward = make_reward_judge(cfg);
      judge = reward.judge.get();
    }
    report = make_report(preds, golds, gar(texts, *judge, cfg.gar_threshold, contexts));
    write_records<Trajectory>(p.eval_dir() / "decoded.jsonl", decoded);
    outputs.push_back(p.eval_dir() / "decoded.jsonl");
    source = "policy";
  }

  const auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(p.eval_dir() / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (p.eval_dir() / name).string());
    out << text;
    outputs.push_back(p.eval_dir() / name);
  };
  write_text("report.txt", report_table(report, "test split"));
  write_text("report.json", report_json(report));
  write_text("confusion.csv", confusion_csv(report));
  write_manifest(p.eval_dir() / "manifest.json", "eval", cfg,
                 ojson{{"source", source}, {"test_instances", split.test.size()}}, outputs);
  return report;
}

std::string cmd_report(const PipelineConfig& cfg) {
  const StagePaths p{cfg.output_dir};
  std::string out;
  char buf[256];
  if (std::filesystem::exists(p.history())) {
    const auto h = read_history(p.history());
    out += "training history (" + std::to_string(h.steps.size()) + " steps)\n";
    out += "step    mean_reward  kl          acc     gar\n";
    std::vector<std::size_t> rows;
    if (!h.steps.empty()) {
      const std::size_t n = h.steps.size();
      for (std::size_t k : {std::size_t{0}, n / 4, n / 2, 3 * n / 4, n - 1}) {
        if (rows.empty() || rows.back() != k) rows.push_back(k);
      }
    }
    for (std::size_t k : rows) {
      const auto& r = h.steps[k];
      std::snprintf(buf, sizeof(buf), "%-7d %-12.4f %-11.6f %-7.4f %-7.4f\n", r.step, r.mean_reward,
                    r.kl, r.accuracy, r.gar);
      out += buf;
    }
    out += "\n";
  }
  const auto report_path = p.eval_dir() / "report.txt";
  if (std::filesystem::exists(report_path)) {
    std::ifstream in(report_path, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    out += text.str();
  }
  if (out.empty()) out = "nothing to report under " + p.root.string() + "\n";
  return out;
}

}  // namespace forge
