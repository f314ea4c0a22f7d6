#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/backend.hpp"
#include "forge/config.hpp"
#include "forge/distill.hpp"
#include "forge/grpo.hpp"
#include "forge/metrics.hpp"
#include "forge/synth.hpp"
#include "forge/types.hpp"

namespace forge {

// Output layout under PipelineConfig::output_dir.
struct StagePaths {
  std::filesystem::path root;

  std::filesystem::path instances() const { return root / "data" / "instances.jsonl"; }
  std::filesystem::path split(std::string_view name) const {
    return root / "data" / (std::string(name) + ".jsonl");
  }
  std::filesystem::path data_manifest() const { return root / "data" / "manifest.json"; }
  std::filesystem::path pool() const { return root / "mine" / "pool.jsonl"; }
  std::filesystem::path mine_ledger() const { return root / "mine" / "completed_ids.txt"; }
  std::filesystem::path mine_manifest() const { return root / "mine" / "manifest.json"; }
  std::filesystem::path sft() const { return root / "distill" / "sft.jsonl"; }
  std::filesystem::path judge_dataset() const { return root / "distill" / "judge.jsonl"; }
  std::filesystem::path distill_manifest() const { return root / "distill" / "manifest.json"; }
  std::filesystem::path toy_judge() const { return root / "judge" / "toy_judge.json"; }
  std::filesystem::path judge_manifest() const { return root / "judge" / "manifest.json"; }
  std::filesystem::path policy() const { return root / "grpo" / "policy.json"; }
  std::filesystem::path history() const { return root / "grpo" / "history.tsv"; }
  std::filesystem::path checkpoint() const { return root / "grpo" / "checkpoint.json"; }
  std::filesystem::path reward_trace() const { return root / "grpo" / "reward_trace.jsonl"; }
  std::filesystem::path grpo_manifest() const { return root / "grpo" / "manifest.json"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
};

// Exclusive claim on an output directory for the lifetime of the object.
// Throws kLocked when another command holds it.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// In-memory stages shared by the commands and the test suites.

// n sampled trajectories per instance (plus one greedy when requested), in
// instance order.
std::vector<Trajectory> mine_instances(const Backend& backend,
                                       std::span<const MultimodalInstance> instances,
                                       const SamplingConfig& sampling, PromptTemplate prompt,
                                       bool include_greedy, int max_parallel = 1);

struct DistillOutput {
  SelectionResult sft;
  JudgeDatasetResult judge;
  std::string scorer;  // name of the best-of-n scorer, or "none"
  std::map<SftStrategy, std::size_t> strategy_counts;
  std::map<SftStrategy, double> epoch_multipliers;
};

DistillOutput distill_pool(const TrajectoryPool& pool, const InstanceIndex& instances,
                           const SelectionConfig& selection, const TrajectoryScorer* scorer,
                           const std::string& scorer_name, const GroundednessLabeler& labeler);

struct JudgeExampleSplit {
  std::vector<JudgeExample> train;
  std::vector<JudgeExample> val;
};

// Seeded shuffle, then the first floor(n * val_fraction) examples go to val.
JudgeExampleSplit split_judge_examples(std::span<const JudgeExample> examples,
                                       double val_fraction, std::uint64_t seed);

// Behavior-cloned toy policy from SFT targets; the zero policy when none parse.
synth::ToyPolicy warm_start_policy(std::span<const SftExample> sft, const InstanceIndex& instances,
                                   const synth::BehaviorCloningConfig& cfg,
                                   std::vector<double>* loss_history = nullptr);

// ---------------------------------------------------------------------------
// Commands. Each writes its outputs and a manifest under cfg.output_dir.

// Loads or generates the instances and writes the stratified split.
DatasetSplit cmd_prepare(const PipelineConfig& cfg);
void cmd_mine(const PipelineConfig& cfg);
void cmd_distill(const PipelineConfig& cfg);
void cmd_judge_train(const PipelineConfig& cfg);
void cmd_grpo(const PipelineConfig& cfg, bool resume = false);
// Greedy decoding of the trained policy on the test split, or scoring of a
// predictions file (one label per line, aligned with the test split).
MetricsReport cmd_eval(const PipelineConfig& cfg,
                       const std::optional<std::filesystem::path>& predictions = std::nullopt);
std::string cmd_report(const PipelineConfig& cfg);

// One label per line: canonical names or synonyms; blank or "none" is absent.
std::vector<std::optional<Label>> read_predictions(const std::filesystem::path& path);

}  // namespace forge
