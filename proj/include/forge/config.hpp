#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "forge/backend.hpp"
#include "forge/distill.hpp"
#include "forge/filters.hpp"
#include "forge/grpo.hpp"
#include "forge/judge.hpp"
#include "forge/reward.hpp"
#include "forge/synth.hpp"
#include "forge/types.hpp"

namespace forge {

inline constexpr std::string_view kCodeVersion = "sarcasm-forge 0.1.0";

enum class BackendKind { kMock, kHttp };
enum class JudgeKind { kToy, kOracle, kExternal };
enum class ScorerChoice { kAuto, kJudge, kLogprob };
enum class ProbeJudgeChoice { kOracle, kReward };

struct PipelineConfig {
  // [run]
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "forge-out";
  BackendKind backend = BackendKind::kMock;

  // [data]
  std::optional<std::filesystem::path> dataset;  // instance records; synthetic when unset
  std::size_t synth_instances = 500;
  std::array<double, 3> split_ratios{0.7, 0.15, 0.15};

  // [sampling] / [mine]
  SamplingConfig sampling;
  PromptTemplate prompt_template = PromptTemplate::kThinking;
  bool include_greedy = false;

  // [filters]
  RepetitionConfig repetition;

  // [distill]
  SftStrategy strategy = SftStrategy::kDiverse;
  double similarity_cap = 0.8;
  int k_max = 4;
  ScorerChoice best_of_n_scorer = ScorerChoice::kAuto;
  LabelerMode labeler = LabelerMode::kOracle;
  std::optional<std::filesystem::path> annotations;

  // [judge]
  JudgeKind judge = JudgeKind::kToy;
  ToyJudgeHyperparams judge_hyper;
  double judge_val_fraction = 0.2;

  // [reward]
  RewardWeights weights;

  // [grpo]
  GrpoConfig grpo;
  bool warm_start = true;
  synth::BehaviorCloningConfig behavior_cloning;

  // [eval]
  ProbeJudgeChoice probe_judge = ProbeJudgeChoice::kOracle;
  double gar_threshold = 0.5;

  // [backend]
  BackendConfig backend_cfg;

  void validate() const;
};

// Flat sectioned key = value file. Unknown sections or keys, and values that
// do not parse, are kConfig errors.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config_text(const std::string& text);

// Applies one "section.key" = value assignment (used by the loader and tests).
void set_config_value(PipelineConfig& cfg, const std::string& dotted_key, const std::string& value);

// Every key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> effective_config(const PipelineConfig& cfg);

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};
std::vector<ConfigKeyDoc> config_reference();

std::string_view backend_kind_name(BackendKind kind);
std::string_view judge_kind_name(JudgeKind kind);

}  // namespace forge
