#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "forge/judge.hpp"
#include "forge/policy.hpp"
#include "forge/reward.hpp"
#include "forge/types.hpp"

namespace forge {

struct GrpoConfig {
  int group_size = 8;
  double learning_rate = 1e-5;
  double kl_beta = 0.01;
  // std::numeric_limits<double>::infinity() disables ratio clipping.
  double clip_epsilon = 0.2;
  int epochs = 2;
  double std_epsilon = 1e-8;
  std::uint64_t seed = 0;

  // Instances per optimizer step; 0 uses the whole training set.
  int batch_instances = 8;
  // Hard cap on optimizer steps; 0 means epochs * ceil(train / batch).
  int max_steps = 0;
  // Gradient steps taken on each sampled batch. 1 keeps the ratio at 1.
  int updates_per_batch = 1;
  // Probe metrics are recorded every this many steps (and at the last step).
  int probe_every = 1;

  void validate() const;
};

// (R_i - mean) / (popstd + std_epsilon); all zeros when popstd is exactly 0.
// Throws kGroupTooSmall for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon = 1e-8);

// Mean over tokens of r - log r - 1 with r = exp(ref - cur).
// Throws kLengthMismatch when the sequences differ in length.
double kl_estimate(std::span<const double> logp_current, std::span<const double> logp_reference);

struct SurrogateStats {
  double objective = 0.0;
  double kl = 0.0;           // mean k3 over groups, members and tokens
  double clip_fraction = 0.0;
  std::size_t tokens = 0;
};

// Surrogate value at the policy's current parameters. members[i].token_logprobs
// are the old (sampling) log-probabilities; reference_logprobs must be filled;
// advantages are computed from rewards when unset.
SurrogateStats grpo_objective(const Policy& policy, std::span<const TrajectoryGroup> groups,
                              const InstanceIndex& instances, const GrpoConfig& cfg);

// Analytic gradient of grpo_objective with respect to the policy parameters.
std::vector<double> grpo_gradient(const Policy& policy, std::span<const TrajectoryGroup> groups,
                                  const InstanceIndex& instances, const GrpoConfig& cfg,
                                  SurrogateStats* stats = nullptr);

// Fills reference_logprobs for every member from the frozen reference policy.
void attach_reference_logprobs(std::span<TrajectoryGroup> groups, const Policy& reference,
                               const InstanceIndex& instances);

struct StepStats {
  double objective = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// One full-batch ascent step of size cfg.learning_rate. Missing reference
// log-probabilities are computed from `reference`. Throws kNonfiniteGradient
// (parameters untouched) if any gradient entry is NaN or infinite.
StepStats grpo_step(Policy& policy, const Policy& reference, std::span<TrajectoryGroup> groups,
                    const InstanceIndex& instances, const GrpoConfig& cfg);

struct StepRecord {
  int step = 0;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double kl = 0.0;
  double objective = 0.0;
  double accuracy = 0.0;
  double gar = 0.0;

  bool operator==(const StepRecord&) const = default;
};

struct TrainingHistory {
  std::vector<StepRecord> steps;
  bool operator==(const TrainingHistory&) const = default;
};

// Columnar text: header then one tab-separated row per step, %.17g numbers.
std::string history_tsv(const TrainingHistory& history);
void write_history(const std::filesystem::path& path, const TrainingHistory& history);
TrainingHistory read_history(const std::filesystem::path& path);

struct TrainingWorld {
  std::vector<MultimodalInstance> train;
  std::vector<MultimodalInstance> probe;
};

struct TrainingOptions {
  // Scores greedy probe trajectories for GAR; nullptr uses the reward judge.
  const Judge* probe_judge = nullptr;
  double gar_threshold = 0.5;
  // Written when a step fails so the run can resume from it.
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> resume_from;
  std::optional<std::filesystem::path> reward_trace_path;
};

struct ProbeResult {
  double accuracy = 0.0;
  double gar = 0.0;
};

// Greedy decoding on every probe instance; accuracy against gold labels and
// GAR under the given judge.
ProbeResult probe_policy(const Policy& policy, std::span<const MultimodalInstance> probe,
                         const Judge& judge, double gar_threshold = 0.5);

// The reference policy is a snapshot of `policy` taken at the start of the run.
TrainingHistory run_training(const TrainingWorld& world, Policy& policy, const Judge& judge,
                             const RewardWeights& weights, const GrpoConfig& cfg,
                             const TrainingOptions& options = {});

}  // namespace forge
