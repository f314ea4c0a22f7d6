#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/filters.hpp"
#include "forge/judge.hpp"
#include "forge/parser.hpp"
#include "forge/types.hpp"

namespace forge {

enum class PromptTemplate { kThinking, kInstruct };

std::string_view template_name(PromptTemplate id);
// "thinking" / "instruct"; throws kUnknownTemplate otherwise.
PromptTemplate template_from_name(std::string_view name);

// Locator lines are emitted only for media the instance actually has.
std::string render_prompt(const MultimodalInstance& instance, PromptTemplate id);
std::string render_prompt(const MultimodalInstance& instance, std::string_view template_id);

// Trajectories grouped by instance id; iteration order is instance-id order.
using TrajectoryPool = std::map<std::string, std::vector<Trajectory>, std::less<>>;

TrajectoryPool pool_by_instance(std::span<const Trajectory> trajectories);

// Higher is better.
using TrajectoryScorer = std::function<double(const Trajectory&, const MultimodalInstance&)>;

// The judge must outlive the scorer.
TrajectoryScorer judge_scorer(const Judge& judge);
// Mean token log-probability; throws kMissingScorer for a trajectory without
// log-probabilities.
TrajectoryScorer mean_logprob_scorer();

// Jaccard similarity of the sets of whitespace-token trigrams. Two texts that
// both have fewer than three tokens are identical by convention (1.0).
double trigram_jaccard(std::string_view a, std::string_view b);

struct SelectionConfig {
  SftStrategy strategy = SftStrategy::kDiverse;
  double similarity_cap = 0.8;
  int k_max = 4;
  RepetitionConfig repetition;
  PromptTemplate prompt_template = PromptTemplate::kThinking;
  ParseMode parse_mode = ParseMode::kStrict;
};

struct SelectionStats {
  std::size_t instances = 0;
  std::size_t candidates = 0;  // trajectories eligible for the strategy
  std::size_t admitted = 0;    // passed golden_admit
  std::size_t rejected_consistency = 0;
  std::size_t rejected_format = 0;
  std::size_t rejected_repetition = 0;
  std::size_t dropped_similarity = 0;
  std::size_t dropped_k_max = 0;
  std::size_t emitted = 0;
  std::size_t instances_without_output = 0;
};

struct SelectionResult {
  std::vector<SftExample> examples;
  SelectionStats stats;
};

// GREEDY looks only at GREEDY-origin trajectories; the other strategies look
// at sampled ones. Throws kMissingScorer for BEST_OF_N without a scorer.
SelectionResult select_sft(const TrajectoryPool& pool, const InstanceIndex& instances,
                           const SelectionConfig& cfg, const TrajectoryScorer* scorer = nullptr);

// Multiplier per strategy that equalizes total updates against the largest
// dataset: max_count / count (0 for an empty dataset).
std::map<SftStrategy, double> epoch_multipliers(const std::map<SftStrategy, std::size_t>& counts);

enum class LabelerMode { kOracle, kAnnotationFile, kExternalJudge };

std::string_view labeler_mode_name(LabelerMode mode);

// Decides whether a correct-answer trajectory is grounded in the instance.
class GroundednessLabeler {
 public:
  // Synthetic-world oracle; reasoning outside the grammar counts as ungrounded.
  static GroundednessLabeler oracle();
  // Keys are trajectory_key() strings, values 1 (grounded) or 0.
  static GroundednessLabeler annotations(std::map<std::string, int, std::less<>> labels);
  // Tab-separated "<trajectory key>\t<0|1>" lines, '#' comments.
  static GroundednessLabeler load_annotations(const std::filesystem::path& path);
  // Grounded iff judge score >= threshold. The judge must outlive the labeler.
  static GroundednessLabeler external(const Judge& judge, double threshold = 0.5);

  LabelerMode mode() const { return mode_; }

  // Throws kLabelerGap when no decision is available for the trajectory.
  bool grounded(const Trajectory& trajectory, const MultimodalInstance& instance,
                const ParsedTrajectory& parsed) const;

 private:
  LabelerMode mode_ = LabelerMode::kOracle;
  std::map<std::string, int, std::less<>> labels_;
  const Judge* judge_ = nullptr;
  double threshold_ = 0.5;
};

struct JudgeDatasetStats {
  std::size_t total = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t wrong_answer = 0;
  std::size_t hallucinated = 0;
  std::size_t malformed = 0;

  double positive_fraction() const {
    return total ? static_cast<double>(positives) / static_cast<double>(total) : 0.0;
  }
};

struct JudgeDatasetResult {
  std::vector<JudgeExample> examples;
  JudgeDatasetStats stats;
};

// One example per pool trajectory: MALFORMED, then WRONG_ANSWER, then the
// labeler's groundedness verdict.
JudgeDatasetResult build_judge_dataset(const TrajectoryPool& pool, const InstanceIndex& instances,
                                       const GroundednessLabeler& labeler,
                                       ParseMode mode = ParseMode::kStrict);

}  // namespace forge
