#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/judge.hpp"
#include "forge/parser.hpp"
#include "forge/types.hpp"

namespace forge {

struct RewardWeights {
  double lambda_a = 1.0;
  double lambda_f = 0.5;
  double lambda_g = 1.0;

  void validate() const;
  bool operator==(const RewardWeights&) const = default;
};

struct RewardBreakdown {
  int r_acc = 0;
  int r_fmt = 0;
  double r_genrm = 0.0;
  double total = 0.0;
  RewardWeights weights;
};

// G sampled trajectories for one query. members[i].token_logprobs hold the
// log-probabilities under the sampling (old) policy.
struct TrajectoryGroup {
  std::string instance_id;
  std::vector<Trajectory> members;
  std::vector<std::vector<double>> reference_logprobs;
  std::vector<double> rewards;
  std::optional<std::vector<double>> advantages;
};

// Indicator of predicted == gold; an absent prediction scores 0.
int accuracy_reward(const ParsedTrajectory& parsed, Label gold);

// lambda_a * r_acc + lambda_f * r_fmt + lambda_g * r_genrm, unclipped.
// Throws kOutOfRange when r_genrm is outside [0, 1].
double total_reward(double r_acc, double r_fmt, double r_genrm, const RewardWeights& weights);

RewardBreakdown score_trajectory(std::string_view raw_text, Label gold, const Judge& judge,
                                 const RewardWeights& weights,
                                 const MultimodalInstance* context = nullptr,
                                 ParseMode mode = ParseMode::kStrict);

// Order-preserving breakdowns for every member. A judge failure is rethrown
// as kJudgeFailure carrying the member index; no partial result is returned.
std::vector<RewardBreakdown> score_group(const TrajectoryGroup& group, Label gold,
                                         const Judge& judge, const RewardWeights& weights,
                                         const MultimodalInstance* context = nullptr,
                                         ParseMode mode = ParseMode::kStrict);

// Appends one JSON line per breakdown to a run log.
class RewardTraceWriter {
 public:
  explicit RewardTraceWriter(const std::filesystem::path& path);
  void append(std::size_t step, std::string_view instance_id, std::size_t member,
              const RewardBreakdown& breakdown);

 private:
  std::ofstream out_;
};

}  // namespace forge
