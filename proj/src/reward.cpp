#include "forge/reward.hpp"

#include <cmath>

#include "json.hpp"

#include "forge/error.hpp"

namespace forge {

void RewardWeights::validate() const {
  for (double w : {lambda_a, lambda_f, lambda_g}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "reward weights must be finite and nonnegative");
    }
  }
}

int accuracy_reward(const ParsedTrajectory& parsed, Label gold) {
  return parsed.predicted && *parsed.predicted == gold ? 1 : 0;
}

double total_reward(double r_acc, double r_fmt, double r_genrm, const RewardWeights& weights) {
  if (!(r_genrm >= 0.0 && r_genrm <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange,
                "judge reward " + std::to_string(r_genrm) + " is outside [0, 1]");
  }
  return weights.lambda_a * r_acc + weights.lambda_f * r_fmt + weights.lambda_g * r_genrm;
}

RewardBreakdown score_trajectory(std::string_view raw_text, Label gold, const Judge& judge,
                                 const RewardWeights& weights,
                                 const MultimodalInstance* context, ParseMode mode) {
  const ParsedTrajectory parsed = parse_trajectory(raw_text, mode);
  RewardBreakdown b;
  b.weights = weights;
  b.r_acc = accuracy_reward(parsed, gold);
  b.r_fmt = format_reward(parsed);
  b.r_genrm = judge.score(raw_text, context);
  b.total = total_reward(b.r_acc, b.r_fmt, b.r_genrm, weights);
  return b;
}

std::vector<RewardBreakdown> score_group(const TrajectoryGroup& group, Label gold,
                                         const Judge& judge, const RewardWeights& weights,
                                         const MultimodalInstance* context, ParseMode mode) {
  if (group.members.size() < 2) {
    throw Error(ErrorCode::kGroupTooSmall, "a scored group needs at least two members");
  }
  std::vector<RewardBreakdown> out;
  out.reserve(group.members.size());
  for (std::size_t i = 0; i < group.members.size(); ++i) {
    try {
      out.push_back(score_trajectory(group.members[i].raw_text, gold, judge, weights, context, mode));
    } catch (const Error& e) {
      throw Error(ErrorCode::kJudgeFailure,
                  "scoring member " + std::to_string(i) + " of group '" + group.instance_id +
                      "' failed: " + e.what(),
                  i);
    }
  }
  return out;
}

RewardTraceWriter::RewardTraceWriter(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::kIo, "cannot open reward trace " + path.string());
}

void RewardTraceWriter::append(std::size_t step, std::string_view instance_id,
                               std::size_t member, const RewardBreakdown& b) {
  nlohmann::json line{{"step", step},
                      {"instance_id", instance_id},
                      {"member", member},
                      {"r_acc", b.r_acc},
                      {"r_fmt", b.r_fmt},
                      {"r_genrm", b.r_genrm},
                      {"total", b.total},
                      {"weights", {b.weights.lambda_a, b.weights.lambda_f, b.weights.lambda_g}}};
  out_ << line.dump() << '\n';
}

}  // namespace forge
