#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/types.hpp"

namespace forge {

// Scores a trajectory with P(token = "1" | trajectory). Implementations must
// return values in [0, 1] and be deterministic for a fixed state and input.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual double score(std::string_view trajectory_text,
                       const MultimodalInstance* context) const = 0;
  virtual std::string name() const = 0;
};

// Feature map of the toy judge, in order:
//   0 answered label equals gold                (needs context)
//   1-3 cited cue k matches the instance cue    (needs context with features)
//   4 format flag
//   5 normalized trigram entropy of the text, clamped to [0, 1]
//   6 length bucket: min(floor(log2(1 + tokens)), 7) / 7
// Context-dependent entries are 0 when no context is supplied.
inline constexpr std::size_t kJudgeFeatureCount = 7;
using JudgeFeatures = std::array<double, kJudgeFeatureCount>;

JudgeFeatures judge_features(std::string_view trajectory_text,
                             const MultimodalInstance* context);

struct ToyJudgeHyperparams {
  double learning_rate = 0.5;
  int epochs = 3000;
  double l2 = 1e-4;
};

// Logistic scorer over judge_features: score = sigmoid(w . phi + b).
class ToyJudge : public Judge {
 public:
  ToyJudge() = default;
  ToyJudge(const JudgeFeatures& weights, double bias) : weights_(weights), bias_(bias) {}

  double score(std::string_view trajectory_text,
               const MultimodalInstance* context) const override;
  double score_features(const JudgeFeatures& phi) const;
  std::string name() const override { return "toy"; }

  const JudgeFeatures& weights() const { return weights_; }
  double bias() const { return bias_; }

  void save(const std::filesystem::path& path) const;
  static ToyJudge load(const std::filesystem::path& path);

 private:
  JudgeFeatures weights_{};
  double bias_ = 0.0;
};

struct JudgeTrainingResult {
  ToyJudge judge;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss before each epoch, then final
  std::optional<double> heldout_accuracy;
};

// Deterministic full-batch gradient descent on the L2-regularized logistic
// loss. Throws kSingleClass when the critiques are all equal.
JudgeTrainingResult train_toy_judge(std::span<const JudgeExample> dataset,
                                    const InstanceIndex& instances,
                                    const ToyJudgeHyperparams& hyper, std::uint64_t seed,
                                    std::span<const JudgeExample> validation = {});

// Fraction of examples whose thresholded score matches the critique.
double judge_accuracy(const Judge& judge, std::span<const JudgeExample> examples,
                      const InstanceIndex& instances, double threshold = 0.5);

}  // namespace forge
