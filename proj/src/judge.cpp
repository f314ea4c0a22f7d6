#include "forge/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "forge/error.hpp"
#include "forge/filters.hpp"
#include "forge/parser.hpp"
#include "forge/rng.hpp"
#include "forge/synth.hpp"

namespace forge {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Design {
  std::vector<JudgeFeatures> rows;
  std::vector<double> targets;
};

Design build_design(std::span<const JudgeExample> examples, const InstanceIndex& instances) {
  Design d;
  d.rows.reserve(examples.size());
  d.targets.reserve(examples.size());
  for (const auto& ex : examples) {
    const MultimodalInstance* ctx = nullptr;
    if (auto it = instances.find(ex.instance_id); it != instances.end()) ctx = &it->second;
    d.rows.push_back(judge_features(ex.trajectory_text, ctx));
    d.targets.push_back(static_cast<double>(ex.critique));
  }
  return d;
}

}  // namespace

JudgeFeatures judge_features(std::string_view trajectory_text,
                             const MultimodalInstance* context) {
  JudgeFeatures phi{};
  const ParsedTrajectory parsed = parse_trajectory(trajectory_text);
  if (context != nullptr) {
    phi[0] = parsed.predicted && *parsed.predicted == context->gold_label ? 1.0 : 0.0;
    const auto cues = synth::instance_cues(*context);
    const auto claims = parsed.think ? synth::parse_claims(*parsed.think) : std::nullopt;
    if (cues && claims) {
      for (std::size_t k = 0; k < synth::kNumCues; ++k) {
        phi[1 + k] = synth::claim_value((*claims)[k]) == (*cues)[k] ? 1.0 : 0.0;
      }
    }
  }
  phi[4] = parsed.format_ok ? 1.0 : 0.0;
  const auto stats = repetition_stats(trajectory_text, 3);
  phi[5] = std::clamp(stats.normalized_entropy, 0.0, 1.0);
  const double bucket = std::floor(std::log2(1.0 + static_cast<double>(stats.tokens)));
  phi[6] = std::min(bucket, 7.0) / 7.0;
  return phi;
}

double ToyJudge::score_features(const JudgeFeatures& phi) const {
  double z = bias_;
  for (std::size_t i = 0; i < kJudgeFeatureCount; ++i) z += weights_[i] * phi[i];
  return sigmoid(z);
}

double ToyJudge::score(std::string_view trajectory_text,
                       const MultimodalInstance* context) const {
  return score_features(judge_features(trajectory_text, context));
}

void ToyJudge::save(const std::filesystem::path& path) const {
  nlohmann::json doc{{"kind", "toy_judge"},
                     {"weights", std::vector<double>(weights_.begin(), weights_.end())},
                     {"bias", bias_}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

ToyJudge ToyJudge::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "toy_judge") {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + " is not a toy judge file");
  }
  const auto w = doc.at("weights").get<std::vector<double>>();
  if (w.size() != kJudgeFeatureCount) {
    throw Error(ErrorCode::kSchemaMismatch, "toy judge weight count mismatch");
  }
  JudgeFeatures weights{};
  std::copy(w.begin(), w.end(), weights.begin());
  return ToyJudge(weights, doc.at("bias").get<double>());
}

JudgeTrainingResult train_toy_judge(std::span<const JudgeExample> dataset,
                                    const InstanceIndex& instances,
                                    const ToyJudgeHyperparams& hyper, std::uint64_t seed,
                                    std::span<const JudgeExample> validation) {
  const bool has_positive = std::any_of(dataset.begin(), dataset.end(),
                                        [](const JudgeExample& e) { return e.critique == 1; });
  const bool has_negative = std::any_of(dataset.begin(), dataset.end(),
                                        [](const JudgeExample& e) { return e.critique == 0; });
  if (!has_positive || !has_negative) {
    throw Error(ErrorCode::kSingleClass, "judge dataset needs both critique values");
  }

  const Design design = build_design(dataset, instances);
  const double inv_n = 1.0 / static_cast<double>(design.rows.size());

  // Small seeded initialization; the loss is convex so the seed only moves
  // the starting point.
  Rng rng(derive_seed(seed, "judge/init"));
  JudgeFeatures w{};
  for (auto& v : w) v = (rng.uniform() - 0.5) * 0.02;
  double b = 0.0;

  auto loss_at = [&](const JudgeFeatures& weights, double bias) {
    double loss = 0.0;
    for (std::size_t i = 0; i < design.rows.size(); ++i) {
      double z = bias;
      for (std::size_t k = 0; k < kJudgeFeatureCount; ++k) z += weights[k] * design.rows[i][k];
      // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
      loss += (softplus(z) - design.targets[i] * z) * inv_n;
    }
    double reg = 0.0;
    for (double v : weights) reg += v * v;
    return loss + 0.5 * hyper.l2 * reg;
  };

  JudgeTrainingResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    result.loss_history.push_back(loss_at(w, b));
    JudgeFeatures gw{};
    double gb = 0.0;
    for (std::size_t i = 0; i < design.rows.size(); ++i) {
      double z = b;
      for (std::size_t k = 0; k < kJudgeFeatureCount; ++k) z += w[k] * design.rows[i][k];
      const double residual = (sigmoid(z) - design.targets[i]) * inv_n;
      for (std::size_t k = 0; k < kJudgeFeatureCount; ++k) gw[k] += residual * design.rows[i][k];
      gb += residual;
    }
    for (std::size_t k = 0; k < kJudgeFeatureCount; ++k) {
      w[k] -= hyper.learning_rate * (gw[k] + hyper.l2 * w[k]);
    }
    b -= hyper.learning_rate * gb;
  }
  result.final_loss = loss_at(w, b);
  result.loss_history.push_back(result.final_loss);
  result.judge = ToyJudge(w, b);
  if (!validation.empty()) {
    result.heldout_accuracy = judge_accuracy(result.judge, validation, instances);
  }
  return result;
}

double judge_accuracy(const Judge& judge, std::span<const JudgeExample> examples,
                      const InstanceIndex& instances, double threshold) {
  if (examples.empty()) throw Error(ErrorCode::kEmptySet, "no examples to evaluate");
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    const MultimodalInstance* ctx = nullptr;
    if (auto it = instances.find(ex.instance_id); it != instances.end()) ctx = &it->second;
    const int predicted = judge.score(ex.trajectory_text, ctx) >= threshold ? 1 : 0;
    if (predicted == ex.critique) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace forge
