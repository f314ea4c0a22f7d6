#include "forge/types.hpp"

#include <cmath>

#include "forge/error.hpp"

namespace forge {

std::string_view label_name(Label label) {
  return label == Label::kSarcastic ? "sarcastic" : "non-sarcastic";
}

std::optional<Label> label_from_canonical(std::string_view text) {
  if (text == "sarcastic") return Label::kSarcastic;
  if (text == "non-sarcastic") return Label::kNonSarcastic;
  return std::nullopt;
}

void SamplingConfig::validate() const {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "sampling.n must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "sampling.temperature must be > 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sampling.top_p must be in (0, 1]");
  }
}

std::string_view origin_name(TrajectoryOrigin origin) {
  switch (origin) {
    case TrajectoryOrigin::kTeacherSampled: return "teacher_sampled";
    case TrajectoryOrigin::kGreedy: return "greedy";
    case TrajectoryOrigin::kPolicy: return "policy";
  }
  return "teacher_sampled";
}

std::optional<TrajectoryOrigin> origin_from_name(std::string_view text) {
  if (text == "teacher_sampled") return TrajectoryOrigin::kTeacherSampled;
  if (text == "greedy") return TrajectoryOrigin::kGreedy;
  if (text == "policy") return TrajectoryOrigin::kPolicy;
  return std::nullopt;
}

std::string trajectory_key(const Trajectory& t) {
  std::string key = t.instance_id;
  key += ':';
  key += origin_name(t.origin);
  key += ':';
  key += std::to_string(t.sample_index);
  return key;
}

std::string_view strategy_name(SftStrategy strategy) {
  switch (strategy) {
    case SftStrategy::kGreedy: return "greedy";
    case SftStrategy::kBestOfN: return "best-of-n";
    case SftStrategy::kDiverse: return "diverse";
  }
  return "diverse";
}

std::optional<SftStrategy> strategy_from_name(std::string_view text) {
  if (text == "greedy") return SftStrategy::kGreedy;
  if (text == "best-of-n") return SftStrategy::kBestOfN;
  if (text == "diverse") return SftStrategy::kDiverse;
  return std::nullopt;
}

std::string_view failure_kind_name(FailureKind kind) {
  switch (kind) {
    case FailureKind::kNone: return "none";
    case FailureKind::kWrongAnswer: return "wrong_answer";
    case FailureKind::kHallucinatedEvidence: return "hallucinated_evidence";
    case FailureKind::kMalformed: return "malformed";
  }
  return "malformed";
}

std::optional<FailureKind> failure_kind_from_name(std::string_view text) {
  if (text == "none") return FailureKind::kNone;
  if (text == "wrong_answer") return FailureKind::kWrongAnswer;
  if (text == "hallucinated_evidence") return FailureKind::kHallucinatedEvidence;
  if (text == "malformed") return FailureKind::kMalformed;
  return std::nullopt;
}

InstanceIndex index_instances(std::span<const MultimodalInstance> instances) {
  InstanceIndex index;
  for (const auto& inst : instances) {
    if (!index.emplace(inst.id, inst).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate instance id '" + inst.id + "'");
    }
  }
  return index;
}

const MultimodalInstance& lookup_instance(const InstanceIndex& index, std::string_view id) {
  auto it = index.find(id);
  if (it == index.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown instance id '" + std::string(id) + "'");
  }
  return it->second;
}

}  // namespace forge
