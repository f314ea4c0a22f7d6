#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class Label { kSarcastic, kNonSarcastic };

// Canonical serialized forms: "sarcastic" / "non-sarcastic".
std::string_view label_name(Label label);
// Accepts only the canonical strings; synonyms belong to the parser.
std::optional<Label> label_from_canonical(std::string_view text);

struct SamplingConfig {
  int n = 8;
  double temperature = 0.6;
  double top_p = 0.95;
  std::uint64_t seed = 0;

  // Throws kInvalidArgument unless n >= 1, temperature > 0, top_p in (0, 1].
  void validate() const;
  bool operator==(const SamplingConfig&) const = default;
};

// One labeled example x = (v, a, t) plus its gold label. Media are opaque
// locators; the pipeline never decodes them.
struct MultimodalInstance {
  std::string id;
  std::string transcript;
  std::optional<std::string> audio_ref;
  std::optional<std::string> video_ref;
  std::optional<std::vector<double>> features;
  Label gold_label = Label::kNonSarcastic;

  bool operator==(const MultimodalInstance&) const = default;
};

enum class TrajectoryOrigin { kTeacherSampled, kGreedy, kPolicy };

std::string_view origin_name(TrajectoryOrigin origin);
std::optional<TrajectoryOrigin> origin_from_name(std::string_view text);

struct Trajectory {
  std::string instance_id;
  std::string raw_text;
  TrajectoryOrigin origin = TrajectoryOrigin::kTeacherSampled;
  int sample_index = 0;
  SamplingConfig sampling;
  std::optional<std::vector<double>> token_logprobs;

  bool operator==(const Trajectory&) const = default;
};

// Stable key used by annotation files and audit logs:
// "<instance_id>:<origin>:<sample_index>".
std::string trajectory_key(const Trajectory& t);

enum class SftStrategy { kGreedy, kBestOfN, kDiverse };

std::string_view strategy_name(SftStrategy strategy);
std::optional<SftStrategy> strategy_from_name(std::string_view text);

struct SftExample {
  std::string instance_id;
  std::string prompt;
  std::string target;
  SftStrategy strategy_tag = SftStrategy::kDiverse;

  bool operator==(const SftExample&) const = default;
};

enum class FailureKind { kNone, kWrongAnswer, kHallucinatedEvidence, kMalformed };

std::string_view failure_kind_name(FailureKind kind);
std::optional<FailureKind> failure_kind_from_name(std::string_view text);

struct JudgeExample {
  std::string instance_id;
  std::string trajectory_text;
  int critique = 0;
  FailureKind failure_kind = FailureKind::kMalformed;

  bool operator==(const JudgeExample&) const = default;
};

struct DatasetSplit {
  std::vector<MultimodalInstance> train;
  std::vector<MultimodalInstance> val;
  std::vector<MultimodalInstance> test;
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::uint64_t seed = 0;
};

using InstanceIndex = std::map<std::string, MultimodalInstance, std::less<>>;

// Throws kInvalidArgument on duplicate ids.
InstanceIndex index_instances(std::span<const MultimodalInstance> instances);

// Throws kInvalidArgument when the id is unknown.
const MultimodalInstance& lookup_instance(const InstanceIndex& index, std::string_view id);

}  // namespace forge
