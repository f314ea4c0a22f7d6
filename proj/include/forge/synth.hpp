#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/judge.hpp"
#include "forge/parser.hpp"
#include "forge/policy.hpp"
#include "forge/rng.hpp"
#include "forge/types.hpp"

// Synthetic sarcasm world: three ternary cues per instance, a fixed labeling
// rule, a templated reasoning grammar, and a differentiable toy policy over
// that grammar.
namespace forge::synth {

inline constexpr std::string_view kWorldRuleVersion = "sarcasm-world/1";

inline constexpr std::size_t kNumCues = 3;
enum Cue : std::size_t { kTextSentiment = 0, kProsodyExaggeration = 1, kFacialPositivity = 2 };

using CueValues = std::array<int, kNumCues>;  // each in {-1, 0, +1}

// What a trajectory claims about one cue. kFabricated never matches a real
// cue value.
enum class Claim : int { kNegative = 0, kNeutral = 1, kPositive = 2, kFabricated = 3 };
inline constexpr std::size_t kNumClaims = 4;

Claim claim_for_value(int value);
// -1, 0, +1; nullopt for kFabricated.
std::optional<int> claim_value(Claim claim);

struct Actions {
  std::array<Claim, kNumCues> claims{Claim::kNeutral, Claim::kNeutral, Claim::kNeutral};
  Label label = Label::kNonSarcastic;

  bool operator==(const Actions&) const = default;
};

// SARCASTIC iff text is positive and prosody or face is negative.
Label world_rule(const CueValues& cues);

// Cue values stored in an instance's feature vector; nullopt unless the
// instance carries exactly three ternary features.
std::optional<CueValues> instance_cues(const MultimodalInstance& instance);

std::vector<MultimodalInstance> generate_instances(std::size_t count, std::uint64_t seed);

std::string render_think(const Actions& actions);
std::string render_trajectory(const Actions& actions);

// Parses the claim sentences of a think body; nullopt when the text is not
// in the grammar.
std::optional<std::array<Claim, kNumCues>> parse_claims(std::string_view think);
// Full action recovery: grammatical think plus an extracted label.
std::optional<Actions> parse_actions(const ParsedTrajectory& parsed);
std::optional<Actions> parse_actions(std::string_view raw_text);

// 1.0 iff every cited claim equals the instance's cue and the answered label
// follows the world rule applied to the cited cues. Throws kUngrammatical if
// the think text is outside the grammar, kInvalidArgument if the instance has
// no cue features.
double oracle_judge(const MultimodalInstance& instance, const ParsedTrajectory& parsed);

class OracleJudge : public Judge {
 public:
  // Out-of-grammar text scores 0.
  double score(std::string_view trajectory_text,
               const MultimodalInstance* context) const override;
  std::string name() const override { return "oracle"; }
};

// Replaces exactly one grounded claim with a contradicting one (another real
// value or a fabrication). The answer is unchanged.
Trajectory inject_hallucination(const Trajectory& trajectory,
                                const MultimodalInstance& instance, Rng& rng);

// ---------------------------------------------------------------------------
// Teacher simulation used by the mock backend.

// Recovers cue values from a rendered prompt (transcript bank + media
// locators); nullopt for prompts that do not describe a synthetic instance.
std::optional<CueValues> decode_prompt_cues(std::string_view prompt);

struct TeacherProfile {
  // Claim probabilities for a cue whose true value is neutral / non-neutral,
  // indexed by Claim.
  std::array<double, kNumClaims> neutral_cue{0.05, 0.35, 0.05, 0.55};
  double grounded_nonneutral = 0.80;
  double fabricated_nonneutral = 0.10;
  double label_accuracy = 0.80;
  double degenerate_loop_rate = 0.04;
};

struct TeacherSample {
  std::string text;
  std::vector<double> token_logprobs;
};

// Samples one reasoning trajectory with temperature/top_p applied to the
// teacher's categorical choices. temperature <= 0 selects argmax choices.
TeacherSample sample_teacher(const CueValues& cues, const TeacherProfile& profile,
                             double temperature, double top_p, bool reasoning, Rng& rng);

// Temperature scaling followed by nucleus truncation; returns the
// renormalized distribution actually sampled from.
std::vector<double> tempered_nucleus(std::span<const double> probs, double temperature,
                                     double top_p);

// ---------------------------------------------------------------------------
// Toy policy: independent softmax heads (three claims, one label) over a
// one-hot encoding of the cue values plus a bias feature.

inline constexpr std::size_t kPolicyFeatureDim = 1 + 3 * kNumCues;
inline constexpr std::size_t kPolicyHeads = kNumCues + 1;

class ToyPolicy : public Policy {
 public:
  ToyPolicy();  // all-zero parameters: uniform over every head

  std::unique_ptr<Policy> clone() const override;
  std::span<const double> parameters() const override { return params_; }
  void set_parameters(std::span<const double> values) override;

  Trajectory sample(const MultimodalInstance& instance, Rng& rng) const override;
  Trajectory greedy(const MultimodalInstance& instance) const override;
  std::vector<double> token_logprobs(const Trajectory& trajectory,
                                     const MultimodalInstance& instance) const override;
  void accumulate_logprob_gradient(const Trajectory& trajectory,
                                   const MultimodalInstance& instance,
                                   std::span<const double> token_weights,
                                   std::span<double> grad) const override;

  // Softmax distribution of one head for an instance.
  std::vector<double> head_distribution(std::size_t head, const MultimodalInstance& instance) const;
  std::vector<double> action_logprobs(const Actions& actions,
                                      const MultimodalInstance& instance) const;
  Actions greedy_actions(const MultimodalInstance& instance) const;

  static std::size_t head_size(std::size_t head);

  void save(const std::filesystem::path& path) const;
  static ToyPolicy load(const std::filesystem::path& path);

 private:
  std::size_t head_offset(std::size_t head) const;
  std::vector<double> params_;
};

std::array<double, kPolicyFeatureDim> policy_features(const MultimodalInstance& instance);

struct BehaviorCloningConfig {
  double learning_rate = 1.0;
  int epochs = 300;
};

struct DemonstrationSet {
  std::vector<MultimodalInstance> instances;
  std::vector<Actions> actions;
};

// Collects parseable (instance, actions) pairs from SFT targets; targets
// outside the grammar are skipped.
DemonstrationSet demonstrations_from_sft(std::span<const SftExample> examples,
                                         const InstanceIndex& instances);

// Full-batch gradient descent on the mean negative log-likelihood of the
// demonstrated actions. Returns the loss seen at the start of each epoch.
std::vector<double> behavior_clone(ToyPolicy& policy, const DemonstrationSet& demos,
                                   const BehaviorCloningConfig& cfg);

}  // namespace forge::synth
