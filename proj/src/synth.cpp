#include "forge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "forge/error.hpp"

namespace forge::synth {

namespace {

constexpr std::array<std::array<std::string_view, kNumClaims>, kNumCues> kClaimSentences{{
    {"The wording of the transcript is negative.",
     "The wording of the transcript is neutral.",
     "The wording of the transcript is positive.",
     "The wording hides a bitter double meaning."},
    {"The voice is flat and deadpan.",
     "The voice has an ordinary, even tone.",
     "The voice is lively and sincere.",
     "The voice drips with a mocking sneer."},
    {"The face looks cold and unamused.",
     "The face stays neutral.",
     "The face shows a warm smile.",
     "The face flashes a knowing smirk."},
}};

constexpr std::string_view kClosingSentence =
    "Weighing the words against the delivery settles the reading.";

// Transcript banks by text sentiment (-1, 0, +1).
constexpr std::array<std::array<std::string_view, 4>, 3> kTranscripts{{
    {"This has been an awful day.",
     "I am really disappointed in how this turned out.",
     "I hate waiting in these lines.",
     "That was a terrible idea."},
    {"The train leaves at nine tomorrow.",
     "I put the files on your desk.",
     "We are having pasta for dinner.",
     "The meeting moved to room four."},
    {"What a wonderful way to spend my Saturday.",
     "Oh great, another meeting, I just love those.",
     "This is the best news I have heard all week.",
     "Wow, you really outdid yourself this time."},
}};

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::optional<int> parse_cue_param(std::string_view text, std::string_view key) {
  const auto pos = text.find(key);
  if (pos == std::string_view::npos) return std::nullopt;
  std::string_view rest = text.substr(pos + key.size());
  if (rest.starts_with("-1")) return -1;
  if (rest.starts_with("0")) return 0;
  if (rest.starts_with("1") || rest.starts_with("+1")) return 1;
  return std::nullopt;
}

}  // namespace

Claim claim_for_value(int value) {
  switch (value) {
    case -1: return Claim::kNegative;
    case 0: return Claim::kNeutral;
    case 1: return Claim::kPositive;
    default: throw Error(ErrorCode::kInvalidArgument, "cue value must be -1, 0 or +1");
  }
}

std::optional<int> claim_value(Claim claim) {
  switch (claim) {
    case Claim::kNegative: return -1;
    case Claim::kNeutral: return 0;
    case Claim::kPositive: return 1;
    case Claim::kFabricated: return std::nullopt;
  }
  return std::nullopt;
}

Label world_rule(const CueValues& cues) {
  const bool incongruent = cues[kProsodyExaggeration] == -1 || cues[kFacialPositivity] == -1;
  return cues[kTextSentiment] == 1 && incongruent ? Label::kSarcastic : Label::kNonSarcastic;
}

std::optional<CueValues> instance_cues(const MultimodalInstance& instance) {
  if (!instance.features || instance.features->size() != kNumCues) return std::nullopt;
  CueValues cues{};
  for (std::size_t k = 0; k < kNumCues; ++k) {
    const double v = (*instance.features)[k];
    if (v != -1.0 && v != 0.0 && v != 1.0) return std::nullopt;
    cues[k] = static_cast<int>(v);
  }
  return cues;
}

std::vector<MultimodalInstance> generate_instances(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synth/instances"));
  std::vector<MultimodalInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    CueValues cues{};
    for (auto& c : cues) c = static_cast<int>(rng.below(3)) - 1;
    const auto phrase = kTranscripts[cues[kTextSentiment] + 1][rng.below(4)];

    char id[32];
    std::snprintf(id, sizeof(id), "synth-%05zu", i);
    MultimodalInstance inst;
    inst.id = id;
    inst.transcript = std::string(phrase);
    inst.audio_ref = "synth://" + inst.id + "/audio?prosody=" + std::to_string(cues[1]);
    inst.video_ref = "synth://" + inst.id + "/video?face=" + std::to_string(cues[2]);
    inst.features = std::vector<double>{static_cast<double>(cues[0]),
                                        static_cast<double>(cues[1]),
                                        static_cast<double>(cues[2])};
    inst.gold_label = world_rule(cues);
    out.push_back(std::move(inst));
  }
  return out;
}

std::string render_think(const Actions& actions) {
  std::string out;
  for (std::size_t k = 0; k < kNumCues; ++k) {
    out += kClaimSentences[k][static_cast<std::size_t>(actions.claims[k])];
    out += ' ';
  }
  out += kClosingSentence;
  return out;
}

std::string render_trajectory(const Actions& actions) {
  std::string out = "<think>";
  out += render_think(actions);
  out += "</think>\n<answer>";
  out += label_name(actions.label);
  out += "</answer>";
  return out;
}

std::optional<std::array<Claim, kNumCues>> parse_claims(std::string_view think) {
  std::array<Claim, kNumCues> claims{};
  for (std::size_t k = 0; k < kNumCues; ++k) {
    bool matched = false;
    for (std::size_t c = 0; c < kNumClaims; ++c) {
      const auto sentence = kClaimSentences[k][c];
      if (think.starts_with(sentence) && think.size() > sentence.size() &&
          think[sentence.size()] == ' ') {
        claims[k] = static_cast<Claim>(c);
        think.remove_prefix(sentence.size() + 1);
        matched = true;
        break;
      }
    }
    if (!matched) return std::nullopt;
  }
  if (think != kClosingSentence) return std::nullopt;
  return claims;
}

std::optional<Actions> parse_actions(const ParsedTrajectory& parsed) {
  if (!parsed.think || !parsed.predicted) return std::nullopt;
  auto claims = parse_claims(*parsed.think);
  if (!claims) return std::nullopt;
  return Actions{*claims, *parsed.predicted};
}

std::optional<Actions> parse_actions(std::string_view raw_text) {
  return parse_actions(parse_trajectory(raw_text));
}

double oracle_judge(const MultimodalInstance& instance, const ParsedTrajectory& parsed) {
  const auto cues = instance_cues(instance);
  if (!cues) {
    throw Error(ErrorCode::kInvalidArgument,
                "instance '" + instance.id + "' carries no synthetic cue features");
  }
  if (!parsed.think) throw Error(ErrorCode::kUngrammatical, "trajectory has no think section");
  const auto claims = parse_claims(*parsed.think);
  if (!claims) throw Error(ErrorCode::kUngrammatical, "think text is outside the claim grammar");
  if (!parsed.predicted) return 0.0;

  CueValues cited{};
  for (std::size_t k = 0; k < kNumCues; ++k) {
    const auto value = claim_value((*claims)[k]);
    if (!value || *value != (*cues)[k]) return 0.0;
    cited[k] = *value;
  }
  return world_rule(cited) == *parsed.predicted ? 1.0 : 0.0;
}

double OracleJudge::score(std::string_view trajectory_text,
                          const MultimodalInstance* context) const {
  if (context == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "oracle judge needs the instance context");
  }
  try {
    return oracle_judge(*context, parse_trajectory(trajectory_text));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUngrammatical) return 0.0;
    throw;
  }
}

Trajectory inject_hallucination(const Trajectory& trajectory,
                                const MultimodalInstance& instance, Rng& rng) {
  const auto cues = instance_cues(instance);
  if (!cues) throw Error(ErrorCode::kInvalidArgument, "instance carries no cue features");
  auto actions = parse_actions(trajectory.raw_text);
  if (!actions) throw Error(ErrorCode::kUngrammatical, "source trajectory is outside the grammar");

  std::vector<std::size_t> grounded;
  for (std::size_t k = 0; k < kNumCues; ++k) {
    if (claim_value(actions->claims[k]) == (*cues)[k]) grounded.push_back(k);
  }
  if (grounded.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "source trajectory has no grounded claim to flip");
  }
  const std::size_t cue = grounded[rng.below(grounded.size())];
  std::vector<Claim> alternatives;
  for (std::size_t c = 0; c < kNumClaims; ++c) {
    if (static_cast<Claim>(c) != actions->claims[cue]) alternatives.push_back(static_cast<Claim>(c));
  }
  actions->claims[cue] = alternatives[rng.below(alternatives.size())];

  Trajectory out = trajectory;
  out.raw_text = render_trajectory(*actions);
  out.token_logprobs.reset();
  return out;
}

std::optional<CueValues> decode_prompt_cues(std::string_view prompt) {
  std::optional<int> sentiment;
  for (std::size_t s = 0; s < kTranscripts.size() && !sentiment; ++s) {
    for (auto phrase : kTranscripts[s]) {
      if (prompt.find(phrase) != std::string_view::npos) {
        sentiment = static_cast<int>(s) - 1;
        break;
      }
    }
  }
  const auto prosody = parse_cue_param(prompt, "/audio?prosody=");
  const auto face = parse_cue_param(prompt, "/video?face=");
  if (!sentiment || !prosody || !face) return std::nullopt;
  return CueValues{*sentiment, *prosody, *face};
}

std::vector<double> tempered_nucleus(std::span<const double> probs, double temperature,
                                     double top_p) {
  std::vector<double> out(probs.size(), 0.0);
  if (probs.empty()) return out;
  if (temperature <= 0.0) {
    out[argmax(probs)] = 1.0;
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = probs[i] > 0.0 ? std::pow(probs[i], 1.0 / temperature) : 0.0;
    total += out[i];
  }
  for (auto& p : out) p /= total;

  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out[a] > out[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && mass < top_p - 1e-12) mass += out[order[keep++]];
  for (std::size_t r = keep; r < order.size(); ++r) out[order[r]] = 0.0;
  for (auto& p : out) p /= mass;
  return out;
}

TeacherSample sample_teacher(const CueValues& cues, const TeacherProfile& profile,
                             double temperature, double top_p, bool reasoning, Rng& rng) {
  TeacherSample sample;
  auto draw = [&](std::span<const double> base) {
    const auto dist = tempered_nucleus(base, temperature, top_p);
    const std::size_t choice = temperature <= 0.0 ? argmax(dist) : rng.categorical(dist);
    sample.token_logprobs.push_back(std::log(dist[choice]));
    return choice;
  };

  const Label gold = world_rule(cues);
  const Label other = gold == Label::kSarcastic ? Label::kNonSarcastic : Label::kSarcastic;
  const std::array<double, 2> label_probs{profile.label_accuracy, 1.0 - profile.label_accuracy};
  auto draw_label = [&] { return draw(label_probs) == 0 ? gold : other; };

  if (!reasoning) {
    sample.text = "<answer>" + std::string(label_name(draw_label())) + "</answer>";
    return sample;
  }

  if (temperature > 0.0 && rng.uniform() < profile.degenerate_loop_rate) {
    // Repetition collapse: one claim sentence looped inside the think span.
    const std::size_t cue = rng.below(kNumCues);
    const auto sentence = kClaimSentences[cue][static_cast<std::size_t>(claim_for_value(cues[cue]))];
    std::string think;
    for (int r = 0; r < 24; ++r) {
      if (r) think += ' ';
      think += sentence;
    }
    sample.token_logprobs.push_back(std::log(profile.degenerate_loop_rate));
    sample.text = "<think>" + think + "</think>\n<answer>" +
                  std::string(label_name(draw_label())) + "</answer>";
    return sample;
  }

  Actions actions;
  for (std::size_t k = 0; k < kNumCues; ++k) {
    std::array<double, kNumClaims> base{};
    if (cues[k] == 0) {
      base = profile.neutral_cue;
    } else {
      const double rest =
          (1.0 - profile.grounded_nonneutral - profile.fabricated_nonneutral) / 2.0;
      base.fill(rest);
      base[static_cast<std::size_t>(claim_for_value(cues[k]))] = profile.grounded_nonneutral;
      base[static_cast<std::size_t>(Claim::kFabricated)] = profile.fabricated_nonneutral;
    }
    actions.claims[k] = static_cast<Claim>(draw(base));
  }
  actions.label = draw_label();
  sample.text = render_trajectory(actions);
  return sample;
}

// ---------------------------------------------------------------------------

std::array<double, kPolicyFeatureDim> policy_features(const MultimodalInstance& instance) {
  const auto cues = instance_cues(instance);
  if (!cues) {
    throw Error(ErrorCode::kInvalidArgument,
                "instance '" + instance.id + "' carries no synthetic cue features");
  }
  std::array<double, kPolicyFeatureDim> phi{};
  phi[0] = 1.0;
  for (std::size_t k = 0; k < kNumCues; ++k) {
    phi[1 + 3 * k + static_cast<std::size_t>((*cues)[k] + 1)] = 1.0;
  }
  return phi;
}

std::size_t ToyPolicy::head_size(std::size_t head) { return head < kNumCues ? kNumClaims : 2; }

ToyPolicy::ToyPolicy()
    : params_((kNumCues * kNumClaims + 2) * kPolicyFeatureDim, 0.0) {}

std::size_t ToyPolicy::head_offset(std::size_t head) const {
  return head * kNumClaims * kPolicyFeatureDim;
}

std::unique_ptr<Policy> ToyPolicy::clone() const { return std::make_unique<ToyPolicy>(*this); }

void ToyPolicy::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) {
    throw Error(ErrorCode::kLengthMismatch, "toy policy parameter count mismatch");
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

std::vector<double> ToyPolicy::head_distribution(std::size_t head,
                                                 const MultimodalInstance& instance) const {
  const auto phi = policy_features(instance);
  const std::size_t size = head_size(head);
  std::vector<double> logits(size, 0.0);
  const double* w = params_.data() + head_offset(head);
  for (std::size_t j = 0; j < size; ++j) {
    for (std::size_t d = 0; d < kPolicyFeatureDim; ++d) {
      logits[j] += w[j * kPolicyFeatureDim + d] * phi[d];
    }
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - peak);
    total += l;
  }
  for (auto& l : logits) l /= total;
  return logits;
}

std::vector<double> ToyPolicy::action_logprobs(const Actions& actions,
                                               const MultimodalInstance& instance) const {
  std::vector<double> out;
  out.reserve(kPolicyHeads);
  for (std::size_t h = 0; h < kPolicyHeads; ++h) {
    const auto dist = head_distribution(h, instance);
    const std::size_t chosen = h < kNumCues ? static_cast<std::size_t>(actions.claims[h])
                                            : (actions.label == Label::kSarcastic ? 0 : 1);
    out.push_back(std::log(dist[chosen]));
  }
  return out;
}

Actions ToyPolicy::greedy_actions(const MultimodalInstance& instance) const {
  Actions actions;
  for (std::size_t h = 0; h < kNumCues; ++h) {
    actions.claims[h] = static_cast<Claim>(argmax(head_distribution(h, instance)));
  }
  actions.label = argmax(head_distribution(kNumCues, instance)) == 0 ? Label::kSarcastic
                                                                     : Label::kNonSarcastic;
  return actions;
}

Trajectory ToyPolicy::sample(const MultimodalInstance& instance, Rng& rng) const {
  Actions actions;
  std::vector<double> logprobs;
  for (std::size_t h = 0; h < kPolicyHeads; ++h) {
    const auto dist = head_distribution(h, instance);
    const std::size_t choice = rng.categorical(dist);
    logprobs.push_back(std::log(dist[choice]));
    if (h < kNumCues) {
      actions.claims[h] = static_cast<Claim>(choice);
    } else {
      actions.label = choice == 0 ? Label::kSarcastic : Label::kNonSarcastic;
    }
  }
  Trajectory t;
  t.instance_id = instance.id;
  t.raw_text = render_trajectory(actions);
  t.origin = TrajectoryOrigin::kPolicy;
  t.sampling = SamplingConfig{1, 1.0, 1.0, 0};
  t.token_logprobs = std::move(logprobs);
  return t;
}

Trajectory ToyPolicy::greedy(const MultimodalInstance& instance) const {
  const Actions actions = greedy_actions(instance);
  Trajectory t;
  t.instance_id = instance.id;
  t.raw_text = render_trajectory(actions);
  t.origin = TrajectoryOrigin::kGreedy;
  t.sampling = SamplingConfig{1, 1.0, 1.0, 0};
  t.token_logprobs = action_logprobs(actions, instance);
  return t;
}

std::vector<double> ToyPolicy::token_logprobs(const Trajectory& trajectory,
                                              const MultimodalInstance& instance) const {
  const auto actions = parse_actions(trajectory.raw_text);
  if (!actions) throw Error(ErrorCode::kUngrammatical, "trajectory is outside the policy grammar");
  return action_logprobs(*actions, instance);
}

void ToyPolicy::accumulate_logprob_gradient(const Trajectory& trajectory,
                                            const MultimodalInstance& instance,
                                            std::span<const double> token_weights,
                                            std::span<double> grad) const {
  if (token_weights.size() != kPolicyHeads || grad.size() != params_.size()) {
    throw Error(ErrorCode::kLengthMismatch, "gradient buffer or token weights have wrong size");
  }
  const auto actions = parse_actions(trajectory.raw_text);
  if (!actions) throw Error(ErrorCode::kUngrammatical, "trajectory is outside the policy grammar");
  const auto phi = policy_features(instance);
  for (std::size_t h = 0; h < kPolicyHeads; ++h) {
    if (token_weights[h] == 0.0) continue;
    const auto dist = head_distribution(h, instance);
    const std::size_t chosen = h < kNumCues ? static_cast<std::size_t>(actions->claims[h])
                                            : (actions->label == Label::kSarcastic ? 0 : 1);
    double* g = grad.data() + head_offset(h);
    for (std::size_t j = 0; j < dist.size(); ++j) {
      const double coeff = token_weights[h] * ((j == chosen ? 1.0 : 0.0) - dist[j]);
      for (std::size_t d = 0; d < kPolicyFeatureDim; ++d) {
        g[j * kPolicyFeatureDim + d] += coeff * phi[d];
      }
    }
  }
}

void ToyPolicy::save(const std::filesystem::path& path) const {
  nlohmann::json doc{{"kind", "toy_policy"},
                     {"world", kWorldRuleVersion},
                     {"parameters", params_}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

ToyPolicy ToyPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "toy_policy") {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + " is not a toy policy file");
  }
  ToyPolicy policy;
  policy.set_parameters(doc.at("parameters").get<std::vector<double>>());
  return policy;
}

DemonstrationSet demonstrations_from_sft(std::span<const SftExample> examples,
                                         const InstanceIndex& instances) {
  DemonstrationSet demos;
  for (const auto& ex : examples) {
    auto actions = parse_actions(ex.target);
    if (!actions) continue;
    demos.instances.push_back(lookup_instance(instances, ex.instance_id));
    demos.actions.push_back(*actions);
  }
  return demos;
}

std::vector<double> behavior_clone(ToyPolicy& policy, const DemonstrationSet& demos,
                                   const BehaviorCloningConfig& cfg) {
  std::vector<double> losses;
  if (demos.actions.empty()) return losses;
  const double scale = 1.0 / static_cast<double>(demos.actions.size());
  const std::vector<double> unit(kPolicyHeads, scale);
  std::vector<double> grad(policy.num_parameters());
  std::vector<double> params(policy.parameters().begin(), policy.parameters().end());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < demos.actions.size(); ++i) {
      const auto lp = policy.action_logprobs(demos.actions[i], demos.instances[i]);
      for (double v : lp) loss -= v * scale;
      Trajectory t;
      t.raw_text = render_trajectory(demos.actions[i]);
      policy.accumulate_logprob_gradient(t, demos.instances[i], unit, grad);
    }
    for (std::size_t p = 0; p < params.size(); ++p) params[p] += cfg.learning_rate * grad[p];
    policy.set_parameters(params);
    losses.push_back(loss);
  }
  return losses;
}

}  // namespace forge::synth
