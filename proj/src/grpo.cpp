#include "forge/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "forge/error.hpp"
#include "forge/metrics.hpp"
#include "forge/parser.hpp"
#include "forge/rng.hpp"

namespace forge {

void GrpoConfig::validate() const {
  if (group_size < 2) throw Error(ErrorCode::kConfig, "group_size must be at least 2");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) {
    throw Error(ErrorCode::kConfig, "kl_beta must be finite and nonnegative");
  }
  const bool clip_ok = std::isinf(clip_epsilon) ? clip_epsilon > 0
                                                : (clip_epsilon > 0.0 && clip_epsilon < 1.0);
  if (!clip_ok) throw Error(ErrorCode::kConfig, "clip_epsilon must be in (0, 1) or +inf");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kConfig, "learning_rate must be finite and nonnegative");
  }
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be at least 1");
  if (!(std_epsilon >= 0.0)) throw Error(ErrorCode::kConfig, "std_epsilon must be nonnegative");
  if (batch_instances < 0 || max_steps < 0) {
    throw Error(ErrorCode::kConfig, "batch_instances and max_steps must be nonnegative");
  }
  if (updates_per_batch < 1) throw Error(ErrorCode::kConfig, "updates_per_batch must be >= 1");
  if (probe_every < 1) throw Error(ErrorCode::kConfig, "probe_every must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_epsilon) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::kGroupTooSmall,
                "need at least two rewards, got " + std::to_string(rewards.size()));
  }
  std::vector<double> out(rewards.size(), 0.0);
  // identical rewards: the summed mean can round off the common value
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + std_epsilon);
  return out;
}

double kl_estimate(std::span<const double> logp_current, std::span<const double> logp_reference) {
  if (logp_current.size() != logp_reference.size()) {
    throw Error(ErrorCode::kLengthMismatch, "current and reference log-probs differ in length");
  }
  if (logp_current.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < logp_current.size(); ++t) {
    const double log_r = logp_reference[t] - logp_current[t];
    // r - log r - 1, written with expm1 so tiny differences do not cancel.
    total += std::expm1(log_r) - log_r;
  }
  return total / static_cast<double>(logp_current.size());
}

namespace {

struct MemberView {
  const Trajectory* trajectory;
  const MultimodalInstance* instance;
  const std::vector<double>* old_logprobs;
  const std::vector<double>* ref_logprobs;
  double advantage;
  double scale;  // 1 / (groups * members * tokens)
};

std::vector<MemberView> member_views(std::span<const TrajectoryGroup> groups,
                                     const InstanceIndex& instances, const GrpoConfig& cfg,
                                     std::vector<std::vector<double>>& advantage_store) {
  if (groups.empty()) throw Error(ErrorCode::kInvalidArgument, "no trajectory groups");
  std::vector<MemberView> views;
  advantage_store.clear();
  advantage_store.reserve(groups.size());
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    if (g.members.size() < 2) throw Error(ErrorCode::kGroupTooSmall, "group '" + g.instance_id + "'");
    if (g.rewards.size() != g.members.size() || g.reference_logprobs.size() != g.members.size()) {
      throw Error(ErrorCode::kLengthMismatch,
                  "group '" + g.instance_id + "' needs one reward and reference row per member");
    }
    advantage_store.push_back(g.advantages ? *g.advantages
                                           : group_advantages(g.rewards, cfg.std_epsilon));
    const auto& adv = advantage_store.back();
    if (adv.size() != g.members.size()) {
      throw Error(ErrorCode::kLengthMismatch, "group '" + g.instance_id + "' advantages");
    }
    const MultimodalInstance& inst = lookup_instance(instances, g.instance_id);
    const double inv_members = 1.0 / static_cast<double>(g.members.size());
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const auto& m = g.members[i];
      if (!m.token_logprobs) {
        throw Error(ErrorCode::kNoLogprobs, "member " + std::to_string(i) + " of '" +
                                                g.instance_id + "' has no sampling log-probs",
                    i);
      }
      const std::size_t tokens = m.token_logprobs->size();
      if (g.reference_logprobs[i].size() != tokens || tokens == 0) {
        throw Error(ErrorCode::kLengthMismatch, "reference log-probs of member " +
                                                    std::to_string(i) + " of '" + g.instance_id + "'",
                    i);
      }
      views.push_back({&m, &inst, &*m.token_logprobs, &g.reference_logprobs[i], adv[i],
                       inv_groups * inv_members / static_cast<double>(tokens)});
    }
  }
  return views;
}

bool clip_active(double ratio, double advantage, double eps) {
  return (advantage >= 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
}

// Evaluates the surrogate and, when grad is non-null, its gradient.
SurrogateStats evaluate(const Policy& policy, std::span<const TrajectoryGroup> groups,
                        const InstanceIndex& instances, const GrpoConfig& cfg,
                        std::vector<double>* grad) {
  std::vector<std::vector<double>> adv_store;
  const auto views = member_views(groups, instances, cfg, adv_store);
  SurrogateStats stats;
  std::size_t clipped = 0;
  std::vector<double> weights;
  for (const auto& v : views) {
    const auto cur = policy.token_logprobs(*v.trajectory, *v.instance);
    if (cur.size() != v.old_logprobs->size()) {
      throw Error(ErrorCode::kLengthMismatch, "policy re-scored a different token count");
    }
    weights.assign(cur.size(), 0.0);
    for (std::size_t t = 0; t < cur.size(); ++t) {
      const double ratio = std::exp(cur[t] - (*v.old_logprobs)[t]);
      const double clipped_ratio =
          std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      const double surrogate = std::min(ratio * v.advantage, clipped_ratio * v.advantage);
      const double log_r = (*v.ref_logprobs)[t] - cur[t];
      const double k3 = std::expm1(log_r) - log_r;
      stats.objective += v.scale * (surrogate - cfg.kl_beta * k3);
      stats.kl += v.scale * k3;
      const bool active = clip_active(ratio, v.advantage, cfg.clip_epsilon);
      if (active) ++clipped;
      // d(ratio*A)/d cur = ratio*A; d k3/d cur = 1 - r.
      const double d_surrogate = active ? 0.0 : ratio * v.advantage;
      const double d_k3 = -std::expm1(log_r);
      weights[t] = v.scale * (d_surrogate - cfg.kl_beta * d_k3);
    }
    stats.tokens += cur.size();
    if (grad) policy.accumulate_logprob_gradient(*v.trajectory, *v.instance, weights, *grad);
  }
  stats.clip_fraction =
      stats.tokens ? static_cast<double>(clipped) / static_cast<double>(stats.tokens) : 0.0;
  return stats;
}

}  // namespace

SurrogateStats grpo_objective(const Policy& policy, std::span<const TrajectoryGroup> groups,
                              const InstanceIndex& instances, const GrpoConfig& cfg) {
  return evaluate(policy, groups, instances, cfg, nullptr);
}

std::vector<double> grpo_gradient(const Policy& policy, std::span<const TrajectoryGroup> groups,
                                  const InstanceIndex& instances, const GrpoConfig& cfg,
                                  SurrogateStats* stats) {
  std::vector<double> grad(policy.num_parameters(), 0.0);
  const auto s = evaluate(policy, groups, instances, cfg, &grad);
  if (stats) *stats = s;
  return grad;
}

void attach_reference_logprobs(std::span<TrajectoryGroup> groups, const Policy& reference,
                               const InstanceIndex& instances) {
  for (auto& g : groups) {
    const MultimodalInstance& inst = lookup_instance(instances, g.instance_id);
    g.reference_logprobs.clear();
    for (const auto& m : g.members) g.reference_logprobs.push_back(reference.token_logprobs(m, inst));
  }
}

StepStats grpo_step(Policy& policy, const Policy& reference, std::span<TrajectoryGroup> groups,
                    const InstanceIndex& instances, const GrpoConfig& cfg) {
  for (auto& g : groups) {
    if (g.reference_logprobs.size() != g.members.size()) {
      attach_reference_logprobs(std::span<TrajectoryGroup>(&g, 1), reference, instances);
    }
  }
  SurrogateStats s;
  const auto grad = grpo_gradient(policy, groups, instances, cfg, &s);
  double norm_sq = 0.0;
  for (std::size_t p = 0; p < grad.size(); ++p) {
    if (!std::isfinite(grad[p])) {
      throw Error(ErrorCode::kNonfiniteGradient,
                  "gradient entry " + std::to_string(p) + " is " + std::to_string(grad[p]) +
                      " (objective " + std::to_string(s.objective) + ", kl " +
                      std::to_string(s.kl) + ")",
                  p);
    }
    norm_sq += grad[p] * grad[p];
  }
  std::vector<double> params(policy.parameters().begin(), policy.parameters().end());
  for (std::size_t p = 0; p < params.size(); ++p) params[p] += cfg.learning_rate * grad[p];
  policy.set_parameters(params);
  return {s.objective, s.kl, s.clip_fraction, std::sqrt(norm_sq)};
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kHistoryHeader = "step\tmean_reward\tmean_abs_advantage\tkl\tobjective\tacc\tgar";

nlohmann::json record_json(const StepRecord& r) {
  return {{"step", r.step},         {"mean_reward", r.mean_reward},
          {"mean_abs_advantage", r.mean_abs_advantage},
          {"kl", r.kl},             {"objective", r.objective},
          {"accuracy", r.accuracy}, {"gar", r.gar}};
}

StepRecord record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.mean_reward = j.at("mean_reward").get<double>();
  r.mean_abs_advantage = j.at("mean_abs_advantage").get<double>();
  r.kl = j.at("kl").get<double>();
  r.objective = j.at("objective").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.gar = j.at("gar").get<double>();
  return r;
}

struct Checkpoint {
  int next_step = 0;
  std::vector<double> parameters;
  std::vector<double> reference_parameters;
  TrainingHistory history;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& cp,
                      const std::string& reason) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : cp.history.steps) rows.push_back(record_json(r));
  nlohmann::json doc{{"kind", "grpo_checkpoint"},
                     {"next_step", cp.next_step},
                     {"parameters", cp.parameters},
                     {"reference_parameters", cp.reference_parameters},
                     {"history", rows},
                     {"halt_reason", reason}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  if (doc.value("kind", "") != "grpo_checkpoint") {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + " is not a GRPO checkpoint");
  }
  Checkpoint cp;
  cp.next_step = doc.at("next_step").get<int>();
  cp.parameters = doc.at("parameters").get<std::vector<double>>();
  cp.reference_parameters = doc.at("reference_parameters").get<std::vector<double>>();
  for (const auto& r : doc.at("history")) cp.history.steps.push_back(record_from_json(r));
  return cp;
}

}  // namespace

std::string history_tsv(const TrainingHistory& history) {
  std::string out = kHistoryHeader;
  out += '\n';
  char buf[512];
  for (const auto& r : history.steps) {
    std::snprintf(buf, sizeof(buf), "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", r.step,
                  r.mean_reward, r.mean_abs_advantage, r.kl, r.objective, r.accuracy, r.gar);
    out += buf;
  }
  return out;
}

void write_history(const std::filesystem::path& path, const TrainingHistory& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << history_tsv(history);
}

TrainingHistory read_history(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + " is not a training history");
  }
  TrainingHistory h;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    StepRecord r;
    if (!(row >> r.step >> r.mean_reward >> r.mean_abs_advantage >> r.kl >> r.objective >>
          r.accuracy >> r.gar)) {
      throw Error(ErrorCode::kParseError, path.string() + ": bad history row", line_no);
    }
    h.steps.push_back(r);
  }
  return h;
}

ProbeResult probe_policy(const Policy& policy, std::span<const MultimodalInstance> probe,
                         const Judge& judge, double gar_threshold) {
  if (probe.empty()) throw Error(ErrorCode::kEmptySet, "empty probe set");
  std::vector<std::optional<Label>> predictions;
  std::vector<Label> golds;
  std::vector<std::string> texts;
  std::vector<const MultimodalInstance*> contexts;
  for (const auto& inst : probe) {
    const Trajectory t = policy.greedy(inst);
    predictions.push_back(parse_trajectory(t.raw_text).predicted);
    golds.push_back(inst.gold_label);
    texts.push_back(t.raw_text);
    contexts.push_back(&inst);
  }
  ProbeResult r;
  r.accuracy = accuracy(confusion(predictions, golds));
  r.gar = gar(texts, judge, gar_threshold, contexts);
  return r;
}

TrainingHistory run_training(const TrainingWorld& world, Policy& policy, const Judge& judge,
                             const RewardWeights& weights, const GrpoConfig& cfg,
                             const TrainingOptions& options) {
  cfg.validate();
  weights.validate();
  if (world.train.empty()) throw Error(ErrorCode::kEmptySet, "no training instances");
  const InstanceIndex index = index_instances(world.train);
  const std::span<const MultimodalInstance> probe =
      world.probe.empty() ? std::span<const MultimodalInstance>(world.train)
                          : std::span<const MultimodalInstance>(world.probe);
  const Judge& probe_judge = options.probe_judge ? *options.probe_judge : judge;

  const std::size_t n = world.train.size();
  const std::size_t batch =
      cfg.batch_instances == 0 ? n : std::min<std::size_t>(n, cfg.batch_instances);
  const int steps_per_epoch = static_cast<int>((n + batch - 1) / batch);
  const int total_steps = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;

  std::unique_ptr<Policy> reference = policy.clone();
  TrainingHistory history;
  int start = 0;
  if (options.resume_from) {
    Checkpoint cp = read_checkpoint(*options.resume_from);
    policy.set_parameters(cp.parameters);
    reference->set_parameters(cp.reference_parameters);
    history = std::move(cp.history);
    start = cp.next_step;
  }

  std::optional<RewardTraceWriter> trace;
  if (options.reward_trace_path) trace.emplace(*options.reward_trace_path);

  std::vector<std::size_t> order;
  int order_epoch = -1;
  ProbeResult last_probe{};
  if (!history.steps.empty()) {
    last_probe = {history.steps.back().accuracy, history.steps.back().gar};
  }

  for (int step = start; step < total_steps; ++step) {
    const std::vector<double> params_before(policy.parameters().begin(), policy.parameters().end());
    try {
      const int epoch = step / steps_per_epoch;
      if (epoch != order_epoch) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, "grpo/epoch/" + std::to_string(epoch)));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        order_epoch = epoch;
      }
      const std::size_t begin = static_cast<std::size_t>(step % steps_per_epoch) * batch;
      const std::size_t end = std::min(n, begin + batch);

      Rng rng(derive_seed(cfg.seed, "grpo/step/" + std::to_string(step)));
      std::vector<TrajectoryGroup> groups;
      double reward_sum = 0.0;
      double abs_adv_sum = 0.0;
      std::size_t members = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const MultimodalInstance& inst = world.train[order[k]];
        TrajectoryGroup g;
        g.instance_id = inst.id;
        for (int j = 0; j < cfg.group_size; ++j) {
          Trajectory t = policy.sample(inst, rng);
          t.sample_index = j;
          t.sampling.n = cfg.group_size;
          t.sampling.seed = cfg.seed;
          if (!t.token_logprobs) t.token_logprobs = policy.token_logprobs(t, inst);
          g.members.push_back(std::move(t));
        }
        const auto breakdowns = score_group(g, inst.gold_label, judge, weights, &inst);
        for (std::size_t j = 0; j < breakdowns.size(); ++j) {
          g.rewards.push_back(breakdowns[j].total);
          if (trace) trace->append(static_cast<std::size_t>(step + 1), inst.id, j, breakdowns[j]);
        }
        g.advantages = group_advantages(g.rewards, cfg.std_epsilon);
        for (std::size_t j = 0; j < g.rewards.size(); ++j) {
          reward_sum += g.rewards[j];
          abs_adv_sum += std::abs((*g.advantages)[j]);
        }
        members += g.members.size();
        groups.push_back(std::move(g));
      }
      attach_reference_logprobs(groups, *reference, index);

      StepStats first{};
      for (int u = 0; u < cfg.updates_per_batch; ++u) {
        const StepStats s = grpo_step(policy, *reference, groups, index, cfg);
        if (u == 0) first = s;
      }

      StepRecord rec;
      rec.step = step + 1;
      rec.mean_reward = reward_sum / static_cast<double>(members);
      rec.mean_abs_advantage = abs_adv_sum / static_cast<double>(members);
      rec.kl = first.kl;
      rec.objective = first.objective;
      if ((step + 1) % cfg.probe_every == 0 || step + 1 == total_steps || history.steps.empty()) {
        last_probe = probe_policy(policy, probe, probe_judge, options.gar_threshold);
      }
      rec.accuracy = last_probe.accuracy;
      rec.gar = last_probe.gar;
      history.steps.push_back(rec);
    } catch (const Error& e) {
      if (options.checkpoint_path) {
        Checkpoint cp;
        cp.next_step = step;
        cp.parameters = params_before;
        cp.reference_parameters.assign(reference->parameters().begin(),
                                       reference->parameters().end());
        cp.history = history;
        write_checkpoint(*options.checkpoint_path, cp, e.what());
      }
      throw;
    }
  }
  return history;
}

}  // namespace forge
