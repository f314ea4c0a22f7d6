#include "forge/distill.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "forge/error.hpp"
#include "forge/synth.hpp"

namespace forge {

namespace {

constexpr std::string_view kThinkingInstructions =
    "Compare what is said with how it is said. Think step by step about the wording, the "
    "voice and the face, and write that reasoning inside <think></think> tags. Then give the "
    "final label, sarcastic or non-sarcastic, inside <answer></answer> tags.";

constexpr std::string_view kInstructInstructions =
    "Reply with the label only, sarcastic or non-sarcastic, inside <answer></answer> tags.";

std::set<std::string> trigram_set(std::string_view text) {
  const auto tokens = whitespace_tokens(text);
  std::set<std::string> out;
  for (std::size_t i = 0; i + 3 <= tokens.size(); ++i) {
    std::string key(tokens[i]);
    key += '\x1f';
    key += tokens[i + 1];
    key += '\x1f';
    key += tokens[i + 2];
    out.insert(std::move(key));
  }
  return out;
}

bool eligible(const Trajectory& t, SftStrategy strategy) {
  return strategy == SftStrategy::kGreedy ? t.origin == TrajectoryOrigin::kGreedy
                                          : t.origin != TrajectoryOrigin::kGreedy;
}

}  // namespace

std::string_view template_name(PromptTemplate id) {
  return id == PromptTemplate::kThinking ? "thinking" : "instruct";
}

PromptTemplate template_from_name(std::string_view name) {
  if (name == "thinking") return PromptTemplate::kThinking;
  if (name == "instruct") return PromptTemplate::kInstruct;
  throw Error(ErrorCode::kUnknownTemplate, "unknown prompt template '" + std::string(name) + "'");
}

std::string render_prompt(const MultimodalInstance& instance, PromptTemplate id) {
  std::string out = "Decide whether the speaker in this clip is being sarcastic.\n";
  out += "Transcript: " + instance.transcript + "\n";
  if (instance.audio_ref) out += "Audio: " + *instance.audio_ref + "\n";
  if (instance.video_ref) out += "Video: " + *instance.video_ref + "\n";
  out += id == PromptTemplate::kThinking ? kThinkingInstructions : kInstructInstructions;
  return out;
}

std::string render_prompt(const MultimodalInstance& instance, std::string_view template_id) {
  return render_prompt(instance, template_from_name(template_id));
}

TrajectoryPool pool_by_instance(std::span<const Trajectory> trajectories) {
  TrajectoryPool pool;
  for (const auto& t : trajectories) pool[t.instance_id].push_back(t);
  return pool;
}

TrajectoryScorer judge_scorer(const Judge& judge) {
  return [&judge](const Trajectory& t, const MultimodalInstance& inst) {
    return judge.score(t.raw_text, &inst);
  };
}

TrajectoryScorer mean_logprob_scorer() {
  return [](const Trajectory& t, const MultimodalInstance&) {
    if (!t.token_logprobs || t.token_logprobs->empty()) {
      throw Error(ErrorCode::kMissingScorer,
                  "trajectory " + trajectory_key(t) + " has no token log-probabilities");
    }
    double total = 0.0;
    for (double v : *t.token_logprobs) total += v;
    return total / static_cast<double>(t.token_logprobs->size());
  };
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto sa = trigram_set(a);
  const auto sb = trigram_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& g : sa) common += sb.count(g);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

SelectionResult select_sft(const TrajectoryPool& pool, const InstanceIndex& instances,
                           const SelectionConfig& cfg, const TrajectoryScorer* scorer) {
  if (cfg.strategy == SftStrategy::kBestOfN && (scorer == nullptr || !*scorer)) {
    throw Error(ErrorCode::kMissingScorer, "best-of-n selection needs a scorer");
  }
  if (cfg.k_max < 1) throw Error(ErrorCode::kInvalidArgument, "k_max must be at least 1");
  cfg.repetition.validate();

  SelectionResult result;
  auto& st = result.stats;
  for (const auto& [id, trajectories] : pool) {
    const MultimodalInstance& inst = lookup_instance(instances, id);
    ++st.instances;
    std::vector<const Trajectory*> survivors;
    for (const auto& t : trajectories) {
      if (!eligible(t, cfg.strategy)) continue;
      ++st.candidates;
      const auto parsed = parse_trajectory(t.raw_text, cfg.parse_mode);
      switch (golden_admit_stage(parsed, t.raw_text, inst.gold_label, cfg.repetition)) {
        case AdmitStage::kAdmitted: survivors.push_back(&t); break;
        case AdmitStage::kConsistency: ++st.rejected_consistency; break;
        case AdmitStage::kFormat: ++st.rejected_format; break;
        case AdmitStage::kRepetition: ++st.rejected_repetition; break;
      }
    }
    st.admitted += survivors.size();

    std::vector<const Trajectory*> kept;
    switch (cfg.strategy) {
      case SftStrategy::kGreedy:
        if (!survivors.empty()) kept.push_back(survivors.front());
        break;
      case SftStrategy::kBestOfN: {
        const Trajectory* best = nullptr;
        double best_score = 0.0;
        for (const Trajectory* t : survivors) {
          const double s = (*scorer)(*t, inst);
          const bool better =
              best == nullptr || s > best_score ||
              (s == best_score &&
               (t->raw_text.size() < best->raw_text.size() ||
                (t->raw_text.size() == best->raw_text.size() && t->sample_index < best->sample_index)));
          if (better) {
            best = t;
            best_score = s;
          }
        }
        if (best) kept.push_back(best);
        break;
      }
      case SftStrategy::kDiverse:
        for (const Trajectory* t : survivors) {
          if (static_cast<int>(kept.size()) >= cfg.k_max) {
            ++st.dropped_k_max;
            continue;
          }
          const bool too_close = std::any_of(kept.begin(), kept.end(), [&](const Trajectory* k) {
            return trigram_jaccard(k->raw_text, t->raw_text) > cfg.similarity_cap;
          });
          if (too_close) {
            ++st.dropped_similarity;
            continue;
          }
          kept.push_back(t);
        }
        break;
    }
    if (kept.empty()) ++st.instances_without_output;
    const std::string prompt = render_prompt(inst, cfg.prompt_template);
    for (const Trajectory* t : kept) {
      result.examples.push_back({id, prompt, t->raw_text, cfg.strategy});
    }
  }
  st.emitted = result.examples.size();
  return result;
}

std::map<SftStrategy, double> epoch_multipliers(const std::map<SftStrategy, std::size_t>& counts) {
  std::size_t largest = 0;
  for (const auto& [s, c] : counts) largest = std::max(largest, c);
  std::map<SftStrategy, double> out;
  for (const auto& [s, c] : counts) {
    out[s] = c == 0 ? 0.0 : static_cast<double>(largest) / static_cast<double>(c);
  }
  return out;
}

std::string_view labeler_mode_name(LabelerMode mode) {
  switch (mode) {
    case LabelerMode::kOracle: return "oracle";
    case LabelerMode::kAnnotationFile: return "annotation_file";
    case LabelerMode::kExternalJudge: return "external_judge";
  }
  return "unknown";
}

GroundednessLabeler GroundednessLabeler::oracle() { return {}; }

GroundednessLabeler GroundednessLabeler::annotations(std::map<std::string, int, std::less<>> labels) {
  GroundednessLabeler l;
  l.mode_ = LabelerMode::kAnnotationFile;
  for (const auto& [k, v] : labels) {
    if (v != 0 && v != 1) {
      throw Error(ErrorCode::kInvalidArgument, "annotation for '" + k + "' must be 0 or 1");
    }
  }
  l.labels_ = std::move(labels);
  return l;
}

GroundednessLabeler GroundednessLabeler::load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::map<std::string, int, std::less<>> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    const std::string value = tab == std::string::npos ? "" : line.substr(tab + 1);
    if (tab == 0 || (value != "0" && value != "1")) {
      throw Error(ErrorCode::kParseError, path.string() + ": expected '<key>\\t<0|1>'", line_no);
    }
    labels[line.substr(0, tab)] = value == "1" ? 1 : 0;
  }
  return annotations(std::move(labels));
}

GroundednessLabeler GroundednessLabeler::external(const Judge& judge, double threshold) {
  GroundednessLabeler l;
  l.mode_ = LabelerMode::kExternalJudge;
  l.judge_ = &judge;
  l.threshold_ = threshold;
  return l;
}

bool GroundednessLabeler::grounded(const Trajectory& trajectory,
                                   const MultimodalInstance& instance,
                                   const ParsedTrajectory& parsed) const {
  switch (mode_) {
    case LabelerMode::kOracle:
      if (!synth::instance_cues(instance)) {
        throw Error(ErrorCode::kLabelerGap,
                    "oracle labeler has no cue features for '" + instance.id + "'");
      }
      try {
        return synth::oracle_judge(instance, parsed) >= 0.5;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kUngrammatical) return false;
        throw;
      }
    case LabelerMode::kAnnotationFile: {
      const std::string key = trajectory_key(trajectory);
      const auto it = labels_.find(key);
      if (it == labels_.end()) {
        throw Error(ErrorCode::kLabelerGap, "no annotation for trajectory " + key);
      }
      return it->second == 1;
    }
    case LabelerMode::kExternalJudge:
      return judge_->score(trajectory.raw_text, &instance) >= threshold_;
  }
  return false;
}

JudgeDatasetResult build_judge_dataset(const TrajectoryPool& pool, const InstanceIndex& instances,
                                       const GroundednessLabeler& labeler, ParseMode mode) {
  JudgeDatasetResult result;
  auto& st = result.stats;
  for (const auto& [id, trajectories] : pool) {
    const MultimodalInstance& inst = lookup_instance(instances, id);
    for (const auto& t : trajectories) {
      const auto parsed = parse_trajectory(t.raw_text, mode);
      JudgeExample ex{id, t.raw_text, 0, FailureKind::kMalformed};
      if (format_reward(parsed) == 0) {
        ++st.malformed;
      } else if (*parsed.predicted != inst.gold_label) {
        ex.failure_kind = FailureKind::kWrongAnswer;
        ++st.wrong_answer;
      } else if (!labeler.grounded(t, inst, parsed)) {
        ex.failure_kind = FailureKind::kHallucinatedEvidence;
        ++st.hallucinated;
      } else {
        ex.critique = 1;
        ex.failure_kind = FailureKind::kNone;
      }
      (ex.critique == 1 ? st.positives : st.negatives) += 1;
      result.examples.push_back(std::move(ex));
    }
  }
  st.total = result.examples.size();
  return result;
}

}  // namespace forge
