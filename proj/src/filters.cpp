#include "forge/filters.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "forge/error.hpp"

namespace forge {

void RepetitionConfig::validate() const {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "repetition.n must be >= 1");
  if (!(min_normalized_entropy > 0.0 && min_normalized_entropy <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "repetition.min_normalized_entropy must be in (0, 1]");
  }
  if (max_ngram_repeat < 1) {
    throw Error(ErrorCode::kInvalidArgument, "repetition.max_ngram_repeat must be >= 1");
  }
  if (min_tokens == 0 || min_tokens < -1) {
    throw Error(ErrorCode::kInvalidArgument, "repetition.min_tokens must be positive");
  }
}

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

namespace {

// n-gram -> count, keyed by the joined tokens. The separator cannot occur
// inside a whitespace token.
std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string_view>& tokens,
                                                int n) {
  std::map<std::string, std::size_t> counts;
  const std::size_t order = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < order; ++k) {
      if (k) key.push_back(' ');
      key.append(tokens[i + k]);
    }
    ++counts[key];
  }
  return counts;
}

double entropy_bits(const std::map<std::string, std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (const auto& [gram, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

RepetitionStats repetition_stats(std::string_view text, int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "n-gram order must be >= 1");
  RepetitionStats s;
  const auto tokens = whitespace_tokens(text);
  s.tokens = tokens.size();
  if (tokens.size() < static_cast<std::size_t>(n)) {
    s.entropy_bits = std::numeric_limits<double>::infinity();
    return s;
  }
  const auto counts = ngram_counts(tokens, n);
  s.positions = tokens.size() - static_cast<std::size_t>(n) + 1;
  s.distinct = counts.size();
  for (const auto& [gram, c] : counts) s.max_count = std::max(s.max_count, c);
  s.entropy_bits = entropy_bits(counts, s.positions);
  // A single slot carries no evidence either way.
  s.normalized_entropy =
      s.positions > 1 ? s.entropy_bits / std::log2(static_cast<double>(s.positions)) : 1.0;
  return s;
}

double ngram_entropy(std::string_view text, int n) {
  return repetition_stats(text, n).entropy_bits;
}

bool anti_repetition_filter(std::string_view text, const RepetitionConfig& cfg) {
  const auto stats = repetition_stats(text, cfg.n);
  if (stats.tokens < static_cast<std::size_t>(cfg.effective_min_tokens())) return true;
  if (stats.positions == 0) return true;
  return stats.normalized_entropy >= cfg.min_normalized_entropy &&
         stats.max_count <= static_cast<std::size_t>(cfg.max_ngram_repeat);
}

bool consistency_filter(const ParsedTrajectory& parsed, Label gold) {
  return parsed.predicted.has_value() && *parsed.predicted == gold;
}

std::string_view admit_stage_name(AdmitStage stage) {
  switch (stage) {
    case AdmitStage::kAdmitted: return "admitted";
    case AdmitStage::kConsistency: return "consistency";
    case AdmitStage::kFormat: return "format";
    case AdmitStage::kRepetition: return "repetition";
  }
  return "admitted";
}

AdmitStage golden_admit_stage(const ParsedTrajectory& parsed, std::string_view raw_text,
                              Label gold, const RepetitionConfig& cfg) {
  if (!consistency_filter(parsed, gold)) return AdmitStage::kConsistency;
  if (format_reward(parsed) != 1) return AdmitStage::kFormat;
  if (!anti_repetition_filter(raw_text, cfg)) return AdmitStage::kRepetition;
  return AdmitStage::kAdmitted;
}

bool golden_admit(const ParsedTrajectory& parsed, std::string_view raw_text, Label gold,
                  const RepetitionConfig& cfg) {
  return golden_admit_stage(parsed, raw_text, gold, cfg) == AdmitStage::kAdmitted;
}

}  // namespace forge
