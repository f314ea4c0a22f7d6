#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "forge/parser.hpp"
#include "forge/types.hpp"

namespace forge {

struct RepetitionConfig {
  int n = 3;
  double min_normalized_entropy = 0.40;
  int max_ngram_repeat = 8;
  // Texts shorter than this pass without inspection. Negative means 2 * n.
  int min_tokens = -1;

  int effective_min_tokens() const { return min_tokens < 0 ? 2 * n : min_tokens; }
  void validate() const;
};

std::vector<std::string_view> whitespace_tokens(std::string_view text);

// Shannon entropy in bits of the empirical distribution over overlapping
// n-grams of whitespace tokens. Returns +infinity when there are fewer than
// n tokens.
double ngram_entropy(std::string_view text, int n);

struct RepetitionStats {
  std::size_t tokens = 0;
  std::size_t positions = 0;        // overlapping n-gram slots
  std::size_t distinct = 0;
  std::size_t max_count = 0;
  double entropy_bits = 0.0;
  double normalized_entropy = 1.0;  // entropy / log2(positions)
};

RepetitionStats repetition_stats(std::string_view text, int n);

bool anti_repetition_filter(std::string_view text, const RepetitionConfig& cfg);

bool consistency_filter(const ParsedTrajectory& parsed, Label gold);

// Admission criteria, in evaluation order.
enum class AdmitStage { kAdmitted, kConsistency, kFormat, kRepetition };

std::string_view admit_stage_name(AdmitStage stage);

// Evaluates consistency, format, repetition in that fixed order and reports
// the first failing criterion.
AdmitStage golden_admit_stage(const ParsedTrajectory& parsed, std::string_view raw_text,
                              Label gold, const RepetitionConfig& cfg);

bool golden_admit(const ParsedTrajectory& parsed, std::string_view raw_text, Label gold,
                  const RepetitionConfig& cfg);

}  // namespace forge
