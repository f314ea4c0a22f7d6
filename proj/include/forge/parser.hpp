#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "forge/types.hpp"

namespace forge {

// Maps normalized answer strings to labels. The default table covers the
// English sarcasm vocabulary; other vocabularies load from a file.
class SynonymTable {
 public:
  static const SynonymTable& defaults();

  // File format: one "<canonical label> = syn, syn, ..." line per label,
  // '#' starts a comment. Throws kConfig on malformed lines.
  static SynonymTable load(const std::filesystem::path& path);

  void add(std::string_view synonym, Label label);
  std::optional<Label> lookup(std::string_view normalized) const;

 private:
  std::map<std::string, Label, std::less<>> entries_;
};

enum class ParseMode {
  kStrict,   // only whitespace outside the think and answer regions
  kLenient,  // trailing text after </answer> is ignored
};

struct ParsedTrajectory {
  std::optional<std::string> think;
  std::optional<std::string> answer_text;
  std::optional<Label> predicted;
  bool format_ok = false;

  bool operator==(const ParsedTrajectory&) const = default;
};

// Trim whitespace and punctuation, lowercase, collapse inner whitespace.
std::string normalize_answer(std::string_view answer_text);

std::optional<Label> extract_label(std::string_view answer_text,
                                   const SynonymTable& table = SynonymTable::defaults());

// Total over all inputs: malformed text yields format_ok = false.
ParsedTrajectory parse_trajectory(std::string_view raw_text,
                                  ParseMode mode = ParseMode::kStrict,
                                  const SynonymTable& table = SynonymTable::defaults());

// 1 iff format_ok and a label was extracted.
int format_reward(const ParsedTrajectory& parsed);

// "<think>…</think><answer>…</answer>" with no separators. Only meaningful
// for format_ok trajectories.
std::string render_canonical(const ParsedTrajectory& parsed);

}  // namespace forge
