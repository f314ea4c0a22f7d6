#include "forge/parser.hpp"

#include <cctype>
#include <fstream>

#include "forge/error.hpp"

namespace forge {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool all_space(std::string_view s) {
  for (char c : s) {
    if (!is_space(c)) return false;
  }
  return true;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

const SynonymTable& SynonymTable::defaults() {
  static const SynonymTable table = [] {
    SynonymTable t;
    for (auto s : {"sarcastic", "yes", "true"}) t.add(s, Label::kSarcastic);
    for (auto s : {"non-sarcastic", "not sarcastic", "non sarcastic", "no", "false"}) {
      t.add(s, Label::kNonSarcastic);
    }
    return t;
  }();
  return table;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open synonym table " + path.string());
  SynonymTable table;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (all_space(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "expected '<label> = synonyms'", line_number);
    }
    auto label = label_from_canonical(trim_copy(std::string_view(line).substr(0, eq)));
    if (!label) throw Error(ErrorCode::kConfig, "unknown canonical label", line_number);
    std::string_view rest = std::string_view(line).substr(eq + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      auto item = normalize_answer(rest.substr(0, comma));
      if (!item.empty()) table.add(item, *label);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return table;
}

void SynonymTable::add(std::string_view synonym, Label label) {
  entries_[normalize_answer(synonym)] = label;
}

std::optional<Label> SynonymTable::lookup(std::string_view normalized) const {
  auto it = entries_.find(normalized);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string normalize_answer(std::string_view answer_text) {
  auto strip = [](char c) {
    return is_space(c) || std::ispunct(static_cast<unsigned char>(c)) != 0;
  };
  std::size_t b = 0, e = answer_text.size();
  while (b < e && strip(answer_text[b])) ++b;
  while (e > b && strip(answer_text[e - 1])) --e;

  std::string out;
  out.reserve(e - b);
  bool pending_space = false;
  for (std::size_t i = b; i < e; ++i) {
    const char c = answer_text[i];
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::optional<Label> extract_label(std::string_view answer_text, const SynonymTable& table) {
  return table.lookup(normalize_answer(answer_text));
}

ParsedTrajectory parse_trajectory(std::string_view raw_text, ParseMode mode,
                                  const SynonymTable& table) {
  ParsedTrajectory out;
  constexpr auto npos = std::string_view::npos;

  std::size_t think_open = raw_text.find(kThinkOpen);
  std::size_t think_close = npos;
  if (think_open != npos) {
    think_close = raw_text.find(kThinkClose, think_open + kThinkOpen.size());
    if (think_close != npos) {
      const auto body = think_open + kThinkOpen.size();
      out.think = std::string(raw_text.substr(body, think_close - body));
    }
  }

  const std::size_t answer_search =
      out.think ? think_close + kThinkClose.size() : 0;
  std::size_t answer_open = raw_text.find(kAnswerOpen, answer_search);
  std::size_t answer_close = npos;
  if (answer_open != npos) {
    answer_close = raw_text.find(kAnswerClose, answer_open + kAnswerOpen.size());
    if (answer_close != npos) {
      const auto body = answer_open + kAnswerOpen.size();
      out.answer_text = std::string(raw_text.substr(body, answer_close - body));
      out.predicted = extract_label(*out.answer_text, table);
    }
  }

  if (!out.think || !out.answer_text) return out;

  const std::size_t answer_end = answer_close + kAnswerClose.size();
  // Lenient mode ignores everything after the answer; strict mode requires
  // that region to be whitespace and tag-free like the rest.
  const std::string_view scope =
      mode == ParseMode::kLenient ? raw_text.substr(0, answer_end) : raw_text;
  const bool single_tags = count_occurrences(scope, kThinkOpen) == 1 &&
                           count_occurrences(scope, kThinkClose) == 1 &&
                           count_occurrences(scope, kAnswerOpen) == 1 &&
                           count_occurrences(scope, kAnswerClose) == 1;
  const std::size_t think_end = think_close + kThinkClose.size();
  const bool clean_outside =
      all_space(raw_text.substr(0, think_open)) &&
      all_space(raw_text.substr(think_end, answer_open - think_end)) &&
      (mode == ParseMode::kLenient || all_space(raw_text.substr(answer_end)));
  out.format_ok = single_tags && clean_outside;
  return out;
}

int format_reward(const ParsedTrajectory& parsed) {
  return parsed.format_ok && parsed.predicted.has_value() ? 1 : 0;
}

std::string render_canonical(const ParsedTrajectory& parsed) {
  std::string out;
  out += kThinkOpen;
  out += parsed.think.value_or("");
  out += kThinkClose;
  out += kAnswerOpen;
  out += parsed.answer_text.value_or("");
  out += kAnswerClose;
  return out;
}

}  // namespace forge
