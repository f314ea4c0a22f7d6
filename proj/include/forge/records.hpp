#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "forge/error.hpp"
#include "forge/types.hpp"

namespace forge {

// Line-delimited record files. Every line is one JSON object with a "kind"
// discriminator; field names are documented in docs/record_schema.md.
using Record = std::variant<MultimodalInstance, Trajectory, JudgeExample, SftExample>;

template <typename T> struct RecordKind;
template <> struct RecordKind<MultimodalInstance> { static constexpr std::string_view name = "instance"; };
template <> struct RecordKind<Trajectory> { static constexpr std::string_view name = "trajectory"; };
template <> struct RecordKind<JudgeExample> { static constexpr std::string_view name = "judge_example"; };
template <> struct RecordKind<SftExample> { static constexpr std::string_view name = "sft_example"; };

nlohmann::json to_json(const MultimodalInstance& r);
nlohmann::json to_json(const Trajectory& r);
nlohmann::json to_json(const JudgeExample& r);
nlohmann::json to_json(const SftExample& r);

// Single-line serialization (no trailing newline).
std::string encode_record(const Record& record);
// Throws kSchemaMismatch on an unknown kind and kParseError otherwise;
// `line` is attached to the error.
Record decode_record(std::string_view line, std::size_t line_number = 0);

std::vector<Record> read_records(const std::filesystem::path& path);

template <typename T>
void write_records(const std::filesystem::path& path, std::span<const T> records);

// Typed read: every record must be of kind T, otherwise kSchemaMismatch.
template <typename T>
std::vector<T> read_records_as(const std::filesystem::path& path);

void write_record_lines(const std::filesystem::path& path,
                        const std::vector<std::string>& lines);

template <typename T>
void write_records(const std::filesystem::path& path, std::span<const T> records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(encode_record(Record(r)));
  write_record_lines(path, lines);
}

template <typename T>
std::vector<T> read_records_as(const std::filesystem::path& path) {
  std::vector<T> out;
  std::size_t line = 0;
  for (auto& rec : read_records(path)) {
    ++line;
    if (auto* typed = std::get_if<T>(&rec)) {
      out.push_back(std::move(*typed));
    } else {
      throw Error(ErrorCode::kSchemaMismatch,
                  path.string() + ": expected records of kind " +
                      std::string(RecordKind<T>::name),
                  line);  // record ordinal
    }
  }
  return out;
}

}  // namespace forge
