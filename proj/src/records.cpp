#include "forge/records.hpp"

#include <fstream>
#include <sstream>

#include "forge/error.hpp"

namespace forge {

using nlohmann::json;

namespace {

json optional_string(const std::optional<std::string>& s) {
  return s ? json(*s) : json(nullptr);
}

json sampling_to_json(const SamplingConfig& s) {
  return json{{"n", s.n},
              {"temperature", s.temperature},
              {"top_p", s.top_p},
              {"seed", s.seed}};
}

// Field accessors that turn nlohmann type errors into schema-level messages.
const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + name + "'");
  return *it;
}

std::string get_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw std::invalid_argument(std::string("field '") + name + "' must be a string or null");
  return v.get<std::string>();
}

std::optional<std::vector<double>> get_optional_reals(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_array()) throw std::invalid_argument(std::string("field '") + name + "' must be an array or null");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw std::invalid_argument(std::string("field '") + name + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::int64_t get_int(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_integer()) throw std::invalid_argument(std::string("field '") + name + "' must be an integer");
  return v.get<std::int64_t>();
}

double get_real(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number()) throw std::invalid_argument(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

Label get_label(const json& obj, const char* name) {
  auto label = label_from_canonical(get_string(obj, name));
  if (!label) throw std::invalid_argument(std::string("field '") + name + "' is not a canonical label");
  return *label;
}

SamplingConfig sampling_from_json(const json& v) {
  if (!v.is_object()) throw std::invalid_argument("field 'sampling' must be an object");
  SamplingConfig s;
  s.n = static_cast<int>(get_int(v, "n"));
  s.temperature = get_real(v, "temperature");
  s.top_p = get_real(v, "top_p");
  const json& seed = field(v, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw std::invalid_argument("field 'seed' must be a nonnegative integer");
  }
  s.seed = seed.get<std::uint64_t>();
  return s;
}

Record record_from_json(const json& obj) {
  const std::string kind = get_string(obj, "kind");
  if (kind == RecordKind<MultimodalInstance>::name) {
    MultimodalInstance r;
    r.id = get_string(obj, "id");
    r.transcript = get_string(obj, "transcript");
    r.audio_ref = get_optional_string(obj, "audio_ref");
    r.video_ref = get_optional_string(obj, "video_ref");
    r.features = get_optional_reals(obj, "features");
    r.gold_label = get_label(obj, "gold_label");
    return r;
  }
  if (kind == RecordKind<Trajectory>::name) {
    Trajectory r;
    r.instance_id = get_string(obj, "instance_id");
    r.raw_text = get_string(obj, "raw_text");
    auto origin = origin_from_name(get_string(obj, "origin"));
    if (!origin) throw std::invalid_argument("unknown trajectory origin");
    r.origin = *origin;
    r.sample_index = static_cast<int>(get_int(obj, "sample_index"));
    r.sampling = sampling_from_json(field(obj, "sampling"));
    r.token_logprobs = get_optional_reals(obj, "token_logprobs");
    return r;
  }
  if (kind == RecordKind<JudgeExample>::name) {
    JudgeExample r;
    r.instance_id = get_string(obj, "instance_id");
    r.trajectory_text = get_string(obj, "trajectory_text");
    r.critique = static_cast<int>(get_int(obj, "critique"));
    if (r.critique != 0 && r.critique != 1) throw std::invalid_argument("critique must be 0 or 1");
    auto kind_value = failure_kind_from_name(get_string(obj, "failure_kind"));
    if (!kind_value) throw std::invalid_argument("unknown failure_kind");
    r.failure_kind = *kind_value;
    return r;
  }
  if (kind == RecordKind<SftExample>::name) {
    SftExample r;
    r.instance_id = get_string(obj, "instance_id");
    r.prompt = get_string(obj, "prompt");
    r.target = get_string(obj, "target");
    auto strategy = strategy_from_name(get_string(obj, "strategy_tag"));
    if (!strategy) throw std::invalid_argument("unknown strategy_tag");
    r.strategy_tag = *strategy;
    return r;
  }
  throw Error(ErrorCode::kSchemaMismatch, "unknown record kind '" + kind + "'");
}

}  // namespace

json to_json(const MultimodalInstance& r) {
  json features = r.features ? json(*r.features) : json(nullptr);
  return json{{"kind", RecordKind<MultimodalInstance>::name},
              {"id", r.id},
              {"transcript", r.transcript},
              {"audio_ref", optional_string(r.audio_ref)},
              {"video_ref", optional_string(r.video_ref)},
              {"features", features},
              {"gold_label", label_name(r.gold_label)}};
}

json to_json(const Trajectory& r) {
  json logprobs = r.token_logprobs ? json(*r.token_logprobs) : json(nullptr);
  return json{{"kind", RecordKind<Trajectory>::name},
              {"instance_id", r.instance_id},
              {"raw_text", r.raw_text},
              {"origin", origin_name(r.origin)},
              {"sample_index", r.sample_index},
              {"sampling", sampling_to_json(r.sampling)},
              {"token_logprobs", logprobs}};
}

json to_json(const JudgeExample& r) {
  return json{{"kind", RecordKind<JudgeExample>::name},
              {"instance_id", r.instance_id},
              {"trajectory_text", r.trajectory_text},
              {"critique", r.critique},
              {"failure_kind", failure_kind_name(r.failure_kind)}};
}

json to_json(const SftExample& r) {
  return json{{"kind", RecordKind<SftExample>::name},
              {"instance_id", r.instance_id},
              {"prompt", r.prompt},
              {"target", r.target},
              {"strategy_tag", strategy_name(r.strategy_tag)}};
}

std::string encode_record(const Record& record) {
  return std::visit([](const auto& r) { return to_json(r).dump(); }, record);
}

Record decode_record(std::string_view line, std::size_t line_number) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed JSON: ") + e.what(), line_number);
  }
  if (!obj.is_object()) {
    throw Error(ErrorCode::kParseError, "record is not a JSON object", line_number);
  }
  try {
    return record_from_json(obj);
  } catch (const Error& e) {
    throw Error(e.code(), e.detail(), line_number);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParseError, e.what(), line_number);
  }
}

std::vector<Record> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(decode_record(line, line_number));
  }
  return out;
}

void write_record_lines(const std::filesystem::path& path,
                        const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace forge
