#include "forge/backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

using nlohmann::json;

constexpr std::string_view kCandidateOpen = "\n<<<CANDIDATE\n";
constexpr std::string_view kCandidateClose = "\nCANDIDATE>>>\n";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Fn>
auto run_bounded(std::size_t count, int max_parallel, Fn fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(count);
  const std::size_t width = static_cast<std::size_t>(std::max(1, max_parallel));
  for (std::size_t begin = 0; begin < count; begin += width) {
    const std::size_t end = std::min(count, begin + width);
    std::vector<std::future<R>> inflight;
    for (std::size_t i = begin; i < end; ++i) {
      inflight.push_back(std::async(std::launch::async, fn, i));
    }
    for (std::size_t i = begin; i < end; ++i) out[i] = inflight[i - begin].get();
  }
  return out;
}

}  // namespace

void BackendConfig::validate() const {
  if (max_parallel_requests < 1) {
    throw Error(ErrorCode::kConfig, "max_parallel_requests must be at least 1");
  }
  if (!(request_timeout_seconds > 0.0)) throw Error(ErrorCode::kConfig, "timeout must be positive");
  if (retry.max_attempts < 1) throw Error(ErrorCode::kConfig, "retry attempts must be >= 1");
  if (!(retry.backoff_base_seconds >= 0.0)) {
    throw Error(ErrorCode::kConfig, "backoff base must be nonnegative");
  }
  if (max_tokens < 1) throw Error(ErrorCode::kConfig, "max_tokens must be >= 1");
  if (!base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    throw Error(ErrorCode::kConfig, "base_url must start with http:// or https://");
  }
}

std::vector<std::vector<Completion>> Backend::sample_batch(std::span<const std::string> prompts,
                                                           const SamplingConfig& sampling,
                                                           int max_parallel) const {
  return run_bounded(prompts.size(), max_parallel,
                     [&](std::size_t i) { return sample_n(prompts[i], sampling); });
}

double positive_probability_from_top(const std::map<std::string, double>& top) {
  const auto one = top.find("1");
  if (one == top.end()) return 0.0;
  const double p1 = std::exp(one->second);
  const auto zero = top.find("0");
  if (zero == top.end()) return std::clamp(p1, 0.0, 1.0);
  const double p0 = std::exp(zero->second);
  if (p1 + p0 <= 0.0) return 0.0;
  return std::clamp(p1 / (p1 + p0), 0.0, 1.0);
}

std::string render_judge_prompt(const MultimodalInstance& instance,
                                std::string_view trajectory_text) {
  std::string out = "Review an analysis of whether a speaker is being sarcastic.\n";
  out += "Transcript: " + instance.transcript + "\n";
  if (instance.audio_ref) out += "Audio: " + *instance.audio_ref + "\n";
  if (instance.video_ref) out += "Video: " + *instance.video_ref + "\n";
  out += "Candidate analysis:";
  out += kCandidateOpen;
  out += trajectory_text;
  out += kCandidateClose;
  out += "Reply 1 if the analysis reaches the right label using only cues that are really "
         "present in the clip, otherwise reply 0. Reply with a single character.";
  return out;
}

std::optional<std::string> extract_judge_candidate(std::string_view prompt) {
  const auto open = prompt.find(kCandidateOpen);
  if (open == std::string_view::npos) return std::nullopt;
  const auto start = open + kCandidateOpen.size();
  const auto close = prompt.rfind(kCandidateClose);
  if (close == std::string_view::npos || close < start) return std::nullopt;
  return std::string(prompt.substr(start, close - start));
}

ChatResponse parse_chat_response(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadResponse, std::string("response is not JSON: ") + e.what());
  }
  ChatResponse out;
  try {
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array()) {
      throw Error(ErrorCode::kBadResponse, "response has no choices array");
    }
    out.id = doc.value("id", "");
    std::vector<std::pair<int, ChatChoice>> indexed;
    int position = 0;
    for (const auto& c : doc["choices"]) {
      ChatChoice choice;
      const auto& msg = c.at("message");
      if (!msg.contains("content") || !msg["content"].is_string()) {
        throw Error(ErrorCode::kBadResponse, "choice without text content");
      }
      choice.content = msg["content"].get<std::string>();
      if (c.contains("logprobs") && c["logprobs"].is_object() &&
          c["logprobs"].contains("content") && c["logprobs"]["content"].is_array()) {
        std::vector<double> lps;
        bool first = true;
        for (const auto& tok : c["logprobs"]["content"]) {
          lps.push_back(tok.at("logprob").get<double>());
          if (first) {
            std::map<std::string, double> top;
            top[trim(tok.at("token").get<std::string>())] = tok.at("logprob").get<double>();
            if (tok.contains("top_logprobs") && tok["top_logprobs"].is_array()) {
              for (const auto& alt : tok["top_logprobs"]) {
                const std::string key = trim(alt.at("token").get<std::string>());
                const double lp = alt.at("logprob").get<double>();
                // Several raw tokens can trim to the same key; keep the likeliest.
                if (auto it = top.find(key); it == top.end() || lp > it->second) top[key] = lp;
              }
            }
            choice.first_token_top = std::move(top);
            first = false;
          }
        }
        choice.token_logprobs = std::move(lps);
      }
      indexed.emplace_back(c.value("index", position), std::move(choice));
      ++position;
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [idx, choice] : indexed) out.choices.push_back(std::move(choice));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kBadResponse, std::string("malformed choice: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto scheme_end = cfg_.base_url.find("://") + 3;
  const auto slash = cfg_.base_url.find('/', scheme_end);
  host_ = cfg_.base_url.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : cfg_.base_url.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::vector<std::string> HttpBackend::response_ids() const {
  std::lock_guard lock(log_mutex_);
  return response_ids_;
}

ChatResponse HttpBackend::post(const Request& r) const {
  json body{{"model", cfg_.model_name},
            {"messages", json::array({{{"role", "system"}, {"content", cfg_.system_prompt}},
                                      {{"role", "user"}, {"content", r.prompt}}})},
            {"temperature", r.temperature},
            {"top_p", r.top_p},
            {"n", r.n},
            {"max_tokens", r.max_tokens},
            {"logprobs", r.logprobs}};
  if (r.logprobs) body["top_logprobs"] = cfg_.top_logprobs;
  if (r.seed) body["seed"] = *r.seed;
  const std::string payload = body.dump();

  httplib::Client client(host_);
  if (!client.is_valid()) {
    throw Error(ErrorCode::kConfig, "cannot create a client for " + host_ +
                                        " (https needs a TLS-enabled build)");
  }
  const auto secs = static_cast<time_t>(cfg_.request_timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.request_timeout_seconds - secs) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.auth_token_env_var.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string path = path_prefix_ + "/chat/completions";
  std::string last_error;
  for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      const double delay = cfg_.retry.backoff_base_seconds * std::pow(2.0, attempt - 2);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (cfg_.transcript_path) {
      std::lock_guard lock(log_mutex_);
      std::ofstream log(*cfg_.transcript_path, std::ios::binary | std::ios::app);
      log << json{{"request", body},
                  {"status", res ? res->status : -1},
                  {"response", res ? res->body : httplib::to_string(res.error())}}
                 .dump()
          << '\n';
    }
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw Error(ErrorCode::kAuth, "endpoint refused credentials (HTTP " + std::to_string(status) +
                                        ", token variable " + cfg_.auth_token_env_var + ")");
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status == 400 && r.n > 1) {
      throw Error(ErrorCode::kInvalidArgument, "multi-candidate request rejected");
    }
    if (status != 200) {
      throw Error(ErrorCode::kBadResponse, "HTTP " + std::to_string(status) + ": " + res->body);
    }
    ChatResponse parsed = parse_chat_response(res->body);
    std::lock_guard lock(log_mutex_);
    response_ids_.push_back(parsed.id);
    return parsed;
  }
  throw Error(ErrorCode::kTransport, "request to " + host_ + path + " failed after " +
                                         std::to_string(cfg_.retry.max_attempts) +
                                         " attempts: " + last_error);
}

std::vector<Completion> HttpBackend::sequential(const std::string& prompt,
                                                const SamplingConfig& sampling, int count) const {
  return run_bounded(static_cast<std::size_t>(count), cfg_.max_parallel_requests,
                     [&](std::size_t i) {
                       Request r{prompt, sampling.temperature, sampling.top_p, 1, cfg_.max_tokens,
                                 true, sampling.seed + i};
                       ChatResponse resp = post(r);
                       if (resp.choices.empty()) {
                         throw Error(ErrorCode::kTruncated, "single-sample request returned nothing", 0);
                       }
                       return Completion{resp.choices[0].content, resp.choices[0].token_logprobs};
                     });
}

std::vector<Completion> HttpBackend::sample_n(const std::string& prompt,
                                              const SamplingConfig& sampling) const {
  sampling.validate();
  if (sampling.n == 1 || multi_candidate_rejected_) return sequential(prompt, sampling, sampling.n);

  std::vector<Completion> got;
  for (int attempt = 0; attempt < cfg_.retry.max_attempts && static_cast<int>(got.size()) < sampling.n;
       ++attempt) {
    const int want = sampling.n - static_cast<int>(got.size());
    Request r{prompt, sampling.temperature, sampling.top_p, want, cfg_.max_tokens, true,
              sampling.seed + static_cast<std::uint64_t>(attempt)};
    ChatResponse resp;
    try {
      resp = post(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInvalidArgument) throw;
      multi_candidate_rejected_ = true;
      auto rest = sequential(prompt, sampling, want);
      got.insert(got.end(), std::make_move_iterator(rest.begin()),
                 std::make_move_iterator(rest.end()));
      break;
    }
    for (auto& c : resp.choices) {
      if (static_cast<int>(got.size()) == sampling.n) break;
      got.push_back({std::move(c.content), std::move(c.token_logprobs)});
    }
  }
  if (static_cast<int>(got.size()) < sampling.n) {
    throw Error(ErrorCode::kTruncated,
                "got " + std::to_string(got.size()) + " of " + std::to_string(sampling.n) +
                    " candidates",
                got.size());
  }
  return got;
}

Completion HttpBackend::greedy(const std::string& prompt, std::uint64_t seed) const {
  ChatResponse resp = post({prompt, 0.0, 1.0, 1, cfg_.max_tokens, true, seed});
  if (resp.choices.empty()) throw Error(ErrorCode::kTruncated, "greedy request returned nothing", 0);
  return {resp.choices[0].content, resp.choices[0].token_logprobs};
}

double HttpBackend::positive_token_probability(const std::string& judge_prompt) const {
  ChatResponse resp = post({judge_prompt, 0.0, 1.0, 1, 1, true, std::nullopt});
  if (resp.choices.empty()) throw Error(ErrorCode::kBadResponse, "judge request returned nothing");
  const auto& top = resp.choices[0].first_token_top;
  if (!top) throw Error(ErrorCode::kNoLogprobs, "endpoint did not report token log-probabilities");
  return positive_probability_from_top(*top);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 3> kGenericReplies{
    "<think>The transcript alone does not settle the reading.</think>\n"
    "<answer>non-sarcastic</answer>",
    "<think>Nothing in the wording signals a second meaning.</think>\n"
    "<answer>non-sarcastic</answer>",
    "<think>The praise sounds forced against the situation.</think>\n"
    "<answer>sarcastic</answer>",
};

Completion mock_completion(const std::string& prompt, double temperature, double top_p,
                           const synth::TeacherProfile& profile, Rng& rng) {
  const bool reasoning = prompt.find("<think>") != std::string::npos;
  if (const auto cues = synth::decode_prompt_cues(prompt)) {
    auto s = synth::sample_teacher(*cues, profile, temperature, top_p, reasoning, rng);
    return {std::move(s.text), std::move(s.token_logprobs)};
  }
  const std::size_t pick = temperature <= 0.0 ? 0 : static_cast<std::size_t>(rng.below(3));
  return {std::string(kGenericReplies[pick]), std::vector<double>{std::log(1.0 / 3.0)}};
}

}  // namespace

std::vector<Completion> MockBackend::sample_n(const std::string& prompt,
                                              const SamplingConfig& sampling) const {
  sampling.validate();
  Rng rng(derive_seed(sampling.seed ^ fnv1a64(prompt), "mock/sample"));
  const int produced =
      options_.truncate_to < 0 ? sampling.n : std::min(sampling.n, options_.truncate_to);
  std::vector<Completion> out;
  for (int i = 0; i < produced; ++i) {
    out.push_back(mock_completion(prompt, sampling.temperature, sampling.top_p, options_.profile, rng));
    if (options_.omit_logprobs) out.back().token_logprobs.reset();
  }
  if (produced < sampling.n) {
    throw Error(ErrorCode::kTruncated,
                "got " + std::to_string(produced) + " of " + std::to_string(sampling.n) +
                    " candidates",
                static_cast<std::size_t>(produced));
  }
  return out;
}

Completion MockBackend::greedy(const std::string& prompt, std::uint64_t seed) const {
  Rng rng(derive_seed(seed ^ fnv1a64(prompt), "mock/greedy"));
  Completion c = mock_completion(prompt, 0.0, 1.0, options_.profile, rng);
  if (options_.omit_logprobs) c.token_logprobs.reset();
  return c;
}

std::map<std::string, double> MockBackend::judge_top_logprobs(const std::string& judge_prompt) const {
  const auto candidate = extract_judge_candidate(judge_prompt);
  const auto head = std::string_view(judge_prompt).substr(0, judge_prompt.find(kCandidateOpen));
  const auto cues = synth::decode_prompt_cues(head);
  bool grounded = false;
  if (candidate && cues) {
    if (const auto actions = synth::parse_actions(*candidate)) {
      grounded = actions->label == synth::world_rule(*cues);
      for (std::size_t k = 0; k < synth::kNumCues; ++k) {
        grounded = grounded && synth::claim_value(actions->claims[k]) == (*cues)[k];
      }
    }
  }
  const double p = grounded ? options_.grounded_probability : 1.0 - options_.grounded_probability;
  std::map<std::string, double> top{{"1", std::log(p)}};
  if (!options_.only_positive_token) top["0"] = std::log(1.0 - p);
  return top;
}

double MockBackend::positive_token_probability(const std::string& judge_prompt) const {
  if (options_.omit_logprobs) {
    throw Error(ErrorCode::kNoLogprobs, "mock configured without log-probabilities");
  }
  return positive_probability_from_top(judge_top_logprobs(judge_prompt));
}

double BackendJudge::score(std::string_view trajectory_text,
                           const MultimodalInstance* context) const {
  if (context == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "the external judge needs the instance context");
  }
  return backend_.positive_token_probability(render_judge_prompt(*context, trajectory_text));
}

}  // namespace forge
