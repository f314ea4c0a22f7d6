#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/judge.hpp"
#include "forge/synth.hpp"
#include "forge/types.hpp"

namespace forge {

struct RetryPolicy {
  int max_attempts = 3;
  double backoff_base_seconds = 0.5;  // delay before attempt k is base * 2^(k-1)
};

struct BackendConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "teacher";
  // Name of the environment variable holding the bearer token; the token
  // itself never appears in configs or manifests.
  std::string auth_token_env_var = "FORGE_API_TOKEN";
  double request_timeout_seconds = 120.0;
  int max_parallel_requests = 4;
  RetryPolicy retry;
  int max_tokens = 1024;
  int top_logprobs = 5;
  std::string system_prompt = "You are a careful analyst of spoken sarcasm.";
  // Optional JSONL transcript of every exchange (request and response bodies).
  std::optional<std::filesystem::path> transcript_path;

  void validate() const;
};

struct Completion {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;

  // Exactly sampling.n completions or an error.
  virtual std::vector<Completion> sample_n(const std::string& prompt,
                                           const SamplingConfig& sampling) const = 0;
  // Temperature-0 single completion.
  virtual Completion greedy(const std::string& prompt, std::uint64_t seed) const = 0;
  // P(first token = "1"), see positive_probability_from_top().
  virtual double positive_token_probability(const std::string& judge_prompt) const = 0;

  // One sample_n per prompt, at most max_parallel in flight, results in
  // prompt order.
  std::vector<std::vector<Completion>> sample_batch(std::span<const std::string> prompts,
                                                    const SamplingConfig& sampling,
                                                    int max_parallel) const;
};

// exp(lp1) renormalized over {"1", "0"} when both are present, exp(lp1) when
// only "1" is present, 0 when "1" is absent. Keys are trimmed token strings.
double positive_probability_from_top(const std::map<std::string, double>& top_logprobs);

// Judge prompt: the instance prompt, the candidate response between fixed
// delimiters, and the instruction to reply 1 (grounded and correct) or 0.
std::string render_judge_prompt(const MultimodalInstance& instance,
                                std::string_view trajectory_text);
// Inverse of the candidate section of render_judge_prompt.
std::optional<std::string> extract_judge_candidate(std::string_view judge_prompt);

// Parses a chat-completions response body into its choices. Throws
// kBadResponse when the body does not conform.
struct ChatChoice {
  std::string content;
  std::optional<std::vector<double>> token_logprobs;
  // Top alternatives of the first generated token, when reported.
  std::optional<std::map<std::string, double>> first_token_top;
};
struct ChatResponse {
  std::string id;
  std::vector<ChatChoice> choices;
};
ChatResponse parse_chat_response(std::string_view body);

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig cfg);
  std::string name() const override { return "http"; }

  std::vector<Completion> sample_n(const std::string& prompt,
                                   const SamplingConfig& sampling) const override;
  Completion greedy(const std::string& prompt, std::uint64_t seed) const override;
  double positive_token_probability(const std::string& judge_prompt) const override;

  const BackendConfig& config() const { return cfg_; }
  // Response ids seen so far, in completion order.
  std::vector<std::string> response_ids() const;

 private:
  struct Request {
    std::string prompt;
    double temperature;
    double top_p;
    int n;
    int max_tokens;
    bool logprobs;
    std::optional<std::uint64_t> seed;
  };
  ChatResponse post(const Request& request) const;
  std::vector<Completion> sequential(const std::string& prompt, const SamplingConfig& sampling,
                                     int count) const;

  BackendConfig cfg_;
  std::string host_;
  std::string path_prefix_;
  mutable std::mutex log_mutex_;
  mutable std::vector<std::string> response_ids_;
  mutable std::atomic<bool> multi_candidate_rejected_{false};
};

struct MockOptions {
  synth::TeacherProfile profile;
  // Return at most this many candidates per call (negative: no limit).
  int truncate_to = -1;
  bool omit_logprobs = false;
  // Report only the "1" alternative in judge calls.
  bool only_positive_token = false;
  double grounded_probability = 0.95;
};

// Deterministic in (prompt, sampling, seed). Prompts rendered from synthetic
// instances produce simulated teacher reasoning; other prompts get a fixed
// generic reply.
class MockBackend : public Backend {
 public:
  explicit MockBackend(MockOptions options = {}) : options_(options) {}
  std::string name() const override { return "mock"; }

  std::vector<Completion> sample_n(const std::string& prompt,
                                   const SamplingConfig& sampling) const override;
  Completion greedy(const std::string& prompt, std::uint64_t seed) const override;
  double positive_token_probability(const std::string& judge_prompt) const override;

  // The alternatives a judge call would report for the first token.
  std::map<std::string, double> judge_top_logprobs(const std::string& judge_prompt) const;

 private:
  MockOptions options_;
};

// Judge backed by a model endpoint; needs the instance context.
class BackendJudge : public Judge {
 public:
  explicit BackendJudge(const Backend& backend) : backend_(backend) {}
  double score(std::string_view trajectory_text,
               const MultimodalInstance* context) const override;
  std::string name() const override { return "external:" + backend_.name(); }

 private:
  const Backend& backend_;
};

}  // namespace forge
