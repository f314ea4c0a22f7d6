#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "forge/backend.hpp"
#include "forge/distill.hpp"
#include "forge/synth.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::testing;
using nlohmann::json;

namespace {

// Local chat-completions endpoint that records every request body.
class CaptureServer {
 public:
  using Handler = std::function<void(const json& body, httplib::Response& res)>;

  explicit CaptureServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      handler_(body, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~CaptureServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::vector<json> bodies() const {
    std::lock_guard lock(mutex_);
    return bodies_;
  }
  std::vector<std::string> auth() const {
    std::lock_guard lock(mutex_);
    return auth_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<json> bodies_;
  std::vector<std::string> auth_;
};

json choice(int index, const std::string& text, std::optional<json> logprobs = std::nullopt) {
  json c{{"index", index}, {"message", {{"role", "assistant"}, {"content", text}}}};
  if (logprobs) c["logprobs"] = *logprobs;
  return c;
}

json token_logprobs(const std::vector<std::pair<std::string, double>>& tokens, const json& top = json::array()) {
  json content = json::array();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    json t{{"token", tokens[i].first}, {"logprob", tokens[i].second}};
    if (i == 0) t["top_logprobs"] = top;
    content.push_back(t);
  }
  return {{"content", content}};
}

std::string completion_body(const std::vector<json>& choices, const std::string& id = "resp") {
  return json{{"id", id}, {"object", "chat.completion"}, {"choices", choices}}.dump();
}

void reply_n(const json& body, httplib::Response& res, int cap = 1 << 20) {
  const int n = std::min(body.value("n", 1), cap);
  std::vector<json> cs;
  for (int i = 0; i < n; ++i) cs.push_back(choice(i, "reply " + std::to_string(i), token_logprobs({{"x", -0.5}})));
  res.set_content(completion_body(cs), "application/json");
}

BackendConfig config_for(const CaptureServer& server) {
  BackendConfig cfg;
  cfg.base_url = server.url();
  cfg.retry.backoff_base_seconds = 0.0;
  cfg.request_timeout_seconds = 10;
  cfg.auth_token_env_var = "FORGE_TEST_TOKEN_UNSET_XYZ";
  return cfg;
}

MultimodalInstance synth_instance(std::uint64_t seed = 3) {
  return synth::generate_instances(1, seed).front();
}

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("config validation") {
  BackendConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.max_parallel_requests = 0;
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
  cfg = {};
  cfg.base_url = "ftp://host";
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
  cfg = {};
  cfg.retry.max_attempts = 0;
  CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
}

TEST_CASE("positive token probability from top alternatives") {
  CHECK(positive_probability_from_top({{"1", std::log(0.8)}, {"0", std::log(0.2)}}) == doctest::Approx(0.8));
  CHECK(positive_probability_from_top({{"1", std::log(0.3)}, {"0", std::log(0.1)}}) == doctest::Approx(0.75));
  CHECK(positive_probability_from_top({{"1", std::log(0.6)}}) == doctest::Approx(0.6));
  CHECK(positive_probability_from_top({{"0", std::log(0.9)}, {"yes", -0.1}}) == 0.0);
  CHECK(positive_probability_from_top({}) == 0.0);
}

TEST_CASE("judge prompt embeds and returns the candidate") {
  const auto inst = synth_instance();
  const std::string text = "<think>odd\nmulti-line</think>\n<answer>yes</answer>";
  const auto prompt = render_judge_prompt(inst, text);
  CHECK(prompt.find(inst.transcript) != std::string::npos);
  CHECK(extract_judge_candidate(prompt) == text);
  CHECK(!extract_judge_candidate("no delimiters"));
}

TEST_CASE("chat response parsing") {
  const auto body = completion_body({choice(1, "second"), choice(0, "first", token_logprobs({{" 1", -0.2}, {"x", -1.0}},
                                                                                            json::array({{{"token", "0"}, {"logprob", -1.7}},
                                                                                                         {{"token", "1 "}, {"logprob", -0.4}}})))});
  const auto r = parse_chat_response(body);
  REQUIRE(r.choices.size() == 2);
  CHECK(r.id == "resp");
  CHECK(r.choices[0].content == "first");
  CHECK(r.choices[1].content == "second");
  CHECK(!r.choices[1].token_logprobs);
  CHECK(*r.choices[0].token_logprobs == std::vector<double>{-0.2, -1.0});
  // Trimmed keys; the likeliest duplicate wins.
  const auto& top = *r.choices[0].first_token_top;
  CHECK(top.at("1") == -0.2);
  CHECK(top.at("0") == -1.7);

  CHECK(error_of([] { parse_chat_response("not json"); }) == ErrorCode::kBadResponse);
  CHECK(error_of([] { parse_chat_response("{\"id\":\"x\"}"); }) == ErrorCode::kBadResponse);
  CHECK(error_of([] { parse_chat_response("{\"choices\":[{\"message\":{}}]}"); }) == ErrorCode::kBadResponse);
  CHECK(error_of([] { parse_chat_response("{\"choices\":[{\"nomessage\":1}]}"); }) == ErrorCode::kBadResponse);
}

TEST_CASE("mock backend is deterministic in prompt and seed") {
  const auto prompt = render_prompt(synth_instance(), PromptTemplate::kThinking);
  const MockBackend mock;
  const SamplingConfig s{8, 0.6, 0.95, 5};
  const auto a = mock.sample_n(prompt, s);
  const auto b = mock.sample_n(prompt, s);
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].token_logprobs == b[i].token_logprobs);
    CHECK(a[i].token_logprobs.has_value());
  }
  std::string joined_a, joined_c;
  const auto c = mock.sample_n(prompt, {8, 0.6, 0.95, 6});
  for (std::size_t i = 0; i < 8; ++i) {
    joined_a += a[i].text;
    joined_c += c[i].text;
  }
  CHECK(joined_a != joined_c);
  CHECK(mock.greedy(prompt, 1).text == mock.greedy(prompt, 1).text);

  // Instruct prompts get answer-only replies.
  const auto instruct = mock.sample_n(render_prompt(synth_instance(), PromptTemplate::kInstruct), s);
  for (const auto& x : instruct) CHECK(x.text.find("<think>") == std::string::npos);
  // Anything else gets a generic reply.
  for (const auto& x : mock.sample_n("hello", s)) CHECK(parse_trajectory(x.text).format_ok);
}

TEST_CASE("mock backend truncation and missing logprobs") {
  const auto prompt = render_prompt(synth_instance(), PromptTemplate::kThinking);
  MockOptions o;
  o.truncate_to = 5;
  const MockBackend short_mock(o);
  CHECK(error_of([&] { short_mock.sample_n(prompt, {8, 0.6, 0.95, 5}); }) == ErrorCode::kTruncated);
  CHECK(error_index_of([&] { short_mock.sample_n(prompt, {8, 0.6, 0.95, 5}); }) == std::size_t{5});

  MockOptions q;
  q.omit_logprobs = true;
  const MockBackend quiet(q);
  for (const auto& c : quiet.sample_n(prompt, {2, 0.6, 0.95, 5})) CHECK(!c.token_logprobs);
  CHECK(error_of([&] { quiet.positive_token_probability(render_judge_prompt(synth_instance(), "x")); }) ==
        ErrorCode::kNoLogprobs);
}

TEST_CASE("mock judge prefers grounded analyses") {
  const auto inst = synth_instance();
  const auto cues = *synth::instance_cues(inst);
  synth::Actions good;
  for (std::size_t k = 0; k < synth::kNumCues; ++k) good.claims[k] = synth::claim_for_value(cues[k]);
  good.label = inst.gold_label;
  synth::Actions bad = good;
  bad.claims[0] = synth::Claim::kFabricated;

  const MockBackend mock;
  const BackendJudge judge(mock);
  CHECK(judge.score(synth::render_trajectory(good), &inst) == doctest::Approx(0.95));
  CHECK(judge.score(synth::render_trajectory(bad), &inst) == doctest::Approx(0.05));
  CHECK(error_of([&] { judge.score("x", nullptr); }) == ErrorCode::kInvalidArgument);
  CHECK(judge.name() == "external:mock");

  MockOptions only_one;
  only_one.only_positive_token = true;
  only_one.grounded_probability = 0.6;
  const MockBackend one(only_one);
  CHECK(BackendJudge(one).score(synth::render_trajectory(good), &inst) == doctest::Approx(0.6));
}

TEST_CASE("http sampling sends the configured request") {
  CaptureServer server([](const json& body, httplib::Response& res) { reply_n(body, res); });
  ::setenv("FORGE_TEST_TOKEN_SET", "sekret", 1);
  auto cfg = config_for(server);
  cfg.auth_token_env_var = "FORGE_TEST_TOKEN_SET";
  cfg.model_name = "teacher-x";
  const HttpBackend http(cfg);
  const auto out = http.sample_n("the prompt", {8, 0.6, 0.95, 5});
  CHECK(out.size() == 8);
  CHECK(out[3].text == "reply 3");
  CHECK(*out[0].token_logprobs == std::vector<double>{-0.5});

  const auto bodies = server.bodies();
  REQUIRE(bodies.size() == 1);
  const auto& b = bodies[0];
  CHECK(b["temperature"] == 0.6);
  CHECK(b["top_p"] == 0.95);
  CHECK(b["n"] == 8);
  CHECK(b["logprobs"] == true);
  CHECK(b["model"] == "teacher-x");
  CHECK(b["messages"][1]["content"] == "the prompt");
  CHECK(b["messages"][1]["role"] == "user");
  CHECK(server.auth()[0] == "Bearer sekret");
  CHECK(http.response_ids() == std::vector<std::string>{"resp"});
  ::unsetenv("FORGE_TEST_TOKEN_SET");
}

TEST_CASE("http falls back to single requests when n is rejected") {
  CaptureServer server([](const json& body, httplib::Response& res) {
    if (body.value("n", 1) > 1) {
      res.status = 400;
      res.set_content("{\"error\":\"n must be 1\"}", "application/json");
      return;
    }
    reply_n(body, res);
  });
  const HttpBackend http(config_for(server));
  const auto out = http.sample_n("p", {8, 0.6, 0.95, 5});
  CHECK(out.size() == 8);
  auto bodies = server.bodies();
  CHECK(bodies.size() == 9);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 1; i < bodies.size(); ++i) {
    CHECK(bodies[i]["n"] == 1);
    CHECK(bodies[i]["temperature"] == 0.6);
    seeds.insert(bodies[i]["seed"].get<std::uint64_t>());
  }
  CHECK(seeds.size() == 8);
  // The rejection is remembered.
  http.sample_n("p", {4, 0.6, 0.95, 5});
  bodies = server.bodies();
  CHECK(bodies.size() == 13);
  CHECK(bodies.back()["n"] == 1);
}

TEST_CASE("http tops up short batches and reports truncation") {
  SUBCASE("second request completes the batch") {
    CaptureServer server([](const json& body, httplib::Response& res) { reply_n(body, res, 5); });
    const HttpBackend http(config_for(server));
    CHECK(http.sample_n("p", {8, 0.6, 0.95, 5}).size() == 8);
    const auto bodies = server.bodies();
    REQUIRE(bodies.size() == 2);
    CHECK(bodies[1]["n"] == 3);
  }
  SUBCASE("endpoint stops producing") {
    std::atomic<int> calls{0};
    CaptureServer server([&](const json& body, httplib::Response& res) {
      reply_n(body, res, calls++ == 0 ? 5 : 0);
    });
    const HttpBackend http(config_for(server));
    CHECK(error_of([&] { http.sample_n("p", {8, 0.6, 0.95, 5}); }) == ErrorCode::kTruncated);
    calls = 0;
    CHECK(error_index_of([&] { http.sample_n("p", {8, 0.6, 0.95, 5}); }) == std::size_t{5});
  }
}

TEST_CASE("http status handling") {
  SUBCASE("credentials refused") {
    CaptureServer server([](const json&, httplib::Response& res) { res.status = 401; });
    const HttpBackend http(config_for(server));
    CHECK(error_of([&] { http.greedy("p", 1); }) == ErrorCode::kAuth);
    CHECK(server.bodies().size() == 1);
  }
  SUBCASE("transient errors are retried") {
    std::atomic<int> calls{0};
    CaptureServer server([&](const json& body, httplib::Response& res) {
      if (calls++ < 2) {
        res.status = 503;
        return;
      }
      reply_n(body, res);
    });
    const HttpBackend http(config_for(server));
    CHECK(http.greedy("p", 1).text == "reply 0");
    CHECK(server.bodies().size() == 3);
    CHECK(server.bodies()[0]["temperature"] == 0.0);
  }
  SUBCASE("persistent errors become transport failures") {
    CaptureServer server([](const json&, httplib::Response& res) { res.status = 500; });
    const HttpBackend http(config_for(server));
    CHECK(error_of([&] { http.greedy("p", 1); }) == ErrorCode::kTransport);
    CHECK(server.bodies().size() == 3);
  }
  SUBCASE("garbage body") {
    CaptureServer server([](const json&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
    const HttpBackend http(config_for(server));
    CHECK(error_of([&] { http.greedy("p", 1); }) == ErrorCode::kBadResponse);
  }
}

TEST_CASE("http endpoint unreachable") {
  std::string url;
  {
    CaptureServer gone([](const json&, httplib::Response&) {});
    url = gone.url();
  }
  BackendConfig cfg;
  cfg.base_url = url;
  cfg.retry.max_attempts = 2;
  cfg.retry.backoff_base_seconds = 0;
  cfg.request_timeout_seconds = 2;
  const HttpBackend http(cfg);
  CHECK(error_of([&] { http.greedy("p", 1); }) == ErrorCode::kTransport);
}

TEST_CASE("http judge reads first-token alternatives") {
  SUBCASE("both tokens") {
    CaptureServer server([](const json&, httplib::Response& res) {
      const json top = json::array({{{"token", "1"}, {"logprob", std::log(0.8)}},
                                    {{"token", "0"}, {"logprob", std::log(0.2)}}});
      res.set_content(completion_body({choice(0, "1", token_logprobs({{"1", std::log(0.8)}}, top))}),
                      "application/json");
    });
    const HttpBackend http(config_for(server));
    CHECK(http.positive_token_probability("judge me") == doctest::Approx(0.8));
    const auto b = server.bodies()[0];
    CHECK(b["max_tokens"] == 1);
    CHECK(b["temperature"] == 0.0);
    CHECK(b["top_logprobs"] == 5);
  }
  SUBCASE("only the positive token") {
    CaptureServer server([](const json&, httplib::Response& res) {
      res.set_content(completion_body({choice(0, "1", token_logprobs({{"1", std::log(0.6)}}))}),
                      "application/json");
    });
    const HttpBackend http(config_for(server));
    CHECK(http.positive_token_probability("judge me") == doctest::Approx(0.6));
  }
  SUBCASE("positive token absent") {
    CaptureServer server([](const json&, httplib::Response& res) {
      res.set_content(completion_body({choice(0, "0", token_logprobs({{"0", -0.01}}))}), "application/json");
    });
    const HttpBackend http(config_for(server));
    CHECK(http.positive_token_probability("judge me") == 0.0);
  }
  SUBCASE("no log-probabilities") {
    CaptureServer server([](const json&, httplib::Response& res) {
      res.set_content(completion_body({choice(0, "1")}), "application/json");
    });
    const HttpBackend http(config_for(server));
    CHECK(error_of([&] { http.positive_token_probability("judge me"); }) == ErrorCode::kNoLogprobs);
  }
}

TEST_CASE("http transcript and batch ordering") {
  TempDir dir;
  CaptureServer server([](const json& body, httplib::Response& res) {
    const std::string prompt = body["messages"][1]["content"];
    std::vector<json> cs;
    for (int i = 0; i < body.value("n", 1); ++i) cs.push_back(choice(i, prompt + "/" + std::to_string(i)));
    res.set_content(completion_body(cs), "application/json");
  });
  auto cfg = config_for(server);
  cfg.transcript_path = dir / "wire.jsonl";
  const HttpBackend http(cfg);
  std::vector<std::string> prompts;
  for (int i = 0; i < 7; ++i) prompts.push_back("p" + std::to_string(i));
  const auto out = http.sample_batch(prompts, {2, 0.6, 0.95, 1}, 3);
  REQUIRE(out.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(out[i][0].text == prompts[i] + "/0");
    CHECK(out[i][1].text == prompts[i] + "/1");
  }
  std::istringstream lines(slurp(dir / "wire.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = json::parse(line);
    CHECK(j["status"] == 200);
    CHECK(j["request"]["n"] == 2);
    ++n;
  }
  CHECK(n == 7);
}

}  // TEST_SUITE
