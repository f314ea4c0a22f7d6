#include <cmath>
#include <limits>

#include "doctest.h"
#include "json.hpp"

#include "forge/reward.hpp"
#include "forge/rng.hpp"
#include "forge/synth.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

// Scores by lookup of the whole text; unknown texts score 0.
class TableJudge : public Judge {
 public:
  std::map<std::string, double> table;
  double score(std::string_view text, const MultimodalInstance*) const override {
    auto it = table.find(std::string(text));
    return it == table.end() ? 0.0 : it->second;
  }
  std::string name() const override { return "table"; }
};

class FailingJudge : public Judge {
 public:
  explicit FailingJudge(std::string poison) : poison_(std::move(poison)) {}
  double score(std::string_view text, const MultimodalInstance*) const override {
    if (text == poison_) throw Error(ErrorCode::kTransport, "judge endpoint went away");
    return 0.5;
  }
  std::string name() const override { return "failing"; }

 private:
  std::string poison_;
};

TrajectoryGroup group_of(const std::vector<std::string>& texts) {
  TrajectoryGroup g;
  g.instance_id = "g";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Trajectory t;
    t.instance_id = "g";
    t.raw_text = texts[i];
    t.sample_index = static_cast<int>(i);
    g.members.push_back(t);
  }
  return g;
}

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("default weights") {
  RewardWeights w;
  CHECK(w.lambda_a == 1.0);
  CHECK(w.lambda_f == 0.5);
  CHECK(w.lambda_g == 1.0);
  CHECK_NOTHROW(w.validate());
  w.lambda_f = -0.1;
  CHECK(error_of([&] { w.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("accuracy reward") {
  CHECK(accuracy_reward(parse_trajectory("<think>a</think><answer>yes</answer>"), Label::kSarcastic) == 1);
  CHECK(accuracy_reward(parse_trajectory("<think>a</think><answer>no</answer>"), Label::kSarcastic) == 0);
  CHECK(accuracy_reward(parse_trajectory("<think>a</think><answer>maybe</answer>"), Label::kSarcastic) == 0);
  // Malformed but labeled still counts for accuracy.
  CHECK(accuracy_reward(parse_trajectory("<answer>no</answer>"), Label::kNonSarcastic) == 1);
}

TEST_CASE("total reward examples") {
  CHECK(total_reward(1, 1, 0.8, RewardWeights{}) == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(total_reward(0, 0, 0, RewardWeights{}) == 0.0);
  CHECK(total_reward(1, 0, 0.5, RewardWeights{2, 0.5, 1}) == 2.5);
  CHECK(total_reward(1, 1, 1, RewardWeights{}) == 2.5);
}

TEST_CASE("total reward range check") {
  CHECK(error_of([] { total_reward(1, 1, 1.0000001, RewardWeights{}); }) == ErrorCode::kOutOfRange);
  CHECK(error_of([] { total_reward(1, 1, -0.0001, RewardWeights{}); }) == ErrorCode::kOutOfRange);
  CHECK(error_of([] { total_reward(1, 1, std::nan(""), RewardWeights{}); }) == ErrorCode::kOutOfRange);
}

TEST_CASE("total reward is exact on representable inputs") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const int a = static_cast<int>(rng.below(2));
    const int f = static_cast<int>(rng.below(2));
    const double g = static_cast<double>(rng.below(1025)) / 1024.0;
    // a + f/2 + g is exact in binary floating point.
    CHECK(total_reward(a, f, g, RewardWeights{}) - (a + f / 2.0 + g) == 0.0);
  }
}

TEST_CASE("total reward is linear in each channel") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const RewardWeights w{rng.uniform() * 3, rng.uniform() * 3, rng.uniform() * 3};
    const double g1 = rng.uniform(), g2 = rng.uniform();
    const double base = total_reward(0, 0, 0, w);
    CHECK(base == 0.0);
    const double sum = total_reward(1, 1, g1, w);
    const double parts = total_reward(1, 0, 0, w) + total_reward(0, 1, 0, w) + total_reward(0, 0, g1, w);
    CHECK(sum == doctest::Approx(parts).epsilon(1e-14));
    const double scaled = total_reward(0, 0, 0.5 * g2, w);
    CHECK(scaled == doctest::Approx(0.5 * total_reward(0, 0, g2, w)).epsilon(1e-14));
    const RewardWeights w2{2 * w.lambda_a, 2 * w.lambda_f, 2 * w.lambda_g};
    CHECK(total_reward(1, 1, g1, w2) == doctest::Approx(2 * sum).epsilon(1e-14));
  }
}

TEST_CASE("three correct members with judge score one total 2.5") {
  const std::string good_a = "<think>a</think><answer>sarcastic</answer>";
  const std::string good_b = "<think>b</think><answer>yes</answer>";
  const std::string good_c = "<think>c</think>\n<answer>true</answer>";
  const std::vector<std::string> texts{good_a,
                                       "<think>d</think><answer>no</answer>",
                                       good_b,
                                       "<answer>sarcastic</answer>",
                                       "<think>e</think><answer>maybe</answer>",
                                       good_c,
                                       "",
                                       "<think>f</think> x <answer>no</answer>"};
  TableJudge judge;
  for (const auto& t : {good_a, good_b, good_c}) judge.table[t] = 1.0;
  const auto out = score_group(group_of(texts), Label::kSarcastic, judge, RewardWeights{});
  REQUIRE(out.size() == 8);
  for (std::size_t i : {0u, 2u, 5u}) CHECK(out[i].total == 2.5);
  // Hand totals for the rest: wrong label well formed 0.5; malformed-but-correct 1.0;
  // unparseable 0; empty 0; wrong label with noise 0.
  CHECK(out[1].total == 0.5);
  CHECK(out[3].total == 1.0);
  CHECK(out[3].r_fmt == 0);
  CHECK(out[4].total == 0.0);
  CHECK(out[6].total == 0.0);
  CHECK(out[7].total == 0.0);
  for (const auto& b : out) {
    CHECK(b.weights == RewardWeights{});
    CHECK(b.total == total_reward(b.r_acc, b.r_fmt, b.r_genrm, b.weights));
  }
}

TEST_CASE("group scoring is deterministic") {
  const auto inst = synth::generate_instances(1, 4).front();
  Rng rng(1);
  std::vector<std::string> texts;
  for (int i = 0; i < 8; ++i) {
    texts.push_back(synth::sample_teacher(*synth::instance_cues(inst), synth::TeacherProfile{},
                                          0.6, 0.95, true, rng).text);
  }
  const synth::OracleJudge judge;
  const auto a = score_group(group_of(texts), inst.gold_label, judge, RewardWeights{}, &inst);
  const auto b = score_group(group_of(texts), inst.gold_label, judge, RewardWeights{}, &inst);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].total == b[i].total);
    CHECK(a[i].r_genrm == b[i].r_genrm);
  }
}

TEST_CASE("judge failure names the member index") {
  const std::vector<std::string> texts{"a", "b", "c", "d", "e", "poison", "g", "h"};
  FailingJudge judge("poison");
  CHECK(error_of([&] { score_group(group_of(texts), Label::kSarcastic, judge, RewardWeights{}); }) ==
        ErrorCode::kJudgeFailure);
  CHECK(error_index_of([&] {
          score_group(group_of(texts), Label::kSarcastic, judge, RewardWeights{});
        }) == std::size_t{5});
}

TEST_CASE("groups need two members") {
  TableJudge judge;
  CHECK(error_of([&] { score_group(group_of({"x"}), Label::kSarcastic, judge, RewardWeights{}); }) ==
        ErrorCode::kGroupTooSmall);
}

TEST_CASE("totals stay within the weight bound") {
  Rng rng(6);
  const char* pieces[] = {"<think>", "</think>", "<answer>", "</answer>", "yes", "no", "x ", " "};
  TableJudge judge;
  for (int i = 0; i < 2000; ++i) {
    std::string t;
    for (std::size_t k = rng.below(8); k > 0; --k) t += pieces[rng.below(8)];
    judge.table[t] = rng.uniform();
    const auto b = score_trajectory(t, rng.below(2) ? Label::kSarcastic : Label::kNonSarcastic,
                                    judge, RewardWeights{});
    CHECK(b.total >= 0.0);
    CHECK(b.total <= 2.5);
  }
}

TEST_CASE("reward trace lines") {
  TempDir dir;
  {
    RewardTraceWriter w(dir / "trace" / "r.jsonl");
    RewardBreakdown b{1, 1, 0.25, 1.75, RewardWeights{}};
    w.append(3, "synth-00001", 2, b);
    w.append(4, "synth-00002", 0, b);
  }
  std::istringstream in(slurp(dir / "trace" / "r.jsonl"));
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["step"] == 3);
  CHECK(j["instance_id"] == "synth-00001");
  CHECK(j["member"] == 2);
  CHECK(j["total"] == 1.75);
  CHECK(j["weights"] == nlohmann::json::array({1.0, 0.5, 1.0}));
  CHECK(std::getline(in, line));
}

}  // TEST_SUITE
