#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "json.hpp"

#include "forge/metrics.hpp"
#include "forge/rng.hpp"
#include "test_support.hpp"

using namespace forge;
using namespace forge::testing;

namespace {

constexpr auto S = Label::kSarcastic;
constexpr auto N = Label::kNonSarcastic;

// Per-class precision/recall/F1 straight from the prediction lists.
struct BruteForce {
  double accuracy;
  double macro_f1;
};

BruteForce brute_force(const std::vector<std::optional<Label>>& preds, const std::vector<Label>& golds) {
  double f1_sum = 0;
  for (Label c : {S, N}) {
    double predicted_c = 0, gold_c = 0, both = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      // An absent prediction is the wrong class.
      const Label p = preds[i] ? *preds[i] : (golds[i] == S ? N : S);
      predicted_c += p == c;
      gold_c += golds[i] == c;
      both += p == c && golds[i] == c;
    }
    const double precision = predicted_c > 0 ? both / predicted_c : 0;
    const double rec = gold_c > 0 ? both / gold_c : 0;
    f1_sum += precision + rec > 0 ? 2 * precision * rec / (precision + rec) : 0;
  }
  double hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] && *preds[i] == golds[i];
  return {hits / static_cast<double>(preds.size()), f1_sum / 2};
}

class ListJudge : public Judge {
 public:
  explicit ListJudge(std::map<std::string, double> m) : m_(std::move(m)) {}
  double score(std::string_view t, const MultimodalInstance*) const override {
    return m_.at(std::string(t));
  }
  std::string name() const override { return "list"; }

 private:
  std::map<std::string, double> m_;
};

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion enumeration") {
  const std::vector<std::optional<Label>> p{S, S, N, N};
  const std::vector<Label> g{S, N, S, N};
  CHECK(confusion(p, g) == ConfusionMatrix{1, 1, 1, 1});
  CHECK(accuracy(confusion(p, g)) == 0.5);
  const std::vector<std::optional<Label>> all_right{S, N, S, N};
  const auto m = confusion(all_right, g);
  CHECK(m.fp == 0);
  CHECK(m.fn == 0);
}

TEST_CASE("absent predictions count against the gold") {
  const std::vector<std::optional<Label>> p{std::nullopt, std::nullopt};
  const std::vector<Label> g{S, N};
  const auto m = confusion(p, g);
  CHECK(m.fn == 1);
  CHECK(m.fp == 1);
  CHECK(m.tp + m.tn == 0);
  const std::vector<std::optional<Label>> short_list{S};
  CHECK(error_of([&] { confusion(short_list, g); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("macro f1 hand examples") {
  // sarcastic F1 = 14/19, non-sarcastic F1 = 16/21
  CHECK(macro_f1({7, 3, 2, 8}) == doctest::Approx((14.0 / 19 + 16.0 / 21) / 2).epsilon(1e-15));
  CHECK(std::abs(macro_f1({7, 3, 2, 8}) - 0.74937) < 1e-5);
  CHECK(macro_f1({5, 0, 0, 5}) == 1.0);
  CHECK(macro_f1({5, 5, 0, 0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(error_of([] { macro_f1({}); }) == ErrorCode::kEmptyMatrix);
  CHECK(error_of([] { accuracy({}); }) == ErrorCode::kEmptyMatrix);
}

TEST_CASE("metrics agree with a brute-force recomputation") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<std::optional<Label>> p;
    std::vector<Label> g;
    for (std::size_t i = 0; i < n; ++i) {
      g.push_back(rng.below(2) ? S : N);
      const auto r = rng.below(5);
      p.push_back(r == 0 ? std::nullopt : std::optional<Label>(r % 2 ? S : N));
    }
    const auto m = confusion(p, g);
    const auto ref = brute_force(p, g);
    CHECK(m.total() == n);
    CHECK(std::abs(accuracy(m) - ref.accuracy) <= 1e-12);
    CHECK(std::abs(macro_f1(m) - ref.macro_f1) <= 1e-12);
    CHECK(accuracy(m) == static_cast<double>(m.tp + m.tn) / static_cast<double>(n));
  }
}

TEST_CASE("label swap symmetry") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    ConfusionMatrix m{rng.below(20), rng.below(20), rng.below(20), rng.below(20)};
    if (m.total() == 0) continue;
    const ConfusionMatrix swapped{m.tn, m.fn, m.fp, m.tp};
    CHECK(macro_f1(m) == doctest::Approx(macro_f1(swapped)).epsilon(1e-15));
    CHECK(macro_f1(m) >= 0.0);
    CHECK(macro_f1(m) <= 1.0);
    CHECK(accuracy(m) >= 0.0);
    CHECK(accuracy(m) <= 1.0);
  }
}

TEST_CASE("row normalization") {
  const auto half = normalize_rows({1, 1, 1, 1});
  for (const auto& row : half)
    for (double v : row) CHECK(v == 0.5);
  const auto zeros = normalize_rows({0, 3, 0, 1});
  CHECK(zeros[0][0] == 0.0);
  CHECK(zeros[0][1] == 0.0);
  CHECK(zeros[1][0] == 0.75);
  CHECK(zeros[1][1] == 0.25);
  // Non-sarcastic row with 45 false positives out of 100 reads 0.45 / 0.55.
  const auto sft_like = normalize_rows({70, 45, 30, 55});
  CHECK(sft_like[1][0] == doctest::Approx(0.45));
  CHECK(sft_like[1][1] == doctest::Approx(0.55));
  const auto final_like = normalize_rows({70, 33, 30, 67});
  CHECK(final_like[1][0] == doctest::Approx(0.33));
  CHECK(final_like[1][1] == doctest::Approx(0.67));
  CHECK(recall({70, 33, 30, 67}) == doctest::Approx(0.70));

  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    ConfusionMatrix m{rng.below(9), rng.below(9), rng.below(9), rng.below(9)};
    const auto r = normalize_rows(m);
    if (m.tp + m.fn) CHECK(r[0][0] + r[0][1] == doctest::Approx(1.0).epsilon(1e-9));
    if (m.fp + m.tn) CHECK(r[1][0] + r[1][1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(recall(m) == r[0][0]);
  }
}

TEST_CASE("gar ratio and threshold boundary") {
  std::map<std::string, double> scores;
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) {
    texts.push_back("t" + std::to_string(i));
    scores[texts.back()] = i == 4 ? 0.2 : 0.9;
  }
  const ListJudge judge(scores);
  CHECK(gar(texts, judge) == doctest::Approx(0.9));

  std::map<std::string, double> halves{{"a", 0.5}, {"b", 0.5}};
  const std::vector<std::string> ab{"a", "b"};
  CHECK(gar(ab, ListJudge(halves)) == 1.0);
  CHECK(gar(ab, ListJudge(halves), 0.6) == 0.0);
  CHECK(error_of([&] { gar({}, judge); }) == ErrorCode::kEmptySet);
}

TEST_CASE("gar is invariant under reordering") {
  Rng rng(10);
  std::map<std::string, double> scores;
  std::vector<std::string> texts;
  for (int i = 0; i < 40; ++i) {
    texts.push_back("x" + std::to_string(i));
    scores[texts.back()] = rng.uniform();
  }
  const ListJudge judge(scores);
  const double base = gar(texts, judge);
  for (int k = 0; k < 20; ++k) {
    rng.shuffle(std::span<std::string>(texts));
    CHECK(gar(texts, judge) == base);
  }
}

TEST_CASE("gar passes contexts through") {
  class ContextJudge : public Judge {
   public:
    double score(std::string_view, const MultimodalInstance* ctx) const override {
      return ctx && ctx->gold_label == Label::kSarcastic ? 1.0 : 0.0;
    }
    std::string name() const override { return "ctx"; }
  } judge;
  const auto a = make_instance("a", S), b = make_instance("b", N);
  const std::vector<std::string> texts{"x", "y"};
  const std::vector<const MultimodalInstance*> ctx{&a, &b};
  CHECK(gar(texts, judge, 0.5, ctx) == 0.5);
  const std::vector<const MultimodalInstance*> bad{&a};
  CHECK(error_of([&] { gar(texts, judge, 0.5, bad); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("report outputs") {
  const std::vector<std::optional<Label>> p{S, S, N, std::nullopt};
  const std::vector<Label> g{S, N, S, N};
  const auto r = make_report(p, g, 0.75);
  CHECK(r.n == 4);
  CHECK(r.accuracy == 0.25);
  CHECK(r.confusion == ConfusionMatrix{1, 2, 1, 0});

  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["accuracy"] == 0.25);
  CHECK(j["gar"] == 0.75);
  CHECK(j["n"] == 4);

  const auto table = report_table(r, "demo");
  CHECK(table.find("demo") != std::string::npos);
  CHECK(table.find("percent") != std::string::npos);

  const auto csv = confusion_csv(r);
  CHECK(csv.find("sarcastic") != std::string::npos);
  std::istringstream lines(csv);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 3);

  const auto no_gar = make_report(p, g, std::nullopt);
  CHECK(nlohmann::json::parse(report_json(no_gar))["gar"].is_null());
}

}  // TEST_SUITE
