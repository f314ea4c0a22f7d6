#include "forge/metrics.hpp"

#include <cstdio>

#include "json.hpp"

#include "forge/error.hpp"

namespace forge {

namespace {

double f1(std::size_t true_pos, std::size_t false_pos, std::size_t false_neg) {
  // F1 = 2TP / (2TP + FP + FN); zero when the class never appears on either side.
  const std::size_t denom = 2 * true_pos + false_pos + false_neg;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(true_pos) / static_cast<double>(denom);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

ConfusionMatrix confusion(std::span<const std::optional<Label>> predictions,
                          std::span<const Label> golds) {
  if (predictions.size() != golds.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(golds.size()) + " gold labels");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool gold_pos = golds[i] == Label::kSarcastic;
    if (!predictions[i]) {
      ++(gold_pos ? m.fn : m.fp);
      continue;
    }
    const bool pred_pos = *predictions[i] == Label::kSarcastic;
    if (gold_pos && pred_pos) ++m.tp;
    else if (!gold_pos && pred_pos) ++m.fp;
    else if (gold_pos && !pred_pos) ++m.fn;
    else ++m.tn;
  }
  return m;
}

double accuracy(const ConfusionMatrix& m) {
  if (m.total() == 0) throw Error(ErrorCode::kEmptyMatrix, "no scored predictions");
  return static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
}

double macro_f1(const ConfusionMatrix& m) {
  if (m.total() == 0) throw Error(ErrorCode::kEmptyMatrix, "no scored predictions");
  // The negative class sees tn as its true positives, fn as its false positives.
  return 0.5 * (f1(m.tp, m.fp, m.fn) + f1(m.tn, m.fn, m.fp));
}

NormalizedRows normalize_rows(const ConfusionMatrix& m) {
  NormalizedRows rows{};
  const double pos = static_cast<double>(m.tp + m.fn);
  const double neg = static_cast<double>(m.fp + m.tn);
  if (pos > 0) rows[0] = {static_cast<double>(m.tp) / pos, static_cast<double>(m.fn) / pos};
  if (neg > 0) rows[1] = {static_cast<double>(m.fp) / neg, static_cast<double>(m.tn) / neg};
  return rows;
}

double recall(const ConfusionMatrix& m) { return normalize_rows(m)[0][0]; }

double gar(std::span<const std::string> trajectory_texts, const Judge& judge, double threshold,
           std::span<const MultimodalInstance* const> contexts) {
  if (trajectory_texts.empty()) throw Error(ErrorCode::kEmptySet, "GAR of an empty set");
  if (!contexts.empty() && contexts.size() != trajectory_texts.size()) {
    throw Error(ErrorCode::kLengthMismatch, "contexts must align with trajectories");
  }
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < trajectory_texts.size(); ++i) {
    const MultimodalInstance* ctx = contexts.empty() ? nullptr : contexts[i];
    if (judge.score(trajectory_texts[i], ctx) >= threshold) ++accepted;
  }
  return static_cast<double>(accepted) / static_cast<double>(trajectory_texts.size());
}

MetricsReport make_report(std::span<const std::optional<Label>> predictions,
                          std::span<const Label> golds, std::optional<double> gar_value) {
  MetricsReport r;
  r.confusion = confusion(predictions, golds);
  r.accuracy = accuracy(r.confusion);
  r.macro_f1 = macro_f1(r.confusion);
  r.normalized_rows = normalize_rows(r.confusion);
  r.gar = gar_value;
  r.n = r.confusion.total();
  return r;
}

std::string report_table(const MetricsReport& r, std::string_view title) {
  std::string out;
  if (!title.empty()) out += std::string(title) + "\n";
  out += "metric            fraction   percent\n";
  out += "accuracy          " + fixed(r.accuracy, 4) + "     " + fixed(100 * r.accuracy, 2) + "\n";
  out += "macro_f1          " + fixed(r.macro_f1, 4) + "     " + fixed(100 * r.macro_f1, 2) + "\n";
  if (r.gar) out += "gar               " + fixed(*r.gar, 4) + "     " + fixed(100 * *r.gar, 2) + "\n";
  out += "n                 " + std::to_string(r.n) + "\n\n";
  out += "row-normalized confusion (rows = truth, cols = predicted)\n";
  out += "                  sarcastic  non-sarcastic\n";
  out += "sarcastic         " + fixed(r.normalized_rows[0][0], 4) + "     " +
         fixed(r.normalized_rows[0][1], 4) + "\n";
  out += "non-sarcastic     " + fixed(r.normalized_rows[1][0], 4) + "     " +
         fixed(r.normalized_rows[1][1], 4) + "\n";
  out += "counts: tp=" + std::to_string(r.confusion.tp) + " fp=" + std::to_string(r.confusion.fp) +
         " fn=" + std::to_string(r.confusion.fn) + " tn=" + std::to_string(r.confusion.tn) + "\n";
  return out;
}

std::string report_json(const MetricsReport& r) {
  nlohmann::json doc{
      {"units", "fraction"},
      {"accuracy", r.accuracy},
      {"macro_f1", r.macro_f1},
      {"gar", r.gar ? nlohmann::json(*r.gar) : nlohmann::json(nullptr)},
      {"n", r.n},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                     {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
      {"normalized_rows", {{r.normalized_rows[0][0], r.normalized_rows[0][1]},
                           {r.normalized_rows[1][0], r.normalized_rows[1][1]}}},
  };
  return doc.dump(2) + "\n";
}

std::string confusion_csv(const MetricsReport& r) {
  std::string out = "truth,pred_sarcastic,pred_non_sarcastic\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "sarcastic,%.17g,%.17g\n", r.normalized_rows[0][0],
                r.normalized_rows[0][1]);
  out += buf;
  std::snprintf(buf, sizeof(buf), "non-sarcastic,%.17g,%.17g\n", r.normalized_rows[1][0],
                r.normalized_rows[1][1]);
  out += buf;
  return out;
}

}  // namespace forge
