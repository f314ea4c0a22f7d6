#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/judge.hpp"
#include "forge/types.hpp"

namespace forge {

// Positive class is SARCASTIC.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Rows are true classes (sarcastic, non-sarcastic), columns predicted
// classes in the same order.
using NormalizedRows = std::array<std::array<double, 2>, 2>;

// Absent predictions count as wrong: fn for a sarcastic gold, fp otherwise.
ConfusionMatrix confusion(std::span<const std::optional<Label>> predictions,
                          std::span<const Label> golds);

double accuracy(const ConfusionMatrix& m);

// Mean of the two per-class F1 scores; a class whose F1 denominator is zero
// contributes 0. Throws kEmptyMatrix on an all-zero matrix.
double macro_f1(const ConfusionMatrix& m);

// Each row divided by its sum; all-zero rows stay zero.
NormalizedRows normalize_rows(const ConfusionMatrix& m);

// Recall of the sarcastic class (normalized tp cell).
double recall(const ConfusionMatrix& m);

// Fraction of trajectories whose judge score is >= threshold. contexts, when
// non-empty, must align with texts. Throws kEmptySet on an empty list.
double gar(std::span<const std::string> trajectory_texts, const Judge& judge,
           double threshold = 0.5,
           std::span<const MultimodalInstance* const> contexts = {});

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> gar;
  ConfusionMatrix confusion;
  NormalizedRows normalized_rows{};
  std::size_t n = 0;
};

MetricsReport make_report(std::span<const std::optional<Label>> predictions,
                          std::span<const Label> golds, std::optional<double> gar_value);

std::string report_table(const MetricsReport& report, std::string_view title = "");
std::string report_json(const MetricsReport& report);
std::string confusion_csv(const MetricsReport& report);

}  // namespace forge
