#include "forge/split.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

// Products like 20 * 0.15 land a hair below the integer in binary floating
// point; the slack keeps floor() on the intended side.
std::size_t floor_share(std::size_t count, double ratio) {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(count) * ratio + 1e-9));
}

}  // namespace

DatasetSplit stratified_split(std::span<const MultimodalInstance> instances,
                              const std::array<double, 3>& ratios,
                              std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error(ErrorCode::kBadRatios, "ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::kBadRatios, "ratios must sum to 1");
  }

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    by_class[instances[i].gold_label == Label::kSarcastic ? 0 : 1].push_back(i);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    if (by_class[c].empty()) {
      throw Error(ErrorCode::kEmptyClass,
                  std::string("no instances labeled ") +
                      std::string(label_name(c == 0 ? Label::kSarcastic
                                                    : Label::kNonSarcastic)));
    }
  }

  // 0 = train, 1 = val, 2 = test.
  std::vector<int> assignment(instances.size(), 0);
  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    Rng rng(derive_seed(seed, c == 0 ? "split/sarcastic" : "split/non-sarcastic"));
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t n_test = floor_share(members.size(), ratios[2]);
    const std::size_t n_val = floor_share(members.size(), ratios[1]);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_test) {
        assignment[members[k]] = 2;
      } else if (k < n_test + n_val) {
        assignment[members[k]] = 1;
      }
    }
  }

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    switch (assignment[i]) {
      case 0: split.train.push_back(instances[i]); break;
      case 1: split.val.push_back(instances[i]); break;
      default: split.test.push_back(instances[i]); break;
    }
  }
  return split;
}

}  // namespace forge
