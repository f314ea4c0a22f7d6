#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "forge/types.hpp"

namespace forge {

// Class-stratified train/val/test partition. For each class with n_c items
// the test split takes floor(n_c * r_test), val takes floor(n_c * r_val) and
// train keeps the remainder. Within-class order is a seeded permutation;
// each split lists its members in input order.
//
// Throws kBadRatios when a ratio is nonpositive or the sum is off 1 by more
// than 1e-9, kEmptyClass when either label is missing.
DatasetSplit stratified_split(std::span<const MultimodalInstance> instances,
                              const std::array<double, 3>& ratios,
                              std::uint64_t seed);

}  // namespace forge
