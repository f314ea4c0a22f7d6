#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "forge/rng.hpp"
#include "forge/types.hpp"

namespace forge {

// A parametric generator that the GRPO optimizer can train: it samples
// trajectories, re-scores them token by token, and differentiates those
// token log-probabilities with respect to a flat parameter vector.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::unique_ptr<Policy> clone() const = 0;

  virtual std::span<const double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> values) = 0;
  std::size_t num_parameters() const { return parameters().size(); }

  // Returned trajectories carry token_logprobs under this policy.
  virtual Trajectory sample(const MultimodalInstance& instance, Rng& rng) const = 0;
  virtual Trajectory greedy(const MultimodalInstance& instance) const = 0;

  virtual std::vector<double> token_logprobs(const Trajectory& trajectory,
                                             const MultimodalInstance& instance) const = 0;

  // grad += sum_t token_weights[t] * d logp_t / d params
  virtual void accumulate_logprob_gradient(const Trajectory& trajectory,
                                           const MultimodalInstance& instance,
                                           std::span<const double> token_weights,
                                           std::span<double> grad) const = 0;
};

}  // namespace forge
