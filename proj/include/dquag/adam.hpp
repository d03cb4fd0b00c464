#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dquag/autodiff.hpp"

namespace dquag::ad {

struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One bias-corrected Adam update over `params` using their accumulated
/// gradients. Moments are allocated on first use.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace dquag::ad
