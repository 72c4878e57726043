#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nwc/autodiff.hpp"

namespace nwc::nn {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// Bias-corrected Adam update, in place. Moments are allocated on the first
/// call; later calls must pass parameters of the same shapes in the same order.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state, float lr);

/// Same, reading gradients from Parameter::grad.
void adam_step(std::span<Parameter* const> params, AdamState& state, float lr);

}  // namespace nwc::nn
