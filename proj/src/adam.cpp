#include "nwc/adam.hpp"

#include <cmath>

namespace nwc::nn {

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state, float lr) {
  if (!(lr > 0.0f)) throw ContractViolation("adam_step: lr must be positive");
  if (params.size() != grads.size()) throw ContractViolation("adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.emplace_back(p->rows, p->cols);
      state.second_moment.emplace_back(p->rows, p->cols);
    }
  }
  if (state.first_moment.size() != params.size()) throw ContractViolation("adam_step: state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i]))
      throw ContractViolation("adam_step: shape mismatch for parameter " + std::to_string(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  const float b1 = state.beta1;
  const float b2 = state.beta2;

  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i]->data.data();
    const float* g = grads[i]->data.data();
    float* m = state.first_moment[i].data.data();
    float* v = state.second_moment[i].data.data();
    const std::size_t n = params[i]->size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / bc1;
      const float v_hat = v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, float lr) {
  std::vector<Matrix*> values;
  std::vector<const Matrix*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Parameter* p : params) {
    if (!p->grad.same_shape(p->value)) p->zero_grad();
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(values, grads, state, lr);
}

}  // namespace nwc::nn
