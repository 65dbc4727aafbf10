#pragma once

#include <cstdint>
#include <vector>

#include "ape/tensor.hpp"

namespace ape {

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;  // first moments, one buffer per parameter
  std::vector<std::vector<T>> v;  // second moments
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;

  // Zero-initialized moments shaped after `params`.
  static AdamState for_params(const std::vector<Tensor<T>>& params);
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// A parameter whose gradient is absent or identically zero is skipped
// entirely (moments included), so zero-gradient steps never move weights.
// Throws NumericError (naming the parameter index) on a non-finite gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr);

// Inverse-square-root schedule with linear warmup:
// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_schedule(std::int64_t step, std::int64_t d_model, std::int64_t warmup);

// Global L2 norm of all parameter gradients (before clipping). Gradients are
// rescaled in place when the norm exceeds max_norm (max_norm <= 0 disables).
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace ape
