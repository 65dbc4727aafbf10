#include "ape/optim.hpp"

#include <cmath>
#include <string>

#include "ape/errors.hpp"

namespace ape {

template <typename T>
AdamState<T> AdamState<T>::for_params(const std::vector<Tensor<T>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), T(0));
    s.v.emplace_back(p.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad()) continue;
    for (T g : params[k].grad_mut()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k));
      }
    }
  }
  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("adam_step: moment buffers do not match parameter " + std::to_string(k));
    }
    if (!p.has_grad()) continue;
    const auto g = p.grad_mut();
    bool all_zero = true;
    for (T gi : g) all_zero = all_zero && gi == T(0);
    if (all_zero) continue;
    auto data = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = T(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = T(b2 * v[i] + (1.0 - b2) * g[i] * g[i]);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] = T(data[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

double lr_schedule(std::int64_t step, std::int64_t d_model, std::int64_t warmup) {
  if (step < 1) throw ContractError("lr_schedule: step must be >= 1");
  if (warmup < 1) throw ContractError("lr_schedule: warmup must be >= 1");
  if (d_model < 1) throw ContractError("lr_schedule: d_model must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad_mut()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = T(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.grad_mut()) g *= factor;
    }
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&, double);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&, double);
template double clip_grad_norm(std::vector<Tensor<float>>&, double);
template double clip_grad_norm(std::vector<Tensor<double>>&, double);

}  // namespace ape
