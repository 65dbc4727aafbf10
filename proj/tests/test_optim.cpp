#include <doctest.h>

#include <cmath>
#include <limits>

#include "ape/errors.hpp"
#include "ape/optim.hpp"

using namespace ape;

TEST_CASE("first Adam step moves each coordinate by about lr against the gradient sign") {
  std::vector<Tensor<double>> params{Tensor<double>::from({3}, {1.0, 2.0, 3.0}, true)};
  auto g = params[0].grad_mut();
  g[0] = 0.5;
  g[1] = -4.0;
  g[2] = 1e-3;
  auto state = AdamState<double>::for_params(params);
  adam_step(params, state, 0.01);
  // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps).
  CHECK(params[0].data()[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-9)).epsilon(1e-12));
  CHECK(params[0].data()[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-9));
  CHECK(params[0].data()[2] == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
  CHECK(state.t == 1);
}

TEST_CASE("zero gradients leave parameters untouched at any step") {
  std::vector<Tensor<double>> params{Tensor<double>::from({2}, {1.0, -1.0}, true)};
  auto state = AdamState<double>::for_params(params);
  params[0].grad_mut()[0] = 1.0;
  adam_step(params, state, 0.1);
  const std::vector<double> before(params[0].data().begin(), params[0].data().end());
  for (int i = 0; i < 5; ++i) {
    params[0].zero_grad();
    adam_step(params, state, 0.1);
  }
  CHECK(params[0].data()[0] == before[0]);
  CHECK(params[0].data()[1] == before[1]);
}

TEST_CASE("non-finite gradients and bad learning rates are rejected") {
  std::vector<Tensor<float>> params{Tensor<float>::zeros({2}, true)};
  auto state = AdamState<float>::for_params(params);
  params[0].grad_mut()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(params, state, 0.1), NumericError);
  CHECK_THROWS_AS(adam_step(params, state, 0.0), ContractError);
}

TEST_CASE("learning-rate schedule peaks at the warmup step") {
  const double peak = lr_schedule(4000, 512, 4000);
  CHECK(peak == doctest::Approx(std::pow(512.0, -0.5) * std::pow(4000.0, -0.5)));
  CHECK(lr_schedule(3999, 512, 4000) < peak);
  CHECK(lr_schedule(4001, 512, 4000) < peak);
  CHECK(lr_schedule(1, 512, 4000) == doctest::Approx(std::pow(512.0, -0.5) * std::pow(4000.0, -1.5)));
  CHECK_THROWS_AS(lr_schedule(0, 512, 4000), ContractError);
}

TEST_CASE("global-norm clipping rescales every gradient together") {
  std::vector<Tensor<double>> params{Tensor<double>::zeros({1}, true), Tensor<double>::zeros({1}, true)};
  params[0].grad_mut()[0] = 3.0;
  params[1].grad_mut()[0] = 4.0;
  const double norm = clip_grad_norm(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(params[0].grad()[0] == doctest::Approx(0.6));
  CHECK(params[1].grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(params[1].grad()[0] == doctest::Approx(0.8));
}
