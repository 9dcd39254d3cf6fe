#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>

namespace fctf::test {

inline constexpr double kFdStep = 1e-5;

inline torch::Tensor unit_direction(const torch::Tensor& x, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto v = at::normal(0.0, 1.0, x.sizes(), gen, x.options());
  return v / v.norm();
}

inline double central_difference(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                                 const torch::Tensor& v, double h) {
  torch::NoGradGuard g;
  return (f(x.detach() + h * v).item<double>() - f(x.detach() - h * v).item<double>()) / (2 * h);
}

/// Relative error between the autograd directional derivative of a scalar f
/// at x along a random unit direction and its central finite difference.
inline double directional_gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                         const torch::Tensor& x, std::uint64_t seed, double h = kFdStep) {
  const auto v = unit_direction(x, seed);
  auto xv = x.detach().clone().requires_grad_(true);
  const auto y = f(xv);
  const auto grad = torch::autograd::grad({y}, {xv})[0];
  const double analytic = (grad * v).sum().item<double>();
  const double fd = central_difference(f, x, v, h);
  return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
}

/// True when the segment x +- h*v crosses no kink of a piecewise-smooth f:
/// central differences at h and h/2 then agree to O(h^2).
inline bool kink_free(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                      std::uint64_t seed, double h = kFdStep) {
  const auto v = unit_direction(x, seed);
  const double a = central_difference(f, x, v, h), b = central_difference(f, x, v, h / 2);
  return std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace fctf::test
