#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "genie/error.hpp"
#include "genie/nn/tensor.hpp"

namespace genie::nn {

struct AdamSettings {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamSettings settings;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

// Global L2 norm over all gradients. Parameters without a gradient count as 0.
template <typename T>
double grad_norm(std::span<Tensor<T>* const> params) {
  double total = 0;
  for (const Tensor<T>* p : params)
    for (T g : p->grad()) total += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(total);
}

// Rescales gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (Tensor<T>* p : params)
      for (T& g : p->grad()) g *= factor;
  }
  return norm;
}

// Bias-corrected Adam step. The update is rejected as a whole (nothing is
// modified) when any gradient is non-finite.
template <typename T>
void adam_update(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (const Tensor<T>* p : params) {
      state.first_moment.emplace_back(p->size(), T{0});
      state.second_moment.emplace_back(p->size(), T{0});
    }
  }
  require(state.first_moment.size() == params.size(), "adam_update: parameter count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(state.first_moment[k].size() == params[k]->size(), "adam_update: parameter shape changed");
    for (T g : params[k]->grad())
      if (!std::isfinite(g)) throw DivergenceError("adam_update: non-finite gradient");
  }

  const auto& s = state.settings;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T step = static_cast<T>(s.lr / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);
  const T eps = static_cast<T>(s.epsilon);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    if (!p.has_grad()) {
      // Zero gradient: the moments still decay.
      for (std::size_t i = 0; i < p.size(); ++i) {
        T& m = state.first_moment[k][i];
        T& v = state.second_moment[k][i];
        m *= b1;
        v *= b2;
        p[i] -= step * m / (std::sqrt(v * inv_c2) + eps);
      }
      continue;
    }
    const auto grad = p.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T g = grad[i];
      T& m = state.first_moment[k][i];
      T& v = state.second_moment[k][i];
      m = b1 * m + (T{1} - b1) * g;
      v = b2 * v + (T{1} - b2) * g * g;
      p[i] -= step * m / (std::sqrt(v * inv_c2) + eps);
    }
  }
}

}  // namespace genie::nn
