#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "genie/nn/graph.hpp"
#include "genie/nn/random.hpp"
#include "genie/nn/tensor.hpp"

namespace genie::nn {

struct GradcheckOptions {
  double step = 1e-4;
  // Coordinates checked per tensor; tensors at most this size are checked
  // exhaustively. Half of the budget goes to the largest analytic gradients.
  std::size_t samples_per_tensor = 24;
  // Relative error is |a − n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "<param>[index] analytic=… numeric=…"
};

// Compares backward() against central differences (f(θ+h) − f(θ−h)) / 2h.
// `loss_fn` records a scalar loss on the graph it is given and must be
// deterministic in the parameter values.
template <typename T>
GradcheckResult finite_diff_gradcheck(const std::function<Var(Graph<T>&)>& loss_fn,
                                      std::span<const NamedParameter<T>> params,
                                      const GradcheckOptions& options = {}) {
  for (const auto& p : params) {
    p.tensor->ensure_grad();
    p.tensor->zero_grad();
  }
  {
    Graph<T> g;
    g.backward(loss_fn(g));
  }
  auto evaluate = [&] {
    Graph<T> g;
    return static_cast<double>(g.value(loss_fn(g))[0]);
  };

  std::mt19937_64 rng(options.seed);
  GradcheckResult result;
  for (const auto& p : params) {
    Tensor<T>& t = *p.tensor;
    const std::vector<T> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords;
    if (t.size() <= options.samples_per_tensor) {
      for (std::size_t i = 0; i < t.size(); ++i) coords.push_back(i);
    } else {
      std::vector<std::size_t> order(t.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t top = options.samples_per_tensor / 2;
      std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(analytic[a]) > std::abs(analytic[b]);
      });
      coords.assign(order.begin(), order.begin() + top);
      while (coords.size() < options.samples_per_tensor) coords.push_back(uniform_index(rng, t.size()));
    }
    for (std::size_t i : coords) {
      const T saved = t[i];
      t[i] = saved + static_cast<T>(options.step);
      const double up = evaluate();
      t[i] = saved - static_cast<T>(options.step);
      const double down = evaluate();
      t[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double a = static_cast<double>(analytic[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error || result.worst.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                         " numeric=" + std::to_string(numeric);
        }
      }
    }
  }
  return result;
}

}  // namespace genie::nn
