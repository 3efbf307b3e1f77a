#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "genie/error.hpp"
#include "genie/nn/graph.hpp"

namespace genie::model {

using nn::Graph;
using nn::Tensor;
using nn::Var;

// C[i] = −1 + 2i/(k−1): k centroids evenly spaced over [−1, 1].
inline double centroid(int i, int k = 8) { return -1.0 + 2.0 * i / (k - 1); }

inline std::vector<double> centroids(int k = 8) {
  std::vector<double> c(k);
  for (int i = 0; i < k; ++i) c[i] = centroid(i, k);
  return c;
}

// argmin_i |x − C[i]|, equal distances resolved toward the higher index.
inline int nearest_centroid(double x, int k = 8) {
  int best = 0;
  double best_dist = std::abs(x - centroid(0, k));
  for (int i = 1; i < k; ++i) {
    const double d = std::abs(x - centroid(i, k));
    if (d <= best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

// argmin_i ‖z − E[i]‖², equal distances resolved toward the lower index.
template <typename T>
int nearest_codeword(const T* z, const T* codebook, std::size_t k, std::size_t d) {
  int best = 0;
  T best_dist = 0;
  for (std::size_t i = 0; i < k; ++i) {
    T dist = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T diff = z[j] - codebook[i * d + j];
      dist += diff * diff;
    }
    if (i == 0 || dist < best_dist) {
      best = static_cast<int>(i);
      best_dist = dist;
    }
  }
  return best;
}

struct IqaeQuantized {
  Var centroid_values;  // same shape as enc_s
  std::vector<int> buttons;
};

// Forward: snap each value to its centroid. Backward: identity.
template <typename T>
IqaeQuantized iqae_quantize_st(Graph<T>& g, Var enc_s, int k = 8) {
  const auto& ev = g.value(enc_s);
  Tensor<T> q(ev.shape());
  std::vector<int> buttons(ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    buttons[i] = nearest_centroid(static_cast<double>(ev[i]), k);
    q[i] = static_cast<T>(centroid(buttons[i], k));
  }
  const std::size_t n = ev.size();
  Var out = g.record(std::move(q), {enc_s}, [enc_s, n](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    if (T* ge = gr.grad(enc_s))
      for (std::size_t i = 0; i < n; ++i) ge[i] += up[i];
  });
  return {out, std::move(buttons)};
}

// Σ max(|e| − 1, 0)².
template <typename T>
Var margin_loss_sum(Graph<T>& g, Var enc_s) {
  const auto& ev = g.value(enc_s);
  T total = 0;
  for (T e : ev.values()) {
    const T over = std::abs(e) - T{1};
    if (over > 0) total += over * over;
  }
  const std::size_t n = ev.size();
  return g.record(Tensor<T>({1}, {total}), {enc_s}, [enc_s, n](Graph<T>& gr, Var self) {
    const T up = gr.grad(self)[0];
    const auto& e = gr.value(enc_s);
    T* ge = gr.grad(enc_s);
    if (!ge) return;
    for (std::size_t i = 0; i < n; ++i) {
      const T over = std::abs(e[i]) - T{1};
      if (over > 0) ge[i] += up * T{2} * over * (e[i] > 0 ? T{1} : T{-1});
    }
  });
}

// Σ over t ≥ 1 of max(1 − Δx·Δe, 0)² for each of `batch` time-major sequences
// (row = t·batch + b). Zero when steps < 2.
template <typename T>
Var contour_loss_sum(Graph<T>& g, Var enc_s, std::span<const int> keys, std::size_t steps, std::size_t batch) {
  const auto& ev = g.value(enc_s);
  require(ev.size() == steps * batch && keys.size() == steps * batch, "contour_loss: shape mismatch");
  std::vector<T> hinge(ev.size(), T{0});  // 1 − Δx·Δe where positive, at row t
  std::vector<T> dx(ev.size(), T{0});
  T total = 0;
  for (std::size_t t = 1; t < steps; ++t)
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r = t * batch + b, p = (t - 1) * batch + b;
      dx[r] = static_cast<T>(keys[r] - keys[p]);
      const T m = T{1} - dx[r] * (ev[r] - ev[p]);
      if (m > 0) {
        hinge[r] = m;
        total += m * m;
      }
    }
  return g.record(Tensor<T>({1}, {total}), {enc_s},
                  [enc_s, hinge = std::move(hinge), dx = std::move(dx), steps, batch](Graph<T>& gr, Var self) {
                    const T up = gr.grad(self)[0];
                    T* ge = gr.grad(enc_s);
                    if (!ge) return;
                    for (std::size_t t = 1; t < steps; ++t)
                      for (std::size_t b = 0; b < batch; ++b) {
                        const std::size_t r = t * batch + b, p = (t - 1) * batch + b;
                        // d/dΔe of m² is −2·m·Δx
                        const T d = up * T{-2} * hinge[r] * dx[r];
                        ge[r] += d;
                        ge[p] -= d;
                      }
                  });
}

struct VqQuantized {
  std::vector<int> indices;
  Var z_q;              // E[idx], straight-through to z_e
  Var codebook_loss;    // Σ‖sg(z_e) − E[idx]‖², gradient reaches the codebook only
  Var commitment_loss;  // Σ‖z_e − sg(E[idx])‖², gradient reaches z_e only
};

template <typename T>
VqQuantized vq_quantize(Graph<T>& g, Var z_e, Var codebook) {
  const auto& zv = g.value(z_e);
  const auto& ev = g.value(codebook);
  require(ev.shape().size() == 2, "vq_quantize: codebook must be rank 2");
  const std::size_t k = ev.shape()[0], d = ev.shape()[1];
  require(zv.cols() == d, "vq_quantize: code width " + std::to_string(zv.cols()) + " does not match codebook width " +
                              std::to_string(d));
  const std::size_t rows = zv.rows();

  VqQuantized out;
  out.indices.resize(rows);
  Tensor<T> zq({rows, d});
  T sq = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int idx = nearest_codeword(zv.data() + r * d, ev.data(), k, d);
    out.indices[r] = idx;
    for (std::size_t j = 0; j < d; ++j) {
      zq[r * d + j] = ev[idx * d + j];
      const T diff = zv[r * d + j] - ev[idx * d + j];
      sq += diff * diff;
    }
  }
  auto indices = out.indices;

  out.z_q = g.record(std::move(zq), {z_e}, [z_e, n = rows * d](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    if (T* gz = gr.grad(z_e))
      for (std::size_t i = 0; i < n; ++i) gz[i] += up[i];
  });
  out.codebook_loss = g.record(Tensor<T>({1}, {sq}), {codebook}, [=](Graph<T>& gr, Var self) {
    const T up = gr.grad(self)[0];
    T* ge = gr.grad(codebook);
    if (!ge) return;
    const auto& z = gr.value(z_e);
    const auto& e = gr.value(codebook);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t c = indices[r] * d + j;
        ge[c] += up * T{2} * (e[c] - z[r * d + j]);
      }
  });
  out.commitment_loss = g.record(Tensor<T>({1}, {sq}), {z_e}, [=](Graph<T>& gr, Var self) {
    const T up = gr.grad(self)[0];
    T* gz = gr.grad(z_e);
    if (!gz) return;
    const auto& z = gr.value(z_e);
    const auto& e = gr.value(codebook);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j)
        gz[r * d + j] += up * T{2} * (z[r * d + j] - e[indices[r] * d + j]);
  });
  return out;
}

}  // namespace genie::model
