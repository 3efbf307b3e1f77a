#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "genie/error.hpp"
#include "genie/nn/graph.hpp"
#include "genie/nn/kernels.hpp"
#include "genie/nn/random.hpp"
#include "genie/nn/tensor.hpp"

namespace genie::nn {

// Gate blocks inside the 4H rows of every LSTM weight matrix and bias.
// Checkpoints depend on this order.
enum class Gate : std::size_t { input = 0, forget = 1, cell = 2, output = 3 };
inline constexpr std::size_t kGateCount = 4;

template <typename T>
struct LstmLayerParams {
  Tensor<T> input_weights;      // [4H×I]
  Tensor<T> recurrent_weights;  // [4H×H]
  Tensor<T> biases;             // [4H]

  LstmLayerParams() = default;
  LstmLayerParams(std::size_t input_size, std::size_t hidden)
      : input_weights({kGateCount * hidden, input_size}),
        recurrent_weights({kGateCount * hidden, hidden}),
        biases({kGateCount * hidden}) {}

  std::size_t hidden() const { return recurrent_weights.shape()[1]; }
  std::size_t input_size() const { return input_weights.shape()[1]; }
};

// Weights uniform in ±1/√H, forget-gate bias 1, other biases 0.
template <typename T>
void init_lstm(LstmLayerParams<T>& p, std::mt19937_64& rng) {
  const std::size_t H = p.hidden();
  const double s = 1.0 / std::sqrt(static_cast<double>(H));
  for (T& w : p.input_weights.values()) w = static_cast<T>(uniform(rng, -s, s));
  for (T& w : p.recurrent_weights.values()) w = static_cast<T>(uniform(rng, -s, s));
  p.biases.fill(T{0});
  const std::size_t f = static_cast<std::size_t>(Gate::forget) * H;
  for (std::size_t j = 0; j < H; ++j) p.biases[f + j] = T{1};
}

template <typename T>
inline T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

namespace detail {

// pre[R×4H] holds gate pre-activations; replaces them with activations.
template <typename T>
void activate_gates(std::size_t rows, std::size_t H, T* pre) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = pre + r * kGateCount * H;
    for (std::size_t j = 0; j < H; ++j) row[j] = sigmoid(row[j]);
    for (std::size_t j = H; j < 2 * H; ++j) row[j] = sigmoid(row[j]);
    for (std::size_t j = 2 * H; j < 3 * H; ++j) row[j] = std::tanh(row[j]);
    for (std::size_t j = 3 * H; j < 4 * H; ++j) row[j] = sigmoid(row[j]);
  }
}

// dact → dpre in place, given activations.
template <typename T>
void gate_derivatives(std::size_t rows, std::size_t H, const T* act, T* d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* a = act + r * kGateCount * H;
    T* g = d + r * kGateCount * H;
    for (std::size_t j = 0; j < 4 * H; ++j) {
      if (j >= 2 * H && j < 3 * H)
        g[j] *= T{1} - a[j] * a[j];
      else
        g[j] *= a[j] * (T{1} - a[j]);
    }
  }
}

}  // namespace detail

template <typename T>
struct LstmState {
  std::vector<T> h;
  std::vector<T> c;
};

// One recurrence step on plain vectors (no graph).
template <typename T>
LstmState<T> lstm_step(const LstmLayerParams<T>& p, std::span<const T> x,
                       std::span<const T> h_prev, std::span<const T> c_prev) {
  const std::size_t H = p.hidden();
  const std::size_t I = p.input_size();
  require(x.size() == I, "lstm_step: input size mismatch");
  require(h_prev.size() == H && c_prev.size() == H, "lstm_step: state size mismatch");
  std::vector<T> gates(p.biases.values().begin(), p.biases.values().end());
  kernels::gemm_nt<T>(1, kGateCount * H, I, x.data(), I, p.input_weights.data(), I, gates.data(),
                      kGateCount * H, true);
  kernels::gemm_nt<T>(1, kGateCount * H, H, h_prev.data(), H, p.recurrent_weights.data(), H,
                      gates.data(), kGateCount * H, true);
  detail::activate_gates<T>(1, H, gates.data());
  LstmState<T> out{std::vector<T>(H), std::vector<T>(H)};
  for (std::size_t j = 0; j < H; ++j) {
    out.c[j] = gates[H + j] * c_prev[j] + gates[j] * gates[2 * H + j];
    out.h[j] = gates[3 * H + j] * std::tanh(out.c[j]);
  }
  return out;
}

template <typename T>
struct LstmVars {
  Var input_weights;
  Var recurrent_weights;
  Var biases;
};

template <typename T>
LstmVars<T> bind(Graph<T>& g, LstmLayerParams<T>& p) {
  return {g.parameter(p.input_weights), g.parameter(p.recurrent_weights), g.parameter(p.biases)};
}

template <typename T>
struct LstmStepVars {
  Var h;
  Var c;
};

// Batched single step recorded on the graph: x [R×I], h_prev/c_prev [R×H].
template <typename T>
LstmStepVars<T> lstm_step(Graph<T>& g, const LstmVars<T>& p, Var x, Var h_prev, Var c_prev) {
  const auto& W = g.value(p.input_weights);
  const auto& U = g.value(p.recurrent_weights);
  const auto& b = g.value(p.biases);
  const std::size_t H = U.shape()[1];
  const std::size_t I = W.shape()[1];
  const std::size_t G = kGateCount * H;
  const auto& xv = g.value(x);
  const std::size_t R = xv.shape().size() == 1 ? 1 : xv.rows();
  require(xv.size() == R * I, "lstm_step: input size mismatch");
  require(g.value(h_prev).size() == R * H && g.value(c_prev).size() == R * H,
          "lstm_step: state size mismatch");

  Tensor<T> act({R, G});
  for (std::size_t r = 0; r < R; ++r) std::copy(b.data(), b.data() + G, act.data() + r * G);
  kernels::gemm_nt(R, G, I, xv.data(), I, W.data(), I, act.data(), G, true);
  kernels::gemm_nt(R, G, H, g.value(h_prev).data(), H, U.data(), H, act.data(), G, true);
  detail::activate_gates(R, H, act.data());

  const Var gates = g.record(std::move(act), {x, h_prev, p.input_weights, p.recurrent_weights, p.biases},
                             [=](Graph<T>& gr, Var self) {
    std::vector<T> dpre(gr.grad(self), gr.grad(self) + R * G);
    detail::gate_derivatives(R, H, gr.value(self).data(), dpre.data());
    if (T* gx = gr.grad(x))
      kernels::gemm_nn(R, I, G, dpre.data(), G, gr.value(p.input_weights).data(), I, gx, I, true);
    if (T* gh = gr.grad(h_prev))
      kernels::gemm_nn(R, H, G, dpre.data(), G, gr.value(p.recurrent_weights).data(), H, gh, H, true);
    if (T* gw = gr.grad(p.input_weights))
      kernels::gemm_tn(G, I, R, dpre.data(), G, gr.value(x).data(), I, gw, I, true);
    if (T* gu = gr.grad(p.recurrent_weights))
      kernels::gemm_tn(G, H, R, dpre.data(), G, gr.value(h_prev).data(), H, gu, H, true);
    if (T* gb = gr.grad(p.biases)) kernels::column_sums(R, G, dpre.data(), G, gb, true);
  });

  const auto& a = g.value(gates);
  const auto& cp = g.value(c_prev);
  Tensor<T> c_val({R, H});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < H; ++j) {
      const T* ar = a.data() + r * G;
      c_val[r * H + j] = ar[H + j] * cp[r * H + j] + ar[j] * ar[2 * H + j];
    }
  const Var c = g.record(std::move(c_val), {gates, c_prev}, [=](Graph<T>& gr, Var self) {
    const T* dc = gr.grad(self);
    const auto& av = gr.value(gates);
    const auto& cpv = gr.value(c_prev);
    if (T* ga = gr.grad(gates))
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < H; ++j) {
          const T* ar = av.data() + r * G;
          T* gar = ga + r * G;
          const T d = dc[r * H + j];
          gar[j] += d * ar[2 * H + j];
          gar[H + j] += d * cpv[r * H + j];
          gar[2 * H + j] += d * ar[j];
        }
    if (T* gc = gr.grad(c_prev))
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < H; ++j) gc[r * H + j] += dc[r * H + j] * av[r * G + H + j];
  });

  const auto& a2 = g.value(gates);
  const auto& cv = g.value(c);
  Tensor<T> h_val({R, H});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < H; ++j)
      h_val[r * H + j] = a2[r * G + 3 * H + j] * std::tanh(cv[r * H + j]);
  const Var h = g.record(std::move(h_val), {gates, c}, [=](Graph<T>& gr, Var self) {
    const T* dh = gr.grad(self);
    const auto& av = gr.value(gates);
    const auto& cvv = gr.value(c);
    T* ga = gr.grad(gates);
    T* gc = gr.grad(c);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < H; ++j) {
        const T tc = std::tanh(cvv[r * H + j]);
        const T o = av[r * G + 3 * H + j];
        if (ga) ga[r * G + 3 * H + j] += dh[r * H + j] * tc;
        if (gc) gc[r * H + j] += dh[r * H + j] * o * (T{1} - tc * tc);
      }
  });
  return {h, c};
}

// Whole-sequence LSTM layer with zero initial state, fused into one node.
//
// Inputs are time-major: row t·batch + b is step t of sequence b. The layer
// input is the column concatenation of `input_parts`; gradients are only
// produced for parts that need them. Output rows follow the input rows; with
// `reverse` the recurrence runs from the last step to the first.
template <typename T>
Var lstm_sequence(Graph<T>& g, const LstmVars<T>& p, std::span<const Var> input_parts,
                  std::size_t steps, std::size_t batch, bool reverse) {
  const auto& W = g.value(p.input_weights);
  const auto& U = g.value(p.recurrent_weights);
  const auto& b = g.value(p.biases);
  const std::size_t H = U.shape()[1];
  const std::size_t I = W.shape()[1];
  const std::size_t G = kGateCount * H;
  const std::size_t rows = steps * batch;
  require(steps > 0 && batch > 0, "lstm_sequence: empty sequence");

  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var part : input_parts) {
    const auto& v = g.value(part);
    require(v.rows() == rows, "lstm_sequence: input part has wrong row count");
    widths.push_back(v.cols());
    total += v.cols();
  }
  require(total == I, "lstm_sequence: input width " + std::to_string(total) +
                          " does not match weights " + shape_string(W.shape()));

  auto X = std::make_shared<std::vector<T>>(rows * I);
  {
    std::size_t off = 0;
    for (std::size_t k = 0; k < input_parts.size(); ++k) {
      const auto& v = g.value(input_parts[k]);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(v.data() + r * widths[k], v.data() + (r + 1) * widths[k], X->data() + r * I + off);
      off += widths[k];
    }
  }

  auto act = std::make_shared<std::vector<T>>(rows * G);
  auto cells = std::make_shared<std::vector<T>>(rows * H);
  for (std::size_t r = 0; r < rows; ++r) std::copy(b.data(), b.data() + G, act->data() + r * G);
  std::vector<T> wt(I * G);
  kernels::transpose(G, I, W.data(), I, wt.data(), G);
  kernels::gemm_nn(rows, G, I, X->data(), I, wt.data(), G, act->data(), G, true);

  std::vector<T> ut(H * G);
  kernels::transpose(G, H, U.data(), H, ut.data(), G);
  Tensor<T> out({rows, H});
  const std::vector<T> zeros(batch * H, T{0});
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t t = reverse ? steps - 1 - step : step;
    const T* h_prev = step == 0 ? zeros.data() : out.data() + (reverse ? t + 1 : t - 1) * batch * H;
    const T* c_prev = step == 0 ? zeros.data() : cells->data() + (reverse ? t + 1 : t - 1) * batch * H;
    T* a = act->data() + t * batch * G;
    if (step > 0) kernels::gemm_nn(batch, G, H, h_prev, H, ut.data(), G, a, G, true);
    detail::activate_gates(batch, H, a);
    T* c = cells->data() + t * batch * H;
    T* h = out.data() + t * batch * H;
#pragma omp parallel for schedule(static) if (batch * H >= 8192)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(batch); ++r) {
      const T* ar = a + r * G;
      for (std::size_t j = 0; j < H; ++j) {
        const std::size_t k = r * H + j;
        c[k] = ar[H + j] * c_prev[k] + ar[j] * ar[2 * H + j];
        h[k] = ar[3 * H + j] * std::tanh(c[k]);
      }
    }
  }

  std::vector<Var> parents{p.input_weights, p.recurrent_weights, p.biases};
  parents.insert(parents.end(), input_parts.begin(), input_parts.end());
  std::vector<Var> parts(input_parts.begin(), input_parts.end());

  return g.record(std::move(out), parents, [=](Graph<T>& gr, Var self) {
    const T* dout = gr.grad(self);
    const T* hs = gr.value(self).data();
    const T* U_ = gr.value(p.recurrent_weights).data();
    std::vector<T> dpre(rows * G);
    std::vector<T> hprev_all(rows * H, T{0});
    std::vector<T> dh_next(batch * H, T{0});
    std::vector<T> dc_next(batch * H, T{0});
    for (std::size_t step = steps; step-- > 0;) {
      const std::size_t t = reverse ? steps - 1 - step : step;
      const bool first = step == 0;
      const std::size_t tp = reverse ? t + 1 : t - 1;
      const T* a = act->data() + t * batch * G;
      const T* c = cells->data() + t * batch * H;
      const T* c_prev = first ? nullptr : cells->data() + tp * batch * H;
      T* dp = dpre.data() + t * batch * G;
      for (std::size_t r = 0; r < batch; ++r) {
        const T* ar = a + r * G;
        T* dr = dp + r * G;
        for (std::size_t j = 0; j < H; ++j) {
          const std::size_t k = r * H + j;
          const T tc = std::tanh(c[k]);
          const T dh = dout[t * batch * H + k] + dh_next[k];
          const T i = ar[j], f = ar[H + j], gg = ar[2 * H + j], o = ar[3 * H + j];
          const T dc = dh * o * (T{1} - tc * tc) + dc_next[k];
          dr[j] = dc * gg * i * (T{1} - i);
          dr[H + j] = first ? T{0} : dc * c_prev[k] * f * (T{1} - f);
          dr[2 * H + j] = dc * i * (T{1} - gg * gg);
          dr[3 * H + j] = dh * tc * o * (T{1} - o);
          dc_next[k] = dc * f;
        }
      }
      if (!first) {
        kernels::gemm_nn(batch, H, G, dp, G, U_, H, dh_next.data(), H, false);
        std::copy(hs + tp * batch * H, hs + (tp + 1) * batch * H, hprev_all.data() + t * batch * H);
      }
    }
    if (T* gw = gr.grad(p.input_weights)) kernels::gemm_tn(G, I, rows, dpre.data(), G, X->data(), I, gw, I, true);
    if (T* gu = gr.grad(p.recurrent_weights))
      kernels::gemm_tn(G, H, rows, dpre.data(), G, hprev_all.data(), H, gu, H, true);
    if (T* gb = gr.grad(p.biases)) kernels::column_sums(rows, G, dpre.data(), G, gb, true);
    const T* W_ = gr.value(p.input_weights).data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (T* gp = gr.grad(parts[k]))
        kernels::gemm_nn(rows, widths[k], G, dpre.data(), G, W_ + off, I, gp, widths[k], true);
      off += widths[k];
    }
  });
}

}  // namespace genie::nn
