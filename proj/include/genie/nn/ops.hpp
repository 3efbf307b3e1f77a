#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "genie/error.hpp"
#include "genie/nn/graph.hpp"
#include "genie/nn/kernels.hpp"

namespace genie::nn {

// log Σ exp(logits) − logits[target], max-shifted.
template <typename T>
T softmax_nll(std::span<const T> logits, std::size_t target) {
  require(!logits.empty(), "softmax_nll: empty logits");
  require(target < logits.size(), "softmax_nll: target out of range");
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (T v : logits) total += std::exp(v - peak);
  return std::log(total) + peak - logits[target];
}

template <typename T>
Var sum(Graph<T>& g, Var x) {
  const auto& xv = g.value(x);
  T total = 0;
  for (T v : xv.values()) total += v;
  const std::size_t n = xv.size();
  return g.record(Tensor<T>({1}, {total}), {x}, [x, n](Graph<T>& gr, Var self) {
    const T up = gr.grad(self)[0];
    if (T* gx = gr.grad(x))
      for (std::size_t i = 0; i < n; ++i) gx[i] += up;
  });
}

template <typename T>
Var scale(Graph<T>& g, Var x, T factor) {
  Tensor<T> out = g.value(x);
  out.drop_grad();
  for (T& v : out.values()) v *= factor;
  const std::size_t n = out.size();
  return g.record(std::move(out), {x}, [x, n, factor](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    if (T* gx = gr.grad(x))
      for (std::size_t i = 0; i < n; ++i) gx[i] += factor * up[i];
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  require(av.size() == bv.size(), "add: size mismatch " + shape_string(av.shape()) +
                                      " vs " + shape_string(bv.shape()));
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t n = out.size();
  return g.record(std::move(out), {a, b}, [a, b, n](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    if (T* ga = gr.grad(a))
      for (std::size_t i = 0; i < n; ++i) ga[i] += up[i];
    if (T* gb = gr.grad(b))
      for (std::size_t i = 0; i < n; ++i) gb[i] += up[i];
  });
}

// Σ a[i]·b[i] over equally sized tensors.
template <typename T>
Var dot(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  require(av.size() == bv.size(), "dot: size mismatch");
  T total = 0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i] * bv[i];
  const std::size_t n = av.size();
  return g.record(Tensor<T>({1}, {total}), {a, b}, [a, b, n](Graph<T>& gr, Var self) {
    const T up = gr.grad(self)[0];
    const auto& avv = gr.value(a);
    const auto& bvv = gr.value(b);
    if (T* ga = gr.grad(a))
      for (std::size_t i = 0; i < n; ++i) ga[i] += up * bvv[i];
    if (T* gb = gr.grad(b))
      for (std::size_t i = 0; i < n; ++i) gb[i] += up * avv[i];
  });
}

// Rows [begin, begin + count) of a matrix.
template <typename T>
Var slice_rows(Graph<T>& g, Var x, std::size_t begin, std::size_t count) {
  const auto& xv = g.value(x);
  const std::size_t cols = xv.cols();
  require(count > 0 && begin + count <= xv.rows(), "slice_rows: range out of bounds");
  Tensor<T> out({count, cols});
  std::copy(xv.data() + begin * cols, xv.data() + (begin + count) * cols, out.data());
  return g.record(std::move(out), {x}, [x, begin, count, cols](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    if (T* gx = gr.grad(x))
      for (std::size_t i = 0; i < count * cols; ++i) gx[begin * cols + i] += up[i];
  });
}

// Sum of any number of scalar nodes; invalid handles are skipped.
template <typename T>
Var add_all(Graph<T>& g, std::initializer_list<Var> terms) {
  Var acc;
  for (Var v : terms) {
    if (!v.valid()) continue;
    acc = acc.valid() ? add(g, acc, v) : v;
  }
  require(acc.valid(), "add_all: no terms");
  return acc;
}

// y[R×O] = x[R×I] · Wᵀ + b, W is [O×I]. A rank-1 x is a single row.
template <typename T>
Var affine(Graph<T>& g, Var x, Var W, Var b) {
  const auto& xv = g.value(x);
  const auto& Wv = g.value(W);
  const auto& bv = g.value(b);
  require(Wv.shape().size() == 2, "affine: weights must be rank 2");
  const std::size_t out_dim = Wv.shape()[0];
  const std::size_t in_dim = Wv.shape()[1];
  const std::size_t rows = xv.shape().size() == 1 ? 1 : xv.rows();
  require(xv.size() == rows * in_dim,
          "affine: input " + shape_string(xv.shape()) + " incompatible with weights " +
              shape_string(Wv.shape()));
  require(bv.size() == out_dim, "affine: bias size mismatch");

  Tensor<T> y(xv.shape().size() == 1 ? Shape{out_dim} : Shape{rows, out_dim});
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.data(), bv.data() + out_dim, y.data() + r * out_dim);
  kernels::gemm_nt(rows, out_dim, in_dim, xv.data(), in_dim, Wv.data(), in_dim, y.data(), out_dim, true);

  return g.record(std::move(y), {x, W, b}, [=](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    const auto& xval = gr.value(x);
    const auto& wval = gr.value(W);
    if (T* gx = gr.grad(x))
      kernels::gemm_nn(rows, in_dim, out_dim, up, out_dim, wval.data(), in_dim, gx, in_dim, true);
    if (T* gw = gr.grad(W))
      kernels::gemm_tn(out_dim, in_dim, rows, up, out_dim, xval.data(), in_dim, gw, in_dim, true);
    if (T* gb = gr.grad(b)) kernels::column_sums(rows, out_dim, up, out_dim, gb, true);
  });
}

// Column-wise concatenation of row-aligned matrices.
template <typename T>
Var concat_cols(Graph<T>& g, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = g.value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    require(v.rows() == rows, "concat_cols: row count mismatch");
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor<T> out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = g.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * widths[k], v.data() + (r + 1) * widths[k],
                out.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return g.record(std::move(out), parents, [parents, widths, rows, total](Graph<T>& gr, Var self) {
    const T* up = gr.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (T* gp = gr.grad(parents[k])) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += up[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

// Mean over rows of softmax_nll(logits[r], targets[r]).
template <typename T>
Var softmax_nll_mean(Graph<T>& g, Var logits, std::span<const int> targets) {
  const auto& lv = g.value(logits);
  const std::size_t rows = lv.shape().size() == 1 ? 1 : lv.rows();
  const std::size_t vocab = lv.size() / rows;
  require(targets.size() == rows, "softmax_nll_mean: one target per row required");
  Tensor<T> probs({rows, vocab});
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int target = targets[r];
    require(target >= 0 && static_cast<std::size_t>(target) < vocab,
            "softmax_nll_mean: target out of range");
    const T* row = lv.data() + r * vocab;
    T* p = probs.data() + r * vocab;
    const T peak = *std::max_element(row, row + vocab);
    T z = 0;
    for (std::size_t c = 0; c < vocab; ++c) z += (p[c] = std::exp(row[c] - peak));
    for (std::size_t c = 0; c < vocab; ++c) p[c] /= z;
    total += std::log(z) + peak - row[target];
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return g.record(Tensor<T>({1}, {total / static_cast<T>(rows)}), {logits},
                  [logits, probs = std::move(probs), tgt = std::move(tgt), rows, vocab](Graph<T>& gr, Var self) {
                    const T up = gr.grad(self)[0] / static_cast<T>(rows);
                    T* gl = gr.grad(logits);
                    if (!gl) return;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* p = probs.data() + r * vocab;
                      T* out = gl + r * vocab;
                      for (std::size_t c = 0; c < vocab; ++c) out[c] += up * p[c];
                      out[tgt[r]] -= up;
                    }
                  });
}

}  // namespace genie::nn
