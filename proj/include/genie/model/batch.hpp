#pragma once

#include <span>
#include <vector>

#include "genie/data/sequence.hpp"
#include "genie/error.hpp"
#include "genie/model/config.hpp"
#include "genie/nn/tensor.hpp"

namespace genie::model {

// Equal-length sequences stored time-major: row t·batch + b holds step t of
// sequence b.
struct Batch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  std::vector<int> keys;
  std::vector<int> dt_buckets;

  std::size_t rows() const { return steps * batch; }
  int key(std::size_t t, std::size_t b) const { return keys[t * batch + b]; }
};

inline Batch make_batch(std::span<const data::TrainingExample* const> examples) {
  require(!examples.empty(), "make_batch: no examples");
  Batch out;
  out.steps = examples[0]->size();
  out.batch = examples.size();
  require(out.steps > 0, "make_batch: empty example");
  out.keys.resize(out.rows());
  out.dt_buckets.resize(out.rows());
  for (std::size_t b = 0; b < out.batch; ++b) {
    const auto& ex = *examples[b];
    require(ex.keys.size() == out.steps && ex.dt_buckets.size() == out.steps, "make_batch: ragged examples");
    for (std::size_t t = 0; t < out.steps; ++t) {
      require(ex.keys[t] >= 0 && ex.keys[t] < kVocab, "make_batch: key out of range");
      require(ex.dt_buckets[t] >= 0 && ex.dt_buckets[t] < kDtVocab, "make_batch: dt bucket out of range");
      out.keys[t * out.batch + b] = ex.keys[t];
      out.dt_buckets[t * out.batch + b] = ex.dt_buckets[t];
    }
  }
  return out;
}

inline Batch make_batch(std::span<const data::TrainingExample> examples) {
  std::vector<const data::TrainingExample*> ptrs;
  for (const auto& ex : examples) ptrs.push_back(&ex);
  return make_batch(std::span<const data::TrainingExample* const>(ptrs));
}

// Single sequence; ΔT buckets default to the first-note sentinel.
inline Batch make_batch(std::span<const int> keys, std::span<const int> dt_buckets = {}) {
  data::TrainingExample ex;
  ex.keys.assign(keys.begin(), keys.end());
  if (dt_buckets.empty())
    ex.dt_buckets.assign(keys.size(), data::kFirstNoteDtBucket);
  else
    ex.dt_buckets.assign(dt_buckets.begin(), dt_buckets.end());
  const data::TrainingExample* ptr = &ex;
  return make_batch(std::span<const data::TrainingExample* const>(&ptr, 1));
}

template <typename T>
nn::Tensor<T> one_hot(std::span<const int> indices, std::size_t width) {
  nn::Tensor<T> out({indices.size(), width});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] >= 0 && static_cast<std::size_t>(indices[r]) < width, "one_hot: index out of range");
    out[r * width + indices[r]] = T{1};
  }
  return out;
}

// Previous key for every row, the start symbol at t = 0.
inline std::vector<int> previous_keys(const Batch& batch) {
  std::vector<int> prev(batch.rows(), kStartSymbol);
  for (std::size_t r = batch.batch; r < batch.rows(); ++r) prev[r] = batch.keys[r - batch.batch];
  return prev;
}

}  // namespace genie::model
