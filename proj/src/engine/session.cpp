#include "genie/engine/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "genie/data/sequence.hpp"
#include "genie/error.hpp"
#include "genie/model/quantize.hpp"
#include "genie/nn/random.hpp"

namespace genie::engine {

using model::Quantizer;

namespace {

std::vector<float> transposed(const nn::Tensor<float>& w) {
  const std::size_t rows = w.shape()[0], cols = w.shape()[1];
  std::vector<float> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = w.data()[r * cols + c];
  return out;
}

inline void add_row(std::size_t n, float a, const float* __restrict row, float* __restrict out) {
  for (std::size_t j = 0; j < n; ++j) out[j] += a * row[j];
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

DecoderRuntime::DecoderRuntime(const model::GenieModel<float>& m) : config_(m.config()) {
  for (const auto& p : m.decoder_layers()) {
    Layer l;
    l.input = p.input_size();
    l.input_t = transposed(p.input_weights);
    l.recurrent_t = transposed(p.recurrent_weights);
    l.bias.assign(p.biases.values().begin(), p.biases.values().end());
    layers_.push_back(std::move(l));
  }
  head_t = transposed(m.decoder_head_weights());
  head_bias.assign(m.decoder_head_bias().values().begin(), m.decoder_head_bias().values().end());
  if (config_.quantizer == Quantizer::iqae) {
    for (int b = 0; b < buttons(); ++b)
      button_repr_.push_back({static_cast<float>(model::centroid(b, buttons()))});
  } else if (config_.quantizer == Quantizer::vq) {
    const auto& E = m.codebook();
    const std::size_t d = config_.vq_dim;
    for (int b = 0; b < buttons(); ++b) button_repr_.emplace_back(E.data() + b * d, E.data() + (b + 1) * d);
  }
}

DecoderRuntime::State DecoderRuntime::zero_state() const {
  State s;
  s.h.assign(layers_.size(), std::vector<float>(hidden(), 0.0f));
  s.c = s.h;
  return s;
}

void DecoderRuntime::step(State& state, int prev_key, int button, int dt_bucket, std::span<float> logits) const {
  const std::size_t H = hidden(), G = nn::kGateCount * H;
  require(logits.size() == model::kVocab, "decoder step: logits buffer must hold 88 values");
  require(prev_key >= 0 && prev_key < static_cast<int>(model::kPrevKeyVocab), "decoder step: previous key out of range");
  require(button >= 0 && button < buttons(), "decoder step: button out of range");
  thread_local std::vector<float> gates;
  gates.resize(G);

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    std::copy(L.bias.begin(), L.bias.end(), gates.begin());
    if (l == 0) {
      std::size_t col = model::kPrevKeyVocab;
      add_row(G, 1.0f, L.input_t.data() + prev_key * G, gates.data());
      if (!button_repr_.empty()) {
        for (float v : button_repr_[button]) add_row(G, v, L.input_t.data() + (col++) * G, gates.data());
      }
      if (config_.use_dt) add_row(G, 1.0f, L.input_t.data() + (col + dt_bucket) * G, gates.data());
    } else {
      const auto& below = state.h[l - 1];
      for (std::size_t i = 0; i < H; ++i) add_row(G, below[i], L.input_t.data() + i * G, gates.data());
    }
    auto& h = state.h[l];
    auto& c = state.c[l];
    for (std::size_t i = 0; i < H; ++i) add_row(G, h[i], L.recurrent_t.data() + i * G, gates.data());
    for (std::size_t j = 0; j < H; ++j) {
      const float in = sigmoid(gates[j]), forget = sigmoid(gates[H + j]);
      const float cell = std::tanh(gates[2 * H + j]), out = sigmoid(gates[3 * H + j]);
      c[j] = forget * c[j] + in * cell;
      h[j] = out * std::tanh(c[j]);
    }
  }
  std::copy(head_bias.begin(), head_bias.end(), logits.begin());
  const auto& top = state.h.back();
  for (std::size_t i = 0; i < H; ++i) add_row(model::kVocab, top[i], head_t.data() + i * model::kVocab, logits.data());
}

std::string to_string(const NoteEvent& e) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s key=%d button=%d t=%.6f", e.kind == NoteKind::on ? "on" : "off", e.key, e.button,
                e.time);
  return buf;
}

std::vector<double> softmax_with_temperature(std::span<const float> logits, double temperature) {
  require(temperature > 0, "softmax: temperature must be positive");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p[i] = std::exp((logits[i] - top) / temperature);
  for (double& v : p) v /= total;
  return p;
}

int sample_key(std::span<const float> logits, double temperature, std::mt19937_64& rng) {
  require(!logits.empty(), "sample_key: no logits");
  require(temperature >= 0, "sample_key: temperature must be non-negative");
  if (temperature == 0) return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const auto p = softmax_with_temperature(logits, temperature);
  const double u = nn::unit_uniform(rng);
  double cumulative = 0;
  int last_nonzero = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) last_nonzero = static_cast<int>(i);
    cumulative += p[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  return last_nonzero;  // rounding left the total just under u
}

DecoderSession::DecoderSession(std::shared_ptr<const DecoderRuntime> runtime, double temperature, std::uint64_t seed)
    : runtime_(std::move(runtime)), rng_(seed), temperature_(temperature) {
  require(runtime_ != nullptr, "session: no runtime");
  require(temperature >= 0, "session: temperature must be non-negative");
  state_ = runtime_->zero_state();
  held_.assign(runtime_->buttons(), std::nullopt);
}

void DecoderSession::check_button(int button) const {
  require(button >= 0 && button < runtime_->buttons(), "session: button " + std::to_string(button) + " out of range");
}

int DecoderSession::dt_bucket_for(double wall_time) const {
  if (!last_press_time_) return data::kFirstNoteDtBucket;
  return data::dt_bucket(std::max(0.0, wall_time - *last_press_time_));
}

std::vector<NoteEvent> DecoderSession::press(int button, double wall_time) {
  check_button(button);
  if (last_press_time_ && wall_time < *last_press_time_) {
    ++clamped_;
    if (on_warning) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "press at %.6f s precedes the previous press at %.6f s; using dt = 0", wall_time,
                    *last_press_time_);
      on_warning(buf);
    }
    wall_time = *last_press_time_;
  }
  std::vector<NoteEvent> events;
  if (auto off = release(button, wall_time)) events.push_back(*off);

  float logits[model::kVocab];
  runtime_->step(state_, prev_key_, button, dt_bucket_for(wall_time), logits);
  const int key = sample_key(logits, temperature_, rng_);
  prev_key_ = key;
  last_press_time_ = wall_time;
  held_[button] = key;
  events.push_back({NoteKind::on, key, button, wall_time});
  return events;
}

std::optional<NoteEvent> DecoderSession::release(int button, double wall_time) {
  if (button < 0 || button >= runtime_->buttons() || !held_[button]) return std::nullopt;
  const int key = *held_[button];
  held_[button].reset();
  return NoteEvent{NoteKind::off, key, button, wall_time};
}

std::vector<std::vector<double>> DecoderSession::lookahead() const {
  if (runtime_->config().use_dt)
    throw UnsupportedOperation("lookahead needs the press time on a ΔT model");
  std::vector<std::vector<double>> rows;
  float logits[model::kVocab];
  for (int b = 0; b < runtime_->buttons(); ++b) {
    auto copy = state_;
    runtime_->step(copy, prev_key_, b, data::kFirstNoteDtBucket, logits);
    rows.push_back(softmax_with_temperature(logits, 1.0));
  }
  return rows;
}

std::vector<NoteEvent> DecoderSession::release_all(double wall_time) {
  std::vector<NoteEvent> events;
  for (int b = 0; b < runtime_->buttons(); ++b)
    if (auto off = release(b, wall_time)) events.push_back(*off);
  return events;
}

std::vector<NoteEvent> DecoderSession::reset(double wall_time) {
  auto events = release_all(wall_time);
  state_ = runtime_->zero_state();
  prev_key_ = model::kStartSymbol;
  last_press_time_.reset();
  return events;
}

void DecoderSession::set_temperature(double temperature) {
  require(temperature >= 0, "session: temperature must be non-negative");
  temperature_ = temperature;
}

std::vector<float> DecoderSession::peek_logits(int button, double wall_time) const {
  check_button(button);
  if (last_press_time_) wall_time = std::max(wall_time, *last_press_time_);
  auto copy = state_;
  std::vector<float> logits(model::kVocab);
  runtime_->step(copy, prev_key_, button, dt_bucket_for(wall_time), logits);
  return logits;
}

std::size_t DecoderSession::held_count() const {
  return static_cast<std::size_t>(std::count_if(held_.begin(), held_.end(), [](const auto& h) { return h.has_value(); }));
}

}  // namespace genie::engine
