#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "genie/model/batch.hpp"
#include "genie/model/config.hpp"
#include "genie/model/quantize.hpp"
#include "genie/nn/lstm.hpp"
#include "genie/nn/ops.hpp"
#include "genie/nn/random.hpp"

namespace genie::model {

using nn::LstmLayerParams;
using nn::NamedParameter;

template <typename T>
struct LossBreakdown {
  Var total;
  Var recons;  // mean per-token NLL
  Var enc;     // encoder head output, invalid for the LM baseline
  Var logits;  // decoder output [rows × 88]
  double total_value = 0;
  double recons_value = 0;
  std::optional<double> margin_value;      // per step
  std::optional<double> contour_value;     // per transition
  std::optional<double> codebook_value;    // per step
  std::optional<double> commitment_value;  // per step, before β
  std::vector<int> buttons;                // IQAE buttons or VQ indices, time-major
};

struct LossOptions {
  // Feed enc_s to the decoder unquantized. Only for finite-difference checks,
  // which cannot see through the piecewise-constant quantizer.
  bool bypass_quantizer = false;
};

// Encoder: per-step one-hot key (⊕ one-hot ΔT) into a bidirectional LSTM
// stack, final forward⊕backward states into a linear head of width
// config.button_width(). Decoder: one-hot previous key ⊕ button
// representation (⊕ one-hot ΔT) into a unidirectional LSTM stack and a
// linear head over 88 keys.
template <typename T>
class GenieModel {
 public:
  explicit GenieModel(ModelConfig config) : config_(config) {
    config_.validate();
    const std::size_t H = config_.hidden_size;
    const std::size_t dt = config_.use_dt ? kDtVocab : 0;
    if (config_.has_encoder()) {
      for (std::size_t l = 0; l < config_.num_layers; ++l) {
        const std::size_t in = l == 0 ? kVocab + dt : 2 * H;
        encoder_.push_back({LstmLayerParams<T>(in, H), LstmLayerParams<T>(in, H)});
      }
      enc_head_w_ = Tensor<T>({config_.button_width(), 2 * H});
      enc_head_b_ = Tensor<T>({config_.button_width()});
      if (config_.quantizer == Quantizer::vq)
        codebook_ = Tensor<T>({static_cast<std::size_t>(config_.k_buttons), config_.vq_dim});
    }
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
      const std::size_t in = l == 0 ? kPrevKeyVocab + config_.button_width() + dt : H;
      decoder_.emplace_back(in, H);
    }
    dec_head_w_ = Tensor<T>({static_cast<std::size_t>(kVocab), H});
    dec_head_b_ = Tensor<T>({static_cast<std::size_t>(kVocab)});
  }

  const ModelConfig& config() const { return config_; }

  // LSTMs per init_lstm, heads uniform in ±1/√fan_in with zero bias, codebook
  // uniform in ±1/k.
  void init(std::mt19937_64& rng) {
    for (auto& layer : encoder_) {
      nn::init_lstm(layer.fwd, rng);
      nn::init_lstm(layer.bwd, rng);
    }
    for (auto& layer : decoder_) nn::init_lstm(layer, rng);
    auto init_head = [&](Tensor<T>& w, Tensor<T>& b) {
      if (w.empty()) return;
      const double s = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      for (T& v : w.values()) v = static_cast<T>(nn::uniform(rng, -s, s));
      b.fill(T{0});
    };
    init_head(enc_head_w_, enc_head_b_);
    init_head(dec_head_w_, dec_head_b_);
    if (!codebook_.empty()) {
      const double s = 1.0 / config_.k_buttons;
      for (T& v : codebook_.values()) v = static_cast<T>(nn::uniform(rng, -s, s));
    }
  }

  std::vector<NamedParameter<T>> named_parameters() {
    std::vector<NamedParameter<T>> out;
    auto lstm = [&](const std::string& prefix, LstmLayerParams<T>& p) {
      out.push_back({prefix + ".input_weights", &p.input_weights});
      out.push_back({prefix + ".recurrent_weights", &p.recurrent_weights});
      out.push_back({prefix + ".biases", &p.biases});
    };
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      lstm("encoder.layer" + std::to_string(l) + ".forward", encoder_[l].fwd);
      lstm("encoder.layer" + std::to_string(l) + ".backward", encoder_[l].bwd);
    }
    if (config_.has_encoder()) {
      out.push_back({"encoder.head.weights", &enc_head_w_});
      out.push_back({"encoder.head.bias", &enc_head_b_});
    }
    if (!codebook_.empty()) out.push_back({"quantizer.codebook", &codebook_});
    for (std::size_t l = 0; l < decoder_.size(); ++l) lstm("decoder.layer" + std::to_string(l), decoder_[l]);
    out.push_back({"decoder.head.weights", &dec_head_w_});
    out.push_back({"decoder.head.bias", &dec_head_b_});
    return out;
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto& p : named_parameters()) out.push_back(p.tensor);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }

  template <typename U>
  void copy_parameters_from(GenieModel<U>& other) {
    require(other.config() == config_, "copy_parameters_from: config mismatch");
    auto dst = named_parameters();
    auto src = other.named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i)
      std::transform(src[i].tensor->values().begin(), src[i].tensor->values().end(), dst[i].tensor->values().begin(),
                     [](U v) { return static_cast<T>(v); });
  }

  const std::vector<LstmLayerParams<T>>& decoder_layers() const { return decoder_; }
  const Tensor<T>& decoder_head_weights() const { return dec_head_w_; }
  const Tensor<T>& decoder_head_bias() const { return dec_head_b_; }
  const Tensor<T>& codebook() const { return codebook_; }
  Tensor<T>& codebook() { return codebook_; }
  Tensor<T>& encoder_head_bias() { return enc_head_b_; }

  // Encoder head output [rows × button_width].
  Var encoder_forward(Graph<T>& g, const Batch& batch) {
    require(config_.has_encoder(), "encoder_forward: the language-model baseline has no encoder");
    check_batch(batch);
    std::vector<Var> parts = input_features(g, batch, batch.keys, kVocab);
    Var fwd, bwd;
    for (auto& layer : encoder_) {
      fwd = nn::lstm_sequence(g, nn::bind(g, layer.fwd), std::span<const Var>(parts), batch.steps, batch.batch, false);
      bwd = nn::lstm_sequence(g, nn::bind(g, layer.bwd), std::span<const Var>(parts), batch.steps, batch.batch, true);
      parts = {fwd, bwd};
    }
    Var both = nn::concat_cols(g, std::span<const Var>(parts));
    return nn::affine(g, both, g.parameter(enc_head_w_), g.parameter(enc_head_b_));
  }

  // Logits [rows × 88]. `button_repr` must be invalid exactly for the LM.
  Var decoder_forward(Graph<T>& g, const Batch& batch, Var button_repr) {
    check_batch(batch);
    require(button_repr.valid() == config_.has_encoder(),
            config_.has_encoder() ? "decoder_forward: button input required"
                                  : "decoder_forward: the language-model baseline takes no button input");
    const std::vector<int> prev = previous_keys(batch);
    std::vector<Var> parts = input_features(g, batch, prev, kPrevKeyVocab, button_repr);
    Var h;
    for (auto& layer : decoder_) {
      h = nn::lstm_sequence(g, nn::bind(g, layer), std::span<const Var>(parts), batch.steps, batch.batch, false);
      parts = {h};
    }
    return nn::affine(g, h, g.parameter(dec_head_w_), g.parameter(dec_head_b_));
  }

  // Total objective: mean reconstruction NLL plus, when enabled, per-step
  // margin and per-transition contour penalties (IQAE) or per-step codebook
  // and β·commitment terms (VQ).
  LossBreakdown<T> loss(Graph<T>& g, const Batch& batch, LossOptions options = {}) {
    LossBreakdown<T> out;
    Var button_repr;
    Var extra[4];
    std::size_t n_extra = 0;
    const auto rows = static_cast<T>(batch.rows());
    if (config_.has_encoder()) {
      out.enc = encoder_forward(g, batch);
      if (config_.quantizer == Quantizer::iqae) {
        if (options.bypass_quantizer) {
          button_repr = out.enc;
          for (T v : g.value(out.enc).values()) out.buttons.push_back(nearest_centroid(v, config_.k_buttons));
        } else {
          auto q = iqae_quantize_st(g, out.enc, config_.k_buttons);
          button_repr = q.centroid_values;
          out.buttons = std::move(q.buttons);
        }
        if (config_.margin_weight > 0) {
          Var m = nn::scale(g, margin_loss_sum(g, out.enc), T{1} / rows);
          out.margin_value = g.value(m)[0];
          extra[n_extra++] = nn::scale(g, m, static_cast<T>(config_.margin_weight));
        }
        if (config_.contour_weight > 0 && batch.steps > 1) {
          const auto transitions = static_cast<T>((batch.steps - 1) * batch.batch);
          Var c = nn::scale(g, contour_loss_sum(g, out.enc, batch.keys, batch.steps, batch.batch), T{1} / transitions);
          out.contour_value = g.value(c)[0];
          extra[n_extra++] = nn::scale(g, c, static_cast<T>(config_.contour_weight));
        }
      } else {
        Var codebook = g.parameter(codebook_);
        auto q = vq_quantize(g, out.enc, codebook);
        button_repr = options.bypass_quantizer ? out.enc : q.z_q;
        out.buttons = std::move(q.indices);
        Var cb = nn::scale(g, q.codebook_loss, T{1} / rows);
        Var cm = nn::scale(g, q.commitment_loss, T{1} / rows);
        out.codebook_value = g.value(cb)[0];
        out.commitment_value = g.value(cm)[0];
        extra[n_extra++] = cb;
        if (config_.commitment_beta > 0) extra[n_extra++] = nn::scale(g, cm, static_cast<T>(config_.commitment_beta));
      }
    }
    out.logits = decoder_forward(g, batch, button_repr);
    out.recons = nn::softmax_nll_mean(g, out.logits, std::span<const int>(batch.keys));
    out.recons_value = g.value(out.recons)[0];
    out.total = out.recons;
    for (std::size_t i = 0; i < n_extra; ++i) out.total = nn::add(g, out.total, extra[i]);
    out.total_value = g.value(out.total)[0];
    return out;
  }

 private:
  struct BiLayer {
    LstmLayerParams<T> fwd;
    LstmLayerParams<T> bwd;
  };

  void check_batch(const Batch& batch) const {
    require(batch.rows() > 0 && batch.keys.size() == batch.rows(), "model: malformed batch");
    require(!config_.use_dt || batch.dt_buckets.size() == batch.rows(), "model: ΔT features required");
  }

  std::vector<Var> input_features(Graph<T>& g, const Batch& batch, std::span<const int> symbols, std::size_t width,
                                  Var button_repr = {}) {
    std::vector<Var> parts{g.input(one_hot<T>(symbols, width))};
    if (button_repr.valid()) parts.push_back(button_repr);
    if (config_.use_dt) parts.push_back(g.input(one_hot<T>(batch.dt_buckets, kDtVocab)));
    return parts;
  }

  ModelConfig config_;
  std::vector<BiLayer> encoder_;
  Tensor<T> enc_head_w_, enc_head_b_;
  Tensor<T> codebook_;
  std::vector<LstmLayerParams<T>> decoder_;
  Tensor<T> dec_head_w_, dec_head_b_;
};

}  // namespace genie::model
