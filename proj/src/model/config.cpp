#include "genie/model/config.hpp"

#include <cmath>

#include "genie/error.hpp"

namespace genie::model {

std::string to_string(Quantizer q) {
  switch (q) {
    case Quantizer::iqae: return "iqae";
    case Quantizer::vq: return "vq";
    case Quantizer::none: return "none";
  }
  return "?";
}

Quantizer quantizer_from_string(const std::string& name) {
  if (name == "iqae") return Quantizer::iqae;
  if (name == "vq") return Quantizer::vq;
  if (name == "none" || name == "lm") return Quantizer::none;
  throw ContractViolation("unknown quantizer '" + name + "' (expected iqae, vq or none)");
}

void ModelConfig::validate() const {
  require(hidden_size > 0, "model config: hidden_size must be positive");
  require(num_layers > 0, "model config: num_layers must be positive");
  require(k_buttons >= 2, "model config: k_buttons must be at least 2");
  require(vocab == kVocab, "model config: vocab must be 88");
  require(window_n > 0, "model config: window_n must be positive");
  require(vq_dim > 0, "model config: vq_dim must be positive");
  for (double w : {contour_weight, margin_weight, commitment_beta})
    require(std::isfinite(w) && w >= 0, "model config: loss weights must be finite and non-negative");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden_size", c.hidden_size},   {"num_layers", c.num_layers},
       {"k_buttons", c.k_buttons},       {"vocab", c.vocab},
       {"use_dt", c.use_dt},             {"quantizer", to_string(c.quantizer)},
       {"contour_weight", c.contour_weight}, {"margin_weight", c.margin_weight},
       {"window_n", c.window_n},         {"vq_dim", c.vq_dim},
       {"commitment_beta", c.commitment_beta}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.hidden_size = j.value("hidden_size", d.hidden_size);
  c.num_layers = j.value("num_layers", d.num_layers);
  c.k_buttons = j.value("k_buttons", d.k_buttons);
  c.vocab = j.value("vocab", d.vocab);
  c.use_dt = j.value("use_dt", d.use_dt);
  c.quantizer = quantizer_from_string(j.value("quantizer", to_string(d.quantizer)));
  c.contour_weight = j.value("contour_weight", d.contour_weight);
  c.margin_weight = j.value("margin_weight", d.margin_weight);
  c.window_n = j.value("window_n", d.window_n);
  c.vq_dim = j.value("vq_dim", d.vq_dim);
  c.commitment_beta = j.value("commitment_beta", d.commitment_beta);
  c.validate();
}

}  // namespace genie::model
