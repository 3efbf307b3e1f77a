#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"

namespace genie::model {

enum class Quantizer { iqae, vq, none };

std::string to_string(Quantizer q);
Quantizer quantizer_from_string(const std::string& name);

inline constexpr int kVocab = 88;
inline constexpr int kStartSymbol = 88;  // previous-key slot at t = 0
inline constexpr int kPrevKeyVocab = 89;
inline constexpr int kDtVocab = 32;

struct ModelConfig {
  std::size_t hidden_size = 128;
  std::size_t num_layers = 2;
  int k_buttons = 8;
  int vocab = kVocab;
  bool use_dt = false;
  Quantizer quantizer = Quantizer::iqae;
  double contour_weight = 1.0;
  double margin_weight = 1.0;
  std::size_t window_n = 128;
  std::size_t vq_dim = 4;
  double commitment_beta = 0.25;

  // Width of the encoder head output and of the decoder's button input.
  std::size_t button_width() const {
    switch (quantizer) {
      case Quantizer::iqae: return 1;
      case Quantizer::vq: return vq_dim;
      case Quantizer::none: return 0;
    }
    return 0;
  }
  bool has_encoder() const { return quantizer != Quantizer::none; }

  // Throws ContractViolation when a field is out of range.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace genie::model
