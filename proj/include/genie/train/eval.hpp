#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "genie/data/sequence.hpp"
#include "genie/model/genie_model.hpp"

namespace genie::train {

// Token-weighted mean reconstruction NLL, teacher forced, the encoder seeing
// each full window.
double mean_recons_nll(model::GenieModel<float>& m, std::span<const data::TrainingExample> examples,
                       std::size_t batch_size = 64);

// exp(mean_recons_nll).
double eval_ppl(model::GenieModel<float>& m, std::span<const data::TrainingExample> examples,
                std::size_t batch_size = 64);

// Fraction of tokens whose teacher-forced argmax equals the target key.
double recons_accuracy(model::GenieModel<float>& m, std::span<const data::TrainingExample> examples,
                       std::size_t batch_size = 64);

struct Encoded {
  std::vector<int> buttons;  // quantized: IQAE button or VQ index
  std::vector<double> raw;   // IQAE enc_s; empty for VQ
};

// Encoder plus quantizer over one sequence.
Encoded encode_sequence(model::GenieModel<float>& m, std::span<const int> keys, std::span<const int> dt_buckets);

enum class CvrMode {
  sign_mismatch,    // violation iff sign(Δkey) ≠ sign(Δbutton), three-valued sign
  strict_opposite,  // violation iff the signs are +/− or −/+
};

struct CvrCount {
  std::size_t violations = 0;
  std::size_t transitions = 0;
  double ratio() const { return transitions ? static_cast<double>(violations) / transitions : 0.0; }
};

CvrCount count_contour_violations(std::span<const int> keys, std::span<const int> buttons,
                                  CvrMode mode = CvrMode::sign_mismatch);

// Pooled over all windows. Requires an encoder.
double eval_cvr(model::GenieModel<float>& m, std::span<const data::TrainingExample> examples,
                CvrMode mode = CvrMode::sign_mismatch);

struct GoldMelody {
  std::string name;
  std::vector<int> keys;
  std::vector<int> gold_buttons;
  std::vector<double> beats;  // note lengths in beats; empty means one beat each
  double tempo_bpm = 100;

  // ΔT buckets from the notated rhythm; bucket 31 on the first note.
  std::vector<int> dt_buckets() const;
};

// JSON array of {name, keys, gold_buttons, tempo_bpm, beats?}.
std::vector<GoldMelody> load_gold_melodies(const std::filesystem::path& path);
std::vector<GoldMelody> parse_gold_melodies(const std::string& json_text);

// Σ (predicted − gold)² over all notes / number of notes.
struct GoldAccumulator {
  double squared_error = 0;
  std::size_t notes = 0;
  void add(std::span<const double> predicted, std::span<const int> gold);
  std::optional<double> mse() const;
};

// Button-space MSE against the fixtures. With `raw`, IQAE enc_s is mapped to
// button units as (enc_s + 1)·(k − 1)/2 instead of being quantized. Melodies
// under two notes are skipped with a warning on `warnings`.
std::optional<double> eval_gold(model::GenieModel<float>& m, std::span<const GoldMelody> melodies, bool raw = false,
                                std::ostream* warnings = nullptr);

}  // namespace genie::train
