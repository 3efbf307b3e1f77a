#pragma once

#include <optional>
#include <span>
#include <string>

#include "genie/train/eval.hpp"

namespace genie::train {

struct EvalReport {
  std::string name;
  std::optional<std::size_t> step;
  double ppl = 0;
  std::optional<double> cvr;       // absent without an encoder
  std::optional<double> gold_mse;  // absent without an encoder or fixtures
};

struct EvalOptions {
  CvrMode cvr_mode = CvrMode::sign_mismatch;
  bool gold_raw = false;
  std::size_t batch_size = 64;
};

EvalReport evaluate_model(model::GenieModel<float>& m, const std::string& name,
                          std::span<const data::TrainingExample> examples, std::span<const GoldMelody> gold,
                          const EvalOptions& options = {}, std::ostream* warnings = nullptr);

// Fixed columns: model, step, PPL, CVR, Gold. Absent values render blank.
std::string render_table(std::span<const EvalReport> reports);
// One JSON object per line; absent metrics are omitted, never zero.
std::string render_jsonl(std::span<const EvalReport> reports);

}  // namespace genie::train
