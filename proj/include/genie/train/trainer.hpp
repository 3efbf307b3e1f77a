#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include "genie/data/shard.hpp"
#include "genie/model/genie_model.hpp"
#include "genie/nn/adam.hpp"
#include "json.hpp"

namespace genie::train {

struct TrainRunConfig {
  std::size_t max_steps = 100000;
  std::size_t batch_size = 32;
  std::size_t eval_every_steps = 1000;
  std::size_t patience_evals = 10;
  std::size_t log_every_steps = 100;
  std::uint64_t seed = 0;
  std::size_t window_n = 128;
  model::ModelConfig model;
  nn::AdamSettings optimizer;
  double clip_norm = 3.0;
  // Cap on validation windows per evaluation; 0 means all of them.
  std::size_t max_eval_examples = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainRunConfig& c);
void from_json(const nlohmann::json& j, TrainRunConfig& c);
TrainRunConfig load_train_config(const std::filesystem::path& path);

struct TrainResult {
  model::GenieModel<float> best_model;
  std::size_t best_step = 0;
  double best_val_recons = 0;
  std::size_t steps_run = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  std::ostream* log = nullptr;                           // JSONL, one record per line
  std::optional<std::filesystem::path> checkpoint_path;  // rewritten on every improvement
  // Called after each optimizer step with (step, total loss); return false to stop.
  std::function<bool(std::size_t, double)> on_step;
  // Called after each validation pass with (step, mean recons NLL); return false to stop.
  std::function<bool(std::size_t, double)> on_eval;
};

// Teacher-forced training with Adam, global-norm clipping and early stopping
// on validation reconstruction loss. Throws DivergenceError on a non-finite
// loss or gradient and ContractViolation on empty or mismatched shards.
TrainResult train(const TrainRunConfig& config, const data::Shard& train_shard, const data::Shard& validation_shard,
                  const TrainHooks& hooks = {});

// Same, starting from existing weights instead of a fresh init.
TrainResult train_from(model::GenieModel<float> initial, const TrainRunConfig& config, const data::Shard& train_shard,
                       const data::Shard& validation_shard, const TrainHooks& hooks = {});

}  // namespace genie::train
