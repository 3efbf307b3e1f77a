#include "genie/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "genie/error.hpp"
#include "genie/model/checkpoint.hpp"
#include "genie/nn/random.hpp"
#include "genie/train/eval.hpp"

namespace genie::train {

using nlohmann::json;

void TrainRunConfig::validate() const {
  require(max_steps > 0 && batch_size > 0 && eval_every_steps > 0 && patience_evals > 0 && log_every_steps > 0,
          "train config: step counts and batch size must be positive");
  require(window_n > 0, "train config: window_n must be positive");
  require(optimizer.lr > 0 && optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 &&
              optimizer.beta2 < 1 && optimizer.epsilon > 0,
          "train config: invalid optimizer settings");
  require(clip_norm > 0, "train config: clip_norm must be positive");
  model.validate();
}

void to_json(json& j, const TrainRunConfig& c) {
  j = {{"max_steps", c.max_steps},
       {"batch_size", c.batch_size},
       {"eval_every_steps", c.eval_every_steps},
       {"patience_evals", c.patience_evals},
       {"log_every_steps", c.log_every_steps},
       {"seed", c.seed},
       {"window_n", c.window_n},
       {"model", c.model},
       {"optimizer",
        {{"lr", c.optimizer.lr},
         {"beta1", c.optimizer.beta1},
         {"beta2", c.optimizer.beta2},
         {"epsilon", c.optimizer.epsilon}}},
       {"clip_norm", c.clip_norm},
       {"max_eval_examples", c.max_eval_examples}};
}

void from_json(const json& j, TrainRunConfig& c) {
  const TrainRunConfig d;
  c.max_steps = j.value("max_steps", d.max_steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.eval_every_steps = j.value("eval_every_steps", d.eval_every_steps);
  c.patience_evals = j.value("patience_evals", d.patience_evals);
  c.log_every_steps = j.value("log_every_steps", d.log_every_steps);
  c.seed = j.value("seed", d.seed);
  c.window_n = j.value("window_n", d.window_n);
  c.model = j.contains("model") ? j.at("model").get<model::ModelConfig>() : d.model;
  c.model.window_n = c.window_n;
  const json opt = j.value("optimizer", json::object());
  c.optimizer.lr = opt.value("lr", d.optimizer.lr);
  c.optimizer.beta1 = opt.value("beta1", d.optimizer.beta1);
  c.optimizer.beta2 = opt.value("beta2", d.optimizer.beta2);
  c.optimizer.epsilon = opt.value("epsilon", d.optimizer.epsilon);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.max_eval_examples = j.value("max_eval_examples", d.max_eval_examples);
  c.validate();
}

TrainRunConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  try {
    return json::parse(in).get<TrainRunConfig>();
  } catch (const json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

namespace {

void emit(const TrainHooks& hooks, const json& record) {
  if (hooks.log) *hooks.log << record.dump() << '\n' << std::flush;
}

}  // namespace

TrainResult train(const TrainRunConfig& config, const data::Shard& train_shard, const data::Shard& validation_shard,
                  const TrainHooks& hooks) {
  config.validate();
  model::GenieModel<float> m(config.model);
  std::mt19937_64 init_rng(config.seed);
  m.init(init_rng);
  return train_from(std::move(m), config, train_shard, validation_shard, hooks);
}

TrainResult train_from(model::GenieModel<float> m, const TrainRunConfig& config, const data::Shard& train_shard,
                       const data::Shard& validation_shard, const TrainHooks& hooks) {
  config.validate();
  require(m.config() == config.model, "train: model does not match the run config");
  require(!train_shard.examples.empty(), "train: training shard is empty");
  require(!validation_shard.examples.empty(), "train: validation shard is empty");
  require(train_shard.window == config.window_n && validation_shard.window == config.window_n,
          "train: shard window " + std::to_string(train_shard.window) + " does not match window_n " +
              std::to_string(config.window_n));

  std::span<const data::TrainingExample> val(validation_shard.examples);
  if (config.max_eval_examples > 0 && val.size() > config.max_eval_examples) val = val.first(config.max_eval_examples);

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  auto params = m.parameters();
  nn::AdamState<float> adam{config.optimizer};

  TrainResult result{m};
  result.best_val_recons = std::numeric_limits<double>::infinity();
  std::size_t bad_evals = 0;

  emit(hooks, {{"event", "start"}, {"config", config}, {"parameters", m.parameter_count()},
               {"train_examples", train_shard.examples.size()}, {"validation_examples", val.size()}});

  bool stop_requested = false;
  auto evaluate = [&](std::size_t step) {
    const double recons = mean_recons_nll(m, val);
    const bool improved = recons < result.best_val_recons;
    if (improved) {
      result.best_val_recons = recons;
      result.best_step = step;
      result.best_model = m;
      bad_evals = 0;
      if (hooks.checkpoint_path)
        model::save_checkpoint(*hooks.checkpoint_path, m, {{"step", step}, {"val_recons", recons}});
    } else {
      ++bad_evals;
    }
    emit(hooks, {{"event", "eval"}, {"step", step}, {"val_recons", recons}, {"val_ppl", std::exp(recons)},
                 {"improved", improved}});
    if (hooks.on_eval && !hooks.on_eval(step, recons)) stop_requested = true;
  };

  std::vector<const data::TrainingExample*> picks(config.batch_size);
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    for (auto& p : picks) p = &train_shard.examples[nn::uniform_index(rng, train_shard.examples.size())];
    const model::Batch batch = model::make_batch(std::span<const data::TrainingExample* const>(picks));

    for (auto* p : params) {
      p->ensure_grad();
      p->zero_grad();
    }
    nn::Graph<float> g;
    const auto parts = m.loss(g, batch);
    if (!std::isfinite(parts.total_value)) {
      json record = {{"event", "diverged"}, {"step", step}, {"loss", parts.total_value}, {"recons", parts.recons_value}};
      emit(hooks, record);
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": loss " + record.dump());
    }
    g.backward(parts.total);
    const double norm = nn::clip_grad_norm(std::span<nn::Tensor<float>* const>(params), config.clip_norm);
    try {
      nn::adam_update(std::span<nn::Tensor<float>* const>(params), adam);
    } catch (const DivergenceError& e) {
      emit(hooks, {{"event", "diverged"}, {"step", step}, {"grad_norm", norm}});
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    result.steps_run = step;

    if (step % config.log_every_steps == 0 || step == 1) {
      json record = {{"event", "step"}, {"step", step}, {"loss", parts.total_value},
                     {"recons", parts.recons_value}, {"grad_norm", norm}};
      if (parts.margin_value) record["margin"] = *parts.margin_value;
      if (parts.contour_value) record["contour"] = *parts.contour_value;
      if (parts.codebook_value) record["codebook"] = *parts.codebook_value;
      if (parts.commitment_value) record["commitment"] = *parts.commitment_value;
      emit(hooks, record);
    }
    if (hooks.on_step && !hooks.on_step(step, parts.total_value)) break;
    if (step % config.eval_every_steps == 0) {
      evaluate(step);
      if (stop_requested) break;
      if (bad_evals >= config.patience_evals) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (result.best_step == 0 || (!result.early_stopped && result.steps_run % config.eval_every_steps != 0))
    evaluate(result.steps_run);

  emit(hooks, {{"event", "done"}, {"steps", result.steps_run}, {"best_step", result.best_step},
               {"best_val_recons", result.best_val_recons}, {"early_stopped", result.early_stopped}});
  return result;
}

}  // namespace genie::train
