#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "genie/error.hpp"
#include "genie/train/eval.hpp"
#include "genie/train/report.hpp"
#include "genie/train/trainer.hpp"

using namespace genie;
using namespace genie::train;
using model::GenieModel;
using model::ModelConfig;
using model::Quantizer;

namespace {

ModelConfig small_config(Quantizer q = Quantizer::iqae) {
  ModelConfig c;
  c.hidden_size = 8;
  c.num_layers = 1;
  c.quantizer = q;
  c.window_n = 8;
  return c;
}

data::TrainingExample example(std::vector<int> keys) {
  data::TrainingExample ex;
  ex.dt_buckets.assign(keys.size(), 8);
  ex.dt_buckets[0] = data::kFirstNoteDtBucket;
  ex.keys = std::move(keys);
  return ex;
}

data::Shard scale_shard(int base, std::size_t count) {
  data::Shard s{8, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const int b = base + static_cast<int>(i % 5);
    s.examples.push_back(example({b, b + 2, b + 4, b + 5, b + 7, b + 5, b + 4, b + 2}));
  }
  return s;
}

TrainRunConfig run_config() {
  TrainRunConfig c;
  c.max_steps = 40;
  c.batch_size = 4;
  c.eval_every_steps = 10;
  c.log_every_steps = 10;
  c.window_n = 8;
  c.model = small_config();
  c.optimizer.lr = 1e-2;
  c.seed = 7;
  return c;
}

std::vector<double> loss_curve(const TrainRunConfig& config, const data::Shard& train, const data::Shard& val) {
  std::vector<double> curve;
  TrainHooks hooks;
  hooks.on_step = [&](std::size_t, double loss) {
    curve.push_back(loss);
    return true;
  };
  (void)genie::train::train(config, train, val, hooks);
  return curve;
}

}  // namespace

TEST(Cvr, OppositeDirectionsIsAViolation) {
  const std::vector<int> keys = {39, 41}, buttons = {5, 3};
  EXPECT_DOUBLE_EQ(count_contour_violations(keys, buttons).ratio(), 1.0);
}

TEST(Cvr, FlatButtonOnMovingKeyDependsOnMode) {
  const std::vector<int> keys = {39, 41, 39, 41}, buttons = {2, 3, 3, 4};
  const auto literal = count_contour_violations(keys, buttons, CvrMode::sign_mismatch);
  EXPECT_EQ(literal.violations, 1u);
  EXPECT_EQ(literal.transitions, 3u);
  EXPECT_DOUBLE_EQ(literal.ratio(), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(count_contour_violations(keys, buttons, CvrMode::strict_opposite).ratio(), 0.0);
}

TEST(Cvr, MatchingContourHasNoViolations) {
  const std::vector<int> keys = {30, 32, 34, 35}, buttons = {0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(count_contour_violations(keys, buttons).ratio(), 0.0);
  EXPECT_DOUBLE_EQ(count_contour_violations(std::vector<int>{}, std::vector<int>{}).ratio(), 0.0);
}

TEST(Cvr, InvariantUnderTranspositionAndButtonShift) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> keys, buttons;
    for (int t = 0; t < 16; ++t) {
      keys.push_back(30 + static_cast<int>(rng() % 20));
      buttons.push_back(static_cast<int>(rng() % 4));
    }
    const auto base = count_contour_violations(keys, buttons).violations;
    auto shifted_keys = keys, shifted_buttons = buttons;
    for (auto& k : shifted_keys) k += 11;
    for (auto& b : shifted_buttons) b += 3;
    EXPECT_EQ(count_contour_violations(shifted_keys, shifted_buttons).violations, base);
  }
}

TEST(Cvr, LengthMismatchIsAContractViolation) {
  EXPECT_THROW(count_contour_violations(std::vector<int>{1, 2}, std::vector<int>{1}), ContractViolation);
}

TEST(Gold, IdenticalButtonsScoreZero) {
  GoldAccumulator acc;
  acc.add(std::vector<double>{0, 3, 7}, std::vector<int>{0, 3, 7});
  EXPECT_DOUBLE_EQ(*acc.mse(), 0.0);
}

TEST(Gold, ConstantOffByOneScoresOne) {
  GoldAccumulator acc;
  acc.add(std::vector<double>{1, 4, 6}, std::vector<int>{0, 3, 7});
  acc.add(std::vector<double>{3}, std::vector<int>{2});
  EXPECT_DOUBLE_EQ(*acc.mse(), 1.0);
}

TEST(Gold, EmptyAccumulatorHasNoScore) { EXPECT_FALSE(GoldAccumulator{}.mse().has_value()); }

TEST(Gold, ShortMelodiesAreSkippedWithAWarning) {
  GenieModel<float> m(small_config());
  std::mt19937_64 rng(1);
  m.init(rng);
  std::vector<GoldMelody> melodies = {{"one_note", {40}, {3}, {}, 100},
                                      {"scale", {39, 41, 43}, {0, 1, 2}, {}, 100}};
  std::ostringstream warnings;
  const auto both = eval_gold(m, melodies, false, &warnings);
  EXPECT_NE(warnings.str().find("one_note"), std::string::npos);
  const auto only_scale = eval_gold(m, std::span<const GoldMelody>(melodies).subspan(1));
  ASSERT_TRUE(both && only_scale);
  EXPECT_DOUBLE_EQ(*both, *only_scale);
  EXPECT_FALSE(eval_gold(m, std::span<const GoldMelody>(melodies).first(1)).has_value());
}

TEST(Gold, RhythmBecomesDtBuckets) {
  // 100 BPM: one beat is 0.6 s, half a beat 0.3 s
  GoldMelody g{"r", {1, 2, 3}, {0, 1, 2}, {1.0, 0.5, 1.0}, 100};
  const std::vector<int> expected = {31, data::dt_bucket(0.6), data::dt_bucket(0.3)};
  EXPECT_EQ(g.dt_buckets(), expected);
}

TEST(Gold, FixturesParseAndFollowRankConvention) {
  const auto melodies = load_gold_melodies(std::string(GENIE_FIXTURE_DIR) + "/gold_melodies.json");
  ASSERT_GE(melodies.size(), 8u);
  for (const auto& m : melodies) {
    ASSERT_EQ(m.keys.size(), m.gold_buttons.size()) << m.name;
    // higher pitch never gets a lower button, equal pitch the same one
    for (std::size_t i = 0; i < m.keys.size(); ++i)
      for (std::size_t j = 0; j < m.keys.size(); ++j) {
        if (m.keys[i] == m.keys[j]) EXPECT_EQ(m.gold_buttons[i], m.gold_buttons[j]) << m.name;
        if (m.keys[i] < m.keys[j]) EXPECT_LT(m.gold_buttons[i], m.gold_buttons[j]) << m.name;
      }
  }
}

TEST(Gold, MalformedFixturesAreRejected) {
  EXPECT_THROW(parse_gold_melodies("[{\"name\":\"x\",\"keys\":[1,2],\"gold_buttons\":[1]}]"), ParseError);
  EXPECT_THROW(parse_gold_melodies("[{\"name\":\"x\",\"keys\":[99],\"gold_buttons\":[1]}]"), ParseError);
  EXPECT_THROW(parse_gold_melodies("[{\"name\":\"x\",\"keys\":[1],\"gold_buttons\":[8]}]"), ParseError);
  EXPECT_THROW(parse_gold_melodies("not json"), ParseError);
}

TEST(Perplexity, ZeroModelIsUniformOverKeys) {
  for (auto q : {Quantizer::iqae, Quantizer::vq, Quantizer::none}) {
    GenieModel<float> m(small_config(q));
    for (auto* p : m.parameters()) p->fill(0.0f);
    const auto shard = scale_shard(30, 5);
    EXPECT_NEAR(eval_ppl(m, shard.examples, 2), 88.0, 1e-3) << model::to_string(q);
  }
}

TEST(Perplexity, BatchingDoesNotChangeTheMean) {
  GenieModel<float> m(small_config());
  std::mt19937_64 rng(4);
  m.init(rng);
  auto shard = scale_shard(20, 7);
  shard.examples.push_back(example({50, 52, 54}));  // shorter window, separate batch
  const double a = mean_recons_nll(m, shard.examples, 1);
  const double b = mean_recons_nll(m, shard.examples, 64);
  EXPECT_NEAR(a, b, 1e-5);
}

TEST(Report, AbsentMetricsRenderBlankNotZero) {
  std::vector<EvalReport> reports = {{"lm", std::nullopt, 12.5, std::nullopt, std::nullopt},
                                     {"iqae", 3000, 4.25, 0.125, 1.5}};
  const std::string table = render_table(reports);
  std::istringstream lines(table);
  std::string header, rule, lm_row, iqae_row;
  std::getline(lines, header);
  std::getline(lines, rule);
  std::getline(lines, lm_row);
  std::getline(lines, iqae_row);
  EXPECT_EQ(header.substr(0, 5), "model");
  EXPECT_EQ(rule.find_first_not_of('-'), std::string::npos);
  EXPECT_EQ(lm_row.find("0.000"), std::string::npos);
  EXPECT_NE(lm_row.find("12.500"), std::string::npos);
  EXPECT_NE(iqae_row.find("0.125"), std::string::npos);
  EXPECT_NE(iqae_row.find("3000"), std::string::npos);

  const std::string jsonl = render_jsonl(reports);
  const auto first = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  EXPECT_FALSE(first.contains("cvr"));
  EXPECT_FALSE(first.contains("gold_mse"));
  EXPECT_FALSE(first.contains("step"));
  EXPECT_DOUBLE_EQ(first.at("ppl").get<double>(), 12.5);
}

TEST(Report, LanguageModelHasNoContourOrGoldScores) {
  GenieModel<float> m(small_config(Quantizer::none));
  std::mt19937_64 rng(2);
  m.init(rng);
  const auto shard = scale_shard(30, 3);
  const std::vector<GoldMelody> gold = {{"g", {1, 2}, {0, 1}, {}, 100}};
  const auto r = evaluate_model(m, "lm", shard.examples, gold);
  EXPECT_FALSE(r.cvr.has_value());
  EXPECT_FALSE(r.gold_mse.has_value());
  EXPECT_GT(r.ppl, 1.0);
}

TEST(TrainConfig, JsonRoundTripAndDefaults) {
  TrainRunConfig c = run_config();
  c.model.use_dt = true;
  c.optimizer.lr = 2e-3;
  const nlohmann::json j = c;
  const auto back = j.get<TrainRunConfig>();
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.max_steps, c.max_steps);
  EXPECT_DOUBLE_EQ(back.optimizer.lr, 2e-3);

  const auto sparse = nlohmann::json::parse(R"({"window_n": 16, "model": {"quantizer": "vq"}})").get<TrainRunConfig>();
  EXPECT_EQ(sparse.model.window_n, 16u);
  EXPECT_EQ(sparse.model.quantizer, Quantizer::vq);
  EXPECT_EQ(sparse.batch_size, 32u);
  EXPECT_DOUBLE_EQ(sparse.clip_norm, 3.0);
  EXPECT_THROW((void)nlohmann::json::parse(R"({"batch_size": 0})").get<TrainRunConfig>(), ContractViolation);
}

TEST(Training, SameSeedGivesIdenticalLossCurves) {
  const auto train_shard = scale_shard(30, 20), val = scale_shard(32, 5);
  const auto config = run_config();
  const auto a = loss_curve(config, train_shard, val);
  const auto b = loss_curve(config, train_shard, val);
  ASSERT_EQ(a.size(), config.max_steps);
  EXPECT_EQ(a, b);
  auto other = config;
  other.seed = 8;
  EXPECT_NE(loss_curve(other, train_shard, val), a);
}

TEST(Training, LossDecreasesOnASmallCorpus) {
  auto config = run_config();
  config.max_steps = 200;
  config.eval_every_steps = 50;
  auto r = genie::train::train(config, scale_shard(30, 20), scale_shard(30, 5));
  GenieModel<float> fresh(config.model);
  std::mt19937_64 rng(config.seed);
  fresh.init(rng);
  const auto val = scale_shard(30, 5);
  EXPECT_LT(r.best_val_recons, mean_recons_nll(fresh, val.examples) - 1.0);
  EXPECT_NEAR(r.best_val_recons, mean_recons_nll(r.best_model, val.examples), 1e-6);
}

TEST(Training, StopsEarlyWhenValidationStopsImproving) {
  // Training on low keys only pushes probability away from the high-key
  // validation windows, so validation loss rises after the first evaluation.
  auto config = run_config();
  config.max_steps = 1000;
  config.eval_every_steps = 5;
  config.patience_evals = 3;
  config.optimizer.lr = 3e-2;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  const auto r = genie::train::train(config, scale_shard(5, 20), scale_shard(70, 5), hooks);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_LT(r.steps_run, config.max_steps);
  EXPECT_EQ(r.steps_run, r.best_step + config.patience_evals * config.eval_every_steps);
  EXPECT_NE(log.str().find("\"event\":\"done\""), std::string::npos);
}

TEST(Training, NonFiniteLossRaisesDivergence) {
  auto config = run_config();
  config.optimizer.lr = 1e30;
  config.max_steps = 50;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  EXPECT_THROW(genie::train::train(config, scale_shard(30, 20), scale_shard(30, 5), hooks), DivergenceError);
  EXPECT_NE(log.str().find("diverged"), std::string::npos);
}

TEST(Training, EmptyOrMismatchedShardsAreRejected) {
  const auto config = run_config();
  EXPECT_THROW(genie::train::train(config, data::Shard{8, {}}, scale_shard(30, 5)), ContractViolation);
  EXPECT_THROW(genie::train::train(config, scale_shard(30, 5), data::Shard{8, {}}), ContractViolation);
  auto wide = scale_shard(30, 5);
  wide.window = 16;
  EXPECT_THROW(genie::train::train(config, wide, scale_shard(30, 5)), ContractViolation);
}

TEST(Perplexity, AccuracyOfZeroModelPicksTheLowestKey) {
  // all-zero logits tie everywhere; argmax takes key 0
  GenieModel<float> m(small_config());
  for (auto* p : m.parameters()) p->fill(0.0f);
  const std::vector<data::TrainingExample> low = {example({0, 0, 0, 0})}, high = {example({5, 6, 7, 8})};
  EXPECT_DOUBLE_EQ(recons_accuracy(m, low), 1.0);
  EXPECT_DOUBLE_EQ(recons_accuracy(m, high), 0.0);
  const std::vector<data::TrainingExample> mixed = {example({0, 0, 7, 8}), example({0, 6, 7, 8})};
  EXPECT_DOUBLE_EQ(recons_accuracy(m, mixed), 3.0 / 8.0);
}
