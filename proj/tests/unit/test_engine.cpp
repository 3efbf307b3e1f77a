#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <random>

#include "genie/engine/session.hpp"
#include "genie/error.hpp"
#include "genie/model/quantize.hpp"

using namespace genie;
using namespace genie::engine;
using model::GenieModel;
using model::ModelConfig;
using model::Quantizer;

namespace {

ModelConfig engine_config(Quantizer q, bool use_dt) {
  ModelConfig c;
  c.hidden_size = 16;
  c.num_layers = 2;
  c.quantizer = q;
  c.use_dt = use_dt;
  c.window_n = 16;
  return c;
}

std::shared_ptr<const DecoderRuntime> runtime_for(const ModelConfig& c, std::uint64_t seed = 1) {
  GenieModel<float> m(c);
  std::mt19937_64 rng(seed);
  m.init(rng);
  return std::make_shared<const DecoderRuntime>(m);
}

// Teacher-forced logits from the training graph for one sequence pressed
// with the given buttons.
std::vector<std::vector<float>> graph_logits(GenieModel<float>& m, const std::vector<int>& keys,
                                            const std::vector<int>& buttons, const std::vector<int>& dt) {
  const auto batch = model::make_batch(std::span<const int>(keys), std::span<const int>(dt));
  nn::Graph<float> g(false);
  nn::Var repr;
  const auto& c = m.config();
  if (c.quantizer == Quantizer::iqae) {
    std::vector<float> v;
    for (int b : buttons) v.push_back(static_cast<float>(model::centroid(b, c.k_buttons)));
    repr = g.input(nn::Tensor<float>({keys.size(), 1}, v));
  } else if (c.quantizer == Quantizer::vq) {
    std::vector<float> v;
    for (int b : buttons)
      for (std::size_t j = 0; j < c.vq_dim; ++j) v.push_back(m.codebook().data()[b * c.vq_dim + j]);
    repr = g.input(nn::Tensor<float>({keys.size(), c.vq_dim}, v));
  }
  const auto& logits = g.value(m.decoder_forward(g, batch, repr));
  std::vector<std::vector<float>> out;
  for (std::size_t t = 0; t < keys.size(); ++t)
    out.emplace_back(logits.data() + t * model::kVocab, logits.data() + (t + 1) * model::kVocab);
  return out;
}

std::vector<NoteEvent> run_stream(DecoderSession& s, std::uint64_t stream_seed, std::size_t presses) {
  std::mt19937_64 rng(stream_seed);
  std::vector<NoteEvent> all;
  double t = 0;
  for (std::size_t i = 0; i < presses; ++i) {
    t += 0.05 * static_cast<double>(rng() % 10);
    const int b = static_cast<int>(rng() % 8);
    for (auto& e : s.press(b, t)) all.push_back(e);
    if (rng() % 2)
      if (auto off = s.release(static_cast<int>(rng() % 8), t)) all.push_back(*off);
  }
  return all;
}

}  // namespace

class RuntimeParity : public ::testing::TestWithParam<std::tuple<Quantizer, bool>> {};

TEST_P(RuntimeParity, StepwiseLogitsMatchTheTrainingGraph) {
  const auto [q, use_dt] = GetParam();
  GenieModel<float> m(engine_config(q, use_dt));
  std::mt19937_64 rng(9);
  m.init(rng);
  const DecoderRuntime runtime(m);

  std::vector<int> keys, buttons, dt;
  for (int t = 0; t < 12; ++t) {
    keys.push_back(static_cast<int>(rng() % 88));
    buttons.push_back(static_cast<int>(rng() % 8));
    dt.push_back(t == 0 ? 31 : static_cast<int>(rng() % 32));
  }
  const auto expected = graph_logits(m, keys, buttons, dt);
  auto state = runtime.zero_state();
  std::vector<float> logits(88);
  int prev = model::kStartSymbol;
  for (std::size_t t = 0; t < keys.size(); ++t) {
    runtime.step(state, prev, buttons[t], dt[t], logits);
    for (int k = 0; k < 88; ++k) ASSERT_NEAR(logits[k], expected[t][k], 1e-5) << "t=" << t << " k=" << k;
    prev = keys[t];
  }
}

INSTANTIATE_TEST_SUITE_P(AllVariants, RuntimeParity,
                         ::testing::Combine(::testing::Values(Quantizer::iqae, Quantizer::vq, Quantizer::none),
                                            ::testing::Bool()));

TEST(Sampling, ZeroTemperatureIsArgmaxWithLowestIndexOnTies) {
  std::mt19937_64 rng(1);
  const auto before = rng;
  const std::vector<float> logits = {1.0f, 3.0f, 3.0f, 2.0f};
  EXPECT_EQ(sample_key(logits, 0.0, rng), 1);
  EXPECT_EQ(rng, before);  // no draw consumed
}

TEST(Sampling, TemperatureQuarterMatchesSharpenedSoftmax) {
  std::mt19937_64 logit_rng(21);
  std::vector<float> logits(88);
  for (auto& l : logits) l = static_cast<float>(nn::uniform(logit_rng, -1.0, 1.0));
  const double T = 0.25;
  // oracle: direct softmax of logits/T
  std::vector<double> p(88);
  double z = 0;
  for (int i = 0; i < 88; ++i) z += p[i] = std::exp(static_cast<double>(logits[i]) / T);
  for (auto& v : p) v /= z;

  std::mt19937_64 rng(5);
  const int n = 10000;
  std::vector<int> counts(88, 0);
  for (int i = 0; i < n; ++i) ++counts[sample_key(logits, T, rng)];

  // pool small-expectation bins so every bin expects at least 5
  double stat = 0, pooled_expected = 0, pooled_observed = 0;
  int bins = 0;
  for (int i = 0; i < 88; ++i) {
    const double e = p[i] * n;
    if (e < 5) {
      pooled_expected += e;
      pooled_observed += counts[i];
      continue;
    }
    stat += (counts[i] - e) * (counts[i] - e) / e;
    ++bins;
  }
  if (pooled_expected > 0) {
    stat += (pooled_observed - pooled_expected) * (pooled_observed - pooled_expected) / pooled_expected;
    ++bins;
  }
  const boost::math::chi_squared dist(bins - 1);
  const double p_value = 1.0 - boost::math::cdf(dist, stat);
  EXPECT_GT(p_value, 0.01) << "chi2=" << stat << " bins=" << bins;
}

TEST(Sampling, SharperTemperatureConcentratesMass) {
  const std::vector<float> logits = {0.0f, 0.5f, 1.0f};
  const auto cold = softmax_with_temperature(logits, 0.25);
  const auto warm = softmax_with_temperature(logits, 1.0);
  EXPECT_GT(cold[2], warm[2]);
  EXPECT_LT(cold[0], warm[0]);
}

TEST(Session, NegativeTemperatureIsAContractViolation) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, false));
  EXPECT_THROW(DecoderSession(rt, -0.1), ContractViolation);
  DecoderSession s(rt);
  EXPECT_THROW(s.set_temperature(-1), ContractViolation);
  EXPECT_DOUBLE_EQ(s.temperature(), DecoderSession::kDefaultTemperature);
}

TEST(Session, ZeroTemperaturePressPlaysTheArgmaxKey) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, false));
  DecoderSession s(rt, 0.0, 3);
  for (int b : {4, 1, 7, 7, 0}) {
    const auto logits = s.peek_logits(b, 0);
    const int argmax = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const auto events = s.press(b, 0);
    EXPECT_EQ(events.back().key, argmax);
  }
}

TEST(Session, ReleaseSendsOffForThePressedKey) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)), 1.0, 4);
  const auto on = s.press(3, 0.0);
  ASSERT_EQ(on.size(), 1u);
  EXPECT_EQ(on[0].kind, NoteKind::on);
  const auto off = s.release(3, 0.5);
  ASSERT_TRUE(off);
  EXPECT_EQ(*off, (NoteEvent{NoteKind::off, on[0].key, 3, 0.5}));
  EXPECT_FALSE(s.release(3, 0.6));
}

TEST(Session, StaleReleaseProducesNothing) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)));
  EXPECT_FALSE(s.release(2, 0.0));
  EXPECT_FALSE(s.release(-1, 0.0));
  EXPECT_FALSE(s.release(99, 0.0));
}

TEST(Session, RepressRetriggersOffThenOn) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)), 1.0, 8);
  const int first = s.press(3, 0.0).at(0).key;
  const auto second = s.press(3, 0.1);
  ASSERT_EQ(second.size(), 2u);
  EXPECT_EQ(second[0], (NoteEvent{NoteKind::off, first, 3, 0.1}));
  EXPECT_EQ(second[1].kind, NoteKind::on);
  const auto off = s.release(3, 0.2);
  ASSERT_TRUE(off);
  EXPECT_EQ(off->key, second[1].key);
  EXPECT_EQ(s.held_count(), 0u);
}

TEST(Session, EightSimultaneousPressesAllSound) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)), 1.0, 2);
  for (int b = 0; b < 8; ++b) {
    const auto events = s.press(b, 1.0);
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].kind, NoteKind::on);
  }
  EXPECT_EQ(s.held_count(), 8u);
}

TEST(Session, ButtonOutOfRangeIsRejected) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)));
  EXPECT_THROW(s.press(8, 0), ContractViolation);
  EXPECT_THROW(s.press(-1, 0), ContractViolation);
}

TEST(Session, FirstPressUsesTheFirstNoteBucket) {
  const auto c = engine_config(Quantizer::iqae, true);
  auto rt = runtime_for(c);
  DecoderSession s(rt);
  std::vector<float> expected(88);
  auto state = rt->zero_state();
  rt->step(state, model::kStartSymbol, 5, 31, expected);
  EXPECT_EQ(s.peek_logits(5, 123.0), expected);
}

TEST(Session, BackwardsTimeIsClampedToZeroDelta) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, true));
  DecoderSession s(rt, 0.0, 1);
  std::vector<std::string> warnings;
  s.on_warning = [&](const std::string& w) { warnings.push_back(w); };
  s.press(0, 2.0);
  const auto at_same_time = s.peek_logits(1, 2.0);
  EXPECT_EQ(s.peek_logits(1, 1.5), at_same_time);
  const auto events = s.press(1, 1.5);
  EXPECT_DOUBLE_EQ(events.back().time, 2.0);
  EXPECT_EQ(s.clamped_timestamps(), 1u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Session, DtChangesTheDistributionOnDtModels) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, true));
  DecoderSession s(rt);
  s.press(0, 0.0);
  EXPECT_NE(s.peek_logits(1, 0.01), s.peek_logits(1, 0.9));
}

TEST(Session, SameSeedSameStreamSameEvents) {
  auto rt = runtime_for(engine_config(Quantizer::vq, true));
  DecoderSession a(rt, 0.7, 42), b(rt, 0.7, 42), c(rt, 0.7, 43);
  const auto ea = run_stream(a, 1, 200), eb = run_stream(b, 1, 200), ec = run_stream(c, 1, 200);
  EXPECT_EQ(ea, eb);
  EXPECT_NE(ea, ec);
}

TEST(Lookahead, RowsMatchWhatPressWouldSampleFrom) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, false));
  DecoderSession s(rt, 1.0, 6);
  s.press(2, 0.0);
  s.press(5, 0.3);
  const auto rows = s.lookahead();
  ASSERT_EQ(rows.size(), 8u);
  for (int b = 0; b < 8; ++b) {
    const auto expected = softmax_with_temperature(s.peek_logits(b, 0.6), 1.0);
    double sum = 0;
    for (int k = 0; k < 88; ++k) {
      EXPECT_NEAR(rows[b][k], expected[k], 1e-12);
      sum += rows[b][k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Lookahead, DoesNotAdvanceTheSession) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, false));
  DecoderSession looked(rt, 0.5, 11), plain(rt, 0.5, 11);
  looked.press(1, 0);
  plain.press(1, 0);
  const auto first = looked.lookahead();
  EXPECT_EQ(looked.lookahead(), first);
  EXPECT_EQ(run_stream(looked, 3, 50), run_stream(plain, 3, 50));
}

TEST(Lookahead, UnsupportedOnDtModels) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, true)));
  EXPECT_THROW(s.lookahead(), UnsupportedOperation);
}

TEST(Lookahead, LanguageModelRowsAreIdentical) {
  DecoderSession s(runtime_for(engine_config(Quantizer::none, false)));
  const auto rows = s.lookahead();
  for (int b = 1; b < 8; ++b) EXPECT_EQ(rows[b], rows[0]);
}

TEST(Reset, ReleasesHeldNotes) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)), 1.0, 2);
  const int k1 = s.press(1, 0).at(0).key;
  const int k6 = s.press(6, 0).at(0).key;
  const auto offs = s.reset(1.0);
  ASSERT_EQ(offs.size(), 2u);
  EXPECT_EQ(offs[0], (NoteEvent{NoteKind::off, k1, 1, 1.0}));
  EXPECT_EQ(offs[1], (NoteEvent{NoteKind::off, k6, 6, 1.0}));
  EXPECT_EQ(s.held_count(), 0u);
  EXPECT_EQ(s.previous_key(), model::kStartSymbol);
}

TEST(Reset, FreshSessionResetIsANoOp) {
  DecoderSession s(runtime_for(engine_config(Quantizer::iqae, false)));
  EXPECT_TRUE(s.reset(0).empty());
}

TEST(Reset, BehavesLikeAFreshSession) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, true));
  // T = 0 draws nothing, so only the model state can differ
  DecoderSession used(rt, 0.0, 1), fresh(rt, 0.0, 1);
  run_stream(used, 8, 30);
  used.reset(100.0);
  auto shift = [](std::vector<NoteEvent> ev) {
    for (auto& e : ev) e.time -= 200.0;
    return ev;
  };
  std::vector<NoteEvent> a, b;
  double t = 200.0;
  for (int i = 0; i < 20; ++i, t += 0.125) {
    for (auto& e : used.press(i % 8, t)) a.push_back(e);
    for (auto& e : fresh.press(i % 8, t - 200.0)) b.push_back(e);
  }
  EXPECT_EQ(shift(a), b);

  // with sampling, a fresh session that made the same draws agrees too
  DecoderSession warm(rt, 0.8, 5), twin(rt, 0.8, 5);
  run_stream(warm, 2, 25);
  run_stream(twin, 2, 25);
  warm.reset(0);
  twin.reset(0);
  EXPECT_EQ(run_stream(warm, 4, 25), run_stream(twin, 4, 25));
}

TEST(Fuzz, EveryOnIsMatchedByExactlyOneOff) {
  auto rt = runtime_for(engine_config(Quantizer::iqae, false));
  std::mt19937_64 rng(77);
  for (int session = 0; session < 5; ++session) {
    DecoderSession s(rt, 0.5, session);
    std::map<int, int> sounding;  // button → key
    double t = 0;
    auto apply = [&](const std::vector<NoteEvent>& events) {
      for (const auto& e : events) {
        if (e.kind == NoteKind::on) {
          ASSERT_FALSE(sounding.count(e.button));
          ASSERT_GE(e.key, 0);
          ASSERT_LT(e.key, 88);
          sounding[e.button] = e.key;
        } else {
          ASSERT_TRUE(sounding.count(e.button));
          ASSERT_EQ(sounding[e.button], e.key);
          sounding.erase(e.button);
        }
      }
    };
    for (int i = 0; i < 1000; ++i) {
      t += 0.01 * static_cast<double>(rng() % 20);
      const int b = static_cast<int>(rng() % 9) - (rng() % 2);  // occasionally out of range
      switch (rng() % 10) {
        case 0:
          apply(s.reset(t));
          break;
        case 1:
        case 2:
        case 3:
        case 4:
          if (b >= 0 && b < 8) apply(s.press(b, t));
          break;
        default:
          if (auto off = s.release(b, t)) apply({*off});
      }
      ASSERT_EQ(s.held_count(), sounding.size());
    }
    apply(s.release_all(t));
    EXPECT_TRUE(sounding.empty());
  }
}
