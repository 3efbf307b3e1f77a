#include "genie/train/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "genie/error.hpp"
#include "json.hpp"

namespace genie::train {

using model::Batch;
using model::GenieModel;
using model::Quantizer;

namespace {

// Runs the loss over batches of equal-length windows; `fn` gets each batch and
// its loss breakdown.
template <typename Fn>
void for_each_batch(GenieModel<float>& m, std::span<const data::TrainingExample> examples, std::size_t batch_size,
                    Fn&& fn) {
  require(!examples.empty(), "eval: no examples");
  require(batch_size > 0, "eval: batch size must be positive");
  std::vector<const data::TrainingExample*> group;
  auto flush = [&] {
    if (group.empty()) return;
    const Batch batch = model::make_batch(std::span<const data::TrainingExample* const>(group));
    nn::Graph<float> g(false);
    fn(batch, g, m.loss(g, batch));
    group.clear();
  };
  for (const auto& ex : examples) {
    // windows of different lengths cannot share a batch
    if (!group.empty() && (group.size() == batch_size || group[0]->size() != ex.size())) flush();
    group.push_back(&ex);
  }
  flush();
}

}  // namespace

double mean_recons_nll(GenieModel<float>& m, std::span<const data::TrainingExample> examples, std::size_t batch_size) {
  double weighted = 0;
  std::size_t tokens = 0;
  for_each_batch(m, examples, batch_size, [&](const Batch& batch, nn::Graph<float>&, const auto& parts) {
    weighted += parts.recons_value * static_cast<double>(batch.rows());
    tokens += batch.rows();
  });
  return weighted / static_cast<double>(tokens);
}

double recons_accuracy(GenieModel<float>& m, std::span<const data::TrainingExample> examples, std::size_t batch_size) {
  std::size_t hits = 0, tokens = 0;
  for_each_batch(m, examples, batch_size, [&](const Batch& batch, nn::Graph<float>& g, const auto& parts) {
    const auto& logits = g.value(parts.logits);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      const float* row = logits.data() + r * model::kVocab;
      const auto best = std::max_element(row, row + model::kVocab) - row;
      hits += best == batch.keys[r];
    }
    tokens += batch.rows();
  });
  return static_cast<double>(hits) / static_cast<double>(tokens);
}

double eval_ppl(GenieModel<float>& m, std::span<const data::TrainingExample> examples, std::size_t batch_size) {
  return std::exp(mean_recons_nll(m, examples, batch_size));
}

Encoded encode_sequence(GenieModel<float>& m, std::span<const int> keys, std::span<const int> dt_buckets) {
  const auto& config = m.config();
  require(config.has_encoder(), "encode: the language-model baseline has no encoder");
  const Batch batch = model::make_batch(keys, dt_buckets);
  nn::Graph<float> g(false);
  const auto& out = g.value(m.encoder_forward(g, batch));
  Encoded enc;
  if (config.quantizer == Quantizer::iqae) {
    for (float v : out.values()) {
      enc.raw.push_back(v);
      enc.buttons.push_back(model::nearest_centroid(v, config.k_buttons));
    }
  } else {
    const auto& E = m.codebook();
    const std::size_t d = config.vq_dim;
    for (std::size_t r = 0; r < batch.rows(); ++r)
      enc.buttons.push_back(model::nearest_codeword(out.data() + r * d, E.data(), E.rows(), d));
  }
  return enc;
}

namespace {
int sign(int v) { return (v > 0) - (v < 0); }
}  // namespace

CvrCount count_contour_violations(std::span<const int> keys, std::span<const int> buttons, CvrMode mode) {
  require(keys.size() == buttons.size(), "cvr: keys and buttons differ in length");
  CvrCount c;
  for (std::size_t t = 1; t < keys.size(); ++t) {
    const int sk = sign(keys[t] - keys[t - 1]);
    const int sb = sign(buttons[t] - buttons[t - 1]);
    const bool violation = mode == CvrMode::sign_mismatch ? sk != sb : sk * sb < 0;
    c.violations += violation;
    ++c.transitions;
  }
  return c;
}

double eval_cvr(GenieModel<float>& m, std::span<const data::TrainingExample> examples, CvrMode mode) {
  require(!examples.empty(), "eval_cvr: no examples");
  CvrCount total;
  for (const auto& ex : examples) {
    const Encoded enc = encode_sequence(m, ex.keys, ex.dt_buckets);
    const CvrCount c = count_contour_violations(ex.keys, enc.buttons, mode);
    total.violations += c.violations;
    total.transitions += c.transitions;
  }
  return total.ratio();
}

std::vector<int> GoldMelody::dt_buckets() const {
  std::vector<double> onsets(keys.size(), 0.0);
  const double seconds_per_beat = 60.0 / tempo_bpm;
  for (std::size_t t = 1; t < keys.size(); ++t)
    onsets[t] = onsets[t - 1] + (beats.empty() ? 1.0 : beats[t - 1]) * seconds_per_beat;
  return data::dt_buckets_for(onsets);
}

std::vector<GoldMelody> parse_gold_melodies(const std::string& json_text) {
  std::vector<GoldMelody> out;
  try {
    for (const auto& item : nlohmann::json::parse(json_text)) {
      GoldMelody g;
      g.name = item.at("name").get<std::string>();
      g.keys = item.at("keys").get<std::vector<int>>();
      g.gold_buttons = item.at("gold_buttons").get<std::vector<int>>();
      g.tempo_bpm = item.value("tempo_bpm", 100.0);
      g.beats = item.value("beats", std::vector<double>{});
      if (g.keys.size() != g.gold_buttons.size()) throw ParseError("gold melody '" + g.name + "': length mismatch");
      if (!g.beats.empty() && g.beats.size() != g.keys.size())
        throw ParseError("gold melody '" + g.name + "': beats length mismatch");
      if (!(g.tempo_bpm > 0)) throw ParseError("gold melody '" + g.name + "': tempo must be positive");
      for (int k : g.keys)
        if (k < 0 || k >= data::kPianoKeys) throw ParseError("gold melody '" + g.name + "': key out of range");
      for (int b : g.gold_buttons)
        if (b < 0 || b >= 8) throw ParseError("gold melody '" + g.name + "': button out of range");
      out.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("gold melodies: ") + e.what());
  }
  return out;
}

std::vector<GoldMelody> load_gold_melodies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_gold_melodies(buf.str());
}

void GoldAccumulator::add(std::span<const double> predicted, std::span<const int> gold) {
  require(predicted.size() == gold.size(), "gold: length mismatch");
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double d = predicted[i] - gold[i];
    squared_error += d * d;
  }
  notes += gold.size();
}

std::optional<double> GoldAccumulator::mse() const {
  if (notes == 0) return std::nullopt;
  return squared_error / static_cast<double>(notes);
}

std::optional<double> eval_gold(GenieModel<float>& m, std::span<const GoldMelody> melodies, bool raw,
                                std::ostream* warnings) {
  const auto& config = m.config();
  require(config.has_encoder(), "eval_gold: the language-model baseline has no encoder");
  GoldAccumulator acc;
  for (const auto& melody : melodies) {
    if (melody.keys.size() < 2) {
      if (warnings) *warnings << "warning: gold melody '" << melody.name << "' has fewer than 2 notes, skipped\n";
      continue;
    }
    const Encoded enc = encode_sequence(m, melody.keys, melody.dt_buckets());
    std::vector<double> predicted;
    if (raw && !enc.raw.empty()) {
      for (double v : enc.raw) predicted.push_back((v + 1.0) * (config.k_buttons - 1) / 2.0);
    } else {
      predicted.assign(enc.buttons.begin(), enc.buttons.end());
    }
    acc.add(predicted, melody.gold_buttons);
  }
  return acc.mse();
}

}  // namespace genie::train
