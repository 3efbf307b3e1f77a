#include "genie/data/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "genie/error.hpp"
#include "genie/nn/random.hpp"

namespace genie::data {

NoteSequence synth_melody(std::size_t length, std::mt19937_64& rng, std::string source_id,
                          const SyntheticOptions& options) {
  static constexpr int kMajor[] = {0, 2, 4, 5, 7, 9, 11};
  std::vector<int> scale;
  for (int k = options.low_key; k <= options.high_key; ++k) {
    const int pc = ((k - options.tonic) % 12 + 12) % 12;
    for (int s : kMajor)
      if (s == pc) scale.push_back(k);
  }
  require(scale.size() >= 6, "synth_melody: key range too narrow");
  require(!options.step_choices.empty(), "synth_melody: no onset steps");

  NoteSequence seq;
  seq.source_id = std::move(source_id);
  auto degree = static_cast<int>(nn::uniform_index(rng, scale.size()));
  int direction = nn::uniform_index(rng, 2) ? 1 : -1;
  std::size_t left_in_run = 0;
  double t = 0;
  const int top = static_cast<int>(scale.size()) - 1;
  for (std::size_t i = 0; i < length; ++i) {
    if (i > 0) {
      if (left_in_run == 0) {
        direction = -direction;
        left_in_run = 2 + nn::uniform_index(rng, 3);
      }
      int step = 1 + static_cast<int>(nn::uniform_index(rng, 2));
      if (degree + direction * step < 0 || degree + direction * step > top) {
        direction = -direction;
        left_in_run = 2 + nn::uniform_index(rng, 3);
      }
      degree = std::clamp(degree + direction * step, 0, top);
      --left_in_run;
      t += options.step_choices[nn::uniform_index(rng, options.step_choices.size())];
    }
    seq.events.push_back({scale[degree], t});
  }
  return seq;
}

std::vector<NoteSequence> synth_corpus(std::size_t count, std::size_t length, std::uint64_t seed,
                                       const SyntheticOptions& options) {
  std::vector<NoteSequence> corpus;
  std::mt19937_64 rng(seed);
  char id[32];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(id, sizeof id, "synth_%04zu", i);
    corpus.push_back(synth_melody(length, rng, id, options));
  }
  return corpus;
}

}  // namespace genie::data
