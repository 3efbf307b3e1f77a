#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "genie/data/sequence.hpp"

namespace genie::data {

// Stand-in corpus for tests and smoke runs: monophonic major-scale lines that
// zigzag between rising and falling runs of 2 to 4 scale steps, never
// repeating a key, with onsets on an eighth-of-a-second grid.
struct SyntheticOptions {
  int low_key = 27;   // C3
  int high_key = 63;  // C6
  int tonic = 3;      // key index of the lowest C
  std::vector<double> step_choices = {0.125, 0.25, 0.375, 0.5};
};

NoteSequence synth_melody(std::size_t length, std::mt19937_64& rng, std::string source_id,
                          const SyntheticOptions& options = {});

// `count` melodies with ids "synth_0000" onwards; one RNG stream per seed.
std::vector<NoteSequence> synth_corpus(std::size_t count, std::size_t length, std::uint64_t seed,
                                       const SyntheticOptions& options = {});

}  // namespace genie::data
