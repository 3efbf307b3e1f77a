#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace genie::data {

inline constexpr int kPianoKeys = 88;
inline constexpr int kLowestMidiPitch = 21;  // A0
inline constexpr int kDtBuckets = 32;
// Bucket assigned to the first note of a window or live session.
inline constexpr int kFirstNoteDtBucket = kDtBuckets - 1;
inline constexpr int kMinTranspose = -6;  // inclusive
inline constexpr int kMaxTranspose = 6;   // exclusive

struct Note {
  int key = 0;  // piano key index, 0 = A0
  double onset_seconds = 0;

  friend bool operator==(const Note&, const Note&) = default;
};

// Monophonic event stream ordered by (onset, key).
struct NoteSequence {
  std::vector<Note> events;
  std::string source_id;
};

struct TrainingExample {
  std::vector<int> keys;        // [0, 88)
  std::vector<int> dt_buckets;  // [0, 32)
  int transpose_applied = 0;

  std::size_t size() const { return keys.size(); }
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Sorts by onset, chord notes in ascending key order. Stable and idempotent.
std::vector<Note> flatten_order(std::vector<Note> events);

// min(floor(32·Δt), 31); negative Δt is a contract violation.
int dt_bucket(double delta_seconds);

// ΔT buckets for consecutive onsets; the first entry is kFirstNoteDtBucket.
std::vector<int> dt_buckets_for(std::span<const double> onsets);

// Deterministic 8:1:1 split at sequence granularity. Validation and test each
// get floor(N/10) ids, but at least one each once N ≥ 3; training gets the
// rest. Throws ContractViolation on an empty corpus.
CorpusSplit split_corpus(const std::vector<std::string>& ids, std::uint64_t seed);

// Window [start, start + n) of `seq` shifted by `transpose` semitones.
TrainingExample make_example(const NoteSequence& seq, std::size_t start, std::size_t n, int transpose);

// Shifts s ∈ [−6, 6) that keep every key of the window inside [0, 88).
std::vector<int> valid_transpositions(std::span<const int> keys);

// Random contiguous window of n events with a random valid transposition.
TrainingExample sample_window(const NoteSequence& seq, std::size_t n, std::mt19937_64& rng);

// One "key onset" line per event, onsets with microsecond precision.
std::string to_debug_text(const NoteSequence& seq);
NoteSequence parse_debug_text(const std::string& text, std::string source_id = {});

}  // namespace genie::data
