#include "genie/data/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "genie/error.hpp"
#include "genie/nn/random.hpp"

namespace genie::data {

std::vector<Note> flatten_order(std::vector<Note> events) {
  std::stable_sort(events.begin(), events.end(), [](const Note& a, const Note& b) {
    if (a.onset_seconds != b.onset_seconds) return a.onset_seconds < b.onset_seconds;
    return a.key < b.key;
  });
  return events;
}

int dt_bucket(double delta_seconds) {
  require(delta_seconds >= 0.0, "dt_bucket: negative time delta");
  const double scaled = std::floor(delta_seconds * kDtBuckets);
  return scaled >= kDtBuckets - 1 ? kDtBuckets - 1 : static_cast<int>(scaled);
}

std::vector<int> dt_buckets_for(std::span<const double> onsets) {
  std::vector<int> buckets(onsets.size());
  for (std::size_t i = 0; i < onsets.size(); ++i)
    buckets[i] = i == 0 ? kFirstNoteDtBucket : dt_bucket(std::max(0.0, onsets[i] - onsets[i - 1]));
  return buckets;
}

CorpusSplit split_corpus(const std::vector<std::string>& ids, std::uint64_t seed) {
  require(!ids.empty(), "split_corpus: empty corpus");
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[nn::uniform_index(rng, i)]);

  const std::size_t n = order.size();
  std::size_t held_out = n / 10;
  if (held_out == 0 && n >= 3) held_out = 1;
  CorpusSplit split;
  split.validation.assign(order.begin(), order.begin() + held_out);
  split.test.assign(order.begin() + held_out, order.begin() + 2 * held_out);
  split.train.assign(order.begin() + 2 * held_out, order.end());
  return split;
}

TrainingExample make_example(const NoteSequence& seq, std::size_t start, std::size_t n, int transpose) {
  require(n > 0 && start + n <= seq.events.size(), "make_example: window out of range");
  TrainingExample ex;
  ex.transpose_applied = transpose;
  std::vector<double> onsets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Note& note = seq.events[start + i];
    const int key = note.key + transpose;
    require(key >= 0 && key < kPianoKeys, "make_example: transposition leaves the keyboard");
    ex.keys.push_back(key);
    onsets[i] = note.onset_seconds;
  }
  ex.dt_buckets = dt_buckets_for(onsets);
  return ex;
}

std::vector<int> valid_transpositions(std::span<const int> keys) {
  const auto [lo, hi] = std::minmax_element(keys.begin(), keys.end());
  std::vector<int> shifts;
  for (int s = kMinTranspose; s < kMaxTranspose; ++s)
    if (keys.empty() || (*lo + s >= 0 && *hi + s < kPianoKeys)) shifts.push_back(s);
  return shifts;
}

TrainingExample sample_window(const NoteSequence& seq, std::size_t n, std::mt19937_64& rng) {
  require(n > 0, "sample_window: window length must be positive");
  if (seq.events.size() < n)
    throw ContractViolation("sample_window: sequence '" + seq.source_id + "' has " +
                            std::to_string(seq.events.size()) + " events, window needs " +
                            std::to_string(n));
  const std::size_t start = nn::uniform_index(rng, seq.events.size() - n + 1);
  std::vector<int> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = seq.events[start + i].key;
  const auto shifts = valid_transpositions(keys);
  const int shift = shifts[nn::uniform_index(rng, shifts.size())];
  return make_example(seq, start, n, shift);
}

std::string to_debug_text(const NoteSequence& seq) {
  std::string out;
  char line[64];
  for (const Note& note : seq.events) {
    std::snprintf(line, sizeof line, "%d %.6f\n", note.key, note.onset_seconds);
    out += line;
  }
  return out;
}

NoteSequence parse_debug_text(const std::string& text, std::string source_id) {
  NoteSequence seq;
  seq.source_id = std::move(source_id);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Note note;
    if (!(fields >> note.key >> note.onset_seconds) || note.key < 0 || note.key >= kPianoKeys ||
        note.onset_seconds < 0)
      throw ParseError("debug text line " + std::to_string(line_no) + ": expected '<key> <onset>'");
    seq.events.push_back(note);
  }
  return seq;
}

}  // namespace genie::data
