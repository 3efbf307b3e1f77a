#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "genie/data/midi.hpp"
#include "genie/data/sequence.hpp"
#include "genie/data/shard.hpp"
#include "genie/data/synthetic.hpp"
#include "genie/error.hpp"

using namespace genie;
using namespace genie::data;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<std::uint8_t>;

Bytes header(std::uint16_t format, std::uint16_t tracks, std::uint16_t division) {
  return {'M', 'T', 'h', 'd', 0, 0, 0, 6, static_cast<std::uint8_t>(format >> 8), static_cast<std::uint8_t>(format),
          static_cast<std::uint8_t>(tracks >> 8), static_cast<std::uint8_t>(tracks),
          static_cast<std::uint8_t>(division >> 8), static_cast<std::uint8_t>(division)};
}

Bytes track(const Bytes& body) {
  Bytes out = {'M', 'T', 'r', 'k'};
  const auto n = static_cast<std::uint32_t>(body.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(n >> s));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Bytes cat(std::initializer_list<Bytes> parts) {
  Bytes out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("genie_data_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// ---- parse_midi ----

TEST(ParseMidi, SingleNoteAtDefaultTempo) {
  const Bytes file = cat({header(0, 1, 480), track({0x00, 0x90, 60, 100, 0x00, 0xFF, 0x2F, 0x00})});
  const NoteSequence seq = parse_midi(file, "one");
  ASSERT_EQ(seq.events.size(), 1u);
  EXPECT_EQ(seq.events[0], (Note{39, 0.0}));
  EXPECT_EQ(seq.source_id, "one");
}

TEST(ParseMidi, DefaultTempoIs120Bpm) {
  // One quarter note (480 ticks) later = 0.5 s.
  const Bytes file = cat({header(0, 1, 480), track({0x00, 0x90, 60, 100, 0x83, 0x60, 0x90, 62, 100})});
  const NoteSequence seq = parse_midi(file);
  ASSERT_EQ(seq.events.size(), 2u);
  EXPECT_DOUBLE_EQ(seq.events[1].onset_seconds, 0.5);
}

TEST(ParseMidi, TempoChangeFollowsHandComputedTable) {
  // 480 ticks/quarter. 120 BPM until tick 960, then 60 BPM.
  // tick:    0    480  960  1440  1920
  // seconds: 0.0  0.5  1.0  2.0   3.0
  const Bytes conductor = track({0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,         // 500000 µs at 0
                                 0x87, 0x40, 0xFF, 0x51, 0x03, 0x0F, 0x42, 0x40,   // 1000000 µs at 960
                                 0x00, 0xFF, 0x2F, 0x00});
  const Bytes notes = track({0x00, 0x90, 60, 90,         // tick 0
                             0x83, 0x60, 62, 90,         // tick 480, running status
                             0x83, 0x60, 64, 90,         // tick 960
                             0x83, 0x60, 65, 90,         // tick 1440
                             0x83, 0x60, 67, 90,         // tick 1920
                             0x00, 0xFF, 0x2F, 0x00});
  const NoteSequence seq = parse_midi(cat({header(1, 2, 480), conductor, notes}));
  const std::vector<double> expected = {0.0, 0.5, 1.0, 2.0, 3.0};
  ASSERT_EQ(seq.events.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(seq.events[i].onset_seconds, expected[i], 1e-12) << i;
  EXPECT_EQ(seq.events[2].key, 64 - 21);
}

TEST(ParseMidi, VelocityZeroNoteOffsAndOutOfRangePitchesAreIgnored) {
  const Bytes file = cat({header(0, 1, 96), track({0x00, 0x90, 20, 64,    // below A0
                                                   0x00, 0x90, 21, 64,    // A0 -> key 0
                                                   0x00, 0x90, 108, 64,   // C8 -> key 87
                                                   0x00, 0x90, 109, 64,   // above C8
                                                   0x10, 0x90, 21, 0,     // note-off via velocity 0
                                                   0x00, 0x80, 108, 0,    // explicit note-off
                                                   0x00, 0xB0, 64, 127,   // sustain pedal
                                                   0x00, 0xC0, 5,         // program change, one data byte
                                                   0x00, 0xE0, 0, 64})});  // pitch bend
  const NoteSequence seq = parse_midi(file);
  ASSERT_EQ(seq.events.size(), 2u);
  EXPECT_EQ(seq.events[0], (Note{0, 0.0}));
  EXPECT_EQ(seq.events[1], (Note{87, 0.0}));
}

TEST(ParseMidi, UnknownMetaAndSysexAreSkipped) {
  const Bytes file = cat({header(0, 1, 480), track({0x00, 0xFF, 0x7F, 0x02, 0xAA, 0xBB,  // sequencer-specific
                                                    0x00, 0xFF, 0x03, 0x03, 'a', 'b', 'c', // track name
                                                    0x00, 0xF0, 0x03, 0x7E, 0x7F, 0xF7,    // sysex
                                                    0x00, 0x90, 72, 50}),
                          Bytes{'X', 'Y', 'Z', 'W', 0, 0, 0, 2, 1, 2}});  // unknown chunk
  const NoteSequence seq = parse_midi(file);
  ASSERT_EQ(seq.events.size(), 1u);
  EXPECT_EQ(seq.events[0].key, 51);
}

TEST(ParseMidi, SmpteDivision) {
  // -25 fps, 40 ticks per frame: 1000 ticks per second.
  const Bytes file = cat({header(0, 1, 0xE728), track({0x00, 0x90, 60, 1, 0x83, 0x74, 0x90, 61, 1})});
  const NoteSequence seq = parse_midi(file);
  ASSERT_EQ(seq.events.size(), 2u);
  EXPECT_NEAR(seq.events[1].onset_seconds, 0.5, 1e-12);
}

TEST(ParseMidi, PolyphonyIsFlattenedAcrossTracks) {
  const Bytes a = track({0x00, 0x90, 67, 1});
  const Bytes b = track({0x00, 0x90, 60, 1, 0x00, 0x90, 64, 1});
  const NoteSequence seq = parse_midi(cat({header(1, 2, 480), a, b}));
  ASSERT_EQ(seq.events.size(), 3u);
  EXPECT_EQ(seq.events[0].key, 39);
  EXPECT_EQ(seq.events[1].key, 43);
  EXPECT_EQ(seq.events[2].key, 46);
}

TEST(ParseMidi, Errors) {
  EXPECT_THROW(parse_midi(Bytes{'R', 'I', 'F', 'F', 0, 0, 0, 6}), ParseError);
  EXPECT_THROW(parse_midi(Bytes{}), ParseError);
  EXPECT_THROW(parse_midi(Bytes{'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0}), ParseError);  // truncated header
  Bytes truncated = cat({header(0, 1, 480), track({0x00, 0x90, 60, 100})});
  truncated.resize(truncated.size() - 2);
  EXPECT_THROW(parse_midi(truncated), ParseError);
  // event cut off inside a correctly sized chunk
  EXPECT_THROW(parse_midi(cat({header(0, 1, 480), track({0x00, 0x90, 60})})), ParseError);
  // data byte with no running status
  EXPECT_THROW(parse_midi(cat({header(0, 1, 480), track({0x00, 60, 100})})), ParseError);
  EXPECT_THROW(parse_midi(header(2, 1, 480)), ParseError);
}

TEST(ParseMidi, WriterRoundTripAndDebugTextIsLossless) {
  std::mt19937_64 rng(9);
  const NoteSequence original = synth_melody(200, rng, "x");
  const NoteSequence parsed = parse_midi(write_midi(original));
  ASSERT_EQ(parsed.events.size(), original.events.size());
  for (std::size_t i = 0; i < parsed.events.size(); ++i) {
    EXPECT_EQ(parsed.events[i].key, original.events[i].key);
    EXPECT_NEAR(parsed.events[i].onset_seconds, original.events[i].onset_seconds, 1e-9);
  }
  const NoteSequence reparsed = parse_debug_text(to_debug_text(parsed));
  ASSERT_EQ(reparsed.events.size(), parsed.events.size());
  for (std::size_t i = 0; i < parsed.events.size(); ++i) {
    EXPECT_EQ(reparsed.events[i].key, parsed.events[i].key);
    EXPECT_EQ(std::round(reparsed.events[i].onset_seconds * 1e6), std::round(parsed.events[i].onset_seconds * 1e6));
  }
  EXPECT_THROW(parse_debug_text("12 0.5\nnot a note\n"), ParseError);
  EXPECT_THROW(parse_debug_text("88 0.5\n"), ParseError);
}

// ---- flatten_order ----

TEST(FlattenOrder, ChordInAscendingKeyOrder) {
  const auto out = flatten_order({{46, 1.0}, {39, 1.0}, {43, 1.0}});
  EXPECT_EQ(out, (std::vector<Note>{{39, 1.0}, {43, 1.0}, {46, 1.0}}));
}

TEST(FlattenOrder, OnsetDominatesAndSortedInputUnchanged) {
  EXPECT_EQ(flatten_order({{10, 2.0}, {50, 1.0}}), (std::vector<Note>{{50, 1.0}, {10, 2.0}}));
  const std::vector<Note> mono = {{5, 0.0}, {9, 0.5}, {2, 0.75}};
  EXPECT_EQ(flatten_order(mono), mono);
}

TEST(FlattenOrder, IdempotentPermutation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Note> notes(1 + rng() % 40);
    for (auto& n : notes) n = {static_cast<int>(rng() % 88), static_cast<double>(rng() % 8) * 0.25};
    const auto once = flatten_order(notes);
    EXPECT_EQ(flatten_order(once), once);
    EXPECT_TRUE(std::is_permutation(once.begin(), once.end(), notes.begin()));
    for (std::size_t i = 1; i < once.size(); ++i)
      EXPECT_TRUE(once[i - 1].onset_seconds < once[i].onset_seconds ||
                  (once[i - 1].onset_seconds == once[i].onset_seconds && once[i - 1].key <= once[i].key));
  }
}

// ---- dt_bucket ----

TEST(DtBucket, Examples) {
  EXPECT_EQ(dt_bucket(0.0), 0);
  EXPECT_EQ(dt_bucket(0.5), 16);
  EXPECT_EQ(dt_bucket(2.0), 31);
  EXPECT_EQ(dt_bucket(1.0), 31);
  EXPECT_EQ(dt_bucket(31.0 / 32.0), 31);
  EXPECT_EQ(dt_bucket(0.03124), 0);
  EXPECT_THROW(dt_bucket(-0.001), ContractViolation);
}

// ---- split_corpus ----

namespace {
std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("seq" + std::to_string(i));
  return ids;
}
}  // namespace

TEST(SplitCorpus, TenIsEightOneOne) {
  const auto s = split_corpus(make_ids(10), 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(SplitCorpus, FourteenHundred) {
  const auto s = split_corpus(make_ids(1400), 1);
  EXPECT_EQ(s.train.size(), 1120u);
  EXPECT_EQ(s.validation.size(), 140u);
  EXPECT_EQ(s.test.size(), 140u);
}

TEST(SplitCorpus, DeterministicDisjointCovering) {
  const auto ids = make_ids(57);
  const auto a = split_corpus(ids, 42);
  const auto b = split_corpus(ids, 42);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  std::multiset<std::string> all(a.train.begin(), a.train.end());
  all.insert(a.validation.begin(), a.validation.end());
  all.insert(a.test.begin(), a.test.end());
  EXPECT_EQ(all, std::multiset<std::string>(ids.begin(), ids.end()));
  EXPECT_NE(split_corpus(ids, 43).train, a.train);
}

TEST(SplitCorpus, SmallAndEmptyCorpora) {
  EXPECT_THROW(split_corpus({}, 0), ContractViolation);
  const auto one = split_corpus(make_ids(1), 0);
  EXPECT_EQ(one.train.size(), 1u);
  const auto three = split_corpus(make_ids(3), 0);
  EXPECT_EQ(three.train.size(), 1u);
  EXPECT_EQ(three.validation.size(), 1u);
  EXPECT_EQ(three.test.size(), 1u);
}

// ---- windows ----

TEST(SampleWindow, LowKeysOnlyShiftUp) {
  EXPECT_EQ(valid_transpositions(std::vector<int>(8, 0)), (std::vector<int>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(valid_transpositions(std::vector<int>{87}), (std::vector<int>{-6, -5, -4, -3, -2, -1, 0}));
  NoteSequence low;
  for (int i = 0; i < 16; ++i) low.events.push_back({0, i * 0.1});
  std::mt19937_64 rng(0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ex = sample_window(low, 8, rng);
    EXPECT_GE(ex.transpose_applied, 0);
    EXPECT_LT(ex.transpose_applied, 6);
    for (int k : ex.keys) EXPECT_EQ(k, ex.transpose_applied);
  }
}

TEST(SampleWindow, ZeroShiftKeepsKeys) {
  NoteSequence seq{{{10, 0.0}, {20, 0.1}, {30, 0.8}}, "s"};
  const auto ex = make_example(seq, 0, 3, 0);
  EXPECT_EQ(ex.keys, (std::vector<int>{10, 20, 30}));
  EXPECT_EQ(ex.transpose_applied, 0);
}

TEST(SampleWindow, BucketArithmetic) {
  NoteSequence seq{{{10, 0.0}, {20, 0.1}, {30, 0.8}}, "s"};
  const auto ex = make_example(seq, 0, 3, 0);
  EXPECT_EQ(ex.dt_buckets, (std::vector<int>{kFirstNoteDtBucket, 3, 22}));
  // first note of a later window also gets the sentinel
  EXPECT_EQ(make_example(seq, 1, 2, 0).dt_buckets, (std::vector<int>{31, 22}));
}

TEST(SampleWindow, ShortSequenceRejected) {
  NoteSequence seq{{{10, 0.0}, {20, 0.1}}, "short"};
  std::mt19937_64 rng(0);
  EXPECT_THROW(sample_window(seq, 3, rng), ContractViolation);
  EXPECT_THROW(make_example(seq, 0, 3, 0), ContractViolation);
  EXPECT_THROW(make_example(seq, 0, 2, -11), ContractViolation);
}

TEST(SampleWindow, TranspositionPropertyOverRandomWindows) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    NoteSequence seq;
    double t = 0;
    for (int i = 0; i < 300; ++i) {
      t += static_cast<double>(rng() % 2000) / 1000.0;
      seq.events.push_back({static_cast<int>(rng() % 88), t});
    }
    for (int trial = 0; trial < 50; ++trial) {
      const auto ex = sample_window(seq, 32, rng);
      ASSERT_EQ(ex.keys.size(), 32u);
      ASSERT_EQ(ex.dt_buckets.size(), 32u);
      EXPECT_EQ(ex.dt_buckets[0], kFirstNoteDtBucket);
      EXPECT_GE(ex.transpose_applied, kMinTranspose);
      EXPECT_LT(ex.transpose_applied, kMaxTranspose);
      for (int k : ex.keys) EXPECT_TRUE(k >= 0 && k < kPianoKeys);
      for (int d : ex.dt_buckets) EXPECT_TRUE(d >= 0 && d < kDtBuckets);
    }
  }
}

TEST(SampleWindow, ShiftDistributionCoversValidSet) {
  NoteSequence seq;
  for (int i = 0; i < 10; ++i) seq.events.push_back({40, i * 0.25});
  std::mt19937_64 rng(5);
  std::vector<int> counts(12, 0);
  for (int trial = 0; trial < 12000; ++trial) ++counts[sample_window(seq, 10, rng).transpose_applied + 6];
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
}

// ---- shards, manifest, ingest ----

TEST(Shard, RoundTrip) {
  TempDir dir;
  std::vector<TrainingExample> examples;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    TrainingExample ex;
    for (int j = 0; j < 16; ++j) {
      ex.keys.push_back(static_cast<int>(rng() % 88));
      ex.dt_buckets.push_back(static_cast<int>(rng() % 32));
    }
    examples.push_back(ex);
  }
  const auto path = dir.path / "x.pgsd";
  write_shard(path, 16, examples);
  EXPECT_EQ(fs::file_size(path), 16u + 5u * 32u);
  const Shard back = read_shard(path);
  EXPECT_EQ(back.window, 16u);
  ASSERT_EQ(back.examples.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(back.examples[i].keys, examples[i].keys);
    EXPECT_EQ(back.examples[i].dt_buckets, examples[i].dt_buckets);
  }
}

TEST(Shard, LayoutIsLittleEndian) {
  TempDir dir;
  TrainingExample ex{{1, 2}, {31, 0}, 0};
  write_shard(dir.path / "a.pgsd", 2, {ex});
  std::ifstream in(dir.path / "a.pgsd", std::ios::binary);
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes, (Bytes{'P', 'G', 'S', 'D', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 2, 31, 0}));
}

TEST(Shard, CorruptFilesRejected) {
  TempDir dir;
  write_shard(dir.path / "ok.pgsd", 4, {TrainingExample{{1, 2, 3, 4}, {0, 1, 2, 3}, 0}});
  std::ifstream in(dir.path / "ok.pgsd", std::ios::binary);
  Bytes good((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto write = [&](const Bytes& b) {
    std::ofstream out(dir.path / "bad.pgsd", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  Bytes bad = good;
  bad[0] = 'X';
  write(bad);
  EXPECT_THROW(read_shard(dir.path / "bad.pgsd"), ParseError);
  bad = good;
  bad.pop_back();
  write(bad);
  EXPECT_THROW(read_shard(dir.path / "bad.pgsd"), ParseError);
  bad = good;
  bad[16] = 88;
  write(bad);
  EXPECT_THROW(read_shard(dir.path / "bad.pgsd"), ParseError);
  bad = good;
  bad[4] = 2;
  write(bad);
  EXPECT_THROW(read_shard(dir.path / "bad.pgsd"), ParseError);
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  const std::vector<ManifestEntry> entries = {{"train", "a/b.mid"}, {"validation", "c d.mid"}, {"test", "e.midi"}};
  write_manifest(dir.path / "manifest.txt", entries);
  EXPECT_EQ(read_manifest(dir.path / "manifest.txt"), entries);
}

TEST(Ingest, DirectoryOfMidiFiles) {
  TempDir in, out;
  const auto corpus = synth_corpus(12, 40, 7);
  for (const auto& seq : corpus) {
    const Bytes bytes = write_midi(seq);
    std::ofstream f(in.path / (seq.source_id + ".mid"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  {
    std::ofstream junk(in.path / "broken.mid", std::ios::binary);
    junk << "not midi";
  }
  IngestOptions options;
  options.window = 16;
  options.seed = 3;
  const IngestSummary summary = ingest_directory(in.path, out.path, options);
  EXPECT_EQ(summary.files_found, 13u);
  EXPECT_EQ(summary.files_failed, 1u);
  EXPECT_EQ(summary.train.sequences, 10u);
  EXPECT_EQ(summary.validation.sequences, 1u);
  EXPECT_EQ(summary.test.sequences, 1u);
  // 40 notes: 2 consecutive windows of 16 per held-out file; 4·2 random windows per train file
  EXPECT_EQ(summary.validation.examples, 2u);
  EXPECT_EQ(summary.train.examples, 80u);

  const auto manifest = read_manifest(out.path / "manifest.txt");
  EXPECT_EQ(manifest.size(), 12u);
  const Shard train = read_shard(out.path / "train.pgsd");
  EXPECT_EQ(train.window, 16u);
  EXPECT_EQ(train.examples.size(), 80u);
  const Shard val = read_shard(out.path / "validation.pgsd");
  EXPECT_EQ(val.examples[0].dt_buckets[0], kFirstNoteDtBucket);

  // same seed, same bytes
  TempDir again;
  ingest_directory(in.path, again.path, options);
  for (const char* name : {"train.pgsd", "validation.pgsd", "test.pgsd", "manifest.txt"}) {
    std::ifstream a(out.path / name, std::ios::binary), b(again.path / name, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}))
        << name;
  }
}

TEST(Ingest, ShortSequencesAreSkipped) {
  TempDir out;
  auto corpus = synth_corpus(10, 20, 1);
  corpus[0].events.resize(5);
  IngestOptions options;
  options.window = 16;
  const auto summary = ingest_sequences(corpus, out.path, options);
  EXPECT_EQ(summary.train.skipped_short + summary.validation.skipped_short + summary.test.skipped_short, 1u);
  const ShardStats stats = shard_stats(read_shard(out.path / "train.pgsd"));
  EXPECT_EQ(stats.window, 16u);
  std::size_t total = 0;
  for (auto c : stats.key_histogram) total += c;
  EXPECT_EQ(total, stats.examples * 16);
}

// ---- synthetic corpus ----

TEST(Synthetic, MelodiesStayInRangeWithoutRepeats) {
  const auto corpus = synth_corpus(20, 300, 11);
  for (const auto& seq : corpus) {
    ASSERT_EQ(seq.events.size(), 300u);
    EXPECT_EQ(flatten_order(seq.events), seq.events);
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
      EXPECT_GE(seq.events[i].key, 27);
      EXPECT_LE(seq.events[i].key, 63);
      if (i > 0) {
        EXPECT_NE(seq.events[i].key, seq.events[i - 1].key);
        EXPECT_GT(seq.events[i].onset_seconds, seq.events[i - 1].onset_seconds);
      }
    }
  }
  EXPECT_EQ(synth_corpus(3, 50, 11)[2].events, synth_corpus(3, 50, 11)[2].events);
}
