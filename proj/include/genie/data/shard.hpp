#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genie/data/sequence.hpp"

namespace genie::data {

// Flat little-endian shard: "PGSD", version u32, n u32, count u32, then count
// records of n key bytes followed by n ΔT-bucket bytes.
inline constexpr std::uint32_t kShardVersion = 1;

struct Shard {
  std::uint32_t window = 0;
  std::vector<TrainingExample> examples;
};

void write_shard(const std::filesystem::path& path, std::uint32_t window, const std::vector<TrainingExample>& examples);
Shard read_shard(const std::filesystem::path& path);

struct ManifestEntry {
  std::string split;  // "train", "validation" or "test"
  std::string path;   // relative to the ingested directory

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// One "<split>\t<path>" line per source file.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct IngestOptions {
  std::uint32_t window = 128;
  std::uint64_t seed = 0;
  // Random training windows drawn per sequence, per window length of material.
  std::uint32_t train_windows_per_length = 4;
};

struct SplitStats {
  std::size_t sequences = 0;
  std::size_t skipped_short = 0;
  std::size_t examples = 0;
};

struct IngestSummary {
  std::size_t files_found = 0;
  std::size_t files_failed = 0;
  SplitStats train, validation, test;
};

// Parses every .mid/.midi file under `input_dir`, splits at file granularity
// and writes train/validation/test.pgsd plus manifest.txt into `out_dir`.
// Training windows are randomly placed and transposed; held-out windows are
// consecutive, non-overlapping and untransposed.
IngestSummary ingest_directory(const std::filesystem::path& input_dir, const std::filesystem::path& out_dir,
                               const IngestOptions& options);

// Same pipeline over in-memory sequences.
IngestSummary ingest_sequences(const std::vector<NoteSequence>& sequences, const std::filesystem::path& out_dir,
                               const IngestOptions& options);

struct ShardStats {
  std::size_t examples = 0;
  std::uint32_t window = 0;
  std::vector<std::size_t> key_histogram;  // 88 bins
  std::vector<std::size_t> dt_histogram;   // 32 bins
  int min_key = -1;
  int max_key = -1;
};

ShardStats shard_stats(const Shard& shard);

}  // namespace genie::data
