#include "genie/data/shard.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "genie/data/midi.hpp"
#include "genie/error.hpp"

namespace genie::data {
namespace fs = std::filesystem;

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

}  // namespace

void write_shard(const fs::path& path, std::uint32_t window, const std::vector<TrainingExample>& examples) {
  require(window > 0, "write_shard: window must be positive");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("PGSD", 4);
  put_u32(out, kShardVersion);
  put_u32(out, window);
  put_u32(out, static_cast<std::uint32_t>(examples.size()));
  std::vector<char> record(2 * window);
  for (const TrainingExample& ex : examples) {
    require(ex.keys.size() == window && ex.dt_buckets.size() == window, "write_shard: example length mismatch");
    for (std::uint32_t i = 0; i < window; ++i) {
      require(ex.keys[i] >= 0 && ex.keys[i] < kPianoKeys, "write_shard: key out of range");
      require(ex.dt_buckets[i] >= 0 && ex.dt_buckets[i] < kDtBuckets, "write_shard: dt bucket out of range");
      record[i] = static_cast<char>(ex.keys[i]);
      record[window + i] = static_cast<char>(ex.dt_buckets[i]);
    }
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Shard read_shard(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open shard " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "shard " + path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "PGSD", 4) != 0) throw ParseError(where + ": bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kShardVersion) throw ParseError(where + ": unsupported version " + std::to_string(version));
  Shard shard;
  shard.window = get_u32(bytes.data() + 8);
  const std::uint32_t count = get_u32(bytes.data() + 12);
  if (shard.window == 0) throw ParseError(where + ": zero window length");
  const std::uint64_t expected = 16 + std::uint64_t{count} * 2 * shard.window;
  if (bytes.size() != expected)
    throw ParseError(where + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  shard.examples.resize(count);
  const std::uint8_t* p = bytes.data() + 16;
  for (auto& ex : shard.examples) {
    ex.keys.assign(p, p + shard.window);
    ex.dt_buckets.assign(p + shard.window, p + 2 * shard.window);
    p += 2 * shard.window;
    for (std::uint32_t i = 0; i < shard.window; ++i)
      if (ex.keys[i] >= kPianoKeys || ex.dt_buckets[i] >= kDtBuckets)
        throw ParseError(where + ": value out of range");
  }
  return shard;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : entries) out << e.split << '\t' << e.path << '\n';
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("manifest line " + std::to_string(line_no) + ": missing tab");
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1)};
    if (e.split != "train" && e.split != "validation" && e.split != "test")
      throw ParseError("manifest line " + std::to_string(line_no) + ": unknown split '" + e.split + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

IngestSummary ingest_sequences(const std::vector<NoteSequence>& sequences, const fs::path& out_dir,
                               const IngestOptions& options) {
  require(options.window > 0, "ingest: window must be positive");
  std::vector<std::string> ids;
  std::map<std::string, const NoteSequence*> by_id;
  for (const auto& seq : sequences) {
    require(by_id.emplace(seq.source_id, &seq).second, "ingest: duplicate source id " + seq.source_id);
    ids.push_back(seq.source_id);
  }
  std::sort(ids.begin(), ids.end());
  const CorpusSplit split = split_corpus(ids, options.seed);
  fs::create_directories(out_dir);

  IngestSummary summary;
  summary.files_found = sequences.size();
  std::vector<ManifestEntry> manifest;
  std::mt19937_64 rng(options.seed ^ 0x5eed5eedULL);
  const std::size_t n = options.window;

  auto emit = [&](const std::vector<std::string>& split_ids, const std::string& name, SplitStats& stats) {
    std::vector<TrainingExample> examples;
    for (const auto& id : split_ids) {
      manifest.push_back({name, id});
      const NoteSequence& seq = *by_id.at(id);
      ++stats.sequences;
      if (seq.events.size() < n) {
        ++stats.skipped_short;
        continue;
      }
      if (name == "train") {
        const std::size_t draws = options.train_windows_per_length * std::max<std::size_t>(1, seq.events.size() / n);
        for (std::size_t k = 0; k < draws; ++k) examples.push_back(sample_window(seq, n, rng));
      } else {
        for (std::size_t start = 0; start + n <= seq.events.size(); start += n)
          examples.push_back(make_example(seq, start, n, 0));
      }
    }
    stats.examples = examples.size();
    write_shard(out_dir / (name + ".pgsd"), options.window, examples);
  };
  emit(split.train, "train", summary.train);
  emit(split.validation, "validation", summary.validation);
  emit(split.test, "test", summary.test);
  write_manifest(out_dir / "manifest.txt", manifest);
  return summary;
}

IngestSummary ingest_directory(const fs::path& input_dir, const fs::path& out_dir, const IngestOptions& options) {
  if (!fs::is_directory(input_dir)) throw std::runtime_error("not a directory: " + input_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(input_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<NoteSequence> sequences;
  std::size_t failed = 0;
  for (const auto& file : files) {
    try {
      NoteSequence seq = read_midi_file(file.string());
      seq.source_id = fs::relative(file, input_dir).generic_string();
      sequences.push_back(std::move(seq));
    } catch (const ParseError& e) {
      std::cerr << "warning: skipping " << e.what() << '\n';
      ++failed;
    }
  }
  if (sequences.empty()) throw std::runtime_error("no readable MIDI files under " + input_dir.string());
  IngestSummary summary = ingest_sequences(sequences, out_dir, options);
  summary.files_found = files.size();
  summary.files_failed = failed;
  return summary;
}

ShardStats shard_stats(const Shard& shard) {
  ShardStats s;
  s.examples = shard.examples.size();
  s.window = shard.window;
  s.key_histogram.assign(kPianoKeys, 0);
  s.dt_histogram.assign(kDtBuckets, 0);
  for (const auto& ex : shard.examples) {
    for (int k : ex.keys) {
      ++s.key_histogram[k];
      s.min_key = s.min_key < 0 ? k : std::min(s.min_key, k);
      s.max_key = std::max(s.max_key, k);
    }
    for (int d : ex.dt_buckets) ++s.dt_histogram[d];
  }
  return s;
}

}  // namespace genie::data
