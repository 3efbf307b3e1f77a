#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "genie/data/midi.hpp"
#include "genie/data/shard.hpp"
#include "genie/data/synthetic.hpp"
#include "genie/engine/session.hpp"
#include "genie/error.hpp"
#include "genie/model/checkpoint.hpp"
#include "genie/service/server.hpp"
#include "genie/train/report.hpp"
#include "genie/train/trainer.hpp"

using namespace genie;
namespace fs = std::filesystem;

namespace {

void print_summary(const data::IngestSummary& s) {
  std::printf("files found %zu, failed %zu\n", s.files_found, s.files_failed);
  auto row = [](const char* name, const data::SplitStats& st) {
    std::printf("%-10s sequences %6zu  skipped (short) %4zu  windows %7zu\n", name, st.sequences, st.skipped_short,
                st.examples);
  };
  row("train", s.train);
  row("validation", s.validation);
  row("test", s.test);
}

data::Shard read_split(const fs::path& dir, const std::string& split) { return data::read_shard(dir / (split + ".pgsd")); }

int cmd_stats(const fs::path& dir) {
  for (const char* split : {"train", "validation", "test"}) {
    const fs::path path = dir / (std::string(split) + ".pgsd");
    if (!fs::exists(path)) {
      std::printf("%-10s missing\n", split);
      continue;
    }
    const auto st = data::shard_stats(data::read_shard(path));
    std::printf("%-10s windows %7zu  n %4u  keys %d..%d\n", split, st.examples, st.window, st.min_key, st.max_key);
    std::printf("  dt buckets:");
    for (std::size_t b = 0; b < st.dt_histogram.size(); ++b)
      if (st.dt_histogram[b]) std::printf(" %zu:%zu", b, st.dt_histogram[b]);
    std::printf("\n");
  }
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir) {
  const auto config = train::load_train_config(config_path);
  const auto train_shard = read_split(data_dir, "train");
  const auto val_shard = read_split(data_dir, "validation");
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train.log.jsonl", std::ios::app);
  train::TrainHooks hooks;
  hooks.log = &log;
  hooks.checkpoint_path = out_dir / "best.ckpt";
  hooks.on_eval = [](std::size_t step, double recons) {
    std::fprintf(stderr, "step %zu  val recons %.4f  ppl %.3f\n", step, recons, std::exp(recons));
    return true;
  };
  const auto result = train::train(config, train_shard, val_shard, hooks);
  std::printf("best step %zu, validation PPL %.3f%s\nwrote %s\n", result.best_step, std::exp(result.best_val_recons),
              result.early_stopped ? " (early stop)" : "", (out_dir / "best.ckpt").c_str());
  return 0;
}

int cmd_eval(const std::vector<std::string>& ckpts, const fs::path& data_dir, const std::string& split,
             const std::optional<fs::path>& gold_path, const std::string& cvr_mode, bool gold_raw, bool jsonl) {
  const auto shard = read_split(data_dir, split);
  std::vector<train::GoldMelody> gold;
  if (gold_path) gold = train::load_gold_melodies(*gold_path);
  train::EvalOptions opts;
  opts.cvr_mode = cvr_mode == "strict" ? train::CvrMode::strict_opposite : train::CvrMode::sign_mismatch;
  opts.gold_raw = gold_raw;
  std::vector<train::EvalReport> reports;
  for (const auto& path : ckpts) {
    auto loaded = model::load_checkpoint(path);
    auto report = train::evaluate_model(loaded.model, fs::path(path).stem().string(), shard.examples, gold, opts,
                                        &std::cerr);
    if (loaded.metadata.contains("step")) report.step = loaded.metadata["step"].get<std::size_t>();
    reports.push_back(std::move(report));
  }
  std::cout << (jsonl ? train::render_jsonl(reports) : train::render_table(reports));
  return 0;
}

int cmd_serve(const fs::path& ckpt, const std::string& bind, double temperature, const std::optional<fs::path>& static_dir,
              int threads) {
  auto loaded = model::load_checkpoint(ckpt);
  auto runtime = std::make_shared<const engine::DecoderRuntime>(loaded.model);
  service::ServiceOptions sopts;
  sopts.default_temperature = temperature;
  service::Service svc(runtime, ckpt.filename().string(), sopts);

  service::ServerOptions opts;
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ParseError("--bind expects host:port");
  opts.address = bind.substr(0, colon);
  opts.port = static_cast<unsigned short>(std::stoi(bind.substr(colon + 1)));
  opts.static_dir = static_dir;
  opts.threads = threads;
  opts.handle_signals = true;
  service::Server server(svc, opts);
  std::fprintf(stderr, "serving %s on %s:%u (ws on any path, GET /healthz)\n", ckpt.c_str(), opts.address.c_str(),
               server.port());
  server.run();
  std::fprintf(stderr, "shut down\n");
  return 0;
}

// Terminal demo: each input line is "p <button>", "r <button>", "l" or "x"
// (reset), optionally followed by a time in seconds.
int cmd_play(const fs::path& ckpt, double temperature, std::uint64_t seed) {
  auto loaded = model::load_checkpoint(ckpt);
  engine::DecoderSession s(std::make_shared<const engine::DecoderRuntime>(loaded.model), temperature, seed);
  s.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << '\n'; };
  std::string line;
  double clock = 0;
  while (std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::string op;
    int button = 0;
    if (!(in >> op)) continue;
    if (op == "p" || op == "r") in >> button;
    double t;
    clock = (in >> t) ? t : clock + 0.25;
    try {
      std::vector<engine::NoteEvent> events;
      if (op == "p") {
        events = s.press(button, clock);
      } else if (op == "r") {
        if (auto e = s.release(button, clock)) events.push_back(*e);
      } else if (op == "x") {
        events = s.reset(clock);
      } else if (op == "l") {
        const auto rows = s.lookahead();
        for (std::size_t b = 0; b < rows.size(); ++b) {
          const auto best = std::max_element(rows[b].begin(), rows[b].end()) - rows[b].begin();
          std::printf("button %zu: most likely key %td (p=%.3f)\n", b, best, rows[b][best]);
        }
      }
      for (const auto& e : events) std::printf("%s\n", engine::to_string(e).c_str());
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
    }
  }
  for (const auto& e : s.release_all(clock)) std::printf("%s\n", engine::to_string(e).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eight-button piano improvisation: data, training, evaluation and serving"};
  app.require_subcommand(1);

  auto* data_cmd = app.add_subcommand("data", "Corpus preparation")->require_subcommand(1);

  std::string midi_dir, out_dir;
  data::IngestOptions ingest;
  auto* ingest_cmd = data_cmd->add_subcommand("ingest", "Parse MIDI files into train/validation/test shards");
  ingest_cmd->add_option("--midi-dir", midi_dir, "Directory searched recursively for .mid/.midi")->required();
  ingest_cmd->add_option("--out", out_dir, "Output shard directory")->required();
  ingest_cmd->add_option("--window", ingest.window, "Window length n")->capture_default_str();
  ingest_cmd->add_option("--seed", ingest.seed, "Split and sampling seed")->capture_default_str();

  std::string stats_dir;
  auto* stats_cmd = data_cmd->add_subcommand("stats", "Summarise a shard directory");
  stats_cmd->add_option("--data", stats_dir, "Shard directory")->required();

  std::size_t synth_count = 200, synth_length = 256;
  std::string synth_midi;
  data::IngestOptions synth_ingest;
  auto* synth_cmd = data_cmd->add_subcommand("synth", "Generate a synthetic scale-fragment corpus as shards");
  synth_cmd->add_option("--out", out_dir, "Output shard directory")->required();
  synth_cmd->add_option("--count", synth_count, "Number of melodies")->capture_default_str();
  synth_cmd->add_option("--length", synth_length, "Notes per melody")->capture_default_str();
  synth_cmd->add_option("--window", synth_ingest.window, "Window length n")->capture_default_str();
  synth_cmd->add_option("--seed", synth_ingest.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--midi-out", synth_midi, "Also write each melody as a .mid file here");

  std::string config_path, data_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a model; keeps the best checkpoint by validation loss");
  train_cmd->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_dir, "Shard directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out_dir, "Checkpoint directory")->required();

  std::vector<std::string> ckpts;
  std::string split = "test", cvr_mode = "literal";
  std::optional<std::string> gold;
  bool gold_raw = false, jsonl = false;
  auto* eval_cmd = app.add_subcommand("eval", "PPL, CVR and Gold MSE for one or more checkpoints");
  eval_cmd->add_option("--ckpt", ckpts, "Checkpoint file(s)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_dir, "Shard directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();
  eval_cmd->add_option("--gold", gold, "Gold melody fixture file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--cvr-mode", cvr_mode, "literal: any sign disagreement; strict: opposite signs only")
      ->check(CLI::IsMember({"literal", "strict"}))
      ->capture_default_str();
  eval_cmd->add_flag("--gold-raw", gold_raw, "Score raw encoder output instead of quantized buttons");
  eval_cmd->add_flag("--jsonl", jsonl, "One JSON record per checkpoint instead of a table");

  std::string ckpt, bind = "127.0.0.1:8080";
  double temperature = engine::DecoderSession::kDefaultTemperature;
  std::optional<std::string> static_dir;
  int threads = 1;
  auto* serve_cmd = app.add_subcommand("serve", "WebSocket performance service");
  serve_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();
  serve_cmd->add_option("--temperature", temperature, "Default sampling temperature")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  serve_cmd->add_option("--static-dir", static_dir, "UI assets to serve over HTTP")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--threads", threads, "I/O threads")->check(CLI::PositiveNumber)->capture_default_str();

  std::uint64_t seed = 0;
  auto* play_cmd = app.add_subcommand("play", "Drive a decoder session from stdin (p <b>, r <b>, l, x)");
  play_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  play_cmd->add_option("--temperature", temperature, "Sampling temperature")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  play_cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest_cmd->parsed()) {
      print_summary(data::ingest_directory(midi_dir, out_dir, ingest));
      return 0;
    }
    if (stats_cmd->parsed()) return cmd_stats(stats_dir);
    if (synth_cmd->parsed()) {
      const auto corpus = data::synth_corpus(synth_count, synth_length, synth_ingest.seed);
      if (!synth_midi.empty()) {
        fs::create_directories(synth_midi);
        for (const auto& seq : corpus) {
          const auto bytes = data::write_midi(seq);
          std::ofstream(fs::path(synth_midi) / (seq.source_id + ".mid"), std::ios::binary)
              .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        }
      }
      print_summary(data::ingest_sequences(corpus, out_dir, synth_ingest));
      return 0;
    }
    if (train_cmd->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (eval_cmd->parsed()) {
      std::optional<fs::path> gold_path;
      if (gold) gold_path = *gold;
      return cmd_eval(ckpts, data_dir, split, gold_path, cvr_mode, gold_raw, jsonl);
    }
    if (serve_cmd->parsed()) {
      std::optional<fs::path> sd;
      if (static_dir) sd = *static_dir;
      return cmd_serve(ckpt, bind, temperature, sd, threads);
    }
    if (play_cmd->parsed()) return cmd_play(ckpt, temperature, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
