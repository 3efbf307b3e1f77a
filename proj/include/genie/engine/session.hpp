#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "genie/model/genie_model.hpp"

namespace genie::engine {

// Read-only decoder weights laid out for single-step evaluation. One runtime
// can back any number of sessions on any threads.
class DecoderRuntime {
 public:
  explicit DecoderRuntime(const model::GenieModel<float>& m);

  const model::ModelConfig& config() const { return config_; }
  std::size_t hidden() const { return config_.hidden_size; }
  std::size_t layers() const { return layers_.size(); }
  int buttons() const { return static_cast<int>(config_.k_buttons); }

  struct State {
    std::vector<std::vector<float>> h, c;  // per layer
  };
  State zero_state() const;

  // One decoder step from `state` in place; writes 88 logits.
  void step(State& state, int prev_key, int button, int dt_bucket, std::span<float> logits) const;

 private:
  struct Layer {
    std::size_t input = 0;
    std::vector<float> input_t;      // [I × 4H], transposed so one-hot inputs pick a row
    std::vector<float> recurrent_t;  // [H × 4H]
    std::vector<float> bias;         // [4H]
  };

  model::ModelConfig config_;
  std::vector<Layer> layers_;
  std::vector<float> head_t;  // [H × 88]
  std::vector<float> head_bias;
  std::vector<std::vector<float>> button_repr_;  // per button: centroid or codeword; empty for the LM
};

enum class NoteKind { on, off };

struct NoteEvent {
  NoteKind kind = NoteKind::on;
  int key = 0;
  int button = 0;
  double time = 0;  // seconds, the caller's clock

  bool operator==(const NoteEvent&) const = default;
};

std::string to_string(const NoteEvent& e);

// Softmax of logits/T in double precision. T must be positive.
std::vector<double> softmax_with_temperature(std::span<const float> logits, double temperature);

// T = 0: argmax, lowest index on ties, no random draw. Otherwise one uniform
// draw and an inverse-CDF lookup over softmax(logits/T).
int sample_key(std::span<const float> logits, double temperature, std::mt19937_64& rng);

class DecoderSession {
 public:
  static constexpr double kDefaultTemperature = 0.25;

  DecoderSession(std::shared_ptr<const DecoderRuntime> runtime, double temperature = kDefaultTemperature,
                 std::uint64_t seed = 0);

  // Runs the decoder for `button` and sounds the sampled key. A button that is
  // already held is retriggered: its old key is released first.
  std::vector<NoteEvent> press(int button, double wall_time);

  // Off-event for the key `button` is holding; none if it is not held.
  std::optional<NoteEvent> release(int button, double wall_time);

  // Row b is the T = 1 distribution a press of button b would sample from now.
  // Leaves the session untouched. ΔT models throw UnsupportedOperation.
  std::vector<std::vector<double>> lookahead() const;

  // Releases everything held, then zeroes the recurrent state and history.
  // The random stream carries on.
  std::vector<NoteEvent> reset(double wall_time);

  // Releases everything held without touching the model state.
  std::vector<NoteEvent> release_all(double wall_time);

  void set_temperature(double temperature);
  double temperature() const { return temperature_; }

  // Logits a press of `button` at `wall_time` would see; does not advance.
  std::vector<float> peek_logits(int button, double wall_time) const;

  const DecoderRuntime& runtime() const { return *runtime_; }
  const std::vector<std::optional<int>>& held() const { return held_; }
  std::size_t held_count() const;
  int previous_key() const { return prev_key_; }
  std::size_t clamped_timestamps() const { return clamped_; }

  // Receives a line whenever a timestamp runs backwards.
  std::function<void(const std::string&)> on_warning;

 private:
  int dt_bucket_for(double wall_time) const;
  void check_button(int button) const;

  std::shared_ptr<const DecoderRuntime> runtime_;
  DecoderRuntime::State state_;
  int prev_key_ = model::kStartSymbol;
  std::optional<double> last_press_time_;
  std::vector<std::optional<int>> held_;
  std::mt19937_64 rng_;
  double temperature_;
  std::size_t clamped_ = 0;
};

}  // namespace genie::engine
