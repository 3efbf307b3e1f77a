#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "genie/engine/session.hpp"
#include "genie/service/protocol.hpp"
#include "json.hpp"

namespace genie::service {

struct ServiceOptions {
  double default_temperature = engine::DecoderSession::kDefaultTemperature;
  double idle_timeout_ms = 10 * 60 * 1000.0;
  std::size_t latency_window = 1000;  // presses kept for p50/p99
};

struct LatencySummary {
  std::size_t count = 0;
  double p50_ms = 0;
  double p99_ms = 0;
};

// Sessions and message dispatch, independent of any transport. Times are in
// milliseconds on a clock the caller owns. Thread-safe; messages for one
// session must arrive in order.
class Service {
 public:
  Service(std::shared_ptr<const engine::DecoderRuntime> runtime, std::string checkpoint_id, ServiceOptions options = {});

  // `session_id` is the connection's binding: empty until init, which fills it.
  std::vector<ServerMessage> handle_message(std::string& session_id, const std::string& text, double now_ms);
  std::vector<ServerMessage> handle(std::string& session_id, const ClientMessage& msg, double now_ms);

  // Drops the session, returning note_off for whatever it held.
  std::vector<ServerMessage> close_session(const std::string& session_id, double now_ms);

  // Removes sessions untouched for longer than the idle timeout.
  std::vector<std::string> reap_idle(double now_ms);

  std::size_t active_sessions() const;
  std::optional<LatencySummary> latency() const;
  // {checkpoint, active_sessions, press_latency_ms?: {count, p50, p99}}
  nlohmann::json health() const;

  const engine::DecoderRuntime& runtime() const { return *runtime_; }

 private:
  struct Entry {
    engine::DecoderSession session;
    double last_active_ms = 0;
    std::mutex mutex;
    Entry(std::shared_ptr<const engine::DecoderRuntime> rt, double temperature, std::uint64_t seed, double now)
        : session(std::move(rt), temperature, seed), last_active_ms(now) {}
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void record_latency(double ms);

  std::shared_ptr<const engine::DecoderRuntime> runtime_;
  std::string checkpoint_id_;
  ServiceOptions options_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
  std::deque<double> latencies_;
};

ServerMessage to_message(const engine::NoteEvent& e);

}  // namespace genie::service
