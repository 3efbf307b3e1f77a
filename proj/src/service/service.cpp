#include "genie/service/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "genie/error.hpp"

namespace genie::service {

using engine::NoteEvent;
using engine::NoteKind;

ServerMessage to_message(const NoteEvent& e) {
  ServerMessage m;
  m.type = e.kind == NoteKind::on ? ServerType::note_on : ServerType::note_off;
  m.key = e.key;
  m.button = e.button;
  m.t_ms = e.time * 1000.0;
  return m;
}

Service::Service(std::shared_ptr<const engine::DecoderRuntime> runtime, std::string checkpoint_id,
                 ServiceOptions options)
    : runtime_(std::move(runtime)), checkpoint_id_(std::move(checkpoint_id)), options_(options) {
  require(runtime_ != nullptr, "service: no runtime");
  require(options_.default_temperature >= 0, "service: temperature must be non-negative");
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<ServerMessage> Service::handle_message(std::string& session_id, const std::string& text, double now_ms) {
  ClientMessage msg;
  try {
    msg = parse_client_message(text);
  } catch (const ProtocolError& e) {
    return {error_message(e.code(), e.what())};
  }
  return handle(session_id, msg, now_ms);
}

namespace {

void append(std::vector<ServerMessage>& out, const std::vector<NoteEvent>& events) {
  for (const auto& e : events) out.push_back(to_message(e));
}

}  // namespace

std::vector<ServerMessage> Service::handle(std::string& session_id, const ClientMessage& msg, double now_ms) {
  std::vector<ServerMessage> out;
  const double t_ms = msg.t_ms.value_or(now_ms);

  if (msg.type == ClientType::init) {
    const double temperature = msg.temperature.value_or(options_.default_temperature);
    if (temperature < 0) return {error_message(codes::invalid_argument, "temperature must be non-negative")};
    if (!session_id.empty()) out = close_session(session_id, t_ms);
    auto entry = std::make_shared<Entry>(runtime_, temperature, msg.seed.value_or(0), now_ms);
    {
      std::lock_guard lock(mutex_);
      char id[32];
      std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
      session_id = id;
      sessions_[session_id] = entry;
    }
    ServerMessage ready;
    ready.session_id = session_id;
    out.push_back(ready);
    return out;
  }

  auto entry = session_id.empty() ? nullptr : find(session_id);
  if (!entry) return {error_message(codes::no_session, "no session; send init first")};
  std::lock_guard lock(entry->mutex);
  entry->last_active_ms = now_ms;
  auto& s = entry->session;
  const double t = t_ms / 1000.0;

  switch (msg.type) {
    case ClientType::press: {
      if (!msg.button) return {error_message(codes::bad_message, "press needs \"button\"")};
      if (*msg.button < 0 || *msg.button >= s.runtime().buttons())
        return {error_message(codes::invalid_argument, "button out of range")};
      const auto start = std::chrono::steady_clock::now();
      const auto events = s.press(*msg.button, t);
      record_latency(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      append(out, events);
      return out;
    }
    case ClientType::release: {
      if (!msg.button) return {error_message(codes::bad_message, "release needs \"button\"")};
      if (auto off = s.release(*msg.button, t)) return {to_message(*off)};
      return {error_message(codes::not_held, "button " + std::to_string(*msg.button) + " is not held")};
    }
    case ClientType::lookahead: {
      try {
        ServerMessage m;
        m.type = ServerType::lookahead_result;
        m.matrix = s.lookahead();
        return {m};
      } catch (const UnsupportedOperation& e) {
        return {error_message(codes::lookahead_unsupported, e.what())};
      }
    }
    case ClientType::reset: {
      append(out, s.reset(t));
      ServerMessage ready;
      ready.session_id = session_id;
      out.push_back(ready);
      return out;
    }
    case ClientType::set_temperature: {
      if (!msg.temperature) return {error_message(codes::bad_message, "set_temperature needs \"temperature\"")};
      if (*msg.temperature < 0) return {error_message(codes::invalid_argument, "temperature must be non-negative")};
      s.set_temperature(*msg.temperature);
      ServerMessage ready;
      ready.session_id = session_id;
      return {ready};
    }
    case ClientType::init:
      break;
  }
  return {error_message(codes::unknown_type, "unhandled message type")};
}

std::vector<ServerMessage> Service::close_session(const std::string& session_id, double now_ms) {
  std::shared_ptr<Entry> entry;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return {};
    entry = it->second;
    sessions_.erase(it);
  }
  std::lock_guard lock(entry->mutex);
  std::vector<ServerMessage> out;
  append(out, entry->session.release_all(now_ms / 1000.0));
  return out;
}

std::vector<std::string> Service::reap_idle(double now_ms) {
  std::vector<std::pair<std::string, std::shared_ptr<Entry>>> all;
  {
    std::lock_guard lock(mutex_);
    all.assign(sessions_.begin(), sessions_.end());
  }
  // entry locks are never taken while holding the registry lock
  std::vector<std::string> idle;
  for (const auto& [id, entry] : all) {
    std::lock_guard entry_lock(entry->mutex);
    if (now_ms - entry->last_active_ms > options_.idle_timeout_ms) idle.push_back(id);
  }
  for (const auto& id : idle) close_session(id, now_ms);
  return idle;
}

std::size_t Service::active_sessions() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

void Service::record_latency(double ms) {
  std::lock_guard lock(mutex_);
  latencies_.push_back(ms);
  while (latencies_.size() > options_.latency_window) latencies_.pop_front();
}

std::optional<LatencySummary> Service::latency() const {
  std::vector<double> v;
  {
    std::lock_guard lock(mutex_);
    v.assign(latencies_.begin(), latencies_.end());
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  // nearest-rank percentiles
  auto rank = [&](double q) { return v[static_cast<std::size_t>(std::ceil(q * v.size())) - 1]; };
  return LatencySummary{v.size(), rank(0.50), rank(0.99)};
}

nlohmann::json Service::health() const {
  nlohmann::json j = {{"status", "ok"}, {"checkpoint", checkpoint_id_}, {"active_sessions", active_sessions()}};
  if (auto l = latency()) j["press_latency_ms"] = {{"count", l->count}, {"p50", l->p50_ms}, {"p99", l->p99_ms}};
  return j;
}

}  // namespace genie::service
