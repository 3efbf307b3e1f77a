#include "genie/service/protocol.hpp"

#include <cmath>

#include "json.hpp"

namespace genie::service {

using nlohmann::json;

namespace {

constexpr const char* kClientNames[] = {"init", "press", "release", "lookahead", "reset", "set_temperature"};
constexpr const char* kServerNames[] = {"ready", "note_on", "note_off", "lookahead_result", "error"};

template <typename E, std::size_t N>
std::optional<E> lookup(const char* const (&names)[N], const std::string& s) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  return std::nullopt;
}

json parse_object(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ProtocolError(codes::bad_message, "message is not valid JSON");
  if (!j.is_object()) throw ProtocolError(codes::bad_message, "message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string())
    throw ProtocolError(codes::bad_message, "message needs a string \"type\"");
  return j;
}

template <typename T>
std::optional<T> field(const json& j, const char* name) {
  if (!j.contains(name) || j[name].is_null()) return std::nullopt;
  const json& v = j[name];
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" must be a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_unsigned())
      throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" must be a non-negative integer");
    return v.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" out of range");
    return static_cast<T>(x);
  } else {
    if (!v.is_number()) throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ProtocolError(codes::bad_message, std::string("\"") + name + "\" must be finite");
    return x;
  }
}

template <typename T>
void put(json& j, const char* name, const std::optional<T>& v) {
  if (v) j[name] = *v;
}

}  // namespace

std::string to_string(ClientType t) { return kClientNames[static_cast<std::size_t>(t)]; }
std::string to_string(ServerType t) { return kServerNames[static_cast<std::size_t>(t)]; }

ClientMessage parse_client_message(const std::string& text) {
  const json j = parse_object(text);
  const std::string name = j["type"].get<std::string>();
  const auto type = lookup<ClientType>(kClientNames, name);
  if (!type) throw ProtocolError(codes::unknown_type, "unknown message type \"" + name + "\"");
  ClientMessage m;
  m.type = *type;
  m.button = field<int>(j, "button");
  m.t_ms = field<double>(j, "t_ms");
  m.temperature = field<double>(j, "temperature");
  m.seed = field<std::uint64_t>(j, "seed");
  return m;
}

ServerMessage parse_server_message(const std::string& text) {
  const json j = parse_object(text);
  const std::string name = j["type"].get<std::string>();
  const auto type = lookup<ServerType>(kServerNames, name);
  if (!type) throw ProtocolError(codes::unknown_type, "unknown message type \"" + name + "\"");
  ServerMessage m;
  m.type = *type;
  m.session_id = field<std::string>(j, "session_id");
  m.key = field<int>(j, "key");
  m.button = field<int>(j, "button");
  m.t_ms = field<double>(j, "t_ms");
  m.code = field<std::string>(j, "code");
  m.message = field<std::string>(j, "message");
  if (j.contains("matrix")) {
    try {
      m.matrix = j["matrix"].get<std::vector<std::vector<double>>>();
    } catch (const json::exception&) {
      throw ProtocolError(codes::bad_message, "\"matrix\" must be an array of number arrays");
    }
  }
  return m;
}

std::string serialize(const ClientMessage& m) {
  json j = {{"type", to_string(m.type)}};
  put(j, "button", m.button);
  put(j, "t_ms", m.t_ms);
  put(j, "temperature", m.temperature);
  put(j, "seed", m.seed);
  return j.dump();
}

std::string serialize(const ServerMessage& m) {
  json j = {{"type", to_string(m.type)}};
  put(j, "session_id", m.session_id);
  put(j, "key", m.key);
  put(j, "button", m.button);
  put(j, "t_ms", m.t_ms);
  put(j, "matrix", m.matrix);
  put(j, "code", m.code);
  put(j, "message", m.message);
  return j.dump();
}

ServerMessage error_message(const std::string& code, const std::string& message) {
  ServerMessage m;
  m.type = ServerType::error;
  m.code = code;
  m.message = message;
  return m;
}

}  // namespace genie::service
