#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace genie::service {

// One JSON object per WebSocket text frame.

enum class ClientType { init, press, release, lookahead, reset, set_temperature };
enum class ServerType { ready, note_on, note_off, lookahead_result, error };

std::string to_string(ClientType t);
std::string to_string(ServerType t);

struct ClientMessage {
  ClientType type = ClientType::init;
  std::optional<int> button;
  std::optional<double> t_ms;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;

  bool operator==(const ClientMessage&) const = default;
};

struct ServerMessage {
  ServerType type = ServerType::ready;
  std::optional<std::string> session_id;
  std::optional<int> key;
  std::optional<int> button;
  std::optional<double> t_ms;
  std::optional<std::vector<std::vector<double>>> matrix;
  std::optional<std::string> code;
  std::optional<std::string> message;

  bool operator==(const ServerMessage&) const = default;
};

// Error codes carried in error{code}.
namespace codes {
inline constexpr const char* bad_message = "bad_message";
inline constexpr const char* unknown_type = "unknown_type";
inline constexpr const char* no_session = "no_session";
inline constexpr const char* not_held = "not_held";
inline constexpr const char* lookahead_unsupported = "lookahead_unsupported";
inline constexpr const char* invalid_argument = "invalid_argument";
}  // namespace codes

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Throws ProtocolError(bad_message) for malformed JSON, missing or mistyped
// fields; ProtocolError(unknown_type) for an unrecognised type.
ClientMessage parse_client_message(const std::string& text);
ServerMessage parse_server_message(const std::string& text);

std::string serialize(const ClientMessage& m);
std::string serialize(const ServerMessage& m);

ServerMessage error_message(const std::string& code, const std::string& message);

}  // namespace genie::service
