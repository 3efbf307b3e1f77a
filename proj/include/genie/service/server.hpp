#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "genie/service/service.hpp"

namespace genie::service {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
  int threads = 1;
  double reap_interval_s = 30;
  bool handle_signals = false;  // SIGINT/SIGTERM trigger stop()
};

// WebSocket protocol endpoint plus GET /healthz and static files over one
// port. Any path accepts a WebSocket upgrade.
class Server {
 public:
  // Binds immediately; throws std::system_error if the address is unavailable.
  Server(Service& service, ServerOptions options);
  ~Server();

  unsigned short port() const;

  // Blocks until stop() or a handled signal.
  void run();

  // Graceful: stops accepting, sends note_off for every held note, closes
  // every WebSocket. Safe from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Content type by file extension; application/octet-stream when unknown.
std::string mime_type(const std::filesystem::path& path);

// Maps a request target to a file under `root`, or nullopt when it would
// escape it. "/" means index.html.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, const std::string& target);

}  // namespace genie::service
