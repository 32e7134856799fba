#pragma once

// HTTP + WebSocket front end of the gateway: `/teleop` upgrades to a
// WebSocket carrying JSON text frames, every other GET is served from the
// static root.

#include <filesystem>
#include <memory>

#include "deskcell/teleop.hpp"

namespace deskcell {

class GatewayServer {
 public:
  /// Binds 127.0.0.1:port (0 picks a free port); throws StartupError.
  GatewayServer(GatewayCore& core, int port, std::filesystem::path static_root, const std::string& address = "127.0.0.1");
  ~GatewayServer();
  int port() const;
  void stop();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace deskcell
