#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "facegen/inference.hpp"
#include "facegen/session_store.hpp"

namespace facegen {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string model_name;
  std::filesystem::path sessions_dir;  // empty keeps sessions in memory
  std::filesystem::path static_dir;    // optional browser client served at /
};

/// HTTP/JSON front end over a Pipeline and a SessionStore.
///
///   GET  /api/health
///   GET  /api/lexicon
///   POST /api/generate                         {"text"}
///   POST /api/variants                         {"latent_id"|"latent", "k", "sigma", "noise_seed", "text"?}
///   POST /api/sessions
///   GET  /api/sessions/{id}
///   POST /api/sessions/{id}/steps              {"text"?, "alpha"?, "k"?, "sigma"?, "noise_seed"?}
///   POST /api/sessions/{id}/steps/{n}/select   {"variant_index"}
///   POST /api/sessions/{id}/close
///
/// Errors answer {"error": kind, "message": text} with 400 for request
/// problems, 404 for unknown sessions or latent ids, 409 for closed sessions.
class ApiServer {
 public:
  ApiServer(std::shared_ptr<const Pipeline> pipeline, ServerConfig config);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the socket; returns the bound port. Persistence errors on failure.
  int bind();
  /// Serves until stop(); binds first if needed.
  void listen();
  /// bind() then serve on a background thread.
  int start();
  void stop();

  int port() const;
  SessionStore& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace facegen
