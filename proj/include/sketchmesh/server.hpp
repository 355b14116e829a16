#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "sketchmesh/session.hpp"

namespace sketchmesh {

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    std::string static_dir;      // empty: only a plain-text status page
    std::string log_dir;         // empty: sessions are not logged to disk
    EngineConfig config;
};

/// HTTP static files and the WebSocket protocol on one port. Every WebSocket
/// connection gets its own Session, processed in arrival order on the
/// connection's thread. With a log directory, each session writes
/// session-<n>.jsonl as commands succeed.
class Server {
public:
    /// Binds and listens immediately; throws Error when the port is unavailable.
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    /// Serves until stop() is called.
    void run();
    /// Safe to call from any thread; closes open connections and joins their threads.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string_view mime_type(std::string_view path);

/// Maps a request target ("/a/b.js?x=1") to a regular file under `root`;
/// directories map to their index.html. Returns nullopt for missing files and
/// for targets that would leave `root`.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target);

}  // namespace sketchmesh
