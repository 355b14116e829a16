#include "sketchmesh/server.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "sketchmesh/error.hpp"
#include "sketchmesh/protocol.hpp"

namespace sketchmesh {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::string_view mime_type(std::string_view path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
    if (ext == ".css") return "text/css; charset=utf-8";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".wasm") return "application/wasm";
    if (ext == ".txt" || ext == ".jsonl" || ext == ".obj") return "text/plain; charset=utf-8";
    return "application/octet-stream";
}

namespace {

std::optional<std::string> percent_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out += s[i];
            continue;
        }
        if (i + 2 >= s.size()) return std::nullopt;
        const auto hex = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            return -1;
        };
        const int hi = hex(s[i + 1]), lo = hex(s[i + 2]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
    }
    return out;
}

}  // namespace

std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target) {
    namespace fs = std::filesystem;
    target = target.substr(0, target.find_first_of("?#"));
    if (target.empty() || target.front() != '/') return std::nullopt;
    const auto decoded = percent_decode(target);
    if (!decoded || decoded->find('\0') != std::string::npos) return std::nullopt;

    fs::path rel;
    std::istringstream parts(*decoded);
    std::string part;
    while (std::getline(parts, part, '/')) {
        if (part.empty() || part == ".") continue;
        if (part == ".." || part.find('\\') != std::string::npos) return std::nullopt;
        rel /= part;
    }
    std::error_code ec;
    const fs::path base = fs::canonical(root, ec);
    if (ec) return std::nullopt;
    fs::path file = base / rel;
    if (fs::is_directory(file, ec)) file /= "index.html";
    const fs::path real = fs::canonical(file, ec);
    if (ec || !fs::is_regular_file(real, ec)) return std::nullopt;
    // Symlinks may still point outside the root.
    const auto [root_end, _] = std::mismatch(base.begin(), base.end(), real.begin(), real.end());
    if (root_end != base.end()) return std::nullopt;
    return real;
}

struct Server::Impl {
    ServerOptions options;
    asio::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::mutex mutex;
    std::vector<std::thread> workers;
    std::vector<std::weak_ptr<tcp::socket>> sockets;
    std::atomic<bool> stopping{false};
    std::atomic<int> log_counter{0};

    void accept_next();
    void serve_connection(std::shared_ptr<tcp::socket> socket);
    void serve_websocket(websocket::stream<tcp::socket&>& ws);
    http::response<http::string_body> static_response(const http::request<http::string_body>& req) const;
    std::string next_log_path();
};

std::string Server::Impl::next_log_path() {
    namespace fs = std::filesystem;
    for (;;) {
        const fs::path p = fs::path(options.log_dir) / ("session-" + std::to_string(++log_counter) + ".jsonl");
        std::error_code ec;
        if (!fs::exists(p, ec)) return p.string();
    }
}

http::response<http::string_body> Server::Impl::static_response(const http::request<http::string_body>& req) const {
    const auto reply = [&](http::status status, std::string body, std::string_view type) {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::server, "sketchmesh");
        res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
        res.keep_alive(req.keep_alive());
        res.body() = std::move(body);
        res.prepare_payload();
        if (req.method() == http::verb::head) res.body().clear();
        return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
        return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    }
    if (options.static_dir.empty()) {
        if (req.target() == "/") {
            return reply(http::status::ok, "sketchmesh engine: open a WebSocket on this port\n", "text/plain");
        }
        return reply(http::status::not_found, "not found\n", "text/plain");
    }
    const auto file = resolve_static(options.static_dir, std::string_view(req.target().data(), req.target().size()));
    if (!file) return reply(http::status::not_found, "not found\n", "text/plain");
    std::ifstream in(*file, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return reply(http::status::ok, body.str(), mime_type(file->string()));
}

void Server::Impl::serve_websocket(websocket::stream<tcp::socket&>& ws) {
    ProtocolHandler handler(options.config);
    std::ofstream log;
    if (!options.log_dir.empty()) {
        log.open(next_log_path(), std::ios::binary);
        if (log) log << SessionLog::header_line(handler.session().log().config_hash) << '\n' << std::flush;
    }
    std::size_t logged = 0;
    beast::flat_buffer buffer;
    for (;;) {
        buffer.clear();
        ws.read(buffer);
        const std::string response = handler.handle_text(beast::buffers_to_string(buffer.data()));
        const auto& commands = handler.session().log().commands;
        if (log) {
            for (; logged < commands.size(); ++logged) log << SessionLog::command_line(commands[logged]) << '\n';
            log.flush();
        }
        ws.text(true);
        ws.write(asio::buffer(response));
    }
}

void Server::Impl::serve_connection(std::shared_ptr<tcp::socket> socket) {
    try {
        beast::flat_buffer buffer;
        for (;;) {
            http::request<http::string_body> req;
            http::read(*socket, buffer, req);
            if (websocket::is_upgrade(req)) {
                websocket::stream<tcp::socket&> ws(*socket);
                ws.set_option(websocket::stream_base::decorator(
                    [](websocket::response_type& res) { res.set(http::field::server, "sketchmesh"); }));
                ws.read_message_max(64u << 20);
                ws.accept(req);
                serve_websocket(ws);
                return;
            }
            auto res = static_response(req);
            const bool keep = res.keep_alive();
            http::write(*socket, res);
            if (!keep) break;
        }
    } catch (const std::exception&) {
        // Closed by the peer or by stop().
    }
    beast::error_code ec;
    socket->shutdown(tcp::socket::shutdown_both, ec);
    socket->close(ec);
}

void Server::Impl::accept_next() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket peer) {
        if (ec || stopping) return;
        auto socket = std::make_shared<tcp::socket>(std::move(peer));
        {
            std::lock_guard lock(mutex);
            std::erase_if(sockets, [](const auto& w) { return w.expired(); });
            sockets.push_back(socket);
            workers.emplace_back([this, socket] { serve_connection(socket); });
        }
        accept_next();
    });
}

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->options = std::move(options);
    try {
        const tcp::endpoint endpoint(asio::ip::make_address(impl_->options.address), impl_->options.port);
        impl_->acceptor.open(endpoint.protocol());
        impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
        impl_->acceptor.bind(endpoint);
        impl_->acceptor.listen();
    } catch (const std::exception& e) {
        throw Error("cannot listen on " + impl_->options.address + ":" + std::to_string(impl_->options.port) + ": " +
                    e.what());
    }
    if (!impl_->options.log_dir.empty()) std::filesystem::create_directories(impl_->options.log_dir);
    impl_->accept_next();
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() { impl_->ioc.run(); }

void Server::stop() {
    if (impl_->stopping.exchange(true)) return;
    asio::post(impl_->ioc, [impl = impl_.get()] {
        beast::error_code ec;
        impl->acceptor.close(ec);
    });
    impl_->ioc.stop();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(impl_->mutex);
        // shutdown(2) on the descriptor unblocks reads in the worker threads.
        for (auto& weak : impl_->sockets) {
            if (auto s = weak.lock()) ::shutdown(s->native_handle(), SHUT_RDWR);
        }
        workers.swap(impl_->workers);
    }
    for (auto& t : workers) t.join();
}

}  // namespace sketchmesh
