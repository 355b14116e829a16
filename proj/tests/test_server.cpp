#include <filesystem>
#include <fstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "scripted_session.hpp"
#include "sketchmesh/error.hpp"
#include "sketchmesh/protocol.hpp"
#include "sketchmesh/server.hpp"

using namespace sketchmesh;
using nlohmann::json;
namespace fs = std::filesystem;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Running {
    Server server;
    std::thread thread;
    explicit Running(ServerOptions options) : server(std::move(options)), thread([this] { server.run(); }) {}
    ~Running() {
        server.stop();
        thread.join();
    }
};

http::response<http::string_body> get(unsigned short port, const std::string& target) {
    asio::io_context ioc;
    tcp::socket socket(ioc);
    socket.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    http::request<http::empty_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "localhost");
    req.keep_alive(false);
    http::write(socket, req);
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(socket, buffer, res);
    return res;
}

class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        ws_.next_layer().connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
        ws_.handshake("localhost", "/");
    }
    ~Client() {
        beast::error_code ec;
        ws_.close(websocket::close_code::normal, ec);
    }
    json call(const json& request) {
        ws_.text(true);
        ws_.write(asio::buffer(request.dump()));
        beast::flat_buffer buffer;
        ws_.read(buffer);
        return json::parse(beast::buffers_to_string(buffer.data()));
    }

private:
    asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("static target resolution") {
    TempDir dir("sketchmesh_static_resolve");
    fs::create_directories(dir.path / "js");
    std::ofstream(dir.path / "index.html") << "<html></html>";
    std::ofstream(dir.path / "js" / "app.js") << "let x = 1;";
    const auto canon = fs::canonical(dir.path);
    CHECK(resolve_static(dir.path, "/") == canon / "index.html");
    CHECK(resolve_static(dir.path, "/js/app.js?v=3") == canon / "js" / "app.js");
    CHECK(resolve_static(dir.path, "/js/%61pp.js") == canon / "js" / "app.js");
    CHECK(!resolve_static(dir.path, "/../etc/passwd"));
    CHECK(!resolve_static(dir.path, "/js/%2e%2e/%2e%2e/etc/passwd"));
    CHECK(!resolve_static(dir.path, "/missing.css"));
    CHECK(!resolve_static(dir.path, "relative"));
    CHECK(!resolve_static(dir.path, "/bad%zz"));
    fs::create_directory_symlink("/etc", dir.path / "escape");
    CHECK(!resolve_static(dir.path, "/escape/hostname"));
    CHECK(mime_type("a/b.js") == "text/javascript; charset=utf-8");
    CHECK(mime_type("index.html") == "text/html; charset=utf-8");
    CHECK(mime_type("blob") == "application/octet-stream");
}

TEST_CASE("serving files and sessions on one port") {
    TempDir web("sketchmesh_static_web");
    TempDir logs("sketchmesh_server_logs");
    std::ofstream(web.path / "index.html") << "<html>ui</html>";
    ServerOptions options;
    options.port = 0;
    options.static_dir = web.path.string();
    options.log_dir = logs.path.string();
    Running running(options);
    const unsigned short port = running.server.port();
    REQUIRE(port != 0);

    SUBCASE("static files") {
        auto res = get(port, "/");
        CHECK(res.result() == http::status::ok);
        CHECK(res.body() == "<html>ui</html>");
        CHECK(res[http::field::content_type] == "text/html; charset=utf-8");
        CHECK(get(port, "/../secret").result() == http::status::not_found);
        CHECK(get(port, "/nope.js").result() == http::status::not_found);
    }

    SUBCASE("a WebSocket session is logged and replays to the same OBJ") {
        std::string obj;
        {
            Client client(port);
            json points = json::array();
            for (const auto& p : scripted::ellipse(1.0, 0.8, 40)) points.push_back({p.x(), p.y()});
            json r = client.call({{"id", 1}, {"cmd", "DrawSilhouette"}, {"params", {{"points", points}}}});
            REQUIRE(r["ok"] == true);
            CHECK(r["delta"]["num_vertices"].get<int>() > 0);
            r = client.call({{"id", 2}, {"cmd", "Carve"}, {"params", {{"stroke", {{0, 0, 0.5}}}}}});
            CHECK(r["ok"] == false);
            CHECK(r["error"]["code"] == "stage");
            CHECK(r["error"]["seq"] == 2);
            r = client.call({{"id", 3}, {"cmd", "Smooth"}});
            REQUIRE(r["ok"] == true);
            CHECK(r["seq"] == 2);
            const json mesh = client.call({{"id", 4}, {"cmd", "GetMesh"}});
            CHECK(mesh_from_wire(mesh["mesh"]).num_vertices() == r["state"]["num_vertices"].get<std::size_t>());
            obj = client.call({{"id", 5}, {"cmd", "ExportObj"}})["obj"];
        }
        // A second connection starts from an empty session.
        {
            Client other(port);
            CHECK(other.call({{"id", 1}, {"cmd", "GetState"}})["state"]["num_vertices"] == 0);
        }
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(logs.path)) files.push_back(e.path());
        REQUIRE(files.size() == 2);
        std::sort(files.begin(), files.end());
        const SessionLog log = SessionLog::load(files[0].string());
        CHECK(log.commands.size() == 2);
        CHECK(to_obj(replay(log)) == obj);
        CHECK(SessionLog::load(files[1].string()).commands.empty());
    }
}

TEST_CASE("status page without a static directory, and stopping with a client attached") {
    ServerOptions options;
    options.port = 0;
    auto running = std::make_unique<Running>(options);
    const auto res = get(running->server.port(), "/");
    CHECK(res.result() == http::status::ok);
    CHECK(res.body().find("WebSocket") != std::string::npos);
    Client idle(running->server.port());
    CHECK(idle.call({{"id", 1}, {"cmd", "GetState"}})["ok"] == true);
    running.reset();  // must not hang on the open connection
    CHECK_THROWS_AS(Server(ServerOptions{"256.0.0.1", 0, {}, {}, {}}), sketchmesh::Error);
}
