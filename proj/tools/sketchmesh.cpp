#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "sketchmesh/error.hpp"
#include "sketchmesh/implicit.hpp"
#include "sketchmesh/raster.hpp"
#include "sketchmesh/server.hpp"
#include "sketchmesh/session.hpp"

using namespace sketchmesh;

namespace {

EngineConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read config " + path);
    try {
        return EngineConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
}

int serve(ServerOptions options) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);  // inherited by the server threads

    Server server(options);
    std::thread worker([&] { server.run(); });
    std::cerr << "sketchmesh: serving on http://" << options.address << ":" << server.port() << "/\n";
    int received = 0;
    sigwait(&signals, &received);
    std::cerr << "sketchmesh: shutting down\n";
    server.stop();
    worker.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sketch-based head modeling engine"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "Engine config JSON (defaults otherwise)")->check(CLI::ExistingFile);

    ServerOptions server_options;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the WebSocket protocol and static UI files");
    serve_cmd->add_option("--port", server_options.port, "TCP port (0 picks a free one)")->capture_default_str();
    serve_cmd->add_option("--host", server_options.address, "Listen address")->capture_default_str();
    serve_cmd->add_option("--static", server_options.static_dir, "Directory of UI files")->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--log-dir", server_options.log_dir, "Write one session-<n>.jsonl per connection");

    std::string log_path, output;
    auto* replay_cmd = app.add_subcommand("replay", "Replay a session log and write the final mesh as OBJ");
    replay_cmd->add_option("log", log_path, "Session log (.jsonl)")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("-o,--output", output, "Output OBJ")->required();

    auto* stack_cmd = app.add_subcommand("export-stack", "Replay a log and write the detail-stage input stack");
    stack_cmd->add_option("log", log_path, "Session log (.jsonl)")->required()->check(CLI::ExistingFile);
    stack_cmd->add_option("-o,--output", output, "Output .smis stack")->required();

    auto* field_cmd = app.add_subcommand("field", "Occupancy field tools");
    field_cmd->require_subcommand(1);
    std::string mesh_path;
    int dims = 128;
    double falloff = 0.0;
    auto* bake_cmd = field_cmd->add_subcommand("bake", "Sample a closed mesh's occupancy onto a grid");
    bake_cmd->add_option("mesh", mesh_path, "Closed OBJ mesh")->required()->check(CLI::ExistingFile);
    bake_cmd->add_option("-o,--output", output, "Output .smgf grid")->required();
    bake_cmd->add_option("--dims", dims, "Nodes per axis")->capture_default_str()->check(CLI::Range(2, 1024));
    bake_cmd->add_option("--falloff", falloff, "Occupancy falloff width (<= 0: 2% of the bbox diagonal)");

    auto* config_cmd = app.add_subcommand("config", "Print the engine config and its hash");

    CLI11_PARSE(app, argc, argv);

    try {
        const EngineConfig config = load_config(config_path);
        if (*serve_cmd) {
            server_options.config = config;
            return serve(server_options);
        }
        if (*replay_cmd) {
            save_obj(replay(SessionLog::load(log_path), config), output);
        } else if (*stack_cmd) {
            const Session session = replay_session(SessionLog::load(log_path), config);
            if (session.mesh().empty()) throw MeshError("the log ends with an empty canvas");
            save_stack(render_detail_input(session.mesh(), session.detail_strokes()), output);
        } else if (*bake_cmd) {
            const auto field = mesh_to_field(load_obj(mesh_path), falloff);
            save_grid(bake_grid(*field, {dims, dims, dims}, field->bbox()), output);
        } else if (*config_cmd) {
            std::cout << config.to_json().dump(2) << "\nhash " << config.hash() << '\n';
        }
    } catch (const CommandError& e) {
        std::cerr << "sketchmesh: error at command " << e.seq() << " (" << e.code() << "): " << e.message() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "sketchmesh: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
