#include "sketchmesh/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <Eigen/LU>
#include <sodium.h>

#include "sketchmesh/bvh.hpp"
#include "sketchmesh/error.hpp"

namespace sketchmesh {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    std::string out(len, '\0');
    sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(len - 1);  // drop the terminator
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t written = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &written, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw FormatError("malformed base64");
    }
    out.resize(written);
    return out;
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

}  // namespace

json mesh_to_wire(const TriMesh& mesh) {
    std::vector<std::uint8_t> positions, faces;
    positions.reserve(mesh.num_vertices() * 12);
    faces.reserve(mesh.num_faces() * 12);
    for (const auto& p : mesh.positions()) {
        for (int k = 0; k < 3; ++k) put_le(positions, static_cast<float>(p[k]));
    }
    for (const auto& f : mesh.faces()) {
        for (int k = 0; k < 3; ++k) put_le(faces, static_cast<std::uint32_t>(f[static_cast<std::size_t>(k)]));
    }
    return {{"positions", base64_encode(positions)},
            {"faces", base64_encode(faces)},
            {"num_vertices", mesh.num_vertices()},
            {"num_faces", mesh.num_faces()}};
}

TriMesh mesh_from_wire(const json& j) {
    const auto positions = base64_decode(j.at("positions").get<std::string>());
    const auto faces = base64_decode(j.at("faces").get<std::string>());
    if (positions.size() % 12 != 0 || faces.size() % 12 != 0) throw FormatError("wire mesh buffers are truncated");
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < positions.size(); i += 12) {
        pts.emplace_back(get_le<float>(&positions[i]), get_le<float>(&positions[i + 4]),
                         get_le<float>(&positions[i + 8]));
    }
    std::vector<Face> tris;
    for (std::size_t i = 0; i < faces.size(); i += 12) {
        tris.push_back(Face{static_cast<int>(get_le<std::uint32_t>(&faces[i])),
                            static_cast<int>(get_le<std::uint32_t>(&faces[i + 4])),
                            static_cast<int>(get_le<std::uint32_t>(&faces[i + 8]))});
    }
    if (pts.empty()) return TriMesh();
    return TriMesh(std::move(pts), std::move(tris));
}

// ---------------------------------------------------------------------------
// ScreenCamera

ScreenCamera::ScreenCamera(const Eigen::Matrix4d& view, const Eigen::Matrix4d& projection, double width,
                           double height)
    : view_(view), width_(width), height_(height) {
    if (!(width > 0.0) || !(height > 0.0)) throw FormatError("camera viewport must be positive");
    Eigen::FullPivLU<Eigen::Matrix4d> lu(projection * view);
    if (!lu.isInvertible()) throw FormatError("camera view-projection matrix is singular");
    inverse_ = lu.inverse();
}

ScreenCamera ScreenCamera::from_json(const json& j) {
    try {
        const auto matrix = [&](const char* key) {
            const auto values = j.at(key).get<std::vector<double>>();
            if (values.size() != 16) throw FormatError(std::string("camera ") + key + " needs 16 numbers");
            return Eigen::Matrix4d(Eigen::Map<const Eigen::Matrix4d>(values.data()));  // column-major
        };
        const auto viewport = j.at("viewport").get<std::vector<double>>();
        if (viewport.size() != 2) throw FormatError("camera viewport needs [width, height]");
        return ScreenCamera(matrix("view"), matrix("projection"), viewport[0], viewport[1]);
    } catch (const json::exception& e) {
        throw FormatError(std::string("camera: ") + e.what());
    }
}

Ray ScreenCamera::ray(const Vec2& pixel) const {
    const double nx = 2.0 * pixel.x() / width_ - 1.0;
    const double ny = 1.0 - 2.0 * pixel.y() / height_;
    const auto unproject = [&](double nz) {
        const Eigen::Vector4d h = inverse_ * Eigen::Vector4d(nx, ny, nz, 1.0);
        return Vec3(h.head<3>() / h.w());
    };
    const Vec3 near = unproject(-1.0);
    const Vec3 far = unproject(1.0);
    return {near, (far - near).normalized()};
}

Vec3 ScreenCamera::forward() const { return -view_.block<1, 3>(2, 0).transpose().normalized(); }
Vec3 ScreenCamera::right() const { return view_.block<1, 3>(0, 0).transpose().normalized(); }
Vec3 ScreenCamera::up() const { return view_.block<1, 3>(1, 0).transpose().normalized(); }

// ---------------------------------------------------------------------------
// Screen-space resolution

namespace {

std::optional<Vec3> hit_plane(const Ray& ray, const Vec3& point, const Vec3& normal) {
    const double denom = ray.direction.dot(normal);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    return ray.origin + ray.direction * ((point - ray.origin).dot(normal) / denom);
}

std::vector<Vec2> screen_points(const json& screen) {
    std::vector<Vec2> out;
    for (const auto& p : screen.at("points")) out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return out;
}

Vec2 screen_point(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json surface_stroke(const std::vector<Vec2>& pixels, const ScreenCamera& camera, const TriMesh& mesh) {
    if (mesh.empty()) throw StrokeError("stroke drawn with no mesh on the canvas");
    const MeshBvh bvh(mesh);
    json out = json::array();
    for (const auto& px : pixels) {
        const Ray r = camera.ray(px);
        if (const auto hit = bvh.first_hit(r.origin, r.direction)) {
            out.push_back({hit->point.x(), hit->point.y(), hit->point.z()});
        }
    }
    if (out.empty()) throw StrokeError("stroke misses the mesh");
    return out;
}

}  // namespace

json resolve_screen_params(std::string_view cmd, const json& params, const Session& session) {
    if (!params.is_object() || !params.contains("screen")) return params;
    try {
        json out = params;
        const json& screen = params.at("screen");
        const ScreenCamera camera = ScreenCamera::from_json(screen.at("camera"));
        out.erase("screen");
        const TriMesh& mesh = session.mesh();

        if (cmd == "DrawSilhouette") {
            json pts = json::array();
            for (const auto& px : screen_points(screen)) {
                const auto p = hit_plane(camera.ray(px), Vec3::Zero(), Vec3::UnitZ());
                if (!p) throw StrokeError("silhouette drawn edge-on to the sketch plane");
                pts.push_back({p->x(), p->y()});
            }
            out["points"] = pts;
        } else if (cmd == "AddCurve" || cmd == "Carve") {
            out["stroke"] = surface_stroke(screen_points(screen), camera, mesh);
        } else if (cmd == "Extrude") {
            out["region_stroke"] = surface_stroke(screen_points(screen), camera, mesh);
            if (!out.contains("view")) {
                const Vec3 r = camera.right(), u = camera.up();
                out["view"] = {{"right", {r.x(), r.y(), r.z()}}, {"up", {u.x(), u.y(), u.z()}}};
            }
        } else if (cmd == "Smooth") {
            const json hits = surface_stroke(screen_points(screen), camera, mesh);
            const MeshBvh bvh(mesh);
            std::vector<int> seeds;
            for (const auto& h : hits) {
                const Vec3 p(h[0].get<double>(), h[1].get<double>(), h[2].get<double>());
                const Face& f = mesh.face(bvh.closest_point(p).face);
                int best = f[0];
                for (int v : f) {
                    if ((mesh.position(v) - p).squaredNorm() < (mesh.position(best) - p).squaredNorm()) best = v;
                }
                seeds.push_back(best);
            }
            out["vertices"] = k_ring(mesh, seeds, session.config().smooth_rings);
        } else if (cmd == "DeformHandle") {
            const int id = params.at("handle_id").get<int>();
            const auto& handles = session.state().handles;
            if (id < 0 || static_cast<std::size_t>(id) >= handles.size()) {
                throw CommandError("handle", "no handle " + std::to_string(id), session.last_seq() + 1);
            }
            const HandleCurve& curve = handles[static_cast<std::size_t>(id)].curve;
            std::vector<Vec3> current;
            for (std::size_t i = 0; i < curve.vertex_ids.size(); ++i) {
                current.push_back(curve.targets.empty() ? mesh.position(curve.vertex_ids[i]) : curve.targets[i]);
            }
            Vec3 centroid = Vec3::Zero();
            for (const auto& p : current) centroid += p;
            centroid /= static_cast<double>(current.size());
            const auto a = hit_plane(camera.ray(screen_point(screen.at("from"))), centroid, camera.forward());
            const auto b = hit_plane(camera.ray(screen_point(screen.at("to"))), centroid, camera.forward());
            if (!a || !b) throw StrokeError("drag is parallel to the drag plane");
            json targets = json::array();
            for (const auto& p : current) {
                const Vec3 t = p + (*b - *a);
                targets.push_back({t.x(), t.y(), t.z()});
            }
            out["targets"] = targets;
        } else {
            throw FormatError(std::string(cmd) + " does not take screen-space input");
        }
        return out;
    } catch (const json::exception& e) {
        throw FormatError(std::string("screen params: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// ProtocolHandler

ProtocolHandler::ProtocolHandler(EngineConfig config) : session_(std::move(config)) {}

const std::vector<std::string>& ProtocolHandler::query_names() {
    static const std::vector<std::string> names{"GetMesh", "GetState", "ExportObj", "ExportLog"};
    return names;
}

json ProtocolHandler::state_summary() const {
    const SessionState& s = session_.state();
    return {{"stage", s.stage},
            {"num_vertices", s.mesh.num_vertices()},
            {"num_faces", s.mesh.num_faces()},
            {"handles", s.handles.size()},
            {"pending_carve", s.pending_carve.size()},
            {"detail_strokes", s.detail_strokes.size()},
            {"symmetry", s.symmetry},
            {"coarse_field", s.coarse_field ? s.coarse_field->ref.to_json() : json(nullptr)},
            {"detail_field", s.detail_field ? s.detail_field->ref.to_json() : json(nullptr)},
            {"undo_available", session_.undo_available()},
            {"last_seq", session_.last_seq()}};
}

json ProtocolHandler::handle(const json& request) {
    json id = nullptr;
    const auto error = [&](const std::string& code, const std::string& message, std::optional<std::uint64_t> seq) {
        return json{{"id", id},
                    {"ok", false},
                    {"error", {{"code", code}, {"message", message}, {"seq", seq ? json(*seq) : json(nullptr)}}}};
    };

    if (!request.is_object()) return error("protocol", "request must be a JSON object", std::nullopt);
    if (request.contains("id")) id = request.at("id");
    if (!request.contains("cmd") || !request.at("cmd").is_string()) {
        return error("protocol", "request needs a string \"cmd\"", std::nullopt);
    }
    const std::string name = request.at("cmd").get<std::string>();
    const json params = request.contains("params") ? request.at("params") : json::object();

    if (name == "GetMesh") return {{"id", id}, {"ok", true}, {"mesh", mesh_to_wire(session_.mesh())}};
    if (name == "GetState") return {{"id", id}, {"ok", true}, {"state", state_summary()}};
    if (name == "ExportObj") return {{"id", id}, {"ok", true}, {"obj", to_obj(session_.mesh())}};
    if (name == "ExportLog") return {{"id", id}, {"ok", true}, {"log", session_.log().serialize()}};

    const std::uint64_t seq = session_.last_seq() + 1;
    try {
        const json resolved = resolve_screen_params(name, params, session_);
        CommandBody body = command_body_from_json(name, resolved);
        const MeshDelta delta = session_.submit(std::move(body));
        return {{"id", id},
                {"ok", true},
                {"seq", session_.last_seq()},
                {"delta", delta.to_json()},
                {"state", state_summary()}};
    } catch (const CommandError& e) {
        return error(e.code(), e.message(), e.seq());
    } catch (const FormatError& e) {
        return error("format", e.what(), seq);
    } catch (const StrokeError& e) {
        return error("stroke", e.what(), seq);
    } catch (const Error& e) {
        return error("internal", e.what(), seq);
    }
}

std::string ProtocolHandler::handle_text(std::string_view text) {
    json request;
    try {
        request = json::parse(text);
    } catch (const json::exception& e) {
        return json{{"id", nullptr},
                    {"ok", false},
                    {"error", {{"code", "protocol"}, {"message", e.what()}, {"seq", nullptr}}}}
            .dump();
    }
    return handle(request).dump();
}

}  // namespace sketchmesh
