#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "sketchmesh/session.hpp"

namespace sketchmesh {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws FormatError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// {"positions": base64 f32le xyz, "faces": base64 u32le abc}
nlohmann::json mesh_to_wire(const TriMesh& mesh);
/// Inverse of mesh_to_wire (positions come back rounded to float).
TriMesh mesh_from_wire(const nlohmann::json& j);

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
};

/// Browser camera sent with screen-space strokes: column-major 4×4 view and
/// projection matrices (WebGL convention) and the viewport size in pixels.
/// Pixel (0, 0) is the top-left corner.
class ScreenCamera {
public:
    ScreenCamera(const Eigen::Matrix4d& view, const Eigen::Matrix4d& projection, double width, double height);
    /// {"view": [16], "projection": [16], "viewport": [w, h]}
    static ScreenCamera from_json(const nlohmann::json& j);

    Ray ray(const Vec2& pixel) const;
    /// Viewing direction and screen axes in world space.
    Vec3 forward() const;
    Vec3 right() const;
    Vec3 up() const;

private:
    Eigen::Matrix4d view_, inverse_;
    double width_, height_;
};

/// Turns screen-space params into model-space params for `cmd`, using the live
/// session for surface hits. Params without a "screen" entry pass through
/// unchanged. Throws StrokeError when a stroke misses the canvas or the mesh.
///
/// DrawSilhouette: points land on the sketch plane z = 0. AddCurve, Carve,
/// Extrude (region), and Smooth: points are ray-cast onto the mesh; misses are
/// dropped. Smooth grows the hit vertices by the configured number of rings.
/// DeformHandle: a drag {"from", "to"} becomes a translation in the plane
/// through the handle's centroid facing the camera.
nlohmann::json resolve_screen_params(std::string_view cmd, const nlohmann::json& params, const Session& session);

/// One wire-protocol endpoint bound to one session. Requests are
/// {"id", "cmd", "params"}; engine commands answer {"id", "ok", "seq", "delta",
/// "state"} and failures {"id", "ok": false, "error": {"code", "message", "seq"}}.
/// Extra queries: GetMesh, GetState, ExportObj, ExportLog.
class ProtocolHandler {
public:
    explicit ProtocolHandler(EngineConfig config = {});

    nlohmann::json handle(const nlohmann::json& request);
    std::string handle_text(std::string_view text);

    const Session& session() const { return session_; }

    /// Query commands that do not change the session.
    static const std::vector<std::string>& query_names();

private:
    nlohmann::json state_summary() const;

    Session session_;
};

}  // namespace sketchmesh
