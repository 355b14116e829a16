#include "sketchmesh/stroke.hpp"

#include <algorithm>
#include <string>

#include "sketchmesh/error.hpp"

namespace sketchmesh {

std::string_view to_string(StrokeKind kind) {
    switch (kind) {
        case StrokeKind::Silhouette: return "silhouette";
        case StrokeKind::OnSurface: return "on_surface";
        case StrokeKind::HandleTarget: return "handle_target";
    }
    return "on_surface";
}

StrokeKind stroke_kind_from_string(std::string_view name) {
    if (name == "silhouette") return StrokeKind::Silhouette;
    if (name == "on_surface") return StrokeKind::OnSurface;
    if (name == "handle_target") return StrokeKind::HandleTarget;
    throw StrokeError("unknown stroke kind '" + std::string(name) + "'");
}

double polyline_length(const std::vector<Vec3>& points) {
    double len = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
    return len;
}

std::vector<Vec3> resample_polyline(const std::vector<Vec3>& points, std::size_t count) {
    if (points.empty() || count == 0) return {};
    const double total = polyline_length(points);
    if (count == 1 || points.size() == 1 || total <= 0.0) return std::vector<Vec3>(count, points.front());

    std::vector<Vec3> out;
    out.reserve(count);
    std::size_t seg = 0;
    double seg_start = 0.0;  // arc length at points[seg]
    for (std::size_t k = 0; k < count; ++k) {
        const double target = total * static_cast<double>(k) / static_cast<double>(count - 1);
        while (seg + 2 < points.size() && seg_start + (points[seg + 1] - points[seg]).norm() < target) {
            seg_start += (points[seg + 1] - points[seg]).norm();
            ++seg;
        }
        const double len = (points[seg + 1] - points[seg]).norm();
        const double t = len > 0.0 ? std::clamp((target - seg_start) / len, 0.0, 1.0) : 0.0;
        out.push_back(points[seg] + t * (points[seg + 1] - points[seg]));
    }
    out.back() = points.back();
    return out;
}

}  // namespace sketchmesh
