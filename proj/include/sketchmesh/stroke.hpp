#pragma once

#include <string_view>
#include <vector>

#include "sketchmesh/mesh.hpp"

namespace sketchmesh {

enum class StrokeKind { Silhouette, OnSurface, HandleTarget };

/// Ordered 3-D polyline in model units.
struct Stroke {
    StrokeKind kind = StrokeKind::OnSurface;
    std::vector<Vec3> points;
};

std::string_view to_string(StrokeKind kind);
StrokeKind stroke_kind_from_string(std::string_view name);

/// Total polyline length (closing segment excluded).
double polyline_length(const std::vector<Vec3>& points);

/// `count` points spaced uniformly by arc length along the polyline, endpoints
/// included. A single-point or zero-length polyline repeats its first point.
std::vector<Vec3> resample_polyline(const std::vector<Vec3>& points, std::size_t count);

}  // namespace sketchmesh
