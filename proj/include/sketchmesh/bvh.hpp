#pragma once

#include <optional>
#include <vector>

#include "sketchmesh/mesh.hpp"

namespace sketchmesh {

struct SurfacePoint {
    double distance = 0.0;
    int face = -1;
    Vec3 point = Vec3::Zero();
};

struct RayHit {
    double t = 0.0;
    int face = -1;
    Vec3 point = Vec3::Zero();
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Möller–Trumbore; returns the ray parameter of the hit when t > 0.
std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                             const Vec3& b, const Vec3& c);

/// Axis-aligned bounding-volume hierarchy over the faces of a mesh, for
/// closest-point, ray-cast, and crossing-count queries. Holds its own copy of
/// the triangles.
class MeshBvh {
public:
    MeshBvh() = default;
    explicit MeshBvh(const TriMesh& mesh);

    bool empty() const { return tris_.empty(); }

    SurfacePoint closest_point(const Vec3& p) const;
    std::optional<RayHit> first_hit(const Vec3& origin, const Vec3& dir) const;
    /// Number of faces crossed by the ray (t > 0).
    int count_crossings(const Vec3& origin, const Vec3& dir) const;

private:
    struct Node {
        Box3 box;
        int left = -1, right = -1;  // children, or -1 for a leaf
        int begin = 0, end = 0;     // leaf range into order_
    };
    int build(int begin, int end);

    std::vector<std::array<Vec3, 3>> tris_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

}  // namespace sketchmesh
