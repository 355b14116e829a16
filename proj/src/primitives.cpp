#include "sketchmesh/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace sketchmesh {

TriMesh make_icosphere(int level, double radius, const Vec3& center) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> pts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& p : pts) p.normalize();
    std::vector<Face> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1},
    };
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        const auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto [it, added] = mid.try_emplace({key.first, key.second}, static_cast<int>(pts.size()));
            if (added) pts.push_back((pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]).normalized());
            return it->second;
        };
        std::vector<Face> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int a = midpoint(f[0], f[1]);
            const int b = midpoint(f[1], f[2]);
            const int c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        faces = std::move(next);
    }
    for (auto& p : pts) p = center + radius * p;
    return TriMesh(std::move(pts), std::move(faces));
}

TriMesh make_grid(int nx, int ny, double sx, double sy) {
    std::vector<Vec3> pts;
    std::vector<Face> faces;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) pts.emplace_back(sx * i / nx, sy * j / ny, 0.0);
    }
    const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return TriMesh(std::move(pts), std::move(faces));
}

TriMesh make_cube() {
    std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                             {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    std::vector<Face> faces = {
        {0, 2, 1}, {0, 3, 2},  // z = 0
        {4, 5, 6}, {4, 6, 7},  // z = 1
        {0, 1, 5}, {0, 5, 4},  // y = 0
        {3, 7, 6}, {3, 6, 2},  // y = 1
        {0, 4, 7}, {0, 7, 3},  // x = 0
        {1, 2, 6}, {1, 6, 5},  // x = 1
    };
    return TriMesh(std::move(pts), std::move(faces));
}

TriMesh make_tetrahedron() {
    std::vector<Vec3> pts = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    std::vector<Face> faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return TriMesh(std::move(pts), std::move(faces));
}

TriMesh make_octahedron() {
    std::vector<Vec3> pts = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::vector<Face> faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                               {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
    return TriMesh(std::move(pts), std::move(faces));
}

TriMesh make_hemisphere(int rings, int segments, double radius) {
    std::vector<Vec3> pts;
    std::vector<Face> faces;
    for (int r = 0; r < rings; ++r) {
        const double lat = 0.5 * std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double lon = 2.0 * std::numbers::pi * s / segments;
            const double z = r == 0 ? 0.0 : radius * std::sin(lat);
            pts.emplace_back(radius * std::cos(lat) * std::cos(lon), radius * std::cos(lat) * std::sin(lon), z);
        }
    }
    const int pole = static_cast<int>(pts.size());
    pts.emplace_back(0.0, 0.0, radius);
    const auto id = [segments](int r, int s) { return r * segments + (s % segments); };
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            faces.push_back({id(r, s), id(r, s + 1), id(r + 1, s + 1)});
            faces.push_back({id(r, s), id(r + 1, s + 1), id(r + 1, s)});
        }
    }
    for (int s = 0; s < segments; ++s) faces.push_back({id(rings - 1, s), id(rings - 1, s + 1), pole});
    return TriMesh(std::move(pts), std::move(faces));
}

}  // namespace sketchmesh
