#pragma once

#include "sketchmesh/mesh.hpp"

namespace sketchmesh {

/// Subdivided icosahedron projected onto a sphere; level 0 has 12 vertices and
/// each level multiplies the face count by four.
TriMesh make_icosphere(int level, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Regular (nx+1)×(ny+1) vertex grid on z = 0 spanning [0, sx] × [0, sy].
TriMesh make_grid(int nx, int ny, double sx = 1.0, double sy = 1.0);

/// Axis-aligned unit cube [0,1]³ with 12 outward-facing triangles.
TriMesh make_cube();

/// Regular tetrahedron whose vertices sum to zero.
TriMesh make_tetrahedron();

TriMesh make_octahedron();

/// Upper hemisphere (z ≥ 0) in latitude/longitude layout; the equator loop lies
/// exactly on z = 0 and is left open.
TriMesh make_hemisphere(int rings, int segments, double radius = 1.0);

}  // namespace sketchmesh
