#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sketchmesh/implicit.hpp"
#include "sketchmesh/mesh.hpp"
#include "sketchmesh/stroke.hpp"

namespace sketchmesh {

/// Direction convention for the projection step. With occupancy 1 inside and
/// outward normals, TowardSurface moves v by +d·sign(f − α)·n, which walks
/// every vertex toward the α level set. AsPrinted uses −d·sign(f − α)·n.
enum class ProjectionSign { TowardSurface, AsPrinted };

struct ProjectionSchedule {
    int iterations = 5;
    double step0 = 0.1;  // model units
    double ratio = 0.5;  // step multiplier applied on every sign flip
    double alpha = 0.5;  // iso level
    ProjectionSign sign = ProjectionSign::TowardSurface;
    /// Off: each vertex walks along the normal computed on entry.
    bool recompute_normals = false;
    /// |f − α| at or below this counts as on the surface (sign 0, vertex holds).
    double dead_zone = 1e-12;

    void validate() const;
};

struct ProjectionResult {
    std::vector<Vec3> targets;  // one per input point; untouched outside the region
    /// trace[k][i]: position of point i after iteration k (when requested).
    std::vector<std::vector<Vec3>> trace;
    /// Field queries that fell outside the field's domain and were clamped onto it.
    std::size_t clamped_queries = 0;
};

/// Walks each point along its fixed direction: x += d·s·dir with s the sign of
/// f(x) − α (negated for AsPrinted), d starting at step0 and multiplied by
/// `ratio` whenever s flips relative to the last nonzero sign.
ProjectionResult project_points(std::vector<Vec3> points, std::span<const Vec3> directions,
                                const OccupancyField& field, const ProjectionSchedule& schedule = {},
                                bool record_trace = false);

/// Runs the walk on mesh vertices along their normals. `region` null means every vertex.
ProjectionResult project_to_isosurface(const TriMesh& mesh, const OccupancyField& field,
                                       const ProjectionSchedule& schedule = {}, const VertexRegion* region = nullptr,
                                       bool record_trace = false);

struct FitParams {
    double lambda = 1.0;
    LaplacianWeights weights = LaplacianWeights::Uniform;
};

/// Moves the region's vertices to minimize λ·Σ_region ‖L(v)_i‖² + Σ_region ‖v_i − v'_i‖²
/// with every vertex outside the region held at its current position (copied
/// bitwise). `targets` holds one entry per mesh vertex.
TriMesh fit_with_smoothness(const TriMesh& mesh, const std::vector<Vec3>& targets, const FitParams& params = {},
                            const VertexRegion* region = nullptr);

struct RefineParams {
    ProjectionSchedule schedule;
    double lambda = 1.0;  // smoothness weight for the coarse stage
    int outer_rounds = 1;
};

/// Projection onto the field followed by a whole-mesh smoothness fit, repeated
/// `outer_rounds` times.
TriMesh refine_coarse(const TriMesh& mesh, const OccupancyField& field, const RefineParams& params = {});

struct CarveParams {
    ProjectionSchedule schedule;
    double lambda = 0.2;
    int ring_k = 3;
    /// Maximum distance from a stroke point to the surface; ≤ 0 selects 2% of
    /// the mesh bbox diagonal.
    double snap_tolerance = 0.0;
    BilateralParams filter;
};

struct CarveResult {
    TriMesh mesh;
    VertexRegion region;     // refined vertices, indices into mesh
    std::vector<int> band;   // one ring around the region, bilaterally filtered
};

/// Region-restricted detail refinement around on-surface strokes: k-ring region,
/// midpoint subdivision, projection, λ-weighted fit, and a bilateral filter on
/// the ring surrounding the region. Every other vertex keeps its bits.
CarveResult carve_details(const TriMesh& mesh, const std::vector<Stroke>& strokes, const OccupancyField& field,
                          const CarveParams& params = {});

/// Orthographic view axes; the profile's horizontal axis is `right`.
struct ViewFrame {
    Vec3 right = Vec3::UnitX();
    Vec3 up = Vec3::UnitY();
};

struct ExtrudeParams {
    double snap_tolerance = 0.0;  // ≤ 0 selects 2% of the mesh bbox diagonal
    int max_subdivisions = 3;
};

struct ExtrudeResult {
    TriMesh mesh;
    VertexRegion region;  // enclosed vertices including the boundary loop
};

/// Raises the patch enclosed by a closed on-surface stroke along the patch's
/// mean normal. The profile is a polyline of (u, h) pairs in model units: u is
/// the coordinate along the view's right axis (p·right) and h the height at that
/// coordinate. Vertices outside the profile's u-range get height 0, and heights
/// are blended to zero over two rings from the boundary. A profile whose heights
/// are all zero leaves the mesh unchanged.
ExtrudeResult extrude(const TriMesh& mesh, const std::vector<Vec3>& region_stroke, const std::vector<Vec2>& profile,
                      const ViewFrame& view, const ExtrudeParams& params = {});

}  // namespace sketchmesh
