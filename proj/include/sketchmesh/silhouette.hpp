#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "sketchmesh/mesh.hpp"

namespace sketchmesh {

/// Closed silhouette polygon drawn in the sketch plane (z = 0, the mirror plane).
class SilhouetteCurve {
public:
    static constexpr std::size_t kMinPoints = 8;

    /// Drops repeated and closing-duplicate points, enforces counterclockwise
    /// order, and rejects curves with fewer than kMinPoints distinct points or
    /// with self-intersections (StrokeError carrying the location).
    /// `resample_len` ≤ 0 selects 1/64 of the bounding-box diagonal.
    static SilhouetteCurve create(std::vector<Vec2> points, double resample_len = 0.0);

    const std::vector<Vec2>& points() const { return points_; }
    double resample_len() const { return resample_len_; }
    double bbox_diagonal() const;

    /// Uniform arc-length resampling with edge length at most resample_len.
    std::vector<Vec2> resampled() const;

private:
    std::vector<Vec2> points_;
    double resample_len_ = 0.0;
};

double polygon_signed_area(std::span<const Vec2> polygon);
bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p);
/// First pair of non-adjacent crossing edges, reported as the crossing point.
std::optional<Vec2> find_self_intersection(std::span<const Vec2> polygon);

/// Constrained Delaunay triangulation of a simple polygon on z = 0. The polygon
/// vertices come first, in input order. With `max_edge`, Steiner points are
/// inserted on a hexagonal lattice and long edges split until every edge is at
/// most `max_edge`; boundary edges longer than that are split as well.
TriMesh triangulate_polygon(std::span<const Vec2> polygon, std::optional<double> max_edge = std::nullopt);
TriMesh triangulate_polygon(const SilhouetteCurve& curve);

/// Laplacian magnitudes per vertex plus the constraints they were diffused from.
struct LMField {
    std::vector<double> values;
    std::map<int, double> constrained;
};

/// Minimizes Σ over unconstrained vertices of (L m)_i² + Σ_c w²·(m_c − m'_c)².
/// Constrained vertices carry no smoothness row, so the constraints are met
/// exactly whenever every connected component holds at least one of them.
LMField diffuse_magnitudes(const TriMesh& mesh, const std::map<int, double>& constrained,
                           double weight = 1.0);

/// δ_i = A_i · m_i · n_i.
std::vector<Vec3> target_laplacians(const TriMesh& mesh, std::span<const double> magnitudes);

/// Minimizes Σ over unpinned vertices of ‖L(v)_i − δ_i‖² + Σ_c w²·‖v_c − v'_c‖².
TriMesh solve_positions(const TriMesh& mesh, std::span<const Vec3> deltas,
                        const std::map<int, Vec3>& pinned, double weight = 1.0);

/// Default Laplacian magnitude for a curve: a fixed multiple of its bbox diagonal.
double default_lm(const SilhouetteCurve& curve);

/// Inflates the silhouette into a closed, mirror-symmetric pillow. Positive
/// `lm` inflates: with the mean-minus-center Laplacian a convex bump has L(v)
/// opposite its outward normal, so the silhouette is constrained to m = −lm.
///
/// Runs in a frame where the curve has unit bbox diagonal, with lm divided by
/// the diagonal, and maps back; scaling the curve and lm together by s scales
/// the output by s.
TriMesh generate_initial(const SilhouetteCurve& curve, double lm);
TriMesh generate_initial(const SilhouetteCurve& curve);

}  // namespace sketchmesh
