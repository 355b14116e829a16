#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sketchmesh/linsolve.hpp"

namespace sketchmesh {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Box3 = Eigen::AlignedBox3d;
using Face = std::array<int, 3>;

/// Indexed, consistently oriented triangle mesh.
///
/// Construction validates the invariants: indices in range, three distinct
/// corners per face, every directed edge used at most once (which implies at
/// most two faces per edge with opposite traversal), and no face with area
/// below 1e-12 × bbox-diagonal². Instances are immutable; operations return
/// new meshes.
class TriMesh {
public:
    TriMesh() = default;
    TriMesh(std::vector<Vec3> positions, std::vector<Face> faces);

    /// Same connectivity with new positions. Re-checks face areas only.
    TriMesh with_positions(std::vector<Vec3> positions) const;

    std::size_t num_vertices() const { return positions_.size(); }
    std::size_t num_faces() const { return faces_.size(); }
    bool empty() const { return positions_.empty(); }

    const std::vector<Vec3>& positions() const { return positions_; }
    const std::vector<Face>& faces() const { return faces_; }
    const Vec3& position(int v) const { return positions_[static_cast<std::size_t>(v)]; }
    const Face& face(int f) const { return faces_[static_cast<std::size_t>(f)]; }

    /// Vertex neighbors in ascending index order.
    std::span<const int> neighbors(int v) const;
    std::span<const int> incident_faces(int v) const;

    Box3 bbox() const;
    double bbox_diagonal() const;

    /// Unique undirected edges (a < b), lexicographically sorted.
    std::vector<std::array<int, 2>> edges() const;
    /// Closed loops of boundary half-edges, each in traversal order.
    std::vector<std::vector<int>> boundary_loops() const;
    bool is_watertight() const;

    Vec3 face_normal(int f) const;  // unit
    double face_area(int f) const;
    Vec3 face_centroid(int f) const;

    /// Bitwise equality of positions and faces.
    friend bool operator==(const TriMesh& a, const TriMesh& b);

private:
    void build_adjacency();
    void check_face_areas() const;

    std::vector<Vec3> positions_;
    std::vector<Face> faces_;
    std::vector<int> nbr_offsets_, nbr_;
    std::vector<int> vf_offsets_, vf_;
};

/// A set of vertices targeted by a region-restricted operation.
struct VertexRegion {
    std::vector<int> members;        // ascending
    std::vector<int> boundary_ring;  // members with at least one neighbor outside

    static VertexRegion from_members(const TriMesh& mesh, std::vector<int> members);
    static VertexRegion all(const TriMesh& mesh);

    bool empty() const { return members.empty(); }
    bool contains(int v) const;
    std::vector<char> mask(std::size_t num_vertices) const;
};

/// Vertices within `rings` graph hops of any seed (seeds included).
std::vector<int> k_ring(const TriMesh& mesh, std::span<const int> seeds, int rings);
/// Hop distance from the nearest seed, −1 where unreachable.
std::vector<int> graph_distance(const TriMesh& mesh, std::span<const int> seeds);

std::vector<Vec3> vertex_normals(const TriMesh& mesh);
std::vector<double> vertex_areas(const TriMesh& mesh);
double mean_edge_length(const TriMesh& mesh);

enum class LaplacianWeights { Uniform, Cotangent };

/// Row i computes (weighted mean of neighbors) − x_i. Uniform weights are 1/|N(i)|;
/// cotangent weights are normalized to sum to one per row, so both variants share
/// sign and scale. Throws MeshError naming isolated vertices.
SparseMatrix laplacian(const TriMesh& mesh, LaplacianWeights weights = LaplacianWeights::Uniform);

/// Positions as a V×3 matrix and back.
DenseColumns to_matrix(const std::vector<Vec3>& points);
std::vector<Vec3> from_matrix(const DenseColumns& m);

struct SubdivisionResult {
    TriMesh mesh;
    VertexRegion region;  // input region plus the inserted midpoints
};

/// Splits every face whose corners all lie in `region` 1→4 at edge midpoints.
/// Neighbouring faces that share a split edge are bisected so the result has no
/// T-junctions. Original vertices keep their indices; midpoints are appended.
SubdivisionResult midpoint_subdivide(const TriMesh& mesh, const VertexRegion& region);

struct BilateralParams {
    double sigma_center = 0.0;  // ≤ 0 selects the mean edge length of the region
    double sigma_normal = 0.35;
    int iterations = 3;
    int vertex_steps = 10;  // position updates per iteration
};

/// Two-step bilateral normal filter restricted to `region`: face normals touching
/// the region are filtered with spatial and normal-difference Gaussian weights,
/// then region vertices are moved to agree with the filtered normals. Vertices
/// outside the region are copied unchanged.
TriMesh bilateral_normal_filter(const TriMesh& mesh, const VertexRegion& region,
                                const BilateralParams& params = {});

/// Axis-aligned mirror plane {p : p[axis] = offset}.
struct MirrorPlane {
    int axis = 2;
    double offset = 0.0;

    Vec3 reflect(const Vec3& p) const;
    double signed_distance(const Vec3& p) const { return p[axis] - offset; }
};

struct WeldResult {
    TriMesh mesh;
    /// mirror_of[v] is the vertex at the reflected position of v.
    std::vector<int> mirror_of;
};

/// Joins `half` and its reflection along the single open boundary loop, which
/// must lie on the plane within 1e-6 × bbox diagonal. Boundary vertices are
/// snapped onto the plane and shared by both halves.
WeldResult mirror_weld(const TriMesh& half, const MirrorPlane& plane);

/// ASCII OBJ with `v`/`f` records, 1-based indices, 9 significant digits.
std::string to_obj(const TriMesh& mesh);
void save_obj(const TriMesh& mesh, const std::string& path);
TriMesh parse_obj(const std::string& text);
TriMesh load_obj(const std::string& path);

}  // namespace sketchmesh
