#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchmesh/bvh.hpp"
#include "sketchmesh/mesh.hpp"
#include "sketchmesh/stroke.hpp"

namespace sketchmesh {

/// Occupancy function p → [0, 1]: 1 inside, 0 outside, surface at 0.5.
/// Implementations are immutable and safe to evaluate from many threads.
class OccupancyField {
public:
    virtual ~OccupancyField() = default;
    virtual double eval(const Vec3& p) const = 0;
    /// Domain on which eval is defined; callers clamp queries into it.
    virtual Box3 bbox() const = 0;
};

using FieldPtr = std::shared_ptr<const OccupancyField>;

/// Maps a signed distance (negative inside) to occupancy: clamp(0.5 − d/w, 0, 1).
double occupancy_from_distance(double sdf, double falloff);

/// Signed-distance expression tree for analytic fields.
class Sdf {
public:
    enum class Kind { Sphere, Ellipsoid, Capsule, Union, Subtract };
    using Ptr = std::shared_ptr<const Sdf>;

    static Ptr sphere(const Vec3& center, double radius);
    /// Uses the usual first-order ellipsoid bound, exact on the zero set.
    static Ptr ellipsoid(const Vec3& center, const Vec3& radii);
    static Ptr capsule(const Vec3& a, const Vec3& b, double radius);
    /// Polynomial smooth minimum with blend radius k; k = 0 is the plain minimum.
    static Ptr smooth_union(Ptr lhs, Ptr rhs, double k = 0.0);
    /// Removes `cut` from `base` with blend radius k.
    static Ptr smooth_subtract(Ptr base, Ptr cut, double k = 0.0);

    double distance(const Vec3& p) const;
    Box3 bounds() const;
    Kind kind() const { return kind_; }

    nlohmann::json to_json() const;
    static Ptr from_json(const nlohmann::json& j);

private:
    Kind kind_ = Kind::Sphere;
    Vec3 a_ = Vec3::Zero();  // center, or capsule start
    Vec3 b_ = Vec3::Zero();  // radii, or capsule end
    double radius_ = 0.0;
    double k_ = 0.0;
    Ptr lhs_, rhs_;
};

class AnalyticField final : public OccupancyField {
public:
    /// `falloff` ≤ 0 selects 0.02 × the diagonal of the shape bounds. The
    /// domain is the shape bounds grown by 25% of their diagonal on each side.
    explicit AnalyticField(Sdf::Ptr shape, double falloff = 0.0);

    double eval(const Vec3& p) const override;
    Box3 bbox() const override { return bbox_; }
    double falloff() const { return falloff_; }
    const Sdf::Ptr& shape() const { return shape_; }

    /// {"shape": <sdf>, "falloff": w}; falloff optional.
    nlohmann::json to_json() const;
    static std::shared_ptr<const AnalyticField> from_json(const nlohmann::json& j);

private:
    Sdf::Ptr shape_;
    double falloff_;
    Box3 bbox_;
};

/// Dense node-sampled occupancy with trilinear interpolation. Node values are
/// reproduced exactly; queries outside the box are clamped onto it.
class GridField final : public OccupancyField {
public:
    GridField(std::array<int, 3> dims, const Box3& box, std::vector<float> values);

    double eval(const Vec3& p) const override;
    Box3 bbox() const override { return bbox_; }

    const std::array<int, 3>& dims() const { return dims_; }
    const std::vector<float>& values() const { return values_; }
    float at(int i, int j, int k) const;
    Vec3 node(int i, int j, int k) const;

private:
    std::array<int, 3> dims_;
    Box3 bbox_;
    std::vector<float> values_;  // x fastest
};

/// Samples `field` at the nodes of a dims grid spanning `box`.
GridField bake_grid(const OccupancyField& field, std::array<int, 3> dims, const Box3& box);

/// Little-endian "SMGF" grid file, version 1.
void save_grid(const GridField& grid, const std::string& path);
GridField load_grid(const std::string& path);
std::string encode_grid(const GridField& grid);
GridField decode_grid(const std::string& bytes);

/// Occupancy derived from a closed mesh: inside/outside by ray-crossing parity,
/// magnitude from the distance to the surface.
class MeshField final : public OccupancyField {
public:
    /// Throws FieldError when the mesh is not watertight. `falloff` ≤ 0 selects
    /// 0.02 × bbox diagonal. The domain is the mesh bbox grown by 10%.
    explicit MeshField(TriMesh mesh, double falloff = 0.0);

    double eval(const Vec3& p) const override;
    Box3 bbox() const override { return bbox_; }
    bool inside(const Vec3& p) const;
    double signed_distance(const Vec3& p) const;
    const TriMesh& mesh() const { return mesh_; }

    /// Direction of the parity ray; skewed so it avoids mesh edges in practice.
    static Vec3 parity_direction();

private:
    TriMesh mesh_;
    MeshBvh bvh_;
    double falloff_;
    Box3 bbox_;
};

std::shared_ptr<const MeshField> mesh_to_field(const TriMesh& mesh, double falloff = 0.0);

class CompositeField final : public OccupancyField {
public:
    enum class Op { Union, Intersect, Subtract };
    CompositeField(Op op, FieldPtr lhs, FieldPtr rhs);

    double eval(const Vec3& p) const override;
    Box3 bbox() const override { return bbox_; }

private:
    Op op_;
    FieldPtr lhs_, rhs_;
    Box3 bbox_;
};

struct VoxelGrid {
    int resolution = 0;
    Box3 bbox;  // cubic
    std::vector<std::uint8_t> occupied;  // resolution³, x fastest

    std::size_t count() const;
    bool at(int i, int j, int k) const;
};

inline constexpr int kVoxelResolution = 128;
inline constexpr std::size_t kStrokeSamples = 3000;

/// Samples kStrokeSamples points uniformly by arc length over all strokes
/// (split in proportion to stroke length) and marks the voxels containing them.
/// Without `box`, the grid is the cube around the strokes' bbox with a 10% margin.
VoxelGrid voxelize_strokes(const std::vector<Stroke>& strokes, int resolution = kVoxelResolution,
                           std::optional<Box3> box = std::nullopt);

struct LabeledPoints {
    std::vector<Vec3> points;
    std::vector<std::uint8_t> inside;  // 1 when occupancy ≥ alpha
    std::size_t near_count = 0;        // the first near_count points are near-surface
    std::size_t uniform_count = 0;
};

struct SampleParams {
    std::size_t count = 60000;
    double near_fraction = 0.9;
    double near_sigma = 0.01;  // Gaussian offset, in units of the bbox diagonal
    double alpha = 0.5;
    std::uint64_t seed = 0;
};

/// Near-surface samples (area-weighted surface points plus an isotropic
/// Gaussian offset) followed by uniform samples in the field's domain, labeled
/// through a MeshField.
LabeledPoints sample_points(const TriMesh& mesh, const SampleParams& params = {});

}  // namespace sketchmesh
