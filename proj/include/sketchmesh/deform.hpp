#pragma once

#include <future>
#include <vector>

#include "sketchmesh/linsolve.hpp"
#include "sketchmesh/mesh.hpp"
#include "sketchmesh/stroke.hpp"

namespace sketchmesh {

/// On-surface control curve: ordered handle vertices, optional targets (one per
/// handle vertex), and anchors held fixed during deformation.
struct HandleCurve {
    std::vector<int> vertex_ids;
    std::vector<Vec3> targets;  // empty until the handle is dragged
    std::vector<int> anchor_ids;  // ascending

    /// Throws MeshError when ids repeat, are out of range, overlap the anchors,
    /// or when targets are set with the wrong length.
    void validate(std::size_t num_vertices) const;
};

struct BindParams {
    double snap_tolerance = 0.0;  // ≤ 0 selects 2% of the mesh bbox diagonal
    int anchor_rings = 10;        // anchors: graph distance > anchor_rings
};

/// Snaps each stroke point to its nearest vertex (ties go to the lower index)
/// and collapses consecutive repeats. A vertex revisited later in the stroke is
/// an error.
HandleCurve bind_handle(const TriMesh& mesh, const Stroke& stroke, const BindParams& params = {});

struct DeformParams {
    double lambda = 1.0;          // weight of the Laplacian rows
    double handle_weight = 10.0;  // w_h on the squared handle residual
};

/// Pre-decomposed Laplacian-editing system for one (mesh, handle, anchors)
/// combination; reusable for any target update.
class DeformSystem {
public:
    DeformSystem() = default;

    bool valid() const { return factorization_.valid(); }
    std::size_t num_vertices() const { return num_vertices_; }

    /// Solves for new positions; anchors are copied bitwise.
    TriMesh solve(const TriMesh& mesh, const HandleCurve& handle) const;

private:
    friend DeformSystem prefactorize(const TriMesh& mesh, const HandleCurve& handle, const DeformParams& params);

    std::size_t num_vertices_ = 0;
    std::vector<Face> faces_;
    std::vector<int> handle_ids_;
    std::vector<int> anchor_ids_;
    std::vector<int> column_;  // vertex → unknown index, −1 for anchors
    std::vector<int> free_;    // unknown index → vertex
    SparseMatrix laplacian_;
    double lambda_ = 1.0;
    double handle_weight_ = 10.0;
    Factorization factorization_;
};

/// Builds and factorizes the system: λ·L rows for every free vertex targeting
/// the rest-pose differential coordinates, √w_h rows for the handle vertices,
/// anchors eliminated as fixed values.
DeformSystem prefactorize(const TriMesh& mesh, const HandleCurve& handle, const DeformParams& params = {});

class PendingDeformSystem {
public:
    PendingDeformSystem() = default;
    explicit PendingDeformSystem(std::shared_future<DeformSystem> future) : future_(std::move(future)) {}

    bool valid() const { return future_.valid(); }
    bool ready() const;
    const DeformSystem& get() const { return future_.get(); }

private:
    std::shared_future<DeformSystem> future_;
};

/// Runs prefactorize on a background thread with copies of its inputs.
PendingDeformSystem prefactorize_async(TriMesh mesh, HandleCurve handle, const DeformParams& params = {});

/// Deforms with a prepared system. Throws SolverError when the system was built
/// for a different mesh or handle.
TriMesh deform(const TriMesh& mesh, const HandleCurve& handle, const DeformSystem& system);

/// Uses the background system when it has finished, otherwise solves afresh.
TriMesh deform(const TriMesh& mesh, const HandleCurve& handle, const PendingDeformSystem& pending,
               const DeformParams& params = {});

}  // namespace sketchmesh
