#include "sketchmesh/deform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "sketchmesh/bvh.hpp"
#include "sketchmesh/error.hpp"

namespace sketchmesh {

void HandleCurve::validate(std::size_t num_vertices) const {
    const auto n = static_cast<int>(num_vertices);
    std::vector<char> seen(num_vertices, 0);
    for (int v : vertex_ids) {
        if (v < 0 || v >= n) throw MeshError("handle vertex " + std::to_string(v) + " outside the mesh");
        if (seen[static_cast<std::size_t>(v)]) throw MeshError("handle vertex " + std::to_string(v) + " repeats");
        seen[static_cast<std::size_t>(v)] = 1;
    }
    for (int v : anchor_ids) {
        if (v < 0 || v >= n) throw MeshError("anchor vertex " + std::to_string(v) + " outside the mesh");
        if (seen[static_cast<std::size_t>(v)] == 1) {
            throw MeshError("vertex " + std::to_string(v) + " is both a handle and an anchor");
        }
        seen[static_cast<std::size_t>(v)] = 2;
    }
    if (!targets.empty() && targets.size() != vertex_ids.size()) {
        throw MeshError("handle has " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(vertex_ids.size()) + " vertices");
    }
}

HandleCurve bind_handle(const TriMesh& mesh, const Stroke& stroke, const BindParams& params) {
    if (mesh.empty()) throw MeshError("bind_handle: empty mesh");
    if (stroke.points.empty()) throw StrokeError("bind_handle: empty stroke");
    if (params.anchor_rings < 0) throw MeshError("bind_handle: anchor_rings must be >= 0");
    const double tolerance = params.snap_tolerance > 0.0 ? params.snap_tolerance : 0.02 * mesh.bbox_diagonal();
    const MeshBvh bvh(mesh);

    HandleCurve handle;
    for (std::size_t i = 0; i < stroke.points.size(); ++i) {
        const Vec3& p = stroke.points[i];
        const double distance = bvh.empty() ? 0.0 : bvh.closest_point(p).distance;
        if (!(distance <= tolerance)) {
            std::ostringstream msg;
            msg << "handle stroke point " << i << " is " << distance << " from the surface (tolerance " << tolerance
                << ")";
            throw StrokeError(msg.str());
        }
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
            const double d2 = (mesh.position(v) - p).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = v;
            }
        }
        if (!handle.vertex_ids.empty() && handle.vertex_ids.back() == best) continue;
        if (std::find(handle.vertex_ids.begin(), handle.vertex_ids.end(), best) != handle.vertex_ids.end()) {
            throw StrokeError("handle stroke point " + std::to_string(i) + " revisits vertex " + std::to_string(best));
        }
        handle.vertex_ids.push_back(best);
    }

    const auto hops = graph_distance(mesh, handle.vertex_ids);
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
        const int h = hops[static_cast<std::size_t>(v)];
        if (h > params.anchor_rings) handle.anchor_ids.push_back(v);
    }
    return handle;
}

DeformSystem prefactorize(const TriMesh& mesh, const HandleCurve& handle, const DeformParams& params) {
    handle.validate(mesh.num_vertices());
    if (!(params.lambda > 0.0) || !(params.handle_weight > 0.0)) {
        throw SolverError("prefactorize: lambda and handle weight must be positive");
    }
    DeformSystem sys;
    sys.num_vertices_ = mesh.num_vertices();
    sys.faces_ = mesh.faces();
    sys.handle_ids_ = handle.vertex_ids;
    sys.anchor_ids_ = handle.anchor_ids;
    std::sort(sys.anchor_ids_.begin(), sys.anchor_ids_.end());
    sys.anchor_ids_.erase(std::unique(sys.anchor_ids_.begin(), sys.anchor_ids_.end()), sys.anchor_ids_.end());
    sys.lambda_ = params.lambda;
    sys.handle_weight_ = params.handle_weight;
    sys.laplacian_ = laplacian(mesh);

    constexpr int kUnassigned = -2;
    sys.column_.assign(mesh.num_vertices(), kUnassigned);
    for (int v : sys.anchor_ids_) sys.column_[static_cast<std::size_t>(v)] = -1;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
        if (sys.column_[static_cast<std::size_t>(v)] == kUnassigned) {
            sys.column_[static_cast<std::size_t>(v)] = static_cast<int>(sys.free_.size());
            sys.free_.push_back(v);
        }
    }

    const SparseMatrix rows_of_l = sys.laplacian_.transpose();
    std::vector<Triplet> entries;
    int row = 0;
    for (int v : sys.free_) {
        for (SparseMatrix::InnerIterator it(rows_of_l, v); it; ++it) {
            const int c = sys.column_[static_cast<std::size_t>(it.row())];
            if (c >= 0) entries.emplace_back(row, c, params.lambda * it.value());
        }
        ++row;
    }
    const double wh = std::sqrt(params.handle_weight);
    for (int v : sys.handle_ids_) entries.emplace_back(row++, sys.column_[static_cast<std::size_t>(v)], wh);
    const SparseMatrix a = make_sparse(static_cast<std::size_t>(row), sys.free_.size(), entries);
    sys.factorization_ = factorize(a);
    return sys;
}

TriMesh DeformSystem::solve(const TriMesh& mesh, const HandleCurve& handle) const {
    if (!valid()) throw SolverError("deform: system was never factorized");
    if (mesh.num_vertices() != num_vertices_ || mesh.faces() != faces_) {
        throw SolverError("deform: system was built for a mesh with " + std::to_string(num_vertices_) +
                          " vertices and " + std::to_string(faces_.size()) + " faces, got " +
                          std::to_string(mesh.num_vertices()) + " and " + std::to_string(mesh.num_faces()));
    }
    std::vector<int> anchors = handle.anchor_ids;
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
    if (handle.vertex_ids != handle_ids_ || anchors != anchor_ids_) {
        throw SolverError("deform: system was built for a different handle");
    }
    if (handle.targets.size() != handle.vertex_ids.size()) {
        throw SolverError("deform: handle has " + std::to_string(handle.targets.size()) + " targets for " +
                          std::to_string(handle.vertex_ids.size()) + " vertices");
    }

    const DenseColumns rest = to_matrix(mesh.positions());
    const DenseColumns delta = laplacian_ * rest;
    const SparseMatrix rows_of_l = laplacian_.transpose();
    DenseColumns b = DenseColumns::Zero(static_cast<Eigen::Index>(free_.size() + handle_ids_.size()), 3);
    Eigen::Index row = 0;
    for (int v : free_) {
        Eigen::RowVector3d r = lambda_ * delta.row(v);
        for (SparseMatrix::InnerIterator it(rows_of_l, v); it; ++it) {
            if (column_[static_cast<std::size_t>(it.row())] < 0) r -= lambda_ * it.value() * rest.row(it.row());
        }
        b.row(row++) = r;
    }
    const double wh = std::sqrt(handle_weight_);
    for (const auto& t : handle.targets) b.row(row++) = wh * t.transpose();

    const DenseColumns x = factorization_.solve(b);
    std::vector<Vec3> out = mesh.positions();
    for (std::size_t i = 0; i < free_.size(); ++i) {
        out[static_cast<std::size_t>(free_[i])] = x.row(static_cast<Eigen::Index>(i)).transpose();
    }
    return mesh.with_positions(std::move(out));
}

bool PendingDeformSystem::ready() const {
    return future_.valid() && future_.wait_for(std::chrono::seconds(0)) == std::future_status::ready;
}

PendingDeformSystem prefactorize_async(TriMesh mesh, HandleCurve handle, const DeformParams& params) {
    auto future = std::async(std::launch::async, [mesh = std::move(mesh), handle = std::move(handle), params]() {
                      return prefactorize(mesh, handle, params);
                  }).share();
    return PendingDeformSystem(std::move(future));
}

TriMesh deform(const TriMesh& mesh, const HandleCurve& handle, const DeformSystem& system) {
    return system.solve(mesh, handle);
}

TriMesh deform(const TriMesh& mesh, const HandleCurve& handle, const PendingDeformSystem& pending,
               const DeformParams& params) {
    if (pending.ready()) return pending.get().solve(mesh, handle);
    return prefactorize(mesh, handle, params).solve(mesh, handle);
}

}  // namespace sketchmesh
