#include "sketchmesh/refine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "sketchmesh/bvh.hpp"
#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

std::vector<int> region_members(const TriMesh& mesh, const VertexRegion* region) {
    if (region) {
        for (int v : region->members) {
            if (v < 0 || v >= static_cast<int>(mesh.num_vertices())) {
                throw MeshError("region references vertex " + std::to_string(v) + " outside the mesh");
            }
        }
        return region->members;
    }
    return VertexRegion::all(mesh).members;
}

Vec3 clamp_to(const Box3& box, const Vec3& p) { return p.cwiseMax(box.min()).cwiseMin(box.max()); }

double resolve_tolerance(double requested, const TriMesh& mesh) {
    return requested > 0.0 ? requested : 0.02 * mesh.bbox_diagonal();
}

// Nearest corner of the face closest to p.
int nearest_vertex(const TriMesh& mesh, const MeshBvh& bvh, const Vec3& p, double tolerance, const char* what) {
    const SurfacePoint hit = bvh.closest_point(p);
    if (hit.face < 0 || hit.distance > tolerance) {
        std::ostringstream msg;
        msg << what << " point (" << p.x() << ", " << p.y() << ", " << p.z() << ") is " << hit.distance
            << " from the surface (tolerance " << tolerance << ")";
        throw StrokeError(msg.str());
    }
    const Face& f = mesh.face(hit.face);
    int best = f[0];
    for (int c : f) {
        if ((mesh.position(c) - hit.point).squaredNorm() < (mesh.position(best) - hit.point).squaredNorm()) best = c;
    }
    return best;
}

std::vector<int> shortest_path(const TriMesh& mesh, int from, int to) {
    std::vector<int> parent(mesh.num_vertices(), -2);
    std::deque<int> queue{from};
    parent[static_cast<std::size_t>(from)] = -1;
    while (!queue.empty() && parent[static_cast<std::size_t>(to)] == -2) {
        const int v = queue.front();
        queue.pop_front();
        for (int n : mesh.neighbors(v)) {
            if (parent[static_cast<std::size_t>(n)] == -2) {
                parent[static_cast<std::size_t>(n)] = v;
                queue.push_back(n);
            }
        }
    }
    if (parent[static_cast<std::size_t>(to)] == -2) throw StrokeError("region stroke spans disconnected parts of the mesh");
    std::vector<int> path;
    for (int v = to; v != -1; v = parent[static_cast<std::size_t>(v)]) path.push_back(v);
    return path;
}

struct EnclosedPatch {
    std::vector<int> boundary;  // vertices on the stroke loop
    std::vector<int> members;   // interior component plus boundary
};

EnclosedPatch enclosed_patch(const TriMesh& mesh, const std::vector<Vec3>& stroke, double tolerance) {
    const MeshBvh bvh(mesh);
    const double spacing = 0.5 * mean_edge_length(mesh);
    const double length = polyline_length(stroke) + (stroke.back() - stroke.front()).norm();
    std::vector<Vec3> loop = stroke;
    loop.push_back(stroke.front());
    const auto samples =
        resample_polyline(loop, std::max<std::size_t>(loop.size(), static_cast<std::size_t>(std::ceil(length / spacing)) + 1));

    std::vector<int> snapped;
    for (const auto& p : samples) {
        const int v = nearest_vertex(mesh, bvh, p, tolerance, "region stroke");
        if (snapped.empty() || snapped.back() != v) snapped.push_back(v);
    }
    std::vector<char> barrier(mesh.num_vertices(), 0);
    for (std::size_t i = 0; i < snapped.size(); ++i) {
        for (int v : shortest_path(mesh, snapped[i], snapped[(i + 1) % snapped.size()])) {
            barrier[static_cast<std::size_t>(v)] = 1;
        }
    }

    // Components of the mesh with the barrier removed.
    std::vector<int> comp(mesh.num_vertices(), -1);
    std::vector<std::size_t> sizes;
    for (int s = 0; s < static_cast<int>(mesh.num_vertices()); ++s) {
        if (barrier[static_cast<std::size_t>(s)] || comp[static_cast<std::size_t>(s)] >= 0) continue;
        const int id = static_cast<int>(sizes.size());
        std::size_t count = 0;
        std::deque<int> queue{s};
        comp[static_cast<std::size_t>(s)] = id;
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            ++count;
            for (int n : mesh.neighbors(v)) {
                if (!barrier[static_cast<std::size_t>(n)] && comp[static_cast<std::size_t>(n)] < 0) {
                    comp[static_cast<std::size_t>(n)] = id;
                    queue.push_back(n);
                }
            }
        }
        sizes.push_back(count);
    }
    if (sizes.size() < 2) throw StrokeError("region stroke does not enclose a patch of the surface");

    Vec3 centroid = Vec3::Zero();
    for (const auto& p : stroke) centroid += p;
    centroid /= static_cast<double>(stroke.size());
    const SurfacePoint centre = bvh.closest_point(centroid);
    int chosen = -1;
    for (int c : mesh.face(centre.face)) {
        if (!barrier[static_cast<std::size_t>(c)]) {
            chosen = comp[static_cast<std::size_t>(c)];
            break;
        }
    }
    if (chosen < 0) {
        chosen = static_cast<int>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
    }

    EnclosedPatch patch;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
        if (barrier[static_cast<std::size_t>(v)]) {
            patch.boundary.push_back(v);
            patch.members.push_back(v);
        } else if (comp[static_cast<std::size_t>(v)] == chosen) {
            patch.members.push_back(v);
        }
    }
    return patch;
}

double mean_region_edge(const TriMesh& mesh, const std::vector<int>& members) {
    const auto inside = VertexRegion{members, {}}.mask(mesh.num_vertices());
    double sum = 0.0;
    int count = 0;
    for (const auto& e : mesh.edges()) {
        if (inside[static_cast<std::size_t>(e[0])] && inside[static_cast<std::size_t>(e[1])]) {
            sum += (mesh.position(e[0]) - mesh.position(e[1])).norm();
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

// Piecewise-linear h(u), zero outside the profile's u-range.
class Profile {
public:
    explicit Profile(const std::vector<Vec2>& points) : pts_(points) {
        if (pts_.size() < 2) throw StrokeError("extrusion profile needs at least 2 points");
        if (pts_.front().x() > pts_.back().x()) std::reverse(pts_.begin(), pts_.end());
        for (std::size_t i = 1; i < pts_.size(); ++i) {
            if (!(pts_[i].x() >= pts_[i - 1].x())) {
                throw StrokeError("extrusion profile must be monotone along the view's right axis");
            }
        }
        if (!(pts_.back().x() > pts_.front().x())) throw StrokeError("extrusion profile has no horizontal extent");
        for (const auto& p : pts_) peak_ = std::max(peak_, std::abs(p.y()));
        if (peak_ > 0.0 && (std::abs(pts_.front().y()) > 0.1 * peak_ || std::abs(pts_.back().y()) > 0.1 * peak_)) {
            throw StrokeError("extrusion profile must rise from the region boundary: end heights " +
                              std::to_string(pts_.front().y()) + " and " + std::to_string(pts_.back().y()) +
                              " exceed 10% of the peak " + std::to_string(peak_));
        }
        for (std::size_t i = 1; i < pts_.size(); ++i) length_ += (pts_[i] - pts_[i - 1]).norm();
    }

    double peak() const { return peak_; }
    double length() const { return length_; }

    double height(double u) const {
        if (u < pts_.front().x() || u > pts_.back().x()) return 0.0;
        auto it = std::upper_bound(pts_.begin(), pts_.end(), u, [](double x, const Vec2& p) { return x < p.x(); });
        if (it == pts_.end()) return pts_.back().y();
        const Vec2& b = *it;
        const Vec2& a = *(it - 1);
        const double span = b.x() - a.x();
        if (span <= 0.0) return b.y();
        const double t = (u - a.x()) / span;
        return a.y() + t * (b.y() - a.y());
    }

private:
    std::vector<Vec2> pts_;
    double peak_ = 0.0;
    double length_ = 0.0;
};

}  // namespace

void ProjectionSchedule::validate() const {
    if (iterations < 0) throw FieldError("projection iterations must be >= 0");
    if (!(step0 > 0.0) || !std::isfinite(step0)) throw FieldError("projection step0 must be positive");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw FieldError("projection ratio must lie in (0, 1]");
    if (!(alpha > 0.0 && alpha < 1.0)) throw FieldError("projection alpha must lie in (0, 1)");
    if (!(dead_zone >= 0.0)) throw FieldError("projection dead zone must be >= 0");
}

namespace {

// Shared walk over `members`; `directions_for` supplies the directions for an iteration.
template <typename Directions>
ProjectionResult walk(std::vector<Vec3> points, const std::vector<int>& members, const OccupancyField& field,
                      const ProjectionSchedule& schedule, bool record_trace, Directions&& directions_for) {
    schedule.validate();
    const Box3 domain = field.bbox();
    const double direction = schedule.sign == ProjectionSign::TowardSurface ? 1.0 : -1.0;

    ProjectionResult result;
    result.targets = std::move(points);
    auto& x = result.targets;
    std::vector<double> step(members.size(), schedule.step0);
    std::vector<int> last_sign(members.size(), 0);

    for (int k = 0; k < schedule.iterations; ++k) {
        const std::vector<Vec3>& dirs = directions_for(k, x);
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto v = static_cast<std::size_t>(members[i]);
            const Vec3 q = clamp_to(domain, x[v]);
            if (q != x[v]) ++result.clamped_queries;
            const double diff = field.eval(q) - schedule.alpha;
            const int s = std::abs(diff) <= schedule.dead_zone ? 0 : (diff > 0.0 ? 1 : -1);
            if (s * last_sign[i] < 0) step[i] *= schedule.ratio;
            if (s != 0) last_sign[i] = s;
            x[v] += (direction * step[i] * s) * dirs[v];
        }
        if (record_trace) result.trace.push_back(x);
    }
    if (result.clamped_queries > 0) {
        warn("projection: " + std::to_string(result.clamped_queries) +
             " field queries fell outside the field domain and were clamped");
    }
    return result;
}

}  // namespace

ProjectionResult project_points(std::vector<Vec3> points, std::span<const Vec3> directions,
                                const OccupancyField& field, const ProjectionSchedule& schedule, bool record_trace) {
    if (directions.size() != points.size()) {
        throw FieldError("project_points: " + std::to_string(directions.size()) + " directions for " +
                         std::to_string(points.size()) + " points");
    }
    std::vector<int> members(points.size());
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = static_cast<int>(i);
    const std::vector<Vec3> dirs(directions.begin(), directions.end());
    return walk(std::move(points), members, field, schedule, record_trace,
                [&](int, const std::vector<Vec3>&) -> const std::vector<Vec3>& { return dirs; });
}

ProjectionResult project_to_isosurface(const TriMesh& mesh, const OccupancyField& field,
                                       const ProjectionSchedule& schedule, const VertexRegion* region,
                                       bool record_trace) {
    const auto members = region_members(mesh, region);
    std::vector<Vec3> normals = vertex_normals(mesh);
    return walk(mesh.positions(), members, field, schedule, record_trace,
                [&](int k, const std::vector<Vec3>& x) -> const std::vector<Vec3>& {
                    if (k > 0 && schedule.recompute_normals) normals = vertex_normals(mesh.with_positions(x));
                    return normals;
                });
}

TriMesh fit_with_smoothness(const TriMesh& mesh, const std::vector<Vec3>& targets, const FitParams& params,
                            const VertexRegion* region) {
    if (targets.size() != mesh.num_vertices()) {
        throw MeshError("fit_with_smoothness: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(mesh.num_vertices()) + " vertices");
    }
    if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda)) {
        throw SolverError("fit_with_smoothness: lambda must be finite and >= 0");
    }
    const auto members = region_members(mesh, region);
    std::vector<Vec3> out = mesh.positions();
    if (members.empty()) return mesh;

    std::vector<int> column(mesh.num_vertices(), -1);
    for (std::size_t i = 0; i < members.size(); ++i) column[static_cast<std::size_t>(members[i])] = static_cast<int>(i);
    const auto n = static_cast<int>(members.size());

    std::vector<Triplet> entries;
    DenseColumns b;
    int rows = 0;
    if (params.lambda > 0.0) {
        const double w = std::sqrt(params.lambda);
        const SparseMatrix l = laplacian(mesh, params.weights);
        const SparseMatrix lr = l.transpose();  // column i of lr is row i of L
        b = DenseColumns::Zero(2 * n, 3);
        for (int i = 0; i < n; ++i) {
            for (SparseMatrix::InnerIterator it(lr, members[static_cast<std::size_t>(i)]); it; ++it) {
                const int c = column[static_cast<std::size_t>(it.row())];
                if (c >= 0) {
                    entries.emplace_back(rows, c, w * it.value());
                } else {
                    b.row(rows) -= w * it.value() * mesh.position(static_cast<int>(it.row())).transpose();
                }
            }
            ++rows;
        }
    } else {
        b = DenseColumns::Zero(n, 3);
    }
    for (int i = 0; i < n; ++i) {
        entries.emplace_back(rows, i, 1.0);
        b.row(rows) = targets[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])].transpose();
        ++rows;
    }
    const SparseMatrix a = make_sparse(static_cast<std::size_t>(rows), static_cast<std::size_t>(n), entries);
    const DenseColumns x = least_squares(a, b);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] = x.row(i).transpose();
    return mesh.with_positions(std::move(out));
}

TriMesh refine_coarse(const TriMesh& mesh, const OccupancyField& field, const RefineParams& params) {
    if (params.outer_rounds < 1) throw FieldError("refine_coarse: outer_rounds must be >= 1");
    TriMesh current = mesh;
    for (int round = 0; round < params.outer_rounds; ++round) {
        const auto projected = project_to_isosurface(current, field, params.schedule);
        current = fit_with_smoothness(current, projected.targets, FitParams{params.lambda, LaplacianWeights::Uniform});
    }
    return current;
}

CarveResult carve_details(const TriMesh& mesh, const std::vector<Stroke>& strokes, const OccupancyField& field,
                          const CarveParams& params) {
    if (params.ring_k < 0) throw MeshError("carve_details: ring_k must be >= 0");
    params.schedule.validate();
    if (strokes.empty()) return {mesh, VertexRegion{}, {}};

    const MeshBvh bvh(mesh);
    const double tolerance = resolve_tolerance(params.snap_tolerance, mesh);
    const double spacing = 0.5 * mean_edge_length(mesh);
    std::vector<int> seeds;
    for (const auto& stroke : strokes) {
        if (stroke.points.empty()) throw StrokeError("carve_details: empty stroke");
        const double length = polyline_length(stroke.points);
        const auto count = std::max<std::size_t>(stroke.points.size(),
                                                 static_cast<std::size_t>(std::ceil(length / spacing)) + 1);
        const auto samples = stroke.points.size() == 1 ? stroke.points : resample_polyline(stroke.points, count);
        for (const auto& p : samples) {
            const SurfacePoint hit = bvh.closest_point(p);
            if (hit.face < 0 || hit.distance > tolerance) {
                std::ostringstream msg;
                msg << "carve_details: stroke point (" << p.x() << ", " << p.y() << ", " << p.z() << ") is "
                    << hit.distance << " from the surface (tolerance " << tolerance << ")";
                throw StrokeError(msg.str());
            }
            for (int c : mesh.face(hit.face)) seeds.push_back(c);
        }
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

    const auto initial = VertexRegion::from_members(mesh, k_ring(mesh, seeds, params.ring_k));
    auto [subdivided, region] = midpoint_subdivide(mesh, initial);

    const auto projected = project_to_isosurface(subdivided, field, params.schedule, &region);
    TriMesh fitted = fit_with_smoothness(subdivided, projected.targets, FitParams{params.lambda}, &region);

    std::vector<int> band;
    const auto inside = region.mask(fitted.num_vertices());
    for (int v : k_ring(fitted, region.members, 1)) {
        if (!inside[static_cast<std::size_t>(v)]) band.push_back(v);
    }
    if (!band.empty()) {
        fitted = bilateral_normal_filter(fitted, VertexRegion::from_members(fitted, band), params.filter);
    }
    return {std::move(fitted), std::move(region), std::move(band)};
}

ExtrudeResult extrude(const TriMesh& mesh, const std::vector<Vec3>& region_stroke, const std::vector<Vec2>& profile,
                      const ViewFrame& view, const ExtrudeParams& params) {
    if (region_stroke.size() < 3) throw StrokeError("extrude: region stroke needs at least 3 points");
    const Profile shape(profile);
    if (shape.peak() == 0.0) return {mesh, VertexRegion{}};
    if (!(view.right.norm() > 0.0)) throw StrokeError("extrude: view right axis is zero");

    const double tolerance = resolve_tolerance(params.snap_tolerance, mesh);
    TriMesh current = mesh;
    EnclosedPatch patch = enclosed_patch(current, region_stroke, tolerance);
    for (int i = 0; i < params.max_subdivisions; ++i) {
        if (!(mean_region_edge(current, patch.members) > shape.length() / 16.0)) break;
        const auto grown = VertexRegion::from_members(current, k_ring(current, patch.members, 1));
        current = midpoint_subdivide(current, grown).mesh;
        patch = enclosed_patch(current, region_stroke, tolerance);
    }

    const auto normals = vertex_normals(current);
    const auto areas = vertex_areas(current);
    Vec3 axis = Vec3::Zero();
    for (int v : patch.members) axis += areas[static_cast<std::size_t>(v)] * normals[static_cast<std::size_t>(v)];
    if (!(axis.norm() > 0.0)) throw MeshError("extrude: enclosed patch has no mean normal");
    axis.normalize();
    const Vec3 right = view.right.normalized();

    const auto hops = graph_distance(current, patch.boundary);
    std::vector<Vec3> positions = current.positions();
    for (int v : patch.members) {
        const auto i = static_cast<std::size_t>(v);
        const double blend = std::min(1.0, 0.5 * std::max(0, hops[i]));
        positions[i] += blend * shape.height(positions[i].dot(right)) * axis;
    }
    TriMesh out = current.with_positions(std::move(positions));
    auto region = VertexRegion::from_members(out, patch.members);
    return {std::move(out), std::move(region)};
}

}  // namespace sketchmesh
