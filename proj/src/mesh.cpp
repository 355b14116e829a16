#include "sketchmesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

constexpr double kZeroAreaFactor = 1e-12;

std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

std::string list_indices(const std::vector<int>& ids, std::size_t limit = 8) {
    std::ostringstream out;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (i) out << ", ";
        out << ids[i];
    }
    if (ids.size() > limit) out << ", ... (" << ids.size() << " total)";
    return out.str();
}

Box3 bbox_of(const std::vector<Vec3>& pts) {
    Box3 box;
    for (const auto& p : pts) box.extend(p);
    return box;
}

}  // namespace

// ---------------------------------------------------------------------------
// TriMesh

TriMesh::TriMesh(std::vector<Vec3> positions, std::vector<Face> faces)
    : positions_(std::move(positions)), faces_(std::move(faces)) {
    const int nv = static_cast<int>(positions_.size());
    std::vector<std::uint64_t> directed;
    directed.reserve(faces_.size() * 3);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const auto& t = faces_[f];
        for (int k = 0; k < 3; ++k) {
            if (t[k] < 0 || t[k] >= nv) {
                throw MeshError("face " + std::to_string(f) + " references vertex " +
                                std::to_string(t[k]) + " out of range [0, " +
                                std::to_string(nv) + ")");
            }
        }
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            throw MeshError("face " + std::to_string(f) + " repeats a vertex");
        }
        for (int k = 0; k < 3; ++k) directed.push_back(edge_key(t[k], t[(k + 1) % 3]));
    }
    std::sort(directed.begin(), directed.end());
    const auto dup = std::adjacent_find(directed.begin(), directed.end());
    if (dup != directed.end()) {
        const int a = static_cast<int>(*dup >> 32);
        const int b = static_cast<int>(*dup & 0xffffffffu);
        throw MeshError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") is traversed twice in the same direction: non-manifold or "
                        "inconsistently oriented");
    }
    build_adjacency();
    check_face_areas();
}

TriMesh TriMesh::with_positions(std::vector<Vec3> positions) const {
    if (positions.size() != positions_.size()) {
        throw MeshError("with_positions: expected " + std::to_string(positions_.size()) +
                        " positions, got " + std::to_string(positions.size()));
    }
    TriMesh out;
    out.positions_ = std::move(positions);
    out.faces_ = faces_;
    out.nbr_offsets_ = nbr_offsets_;
    out.nbr_ = nbr_;
    out.vf_offsets_ = vf_offsets_;
    out.vf_ = vf_;
    out.check_face_areas();
    return out;
}

void TriMesh::build_adjacency() {
    const std::size_t nv = positions_.size();
    std::vector<std::vector<int>> nbrs(nv), vfs(nv);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const auto& t = faces_[f];
        for (int k = 0; k < 3; ++k) {
            const auto a = static_cast<std::size_t>(t[k]);
            nbrs[a].push_back(t[(k + 1) % 3]);
            nbrs[a].push_back(t[(k + 2) % 3]);
            vfs[a].push_back(static_cast<int>(f));
        }
    }
    nbr_offsets_.assign(nv + 1, 0);
    vf_offsets_.assign(nv + 1, 0);
    nbr_.clear();
    vf_.clear();
    for (std::size_t v = 0; v < nv; ++v) {
        auto& n = nbrs[v];
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
        nbr_.insert(nbr_.end(), n.begin(), n.end());
        vf_.insert(vf_.end(), vfs[v].begin(), vfs[v].end());
        nbr_offsets_[v + 1] = static_cast<int>(nbr_.size());
        vf_offsets_[v + 1] = static_cast<int>(vf_.size());
    }
}

void TriMesh::check_face_areas() const {
    if (faces_.empty()) return;
    const double diag = bbox_diagonal();
    const double threshold = kZeroAreaFactor * diag * diag;
    std::vector<int> degenerate;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        const double area = face_area(static_cast<int>(f));
        if (!(area > threshold)) degenerate.push_back(static_cast<int>(f));
    }
    if (!degenerate.empty()) {
        throw MeshError("zero-area faces: " + list_indices(degenerate));
    }
}

std::span<const int> TriMesh::neighbors(int v) const {
    const auto i = static_cast<std::size_t>(v);
    return {nbr_.data() + nbr_offsets_[i], nbr_.data() + nbr_offsets_[i + 1]};
}

std::span<const int> TriMesh::incident_faces(int v) const {
    const auto i = static_cast<std::size_t>(v);
    return {vf_.data() + vf_offsets_[i], vf_.data() + vf_offsets_[i + 1]};
}

Box3 TriMesh::bbox() const { return bbox_of(positions_); }

double TriMesh::bbox_diagonal() const {
    if (positions_.empty()) return 0.0;
    return bbox().diagonal().norm();
}

std::vector<std::array<int, 2>> TriMesh::edges() const {
    std::vector<std::array<int, 2>> out;
    for (std::size_t v = 0; v < positions_.size(); ++v) {
        for (int n : neighbors(static_cast<int>(v))) {
            if (static_cast<int>(v) < n) out.push_back({static_cast<int>(v), n});
        }
    }
    return out;
}

std::vector<std::vector<int>> TriMesh::boundary_loops() const {
    std::vector<std::uint64_t> directed;
    directed.reserve(faces_.size() * 3);
    for (const auto& t : faces_) {
        for (int k = 0; k < 3; ++k) directed.push_back(edge_key(t[k], t[(k + 1) % 3]));
    }
    std::sort(directed.begin(), directed.end());
    std::map<int, std::vector<int>> next;  // ordered for deterministic traversal
    for (const auto& t : faces_) {
        for (int k = 0; k < 3; ++k) {
            const int a = t[k];
            const int b = t[(k + 1) % 3];
            if (!std::binary_search(directed.begin(), directed.end(), edge_key(b, a))) {
                next[a].push_back(b);
            }
        }
    }
    std::vector<std::vector<int>> loops;
    while (!next.empty()) {
        const int start = next.begin()->first;
        std::vector<int> loop;
        int cur = start;
        while (true) {
            auto it = next.find(cur);
            if (it == next.end()) break;
            loop.push_back(cur);
            const int nxt = it->second.back();
            it->second.pop_back();
            if (it->second.empty()) next.erase(it);
            cur = nxt;
            if (cur == start) break;
        }
        loops.push_back(std::move(loop));
    }
    return loops;
}

bool TriMesh::is_watertight() const { return !faces_.empty() && boundary_loops().empty(); }

Vec3 TriMesh::face_normal(int f) const {
    const auto& t = face(f);
    const Vec3 n = (position(t[1]) - position(t[0])).cross(position(t[2]) - position(t[0]));
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
}

double TriMesh::face_area(int f) const {
    const auto& t = face(f);
    return 0.5 * (position(t[1]) - position(t[0])).cross(position(t[2]) - position(t[0])).norm();
}

Vec3 TriMesh::face_centroid(int f) const {
    const auto& t = face(f);
    return (position(t[0]) + position(t[1]) + position(t[2])) / 3.0;
}

bool operator==(const TriMesh& a, const TriMesh& b) {
    if (a.positions_.size() != b.positions_.size() || a.faces_ != b.faces_) return false;
    return a.positions_.empty() ||
           std::memcmp(a.positions_.data(), b.positions_.data(),
                       a.positions_.size() * sizeof(Vec3)) == 0;
}

// ---------------------------------------------------------------------------
// VertexRegion

VertexRegion VertexRegion::from_members(const TriMesh& mesh, std::vector<int> members) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    const int nv = static_cast<int>(mesh.num_vertices());
    if (!members.empty() && (members.front() < 0 || members.back() >= nv)) {
        throw MeshError("region references vertices outside the mesh");
    }
    VertexRegion region;
    region.members = std::move(members);
    const auto inside = region.mask(mesh.num_vertices());
    for (int v : region.members) {
        for (int n : mesh.neighbors(v)) {
            if (!inside[static_cast<std::size_t>(n)]) {
                region.boundary_ring.push_back(v);
                break;
            }
        }
    }
    return region;
}

VertexRegion VertexRegion::all(const TriMesh& mesh) {
    std::vector<int> ids(mesh.num_vertices());
    std::iota(ids.begin(), ids.end(), 0);
    VertexRegion region;
    region.members = std::move(ids);
    return region;
}

bool VertexRegion::contains(int v) const {
    return std::binary_search(members.begin(), members.end(), v);
}

std::vector<char> VertexRegion::mask(std::size_t num_vertices) const {
    std::vector<char> m(num_vertices, 0);
    for (int v : members) m[static_cast<std::size_t>(v)] = 1;
    return m;
}

std::vector<int> graph_distance(const TriMesh& mesh, std::span<const int> seeds) {
    std::vector<int> dist(mesh.num_vertices(), -1);
    std::queue<int> queue;
    for (int s : seeds) {
        if (dist[static_cast<std::size_t>(s)] != 0) {
            dist[static_cast<std::size_t>(s)] = 0;
            queue.push(s);
        }
    }
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop();
        for (int n : mesh.neighbors(v)) {
            auto& d = dist[static_cast<std::size_t>(n)];
            if (d < 0) {
                d = dist[static_cast<std::size_t>(v)] + 1;
                queue.push(n);
            }
        }
    }
    return dist;
}

std::vector<int> k_ring(const TriMesh& mesh, std::span<const int> seeds, int rings) {
    const auto dist = graph_distance(mesh, seeds);
    std::vector<int> out;
    for (std::size_t v = 0; v < dist.size(); ++v) {
        if (dist[v] >= 0 && dist[v] <= rings) out.push_back(static_cast<int>(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differential quantities

std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
    std::vector<Vec3> normals(mesh.num_vertices(), Vec3::Zero());
    for (const auto& t : mesh.faces()) {
        // Unnormalized cross product: length is twice the face area.
        const Vec3 n = (mesh.position(t[1]) - mesh.position(t[0]))
                           .cross(mesh.position(t[2]) - mesh.position(t[0]));
        for (int v : t) normals[static_cast<std::size_t>(v)] += n;
    }
    std::vector<int> isolated;
    for (std::size_t v = 0; v < normals.size(); ++v) {
        const double len = normals[v].norm();
        if (len > 0.0) {
            normals[v] /= len;
        } else {
            normals[v] = Vec3(0.0, 0.0, 1.0);
            isolated.push_back(static_cast<int>(v));
        }
    }
    if (!isolated.empty()) {
        warn("vertex_normals: no incident area at vertices " + list_indices(isolated) +
             "; using (0, 0, 1)");
    }
    return normals;
}

std::vector<double> vertex_areas(const TriMesh& mesh) {
    std::vector<double> areas(mesh.num_vertices(), 0.0);
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const double third = mesh.face_area(static_cast<int>(f)) / 3.0;
        for (int v : mesh.face(static_cast<int>(f))) areas[static_cast<std::size_t>(v)] += third;
    }
    return areas;
}

double mean_edge_length(const TriMesh& mesh) {
    const auto edges = mesh.edges();
    if (edges.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& e : edges) sum += (mesh.position(e[0]) - mesh.position(e[1])).norm();
    return sum / static_cast<double>(edges.size());
}

SparseMatrix laplacian(const TriMesh& mesh, LaplacianWeights weights) {
    const std::size_t nv = mesh.num_vertices();
    std::vector<int> isolated;
    for (std::size_t v = 0; v < nv; ++v) {
        if (mesh.neighbors(static_cast<int>(v)).empty()) isolated.push_back(static_cast<int>(v));
    }
    if (!isolated.empty()) {
        throw MeshError("laplacian: isolated vertices " + list_indices(isolated));
    }

    std::vector<Triplet> entries;
    entries.reserve(nv * 7);
    if (weights == LaplacianWeights::Uniform) {
        for (std::size_t v = 0; v < nv; ++v) {
            const auto nbrs = mesh.neighbors(static_cast<int>(v));
            const double w = 1.0 / static_cast<double>(nbrs.size());
            const int row = static_cast<int>(v);
            entries.emplace_back(row, row, -1.0);
            for (int n : nbrs) entries.emplace_back(row, n, w);
        }
        return make_sparse(nv, nv, entries);
    }

    // Cotangent weights accumulated per directed pair, then row-normalized.
    std::vector<std::unordered_map<int, double>> cot(nv);
    for (const auto& t : mesh.faces()) {
        for (int k = 0; k < 3; ++k) {
            const int i = t[k];
            const int j = t[(k + 1) % 3];
            const int o = t[(k + 2) % 3];
            const Vec3 u = mesh.position(i) - mesh.position(o);
            const Vec3 w = mesh.position(j) - mesh.position(o);
            const double c = u.dot(w) / u.cross(w).norm();
            cot[static_cast<std::size_t>(i)][j] += 0.5 * c;
            cot[static_cast<std::size_t>(j)][i] += 0.5 * c;
        }
    }
    for (std::size_t v = 0; v < nv; ++v) {
        const auto nbrs = mesh.neighbors(static_cast<int>(v));
        const int row = static_cast<int>(v);
        double total = 0.0;
        for (int n : nbrs) total += cot[v][n];
        entries.emplace_back(row, row, -1.0);
        if (total > 1e-12) {
            for (int n : nbrs) entries.emplace_back(row, n, cot[v][n] / total);
        } else {
            // Obtuse fans can cancel out; fall back to uniform for that row.
            for (int n : nbrs) entries.emplace_back(row, n, 1.0 / static_cast<double>(nbrs.size()));
        }
    }
    return make_sparse(nv, nv, entries);
}

DenseColumns to_matrix(const std::vector<Vec3>& points) {
    DenseColumns m(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
    return m;
}

std::vector<Vec3> from_matrix(const DenseColumns& m) {
    std::vector<Vec3> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Subdivision

SubdivisionResult midpoint_subdivide(const TriMesh& mesh, const VertexRegion& region) {
    if (region.empty()) return {mesh, region};
    const auto inside = region.mask(mesh.num_vertices());
    const auto is_full = [&](const Face& t) {
        return inside[static_cast<std::size_t>(t[0])] && inside[static_cast<std::size_t>(t[1])] &&
               inside[static_cast<std::size_t>(t[2])];
    };

    std::vector<Vec3> positions = mesh.positions();
    std::unordered_map<std::uint64_t, int> midpoint;
    const auto undirected = [](int a, int b) { return edge_key(std::min(a, b), std::max(a, b)); };
    for (const auto& t : mesh.faces()) {
        if (!is_full(t)) continue;
        for (int k = 0; k < 3; ++k) {
            const int a = t[k];
            const int b = t[(k + 1) % 3];
            const auto [it, added] = midpoint.try_emplace(undirected(a, b), static_cast<int>(positions.size()));
            if (added) positions.push_back(0.5 * (mesh.position(a) + mesh.position(b)));
        }
    }
    if (midpoint.empty()) return {mesh, region};

    const auto split_at = [&](int a, int b) {
        const auto it = midpoint.find(undirected(a, b));
        return it == midpoint.end() ? -1 : it->second;
    };

    // Each face is replaced in place by its first child; further children are appended.
    std::vector<Face> faces = mesh.faces();
    std::vector<Face> extra;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face t = faces[f];
        const int m01 = split_at(t[0], t[1]);
        const int m12 = split_at(t[1], t[2]);
        const int m20 = split_at(t[2], t[0]);
        const int splits = (m01 >= 0) + (m12 >= 0) + (m20 >= 0);
        if (splits == 0) continue;
        if (splits == 3) {
            faces[f] = {t[0], m01, m20};
            extra.push_back({m01, t[1], m12});
            extra.push_back({m20, m12, t[2]});
            extra.push_back({m01, m12, m20});
            continue;
        }
        if (splits != 1) {
            throw MeshError("midpoint_subdivide: face " + std::to_string(f) +
                            " has two split edges but is not inside the region");
        }
        // Bisect towards the corner opposite the split edge.
        int k = m01 >= 0 ? 0 : (m12 >= 0 ? 1 : 2);
        const int a = t[k];
        const int b = t[(k + 1) % 3];
        const int c = t[(k + 2) % 3];
        const int m = split_at(a, b);
        faces[f] = {a, m, c};
        extra.push_back({m, b, c});
    }
    faces.insert(faces.end(), extra.begin(), extra.end());

    std::vector<int> members = region.members;
    for (int v = static_cast<int>(mesh.num_vertices()); v < static_cast<int>(positions.size()); ++v) {
        members.push_back(v);
    }
    TriMesh refined(std::move(positions), std::move(faces));
    auto new_region = VertexRegion::from_members(refined, std::move(members));
    return {std::move(refined), std::move(new_region)};
}

// ---------------------------------------------------------------------------
// Bilateral normal filtering

TriMesh bilateral_normal_filter(const TriMesh& mesh, const VertexRegion& region,
                                const BilateralParams& params) {
    if (region.empty() || mesh.num_faces() == 0) return mesh;
    if (!(params.sigma_normal > 0.0)) throw MeshError("bilateral_normal_filter: sigma_normal must be > 0");

    const auto inside = region.mask(mesh.num_vertices());
    std::vector<int> touched;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const auto& t = mesh.face(static_cast<int>(f));
        if (inside[static_cast<std::size_t>(t[0])] || inside[static_cast<std::size_t>(t[1])] ||
            inside[static_cast<std::size_t>(t[2])]) {
            touched.push_back(static_cast<int>(f));
        }
    }

    double sigma_c = params.sigma_center;
    if (!(sigma_c > 0.0)) {
        double sum = 0.0;
        int count = 0;
        for (const auto& e : mesh.edges()) {
            if (inside[static_cast<std::size_t>(e[0])] || inside[static_cast<std::size_t>(e[1])]) {
                sum += (mesh.position(e[0]) - mesh.position(e[1])).norm();
                ++count;
            }
        }
        sigma_c = count > 0 ? sum / count : mesh.bbox_diagonal();
    }
    const double inv_c = 1.0 / (2.0 * sigma_c * sigma_c);
    const double inv_s = 1.0 / (2.0 * params.sigma_normal * params.sigma_normal);

    // Face neighbourhoods: faces sharing at least one vertex.
    std::vector<std::vector<int>> ring(touched.size());
    for (std::size_t i = 0; i < touched.size(); ++i) {
        auto& r = ring[i];
        for (int v : mesh.face(touched[i])) {
            const auto inc = mesh.incident_faces(v);
            r.insert(r.end(), inc.begin(), inc.end());
        }
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }

    std::vector<Vec3> pos = mesh.positions();
    const auto& faces = mesh.faces();
    const std::size_t nf = faces.size();
    std::vector<Vec3> normal(nf), centroid(nf), filtered(nf);
    std::vector<double> area(nf);

    const auto update_geometry = [&]() {
        for (std::size_t f = 0; f < nf; ++f) {
            const auto& t = faces[f];
            const Vec3& a = pos[static_cast<std::size_t>(t[0])];
            const Vec3& b = pos[static_cast<std::size_t>(t[1])];
            const Vec3& c = pos[static_cast<std::size_t>(t[2])];
            const Vec3 n = (b - a).cross(c - a);
            const double len = n.norm();
            area[f] = 0.5 * len;
            normal[f] = len > 0.0 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
            centroid[f] = (a + b + c) / 3.0;
        }
    };

    for (int iter = 0; iter < params.iterations; ++iter) {
        update_geometry();
        filtered = normal;
        for (std::size_t i = 0; i < touched.size(); ++i) {
            const auto fi = static_cast<std::size_t>(touched[i]);
            Vec3 acc = Vec3::Zero();
            for (int g : ring[i]) {
                const auto fj = static_cast<std::size_t>(g);
                const double dc = (centroid[fi] - centroid[fj]).squaredNorm();
                const double dn = (normal[fi] - normal[fj]).squaredNorm();
                acc += area[fj] * std::exp(-dc * inv_c) * std::exp(-dn * inv_s) * normal[fj];
            }
            const double len = acc.norm();
            if (len > 0.0) filtered[fi] = acc / len;
        }

        for (int step = 0; step < params.vertex_steps; ++step) {
            std::vector<Vec3> moved = pos;
            for (int v : region.members) {
                const auto inc = mesh.incident_faces(v);
                if (inc.empty()) continue;
                const Vec3& p = pos[static_cast<std::size_t>(v)];
                Vec3 delta = Vec3::Zero();
                for (int f : inc) {
                    const auto& t = faces[static_cast<std::size_t>(f)];
                    const Vec3 c = (pos[static_cast<std::size_t>(t[0])] + pos[static_cast<std::size_t>(t[1])] +
                                    pos[static_cast<std::size_t>(t[2])]) / 3.0;
                    const Vec3& m = filtered[static_cast<std::size_t>(f)];
                    delta += m * m.dot(c - p);
                }
                moved[static_cast<std::size_t>(v)] = p + delta / static_cast<double>(inc.size());
            }
            pos = std::move(moved);
        }
    }
    return mesh.with_positions(std::move(pos));
}

// ---------------------------------------------------------------------------
// Mirror welding

Vec3 MirrorPlane::reflect(const Vec3& p) const {
    Vec3 r = p;
    r[axis] = 2.0 * offset - p[axis];
    return r;
}

WeldResult mirror_weld(const TriMesh& half, const MirrorPlane& plane) {
    if (plane.axis < 0 || plane.axis > 2) throw MeshError("mirror_weld: plane axis must be 0, 1 or 2");
    const auto loops = half.boundary_loops();
    if (loops.empty()) throw MeshError("mirror_weld: input has no open boundary");
    if (loops.size() > 1) {
        throw MeshError("mirror_weld: input has " + std::to_string(loops.size()) +
                        " boundary loops, expected one");
    }
    const double tol = 1e-6 * half.bbox_diagonal();
    std::vector<char> on_boundary(half.num_vertices(), 0);
    double max_dev = 0.0;
    for (int v : loops.front()) {
        on_boundary[static_cast<std::size_t>(v)] = 1;
        max_dev = std::max(max_dev, std::abs(plane.signed_distance(half.position(v))));
    }
    if (max_dev > tol) {
        std::ostringstream msg;
        msg << "mirror_weld: boundary deviates from the plane by " << max_dev
            << " (tolerance " << tol << ")";
        throw MeshError(msg.str());
    }

    const std::size_t nv = half.num_vertices();
    std::vector<Vec3> positions = half.positions();
    std::vector<int> mirror_of(nv, -1);
    std::vector<int> flat;
    for (std::size_t v = 0; v < nv; ++v) {
        if (on_boundary[v]) {
            positions[v][plane.axis] = plane.offset;
            mirror_of[v] = static_cast<int>(v);
        } else if (std::abs(plane.signed_distance(positions[v])) <= tol) {
            flat.push_back(static_cast<int>(v));
        }
    }
    if (!flat.empty()) {
        throw MeshError("mirror_weld: degenerate input, interior vertices on the mirror plane "
                        "would produce zero-area faces (zero thickness): " + list_indices(flat));
    }
    for (std::size_t v = 0; v < nv; ++v) {
        if (on_boundary[v]) continue;
        mirror_of[v] = static_cast<int>(positions.size());
        positions.push_back(plane.reflect(positions[v]));
    }
    mirror_of.resize(positions.size());
    for (std::size_t v = 0; v < nv; ++v) {
        if (!on_boundary[v]) mirror_of[static_cast<std::size_t>(mirror_of[v])] = static_cast<int>(v);
    }

    std::vector<Face> faces = half.faces();
    faces.reserve(2 * faces.size());
    for (const auto& t : half.faces()) {
        faces.push_back({mirror_of[static_cast<std::size_t>(t[0])], mirror_of[static_cast<std::size_t>(t[2])],
                         mirror_of[static_cast<std::size_t>(t[1])]});
    }
    return {TriMesh(std::move(positions), std::move(faces)), std::move(mirror_of)};
}

// ---------------------------------------------------------------------------
// OBJ

std::string to_obj(const TriMesh& mesh) {
    std::string out;
    out.reserve(mesh.num_vertices() * 48 + mesh.num_faces() * 24);
    char line[128];
    for (const auto& p : mesh.positions()) {
        const int n = std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
        out.append(line, static_cast<std::size_t>(n));
    }
    for (const auto& t : mesh.faces()) {
        const int n = std::snprintf(line, sizeof line, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out.append(line, static_cast<std::size_t>(n));
    }
    return out;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw FormatError("cannot open " + path + " for writing");
    const auto text = to_obj(mesh);
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) throw FormatError("failed writing " + path);
}

TriMesh parse_obj(const std::string& text) {
    std::vector<Vec3> positions;
    std::vector<Face> faces;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) {
                throw FormatError("OBJ line " + std::to_string(line_no) + ": malformed vertex");
            }
            positions.push_back(p);
        } else if (tag == "f") {
            std::vector<int> ids;
            std::string tok;
            while (ls >> tok) {
                const int idx = std::stoi(tok.substr(0, tok.find('/')));
                ids.push_back(idx < 0 ? static_cast<int>(positions.size()) + idx : idx - 1);
            }
            if (ids.size() != 3) {
                throw FormatError("OBJ line " + std::to_string(line_no) + ": only triangles are supported");
            }
            faces.push_back({ids[0], ids[1], ids[2]});
        }
    }
    return TriMesh(std::move(positions), std::move(faces));
}

TriMesh load_obj(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw FormatError("cannot open " + path);
    std::ostringstream buf;
    buf << file.rdbuf();
    return parse_obj(buf.str());
}

}  // namespace sketchmesh
