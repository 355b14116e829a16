#include "sketchmesh/silhouette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

// Default Laplacian magnitude relative to the curve's bbox diagonal; gives a
// circle a pillow about 0.55 diameters thick.
constexpr double kLmFactor = 1.78;

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Positive when d lies inside the circumcircle of the counterclockwise triangle abc.
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double adx = a.x() - d.x(), ady = a.y() - d.y();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

std::optional<Vec2> segment_crossing(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = orient(c, d, a);
    const double d2 = orient(c, d, b);
    const double d3 = orient(a, b, c);
    const double d4 = orient(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return a + (d1 / (d1 - d2)) * (b - a);
    }
    auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return r.x() >= std::min(p.x(), q.x()) && r.x() <= std::max(p.x(), q.x()) &&
               r.y() >= std::min(p.y(), q.y()) && r.y() <= std::max(p.y(), q.y());
    };
    if (d1 == 0 && on_segment(c, d, a)) return a;
    if (d2 == 0 && on_segment(c, d, b)) return b;
    if (d3 == 0 && on_segment(a, b, c)) return c;
    if (d4 == 0 && on_segment(a, b, d)) return d;
    return std::nullopt;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).norm();
}

double polygon_diagonal(std::span<const Vec2> polygon) {
    Eigen::AlignedBox2d box;
    for (const auto& p : polygon) box.extend(p);
    return polygon.empty() ? 0.0 : box.diagonal().norm();
}

// Triangle soup with edge adjacency. Edge i of a triangle is the one opposite
// corner i, i.e. (v[i+1], v[i+2]); nb[i] is the triangle across it or −1.
class Triangulation {
public:
    struct Tri {
        std::array<int, 3> v;
        std::array<int, 3> nb;
    };

    explicit Triangulation(std::vector<Vec2> pts, double scale) : pts_(std::move(pts)) {
        const double s2 = scale * scale;
        incircle_tol_ = 1e-13 * s2 * s2;
        orient_tol_ = 1e-13 * s2;
    }

    void ear_clip(int n);
    void make_delaunay();
    /// Inserts p unless it lies within `min_dist` of an existing vertex.
    void insert_point(const Vec2& p, double min_dist);
    void split_long_edges(double max_edge);
    /// Splits interior edges whose endpoints are both polygon vertices, so every
    /// interior edge touches at least one interior vertex.
    void split_chords(int num_boundary);

    TriMesh to_mesh() const;

private:
    static int next(int i) { return (i + 1) % 3; }
    static int prev(int i) { return (i + 2) % 3; }
    int index_of(int t, int vertex) const;
    int edge_toward(int t, int from) const;  // index of nb slot of t pointing at `from`
    void rotate(int t, int i);               // make corner i the first corner
    void replace_neighbor(int t, int old_nb, int new_nb);
    bool flip_if_illegal(int t, int i);
    void legalize(int p, std::vector<int> work);  // triangles with corner p
    void split_triangle(int t, int p);
    void split_edge(int t, int i, int p, bool legal = true);
    void build_adjacency();
    double edge_length(int t, int i) const;

    std::vector<Vec2> pts_;
    std::vector<Tri> tris_;
    double incircle_tol_ = 0.0;
    double orient_tol_ = 0.0;
};

int Triangulation::index_of(int t, int vertex) const {
    const auto& v = tris_[static_cast<std::size_t>(t)].v;
    for (int i = 0; i < 3; ++i) {
        if (v[static_cast<std::size_t>(i)] == vertex) return i;
    }
    return -1;
}

int Triangulation::edge_toward(int t, int from) const {
    const auto& nb = tris_[static_cast<std::size_t>(t)].nb;
    for (int i = 0; i < 3; ++i) {
        if (nb[static_cast<std::size_t>(i)] == from) return i;
    }
    return -1;
}

void Triangulation::rotate(int t, int i) {
    auto& tri = tris_[static_cast<std::size_t>(t)];
    std::rotate(tri.v.begin(), tri.v.begin() + i, tri.v.end());
    std::rotate(tri.nb.begin(), tri.nb.begin() + i, tri.nb.end());
}

void Triangulation::replace_neighbor(int t, int old_nb, int new_nb) {
    if (t < 0) return;
    const int i = edge_toward(t, old_nb);
    tris_[static_cast<std::size_t>(t)].nb[static_cast<std::size_t>(i)] = new_nb;
}

double Triangulation::edge_length(int t, int i) const {
    const auto& v = tris_[static_cast<std::size_t>(t)].v;
    return (pts_[static_cast<std::size_t>(v[static_cast<std::size_t>(next(i))])] -
            pts_[static_cast<std::size_t>(v[static_cast<std::size_t>(prev(i))])])
        .norm();
}

void Triangulation::ear_clip(int n) {
    std::vector<int> ring(static_cast<std::size_t>(n));
    std::iota(ring.begin(), ring.end(), 0);
    auto pt = [&](int v) -> const Vec2& { return pts_[static_cast<std::size_t>(v)]; };
    while (ring.size() > 3) {
        const std::size_t m = ring.size();
        bool clipped = false;
        for (std::size_t k = 0; k < m && !clipped; ++k) {
            const int a = ring[(k + m - 1) % m];
            const int b = ring[k];
            const int c = ring[(k + 1) % m];
            if (orient(pt(a), pt(b), pt(c)) <= orient_tol_) continue;
            bool blocked = false;
            for (int v : ring) {
                if (v == a || v == b || v == c) continue;
                if (orient(pt(a), pt(b), pt(v)) >= 0 && orient(pt(b), pt(c), pt(v)) >= 0 &&
                    orient(pt(c), pt(a), pt(v)) >= 0) {
                    blocked = true;
                    break;
                }
            }
            if (blocked) continue;
            tris_.push_back({{a, b, c}, {-1, -1, -1}});
            ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(k));
            clipped = true;
        }
        if (!clipped) throw MeshError("triangulate_polygon: no ear found (degenerate polygon)");
    }
    if (orient(pt(ring[0]), pt(ring[1]), pt(ring[2])) <= orient_tol_) {
        throw MeshError("triangulate_polygon: degenerate polygon (collinear remainder)");
    }
    tris_.push_back({{ring[0], ring[1], ring[2]}, {-1, -1, -1}});
    build_adjacency();
}

void Triangulation::build_adjacency() {
    std::map<std::pair<int, int>, std::pair<int, int>> half_edges;  // (from, to) → (tri, slot)
    for (std::size_t t = 0; t < tris_.size(); ++t) {
        for (int i = 0; i < 3; ++i) {
            const auto& v = tris_[t].v;
            half_edges[{v[static_cast<std::size_t>(next(i))], v[static_cast<std::size_t>(prev(i))]}] = {
                static_cast<int>(t), i};
        }
    }
    for (std::size_t t = 0; t < tris_.size(); ++t) {
        for (int i = 0; i < 3; ++i) {
            const auto& v = tris_[t].v;
            const auto it =
                half_edges.find({v[static_cast<std::size_t>(prev(i))], v[static_cast<std::size_t>(next(i))]});
            tris_[t].nb[static_cast<std::size_t>(i)] = it == half_edges.end() ? -1 : it->second.first;
        }
    }
}

bool Triangulation::flip_if_illegal(int t, int i) {
    const int u = tris_[static_cast<std::size_t>(t)].nb[static_cast<std::size_t>(i)];
    if (u < 0) return false;
    const int j = edge_toward(u, t);
    {
        const auto& v = tris_[static_cast<std::size_t>(t)].v;
        const int p = v[static_cast<std::size_t>(i)];
        const int q = v[static_cast<std::size_t>(next(i))];
        const int r = v[static_cast<std::size_t>(prev(i))];
        const int s = tris_[static_cast<std::size_t>(u)].v[static_cast<std::size_t>(j)];
        auto pt = [&](int k) -> const Vec2& { return pts_[static_cast<std::size_t>(k)]; };
        if (incircle(pt(p), pt(q), pt(r), pt(s)) <= incircle_tol_) return false;
        // The quad must be strictly convex at q and r for the flip to be valid.
        if (orient(pt(p), pt(q), pt(s)) <= orient_tol_ || orient(pt(p), pt(s), pt(r)) <= orient_tol_) return false;
    }
    rotate(t, i);
    rotate(u, j);
    // t = (p, q, r) with shared edge q-r; u = (s, r, q).
    const auto tv = tris_[static_cast<std::size_t>(t)].v;
    const auto tn = tris_[static_cast<std::size_t>(t)].nb;
    const auto uv = tris_[static_cast<std::size_t>(u)].v;
    const auto un = tris_[static_cast<std::size_t>(u)].nb;
    const int p = tv[0], q = tv[1], r = tv[2], s = uv[0];

    const int n_pq = tn[2], n_rp = tn[1], n_qs = un[1], n_sr = un[2];
    tris_[static_cast<std::size_t>(t)] = {{p, q, s}, {n_qs, u, n_pq}};
    tris_[static_cast<std::size_t>(u)] = {{p, s, r}, {n_sr, n_rp, t}};
    replace_neighbor(n_qs, u, t);
    replace_neighbor(n_rp, t, u);
    return true;
}

void Triangulation::legalize(int p, std::vector<int> work) {
    std::size_t guard = 0;
    const std::size_t limit = 64 * (tris_.size() + 16);
    while (!work.empty()) {
        if (++guard > limit) throw MeshError("triangulate_polygon: edge flipping did not converge");
        const int t = work.back();
        work.pop_back();
        const int i = index_of(t, p);
        if (i < 0) continue;
        const int u = tris_[static_cast<std::size_t>(t)].nb[static_cast<std::size_t>(i)];
        if (u < 0 || !flip_if_illegal(t, i)) continue;
        // Both triangles produced by the flip keep p as a corner.
        work.push_back(t);
        work.push_back(u);
    }
}

void Triangulation::make_delaunay() {
    for (std::size_t pass = 0; pass < 4 * tris_.size() + 16; ++pass) {
        bool flipped = false;
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            for (int i = 0; i < 3; ++i) {
                if (flip_if_illegal(static_cast<int>(t), i)) flipped = true;
            }
        }
        if (!flipped) return;
    }
    throw MeshError("triangulate_polygon: edge flipping did not converge");
}

void Triangulation::split_triangle(int t, int p) {
    const auto [v, nb] = tris_[static_cast<std::size_t>(t)];
    const int a = v[0], b = v[1], c = v[2];
    const int t1 = static_cast<int>(tris_.size());
    const int t2 = t1 + 1;
    tris_[static_cast<std::size_t>(t)] = {{a, b, p}, {t1, t2, nb[2]}};
    tris_.push_back({{b, c, p}, {t2, t, nb[0]}});
    tris_.push_back({{c, a, p}, {t, t1, nb[1]}});
    replace_neighbor(nb[0], t, t1);
    replace_neighbor(nb[1], t, t2);
    legalize(p, {t, t1, t2});
}

void Triangulation::split_edge(int t, int i, int m, bool legal) {
    const int u = tris_[static_cast<std::size_t>(t)].nb[static_cast<std::size_t>(i)];
    rotate(t, i);
    const auto tv = tris_[static_cast<std::size_t>(t)].v;
    const auto tn = tris_[static_cast<std::size_t>(t)].nb;
    const int p = tv[0], q = tv[1], r = tv[2];
    const int n_pq = tn[2], n_rp = tn[1];
    const int t_new = static_cast<int>(tris_.size());
    if (u < 0) {
        tris_[static_cast<std::size_t>(t)] = {{p, q, m}, {-1, t_new, n_pq}};
        tris_.push_back({{p, m, r}, {-1, n_rp, t}});
        replace_neighbor(n_rp, t, t_new);
        if (legal) legalize(m, {t, t_new});
        return;
    }
    rotate(u, edge_toward(u, t));
    const auto uv = tris_[static_cast<std::size_t>(u)].v;
    const auto un = tris_[static_cast<std::size_t>(u)].nb;
    const int s = uv[0];
    const int n_qs = un[1], n_sr = un[2];
    const int u_new = t_new + 1;
    tris_[static_cast<std::size_t>(t)] = {{p, q, m}, {u_new, t_new, n_pq}};
    tris_.push_back({{p, m, r}, {u, n_rp, t}});
    tris_[static_cast<std::size_t>(u)] = {{s, r, m}, {t_new, u_new, n_sr}};
    tris_.push_back({{s, m, q}, {t, n_qs, u}});
    replace_neighbor(n_rp, t, t_new);
    replace_neighbor(n_qs, u, u_new);
    if (legal) legalize(m, {t, t_new, u, u_new});
}

void Triangulation::insert_point(const Vec2& p, double min_dist) {
    for (const auto& q : pts_) {
        if ((q - p).norm() < min_dist) return;
    }
    auto pt = [&](int v) -> const Vec2& { return pts_[static_cast<std::size_t>(v)]; };
    for (std::size_t t = 0; t < tris_.size(); ++t) {
        const auto& v = tris_[t].v;
        std::array<double, 3> o{};
        for (int i = 0; i < 3; ++i) {
            o[static_cast<std::size_t>(i)] =
                orient(pt(v[static_cast<std::size_t>(next(i))]), pt(v[static_cast<std::size_t>(prev(i))]), p);
        }
        if (o[0] < -orient_tol_ || o[1] < -orient_tol_ || o[2] < -orient_tol_) continue;
        const int id = static_cast<int>(pts_.size());
        pts_.push_back(p);
        for (int i = 0; i < 3; ++i) {
            if (o[static_cast<std::size_t>(i)] <= orient_tol_) {
                split_edge(static_cast<int>(t), i, id);
                return;
            }
        }
        split_triangle(static_cast<int>(t), id);
        return;
    }
}

void Triangulation::split_long_edges(double max_edge) {
    const double limit = max_edge * (1.0 + 1e-9);
    for (int pass = 0; pass < 64; ++pass) {
        std::vector<std::pair<double, std::pair<int, int>>> long_edges;
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            for (int i = 0; i < 3; ++i) {
                const int u = tris_[t].nb[static_cast<std::size_t>(i)];
                if (u >= 0 && u < static_cast<int>(t)) continue;
                const double len = edge_length(static_cast<int>(t), i);
                if (len > limit) long_edges.push_back({len, {tris_[t].v[static_cast<std::size_t>(next(i))],
                                                             tris_[t].v[static_cast<std::size_t>(prev(i))]}});
            }
        }
        if (long_edges.empty()) return;
        std::sort(long_edges.begin(), long_edges.end(), [](const auto& x, const auto& y) {
            return x.first > y.first || (x.first == y.first && x.second < y.second);
        });
        for (const auto& [len, e] : long_edges) {
            // Earlier splits and flips may have removed this edge.
            for (std::size_t t = 0; t < tris_.size(); ++t) {
                const int a = index_of(static_cast<int>(t), e.first);
                const int b = index_of(static_cast<int>(t), e.second);
                if (a < 0 || b < 0) continue;
                const int i = 3 - a - b;
                const int id = static_cast<int>(pts_.size());
                pts_.push_back(0.5 * (pts_[static_cast<std::size_t>(e.first)] + pts_[static_cast<std::size_t>(e.second)]));
                split_edge(static_cast<int>(t), i, id);
                break;
            }
        }
    }
    throw MeshError("triangulate_polygon: edge refinement did not converge");
}

void Triangulation::split_chords(int num_boundary) {
    for (;;) {
        bool found = false;
        for (std::size_t t = 0; t < tris_.size() && !found; ++t) {
            for (int i = 0; i < 3; ++i) {
                if (tris_[t].nb[static_cast<std::size_t>(i)] < 0) continue;
                const int a = tris_[t].v[static_cast<std::size_t>(next(i))];
                const int b = tris_[t].v[static_cast<std::size_t>(prev(i))];
                if (a >= num_boundary || b >= num_boundary) continue;
                const int id = static_cast<int>(pts_.size());
                pts_.push_back(0.5 * (pts_[static_cast<std::size_t>(a)] + pts_[static_cast<std::size_t>(b)]));
                // No flips here: they could reconnect two polygon vertices.
                split_edge(static_cast<int>(t), i, id, false);
                found = true;
                break;
            }
        }
        if (!found) return;
    }
}

TriMesh Triangulation::to_mesh() const {
    std::vector<Vec3> positions;
    positions.reserve(pts_.size());
    for (const auto& p : pts_) positions.emplace_back(p.x(), p.y(), 0.0);
    std::vector<Face> faces;
    faces.reserve(tris_.size());
    for (const auto& t : tris_) faces.push_back({t.v[0], t.v[1], t.v[2]});
    return TriMesh(std::move(positions), std::move(faces));
}

std::vector<Vec2> cleanup(std::vector<Vec2> points) {
    const double diag = polygon_diagonal(points);
    const double eps = 1e-9 * diag;
    std::vector<Vec2> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (!p.allFinite()) throw StrokeError("silhouette contains a non-finite point");
        if (out.empty() || (p - out.back()).norm() > eps) out.push_back(p);
    }
    while (out.size() > 1 && (out.front() - out.back()).norm() <= eps) out.pop_back();
    return out;
}

TriMesh triangulate_impl(std::span<const Vec2> polygon, std::optional<double> max_edge, bool split_chords) {
    if (polygon.size() < 3) throw StrokeError("triangulate_polygon: polygon needs at least 3 points");
    if (auto hit = find_self_intersection(polygon)) {
        std::ostringstream msg;
        msg << "triangulate_polygon: polygon self-intersects near (" << hit->x() << ", " << hit->y() << ")";
        throw StrokeError(msg.str());
    }
    std::vector<Vec2> pts(polygon.begin(), polygon.end());
    const bool reversed = polygon_signed_area(pts) < 0.0;
    if (reversed) std::reverse(pts.begin(), pts.end());
    const int n = static_cast<int>(pts.size());
    const double diag = polygon_diagonal(pts);

    Triangulation tri(pts, diag);
    tri.ear_clip(n);
    tri.make_delaunay();

    if (max_edge) {
        if (!(*max_edge > 0.0)) throw MeshError("triangulate_polygon: max_edge must be positive");
        const double s = *max_edge;
        const double row = s * std::sqrt(3.0) / 2.0;
        Eigen::AlignedBox2d box;
        for (const auto& p : pts) box.extend(p);
        for (int j = 0; box.min().y() + row * j <= box.max().y(); ++j) {
            const double y = box.min().y() + row * j;
            const double x0 = box.min().x() + ((j % 2) != 0 ? 0.5 * s : 0.0);
            for (int i = 0; x0 + s * i <= box.max().x(); ++i) {
                const Vec2 p(x0 + s * i, y);
                if (!point_in_polygon(pts, p)) continue;
                double d = std::numeric_limits<double>::infinity();
                for (int k = 0; k < n; ++k) {
                    d = std::min(d, segment_distance(p, pts[static_cast<std::size_t>(k)],
                                                     pts[static_cast<std::size_t>((k + 1) % n)]));
                }
                if (d < 0.5 * s) continue;
                tri.insert_point(p, 0.25 * s);
            }
        }
        tri.split_long_edges(s);
    }
    if (split_chords) tri.split_chords(n);

    TriMesh mesh = tri.to_mesh();
    if (!reversed) return mesh;
    // Restore the caller's vertex order for the polygon prefix.
    std::vector<int> remap(mesh.num_vertices());
    std::iota(remap.begin(), remap.end(), 0);
    for (int k = 0; k < n; ++k) remap[static_cast<std::size_t>(k)] = n - 1 - k;
    std::vector<Vec3> positions(mesh.num_vertices());
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v) positions[static_cast<std::size_t>(remap[v])] = mesh.positions()[v];
    std::vector<Face> faces;
    faces.reserve(mesh.num_faces());
    for (const auto& f : mesh.faces()) {
        faces.push_back({remap[static_cast<std::size_t>(f[0])], remap[static_cast<std::size_t>(f[1])],
                         remap[static_cast<std::size_t>(f[2])]});
    }
    return TriMesh(std::move(positions), std::move(faces));
}

// Minimizes Σ_{free i} ‖(L X)_i − rhs_i‖² + Σ_c w²‖X_c − value_c‖² over all rows of X.
DenseColumns solve_constrained(const TriMesh& mesh, const DenseColumns& rhs,
                               const std::vector<std::pair<int, Eigen::RowVectorXd>>& constraints, double weight) {
    const auto nv = static_cast<int>(mesh.num_vertices());
    std::vector<char> fixed(static_cast<std::size_t>(nv), 0);
    for (const auto& [v, value] : constraints) {
        if (v < 0 || v >= nv) throw MeshError("constraint on vertex " + std::to_string(v) + " out of range");
        fixed[static_cast<std::size_t>(v)] = 1;
    }
    const SparseMatrix l = laplacian(mesh);
    std::vector<Triplet> entries;
    entries.reserve(static_cast<std::size_t>(l.nonZeros()) + constraints.size());
    std::vector<int> row_of(static_cast<std::size_t>(nv), -1);
    int rows = 0;
    for (int v = 0; v < nv; ++v) {
        if (!fixed[static_cast<std::size_t>(v)]) row_of[static_cast<std::size_t>(v)] = rows++;
    }
    for (int k = 0; k < l.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(l, k); it; ++it) {
            const int r = row_of[static_cast<std::size_t>(it.row())];
            if (r >= 0) entries.emplace_back(r, it.col(), it.value());
        }
    }
    DenseColumns b = DenseColumns::Zero(rows + static_cast<Eigen::Index>(constraints.size()), rhs.cols());
    for (int v = 0; v < nv; ++v) {
        const int r = row_of[static_cast<std::size_t>(v)];
        if (r >= 0) b.row(r) = rhs.row(v);
    }
    for (const auto& [v, value] : constraints) {
        entries.emplace_back(rows, v, weight);
        b.row(rows) = weight * value;
        ++rows;
    }
    const SparseMatrix a = make_sparse(static_cast<std::size_t>(rows), static_cast<std::size_t>(nv), entries);
    return least_squares(a, b);
}

template <typename Fn>
auto with_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    auto tag = [&](const std::exception& e) { return std::string("generate_initial/") + stage + ": " + e.what(); };
    try {
        return fn();
    } catch (const StrokeError& e) {
        throw StrokeError(tag(e));
    } catch (const MeshError& e) {
        throw MeshError(tag(e));
    } catch (const SolverError& e) {
        throw SolverError(tag(e));
    }
}

}  // namespace

double polygon_signed_area(std::span<const Vec2> polygon) {
    double twice = 0.0;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % n];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * twice;
}

bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p) {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[j];
        if ((a.y() > p.y()) != (b.y() > p.y()) &&
            p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
            inside = !inside;
        }
    }
    return inside;
}

std::optional<Vec2> find_self_intersection(std::span<const Vec2> polygon) {
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
            if (auto hit = segment_crossing(a, b, polygon[j], polygon[(j + 1) % n])) return hit;
        }
    }
    return std::nullopt;
}

SilhouetteCurve SilhouetteCurve::create(std::vector<Vec2> points, double resample_len) {
    auto cleaned = cleanup(std::move(points));
    if (cleaned.size() < kMinPoints) {
        throw StrokeError("silhouette needs at least " + std::to_string(kMinPoints) + " distinct points, got " +
                          std::to_string(cleaned.size()));
    }
    if (auto hit = find_self_intersection(cleaned)) {
        std::ostringstream msg;
        msg << "silhouette self-intersects near (" << hit->x() << ", " << hit->y() << ")";
        throw StrokeError(msg.str());
    }
    const double area = polygon_signed_area(cleaned);
    const double diag = polygon_diagonal(cleaned);
    if (std::abs(area) <= 1e-12 * diag * diag) throw StrokeError("silhouette encloses no area");
    if (area < 0.0) std::reverse(cleaned.begin(), cleaned.end());

    SilhouetteCurve curve;
    curve.points_ = std::move(cleaned);
    curve.resample_len_ = resample_len > 0.0 ? resample_len : diag / 64.0;
    return curve;
}

double SilhouetteCurve::bbox_diagonal() const { return polygon_diagonal(points_); }

std::vector<Vec2> SilhouetteCurve::resampled() const {
    const std::size_t n = points_.size();
    double perimeter = 0.0;
    for (std::size_t i = 0; i < n; ++i) perimeter += (points_[(i + 1) % n] - points_[i]).norm();
    const auto count = std::max<std::size_t>(kMinPoints, static_cast<std::size_t>(std::ceil(perimeter / resample_len_)));
    const double step = perimeter / static_cast<double>(count);

    std::vector<Vec2> out;
    out.reserve(count);
    std::size_t seg = 0;
    double seg_start = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const double target = step * static_cast<double>(k);
        double len = (points_[(seg + 1) % n] - points_[seg]).norm();
        while (seg + 1 < n && seg_start + len <= target) {
            seg_start += len;
            ++seg;
            len = (points_[(seg + 1) % n] - points_[seg]).norm();
        }
        const double t = len > 0.0 ? std::clamp((target - seg_start) / len, 0.0, 1.0) : 0.0;
        out.push_back(points_[seg] + t * (points_[(seg + 1) % n] - points_[seg]));
    }
    return out;
}

TriMesh triangulate_polygon(std::span<const Vec2> polygon, std::optional<double> max_edge) {
    return triangulate_impl(polygon, max_edge, false);
}

TriMesh triangulate_polygon(const SilhouetteCurve& curve) {
    const auto pts = curve.resampled();
    return triangulate_impl(pts, curve.resample_len(), false);
}

LMField diffuse_magnitudes(const TriMesh& mesh, const std::map<int, double>& constrained, double weight) {
    if (constrained.empty()) throw SolverError("diffuse_magnitudes: no constrained vertices");
    std::vector<std::pair<int, Eigen::RowVectorXd>> rows;
    rows.reserve(constrained.size());
    for (const auto& [v, m] : constrained) {
        if (!std::isfinite(m)) throw SolverError("diffuse_magnitudes: non-finite constraint at vertex " + std::to_string(v));
        rows.emplace_back(v, Eigen::RowVectorXd::Constant(1, m));
    }
    const DenseColumns rhs = DenseColumns::Zero(static_cast<Eigen::Index>(mesh.num_vertices()), 1);
    const DenseColumns x = solve_constrained(mesh, rhs, rows, weight);
    LMField field;
    field.values.assign(x.data(), x.data() + x.rows());
    field.constrained = constrained;
    return field;
}

std::vector<Vec3> target_laplacians(const TriMesh& mesh, std::span<const double> magnitudes) {
    if (magnitudes.size() != mesh.num_vertices()) {
        throw MeshError("target_laplacians: " + std::to_string(magnitudes.size()) + " magnitudes for " +
                        std::to_string(mesh.num_vertices()) + " vertices");
    }
    const auto areas = vertex_areas(mesh);
    const auto normals = vertex_normals(mesh);
    std::vector<Vec3> deltas(mesh.num_vertices());
    for (std::size_t i = 0; i < deltas.size(); ++i) deltas[i] = areas[i] * magnitudes[i] * normals[i];
    return deltas;
}

TriMesh solve_positions(const TriMesh& mesh, std::span<const Vec3> deltas, const std::map<int, Vec3>& pinned,
                        double weight) {
    if (pinned.empty()) throw SolverError("solve_positions: no pinned vertices");
    if (deltas.size() != mesh.num_vertices()) {
        throw MeshError("solve_positions: " + std::to_string(deltas.size()) + " target Laplacians for " +
                        std::to_string(mesh.num_vertices()) + " vertices");
    }
    std::vector<std::pair<int, Eigen::RowVectorXd>> rows;
    rows.reserve(pinned.size());
    for (const auto& [v, p] : pinned) rows.emplace_back(v, p.transpose());
    const DenseColumns rhs = to_matrix(std::vector<Vec3>(deltas.begin(), deltas.end()));
    return mesh.with_positions(from_matrix(solve_constrained(mesh, rhs, rows, weight)));
}

double default_lm(const SilhouetteCurve& curve) { return kLmFactor * curve.bbox_diagonal(); }

TriMesh generate_initial(const SilhouetteCurve& curve) { return generate_initial(curve, default_lm(curve)); }

TriMesh generate_initial(const SilhouetteCurve& curve, double lm) {
    if (!std::isfinite(lm)) throw StrokeError("generate_initial: Laplacian magnitude must be finite");
    const double scale = curve.bbox_diagonal();
    Eigen::AlignedBox2d box;
    for (const auto& p : curve.points()) box.extend(p);
    const Vec2 center = box.center();

    std::vector<Vec2> pts = curve.resampled();
    for (auto& p : pts) p = (p - center) / scale;
    const int n = static_cast<int>(pts.size());
    const double edge = curve.resample_len() / scale;

    const TriMesh flat = with_stage("triangulate", [&] { return triangulate_impl(pts, edge, true); });

    // Raise interior vertices slightly off the mirror plane so the two halves
    // do not coincide.
    std::vector<int> seeds(static_cast<std::size_t>(n));
    std::iota(seeds.begin(), seeds.end(), 0);
    const auto dist = graph_distance(flat, seeds);
    auto lifted = flat.positions();
    for (std::size_t v = static_cast<std::size_t>(n); v < lifted.size(); ++v) {
        lifted[v].z() = 1e-3 * edge * static_cast<double>(dist[v]);
    }
    const auto welded =
        with_stage("mirror_weld", [&] { return mirror_weld(flat.with_positions(lifted), MirrorPlane{2, 0.0}); });

    std::map<int, double> lm_constraints;
    std::map<int, Vec3> pins;
    for (int v = 0; v < n; ++v) {
        lm_constraints[v] = -lm / scale;
        pins[v] = welded.mesh.position(v);
    }
    const auto field = with_stage("diffuse", [&] { return diffuse_magnitudes(welded.mesh, lm_constraints); });
    const auto deltas = target_laplacians(welded.mesh, field.values);
    const TriMesh inflated = with_stage("solve", [&] { return solve_positions(welded.mesh, deltas, pins); });

    auto out = inflated.positions();
    for (auto& p : out) {
        p.head<2>() = center + scale * p.head<2>();
        p.z() *= scale;
    }
    return inflated.with_positions(std::move(out));
}

}  // namespace sketchmesh
