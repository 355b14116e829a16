#include "sketchmesh/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sketchmesh {

namespace {

constexpr int kLeafSize = 4;

double box_distance2(const Box3& box, const Vec3& p) {
    return (p.cwiseMax(box.min()).cwiseMin(box.max()) - p).squaredNorm();
}

bool ray_hits_box(const Box3& box, const Vec3& origin, const Vec3& inv_dir, double t_max) {
    double t0 = 0.0;
    double t1 = t_max;
    for (int k = 0; k < 3; ++k) {
        double a = (box.min()[k] - origin[k]) * inv_dir[k];
        double b = (box.max()[k] - origin[k]) * inv_dir[k];
        if (a > b) std::swap(a, b);
        // NaN from 0 * inf means the ray lies in the slab plane; keep it.
        if (!std::isnan(a)) t0 = std::max(t0, a);
        if (!std::isnan(b)) t1 = std::min(t1, b);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                             const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 h = dir.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-300) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = inv * s.dot(h);
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double v = inv * dir.dot(q);
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = inv * e2.dot(q);
    if (t > 0.0) return t;
    return std::nullopt;
}

MeshBvh::MeshBvh(const TriMesh& mesh) {
    tris_.reserve(mesh.num_faces());
    for (const auto& f : mesh.faces()) {
        tris_.push_back({mesh.position(f[0]), mesh.position(f[1]), mesh.position(f[2])});
    }
    order_.resize(tris_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (!tris_.empty()) {
        nodes_.reserve(2 * tris_.size() / kLeafSize + 2);
        build(0, static_cast<int>(tris_.size()));
    }
}

int MeshBvh::build(int begin, int end) {
    Node node;
    Box3 centroids;
    for (int i = begin; i < end; ++i) {
        const auto& t = tris_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
        for (const auto& p : t) node.box.extend(p);
        centroids.extend((t[0] + t[1] + t[2]) / 3.0);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
        nodes_[static_cast<std::size_t>(id)].begin = begin;
        nodes_[static_cast<std::size_t>(id)].end = end;
        return id;
    }
    int axis = 0;
    centroids.diagonal().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
        const auto& tx = tris_[static_cast<std::size_t>(x)];
        const auto& ty = tris_[static_cast<std::size_t>(y)];
        const double cx = tx[0][axis] + tx[1][axis] + tx[2][axis];
        const double cy = ty[0][axis] + ty[1][axis] + ty[2][axis];
        return cx < cy || (cx == cy && x < y);
    });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

SurfacePoint MeshBvh::closest_point(const Vec3& p) const {
    SurfacePoint best;
    best.distance = std::numeric_limits<double>::infinity();
    if (tris_.empty()) return best;
    double best2 = std::numeric_limits<double>::infinity();
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (box_distance2(node.box, p) > best2) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int f = order_[static_cast<std::size_t>(i)];
                const auto& t = tris_[static_cast<std::size_t>(f)];
                const Vec3 q = closest_point_on_triangle(p, t[0], t[1], t[2]);
                const double d2 = (q - p).squaredNorm();
                if (d2 < best2 || (d2 == best2 && f < best.face)) {
                    best2 = d2;
                    best.face = f;
                    best.point = q;
                }
            }
            continue;
        }
        const auto& l = nodes_[static_cast<std::size_t>(node.left)];
        const auto& r = nodes_[static_cast<std::size_t>(node.right)];
        const double dl = box_distance2(l.box, p);
        const double dr = box_distance2(r.box, p);
        // Visit the nearer child first (pushed last).
        if (dl < dr) {
            stack.push_back(node.right);
            stack.push_back(node.left);
        } else {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    best.distance = std::sqrt(best2);
    return best;
}

std::optional<RayHit> MeshBvh::first_hit(const Vec3& origin, const Vec3& dir) const {
    if (tris_.empty()) return std::nullopt;
    const Vec3 inv = dir.cwiseInverse();
    std::optional<RayHit> best;
    double t_max = std::numeric_limits<double>::infinity();
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (!ray_hits_box(node.box, origin, inv, t_max)) continue;
        if (node.left >= 0) {
            stack.push_back(node.left);
            stack.push_back(node.right);
            continue;
        }
        for (int i = node.begin; i < node.end; ++i) {
            const int f = order_[static_cast<std::size_t>(i)];
            const auto& t = tris_[static_cast<std::size_t>(f)];
            if (auto hit = intersect_ray_triangle(origin, dir, t[0], t[1], t[2])) {
                if (*hit < t_max || (*hit == t_max && best && f < best->face)) {
                    t_max = *hit;
                    best = RayHit{*hit, f, origin + *hit * dir};
                }
            }
        }
    }
    return best;
}

int MeshBvh::count_crossings(const Vec3& origin, const Vec3& dir) const {
    if (tris_.empty()) return 0;
    const Vec3 inv = dir.cwiseInverse();
    const double inf = std::numeric_limits<double>::infinity();
    int count = 0;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        if (!ray_hits_box(node.box, origin, inv, inf)) continue;
        if (node.left >= 0) {
            stack.push_back(node.left);
            stack.push_back(node.right);
            continue;
        }
        for (int i = node.begin; i < node.end; ++i) {
            const auto& t = tris_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
            if (intersect_ray_triangle(origin, dir, t[0], t[1], t[2])) ++count;
        }
    }
    return count;
}

}  // namespace sketchmesh
