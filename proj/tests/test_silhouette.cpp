#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "sketchmesh/bvh.hpp"
#include "sketchmesh/error.hpp"
#include "sketchmesh/primitives.hpp"
#include "sketchmesh/silhouette.hpp"

using namespace sketchmesh;

namespace {

std::vector<Vec2> circle(int n, double r = 1.0, Vec2 c = Vec2::Zero()) {
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * i / n;
        pts.push_back(c + r * Vec2(std::cos(t), std::sin(t)));
    }
    return pts;
}

std::vector<Vec2> l_shape() { return {{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}; }

// Same outline with edge midpoints added, enough points for a silhouette.
std::vector<Vec2> l_shape_dense() {
    const auto corners = l_shape();
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < corners.size(); ++i) {
        out.push_back(corners[i]);
        out.push_back(0.5 * (corners[i] + corners[(i + 1) % corners.size()]));
    }
    return out;
}

double shoelace(const std::vector<Vec2>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % p.size()];
        s += a.x() * b.y() - a.y() * b.x();
    }
    return 0.5 * std::abs(s);
}

// Even-odd ray crossing, written independently of the library's version.
bool inside(const std::vector<Vec2>& poly, const Vec2& p) {
    int crossings = 0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
        if (a.y() > b.y()) std::swap(a, b);
        if (p.y() < a.y() || p.y() >= b.y()) continue;
        const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
        if (x > p.x()) ++crossings;
    }
    return crossings % 2 == 1;
}

double total_area(const TriMesh& m) {
    double a = 0.0;
    for (std::size_t f = 0; f < m.num_faces(); ++f) a += m.face_area(static_cast<int>(f));
    return a;
}

double max_edge_length(const TriMesh& m) {
    double mx = 0.0;
    for (const auto& e : m.edges()) mx = std::max(mx, (m.position(e[0]) - m.position(e[1])).norm());
    return mx;
}

// Circumcircle test through the explicit 3x3 determinant.
bool strictly_in_circumcircle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, double tol) {
    Eigen::Matrix3d m;
    m << a.x() - d.x(), a.y() - d.y(), (a - d).head<2>().squaredNorm(), b.x() - d.x(), b.y() - d.y(),
        (b - d).head<2>().squaredNorm(), c.x() - d.x(), c.y() - d.y(), (c - d).head<2>().squaredNorm();
    return m.determinant() > tol;
}

double positions_energy(const TriMesh& mesh, const std::vector<Vec3>& v, const std::vector<Vec3>& delta,
                        const std::map<int, Vec3>& pinned) {
    const DenseColumns lv = laplacian(mesh) * to_matrix(v);
    double e = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (pinned.count(static_cast<int>(i)) != 0) continue;
        e += (lv.row(static_cast<Eigen::Index>(i)).transpose() - delta[i]).squaredNorm();
    }
    for (const auto& [c, p] : pinned) e += (v[static_cast<std::size_t>(c)] - p).squaredNorm();
    return e;
}

}  // namespace

TEST_CASE("SilhouetteCurve validation and cleanup") {
    CHECK_THROWS_AS(SilhouetteCurve::create({{0, 0}, {1, 0}}), StrokeError);
    // Repeats do not count toward the minimum.
    auto sparse = circle(6);
    sparse.insert(sparse.begin() + 2, sparse[2]);
    sparse.push_back(sparse.front());
    CHECK_THROWS_WITH_AS(SilhouetteCurve::create(sparse), doctest::Contains("at least 8"), StrokeError);

    auto cw = circle(16);
    std::reverse(cw.begin(), cw.end());
    cw.push_back(cw.front());
    const auto curve = SilhouetteCurve::create(cw);
    CHECK(curve.points().size() == 16);
    CHECK(polygon_signed_area(curve.points()) > 0.0);
    CHECK(curve.resample_len() == doctest::Approx(curve.bbox_diagonal() / 64.0));

    const std::vector<Vec2> figure_eight = {{0, 0}, {1, 1}, {2, 0}, {2.5, 0.5}, {2, 1}, {1, 0}, {0, 1}, {-0.5, 0.5}};
    try {
        SilhouetteCurve::create(figure_eight);
        FAIL("expected StrokeError");
    } catch (const StrokeError& e) {
        CHECK(std::string(e.what()).find("(0.5, 0.5)") != std::string::npos);
    }
}

TEST_CASE("resampling is uniform and bounded by resample_len") {
    const auto curve = SilhouetteCurve::create(l_shape_dense(), 0.1);
    const auto pts = curve.resampled();
    CHECK(pts.size() == 80);  // perimeter 8
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double len = (pts[(i + 1) % pts.size()] - pts[i]).norm();
        CHECK(len <= 0.1 + 1e-12);
    }
    CHECK(shoelace(pts) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("triangulate_polygon without refinement") {
    SUBCASE("unit square") {
        const std::vector<Vec2> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        const auto m = triangulate_polygon(sq);
        CHECK(m.num_faces() == 2);
        CHECK(total_area(m) == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("convex n-gon") {
        for (int n : {5, 12, 31}) {
            const auto m = triangulate_polygon(circle(n));
            CHECK(m.num_faces() == static_cast<std::size_t>(n - 2));
            CHECK(m.num_vertices() == static_cast<std::size_t>(n));
        }
    }
    SUBCASE("L-shaped hexagon") {
        const auto poly = l_shape();
        const auto m = triangulate_polygon(poly);
        CHECK(std::abs(total_area(m) - shoelace(poly)) <= 1e-10);
        for (std::size_t f = 0; f < m.num_faces(); ++f) {
            CHECK(inside(poly, m.face_centroid(static_cast<int>(f)).head<2>()));
            CHECK(m.face_normal(static_cast<int>(f)).z() == doctest::Approx(1.0));
        }
    }
    SUBCASE("clockwise input keeps its vertex order") {
        auto poly = l_shape();
        std::reverse(poly.begin(), poly.end());
        const auto m = triangulate_polygon(poly);
        for (std::size_t i = 0; i < poly.size(); ++i) CHECK(m.positions()[i].head<2>() == poly[i]);
        CHECK(std::abs(total_area(m) - 3.0) <= 1e-12);
    }
    SUBCASE("self-intersection reports its location") {
        const std::vector<Vec2> bowtie = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
        CHECK_THROWS_WITH_AS(triangulate_polygon(bowtie), doctest::Contains("(0.5, 0.5)"), StrokeError);
    }
}

TEST_CASE("triangulate_polygon with refinement") {
    for (const auto& poly : {l_shape(), circle(40, 0.8, Vec2(3, -1))}) {
        const double limit = 0.15;
        const auto m = triangulate_polygon(poly, limit);
        CHECK(max_edge_length(m) <= limit * (1 + 1e-9));
        CHECK(std::abs(total_area(m) - shoelace(poly)) <= 1e-10);
        // Boundary is the polygon: every boundary vertex lies on a polygon edge.
        const auto loops = m.boundary_loops();
        REQUIRE(loops.size() == 1);
        for (int v : loops.front()) {
            const Vec2 p = m.position(v).head<2>();
            double d = 1e9;
            for (std::size_t i = 0; i < poly.size(); ++i) {
                const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
                const double t = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
                d = std::min(d, (a + t * (b - a) - p).norm());
            }
            CHECK(d <= 1e-12);
        }
        for (std::size_t f = 0; f < m.num_faces(); ++f) CHECK(inside(poly, m.face_centroid(static_cast<int>(f)).head<2>()));
    }
}

TEST_CASE("triangulation is Delaunay across interior edges") {
    const auto curve = SilhouetteCurve::create(circle(50), 0.1);
    const auto m = triangulate_polygon(curve);
    const double tol = 1e-9;
    std::map<std::pair<int, int>, int> opposite;  // directed edge → opposite corner
    for (const auto& f : m.faces()) {
        for (int i = 0; i < 3; ++i) opposite[{f[static_cast<std::size_t>((i + 1) % 3)], f[static_cast<std::size_t>((i + 2) % 3)]}] = f[static_cast<std::size_t>(i)];
    }
    int interior = 0;
    for (const auto& f : m.faces()) {
        for (int i = 0; i < 3; ++i) {
            const int a = f[static_cast<std::size_t>((i + 1) % 3)];
            const int b = f[static_cast<std::size_t>((i + 2) % 3)];
            const auto it = opposite.find({b, a});
            if (it == opposite.end()) continue;
            ++interior;
            CHECK_FALSE(strictly_in_circumcircle(m.position(f[0]), m.position(f[1]), m.position(f[2]),
                                                 m.position(it->second), tol));
        }
    }
    CHECK(interior > 0);
}

TEST_CASE("diffuse_magnitudes") {
    SUBCASE("uniform constraints give a uniform field") {
        const auto m = make_icosphere(3);
        std::map<int, double> c;
        for (int v = 0; v < 40; v += 3) c[v] = 0.05;
        const auto field = diffuse_magnitudes(m, c);
        for (double x : field.values) CHECK(std::abs(x - 0.05) <= 1e-8);
        CHECK(field.constrained == c);
    }
    SUBCASE("two poles stay within the constraint range") {
        const auto m = make_icosphere(3);
        int top = 0, bottom = 0;
        for (std::size_t v = 0; v < m.num_vertices(); ++v) {
            if (m.positions()[v].z() > m.position(top).z()) top = static_cast<int>(v);
            if (m.positions()[v].z() < m.position(bottom).z()) bottom = static_cast<int>(v);
        }
        const auto field = diffuse_magnitudes(m, {{top, 1.0}, {bottom, 0.0}});
        for (double x : field.values) {
            CHECK(x >= -0.05);
            CHECK(x <= 1.05);
        }
    }
    SUBCASE("every vertex constrained") {
        const auto m = make_icosphere(1);
        std::map<int, double> c;
        for (std::size_t v = 0; v < m.num_vertices(); ++v) c[static_cast<int>(v)] = std::sin(static_cast<double>(v));
        const auto field = diffuse_magnitudes(m, c);
        for (const auto& [v, x] : c) CHECK(std::abs(field.values[static_cast<std::size_t>(v)] - x) <= 1e-10);
    }
    SUBCASE("output minimizes the energy") {
        const auto m = make_icosphere(2);
        std::map<int, double> c = {{0, 1.0}, {5, -2.0}, {17, 0.5}};
        const auto field = diffuse_magnitudes(m, c);
        const auto l = laplacian(m);
        auto energy = [&](const Eigen::VectorXd& x) {
            const Eigen::VectorXd lx = l * x;
            double e = 0.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                if (c.count(static_cast<int>(i)) == 0) e += lx(i) * lx(i);
            }
            for (const auto& [v, val] : c) e += (x(v) - val) * (x(v) - val);
            return e;
        };
        const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(field.values.data(), static_cast<Eigen::Index>(field.values.size()));
        const double best = energy(x);
        std::mt19937_64 rng(1);
        std::normal_distribution<double> g;
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd d(x.size());
            for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = g(rng);
            d *= 1e-4 / d.norm();
            CHECK(energy(x + d) >= best);
            CHECK(energy(x - d) >= best);
        }
    }
    SUBCASE("no constraints is an error") { CHECK_THROWS_AS(diffuse_magnitudes(make_icosphere(0), {}), SolverError); }
}

TEST_CASE("target_laplacians") {
    const auto m = make_icosphere(2);
    const std::vector<double> zeros(m.num_vertices(), 0.0);
    for (const auto& d : target_laplacians(m, zeros)) CHECK(d == Vec3::Zero());

    std::vector<double> ones(m.num_vertices(), 1.0), twos(m.num_vertices(), 2.0);
    const auto d1 = target_laplacians(m, ones);
    const auto d2 = target_laplacians(m, twos);
    const auto areas = vertex_areas(m);
    for (std::size_t i = 0; i < d1.size(); ++i) {
        CHECK((d2[i] - 2.0 * d1[i]).norm() <= 1e-15);
        CHECK(d1[i].norm() == doctest::Approx(areas[i]).epsilon(1e-12));
        CHECK(d1[i].dot(m.positions()[i]) / (d1[i].norm() * m.positions()[i].norm()) >= 0.99);
    }
    CHECK_THROWS_AS(target_laplacians(m, std::vector<double>(3, 1.0)), MeshError);
}

TEST_CASE("solve_positions") {
    SUBCASE("pinning every vertex returns the input") {
        const auto m = make_icosphere(2);
        std::map<int, Vec3> pins;
        for (std::size_t v = 0; v < m.num_vertices(); ++v) pins[static_cast<int>(v)] = m.positions()[v];
        const auto out = solve_positions(m, std::vector<Vec3>(m.num_vertices(), Vec3::Zero()), pins);
        for (std::size_t v = 0; v < m.num_vertices(); ++v) CHECK((out.positions()[v] - m.positions()[v]).norm() <= 1e-8);
    }
    SUBCASE("zero targets with a pinned space curve give a membrane") {
        const auto disk = triangulate_polygon(circle(48), 0.12);
        std::map<int, Vec3> pins;
        for (int v = 0; v < 48; ++v) {
            const Vec3 p = disk.position(v);
            pins[v] = Vec3(p.x(), p.y(), 0.3 * std::sin(2.0 * std::atan2(p.y(), p.x())));
        }
        const std::vector<Vec3> zero(disk.num_vertices(), Vec3::Zero());
        const auto out = solve_positions(disk, zero, pins);
        const DenseColumns lv = laplacian(out) * to_matrix(out.positions());
        const double tol = 1e-6 * out.bbox_diagonal();
        for (std::size_t v = 48; v < out.num_vertices(); ++v) CHECK(lv.row(static_cast<Eigen::Index>(v)).norm() <= tol);
        for (const auto& [v, p] : pins) CHECK((out.position(v) - p).norm() <= 1e-9);

        // Exact minimizer of the stated energy.
        const double best = positions_energy(out, out.positions(), zero, pins);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g;
        for (int trial = 0; trial < 50; ++trial) {
            auto pos = out.positions();
            auto neg = out.positions();
            double norm2 = 0.0;
            std::vector<Vec3> d(pos.size());
            for (auto& x : d) {
                x = Vec3(g(rng), g(rng), g(rng));
                norm2 += x.squaredNorm();
            }
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] *= 1e-4 / std::sqrt(norm2);
                pos[i] += d[i];
                neg[i] -= d[i];
            }
            CHECK(positions_energy(out, pos, zero, pins) >= best);
            CHECK(positions_energy(out, neg, zero, pins) >= best);
        }
    }
}

TEST_CASE("generate_initial inflates a circle into a symmetric pillow") {
    const double radius = 1.0;
    const auto curve = SilhouetteCurve::create(circle(200, radius));
    const auto m = generate_initial(curve);
    CHECK(m.is_watertight());
    CHECK(static_cast<long>(m.num_vertices()) - static_cast<long>(m.edges().size()) +
              static_cast<long>(m.num_faces()) == 2);

    const auto box = m.bbox();
    const double thickness = box.max().z() - box.min().z();
    MESSAGE("thickness / diameter = " << thickness / (2 * radius));
    CHECK(thickness / (2 * radius) == doctest::Approx(0.55).epsilon(0.05));

    SUBCASE("outline seen along the mirror axis stays on the circle") {
        std::array<double, 64> reach{};
        for (const auto& p : m.positions()) {
            const double r = p.head<2>().norm();
            CHECK(r <= radius + 0.01 * 2 * radius);
            const double a = std::atan2(p.y(), p.x()) + std::numbers::pi;
            const auto bin = std::min<std::size_t>(63, static_cast<std::size_t>(a / (2 * std::numbers::pi) * 64));
            reach[bin] = std::max(reach[bin], r);
        }
        for (double r : reach) CHECK(r >= radius - 0.01 * 2 * radius);
    }
    SUBCASE("radius as a function of height is the same at 8 azimuths") {
        const MeshBvh bvh(m);
        const double top = box.max().z();
        for (double frac : {0.25, 0.5, 0.75}) {
            double lo = 1e9, hi = 0.0;
            for (int k = 0; k < 8; ++k) {
                const double a = 2 * std::numbers::pi * k / 8 + 0.1;
                const auto hit = bvh.first_hit(Vec3(0, 0, frac * top), Vec3(std::cos(a), std::sin(a), 0));
                REQUIRE(hit);
                lo = std::min(lo, hit->t);
                hi = std::max(hi, hit->t);
            }
            CHECK(hi / lo - 1.0 <= 0.01);
        }
    }
    SUBCASE("mirror symmetric across the sketch plane") {
        const MeshBvh bvh(m);
        for (const auto& p : m.positions()) {
            const Vec3 r(p.x(), p.y(), -p.z());
            double best = 1e9;
            for (const auto& q : m.positions()) best = std::min(best, (q - r).norm());
            CHECK(best <= 1e-9);
        }
    }
}

TEST_CASE("generate_initial is deterministic and scale equivariant") {
    const auto pts = l_shape_dense();
    const auto curve = SilhouetteCurve::create(pts);
    const auto a = generate_initial(curve);
    const auto b = generate_initial(curve);
    CHECK(a == b);

    const double s = 2.5;
    std::vector<Vec2> scaled;
    for (const auto& p : pts) scaled.push_back(s * p);
    const auto big_curve = SilhouetteCurve::create(scaled);
    const auto big = generate_initial(big_curve, s * default_lm(curve));
    REQUIRE(big.num_vertices() == a.num_vertices());
    REQUIRE(big.faces() == a.faces());
    for (std::size_t v = 0; v < a.num_vertices(); ++v) {
        CHECK((big.positions()[v] - s * a.positions()[v]).norm() <= 1e-9 * big.bbox_diagonal());
    }
}
