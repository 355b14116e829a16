#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "sketchmesh/error.hpp"
#include "sketchmesh/primitives.hpp"
#include "sketchmesh/refine.hpp"

using namespace sketchmesh;

namespace {

// Scalar walk for a radial field clamp(0.5 − (x − R)/w, 0, 1) along a radial
// direction; returns x after each iteration.
std::vector<double> radial_walk(double x, double radius, double falloff, const ProjectionSchedule& s) {
    std::vector<double> out;
    double d = s.step0;
    int prev = 0;
    for (int k = 0; k < s.iterations; ++k) {
        const double f = std::clamp(0.5 - (x - radius) / falloff, 0.0, 1.0);
        const int sign = f > s.alpha ? 1 : (f < s.alpha ? -1 : 0);
        if (sign * prev < 0) d *= s.ratio;
        if (sign != 0) prev = sign;
        x += d * sign;
        out.push_back(x);
    }
    return out;
}

Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

double max_radius_error(const TriMesh& m, double r) {
    double worst = 0.0;
    for (const auto& p : m.positions()) worst = std::max(worst, std::abs(p.norm() - r));
    return worst;
}

std::vector<Vec3> noisy(const TriMesh& m, double amplitude, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    std::vector<Vec3> out = m.positions();
    for (auto& p : out) p += Vec3(u(rng), u(rng), u(rng));
    return out;
}

std::vector<Vec3> arc_on_unit_sphere(double z, double t0, double t1, int n) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) {
        const double t = t0 + (t1 - t0) * i / (n - 1);
        pts.push_back(Vec3(std::cos(t), std::sin(t), z).normalized());
    }
    return pts;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (a + t * ab - p).norm();
}

}  // namespace

TEST_CASE("projection trajectories match the scalar walk for a radial field") {
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));
    ProjectionSchedule schedule;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> radius(0.55, 1.45);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Vec3> points, dirs;
    std::vector<double> starts;
    for (int i = 0; i < 500; ++i) {
        const Vec3 n = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
        const double r = radius(rng);
        starts.push_back(r);
        dirs.push_back(n);
        points.push_back(r * n);
    }
    const auto result = project_points(points, dirs, field, schedule, true);
    REQUIRE(result.trace.size() == 5);
    CHECK(result.clamped_queries == 0);
    int flipped = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto expected = radial_walk(starts[i], 1.0, field.falloff(), schedule);
        for (std::size_t k = 0; k < expected.size(); ++k) {
            CHECK(std::abs(result.trace[k][i].norm() - expected[k]) <= 1e-12);
            CHECK((result.trace[k][i] - expected[k] * dirs[i]).norm() <= 1e-12);
        }
        if (std::abs(expected.back() - 1.0) < std::abs(starts[i] - 1.0)) ++flipped;
        CHECK(result.targets[i] == result.trace.back()[i]);
    }
    CHECK(flipped > 250);
}

TEST_CASE("projection on mesh vertices follows their normals") {
    const TriMesh ico = make_icosphere(0, 1.3);
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));
    const auto result = project_to_isosurface(ico, field, {}, nullptr, true);
    const auto normals = vertex_normals(ico);
    for (std::size_t v = 0; v < ico.num_vertices(); ++v) {
        CHECK((normals[v] - ico.position(static_cast<int>(v)).normalized()).norm() < 1e-12);
        CHECK(std::abs(result.targets[v].norm() - 1.0) < 1e-9);
    }

    SUBCASE("as-printed sign walks away from the surface") {
        ProjectionSchedule s;
        s.sign = ProjectionSign::AsPrinted;
        const auto away = project_to_isosurface(ico, field, s);
        for (const auto& p : away.targets) CHECK(p.norm() == doctest::Approx(1.8).epsilon(1e-12));
    }
    SUBCASE("region restriction") {
        const auto region = VertexRegion::from_members(ico, {0, 5});
        const auto part = project_to_isosurface(ico, field, {}, &region);
        for (std::size_t v = 0; v < ico.num_vertices(); ++v) {
            if (region.contains(static_cast<int>(v))) {
                CHECK(part.targets[v] == result.targets[v]);
            } else {
                CHECK(part.targets[v] == ico.position(static_cast<int>(v)));
            }
        }
    }
    SUBCASE("recomputed normals agree on a symmetric mesh") {
        ProjectionSchedule s;
        s.recompute_normals = true;
        const auto again = project_to_isosurface(ico, field, s);
        for (std::size_t v = 0; v < ico.num_vertices(); ++v) {
            CHECK((again.targets[v] - result.targets[v]).norm() < 1e-9);
        }
    }
}

TEST_CASE("queries outside the field domain are clamped and reported") {
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));
    std::vector<std::string> warnings;
    set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    const std::vector<Vec3> pts{Vec3(40.0, 0.0, 0.0)};
    const std::vector<Vec3> dirs{Vec3::UnitX()};
    const auto result = project_points(pts, dirs, field);
    set_warning_sink(nullptr);
    CHECK(result.clamped_queries == 5);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("clamped") != std::string::npos);
    CHECK(result.targets[0].x() == doctest::Approx(40.0 - 0.5));
}

TEST_CASE("projection schedule validation") {
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));
    const std::vector<Vec3> pts{Vec3::UnitX()};
    ProjectionSchedule bad;
    bad.ratio = 0.0;
    CHECK_THROWS_AS(project_points(pts, pts, field, bad), FieldError);
    bad = {};
    bad.step0 = -1.0;
    CHECK_THROWS_AS(project_points(pts, pts, field, bad), FieldError);
    bad = {};
    bad.alpha = 1.0;
    CHECK_THROWS_AS(project_points(pts, pts, field, bad), FieldError);
    CHECK_THROWS_AS(project_points(pts, {}, field), FieldError);
}

TEST_CASE("smoothness fit") {
    const TriMesh sphere = make_icosphere(1);
    const auto targets = noisy(sphere, 0.05, 3);

    SUBCASE("lambda zero reproduces the targets") {
        const auto fitted = fit_with_smoothness(sphere, targets, FitParams{0.0});
        for (std::size_t v = 0; v < targets.size(); ++v) {
            CHECK((fitted.position(static_cast<int>(v)) - targets[v]).norm() <= 1e-10);
        }
    }
    SUBCASE("matches the dense normal equations") {
        const double lambda = 0.7;
        const Eigen::MatrixXd l = dense(laplacian(sphere));
        const Eigen::MatrixXd a = lambda * l.transpose() * l + Eigen::MatrixXd::Identity(l.rows(), l.cols());
        const Eigen::MatrixXd x = a.ldlt().solve(to_matrix(targets));
        const auto fitted = fit_with_smoothness(sphere, targets, FitParams{lambda});
        CHECK((to_matrix(fitted.positions()) - x).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("region fit pins the outside and matches the reduced system") {
        const double lambda = 1.0;
        const auto region = VertexRegion::from_members(sphere, k_ring(sphere, std::vector<int>{0}, 1));
        const auto fitted = fit_with_smoothness(sphere, targets, FitParams{lambda}, &region);
        const Eigen::MatrixXd l = dense(laplacian(sphere));
        const auto& r = region.members;
        std::vector<int> o;
        for (int v = 0; v < static_cast<int>(sphere.num_vertices()); ++v) {
            if (!region.contains(v)) o.push_back(v);
        }
        const Eigen::MatrixXd lrr = l(r, r);
        const Eigen::MatrixXd lro = l(r, o);
        const Eigen::MatrixXd xo = to_matrix(sphere.positions())(o, Eigen::all);
        const Eigen::MatrixXd tr = to_matrix(targets)(r, Eigen::all);
        const Eigen::MatrixXd a =
            lambda * lrr.transpose() * lrr + Eigen::MatrixXd::Identity(lrr.rows(), lrr.cols());
        const Eigen::MatrixXd x = a.ldlt().solve(tr - lambda * lrr.transpose() * lro * xo);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK((fitted.position(r[i]).transpose() - x.row(static_cast<Eigen::Index>(i))).norm() <= 1e-10);
        }
        for (int v : o) CHECK(fitted.position(v) == sphere.position(v));
    }
    SUBCASE("translation equivariance") {
        const Vec3 t(0.31, -1.7, 2.25);
        std::vector<Vec3> shifted = targets;
        for (auto& p : shifted) p += t;
        const auto a = fit_with_smoothness(sphere, targets, FitParams{1.0});
        const auto b = fit_with_smoothness(sphere, shifted, FitParams{1.0});
        for (std::size_t v = 0; v < targets.size(); ++v) {
            CHECK((b.position(static_cast<int>(v)) - a.position(static_cast<int>(v)) - t).norm() <= 1e-9);
        }
    }
    SUBCASE("heavy smoothing lowers the Laplacian energy") {
        const SparseMatrix l = laplacian(sphere);
        const auto energy = [&](const TriMesh& m) { return (l * to_matrix(m.positions())).squaredNorm(); };
        const auto loose = fit_with_smoothness(sphere, targets, FitParams{0.0});
        const auto stiff = fit_with_smoothness(sphere, targets, FitParams{1e3});
        CHECK(energy(stiff) <= energy(loose));
    }
    SUBCASE("random perturbations never lower the objective") {
        const double lambda = 0.2;
        const SparseMatrix l = laplacian(sphere);
        const DenseColumns t = to_matrix(targets);
        const auto objective = [&](const DenseColumns& x) {
            return lambda * (l * x).squaredNorm() + (x - t).squaredNorm();
        };
        const DenseColumns best = to_matrix(fit_with_smoothness(sphere, targets, FitParams{lambda}).positions());
        const double e0 = objective(best);
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<int> coin(0, 1);
        for (int trial = 0; trial < 50; ++trial) {
            DenseColumns x = best;
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += coin(rng) ? 1e-4 : -1e-4;
            CHECK(objective(x) >= e0);
        }
    }
    SUBCASE("bad arguments") {
        CHECK_THROWS_AS(fit_with_smoothness(sphere, {}, FitParams{1.0}), MeshError);
        CHECK_THROWS_AS(fit_with_smoothness(sphere, targets, FitParams{-1.0}), SolverError);
    }
}

TEST_CASE("inflated sphere against the unit-sphere field") {
    const TriMesh start = make_icosphere(4, 1.3);
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));
    const RefineParams params;

    // From gap 0.3 the walk reaches the surface after three steps up to
    // rounding; the side it lands on decides the residual, so take the worse.
    double bound = 0.0;
    for (double eps : {-1e-9, 1e-9}) {
        bound = std::max(bound, std::abs(radial_walk(1.3 + eps, 1.0, field.falloff(), params.schedule).back() - 1.0));
    }
    CHECK(bound == doctest::Approx(0.05));

    const auto projected = project_to_isosurface(start, field, params.schedule);
    double worst = 0.0;
    for (const auto& p : projected.targets) worst = std::max(worst, std::abs(p.norm() - 1.0));
    CHECK(worst <= bound);

    // The λ = 1 fit shrinks a sphere slightly on top of the projection residual.
    const TriMesh refined = refine_coarse(start, field, params);
    CHECK(max_radius_error(refined, 1.0) <= bound + 1e-3);
    CHECK(refine_coarse(start, field, params) == refined);
}

TEST_CASE("coarse refinement examples") {
    const TriMesh sphere = make_icosphere(4);
    const auto field = AnalyticField(Sdf::sphere(Vec3::Zero(), 1.0));

    SUBCASE("ellipsoid converges toward the sphere") {
        auto pos = sphere.positions();
        for (auto& p : pos) p = p.cwiseProduct(Vec3(0.9, 1.0, 1.1));
        CHECK(max_radius_error(refine_coarse(sphere.with_positions(pos), field), 1.0) <= 0.05);
    }
    SUBCASE("own field is nearly a fixed point") {
        const RefineParams params;
        const auto refined = refine_coarse(sphere, *mesh_to_field(sphere), params);
        double worst = 0.0;
        for (std::size_t v = 0; v < sphere.num_vertices(); ++v) {
            worst = std::max(worst, (refined.position(static_cast<int>(v)) - sphere.position(static_cast<int>(v))).norm());
        }
        CHECK(worst <= params.schedule.step0 * std::pow(params.schedule.ratio, 4));
    }
    SUBCASE("a vertex exactly on the level set holds") {
        const std::vector<Vec3> pts{Vec3(1.0, 0.0, 0.0), Vec3(0.0, 0.0, -1.0)};
        const std::vector<Vec3> dirs{Vec3::UnitX(), -Vec3::UnitZ()};
        const auto result = project_points(pts, dirs, field);
        CHECK(result.targets == pts);
    }
    SUBCASE("rounds must be positive") {
        RefineParams params;
        params.outer_rounds = 0;
        CHECK_THROWS_AS(refine_coarse(sphere, field, params), FieldError);
    }
}

TEST_CASE("walk step bounds over many radial starts") {
    const ProjectionSchedule s;
    const double w = 0.0693;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> start(0.2, 1.8);
    for (int trial = 0; trial < 2000; ++trial) {
        const double x0 = start(rng);
        std::vector<double> pts{x0};
        const auto xs = radial_walk(x0, 1.0, w, s);
        pts.insert(pts.end(), xs.begin(), xs.end());
        double total = 0.0, after = 0.0;
        bool flipped = false;
        for (std::size_t k = 1; k < pts.size(); ++k) {
            const double step = std::abs(pts[k] - pts[k - 1]);
            total += step;
            if (k >= 2 && (pts[k] - pts[k - 1]) * (pts[k - 1] - pts[k - 2]) < 0) flipped = true;
            if (flipped) after += step;
        }
        CHECK(total <= s.step0 * s.iterations + 1e-12);
        CHECK(after <= s.step0 / (1.0 - s.ratio) + 1e-12);
    }
}

TEST_CASE("distance to the surface can grow after the first flip") {
    // Gaps 0.09, 0.04, 0.01, 0.015: a walk that lands within half a step of the
    // surface overshoots on the next halved step.
    const auto xs = radial_walk(1.01, 1.0, 0.0693, ProjectionSchedule{});
    CHECK(xs[0] == doctest::Approx(0.91));
    CHECK(xs[1] == doctest::Approx(0.96));
    CHECK(xs[2] == doctest::Approx(1.01));
    CHECK(xs[3] == doctest::Approx(0.985));
    CHECK(std::abs(xs[3] - 1.0) > std::abs(xs[2] - 1.0));
}

TEST_CASE("carving against the mesh's own field moves little") {
    const TriMesh sphere = make_icosphere(3);
    const auto field = mesh_to_field(sphere);
    const Stroke stroke{StrokeKind::OnSurface, arc_on_unit_sphere(0.2, 0.0, 0.8, 12)};
    const CarveParams params;
    const auto carved = carve_details(sphere, {stroke}, *field, params);

    const int nv = static_cast<int>(sphere.num_vertices());
    std::vector<int> original;
    for (int v : carved.region.members) {
        if (v < nv) original.push_back(v);
    }
    REQUIRE(!original.empty());
    const auto before = midpoint_subdivide(sphere, VertexRegion::from_members(sphere, original)).mesh;
    REQUIRE(before.num_vertices() == carved.mesh.num_vertices());
    CHECK(carved.mesh.num_vertices() > sphere.num_vertices());

    const double bound = params.schedule.step0 * std::pow(params.schedule.ratio, 4);
    double worst = 0.0;
    for (int v : carved.region.members) {
        worst = std::max(worst, (carved.mesh.position(v) - before.position(v)).norm());
    }
    CHECK(worst <= bound);

    const auto touched = carved.region.mask(carved.mesh.num_vertices());
    std::vector<char> band(carved.mesh.num_vertices(), 0);
    for (int v : carved.band) band[static_cast<std::size_t>(v)] = 1;
    CHECK(!carved.band.empty());
    for (int v = 0; v < static_cast<int>(carved.mesh.num_vertices()); ++v) {
        if (!touched[static_cast<std::size_t>(v)] && !band[static_cast<std::size_t>(v)]) {
            CHECK(carved.mesh.position(v) == before.position(v));
        }
    }
    CHECK(carved.mesh.faces() == before.faces());
}

TEST_CASE("carving a groove") {
    const TriMesh sphere = make_icosphere(4);
    const auto path = arc_on_unit_sphere(0.0, 0.0, 0.5, 16);
    const Vec3 a = path.front(), b = path.back();
    const auto field = AnalyticField(Sdf::smooth_subtract(Sdf::sphere(Vec3::Zero(), 1.0), Sdf::capsule(a, b, 0.12)));
    const auto carved = carve_details(sphere, {Stroke{StrokeKind::OnSurface, path}}, field);

    const auto before =
        midpoint_subdivide(sphere, VertexRegion::from_members(sphere, [&] {
                               std::vector<int> o;
                               for (int v : carved.region.members) {
                                   if (v < static_cast<int>(sphere.num_vertices())) o.push_back(v);
                               }
                               return o;
                           }()))
            .mesh;
    double sum = 0.0;
    int count = 0;
    for (int v : carved.region.members) {
        const Vec3& p = before.position(v);
        if (segment_distance(p, a, b) < 0.08) {
            sum += carved.mesh.position(v).norm() - p.norm();
            ++count;
        }
    }
    REQUIRE(count > 10);
    CHECK(sum / count < -0.03);

    const auto touched = carved.region.mask(carved.mesh.num_vertices());
    std::vector<char> band(carved.mesh.num_vertices(), 0);
    for (int v : carved.band) band[static_cast<std::size_t>(v)] = 1;
    for (int v = 0; v < static_cast<int>(carved.mesh.num_vertices()); ++v) {
        if (!touched[static_cast<std::size_t>(v)] && !band[static_cast<std::size_t>(v)]) {
            CHECK(carved.mesh.position(v) == before.position(v));
        }
    }
}

TEST_CASE("carve input handling") {
    const TriMesh sphere = make_icosphere(2);
    const auto field = mesh_to_field(sphere);
    const auto same = carve_details(sphere, {}, *field);
    CHECK(same.mesh == sphere);
    CHECK(same.region.empty());
    const Stroke far{StrokeKind::OnSurface, {Vec3(3, 0, 0), Vec3(3, 0.1, 0)}};
    CHECK_THROWS_WITH_AS(carve_details(sphere, {far}, *field), doctest::Contains("from the surface"), StrokeError);
}

TEST_CASE("extrusion of a flat patch") {
    const TriMesh grid = make_grid(40, 40, 2.0, 2.0);
    const std::vector<Vec3> loop{Vec3(0.5, 0.5, 0), Vec3(1.5, 0.5, 0), Vec3(1.5, 1.5, 0), Vec3(0.5, 1.5, 0)};
    const ViewFrame view;
    const double h = 0.2;
    const auto tri = [](double height) {
        return std::vector<Vec2>{Vec2(0.5, 0.0), Vec2(1.0, height), Vec2(1.5, 0.0)};
    };

    const auto once = extrude(grid, loop, tri(h), view);
    REQUIRE(once.mesh.num_vertices() == grid.num_vertices());
    double peak = 0.0;
    for (std::size_t v = 0; v < grid.num_vertices(); ++v) {
        const Vec3 d = once.mesh.position(static_cast<int>(v)) - grid.position(static_cast<int>(v));
        CHECK(d.head<2>().norm() == 0.0);
        peak = std::max(peak, d.z());
        if (!once.region.contains(static_cast<int>(v))) CHECK(d.z() == 0.0);
    }
    CHECK(std::abs(peak - h) <= 0.05 * h);

    for (int v : once.region.boundary_ring) {
        CHECK(once.mesh.position(v) == grid.position(v));
    }

    const auto twice = extrude(grid, loop, tri(2 * h), view);
    for (std::size_t v = 0; v < grid.num_vertices(); ++v) {
        const double d1 = once.mesh.position(static_cast<int>(v)).z();
        const double d2 = twice.mesh.position(static_cast<int>(v)).z();
        CHECK(std::abs(d2 - 2 * d1) <= 1e-12);
    }

    CHECK(extrude(grid, loop, {Vec2(0.5, 0.0), Vec2(1.5, 0.0)}, view).mesh == grid);
    CHECK_THROWS_WITH_AS(extrude(grid, loop, {Vec2(0.5, 0.2), Vec2(1.0, 0.3), Vec2(1.5, 0.0)}, view),
                         doctest::Contains("rise from the region boundary"), StrokeError);
    CHECK_THROWS_AS(extrude(grid, loop, {Vec2(0.5, 0.0), Vec2(1.2, 0.2), Vec2(0.9, 0.1), Vec2(1.5, 0.0)}, view),
                    StrokeError);
    CHECK_THROWS_AS(extrude(grid, {Vec3(0.5, 0.5, 0), Vec3(1.5, 0.5, 0)}, tri(h), view), StrokeError);
}

TEST_CASE("extrusion refines a coarse curved patch") {
    const TriMesh sphere = make_icosphere(2);
    const Vec3 c = sphere.position(0).normalized();
    const Vec3 right = c.unitOrthogonal();
    const Vec3 up = c.cross(right);
    std::vector<Vec3> loop;
    for (int i = 0; i < 24; ++i) {
        const double t = 2.0 * M_PI * i / 24;
        loop.push_back((c + 0.4 * (std::cos(t) * right + std::sin(t) * up)).normalized());
    }
    const double h = 0.15;
    const std::vector<Vec2> profile{Vec2(-0.4, 0.0), Vec2(0.0, h), Vec2(0.4, 0.0)};
    const auto out = extrude(sphere, loop, profile, ViewFrame{right, up});
    CHECK(out.mesh.num_vertices() > sphere.num_vertices());
    const double lift = (out.mesh.position(0) - sphere.position(0)).norm();
    CHECK(std::abs(lift - h) <= 0.05 * h);
    CHECK(out.mesh.position(0).dot(c) > 1.0);
    CHECK(out.mesh.is_watertight());
}
