#include <cmath>
#include <deque>
#include <filesystem>

#include "doctest.h"
#include "sketchmesh/error.hpp"
#include "sketchmesh/primitives.hpp"
#include "sketchmesh/raster.hpp"

using namespace sketchmesh;

namespace {

int count_set(const RasterImage& img) {
    int n = 0;
    for (float v : img.data) n += v > 0.5f;
    return n;
}

int components8(const RasterImage& img) {
    std::vector<char> seen(img.data.size(), 0);
    int comps = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto idx = static_cast<std::size_t>(y * img.width + x);
            if (img.data[idx] < 0.5f || seen[idx]) continue;
            ++comps;
            std::deque<std::pair<int, int>> queue{{x, y}};
            seen[idx] = 1;
            while (!queue.empty()) {
                const auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
                        const auto n = static_cast<std::size_t>(ny * img.width + nx);
                        if (img.data[n] > 0.5f && !seen[n]) {
                            seen[n] = 1;
                            queue.emplace_back(nx, ny);
                        }
                    }
                }
            }
        }
    }
    return comps;
}

double analytic_sphere_z(const Vec2& xy) { return std::sqrt(std::max(0.0, 1.0 - xy.squaredNorm())); }

}  // namespace

TEST_CASE("camera frame") {
    const Box3 box(Vec3(-1, -2, -0.5), Vec3(1, 2, 0.5));
    const OrthoCamera cam(box, ViewSide::Front);
    CHECK(cam.width() == kRasterSize);
    CHECK(cam.height() == kRasterSize);
    // The larger extent (4 in y) plus a 5% margin on each side spans the image.
    CHECK(cam.pixel_size() == doctest::Approx(4.4 / 256));
    const Vec2 top = cam.to_pixel(Vec3(0, 2, 0));
    CHECK(top.y() == doctest::Approx(0.2 / cam.pixel_size()));
    CHECK(cam.to_pixel(Vec3(0, 0, 0)).isApprox(Vec2(128, 128)));
    CHECK(cam.pixel_center(0, 0).isApprox(Vec2(-2.2 + 0.5 * cam.pixel_size(), 2.2 - 0.5 * cam.pixel_size())));
    // Depth runs near to far with 5% of the largest extent as padding.
    CHECK(cam.depth(0.5 + 0.2) == doctest::Approx(0.0));
    CHECK(cam.depth(-0.5 - 0.2) == doctest::Approx(1.0));
    CHECK(cam.mirrored().depth(-0.5 - 0.2) == doctest::Approx(0.0));
    CHECK(cam.mirrored().to_pixel(Vec3(0.3, 0.1, 0)) == cam.to_pixel(Vec3(0.3, 0.1, 0)));
}

TEST_CASE("depth maps") {
    SUBCASE("empty mesh is all background") {
        const TriMesh empty;
        const auto img = render_depth(empty, OrthoCamera::fit(empty, ViewSide::Front));
        for (float v : img.data) CHECK(v == 1.0f);
    }
    SUBCASE("sphere centre pixel matches the analytic depth") {
        const TriMesh sphere = make_icosphere(5);
        const auto cam = OrthoCamera::fit(sphere, ViewSide::Front);
        const auto img = render_depth(sphere, cam);
        const Vec2 xy = cam.pixel_center(128, 128);
        CHECK(std::abs(img.at(128, 128) - cam.depth(analytic_sphere_z(xy))) <= kDepthQuantum);
        int covered = 0;
        for (int j = 0; j < img.height; ++j) {
            for (int i = 0; i < img.width; ++i) {
                const Vec2 c = cam.pixel_center(i, j);
                if (c.norm() < 0.98) {
                    CHECK(img.at(i, j) < 1.0f);
                    CHECK(std::abs(img.at(i, j) - cam.depth(analytic_sphere_z(c))) <= 2 * kDepthQuantum);
                    ++covered;
                } else if (c.norm() > 1.0) {
                    CHECK(img.at(i, j) == 1.0f);
                }
            }
        }
        CHECK(covered > 30000);
    }
    SUBCASE("front and back bracket a convex shape") {
        const TriMesh blob = make_icosphere(3, 0.7, Vec3(0.2, -0.1, 0.3));
        const auto front_cam = OrthoCamera::fit(blob, ViewSide::Front);
        const auto front = render_depth(blob, front_cam);
        const auto back = render_depth(blob, front_cam.mirrored());
        int covered = 0;
        for (std::size_t i = 0; i < front.data.size(); ++i) {
            CHECK((front.data[i] < 1.0f) == (back.data[i] < 1.0f));
            if (front.data[i] < 1.0f) {
                ++covered;
                CHECK(front.data[i] + back.data[i] <= 1.0f + 1e-6f);
            }
        }
        CHECK(covered > 1000);
    }
    SUBCASE("moving toward the camera lowers every covered depth") {
        const TriMesh sphere = make_icosphere(3);
        const Box3 frame(Vec3::Constant(-1.5), Vec3::Constant(1.5));
        for (ViewSide side : {ViewSide::Front, ViewSide::Back}) {
            const OrthoCamera cam(frame, side);
            auto moved = sphere.positions();
            const double eps = side == ViewSide::Front ? 0.01 : -0.01;
            for (auto& p : moved) p.z() += eps;
            const auto before = render_depth(sphere, cam);
            const auto after = render_depth(sphere.with_positions(moved), cam);
            for (std::size_t i = 0; i < before.data.size(); ++i) {
                CHECK((before.data[i] < 1.0f) == (after.data[i] < 1.0f));
                if (before.data[i] < 1.0f) CHECK(after.data[i] < before.data[i]);
            }
        }
    }
}

TEST_CASE("normal maps") {
    SUBCASE("plane facing the camera") {
        const TriMesh plane = make_grid(8, 8, 2.0, 1.0);
        const auto cam = OrthoCamera::fit(plane, ViewSide::Front);
        const auto n = render_normals(plane, cam);
        const auto d = render_depth(plane, cam);
        int covered = 0;
        for (int j = 0; j < n.height; ++j) {
            for (int i = 0; i < n.width; ++i) {
                if (d.at(i, j) < 1.0f) {
                    ++covered;
                    CHECK(n.at(i, j, 0) == 0.0f);
                    CHECK(n.at(i, j, 1) == 0.0f);
                    CHECK(n.at(i, j, 2) == 1.0f);
                } else {
                    CHECK(n.at(i, j, 0) == 0.0f);
                    CHECK(n.at(i, j, 1) == 0.0f);
                    CHECK(n.at(i, j, 2) == 0.0f);
                }
            }
        }
        CHECK(covered > 256 * 100);
    }
    SUBCASE("sphere normals are radial") {
        const TriMesh sphere = make_icosphere(4);
        const auto cam = OrthoCamera::fit(sphere, ViewSide::Front);
        const auto n = render_normals(sphere, cam);
        const auto d = render_depth(sphere, cam);
        double worst = 0.0;
        for (int j = 0; j < n.height; ++j) {
            for (int i = 0; i < n.width; ++i) {
                if (d.at(i, j) == 1.0f) continue;
                const Vec2 c = cam.pixel_center(i, j);
                const Vec3 radial = Vec3(c.x(), c.y(), analytic_sphere_z(c)).normalized();
                const Vec3 got(n.at(i, j, 0), n.at(i, j, 1), n.at(i, j, 2));
                worst = std::max(worst, std::acos(std::clamp(got.normalized().dot(radial), -1.0, 1.0)));
            }
        }
        CHECK(worst * 180.0 / M_PI <= 5.0);
    }
}

TEST_CASE("contour images") {
    SUBCASE("sphere outline is one thin ring") {
        const TriMesh sphere = make_icosphere(4);
        const auto cam = OrthoCamera::fit(sphere, ViewSide::Front);
        const auto s = render_contours(sphere, cam);
        const double diameter_px = 2.0 / cam.pixel_size();
        CHECK(components8(s) == 1);
        CHECK(std::abs(count_set(s) - M_PI * diameter_px) <= 0.15 * M_PI * diameter_px);

        const auto d = render_depth(sphere, cam);
        for (int j = 0; j < s.height; ++j) {
            for (int i = 0; i < s.width; ++i) {
                if (s.at(i, j) < 0.5f) continue;
                bool near_mask = false;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int x = i + dx, y = j + dy;
                        if (x >= 0 && y >= 0 && x < s.width && y < s.height && d.at(x, y) < 1.0f) near_mask = true;
                    }
                }
                CHECK(near_mask);
            }
        }
    }
    SUBCASE("strokes without a mesh") {
        const TriMesh empty;
        const OrthoCamera cam(Box3(Vec3::Constant(-1), Vec3::Constant(1)), ViewSide::Front);
        const Stroke line{StrokeKind::OnSurface, {Vec3(-0.5, 0, 0), Vec3(0.5, 0, 0)}};
        const auto s = render_contours(empty, cam, {line});
        const int expected = static_cast<int>(std::floor(cam.to_pixel(line.points[1]).x())) -
                             static_cast<int>(std::floor(cam.to_pixel(line.points[0]).x())) + 1;
        CHECK(count_set(s) == expected);
        CHECK(components8(s) == 1);
        CHECK(count_set(render_contours(empty, cam)) == 0);
    }
    SUBCASE("strokes join the contours") {
        const TriMesh sphere = make_icosphere(3);
        const auto cam = OrthoCamera::fit(sphere, ViewSide::Front);
        const Stroke across{StrokeKind::OnSurface, {Vec3(-0.3, 0.2, 0.9), Vec3(0.3, 0.2, 0.9)}};
        CHECK(count_set(render_contours(sphere, cam, {across})) > count_set(render_contours(sphere, cam)));
    }
}

TEST_CASE("detail input stack") {
    const TriMesh sphere = make_icosphere(3);
    const auto stack = render_detail_input(sphere);
    CHECK(stack.width == 256);
    CHECK(stack.height == 256);
    CHECK(stack.channels == 6);

    const auto cam = OrthoCamera::fit(sphere, ViewSide::Front);
    const auto s = render_contours(sphere, cam);
    const auto n = render_normals(sphere, cam);
    const auto df = render_depth(sphere, cam);
    const auto db = render_depth(sphere, cam.mirrored());
    for (int j = 0; j < 256; j += 17) {
        for (int i = 0; i < 256; i += 13) {
            CHECK(stack.at(i, j, 0) == s.at(i, j));
            CHECK(stack.at(i, j, 1) == n.at(i, j, 0));
            CHECK(stack.at(i, j, 2) == n.at(i, j, 1));
            CHECK(stack.at(i, j, 3) == n.at(i, j, 2));
            CHECK(stack.at(i, j, 4) == df.at(i, j));
            CHECK(stack.at(i, j, 5) == db.at(i, j));
        }
    }

    SUBCASE("visible points land on the same pixel in every map") {
        for (int v = 0; v < static_cast<int>(sphere.num_vertices()); ++v) {
            const Vec3& p = sphere.position(v);
            if (p.z() < 0.3) continue;
            const Vec2 px = cam.to_pixel(p);
            const int i = static_cast<int>(std::floor(px.x())), j = static_cast<int>(std::floor(px.y()));
            CHECK(df.at(i, j) < 1.0f);
            CHECK(Vec3(n.at(i, j, 0), n.at(i, j, 1), n.at(i, j, 2)).norm() > 0.5);
            CHECK(std::abs(df.at(i, j) - cam.depth(p.z())) < 0.02);
        }
    }
    SUBCASE("file round trip is bit-identical") {
        const auto bytes = encode_stack(stack);
        CHECK(bytes.size() == 20 + 4 * 256 * 256 * 6);
        CHECK(bytes.substr(0, 4) == "SMIS");
        CHECK(decode_stack(bytes) == stack);
        CHECK(encode_stack(decode_stack(bytes)) == bytes);
        const auto path = (std::filesystem::temp_directory_path() / "sketchmesh_stack_test.smis").string();
        save_stack(stack, path);
        CHECK(load_stack(path) == stack);
        std::filesystem::remove(path);
        CHECK_THROWS_AS(decode_stack(bytes.substr(0, bytes.size() - 1)), FormatError);
        CHECK_THROWS_AS(decode_stack("SMIX" + bytes.substr(4)), FormatError);
    }
    SUBCASE("mismatched inputs are rejected") {
        const RasterImage small(128, 128, 1, 1.0f);
        CHECK_THROWS_WITH_AS(compose_detail_input(s, n, small, db), doctest::Contains("front depth is 128x128"),
                             FormatError);
        CHECK_THROWS_AS(compose_detail_input(s, df, df, db), FormatError);
        CHECK_THROWS_AS(compose_detail_input(n, n, df, db), FormatError);
    }
    SUBCASE("netpbm export") {
        const auto pgm = to_netpbm(df);
        CHECK(pgm.rfind("P5\n256 256\n255\n", 0) == 0);
        CHECK(pgm.size() == 15 + 256 * 256);
        const auto ppm = to_netpbm(n);
        CHECK(ppm.rfind("P6\n256 256\n255\n", 0) == 0);
        CHECK(ppm.size() == 15 + 3 * 256 * 256);
        // Background normal (0, 0, 0) maps to mid-grey.
        CHECK(static_cast<unsigned char>(ppm[15]) == 128);
        CHECK_THROWS_AS(to_netpbm(stack), FormatError);
    }
    SUBCASE("rendering is deterministic") {
        CHECK(render_detail_input(sphere) == stack);
    }
}
