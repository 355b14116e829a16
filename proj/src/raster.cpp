#include "sketchmesh/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

constexpr char kStackMagic[4] = {'S', 'M', 'I', 'S'};
constexpr std::uint32_t kStackVersion = 1;
constexpr double kMargin = 0.05;

struct Fragment {
    double z = 0.0;
    int face = -1;
    Vec3 bary = Vec3::Zero();
};

double cross2(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// True when depth z is nearer to the camera than `than`.
bool nearer(ViewSide side, double z, double than) { return side == ViewSide::Front ? z > than : z < than; }

std::vector<Fragment> rasterize(const TriMesh& mesh, const OrthoCamera& cam) {
    const int w = cam.width(), h = cam.height();
    std::vector<Fragment> buffer(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f) {
        const Face& t = mesh.face(f);
        const Vec3& a = mesh.position(t[0]);
        const Vec3& b = mesh.position(t[1]);
        const Vec3& c = mesh.position(t[2]);
        const Vec2 pa = cam.to_pixel(a), pb = cam.to_pixel(b), pc = cam.to_pixel(c);
        const double area = cross2(pa, pb, pc);
        if (std::abs(area) < 1e-12) continue;  // edge-on
        const double min_x = std::min({pa.x(), pb.x(), pc.x()}), max_x = std::max({pa.x(), pb.x(), pc.x()});
        const double min_y = std::min({pa.y(), pb.y(), pc.y()}), max_y = std::max({pa.y(), pb.y(), pc.y()});
        const int i0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
        const int i1 = std::min(w - 1, static_cast<int>(std::floor(max_x - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
        const int j1 = std::min(h - 1, static_cast<int>(std::floor(max_y - 0.5)));
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                const Vec2 q(i + 0.5, j + 0.5);
                const double w0 = cross2(pb, pc, q) / area;
                const double w1 = cross2(pc, pa, q) / area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
                const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
                Fragment& frag = buffer[static_cast<std::size_t>(j) * static_cast<std::size_t>(w) + static_cast<std::size_t>(i)];
                if (frag.face < 0 || nearer(cam.side(), z, frag.z)) frag = Fragment{z, f, Vec3(w0, w1, w2)};
            }
        }
    }
    return buffer;
}

template <typename Plot>
void bresenham(int x0, int y0, int x1, int y1, Plot&& plot) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        plot(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

int pixel_index(double p) { return static_cast<int>(std::floor(p)); }

// Zhang–Suen thinning of a 0/1 image in place.
void thin(std::vector<unsigned char>& img, int w, int h) {
    auto px = [&](int x, int y) -> int {
        if (x < 0 || y < 0 || x >= w || y >= h) return 0;
        return img[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
    };
    bool changed = true;
    std::vector<std::size_t> remove;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            remove.clear();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!px(x, y)) continue;
                    // Neighbours P2..P9 clockwise from north.
                    const int p[8] = {px(x, y - 1), px(x + 1, y - 1), px(x + 1, y), px(x + 1, y + 1),
                                      px(x, y + 1), px(x - 1, y + 1), px(x - 1, y), px(x - 1, y - 1)};
                    int count = 0, transitions = 0;
                    for (int k = 0; k < 8; ++k) {
                        count += p[k];
                        if (!p[k] && p[(k + 1) % 8]) ++transitions;
                    }
                    if (count < 2 || count > 6 || transitions != 1) continue;
                    const bool ok = pass == 0 ? (!(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6]))
                                              : (!(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6]));
                    if (ok) remove.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x));
                }
            }
            for (auto i : remove) img[i] = 0;
            changed = changed || !remove.empty();
        }
    }
}

void check_same_size(const RasterImage& a, const RasterImage& b, const char* name, int channels) {
    if (b.channels != channels) {
        throw FormatError(std::string("compose_detail_input: ") + name + " has " + std::to_string(b.channels) +
                          " channels, expected " + std::to_string(channels));
    }
    if (a.width != b.width || a.height != b.height) {
        throw FormatError(std::string("compose_detail_input: ") + name + " is " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ", expected " + std::to_string(a.width) + "x" +
                          std::to_string(a.height));
    }
}

}  // namespace

RasterImage::RasterImage(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
    if (w <= 0 || h <= 0 || c <= 0) throw FormatError("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill);
}

OrthoCamera::OrthoCamera(const Box3& box, ViewSide side, int width, int height)
    : side_(side), width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw FormatError("camera image size must be positive");
    if (box.isEmpty()) throw MeshError("camera frame box is empty");
    const Vec3 size = box.sizes();
    const Vec3 centre = box.center();
    // Square pixels sized so the larger extent plus the margins fills the image.
    const double extent = std::max(size.x() / width, size.y() / height);
    pixel_ = std::max(extent, 1e-12) * (1.0 + 2.0 * kMargin);
    x0_ = centre.x() - 0.5 * pixel_ * width;
    y1_ = centre.y() + 0.5 * pixel_ * height;
    const double pad = kMargin * std::max({size.z(), size.x(), size.y(), 1e-12});
    z_near_front_ = box.max().z() + pad;
    z_far_front_ = box.min().z() - pad;
}

OrthoCamera OrthoCamera::fit(const TriMesh& mesh, ViewSide side, int width, int height) {
    Box3 box = mesh.empty() ? Box3(Vec3::Constant(-1.0), Vec3::Constant(1.0)) : mesh.bbox();
    return OrthoCamera(box, side, width, height);
}

OrthoCamera OrthoCamera::mirrored() const {
    OrthoCamera other = *this;
    other.side_ = side_ == ViewSide::Front ? ViewSide::Back : ViewSide::Front;
    return other;
}

Vec2 OrthoCamera::to_pixel(const Vec3& p) const { return Vec2((p.x() - x0_) / pixel_, (y1_ - p.y()) / pixel_); }

Vec2 OrthoCamera::pixel_center(int i, int j) const { return Vec2(x0_ + (i + 0.5) * pixel_, y1_ - (j + 0.5) * pixel_); }

double OrthoCamera::depth(double z) const {
    const double range = z_near_front_ - z_far_front_;
    const double d = side_ == ViewSide::Front ? (z_near_front_ - z) / range : (z - z_far_front_) / range;
    return std::clamp(d, 0.0, 1.0);
}

RasterImage render_depth(const TriMesh& mesh, const OrthoCamera& camera) {
    RasterImage img(camera.width(), camera.height(), 1, 1.0f);
    const auto buffer = rasterize(mesh, camera);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        if (buffer[i].face >= 0) img.data[i] = static_cast<float>(camera.depth(buffer[i].z));
    }
    return img;
}

RasterImage render_normals(const TriMesh& mesh, const OrthoCamera& camera) {
    RasterImage img(camera.width(), camera.height(), 3, 0.0f);
    if (mesh.empty()) return img;
    const auto buffer = rasterize(mesh, camera);
    const auto normals = vertex_normals(mesh);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Fragment& f = buffer[i];
        if (f.face < 0) continue;
        const Face& t = mesh.face(f.face);
        Vec3 n = f.bary[0] * normals[static_cast<std::size_t>(t[0])] + f.bary[1] * normals[static_cast<std::size_t>(t[1])] +
                 f.bary[2] * normals[static_cast<std::size_t>(t[2])];
        n = n.norm() > 0.0 ? n.normalized() : mesh.face_normal(f.face);
        for (int c = 0; c < 3; ++c) img.data[3 * i + static_cast<std::size_t>(c)] = static_cast<float>(n[c]);
    }
    return img;
}

RasterImage render_contours(const TriMesh& mesh, const OrthoCamera& camera, const std::vector<Stroke>& strokes) {
    const int w = camera.width(), h = camera.height();
    std::vector<unsigned char> mask(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    auto plot = [&](int x, int y) {
        if (x >= 0 && y >= 0 && x < w && y < h) mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = 1;
    };

    if (!mesh.empty() && mesh.num_faces() > 0) {
        const auto buffer = rasterize(mesh, camera);
        const double toward = camera.side() == ViewSide::Front ? 1.0 : -1.0;
        std::vector<char> facing(mesh.num_faces());
        for (std::size_t f = 0; f < facing.size(); ++f) {
            facing[f] = toward * mesh.face_normal(static_cast<int>(f)).z() > 0.0;
        }
        // Faces per undirected edge.
        std::vector<std::array<int, 2>> edge_faces;
        std::vector<std::array<int, 2>> edges = mesh.edges();
        edge_faces.assign(edges.size(), {-1, -1});
        for (int f = 0; f < static_cast<int>(mesh.num_faces()); ++f) {
            const Face& t = mesh.face(f);
            for (int k = 0; k < 3; ++k) {
                std::array<int, 2> e{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])};
                const auto it = std::lower_bound(edges.begin(), edges.end(), e);
                auto& slot = edge_faces[static_cast<std::size_t>(it - edges.begin())];
                (slot[0] < 0 ? slot[0] : slot[1]) = f;
            }
        }
        const double tolerance = 2.0 * camera.pixel_size();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [f0, f1] = edge_faces[e];
            const bool contour = f1 < 0 ? facing[static_cast<std::size_t>(f0)]
                                        : facing[static_cast<std::size_t>(f0)] != facing[static_cast<std::size_t>(f1)];
            if (!contour) continue;
            const int a = edges[e][0], b = edges[e][1];
            // Faces around the edge's endpoints do not occlude it.
            auto near_edge = [&](int face) {
                for (int c : mesh.face(face)) {
                    if (c == a || c == b) return true;
                    const auto na = mesh.neighbors(a), nb = mesh.neighbors(b);
                    if (std::binary_search(na.begin(), na.end(), c) || std::binary_search(nb.begin(), nb.end(), c)) {
                        return true;
                    }
                }
                return false;
            };
            const Vec3& pa = mesh.position(a);
            const Vec3& pb = mesh.position(b);
            const Vec2 qa = camera.to_pixel(pa), qb = camera.to_pixel(pb);
            const double len = std::max(1e-12, (qb - qa).norm());
            bresenham(pixel_index(qa.x()), pixel_index(qa.y()), pixel_index(qb.x()), pixel_index(qb.y()),
                      [&](int x, int y) {
                          if (x < 0 || y < 0 || x >= w || y >= h) return;
                          const auto& frag = buffer[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
                          const double t = std::clamp((Vec2(x + 0.5, y + 0.5) - qa).dot(qb - qa) / (len * len), 0.0, 1.0);
                          const double z = pa.z() + t * (pb.z() - pa.z());
                          const bool visible = frag.face < 0 || near_edge(frag.face) ||
                                               !nearer(camera.side(), frag.z, z + (camera.side() == ViewSide::Front ? tolerance : -tolerance));
                          if (visible) plot(x, y);
                      });
        }
    }
    for (const auto& stroke : strokes) {
        for (std::size_t i = 0; i < stroke.points.size(); ++i) {
            const Vec2 a = camera.to_pixel(stroke.points[i]);
            const Vec2 b = camera.to_pixel(stroke.points[i + 1 < stroke.points.size() ? i + 1 : i]);
            bresenham(pixel_index(a.x()), pixel_index(a.y()), pixel_index(b.x()), pixel_index(b.y()), plot);
        }
    }
    thin(mask, w, h);
    RasterImage img(w, h, 1, 0.0f);
    for (std::size_t i = 0; i < mask.size(); ++i) img.data[i] = mask[i] ? 1.0f : 0.0f;
    return img;
}

RasterImage compose_detail_input(const RasterImage& sketch, const RasterImage& normals, const RasterImage& front,
                                 const RasterImage& back) {
    if (sketch.channels != 1) throw FormatError("compose_detail_input: sketch must have 1 channel");
    check_same_size(sketch, normals, "normal map", 3);
    check_same_size(sketch, front, "front depth", 1);
    check_same_size(sketch, back, "back depth", 1);
    RasterImage out(sketch.width, sketch.height, 6, 0.0f);
    const std::size_t n = static_cast<std::size_t>(sketch.width) * static_cast<std::size_t>(sketch.height);
    for (std::size_t i = 0; i < n; ++i) {
        float* px = &out.data[6 * i];
        px[0] = sketch.data[i];
        px[1] = normals.data[3 * i];
        px[2] = normals.data[3 * i + 1];
        px[3] = normals.data[3 * i + 2];
        px[4] = front.data[i];
        px[5] = back.data[i];
    }
    return out;
}

std::string encode_stack(const RasterImage& image) {
    if (image.width <= 0 || image.height <= 0 || image.channels <= 0 ||
        image.data.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height) *
                                 static_cast<std::size_t>(image.channels)) {
        throw FormatError("encode_stack: image dimensions do not match its data");
    }
    detail::ByteWriter out;
    out.reserve(20 + 4 * image.data.size());
    out.raw(std::string_view(kStackMagic, 4));
    out.u32(kStackVersion);
    out.u32(static_cast<std::uint32_t>(image.width));
    out.u32(static_cast<std::uint32_t>(image.height));
    out.u32(static_cast<std::uint32_t>(image.channels));
    for (float v : image.data) out.f32(v);
    return out.take();
}

RasterImage decode_stack(const std::string& bytes) {
    detail::ByteReader in(bytes, "image stack");
    if (in.raw(4) != std::string_view(kStackMagic, 4)) throw FormatError("image stack: bad magic");
    const auto version = in.u32();
    if (version != kStackVersion) throw FormatError("image stack: unsupported version " + std::to_string(version));
    const auto w = in.u32(), h = in.u32(), c = in.u32();
    if (w == 0 || h == 0 || c == 0 || w > 1u << 15 || h > 1u << 15 || c > 64) {
        throw FormatError("image stack: bad dimensions");
    }
    const std::size_t count = static_cast<std::size_t>(w) * h * c;
    if (in.remaining() != 4 * count) {
        throw FormatError("image stack: expected " + std::to_string(4 * count) + " pixel bytes, found " +
                          std::to_string(in.remaining()));
    }
    RasterImage img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), 0.0f);
    for (auto& v : img.data) v = in.f32();
    return img;
}

void save_stack(const RasterImage& image, const std::string& path) { detail::write_file(path, encode_stack(image)); }

RasterImage load_stack(const std::string& path) { return decode_stack(detail::read_file(path)); }

std::string to_netpbm(const RasterImage& image) {
    if (image.channels != 1 && image.channels != 3) throw FormatError("to_netpbm: needs 1 or 3 channels");
    std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + image.data.size());
    for (float v : image.data) {
        const double unit = image.channels == 1 ? v : 0.5 * (v + 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0))));
    }
    return out;
}

RasterImage render_detail_input(const TriMesh& mesh, const std::vector<Stroke>& strokes) {
    const OrthoCamera front = OrthoCamera::fit(mesh, ViewSide::Front);
    const OrthoCamera back = front.mirrored();
    return compose_detail_input(render_contours(mesh, front, strokes), render_normals(mesh, front),
                                render_depth(mesh, front), render_depth(mesh, back));
}

}  // namespace sketchmesh
