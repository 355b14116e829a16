#pragma once

#include <string>
#include <vector>

#include "sketchmesh/mesh.hpp"
#include "sketchmesh/stroke.hpp"

namespace sketchmesh {

inline constexpr int kRasterSize = 256;
/// Resolution of the 8-bit depth export; used as the comparison unit for depth maps.
inline constexpr double kDepthQuantum = 1.0 / 255.0;

/// Row-major, channel-interleaved float image; row 0 is the top of the view.
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    RasterImage() = default;
    RasterImage(int w, int h, int c, float fill);

    float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
};

enum class ViewSide { Front, Back };

/// Orthographic camera along z. The front camera sits at +z looking toward −z;
/// the back camera looks from −z toward +z. Both use the same square x/y frame,
/// so pixel (i, j) covers the same ray in either view (the back image is not
/// mirrored horizontally). Depth is normalized to [0, 1] from near to far.
class OrthoCamera {
public:
    /// Frames `box` with a 5% margin on every side of the square x/y window and
    /// the z range.
    OrthoCamera(const Box3& box, ViewSide side, int width = kRasterSize, int height = kRasterSize);
    static OrthoCamera fit(const TriMesh& mesh, ViewSide side, int width = kRasterSize, int height = kRasterSize);

    ViewSide side() const { return side_; }
    int width() const { return width_; }
    int height() const { return height_; }
    /// Same frame, other side.
    OrthoCamera mirrored() const;

    /// Continuous pixel coordinates; pixel (i, j) has its centre at (i + 0.5, j + 0.5).
    Vec2 to_pixel(const Vec3& p) const;
    /// World x/y of a pixel centre.
    Vec2 pixel_center(int i, int j) const;
    double depth(double z) const;
    /// World size of one pixel.
    double pixel_size() const { return pixel_; }

private:
    ViewSide side_;
    int width_, height_;
    double x0_, y1_, pixel_;
    double z_near_front_, z_far_front_;
};

/// Z-buffered depth, background 1.
RasterImage render_depth(const TriMesh& mesh, const OrthoCamera& camera);
/// Interpolated vertex normals of the visible surface, background (0, 0, 0).
RasterImage render_normals(const TriMesh& mesh, const OrthoCamera& camera);
/// Occluding contours (edges whose faces switch between facing toward and away
/// from the camera) plus the projected strokes, thinned to one pixel. Values
/// are 0 or 1.
RasterImage render_contours(const TriMesh& mesh, const OrthoCamera& camera, const std::vector<Stroke>& strokes = {});

/// Concatenates S (1), N (3), D_f (1), D_b (1) into a 6-channel image.
/// Throws FormatError on size or channel mismatches.
RasterImage compose_detail_input(const RasterImage& sketch, const RasterImage& normals, const RasterImage& front,
                                 const RasterImage& back);

/// "SMIS" stack file: u32 version 1, u32 width, height, channels, then f32
/// pixels row-major and channel-interleaved, all little-endian.
std::string encode_stack(const RasterImage& image);
RasterImage decode_stack(const std::string& bytes);
void save_stack(const RasterImage& image, const std::string& path);
RasterImage load_stack(const std::string& path);

/// Binary PGM of a 1-channel image in [0, 1], or PPM of a 3-channel image in
/// [−1, 1] (mapped to [0, 255]).
std::string to_netpbm(const RasterImage& image);

/// Front view of a mesh rendered with its own fitted camera, as used by the
/// session's stack export: S, N, D_f, D_b.
RasterImage render_detail_input(const TriMesh& mesh, const std::vector<Stroke>& strokes = {});

}  // namespace sketchmesh
