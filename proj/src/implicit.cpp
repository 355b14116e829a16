#include "sketchmesh/implicit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "binary_io.hpp"
#include "sketchmesh/error.hpp"

namespace sketchmesh {

namespace {

constexpr char kGridMagic[] = "SMGF";
constexpr std::uint32_t kGridVersion = 1;

double smin(double a, double b, double k) {
    if (k <= 0.0) return std::min(a, b);
    const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    return b + (a - b) * h - k * h * (1.0 - h);
}

double smax(double a, double b, double k) { return -smin(-a, -b, k); }

Vec3 vec_from_json(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 3) throw FieldError(std::string("field spec: '") + key + "' must be [x, y, z]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Box3 grown(Box3 box, double fraction) {
    const double pad = fraction * box.diagonal().norm();
    box.min().array() -= pad;
    box.max().array() += pad;
    return box;
}

}  // namespace

double occupancy_from_distance(double sdf, double falloff) { return std::clamp(0.5 - sdf / falloff, 0.0, 1.0); }

// ---------------------------------------------------------------------------
// Sdf

Sdf::Ptr Sdf::sphere(const Vec3& center, double radius) {
    if (!(radius > 0.0)) throw FieldError("sphere radius must be positive");
    auto s = std::make_shared<Sdf>();
    s->kind_ = Kind::Sphere;
    s->a_ = center;
    s->radius_ = radius;
    return s;
}

Sdf::Ptr Sdf::ellipsoid(const Vec3& center, const Vec3& radii) {
    if (!(radii.minCoeff() > 0.0)) throw FieldError("ellipsoid radii must be positive");
    auto s = std::make_shared<Sdf>();
    s->kind_ = Kind::Ellipsoid;
    s->a_ = center;
    s->b_ = radii;
    return s;
}

Sdf::Ptr Sdf::capsule(const Vec3& a, const Vec3& b, double radius) {
    if (!(radius > 0.0)) throw FieldError("capsule radius must be positive");
    auto s = std::make_shared<Sdf>();
    s->kind_ = Kind::Capsule;
    s->a_ = a;
    s->b_ = b;
    s->radius_ = radius;
    return s;
}

Sdf::Ptr Sdf::smooth_union(Ptr lhs, Ptr rhs, double k) {
    if (!lhs || !rhs) throw FieldError("union needs two operands");
    if (k < 0.0) throw FieldError("blend radius must be non-negative");
    auto s = std::make_shared<Sdf>();
    s->kind_ = Kind::Union;
    s->lhs_ = std::move(lhs);
    s->rhs_ = std::move(rhs);
    s->k_ = k;
    return s;
}

Sdf::Ptr Sdf::smooth_subtract(Ptr base, Ptr cut, double k) {
    if (!base || !cut) throw FieldError("subtract needs two operands");
    if (k < 0.0) throw FieldError("blend radius must be non-negative");
    auto s = std::make_shared<Sdf>();
    s->kind_ = Kind::Subtract;
    s->lhs_ = std::move(base);
    s->rhs_ = std::move(cut);
    s->k_ = k;
    return s;
}

double Sdf::distance(const Vec3& p) const {
    switch (kind_) {
        case Kind::Sphere: return (p - a_).norm() - radius_;
        case Kind::Ellipsoid: {
            const Vec3 q = p - a_;
            const double k0 = q.cwiseQuotient(b_).norm();
            const double k1 = q.cwiseQuotient(b_.cwiseProduct(b_)).norm();
            if (k1 == 0.0) return -b_.minCoeff();
            return k0 * (k0 - 1.0) / k1;
        }
        case Kind::Capsule: {
            const Vec3 ab = b_ - a_;
            const double len2 = ab.squaredNorm();
            const double t = len2 > 0.0 ? std::clamp((p - a_).dot(ab) / len2, 0.0, 1.0) : 0.0;
            return (p - (a_ + t * ab)).norm() - radius_;
        }
        case Kind::Union: return smin(lhs_->distance(p), rhs_->distance(p), k_);
        case Kind::Subtract: return smax(lhs_->distance(p), -rhs_->distance(p), k_);
    }
    return 0.0;
}

Box3 Sdf::bounds() const {
    switch (kind_) {
        case Kind::Sphere: return {a_.array() - radius_, a_.array() + radius_};
        case Kind::Ellipsoid: return {a_ - b_, a_ + b_};
        case Kind::Capsule: {
            Box3 box(a_.cwiseMin(b_), a_.cwiseMax(b_));
            box.min().array() -= radius_;
            box.max().array() += radius_;
            return box;
        }
        case Kind::Union: return lhs_->bounds().merged(rhs_->bounds());
        case Kind::Subtract: return lhs_->bounds();
    }
    return {};
}

nlohmann::json Sdf::to_json() const {
    switch (kind_) {
        case Kind::Sphere: return {{"type", "sphere"}, {"center", vec_to_json(a_)}, {"radius", radius_}};
        case Kind::Ellipsoid: return {{"type", "ellipsoid"}, {"center", vec_to_json(a_)}, {"radii", vec_to_json(b_)}};
        case Kind::Capsule:
            return {{"type", "capsule"}, {"a", vec_to_json(a_)}, {"b", vec_to_json(b_)}, {"radius", radius_}};
        case Kind::Union:
            return {{"type", "union"}, {"k", k_}, {"children", nlohmann::json::array({lhs_->to_json(), rhs_->to_json()})}};
        case Kind::Subtract:
            return {{"type", "subtract"}, {"k", k_}, {"base", lhs_->to_json()}, {"cut", rhs_->to_json()}};
    }
    return {};
}

Sdf::Ptr Sdf::from_json(const nlohmann::json& j) {
    try {
        const auto type = j.at("type").get<std::string>();
        if (type == "sphere") return sphere(vec_from_json(j, "center"), j.at("radius").get<double>());
        if (type == "ellipsoid") return ellipsoid(vec_from_json(j, "center"), vec_from_json(j, "radii"));
        if (type == "capsule") return capsule(vec_from_json(j, "a"), vec_from_json(j, "b"), j.at("radius").get<double>());
        if (type == "union") {
            const auto& children = j.at("children");
            if (!children.is_array() || children.size() < 2) throw FieldError("field spec: union needs ≥ 2 children");
            const double k = j.value("k", 0.0);
            Ptr acc = from_json(children[0]);
            for (std::size_t i = 1; i < children.size(); ++i) acc = smooth_union(acc, from_json(children[i]), k);
            return acc;
        }
        if (type == "subtract") return smooth_subtract(from_json(j.at("base")), from_json(j.at("cut")), j.value("k", 0.0));
        throw FieldError("field spec: unknown shape type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        throw FieldError(std::string("field spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// AnalyticField

AnalyticField::AnalyticField(Sdf::Ptr shape, double falloff) : shape_(std::move(shape)) {
    if (!shape_) throw FieldError("analytic field needs a shape");
    const Box3 bounds = shape_->bounds();
    falloff_ = falloff > 0.0 ? falloff : 0.02 * bounds.diagonal().norm();
    bbox_ = grown(bounds, 0.25);
}

double AnalyticField::eval(const Vec3& p) const { return occupancy_from_distance(shape_->distance(p), falloff_); }

nlohmann::json AnalyticField::to_json() const { return {{"shape", shape_->to_json()}, {"falloff", falloff_}}; }

std::shared_ptr<const AnalyticField> AnalyticField::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("shape")) throw FieldError("field spec: expected {\"shape\": ...}");
    double falloff = 0.0;
    if (j.contains("falloff")) {
        if (!j["falloff"].is_number()) throw FieldError("field spec: 'falloff' must be a number");
        falloff = j["falloff"].get<double>();
    }
    return std::make_shared<AnalyticField>(Sdf::from_json(j["shape"]), falloff);
}

// ---------------------------------------------------------------------------
// GridField

GridField::GridField(std::array<int, 3> dims, const Box3& box, std::vector<float> values)
    : dims_(dims), bbox_(box), values_(std::move(values)) {
    for (int d : dims_) {
        if (d < 2) throw FieldError("grid field needs at least 2 nodes per axis");
    }
    if (!((box.max() - box.min()).minCoeff() > 0.0)) throw FieldError("grid field bbox must have positive extent");
    const auto n = static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(dims_[2]);
    if (values_.size() != n) {
        throw FieldError("grid field expects " + std::to_string(n) + " values, got " + std::to_string(values_.size()));
    }
    for (float v : values_) {
        if (!(v >= 0.0f && v <= 1.0f)) throw FieldError("grid field values must lie in [0, 1]");
    }
}

float GridField::at(int i, int j, int k) const {
    return values_[static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(dims_[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(k))];
}

Vec3 GridField::node(int i, int j, int k) const {
    const Vec3 ext = bbox_.max() - bbox_.min();
    const std::array<int, 3> idx{i, j, k};
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
        p[a] = bbox_.min()[a] + ext[a] * static_cast<double>(idx[static_cast<std::size_t>(a)]) / static_cast<double>(dims_[static_cast<std::size_t>(a)] - 1);
    }
    return p;
}

double GridField::eval(const Vec3& p) const {
    std::array<int, 3> i{};
    std::array<double, 3> t{};
    for (int a = 0; a < 3; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        const int n = dims_[ua];
        const double ext = bbox_.max()[a] - bbox_.min()[a];
        const double u = std::clamp((p[a] - bbox_.min()[a]) / ext * static_cast<double>(n - 1), 0.0, static_cast<double>(n - 1));
        int cell = std::min(static_cast<int>(std::floor(u)), n - 2);
        double frac = u - cell;
        // Snap onto nodes so stored values come back exactly.
        if (frac < 1e-9) frac = 0.0;
        if (frac > 1.0 - 1e-9) frac = 1.0;
        i[ua] = cell;
        t[ua] = frac;
    }
    auto lerp = [](double a, double b, double s) { return (1.0 - s) * a + s * b; };
    const double c00 = lerp(at(i[0], i[1], i[2]), at(i[0] + 1, i[1], i[2]), t[0]);
    const double c10 = lerp(at(i[0], i[1] + 1, i[2]), at(i[0] + 1, i[1] + 1, i[2]), t[0]);
    const double c01 = lerp(at(i[0], i[1], i[2] + 1), at(i[0] + 1, i[1], i[2] + 1), t[0]);
    const double c11 = lerp(at(i[0], i[1] + 1, i[2] + 1), at(i[0] + 1, i[1] + 1, i[2] + 1), t[0]);
    return lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2]);
}

GridField bake_grid(const OccupancyField& field, std::array<int, 3> dims, const Box3& box) {
    for (int d : dims) {
        if (d < 2) throw FieldError("bake_grid: at least 2 nodes per axis");
    }
    std::vector<float> values(static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]));
    // Construct with a placeholder so node() can be reused for positions.
    GridField layout(dims, box, std::vector<float>(values.size(), 0.0f));
    std::size_t idx = 0;
    for (int k = 0; k < dims[2]; ++k) {
        for (int j = 0; j < dims[1]; ++j) {
            for (int i = 0; i < dims[0]; ++i) values[idx++] = static_cast<float>(field.eval(layout.node(i, j, k)));
        }
    }
    return GridField(dims, box, std::move(values));
}

std::string encode_grid(const GridField& grid) {
    detail::ByteWriter w;
    w.reserve(44 + 4 * grid.values().size());
    w.raw(std::string_view(kGridMagic, 4));
    w.u32(kGridVersion);
    for (int d : grid.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (int a = 0; a < 3; ++a) w.f64(grid.bbox().min()[a]);
    for (int a = 0; a < 3; ++a) w.f64(grid.bbox().max()[a]);
    for (float v : grid.values()) w.f32(v);
    return w.take();
}

GridField decode_grid(const std::string& bytes) {
    detail::ByteReader r(bytes, "grid file");
    if (r.raw(4) != std::string_view(kGridMagic, 4)) throw FormatError("grid file: bad magic (expected SMGF)");
    const auto version = r.u32();
    if (version != kGridVersion) throw FormatError("grid file: unsupported version " + std::to_string(version));
    std::array<int, 3> dims{};
    std::size_t n = 1;
    for (auto& d : dims) {
        const auto v = r.u32();
        if (v < 2 || v > 4096) throw FormatError("grid file: implausible dimension " + std::to_string(v));
        d = static_cast<int>(v);
        n *= v;
    }
    Vec3 lo, hi;
    for (int a = 0; a < 3; ++a) lo[a] = r.f64();
    for (int a = 0; a < 3; ++a) hi[a] = r.f64();
    if (r.remaining() != 4 * n) {
        throw FormatError("grid file: expected " + std::to_string(4 * n) + " bytes of values, found " +
                          std::to_string(r.remaining()));
    }
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32();
    try {
        return GridField(dims, Box3(lo, hi), std::move(values));
    } catch (const FieldError& e) {
        throw FormatError(std::string("grid file: ") + e.what());
    }
}

void save_grid(const GridField& grid, const std::string& path) { detail::write_file(path, encode_grid(grid)); }

GridField load_grid(const std::string& path) { return decode_grid(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// MeshField

Vec3 MeshField::parity_direction() { return Vec3(0.5377, 0.3144, 0.7823).normalized(); }

MeshField::MeshField(TriMesh mesh, double falloff) : mesh_(std::move(mesh)) {
    if (mesh_.empty() || !mesh_.is_watertight()) throw FieldError("mesh_to_field: mesh must be watertight");
    bvh_ = MeshBvh(mesh_);
    const double diag = mesh_.bbox_diagonal();
    falloff_ = falloff > 0.0 ? falloff : 0.02 * diag;
    bbox_ = grown(mesh_.bbox(), 0.1);
}

bool MeshField::inside(const Vec3& p) const { return bvh_.count_crossings(p, parity_direction()) % 2 == 1; }

double MeshField::signed_distance(const Vec3& p) const {
    const double d = bvh_.closest_point(p).distance;
    return inside(p) ? -d : d;
}

double MeshField::eval(const Vec3& p) const { return occupancy_from_distance(signed_distance(p), falloff_); }

std::shared_ptr<const MeshField> mesh_to_field(const TriMesh& mesh, double falloff) {
    return std::make_shared<MeshField>(mesh, falloff);
}

// ---------------------------------------------------------------------------
// CompositeField

CompositeField::CompositeField(Op op, FieldPtr lhs, FieldPtr rhs) : op_(op), lhs_(std::move(lhs)), rhs_(std::move(rhs)) {
    if (!lhs_ || !rhs_) throw FieldError("composite field needs two operands");
    switch (op_) {
        case Op::Union: bbox_ = lhs_->bbox().merged(rhs_->bbox()); break;
        case Op::Intersect:
            bbox_ = lhs_->bbox().intersection(rhs_->bbox());
            if (bbox_.isEmpty()) bbox_ = lhs_->bbox();
            break;
        case Op::Subtract: bbox_ = lhs_->bbox(); break;
    }
}

double CompositeField::eval(const Vec3& p) const {
    const double a = lhs_->eval(p);
    const double b = rhs_->eval(p);
    switch (op_) {
        case Op::Union: return std::max(a, b);
        case Op::Intersect: return std::min(a, b);
        case Op::Subtract: return std::min(a, 1.0 - b);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Voxelization

std::size_t VoxelGrid::count() const {
    return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

bool VoxelGrid::at(int i, int j, int k) const {
    const auto n = static_cast<std::size_t>(resolution);
    return occupied[static_cast<std::size_t>(i) + n * (static_cast<std::size_t>(j) + n * static_cast<std::size_t>(k))] != 0;
}

VoxelGrid voxelize_strokes(const std::vector<Stroke>& strokes, int resolution, std::optional<Box3> box) {
    if (resolution < 1) throw FieldError("voxelize_strokes: resolution must be positive");
    std::vector<const Stroke*> used;
    Box3 bounds;
    for (const auto& s : strokes) {
        if (s.points.empty()) continue;
        used.push_back(&s);
        for (const auto& p : s.points) bounds.extend(p);
    }
    if (used.empty()) throw StrokeError("voxelize_strokes: no stroke points");
    if (used.size() > kStrokeSamples) throw StrokeError("voxelize_strokes: more strokes than samples");

    VoxelGrid grid;
    grid.resolution = resolution;
    if (box) {
        grid.bbox = *box;
    } else {
        double side = 1.2 * (bounds.max() - bounds.min()).maxCoeff();
        if (!(side > 0.0)) side = 1.0;  // a single point gets a unit cube
        const Vec3 c = bounds.center();
        grid.bbox = Box3(c.array() - 0.5 * side, c.array() + 0.5 * side);
    }
    const Vec3 lo = grid.bbox.min();
    const Vec3 cell = (grid.bbox.max() - lo) / static_cast<double>(resolution);
    if (!(cell.minCoeff() > 0.0)) throw FieldError("voxelize_strokes: bbox must have positive extent");

    // One sample per stroke, the rest split by length (largest remainder).
    std::vector<double> lengths;
    double total = 0.0;
    for (const auto* s : used) {
        lengths.push_back(polyline_length(s->points));
        total += lengths.back();
    }
    const std::size_t spare = kStrokeSamples - used.size();
    std::vector<std::size_t> counts(used.size(), 1);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < used.size(); ++i) {
        const double share = total > 0.0 ? static_cast<double>(spare) * lengths[i] / total
                                         : static_cast<double>(spare) / static_cast<double>(used.size());
        const auto whole = static_cast<std::size_t>(std::floor(share));
        counts[i] += whole;
        assigned += whole;
        remainders.emplace_back(share - static_cast<double>(whole), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < spare; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

    const auto n = static_cast<std::size_t>(resolution);
    grid.occupied.assign(n * n * n, 0);
    for (std::size_t s = 0; s < used.size(); ++s) {
        // Work relative to the grid corner so translating strokes and box together
        // reproduces the same cells.
        std::vector<Vec3> local;
        local.reserve(used[s]->points.size());
        for (const auto& p : used[s]->points) local.push_back(p - lo);
        for (const auto& q : resample_polyline(local, counts[s])) {
            std::array<std::size_t, 3> idx{};
            for (int a = 0; a < 3; ++a) {
                const double u = std::floor(q[a] / cell[a]);
                idx[static_cast<std::size_t>(a)] = static_cast<std::size_t>(std::clamp(u, 0.0, static_cast<double>(resolution - 1)));
            }
            grid.occupied[idx[0] + n * (idx[1] + n * idx[2])] = 1;
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Point sampling

LabeledPoints sample_points(const TriMesh& mesh, const SampleParams& params) {
    if (!(params.near_fraction >= 0.0 && params.near_fraction <= 1.0)) {
        throw FieldError("sample_points: near_fraction must lie in [0, 1]");
    }
    const MeshField field(mesh);
    LabeledPoints out;
    out.near_count = static_cast<std::size_t>(std::llround(static_cast<double>(params.count) * params.near_fraction));
    out.uniform_count = params.count - out.near_count;
    out.points.reserve(params.count);

    std::vector<double> cumulative(mesh.num_faces());
    double acc = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        acc += mesh.face_area(static_cast<int>(f));
        cumulative[f] = acc;
    }
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> offset(0.0, params.near_sigma * mesh.bbox_diagonal());
    for (std::size_t i = 0; i < out.near_count; ++i) {
        const double pick = unit(rng) * acc;
        const auto f = static_cast<int>(std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin()),
            cumulative.size() - 1));
        const double r1 = std::sqrt(unit(rng));
        const double r2 = unit(rng);
        const auto& t = mesh.face(f);
        const Vec3 surface = (1.0 - r1) * mesh.position(t[0]) + r1 * (1.0 - r2) * mesh.position(t[1]) +
                             r1 * r2 * mesh.position(t[2]);
        const double dx = offset(rng);
        const double dy = offset(rng);
        const double dz = offset(rng);
        out.points.push_back(surface + Vec3(dx, dy, dz));
    }
    const Box3 domain = field.bbox();
    for (std::size_t i = 0; i < out.uniform_count; ++i) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) p[a] = domain.min()[a] + unit(rng) * (domain.max()[a] - domain.min()[a]);
        out.points.push_back(p);
    }
    out.inside.reserve(out.points.size());
    for (const auto& p : out.points) out.inside.push_back(field.eval(p) >= params.alpha ? 1 : 0);
    return out;
}

}  // namespace sketchmesh
