#include "sketchmesh/session.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <sodium.h>

#include "sketchmesh/bvh.hpp"
#include "sketchmesh/error.hpp"
#include "sketchmesh/silhouette.hpp"

namespace sketchmesh {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON helpers

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

template <int N>
Eigen::Matrix<double, N, 1> parse_vec(const json& j) {
    if (!j.is_array() || j.size() != N) {
        throw FormatError("expected an array of " + std::to_string(N) + " numbers, got " + j.dump());
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        if (!j[static_cast<std::size_t>(i)].is_number()) throw FormatError("non-numeric coordinate in " + j.dump());
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

template <typename V>
json points_json(const std::vector<V>& points) {
    json out = json::array();
    for (const auto& p : points) out.push_back(vec_json(p));
    return out;
}

template <int N>
std::vector<Eigen::Matrix<double, N, 1>> parse_points(const json& j) {
    if (!j.is_array()) throw FormatError("expected an array of points");
    std::vector<Eigen::Matrix<double, N, 1>> out;
    out.reserve(j.size());
    for (const auto& p : j) out.push_back(parse_vec<N>(p));
    return out;
}

const json& require(const json& params, const char* key) {
    if (!params.is_object() || !params.contains(key)) throw FormatError(std::string("missing \"") + key + "\"");
    return params.at(key);
}

json schedule_json(const ProjectionSchedule& s) {
    return {{"iterations", s.iterations},
            {"step0", s.step0},
            {"ratio", s.ratio},
            {"alpha", s.alpha},
            {"sign", s.sign == ProjectionSign::TowardSurface ? "toward_surface" : "as_printed"},
            {"recompute_normals", s.recompute_normals},
            {"dead_zone", s.dead_zone}};
}

ProjectionSchedule schedule_from(const json& j) {
    ProjectionSchedule s;
    s.iterations = j.value("iterations", s.iterations);
    s.step0 = j.value("step0", s.step0);
    s.ratio = j.value("ratio", s.ratio);
    s.alpha = j.value("alpha", s.alpha);
    const std::string sign = j.value("sign", std::string("toward_surface"));
    if (sign == "toward_surface") {
        s.sign = ProjectionSign::TowardSurface;
    } else if (sign == "as_printed") {
        s.sign = ProjectionSign::AsPrinted;
    } else {
        throw FormatError("unknown projection sign \"" + sign + "\"");
    }
    s.recompute_normals = j.value("recompute_normals", s.recompute_normals);
    s.dead_zone = j.value("dead_zone", s.dead_zone);
    return s;
}

json filter_json(const BilateralParams& f) {
    return {{"sigma_center", f.sigma_center},
            {"sigma_normal", f.sigma_normal},
            {"iterations", f.iterations},
            {"vertex_steps", f.vertex_steps}};
}

BilateralParams filter_from(const json& j) {
    BilateralParams f;
    f.sigma_center = j.value("sigma_center", f.sigma_center);
    f.sigma_normal = j.value("sigma_normal", f.sigma_normal);
    f.iterations = j.value("iterations", f.iterations);
    f.vertex_steps = j.value("vertex_steps", f.vertex_steps);
    return f;
}

json section(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

// ---------------------------------------------------------------------------
// Session helpers

const char* error_code(const std::exception& e) {
    if (dynamic_cast<const StrokeError*>(&e)) return "stroke";
    if (dynamic_cast<const MeshError*>(&e)) return "mesh";
    if (dynamic_cast<const SolverError*>(&e)) return "solver";
    if (dynamic_cast<const FieldError*>(&e)) return "field";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    return "internal";
}

[[noreturn]] void fail(const char* code, const std::string& message) { throw CommandError(code, message, 0); }

void require_mesh(const SessionState& s, std::string_view what) {
    if (s.mesh.empty()) fail("precondition", std::string(what) + " needs a mesh; draw a silhouette first");
}

void require_stage(const SessionState& s, int stage, std::string_view what) {
    if (s.stage != stage) {
        fail("stage", std::string(what) + " is only available in stage " + std::to_string(stage) +
                          " (current stage " + std::to_string(s.stage) + ")");
    }
}

BoundField bind_field(const FieldRef& ref, const TriMesh& live) {
    switch (ref.kind) {
        case FieldRef::Kind::Analytic: return {ref, AnalyticField::from_json(ref.analytic)};
        case FieldRef::Kind::Grid: return {ref, std::make_shared<const GridField>(load_grid(ref.path))};
        case FieldRef::Kind::LiveMesh:
            if (live.empty()) throw FieldError("field {\"mesh\": \"live\"} needs a mesh");
            return {ref, mesh_to_field(live)};
    }
    throw FieldError("unknown field kind");
}

double surface_tolerance(const TriMesh& mesh, double configured) {
    return configured > 0.0 ? configured : 0.02 * mesh.bbox_diagonal();
}

void check_on_surface(const MeshBvh& bvh, const std::vector<Vec3>& points, double tolerance) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = bvh.closest_point(points[i]).distance;
        if (!(d <= tolerance)) {
            std::ostringstream msg;
            msg << "stroke point " << i << " is " << d << " from the surface (tolerance " << tolerance << ")";
            throw StrokeError(msg.str());
        }
    }
}

std::vector<int> anchors_for(const TriMesh& mesh, const std::vector<int>& handle_ids, int rings) {
    const auto hops = graph_distance(mesh, handle_ids);
    std::vector<int> anchors;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
        if (hops[static_cast<std::size_t>(v)] > rings) anchors.push_back(v);
    }
    return anchors;
}

bool same_bits(const Vec3& a, const Vec3& b) { return std::memcmp(a.data(), b.data(), sizeof(double) * 3) == 0; }

}  // namespace

// ---------------------------------------------------------------------------
// EngineConfig

json EngineConfig::to_json() const {
    return {{"lm_factor", lm_factor},
            {"silhouette_resample", silhouette_resample},
            {"coarse",
             {{"schedule", schedule_json(coarse.schedule)},
              {"lambda", coarse.lambda},
              {"outer_rounds", coarse.outer_rounds}}},
            {"carve",
             {{"schedule", schedule_json(carve.schedule)},
              {"lambda", carve.lambda},
              {"ring_k", carve.ring_k},
              {"snap_tolerance", carve.snap_tolerance},
              {"filter", filter_json(carve.filter)}}},
            {"extrude", {{"snap_tolerance", extrude.snap_tolerance}, {"max_subdivisions", extrude.max_subdivisions}}},
            {"bind", {{"snap_tolerance", bind.snap_tolerance}, {"anchor_rings", bind.anchor_rings}}},
            {"deform", {{"lambda", deform.lambda}, {"handle_weight", deform.handle_weight}}},
            {"smooth_lambda", smooth_lambda},
            {"smooth_rings", smooth_rings},
            {"undo_depth", undo_depth}};
}

EngineConfig EngineConfig::from_json(const json& j) {
    try {
        EngineConfig c;
        c.lm_factor = j.value("lm_factor", c.lm_factor);
        c.silhouette_resample = j.value("silhouette_resample", c.silhouette_resample);
        const json co = section(j, "coarse");
        c.coarse.schedule = schedule_from(section(co, "schedule"));
        c.coarse.lambda = co.value("lambda", c.coarse.lambda);
        c.coarse.outer_rounds = co.value("outer_rounds", c.coarse.outer_rounds);
        const json ca = section(j, "carve");
        c.carve.schedule = schedule_from(section(ca, "schedule"));
        c.carve.lambda = ca.value("lambda", c.carve.lambda);
        c.carve.ring_k = ca.value("ring_k", c.carve.ring_k);
        c.carve.snap_tolerance = ca.value("snap_tolerance", c.carve.snap_tolerance);
        c.carve.filter = filter_from(section(ca, "filter"));
        const json ex = section(j, "extrude");
        c.extrude.snap_tolerance = ex.value("snap_tolerance", c.extrude.snap_tolerance);
        c.extrude.max_subdivisions = ex.value("max_subdivisions", c.extrude.max_subdivisions);
        const json bi = section(j, "bind");
        c.bind.snap_tolerance = bi.value("snap_tolerance", c.bind.snap_tolerance);
        c.bind.anchor_rings = bi.value("anchor_rings", c.bind.anchor_rings);
        const json de = section(j, "deform");
        c.deform.lambda = de.value("lambda", c.deform.lambda);
        c.deform.handle_weight = de.value("handle_weight", c.deform.handle_weight);
        c.smooth_lambda = j.value("smooth_lambda", c.smooth_lambda);
        c.smooth_rings = j.value("smooth_rings", c.smooth_rings);
        c.undo_depth = j.value("undo_depth", c.undo_depth);
        if (c.undo_depth < 1) throw FormatError("undo_depth must be at least 1");
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("engine config: ") + e.what());
    }
}

std::string EngineConfig::hash() const {
    if (sodium_init() < 0) throw Error("libsodium failed to initialize");
    const std::string canonical = to_json().dump();
    unsigned char digest[16];
    crypto_generichash(digest, sizeof digest, reinterpret_cast<const unsigned char*>(canonical.data()),
                       canonical.size(), nullptr, 0);
    char hex[sizeof digest * 2 + 1];
    sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
    return hex;
}

// ---------------------------------------------------------------------------
// FieldRef

json FieldRef::to_json() const {
    switch (kind) {
        case Kind::Analytic: return {{"analytic", analytic}};
        case Kind::Grid: return {{"grid", path}};
        case Kind::LiveMesh: return {{"mesh", "live"}};
    }
    return nullptr;
}

FieldRef FieldRef::from_json(const json& j) {
    if (!j.is_object() || j.size() != 1) {
        throw FormatError("field reference must be one of {\"analytic\": ...}, {\"grid\": path}, {\"mesh\": \"live\"}");
    }
    FieldRef ref;
    if (j.contains("analytic")) {
        ref.kind = Kind::Analytic;
        ref.analytic = j.at("analytic");
        try {
            AnalyticField::from_json(ref.analytic);  // reject malformed shapes when parsing
        } catch (const FieldError& e) {
            throw FormatError(e.what());
        }
    } else if (j.contains("grid") && j.at("grid").is_string()) {
        ref.kind = Kind::Grid;
        ref.path = j.at("grid").get<std::string>();
    } else if (j.contains("mesh") && j.at("mesh") == "live") {
        ref.kind = Kind::LiveMesh;
    } else {
        throw FormatError("unrecognized field reference " + j.dump());
    }
    return ref;
}

// ---------------------------------------------------------------------------
// Commands

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"DrawSilhouette", "Extrude",  "AddCurve",    "DeformHandle",
                                                "Carve",          "CommitCarve", "SetField", "Smooth",
                                                "SetSymmetry",    "EnterStage", "Undo",     "Clear"};
    return names;
}

std::string_view command_name(const CommandBody& body) { return command_names()[body.index()]; }

namespace {

struct ParamsWriter {
    json operator()(const cmd::DrawSilhouette& c) const { return {{"points", points_json(c.points)}}; }
    json operator()(const cmd::Extrude& c) const {
        return {{"region_stroke", points_json(c.region_stroke)},
                {"profile", points_json(c.profile)},
                {"view", {{"right", vec_json(c.view.right)}, {"up", vec_json(c.view.up)}}}};
    }
    json operator()(const cmd::AddCurve& c) const { return {{"stroke", points_json(c.stroke)}}; }
    json operator()(const cmd::DeformHandle& c) const {
        return {{"handle_id", c.handle_id}, {"targets", points_json(c.targets)}};
    }
    json operator()(const cmd::Carve& c) const {
        json j{{"stroke", points_json(c.stroke)}};
        if (c.field) j["field"] = c.field->to_json();
        return j;
    }
    json operator()(const cmd::CommitCarve&) const { return json::object(); }
    json operator()(const cmd::SetField& c) const { return {{"field", c.field.to_json()}}; }
    json operator()(const cmd::Smooth& c) const { return {{"vertices", c.vertices}}; }
    json operator()(const cmd::SetSymmetry& c) const { return {{"enabled", c.enabled}}; }
    json operator()(const cmd::EnterStage& c) const {
        return {{"stage", c.stage}, {"keep_detail_curves", c.keep_detail_curves}};
    }
    json operator()(const cmd::Undo&) const { return json::object(); }
    json operator()(const cmd::Clear&) const { return json::object(); }
};

CommandBody parse_body(std::string_view name, const json& p) {
    if (name == "DrawSilhouette") return cmd::DrawSilhouette{parse_points<2>(require(p, "points"))};
    if (name == "Extrude") {
        const json& view = require(p, "view");
        return cmd::Extrude{parse_points<3>(require(p, "region_stroke")), parse_points<2>(require(p, "profile")),
                            ViewFrame{parse_vec<3>(require(view, "right")), parse_vec<3>(require(view, "up"))}};
    }
    if (name == "AddCurve") return cmd::AddCurve{parse_points<3>(require(p, "stroke"))};
    if (name == "DeformHandle") {
        return cmd::DeformHandle{require(p, "handle_id").get<int>(), parse_points<3>(require(p, "targets"))};
    }
    if (name == "Carve") {
        cmd::Carve c{parse_points<3>(require(p, "stroke")), std::nullopt};
        if (p.contains("field")) c.field = FieldRef::from_json(p.at("field"));
        return c;
    }
    if (name == "CommitCarve") return cmd::CommitCarve{};
    if (name == "SetField") return cmd::SetField{FieldRef::from_json(require(p, "field"))};
    if (name == "Smooth") {
        return cmd::Smooth{p.is_object() && p.contains("vertices") ? p.at("vertices").get<std::vector<int>>()
                                                                   : std::vector<int>{}};
    }
    if (name == "SetSymmetry") return cmd::SetSymmetry{require(p, "enabled").get<bool>()};
    if (name == "EnterStage") {
        const int stage = require(p, "stage").get<int>();
        if (stage != 1 && stage != 2) throw FormatError("stage must be 1 or 2, got " + std::to_string(stage));
        return cmd::EnterStage{stage, p.value("keep_detail_curves", true)};
    }
    if (name == "Undo") return cmd::Undo{};
    if (name == "Clear") return cmd::Clear{};
    throw FormatError("unknown command \"" + std::string(name) + "\"");
}

}  // namespace

CommandBody command_body_from_json(std::string_view name, const json& params) {
    try {
        return parse_body(name, params);
    } catch (const json::exception& e) {
        throw FormatError(std::string(name) + " params: " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(std::string(name) + " params: " + e.what());
    }
}

json command_to_json(const Command& command) {
    return {{"seq", command.seq},
            {"cmd", std::string(command_name(command.body))},
            {"params", std::visit(ParamsWriter{}, command.body)}};
}

Command command_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("command must be a JSON object");
    if (!j.contains("seq") || !j.at("seq").is_number_unsigned()) throw FormatError("command needs an unsigned \"seq\"");
    if (!j.contains("cmd") || !j.at("cmd").is_string()) throw FormatError("command needs a string \"cmd\"");
    const json params = j.contains("params") ? j.at("params") : json::object();
    return {j.at("seq").get<std::uint64_t>(), command_body_from_json(j.at("cmd").get<std::string>(), params)};
}

// ---------------------------------------------------------------------------
// MeshDelta

json MeshDelta::to_json() const {
    json verts = json::array();
    for (const auto& [v, p] : vertices) verts.push_back({v, p.x(), p.y(), p.z()});
    json added = json::array();
    for (const auto& [f, face] : faces_added) added.push_back({f, face[0], face[1], face[2]});
    return {{"num_vertices", num_vertices},
            {"num_faces", num_faces},
            {"vertices", verts},
            {"faces_added", added},
            {"faces_removed", faces_removed}};
}

MeshDelta MeshDelta::from_json(const json& j) {
    try {
        MeshDelta d;
        d.num_vertices = j.at("num_vertices").get<std::size_t>();
        d.num_faces = j.at("num_faces").get<std::size_t>();
        for (const auto& row : j.at("vertices")) {
            d.vertices.emplace_back(row.at(0).get<int>(),
                                    Vec3(row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()));
        }
        for (const auto& row : j.at("faces_added")) {
            d.faces_added.emplace_back(row.at(0).get<int>(),
                                       Face{row.at(1).get<int>(), row.at(2).get<int>(), row.at(3).get<int>()});
        }
        d.faces_removed = j.at("faces_removed").get<std::vector<int>>();
        return d;
    } catch (const json::exception& e) {
        throw FormatError(std::string("mesh delta: ") + e.what());
    }
}

MeshDelta diff_meshes(const TriMesh& before, const TriMesh& after) {
    MeshDelta d;
    d.num_vertices = after.num_vertices();
    d.num_faces = after.num_faces();
    for (std::size_t v = 0; v < after.num_vertices(); ++v) {
        const int i = static_cast<int>(v);
        if (v >= before.num_vertices() || !same_bits(before.position(i), after.position(i))) {
            d.vertices.emplace_back(i, after.position(i));
        }
    }
    const std::size_t slots = std::max(before.num_faces(), after.num_faces());
    for (std::size_t f = 0; f < slots; ++f) {
        const int i = static_cast<int>(f);
        const bool in_before = f < before.num_faces();
        const bool in_after = f < after.num_faces();
        if (in_before && in_after && before.face(i) == after.face(i)) continue;
        if (in_before) d.faces_removed.push_back(i);
        if (in_after) d.faces_added.emplace_back(i, after.face(i));
    }
    return d;
}

TriMesh apply_delta(const TriMesh& before, const MeshDelta& delta) {
    std::vector<Vec3> positions = before.positions();
    positions.resize(delta.num_vertices, Vec3::Zero());
    std::vector<char> set(delta.num_vertices, 0);
    for (std::size_t v = 0; v < std::min(before.num_vertices(), delta.num_vertices); ++v) set[v] = 1;
    for (const auto& [v, p] : delta.vertices) {
        if (v < 0 || static_cast<std::size_t>(v) >= delta.num_vertices) {
            throw FormatError("delta vertex " + std::to_string(v) + " outside the new mesh");
        }
        positions[static_cast<std::size_t>(v)] = p;
        set[static_cast<std::size_t>(v)] = 1;
    }
    if (std::find(set.begin(), set.end(), 0) != set.end()) throw FormatError("delta leaves new vertices unset");

    std::vector<Face> faces = before.faces();
    std::vector<char> filled(delta.num_faces, 1);
    for (int f : delta.faces_removed) {
        if (f < 0 || static_cast<std::size_t>(f) >= before.num_faces()) {
            throw FormatError("delta removes face " + std::to_string(f) + " which does not exist");
        }
        if (static_cast<std::size_t>(f) < delta.num_faces) filled[static_cast<std::size_t>(f)] = 0;
    }
    faces.resize(delta.num_faces, Face{0, 0, 0});
    for (std::size_t f = before.num_faces(); f < delta.num_faces; ++f) filled[f] = 0;
    for (const auto& [f, face] : delta.faces_added) {
        if (f < 0 || static_cast<std::size_t>(f) >= delta.num_faces) {
            throw FormatError("delta adds face " + std::to_string(f) + " outside the new mesh");
        }
        faces[static_cast<std::size_t>(f)] = face;
        filled[static_cast<std::size_t>(f)] = 1;
    }
    if (std::find(filled.begin(), filled.end(), 0) != filled.end()) throw FormatError("delta leaves face slots empty");
    if (positions.empty()) return TriMesh();
    if (faces == before.faces() && positions.size() == before.num_vertices()) {
        return before.with_positions(std::move(positions));
    }
    return TriMesh(std::move(positions), std::move(faces));
}

// ---------------------------------------------------------------------------
// SessionLog

std::string SessionLog::header_line(const std::string& config_hash) {
    return json{{"type", "header"}, {"format", kFormat}, {"version", kVersion}, {"config_hash", config_hash}}.dump();
}

std::string SessionLog::command_line(const Command& command) { return command_to_json(command).dump(); }

std::string SessionLog::serialize() const {
    std::string out = header_line(config_hash) + '\n';
    for (const auto& c : commands) out += command_line(c) + '\n';
    return out;
}

SessionLog SessionLog::parse(std::string_view text) {
    SessionLog log;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            if (!have_header) {
                if (j.value("type", "") != "header" || j.value("format", "") != kFormat) {
                    throw FormatError("first line is not a sketchmesh-log header");
                }
                if (j.value("version", 0) != kVersion) {
                    throw FormatError("unsupported log version " + j.at("version").dump());
                }
                log.config_hash = j.at("config_hash").get<std::string>();
                have_header = true;
                continue;
            }
            log.commands.push_back(command_from_json(j));
        } catch (const json::exception& e) {
            throw FormatError("log line " + std::to_string(line_no) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("log line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) throw FormatError("log is empty (no header line)");
    return log;
}

void SessionLog::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << serialize();
    if (!out) throw FormatError("failed writing " + path);
}

SessionLog SessionLog::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

// ---------------------------------------------------------------------------
// Session

Session::Session(EngineConfig config) : config_(std::move(config)) {
    stack_.emplace_back();
    log_.config_hash = config_.hash();
}

std::vector<Stroke> Session::detail_strokes() const {
    std::vector<Stroke> out = state().detail_strokes;
    out.insert(out.end(), state().pending_carve.begin(), state().pending_carve.end());
    return out;
}

MeshDelta Session::submit(CommandBody body) { return apply(Command{any_applied_ ? last_seq_ + 1 : 1, std::move(body)}); }

MeshDelta Session::apply(const Command& command) {
    if (any_applied_ && command.seq <= last_seq_) {
        throw CommandError("sequence",
                           "sequence number " + std::to_string(command.seq) + " does not follow " +
                               std::to_string(last_seq_),
                           command.seq);
    }

    MeshDelta delta;
    if (std::holds_alternative<cmd::Undo>(command.body)) {
        if (stack_.size() > 1) {
            const TriMesh before = stack_.back().mesh;
            stack_.pop_back();
            delta = diff_meshes(before, stack_.back().mesh);
        } else {
            delta = diff_meshes(stack_.back().mesh, stack_.back().mesh);
        }
    } else {
        SessionState next;
        try {
            next = run(stack_.back(), command.body);
        } catch (const CommandError& e) {
            throw CommandError(e.code(), e.message(), command.seq);
        } catch (const Error& e) {
            throw CommandError(error_code(e), e.what(), command.seq);
        }
        delta = diff_meshes(stack_.back().mesh, next.mesh);
        stack_.push_back(std::move(next));
        while (stack_.size() > static_cast<std::size_t>(config_.undo_depth) + 1) stack_.pop_front();
    }

    last_seq_ = command.seq;
    any_applied_ = true;
    log_.commands.push_back(command);
    return delta;
}

SessionState Session::run(const SessionState& current, const CommandBody& body) const {
    SessionState s = current;
    const EngineConfig& cfg = config_;

    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, cmd::DrawSilhouette>) {
                require_stage(s, 1, "DrawSilhouette");
                if (!s.mesh.empty()) fail("stage", "DrawSilhouette needs an empty canvas; clear first");
                const auto curve = SilhouetteCurve::create(c.points, cfg.silhouette_resample);
                s.mesh = generate_initial(curve, cfg.lm_factor * curve.bbox_diagonal());
            } else if constexpr (std::is_same_v<T, cmd::Extrude>) {
                require_mesh(s, "Extrude");
                s.mesh = extrude(s.mesh, c.region_stroke, c.profile, c.view, cfg.extrude).mesh;
            } else if constexpr (std::is_same_v<T, cmd::AddCurve>) {
                require_mesh(s, "AddCurve");
                HandleCurve curve = bind_handle(s.mesh, Stroke{StrokeKind::OnSurface, c.stroke}, cfg.bind);
                PendingDeformSystem system = prefactorize_async(s.mesh, curve, cfg.deform);
                s.handles.push_back({std::move(curve), std::move(system)});
            } else if constexpr (std::is_same_v<T, cmd::DeformHandle>) {
                require_mesh(s, "DeformHandle");
                if (c.handle_id < 0 || static_cast<std::size_t>(c.handle_id) >= s.handles.size()) {
                    fail("handle", "no handle " + std::to_string(c.handle_id) + " (" +
                                       std::to_string(s.handles.size()) + " bound)");
                }
                BoundHandle& h = s.handles[static_cast<std::size_t>(c.handle_id)];
                HandleCurve curve = h.curve;
                curve.targets = c.targets;
                curve.validate(s.mesh.num_vertices());
                s.mesh = deform(s.mesh, curve, h.system, cfg.deform);
                h.curve = std::move(curve);
            } else if constexpr (std::is_same_v<T, cmd::Carve>) {
                require_stage(s, 2, "Carve");
                if (c.stroke.empty()) throw StrokeError("Carve: empty stroke");
                if (c.field) s.detail_field = bind_field(*c.field, s.mesh);
                const MeshBvh bvh(s.mesh);
                const double tol = surface_tolerance(s.mesh, cfg.carve.snap_tolerance);
                check_on_surface(bvh, c.stroke, tol);
                s.pending_carve.push_back(Stroke{StrokeKind::OnSurface, c.stroke});
                if (s.symmetry) {
                    const MirrorPlane plane;
                    Stroke mirrored{StrokeKind::OnSurface, {}};
                    for (const auto& p : c.stroke) mirrored.points.push_back(plane.reflect(p));
                    check_on_surface(bvh, mirrored.points, tol);
                    s.pending_carve.push_back(std::move(mirrored));
                }
            } else if constexpr (std::is_same_v<T, cmd::CommitCarve>) {
                require_stage(s, 2, "CommitCarve");
                if (s.pending_carve.empty()) return;
                if (!s.detail_field) fail("field", "CommitCarve needs a detail field; send SetField in stage 2");
                s.mesh = carve_details(s.mesh, s.pending_carve, *s.detail_field->field, cfg.carve).mesh;
                s.detail_strokes.insert(s.detail_strokes.end(), s.pending_carve.begin(), s.pending_carve.end());
                s.pending_carve.clear();
            } else if constexpr (std::is_same_v<T, cmd::SetField>) {
                BoundField bound = bind_field(c.field, s.mesh);
                if (s.stage == 1) {
                    if (!s.mesh.empty()) s.mesh = refine_coarse(s.mesh, *bound.field, cfg.coarse);
                    s.coarse_field = std::move(bound);
                } else {
                    s.detail_field = std::move(bound);
                }
            } else if constexpr (std::is_same_v<T, cmd::Smooth>) {
                require_mesh(s, "Smooth");
                const VertexRegion region = c.vertices.empty() ? VertexRegion::all(s.mesh)
                                                               : VertexRegion::from_members(s.mesh, c.vertices);
                FitParams fit;
                fit.lambda = cfg.smooth_lambda;
                s.mesh = fit_with_smoothness(s.mesh, s.mesh.positions(), fit, &region);
            } else if constexpr (std::is_same_v<T, cmd::SetSymmetry>) {
                s.symmetry = c.enabled;
            } else if constexpr (std::is_same_v<T, cmd::EnterStage>) {
                if (c.stage == 2) require_mesh(s, "EnterStage 2");
                s.stage = c.stage;
                if (!c.keep_detail_curves) {
                    s.detail_strokes.clear();
                    s.pending_carve.clear();
                } else if (!s.mesh.empty()) {
                    const MeshBvh bvh(s.mesh);
                    for (auto* list : {&s.detail_strokes, &s.pending_carve}) {
                        for (auto& stroke : *list) {
                            for (auto& p : stroke.points) p = bvh.closest_point(p).point;
                        }
                    }
                }
            } else if constexpr (std::is_same_v<T, cmd::Clear>) {
                SessionState fresh;
                fresh.coarse_field = s.coarse_field;
                fresh.detail_field = s.detail_field;
                fresh.symmetry = s.symmetry;
                s = std::move(fresh);
            } else {
                static_assert(std::is_same_v<T, cmd::Undo>);
            }
        },
        body);

    // Connectivity edits invalidate prepared deformation systems: keep the
    // handle vertices, recompute anchors on the new mesh, and refactorize.
    if (!s.handles.empty() && s.mesh.faces() != current.mesh.faces()) {
        for (auto& h : s.handles) {
            h.curve.anchor_ids = anchors_for(s.mesh, h.curve.vertex_ids, cfg.bind.anchor_rings);
            HandleCurve rest = h.curve;
            rest.targets.clear();
            h.system = prefactorize_async(s.mesh, rest, cfg.deform);
        }
    }
    return s;
}

Session replay_session(const SessionLog& log, const EngineConfig& config) {
    const std::string expected = config.hash();
    if (log.config_hash != expected) {
        throw FormatError("log was recorded with engine config " + log.config_hash + ", current config is " +
                          expected);
    }
    Session session(config);
    for (const auto& c : log.commands) session.apply(c);
    return session;
}

TriMesh replay(const SessionLog& log, const EngineConfig& config) { return replay_session(log, config).mesh(); }

}  // namespace sketchmesh
