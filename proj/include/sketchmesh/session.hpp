#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sketchmesh/deform.hpp"
#include "sketchmesh/implicit.hpp"
#include "sketchmesh/mesh.hpp"
#include "sketchmesh/refine.hpp"
#include "sketchmesh/stroke.hpp"

namespace sketchmesh {

/// Every parameter that influences geometry. Its hash goes into session logs,
/// and replay refuses a log recorded under a different configuration.
struct EngineConfig {
    double lm_factor = 1.78;         // inflation magnitude per unit of silhouette bbox diagonal
    double silhouette_resample = 0;  // ≤ 0: automatic
    RefineParams coarse;
    CarveParams carve;
    ExtrudeParams extrude;
    BindParams bind;
    DeformParams deform;
    double smooth_lambda = 1.0;
    int smooth_rings = 2;  // region grown around a smoothing stroke
    int undo_depth = 32;

    nlohmann::json to_json() const;
    static EngineConfig from_json(const nlohmann::json& j);
    /// Hex BLAKE2b-128 of the canonical JSON form.
    std::string hash() const;
};

/// Where an occupancy field comes from: an analytic SDF description, an SMGF
/// grid file, or the live mesh at the time the command runs.
struct FieldRef {
    enum class Kind { Analytic, Grid, LiveMesh };
    Kind kind = Kind::Analytic;
    nlohmann::json analytic;  // AnalyticField JSON
    std::string path;

    /// {"analytic": {...}} | {"grid": "path"} | {"mesh": "live"}
    nlohmann::json to_json() const;
    static FieldRef from_json(const nlohmann::json& j);
    friend bool operator==(const FieldRef&, const FieldRef&) = default;
};

namespace cmd {
struct DrawSilhouette { std::vector<Vec2> points; };
struct Extrude {
    std::vector<Vec3> region_stroke;
    std::vector<Vec2> profile;  // (u, h) pairs
    ViewFrame view;
};
struct AddCurve { std::vector<Vec3> stroke; };
struct DeformHandle {
    int handle_id = 0;
    std::vector<Vec3> targets;
};
/// Queues a detail stroke; the mesh changes on CommitCarve.
struct Carve {
    std::vector<Vec3> stroke;
    std::optional<FieldRef> field;
};
struct CommitCarve {};
struct SetField { FieldRef field; };
struct Smooth { std::vector<int> vertices; };  // empty: whole mesh
struct SetSymmetry { bool enabled = false; };
struct EnterStage {
    int stage = 1;
    bool keep_detail_curves = true;
};
struct Undo {};
struct Clear {};
}  // namespace cmd

using CommandBody = std::variant<cmd::DrawSilhouette, cmd::Extrude, cmd::AddCurve, cmd::DeformHandle, cmd::Carve,
                                 cmd::CommitCarve, cmd::SetField, cmd::Smooth, cmd::SetSymmetry, cmd::EnterStage,
                                 cmd::Undo, cmd::Clear>;

struct Command {
    std::uint64_t seq = 0;
    CommandBody body;
};

std::string_view command_name(const CommandBody& body);
/// All command tags, in variant order.
const std::vector<std::string>& command_names();

/// {"seq": n, "cmd": "<tag>", "params": {...}}
nlohmann::json command_to_json(const Command& command);
/// Throws FormatError on unknown tags or malformed params.
Command command_from_json(const nlohmann::json& j);
/// Parses just the params of a tagged command.
CommandBody command_body_from_json(std::string_view name, const nlohmann::json& params);

/// Changes between two meshes. Face slots are addressed by index: a slot that
/// differs, or exists on one side only, appears in faces_removed (old side) and
/// faces_added (new side).
struct MeshDelta {
    std::size_t num_vertices = 0;
    std::size_t num_faces = 0;
    std::vector<std::pair<int, Vec3>> vertices;  // changed or new positions
    std::vector<std::pair<int, Face>> faces_added;
    std::vector<int> faces_removed;

    bool touches_geometry() const { return !vertices.empty() || !faces_added.empty() || !faces_removed.empty(); }
    bool changes_connectivity() const { return !faces_added.empty() || !faces_removed.empty(); }

    nlohmann::json to_json() const;
    static MeshDelta from_json(const nlohmann::json& j);
};

/// Positions compare by bit pattern, so −0.0 and 0.0 count as different.
MeshDelta diff_meshes(const TriMesh& before, const TriMesh& after);
TriMesh apply_delta(const TriMesh& before, const MeshDelta& delta);

struct BoundField {
    FieldRef ref;
    FieldPtr field;
};

struct BoundHandle {
    HandleCurve curve;  // targets hold the last drag, or are empty
    PendingDeformSystem system;
};

/// One undo snapshot. Copies share immutable fields and factorizations.
struct SessionState {
    int stage = 1;
    TriMesh mesh;
    std::vector<Stroke> detail_strokes;  // carved and committed
    std::vector<Stroke> pending_carve;   // queued for the next CommitCarve
    std::vector<BoundHandle> handles;
    std::optional<BoundField> coarse_field;
    std::optional<BoundField> detail_field;
    bool symmetry = false;
};

/// JSON-lines command record: a header line carrying the engine config hash,
/// then one command per line.
struct SessionLog {
    static constexpr std::string_view kFormat = "sketchmesh-log";
    static constexpr int kVersion = 1;

    std::string config_hash;
    std::vector<Command> commands;

    static std::string header_line(const std::string& config_hash);
    static std::string command_line(const Command& command);

    std::string serialize() const;
    /// Throws FormatError naming the offending line.
    static SessionLog parse(std::string_view text);
    void save(const std::string& path) const;
    static SessionLog load(const std::string& path);
};

/// Single-writer editing session. Each successful command pushes a full
/// snapshot (bounded by the undo depth) and is appended to the log; a failing
/// command leaves the session untouched and throws CommandError.
class Session {
public:
    explicit Session(EngineConfig config = {});

    /// Requires command.seq to exceed every earlier sequence number.
    MeshDelta apply(const Command& command);
    /// Applies with the next free sequence number.
    MeshDelta submit(CommandBody body);

    const SessionState& state() const { return stack_.back(); }
    const TriMesh& mesh() const { return stack_.back().mesh; }
    int stage() const { return stack_.back().stage; }
    std::size_t undo_available() const { return stack_.size() - 1; }
    std::uint64_t last_seq() const { return last_seq_; }
    const EngineConfig& config() const { return config_; }
    const SessionLog& log() const { return log_; }

    /// Committed and pending detail strokes.
    std::vector<Stroke> detail_strokes() const;

private:
    SessionState run(const SessionState& current, const CommandBody& body) const;

    EngineConfig config_;
    std::deque<SessionState> stack_;
    std::uint64_t last_seq_ = 0;
    bool any_applied_ = false;
    SessionLog log_;
};

/// Folds the log over a fresh session. Throws FormatError when the log's config
/// hash differs from `config`, and CommandError at the first failing command.
Session replay_session(const SessionLog& log, const EngineConfig& config = {});
TriMesh replay(const SessionLog& log, const EngineConfig& config = {});

}  // namespace sketchmesh
