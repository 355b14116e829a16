#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sketchmesh {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid connectivity or geometry (TriMesh invariants, welding, subdivision).
class MeshError : public Error {
public:
    using Error::Error;
};

/// Dimension mismatches and rank-deficient systems.
class SolverError : public Error {
public:
    using Error::Error;
};

class FieldError : public Error {
public:
    using Error::Error;
};

/// Malformed curves and strokes: too few points, self-intersections, off-surface samples.
class StrokeError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// A session command that failed: a short machine-readable code ("stage",
/// "stroke", "solver", ...), the underlying message, and the command's sequence number.
class CommandError : public Error {
public:
    CommandError(std::string code, std::string message, std::uint64_t seq);

    const std::string& code() const { return code_; }
    const std::string& message() const { return message_; }
    std::uint64_t seq() const { return seq_; }

private:
    std::string code_;
    std::string message_;
    std::uint64_t seq_;
};

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the sink receiving non-fatal diagnostics. Passing an empty function
/// restores the default (stderr).
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace sketchmesh
