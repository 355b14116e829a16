#include "sketchmesh/error.hpp"

#include <iostream>
#include <mutex>

namespace sketchmesh {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& sink() {
    static WarningSink s;
    return s;
}

}  // namespace

CommandError::CommandError(std::string code, std::string message, std::uint64_t seq)
    : Error("command " + std::to_string(seq) + " failed (" + code + "): " + message),
      code_(std::move(code)),
      message_(std::move(message)),
      seq_(seq) {}

void set_warning_sink(WarningSink s) {
    std::lock_guard lock(sink_mutex());
    sink() = std::move(s);
}

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) {
        sink()(message);
    } else {
        std::cerr << "sketchmesh: warning: " << message << '\n';
    }
}

}  // namespace sketchmesh
