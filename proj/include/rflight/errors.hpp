#pragma once

#include <stdexcept>
#include <string>

namespace rflight {

// Error families map to distinct CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rflight
