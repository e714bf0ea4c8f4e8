#pragma once

#include <cstdint>
#include <string>

#include "rflight/nn.hpp"

namespace rflight {

struct CheckpointMeta {
    std::uint32_t version = 1;
    std::string component;  // teacher | student | policy | value
    std::uint64_t config_fingerprint = 0;
    std::uint64_t step = 0;
};

// Versioned binary blob: shape manifest + raw little-endian doubles.
// save -> load -> save is byte identical.
void save_checkpoint(const std::string& path, const std::string& component,
                     std::uint64_t config_fingerprint, std::uint64_t step,
                     const NamedParams& params);

// Loads into an existing parameter set; names and shapes must match.
// A fingerprint mismatch (when expected != 0) prints an explicit warning to
// stderr but does not fail. Missing file -> MissingArtifactError.
CheckpointMeta load_checkpoint(const std::string& path, const NamedParams& params,
                               std::uint64_t expected_fingerprint = 0);

CheckpointMeta peek_checkpoint(const std::string& path);

} // namespace rflight
