#include "rflight/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iostream>

#include "rflight/errors.hpp"

namespace rflight {

namespace {

constexpr std::uint32_t kMagic = 0x52464C43;  // "RFLC"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    const std::uint32_t n = get<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& component,
                     std::uint64_t config_fingerprint, std::uint64_t step,
                     const NamedParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MissingArtifactError("checkpoint: cannot open for write: " + path);
    put(os, kMagic);
    put(os, kVersion);
    put_str(os, component);
    put(os, config_fingerprint);
    put(os, step);
    put(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_str(os, name);
        put(os, static_cast<std::uint32_t>(t->rank()));
        for (int d = 0; d < t->rank(); ++d) put(os, static_cast<std::uint64_t>(t->dim(d)));
        os.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!os) throw MissingArtifactError("checkpoint: write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, const NamedParams& params,
                               std::uint64_t expected_fingerprint) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("checkpoint: missing file: " + path);
    if (get<std::uint32_t>(is) != kMagic)
        throw MissingArtifactError("checkpoint: bad magic in " + path);
    CheckpointMeta meta;
    meta.version = get<std::uint32_t>(is);
    if (meta.version != kVersion)
        throw MissingArtifactError("checkpoint: unsupported version in " + path);
    meta.component = get_str(is);
    meta.config_fingerprint = get<std::uint64_t>(is);
    meta.step = get<std::uint64_t>(is);
    if (expected_fingerprint != 0 && meta.config_fingerprint != expected_fingerprint)
        std::cerr << "warning: checkpoint " << path << " was written under a different config"
                  << " (fingerprint " << meta.config_fingerprint << " vs "
                  << expected_fingerprint << ")\n";
    const std::uint32_t count = get<std::uint32_t>(is);
    if (count != params.size())
        throw MissingArtifactError("checkpoint: parameter count mismatch in " + path);
    for (const auto& [name, t] : params) {
        const std::string got = get_str(is);
        if (got != name)
            throw MissingArtifactError("checkpoint: parameter '" + got + "' where '" + name +
                                       "' expected in " + path);
        const std::uint32_t rank = get<std::uint32_t>(is);
        if (rank != static_cast<std::uint32_t>(t->rank()))
            throw MissingArtifactError("checkpoint: rank mismatch for '" + name + "' in " + path);
        for (int d = 0; d < t->rank(); ++d) {
            const std::uint64_t dim = get<std::uint64_t>(is);
            if (dim != static_cast<std::uint64_t>(t->dim(d)))
                throw MissingArtifactError("checkpoint: shape mismatch for '" + name + "' in " +
                                           path);
        }
        is.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!is) throw MissingArtifactError("checkpoint: truncated file: " + path);
    return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("checkpoint: missing file: " + path);
    if (get<std::uint32_t>(is) != kMagic)
        throw MissingArtifactError("checkpoint: bad magic in " + path);
    CheckpointMeta meta;
    meta.version = get<std::uint32_t>(is);
    meta.component = get_str(is);
    meta.config_fingerprint = get<std::uint64_t>(is);
    meta.step = get<std::uint64_t>(is);
    if (!is) throw MissingArtifactError("checkpoint: truncated header: " + path);
    return meta;
}

} // namespace rflight
