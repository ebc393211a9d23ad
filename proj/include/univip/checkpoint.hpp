#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "univip/model.hpp"

// Checkpoint container: "UVIP" magic, format version, step counter, target
// momentum, the config dump that produced the run, then every registered
// parameter as (name, shape, f32 values) in registry order. Values are
// stored as little-endian f32, so float models round-trip bit-exactly;
// loading validates name and shape against the receiving model and fails
// loudly on any mismatch.

namespace univip {

struct CheckpointData {
    uint64_t step = 0;
    double momentum = 0.0;
    std::string config_ini; // to_ini() dump, may be empty
};

namespace detail {

template <typename U>
void write_pod(std::ofstream& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.write(buf, sizeof(U));
}

template <typename U>
U read_pod(std::ifstream& in, const char* what) {
    char buf[sizeof(U)];
    in.read(buf, sizeof(U));
    if (!in) throw DataError(std::string("checkpoint: truncated while reading ") + what);
    U v;
    std::memcpy(&v, buf, sizeof(U));
    return v;
}

inline void write_str(std::ofstream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::ifstream& in, const char* what) {
    uint32_t n = read_pod<uint32_t>(in, what);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw DataError(std::string("checkpoint: truncated while reading ") + what);
    return s;
}

} // namespace detail

inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, ModelT<T>& model, const CheckpointData& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    out.write("UVIP", 4);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint64_t>(out, meta.step);
    detail::write_pod<double>(out, meta.momentum);
    detail::write_str(out, meta.config_ini);
    auto params = model.parameters();
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(params.size()));
    for (auto& p : params) {
        detail::write_str(out, p.name);
        const auto& shape = p.tensor.shape();
        detail::write_pod<uint32_t>(out, static_cast<uint32_t>(shape.size()));
        for (std::size_t d : shape) detail::write_pod<uint64_t>(out, d);
        for (T v : p.tensor.data()) {
            detail::write_pod<float>(out, static_cast<float>(v));
        }
    }
    out.flush();
    if (!out) throw DataError("checkpoint: write to '" + path + "' failed");
}

template <typename T>
CheckpointData load_checkpoint(const std::string& path, ModelT<T>& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UVIP", 4) != 0) {
        throw DataError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    uint32_t version = detail::read_pod<uint32_t>(in, "version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    CheckpointData meta;
    meta.step = detail::read_pod<uint64_t>(in, "step");
    meta.momentum = detail::read_pod<double>(in, "momentum");
    meta.config_ini = detail::read_str(in, "config");
    auto params = model.parameters();
    uint32_t count = detail::read_pod<uint32_t>(in, "parameter count");
    if (count != params.size()) {
        throw DataError("checkpoint: holds " + std::to_string(count) + " parameters, model has " +
                        std::to_string(params.size()));
    }
    for (auto& p : params) {
        std::string name = detail::read_str(in, "parameter name");
        if (name != p.name) {
            throw DataError("checkpoint: parameter '" + name + "' where model expects '" +
                            p.name + "'");
        }
        uint32_t ndim = detail::read_pod<uint32_t>(in, "rank");
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<std::size_t>(detail::read_pod<uint64_t>(in, "shape"));
        }
        if (shape != p.tensor.shape()) {
            throw DataError("checkpoint: shape mismatch on '" + name + "'");
        }
        auto& dst = p.tensor.node()->data;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<T>(detail::read_pod<float>(in, "values"));
        }
    }
    return meta;
}

// Header only: step, momentum and the embedded config, without touching the
// parameter payload. Lets a caller recover the architecture before it can
// construct the receiving model.
inline CheckpointData peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "UVIP", 4) != 0) {
        throw DataError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    uint32_t version = detail::read_pod<uint32_t>(in, "version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    CheckpointData meta;
    meta.step = detail::read_pod<uint64_t>(in, "step");
    meta.momentum = detail::read_pod<double>(in, "momentum");
    meta.config_ini = detail::read_str(in, "config");
    return meta;
}

} // namespace univip
