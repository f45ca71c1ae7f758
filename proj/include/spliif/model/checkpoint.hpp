#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/io.hpp"
#include "spliif/model/config.hpp"
#include "spliif/model/params.hpp"
#include "spliif/numerics/adam.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// Optimiser position stored alongside the parameters so training can resume exactly.
struct TrainState {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    AdamState<float> adam;
};

struct Checkpoint {
    SpliifConfig config;
    SpliifParams<float> params;
    std::optional<TrainState> train;
};

// File layout (little endian):
//   "SPLF" | u32 version=1 | u32 tensor count
//   per tensor: u16 name length | name bytes | u8 rank | u32 extents[rank] | f32 values
// The first tensor, "meta.config", embeds the architecture; integers are split
// into 16-bit chunks so they survive the f32 payload exactly.
inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'L', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64_chunks(std::vector<float>& out, std::uint64_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<float>((v >> (16 * i)) & 0xFFFF));
}

inline std::uint64_t get_u64_chunks(const float* p, const std::string& what) {
    std::uint64_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const float f = p[i];
        if (!(f >= 0.0f && f <= 65535.0f) || f != static_cast<float>(static_cast<std::uint32_t>(f))) {
            throw FormatError("checkpoint: corrupt integer field in " + what);
        }
        v |= static_cast<std::uint64_t>(f) << (16 * i);
    }
    return v;
}

inline Tensor<float> encode_u64s(const std::vector<std::uint64_t>& values) {
    std::vector<float> data;
    for (const auto v : values) put_u64_chunks(data, v);
    Shape shape{data.size()};
    return Tensor<float>(std::move(shape), std::move(data));
}

inline std::vector<std::uint64_t> decode_u64s(const Tensor<float>& t, const std::string& what) {
    if (t.rank() != 1 || t.size() % 4 != 0) throw FormatError("checkpoint: malformed " + what);
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < t.size(); i += 4) out.push_back(get_u64_chunks(t.data().data() + i, what));
    return out;
}

inline Tensor<float> encode_config(const SpliifConfig& c) {
    std::uint64_t eps_bits;
    std::memcpy(&eps_bits, &c.idw_epsilon, sizeof eps_bits);
    return encode_u64s({c.c_sp, c.c_d, c.c_topo, c.c_l, c.c_out, c.coarse_h, c.coarse_w, c.fine_h,
                        c.fine_w, c.edsr_blocks, c.edsr_width, c.mlp_hidden, c.mlp_depth, c.idw_k, eps_bits});
}

inline SpliifConfig decode_config(const Tensor<float>& t) {
    const auto v = decode_u64s(t, "meta.config");
    if (v.size() != 15) throw FormatError("checkpoint: meta.config has " + std::to_string(v.size()) + " fields");
    SpliifConfig c;
    c.c_sp = v[0];
    c.c_d = v[1];
    c.c_topo = v[2];
    c.c_l = v[3];
    c.c_out = v[4];
    c.coarse_h = v[5];
    c.coarse_w = v[6];
    c.fine_h = v[7];
    c.fine_w = v[8];
    c.edsr_blocks = v[9];
    c.edsr_width = v[10];
    c.mlp_hidden = v[11];
    c.mlp_depth = v[12];
    c.idw_k = v[13];
    std::memcpy(&c.idw_epsilon, &v[14], sizeof c.idw_epsilon);
    return c;
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void f32(float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    std::uint64_t read_le(std::size_t n, const char* what) {
        need(n, what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    float f32(const char* what) {
        const auto bits = static_cast<std::uint32_t>(read_le(4, what));
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline std::vector<std::uint8_t> serialize_tensors(const NamedTensors& tensors) {
    ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (const auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
        for (const float v : t.data()) w.f32(v);
    }
    return w.take();
}

inline NamedTensors parse_tensors(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.str(4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError("checkpoint: bad magic (expected SPLF)");
    const auto version = r.read_le(4, "version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = r.read_le(4, "tensor count");
    NamedTensors out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = r.read_le(2, "tensor name length");
        std::string name = r.str(len, "tensor name");
        const auto rank = r.read_le(1, "tensor rank");
        Shape shape;
        std::uint64_t n = 1;
        for (std::uint64_t k = 0; k < rank; ++k) {
            shape.push_back(r.read_le(4, "tensor extent"));
            n *= shape.back();
            if (n > bytes.size()) throw FormatError("checkpoint: tensor '" + name + "' larger than file");
        }
        std::vector<float> data(n);
        for (auto& v : data) v = r.f32("tensor values");
        out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last tensor");
    return out;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    detail::NamedTensors tensors;
    tensors.emplace_back("meta.config", detail::encode_config(ck.config));
    const auto layout = param_layout(ck.config);
    if (layout.size() != ck.params.tensors.size()) throw ConfigError("checkpoint: params do not match config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (ck.params.tensors[i].shape() != layout[i].shape) {
            throw DimensionError("checkpoint: parameter '" + layout[i].name + "' has wrong shape");
        }
        tensors.emplace_back(layout[i].name, ck.params.tensors[i]);
    }
    if (ck.train) {
        const auto& ts = *ck.train;
        tensors.emplace_back("train.state", detail::encode_u64s({ts.seed, ts.step, ts.adam.step}));
        for (std::size_t i = 0; i < layout.size(); ++i) tensors.emplace_back("adam.m." + layout[i].name, ts.adam.m.at(i));
        for (std::size_t i = 0; i < layout.size(); ++i) tensors.emplace_back("adam.v." + layout[i].name, ts.adam.v.at(i));
    }
    return detail::serialize_tensors(tensors);
}

/// Parses a checkpoint, validating every tensor against the embedded config and,
/// when given, against `expected` (the first mismatching tensor is named).
inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const SpliifConfig* expected = nullptr) {
    auto tensors = detail::parse_tensors(bytes);
    if (tensors.empty() || tensors.front().first != "meta.config") {
        throw FormatError("checkpoint: first tensor must be meta.config");
    }
    Checkpoint ck;
    ck.config = detail::decode_config(tensors.front().second);
    try {
        ck.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: embedded ") + e.what());
    }
    const auto file_layout = param_layout(ck.config);
    auto find = [&](const std::string& name) -> const Tensor<float>* {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    };
    if (expected) {
        for (const auto& entry : param_layout(*expected)) {
            const Tensor<float>* t = find(entry.name);
            if (!t) throw FormatError("checkpoint: missing tensor '" + entry.name + "'");
            if (t->shape() != entry.shape) {
                throw FormatError("checkpoint: shape mismatch for tensor '" + entry.name + "': file has " +
                                  to_string(t->shape()) + ", config expects " + to_string(entry.shape));
            }
        }
        if (!(ck.config == *expected)) throw FormatError("checkpoint: embedded config differs from the expected config");
    }
    for (const auto& entry : file_layout) {
        const Tensor<float>* t = find(entry.name);
        if (!t) throw FormatError("checkpoint: missing tensor '" + entry.name + "'");
        if (t->shape() != entry.shape) {
            throw FormatError("checkpoint: shape mismatch for tensor '" + entry.name + "': file has " +
                              to_string(t->shape()) + ", embedded config expects " + to_string(entry.shape));
        }
        ck.params.names.push_back(entry.name);
        ck.params.tensors.push_back(*t);
    }
    if (const Tensor<float>* st = find("train.state")) {
        const auto v = detail::decode_u64s(*st, "train.state");
        if (v.size() != 3) throw FormatError("checkpoint: malformed train.state");
        TrainState ts;
        ts.seed = v[0];
        ts.step = v[1];
        ts.adam.step = v[2];
        for (const char* which : {"adam.m.", "adam.v."}) {
            for (const auto& entry : file_layout) {
                const Tensor<float>* t = find(which + entry.name);
                if (!t || t->shape() != entry.shape) {
                    throw FormatError("checkpoint: missing or misshapen tensor '" + std::string(which) + entry.name + "'");
                }
                (which[5] == 'm' ? ts.adam.m : ts.adam.v).push_back(*t);
            }
        }
        ck.train = std::move(ts);
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const SpliifConfig* expected = nullptr) {
    return decode_checkpoint(read_file_bytes(path), expected);
}

} // namespace spliif
