#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/interp/idw.hpp"
#include "spliif/model/config.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

struct ParamSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;  // 0: not a weight/bias (IDW parameters)
};

namespace detail {

inline void append_mlp(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in,
                       std::size_t hidden, std::size_t outputs, std::size_t depth) {
    std::size_t d_in = in;
    for (std::size_t i = 0; i < depth; ++i) {
        const std::size_t d_out = i + 1 == depth ? outputs : hidden;
        const std::string base = prefix + "." + std::to_string(i);
        out.push_back({base + ".weight", {d_in, d_out}, d_in});
        out.push_back({base + ".bias", {d_out}, d_in});
        d_in = d_out;
    }
}

} // namespace detail

/// Names and shapes of every learnable tensor, in canonical (checkpoint) order.
inline std::vector<ParamSpec> param_layout(const SpliifConfig& cfg) {
    std::vector<ParamSpec> out;
    out.push_back({"idw.exponent_raw", {cfg.c_sp}, 0});
    out.push_back({"idw.length_scale_raw", {cfg.c_sp}, 0});
    detail::append_mlp(out, "proj_mlp", cfg.c_sp + cfg.c_d, cfg.mlp_hidden, cfg.c_l, cfg.mlp_depth);
    out.push_back({"fuse.weight", {cfg.c_topo + cfg.c_l, cfg.edsr_width}, cfg.c_topo + cfg.c_l});
    out.push_back({"fuse.bias", {cfg.edsr_width}, cfg.c_topo + cfg.c_l});
    const std::size_t w = cfg.edsr_width;
    for (std::size_t b = 0; b < cfg.edsr_blocks; ++b) {
        const std::string base = "trunk." + std::to_string(b);
        out.push_back({base + ".conv1.weight", {w, w, 3, 3}, w * 9});
        out.push_back({base + ".conv1.bias", {w}, w * 9});
        out.push_back({base + ".conv2.weight", {w, w, 3, 3}, w * 9});
        out.push_back({base + ".conv2.bias", {w}, w * 9});
    }
    out.push_back({"trunk.final.weight", {w, w, 3, 3}, w * 9});
    out.push_back({"trunk.final.bias", {w}, w * 9});
    detail::append_mlp(out, "decoder_mlp", w + 2, cfg.mlp_hidden, cfg.c_out, cfg.mlp_depth);
    return out;
}

/// All learnable tensors of a model, stored in param_layout order.
template <class T>
struct SpliifParams {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;

    std::size_t index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ContractError("unknown parameter '" + name + "'");
    }

    Tensor<T>& get(const std::string& name) { return tensors[index(name)]; }
    const Tensor<T>& get(const std::string& name) const { return tensors[index(name)]; }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    template <class U>
    SpliifParams<U> cast() const {
        SpliifParams<U> out;
        out.names = names;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }

    /// Zero tensors with the layout of `cfg`.
    static SpliifParams zeros(const SpliifConfig& cfg) {
        SpliifParams p;
        for (const auto& entry : param_layout(cfg)) {
            p.names.push_back(entry.name);
            p.tensors.emplace_back(entry.shape);
        }
        return p;
    }

    /// Weights and biases uniform in +-sqrt(1/fan_in); the last decoder bias is
    /// zero. IDW exponent starts at 2, length scale at 1 degree.
    static SpliifParams initialize(const SpliifConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        SpliifParams p = zeros(cfg);
        const auto layout = param_layout(cfg);
        const std::string last_bias = "decoder_mlp." + std::to_string(cfg.mlp_depth - 1) + ".bias";
        Rng rng(derive_seed(seed, 0x1a17));
        for (std::size_t i = 0; i < layout.size(); ++i) {
            auto& t = p.tensors[i];
            const auto& entry = layout[i];
            if (entry.name == "idw.exponent_raw") {
                t.fill(static_cast<T>(softplus_inverse(2.0)));
            } else if (entry.name == "idw.length_scale_raw") {
                t.fill(static_cast<T>(softplus_inverse(1.0)));
            } else if (entry.name == last_bias) {
                t.fill(T(0));
            } else {
                const double bound = std::sqrt(1.0 / static_cast<double>(entry.fan_in));
                for (auto& v : t.data()) v = static_cast<T>(uniform(rng, -bound, bound));
            }
        }
        return p;
    }
};

} // namespace spliif
