#pragma once

#include <cstddef>
#include <string>

#include "spliif/error.hpp"
#include "spliif/interp/idw.hpp"

namespace spliif {

/// Architecture hyperparameters.
struct SpliifConfig {
    std::size_t c_sp = 3;     // sparse channels: temperature, u, v
    std::size_t c_d = 0;      // optional dense channels
    std::size_t c_topo = 1;
    std::size_t c_l = 64;     // latent width
    std::size_t c_out = 3;
    std::size_t coarse_h = 64;
    std::size_t coarse_w = 64;
    std::size_t fine_h = 256;
    std::size_t fine_w = 256;
    std::size_t edsr_blocks = 8;
    std::size_t edsr_width = 64;
    std::size_t mlp_hidden = 128;
    std::size_t mlp_depth = 3;  // linear layers per MLP
    std::size_t idw_k = 16;
    double idw_epsilon = 1e-6;

    void validate() const {
        auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
        if (c_sp < 1) fail("c_sp must be >= 1");
        if (c_out != c_sp) fail("c_out must equal c_sp");
        if (c_topo != 1) fail("c_topo must be 1");
        if (c_l < 1 || edsr_width < 1 || mlp_hidden < 1) fail("layer widths must be >= 1");
        if (mlp_depth < 1) fail("mlp_depth must be >= 1");
        if (coarse_h < 2 || coarse_w < 2) fail("coarse extents must be >= 2");
        if (fine_h < 2 || fine_w < 2) fail("fine extents must be >= 2");
        if (fine_h % coarse_h != 0 || fine_w % coarse_w != 0) {
            fail("fine extents must be divisible by coarse extents");
        }
        if (idw_k < 1) fail("idw_k must be >= 1");
        if (!(idw_epsilon > 0.0)) fail("idw_epsilon must be > 0");
    }

    /// Number of 3x3 convolutions in the trunk; also its receptive-field radius.
    std::size_t conv_count() const { return 2 * edsr_blocks + 1; }

    IdwSettings idw_settings() const { return {idw_k, idw_epsilon}; }

    friend bool operator==(const SpliifConfig&, const SpliifConfig&) = default;
};

} // namespace spliif
