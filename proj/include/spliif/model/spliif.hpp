#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/interp/bilinear.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/interp/idw.hpp"
#include "spliif/model/config.hpp"
#include "spliif/model/params.hpp"
#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/ops.hpp"
#include "spliif/numerics/window.hpp"

namespace spliif {

struct Layer {
    Var weight;
    Var bias;
};

/// Parameters placed into a graph, grouped by role.
struct ModelVars {
    Var idw_exponent;
    Var idw_length;
    std::vector<Layer> proj;
    Layer fuse;
    std::vector<std::pair<Layer, Layer>> blocks;
    Layer final_conv;
    std::vector<Layer> decoder;
    std::vector<Var> all;  // param_layout order
};

template <class T>
ModelVars bind_params(Graph<T>& g, const SpliifConfig& cfg, const SpliifParams<T>& params,
                      bool requires_grad) {
    const auto layout = param_layout(cfg);
    if (layout.size() != params.tensors.size()) {
        throw ConfigError("parameter set does not match the model config");
    }
    ModelVars mv;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params.tensors[i].shape() != layout[i].shape || params.names[i] != layout[i].name) {
            throw DimensionError("parameter '" + layout[i].name + "' has shape " +
                                 to_string(params.tensors[i].shape()) + ", expected " +
                                 to_string(layout[i].shape));
        }
        mv.all.push_back(g.leaf(params.tensors[i], requires_grad, layout[i].name));
    }
    std::size_t k = 0;
    auto next = [&] { return mv.all[k++]; };
    auto next_layer = [&] {
        Layer l;
        l.weight = next();
        l.bias = next();
        return l;
    };
    mv.idw_exponent = next();
    mv.idw_length = next();
    for (std::size_t i = 0; i < cfg.mlp_depth; ++i) mv.proj.push_back(next_layer());
    mv.fuse = next_layer();
    for (std::size_t b = 0; b < cfg.edsr_blocks; ++b) {
        Layer c1 = next_layer();
        Layer c2 = next_layer();
        mv.blocks.emplace_back(c1, c2);
    }
    mv.final_conv = next_layer();
    for (std::size_t i = 0; i < cfg.mlp_depth; ++i) mv.decoder.push_back(next_layer());
    return mv;
}

/// Station inputs in normalised units.
template <class T>
struct StationInputs {
    std::vector<LonLat> positions;
    Tensor<T> values;  // [N, c_sp]
    Tensor<T> mask;    // [N, c_sp], 0/1; empty means all valid
};

namespace detail {

template <class T>
Var pointwise_mlp(Graph<T>& g, Var x, const std::vector<Layer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = linear_channels(g, x, layers[i].weight, layers[i].bias);
        if (i + 1 < layers.size()) x = relu(g, x);
    }
    return x;
}

template <class T>
Var row_mlp(Graph<T>& g, Var x, const std::vector<Layer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = linear(g, x, layers[i].weight, layers[i].bias);
        if (i + 1 < layers.size()) x = relu(g, x);
    }
    return x;
}

template <class T>
Tensor<T> crop(const Tensor<T>& full, const Window& win) {
    const std::size_t C = full.extent(0), W = full.extent(2);
    Tensor<T> out(Shape{C, static_cast<std::size_t>(win.rows), static_cast<std::size_t>(win.cols)});
    std::size_t k = 0;
    for (std::size_t c = 0; c < C; ++c)
        for (auto r = win.row0; r < win.row_end(); ++r)
            for (auto q = win.col0; q < win.col_end(); ++q)
                out[k++] = full[(c * full.extent(1) + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(q)];
    return out;
}

} // namespace detail

/// Sparse (+ optional dense) inputs -> coarse latent L0 [c_l, coarse_h, coarse_w].
template <class T>
Var encode(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, const StationInputs<T>& stations,
           const Tensor<T>* dense, const GridSpec& grid_coarse) {
    if (stations.positions.empty()) throw InputError("encode: no input stations");
    if (grid_coarse.height != cfg.coarse_h || grid_coarse.width != cfg.coarse_w) {
        throw ConfigError("encode: coarse grid is " + std::to_string(grid_coarse.height) + "x" +
                          std::to_string(grid_coarse.width) + ", config expects " +
                          std::to_string(cfg.coarse_h) + "x" + std::to_string(cfg.coarse_w));
    }
    if ((dense != nullptr) != (cfg.c_d > 0)) {
        throw ConfigError("encode: dense input presence does not match c_d=" + std::to_string(cfg.c_d));
    }
    if (stations.values.shape() != Shape{stations.positions.size(), cfg.c_sp}) {
        throw ConfigError("encode: station values " + to_string(stations.values.shape()) +
                          " do not match c_sp=" + std::to_string(cfg.c_sp));
    }
    const Var values = g.constant(stations.values);
    const Tensor<T>* mask = stations.mask.empty() ? nullptr : &stations.mask;
    Var x = idw_densify(g, std::span<const LonLat>(stations.positions), values, mask, grid_coarse,
                        mv.idw_exponent, mv.idw_length, cfg.idw_settings());
    if (dense) {
        if (dense->rank() != 3 || dense->extent(0) != cfg.c_d) {
            throw ConfigError("encode: dense input " + to_string(dense->shape()) +
                              " does not match c_d=" + std::to_string(cfg.c_d));
        }
        const Var d = bilinear_resize(g, g.constant(*dense), cfg.coarse_h, cfg.coarse_w);
        x = concat(g, {x, d});
    }
    return detail::pointwise_mlp(g, x, mv.proj);
}

struct FuseResult {
    Var l1;  // [c_topo + c_l, h, w] on the window
    Var f0;  // [edsr_width, h, w]
};

/// Upsamples L0 onto `win` of the fine grid, prepends the topography channel and
/// applies the per-pixel fuse layer. `topo` is the full [1, fine_h, fine_w] map.
template <class T>
FuseResult fuse_topography(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var l0,
                           const Tensor<T>& topo, const Window& win) {
    if (topo.shape() != Shape{cfg.c_topo, cfg.fine_h, cfg.fine_w}) {
        throw DimensionError("fuse_topography: topography " + to_string(topo.shape()) + " vs expected " +
                             to_string(Shape{cfg.c_topo, cfg.fine_h, cfg.fine_w}));
    }
    const Var up = bilinear_resize(g, l0, cfg.fine_h, cfg.fine_w, win);
    const Var t = g.constant(win == Window::full(cfg.fine_h, cfg.fine_w) ? topo : detail::crop(topo, win));
    const Var l1 = concat(g, {t, up});
    return {l1, linear_channels(g, l1, mv.fuse.weight, mv.fuse.bias)};
}

template <class T>
FuseResult fuse_topography(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var l0,
                           const Tensor<T>& topo) {
    return fuse_topography(g, mv, cfg, l0, topo, Window::full(cfg.fine_h, cfg.fine_w));
}

/// EDSR trunk: residual blocks (conv-relu-conv + skip), a final conv and a
/// global skip back to F0. Evaluated on window `win` of the fine grid; the
/// result is exact on the returned (shrunken) window.
template <class T>
std::pair<Var, Window> edsr_trunk(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var f0,
                                  const Window& win) {
    const std::size_t H = cfg.fine_h, W = cfg.fine_w;
    Var x = f0;
    Window xw = win;
    for (const auto& [c1, c2] : mv.blocks) {
        const Window w1 = conv3x3_valid_window(xw, H, W);
        const Var h = relu(g, conv2d_3x3(g, x, xw, H, W, c1.weight, c1.bias, w1));
        const Window w2 = conv3x3_valid_window(w1, H, W);
        const Var r = conv2d_3x3(g, h, w1, H, W, c2.weight, c2.bias, w2);
        x = add(g, r, w2, x, xw, w2);
        xw = w2;
    }
    const Window wf = conv3x3_valid_window(xw, H, W);
    const Var f = conv2d_3x3(g, x, xw, H, W, mv.final_conv.weight, mv.final_conv.bias, wf);
    return {add(g, f, wf, f0, win, wf), wf};
}

template <class T>
Var edsr_trunk(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var f0) {
    const auto& s = g.value(f0).shape();
    if (s != Shape{cfg.edsr_width, cfg.fine_h, cfg.fine_w}) {
        throw DimensionError("edsr_trunk: input " + to_string(s) + " vs expected " +
                             to_string(Shape{cfg.edsr_width, cfg.fine_h, cfg.fine_w}));
    }
    return edsr_trunk(g, mv, cfg, f0, Window::full(cfg.fine_h, cfg.fine_w)).first;
}

/// Samples the refined latent at the queries and decodes [N, c_out].
template <class T>
Var decode(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var f, const Window& win,
           const GridSpec& grid_fine, std::span<const LonLat> queries) {
    if (grid_fine.height != cfg.fine_h || grid_fine.width != cfg.fine_w) {
        throw ConfigError("decode: fine grid does not match config");
    }
    if (queries.empty()) throw InputError("decode: no query coordinates");
    const Var rows = sample_at_coords(g, f, win, grid_fine, queries);
    return detail::row_mlp(g, rows, mv.decoder);
}

template <class T>
Var decode(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, Var f, const GridSpec& grid_fine,
           std::span<const LonLat> queries) {
    return decode(g, mv, cfg, f, Window::full(cfg.fine_h, cfg.fine_w), grid_fine, queries);
}

/// Everything one forward pass consumes.
template <class T>
struct ForwardInputs {
    StationInputs<T> stations;
    std::optional<Tensor<T>> dense;  // [c_d, H, W] when c_d > 0
    Tensor<T> topo;                  // [1, fine_h, fine_w], normalised
    GridSpec grid_coarse;
    GridSpec grid_fine;
    std::vector<LonLat> queries;
};

/// Full pipeline decode(edsr_trunk(fuse_topography(encode(...)))).
///
/// When the queries are few, the trunk is evaluated only on each query's
/// receptive field (2x2 stencil grown by the convolution count); this is exact
/// because zero padding is honoured at true image borders only. With many
/// queries the whole fine grid is evaluated once.
template <class T>
Var forward(Graph<T>& g, const ModelVars& mv, const SpliifConfig& cfg, const ForwardInputs<T>& in) {
    cfg.validate();
    const Var l0 = encode(g, mv, cfg, in.stations, in.dense ? &*in.dense : nullptr, in.grid_coarse);
    const auto margin = static_cast<std::ptrdiff_t>(cfg.conv_count());
    const std::size_t H = cfg.fine_h, W = cfg.fine_w;
    if (in.queries.empty()) throw InputError("forward: no query coordinates");

    std::vector<Window> stencils;
    std::size_t windowed_cost = 0;
    std::map<std::tuple<std::ptrdiff_t, std::ptrdiff_t>, std::size_t> unique;
    for (const auto& q : in.queries) {
        stencils.push_back(stencil_window(in.grid_fine, q));
        const auto key = std::make_tuple(stencils.back().row0, stencils.back().col0);
        if (unique.emplace(key, 0).second) windowed_cost += stencils.back().expanded(margin, H, W).area();
    }
    if (windowed_cost >= H * W) {
        const FuseResult fused = fuse_topography(g, mv, cfg, l0, in.topo);
        const Var f = edsr_trunk(g, mv, cfg, fused.f0);
        return decode(g, mv, cfg, f, in.grid_fine, in.queries);
    }

    std::map<std::tuple<std::ptrdiff_t, std::ptrdiff_t>, std::pair<Var, Window>> refined;
    std::vector<Var> rows;
    for (std::size_t n = 0; n < in.queries.size(); ++n) {
        const Window& s = stencils[n];
        const auto key = std::make_tuple(s.row0, s.col0);
        auto it = refined.find(key);
        if (it == refined.end()) {
            const Window w0 = s.expanded(margin, H, W);
            const FuseResult fused = fuse_topography(g, mv, cfg, l0, in.topo, w0);
            it = refined.emplace(key, edsr_trunk(g, mv, cfg, fused.f0, w0)).first;
        }
        rows.push_back(sample_at_coords(g, it->second.first, it->second.second, in.grid_fine,
                                        std::span<const LonLat>(&in.queries[n], 1)));
    }
    const Var features = rows.size() == 1 ? rows.front() : concat(g, rows);
    return detail::row_mlp(g, features, mv.decoder);
}

/// Inference helper: [N, c_out] predictions in normalised units.
template <class T>
Tensor<T> predict(const SpliifConfig& cfg, const SpliifParams<T>& params, const ForwardInputs<T>& in) {
    Graph<T> g;
    const ModelVars mv = bind_params(g, cfg, params, false);
    return g.value(forward(g, mv, cfg, in));
}

} // namespace spliif
