#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/numerics/graph.hpp"
#include "spliif/numerics/window.hpp"

namespace spliif {

namespace detail {

struct LinearTaps {
    std::vector<std::size_t> lo;
    std::vector<double> frac;
};

// Align-corners-false source positions for an axis resized from n_in to n_out,
// restricted to output indices [first, first+count).
inline LinearTaps resize_taps(std::size_t n_in, std::size_t n_out, std::ptrdiff_t first,
                              std::ptrdiff_t count) {
    LinearTaps taps;
    const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
    const double hi = static_cast<double>(n_in - 1);
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        double s = (static_cast<double>(first + k) + 0.5) * ratio - 0.5;
        s = std::clamp(s, 0.0, hi);
        auto lo = static_cast<std::size_t>(std::floor(s));
        lo = std::min(lo, n_in - 2);
        taps.lo.push_back(lo);
        taps.frac.push_back(s - static_cast<double>(lo));
    }
    return taps;
}

} // namespace detail

/// Bilinear resize of [C,H,W] to [C,out_h,out_w], evaluated only on `out`
/// (a window of the out_h x out_w result). Pixel centres follow the
/// align-corners-false convention; samples beyond the outer centres are clamped.
template <class T>
Var bilinear_resize(Graph<T>& g, Var x, std::size_t out_h, std::size_t out_w, const Window& out) {
    const auto& xs = g.value(x).shape();
    if (xs.size() != 3) throw DimensionError("bilinear_resize: expected [C,H,W], got " + to_string(xs));
    if (xs[1] < 2 || xs[2] < 2) {
        throw InputError("bilinear_resize: input extents must be >= 2, got " + to_string(xs));
    }
    if (out_h < 1 || out_w < 1) throw InputError("bilinear_resize: output extents must be >= 1");
    if (out.empty() || !out.inside_image(out_h, out_w)) {
        throw DimensionError("bilinear_resize: window " + out.str() + " outside output extents");
    }
    const std::size_t C = xs[0], H = xs[1], W = xs[2];
    auto rows = std::make_shared<detail::LinearTaps>(detail::resize_taps(H, out_h, out.row0, out.rows));
    auto cols = std::make_shared<detail::LinearTaps>(detail::resize_taps(W, out_w, out.col0, out.cols));
    const auto R = static_cast<std::size_t>(out.rows);
    const auto Q = static_cast<std::size_t>(out.cols);
    Tensor<T> y(Shape{C, R, Q});
    const auto& xv = g.value(x);
    for (std::size_t c = 0; c < C; ++c) {
        const T* plane = xv.data().data() + c * H * W;
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t i0 = rows->lo[r];
            const double ty = rows->frac[r];
            for (std::size_t q = 0; q < Q; ++q) {
                const std::size_t j0 = cols->lo[q];
                const double tx = cols->frac[q];
                const double v00 = plane[i0 * W + j0], v01 = plane[i0 * W + j0 + 1];
                const double v10 = plane[(i0 + 1) * W + j0], v11 = plane[(i0 + 1) * W + j0 + 1];
                const double top = (1.0 - tx) * v00 + tx * v01;
                const double bot = (1.0 - tx) * v10 + tx * v11;
                y.at(c, r, q) = static_cast<T>((1.0 - ty) * top + ty * bot);
            }
        }
    }
    return g.record("bilinear_resize", std::move(y), {x},
                    [x, rows, cols, C, H, W, R, Q](Graph<T>& gr, const Tensor<T>& dy) {
                        auto& dx = gr.grad(x);
                        for (std::size_t c = 0; c < C; ++c) {
                            T* plane = dx.data().data() + c * H * W;
                            for (std::size_t r = 0; r < R; ++r) {
                                const std::size_t i0 = rows->lo[r];
                                const double ty = rows->frac[r];
                                for (std::size_t q = 0; q < Q; ++q) {
                                    const std::size_t j0 = cols->lo[q];
                                    const double tx = cols->frac[q];
                                    const double d = dy.at(c, r, q);
                                    plane[i0 * W + j0] += static_cast<T>(d * (1.0 - ty) * (1.0 - tx));
                                    plane[i0 * W + j0 + 1] += static_cast<T>(d * (1.0 - ty) * tx);
                                    plane[(i0 + 1) * W + j0] += static_cast<T>(d * ty * (1.0 - tx));
                                    plane[(i0 + 1) * W + j0 + 1] += static_cast<T>(d * ty * tx);
                                }
                            }
                        }
                    });
}

template <class T>
Var bilinear_resize(Graph<T>& g, Var x, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1) throw InputError("bilinear_resize: output extents must be >= 1");
    return bilinear_resize(g, x, out_h, out_w, Window::full(out_h, out_w));
}

/// Where a query lands on a grid: the 2x2 bilinear stencil and the offset to the
/// nearest pixel centre in half-cell units.
struct SamplePoint {
    std::size_t row0 = 0;  // stencil rows row0, row0+1
    std::size_t col0 = 0;
    double ty = 0.0;
    double tx = 0.0;
    double offset_x = 0.0;  // lon direction, [-1, 1]
    double offset_y = 0.0;  // lat direction, [-1, 1]
};

/// Queries may sit anywhere in the raster footprint, plus this many cells of slack.
inline constexpr double kQueryTolerance = 1e-4;

inline SamplePoint locate(const GridSpec& grid, const LonLat& q) {
    if (!std::isfinite(q.lon) || !std::isfinite(q.lat)) {
        throw InputError("query coordinate is not finite");
    }
    const double W = static_cast<double>(grid.width);
    const double H = static_cast<double>(grid.height);
    double fx = grid.col_coord(q.lon);
    double fy = grid.row_coord(q.lat);
    if (fx < -0.5 - kQueryTolerance || fx > W - 0.5 + kQueryTolerance || fy < -0.5 - kQueryTolerance ||
        fy > H - 0.5 + kQueryTolerance) {
        throw InputError("query (" + std::to_string(q.lon) + ", " + std::to_string(q.lat) +
                         ") lies outside the grid");
    }
    // Snap round-off so pixel centres sample exactly.
    if (std::abs(fx - std::round(fx)) < 1e-9) fx = std::round(fx);
    if (std::abs(fy - std::round(fy)) < 1e-9) fy = std::round(fy);

    SamplePoint sp;
    const double cx = std::clamp(fx, 0.0, W - 1.0);
    const double cy = std::clamp(fy, 0.0, H - 1.0);
    sp.col0 = std::min(static_cast<std::size_t>(std::floor(cx)), grid.width - 2);
    sp.row0 = std::min(static_cast<std::size_t>(std::floor(cy)), grid.height - 2);
    sp.tx = cx - static_cast<double>(sp.col0);
    sp.ty = cy - static_cast<double>(sp.row0);
    // Nearest centre; an exact midpoint goes to the smaller index.
    const double nx = std::clamp(std::ceil(fx - 0.5), 0.0, W - 1.0);
    const double ny = std::clamp(std::ceil(fy - 0.5), 0.0, H - 1.0);
    sp.offset_x = std::clamp((fx - nx) / 0.5, -1.0, 1.0);
    sp.offset_y = std::clamp((fy - ny) / 0.5, -1.0, 1.0);
    return sp;
}

/// 2x2 block of pixels that sampling `q` touches.
inline Window stencil_window(const GridSpec& grid, const LonLat& q) {
    const SamplePoint sp = locate(grid, q);
    return {static_cast<std::ptrdiff_t>(sp.row0), static_cast<std::ptrdiff_t>(sp.col0), 2, 2};
}

/// LIIF-style sampling of a latent grid at arbitrary coordinates.
///
/// `latent` holds window `win` of a [C, grid.height, grid.width] field. Each
/// output row is the bilinearly sampled C-vector followed by the (x, y) offset
/// to the nearest pixel centre, normalised to [-1, 1] by half a cell.
template <class T>
Var sample_at_coords(Graph<T>& g, Var latent, const Window& win, const GridSpec& grid,
                     std::span<const LonLat> queries) {
    grid.validate();
    const auto& ls = g.value(latent).shape();
    if (ls.size() != 3 || static_cast<std::ptrdiff_t>(ls[1]) != win.rows ||
        static_cast<std::ptrdiff_t>(ls[2]) != win.cols || !win.inside_image(grid.height, grid.width)) {
        throw DimensionError("sample_at_coords: latent " + to_string(ls) + " does not match window " +
                             win.str() + " of a " + std::to_string(grid.height) + "x" +
                             std::to_string(grid.width) + " grid");
    }
    const std::size_t C = ls[0];
    auto points = std::make_shared<std::vector<SamplePoint>>();
    for (const auto& q : queries) {
        const SamplePoint sp = locate(grid, q);
        const Window need{static_cast<std::ptrdiff_t>(sp.row0), static_cast<std::ptrdiff_t>(sp.col0), 2, 2};
        if (!win.contains(need)) {
            throw DimensionError("sample_at_coords: query stencil " + need.str() + " outside window " + win.str());
        }
        points->push_back(sp);
    }
    const std::size_t N = points->size();
    const auto wr = static_cast<std::size_t>(win.rows);
    const auto wc = static_cast<std::size_t>(win.cols);
    const auto r_off = static_cast<std::size_t>(win.row0);
    const auto c_off = static_cast<std::size_t>(win.col0);
    Tensor<T> y(Shape{N, C + 2});
    const auto& lv = g.value(latent);
    for (std::size_t n = 0; n < N; ++n) {
        const SamplePoint& sp = (*points)[n];
        const std::size_t i0 = sp.row0 - r_off, j0 = sp.col0 - c_off;
        for (std::size_t c = 0; c < C; ++c) {
            const T* plane = lv.data().data() + c * wr * wc;
            const double v00 = plane[i0 * wc + j0], v01 = plane[i0 * wc + j0 + 1];
            const double v10 = plane[(i0 + 1) * wc + j0], v11 = plane[(i0 + 1) * wc + j0 + 1];
            const double top = (1.0 - sp.tx) * v00 + sp.tx * v01;
            const double bot = (1.0 - sp.tx) * v10 + sp.tx * v11;
            y.at(n, c) = static_cast<T>((1.0 - sp.ty) * top + sp.ty * bot);
        }
        y.at(n, C) = static_cast<T>(sp.offset_x);
        y.at(n, C + 1) = static_cast<T>(sp.offset_y);
    }
    return g.record("sample_at_coords", std::move(y), {latent},
                    [latent, points, C, wr, wc, r_off, c_off](Graph<T>& gr, const Tensor<T>& dy) {
                        auto& dl = gr.grad(latent);
                        for (std::size_t n = 0; n < points->size(); ++n) {
                            const SamplePoint& sp = (*points)[n];
                            const std::size_t i0 = sp.row0 - r_off, j0 = sp.col0 - c_off;
                            for (std::size_t c = 0; c < C; ++c) {
                                T* plane = dl.data().data() + c * wr * wc;
                                const double d = dy.at(n, c);
                                plane[i0 * wc + j0] += static_cast<T>(d * (1.0 - sp.ty) * (1.0 - sp.tx));
                                plane[i0 * wc + j0 + 1] += static_cast<T>(d * (1.0 - sp.ty) * sp.tx);
                                plane[(i0 + 1) * wc + j0] += static_cast<T>(d * sp.ty * (1.0 - sp.tx));
                                plane[(i0 + 1) * wc + j0 + 1] += static_cast<T>(d * sp.ty * sp.tx);
                            }
                        }
                    });
}

template <class T>
Var sample_at_coords(Graph<T>& g, Var latent, const GridSpec& grid, std::span<const LonLat> queries) {
    return sample_at_coords(g, latent, Window::full(grid.height, grid.width), grid, queries);
}

} // namespace spliif
