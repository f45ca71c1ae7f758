#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/io.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// Binary greyscale PGM of a [1, H, W] south-up field; the first image row is
/// the northernmost. Values map affinely from [lo, hi] to [0, 255], clamped.
template <class T>
std::vector<std::uint8_t> render_pgm(const Tensor<T>& field, double lo, double hi) {
    if (field.rank() != 3 || field.extent(0) != 1) {
        throw DimensionError("render_pgm: expected [1, H, W], got " + to_string(field.shape()));
    }
    if (!(hi > lo)) throw ContractError("render_pgm: value range must satisfy hi > lo");
    if (!field.all_finite()) throw InputError("render_pgm: field has non-finite values");
    const std::size_t H = field.extent(1), W = field.extent(2);
    const std::string header = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + H * W);
    for (std::size_t r = 0; r < H; ++r) {
        const std::size_t i = H - 1 - r;
        for (std::size_t j = 0; j < W; ++j) {
            const double x = (static_cast<double>(field[i * W + j]) - lo) / (hi - lo) * 255.0;
            out.push_back(static_cast<std::uint8_t>(std::clamp(std::round(x), 0.0, 255.0)));
        }
    }
    return out;
}

template <class T>
void render_field_map(const Tensor<T>& field, double lo, double hi, const std::filesystem::path& path) {
    write_file_atomic(path, render_pgm(field, lo, hi));
}

/// One arrow per stride x stride block, in image pixel coordinates (x right,
/// y down from the north edge). dx = mean u, dy = -mean v.
struct Arrow {
    double x = 0.0;
    double y = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};

template <class T>
std::vector<Arrow> overlay_wind(const Tensor<T>& u, const Tensor<T>& v, std::size_t stride) {
    if (u.rank() != 3 || u.extent(0) != 1 || u.shape() != v.shape()) {
        throw DimensionError("overlay_wind: u and v must both be [1, H, W]");
    }
    if (stride < 1) throw ContractError("overlay_wind: stride must be >= 1");
    const std::size_t H = u.extent(1), W = u.extent(2);
    std::vector<Arrow> out;
    for (std::size_t r0 = 0; r0 < H; r0 += stride) {
        for (std::size_t c0 = 0; c0 < W; c0 += stride) {
            const std::size_t r1 = std::min(H, r0 + stride), c1 = std::min(W, c0 + stride);
            double su = 0.0, sv = 0.0;
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) {
                    const std::size_t k = (H - 1 - r) * W + c;
                    su += static_cast<double>(u[k]);
                    sv += static_cast<double>(v[k]);
                }
            const double n = static_cast<double>((r1 - r0) * (c1 - c0));
            out.push_back({0.5 * static_cast<double>(c0 + c1), 0.5 * static_cast<double>(r0 + r1), su / n, -sv / n});
        }
    }
    return out;
}

inline std::string format_arrows_csv(const std::vector<Arrow>& arrows) {
    std::ostringstream os;
    os << "x,y,dx,dy\n";
    for (const auto& a : arrows)
        os << format_number(a.x) << ',' << format_number(a.y) << ',' << format_number(a.dx) << ','
           << format_number(a.dy) << '\n';
    return os.str();
}

} // namespace spliif
