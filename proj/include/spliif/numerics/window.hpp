#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

namespace spliif {

/// Axis-aligned rectangle of pixels inside an image of known extents.
///
/// Windowed operations carry a Window next to their tensor so that a sub-region
/// of a grid can be computed exactly as if the whole grid had been evaluated.
struct Window {
    std::ptrdiff_t row0 = 0;
    std::ptrdiff_t col0 = 0;
    std::ptrdiff_t rows = 0;
    std::ptrdiff_t cols = 0;

    static Window full(std::size_t h, std::size_t w) {
        return {0, 0, static_cast<std::ptrdiff_t>(h), static_cast<std::ptrdiff_t>(w)};
    }

    std::ptrdiff_t row_end() const noexcept { return row0 + rows; }
    std::ptrdiff_t col_end() const noexcept { return col0 + cols; }
    std::size_t area() const noexcept { return static_cast<std::size_t>(rows * cols); }
    bool empty() const noexcept { return rows <= 0 || cols <= 0; }

    bool contains(const Window& o) const noexcept {
        return o.row0 >= row0 && o.col0 >= col0 && o.row_end() <= row_end() &&
               o.col_end() <= col_end();
    }

    bool inside_image(std::size_t h, std::size_t w) const noexcept {
        return full(h, w).contains(*this);
    }

    /// Grown by `margin` on every side, clipped to the image.
    Window expanded(std::ptrdiff_t margin, std::size_t h, std::size_t w) const {
        const auto r0 = std::max<std::ptrdiff_t>(0, row0 - margin);
        const auto c0 = std::max<std::ptrdiff_t>(0, col0 - margin);
        const auto r1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h), row_end() + margin);
        const auto c1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w), col_end() + margin);
        return {r0, c0, r1 - r0, c1 - c0};
    }

    friend bool operator==(const Window& a, const Window& b) noexcept {
        return a.row0 == b.row0 && a.col0 == b.col0 && a.rows == b.rows && a.cols == b.cols;
    }

    std::string str() const {
        return "[" + std::to_string(row0) + ":" + std::to_string(row_end()) + ", " +
               std::to_string(col0) + ":" + std::to_string(col_end()) + "]";
    }
};

/// Largest region on which a zero-padded 3x3 convolution of `in` is exact:
/// shrinks by one pixel on every side that is not an image border.
inline Window conv3x3_valid_window(const Window& in, std::size_t h, std::size_t w) {
    const auto H = static_cast<std::ptrdiff_t>(h);
    const auto W = static_cast<std::ptrdiff_t>(w);
    const auto r0 = in.row0 == 0 ? 0 : in.row0 + 1;
    const auto c0 = in.col0 == 0 ? 0 : in.col0 + 1;
    const auto r1 = in.row_end() == H ? H : in.row_end() - 1;
    const auto c1 = in.col_end() == W ? W : in.col_end() - 1;
    return {r0, c0, std::max<std::ptrdiff_t>(0, r1 - r0), std::max<std::ptrdiff_t>(0, c1 - c0)};
}

} // namespace spliif
