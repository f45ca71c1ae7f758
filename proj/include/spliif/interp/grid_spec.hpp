#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "spliif/error.hpp"

namespace spliif {

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
};

/// Regular lon/lat raster. Row 0 is the southernmost row.
///
/// Pixel (i, j) has its centre at (lon_min + (j+0.5)*cell_size, lat_min + (i+0.5)*cell_size);
/// every coordinate/pixel conversion in the library goes through this struct.
struct GridSpec {
    double lon_min = 0.0;
    double lat_min = 0.0;
    double cell_size = 1.0;
    std::size_t width = 2;
    std::size_t height = 2;

    void validate() const {
        if (!(cell_size > 0.0) || !std::isfinite(cell_size) || !std::isfinite(lon_min) ||
            !std::isfinite(lat_min)) {
            throw InputError("GridSpec: cell_size must be positive and origin finite");
        }
        if (width < 2 || height < 2) {
            throw InputError("GridSpec: width and height must be >= 2, got " +
                             std::to_string(width) + "x" + std::to_string(height));
        }
    }

    double lon_center(std::size_t j) const { return lon_min + (static_cast<double>(j) + 0.5) * cell_size; }
    double lat_center(std::size_t i) const { return lat_min + (static_cast<double>(i) + 0.5) * cell_size; }
    double lon_max() const { return lon_min + static_cast<double>(width) * cell_size; }
    double lat_max() const { return lat_min + static_cast<double>(height) * cell_size; }

    /// Fractional column index; pixel centres sit on integers.
    double col_coord(double lon) const { return (lon - lon_min) / cell_size - 0.5; }
    double row_coord(double lat) const { return (lat - lat_min) / cell_size - 0.5; }

    /// Inside the raster footprint [min, max) on both axes.
    bool contains(const LonLat& p) const {
        return p.lon >= lon_min && p.lon < lon_max() && p.lat >= lat_min && p.lat < lat_max();
    }

    /// Same footprint, different pixel count.
    GridSpec resampled(std::size_t new_height, std::size_t new_width) const {
        GridSpec g = *this;
        g.width = new_width;
        g.height = new_height;
        g.cell_size = cell_size * static_cast<double>(width) / static_cast<double>(new_width);
        return g;
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

} // namespace spliif
