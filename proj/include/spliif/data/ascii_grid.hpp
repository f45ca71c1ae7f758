#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/io.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// An ESRI ASCII raster converted to the library's south-up layout.
struct AsciiGrid {
    GridSpec grid;
    Tensor<float> values;               // [1, nrows, ncols], row 0 = south
    std::vector<std::uint8_t> nodata;   // 1 where the file had NODATA (value set to 0)
};

/// Parses an ESRI ASCII grid: ncols, nrows, xllcorner|xllcenter, yllcorner|yllcenter,
/// cellsize and optional NODATA_value, then nrows*ncols values listed north to south.
inline AsciiGrid parse_ascii_grid(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::map<std::string, double> header;
    std::string token;
    std::optional<std::string> first_value;
    while (in >> token) {
        std::string key = token;
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        if (parse_number(token)) {
            first_value = token;
            break;
        }
        std::string value;
        if (!(in >> value)) throw FormatError("ASCII grid: header key '" + token + "' has no value");
        const auto v = parse_number(value);
        if (!v) throw FormatError("ASCII grid: header '" + token + "' has malformed value '" + value + "'");
        header[key] = *v;
    }
    auto need = [&](const char* key) {
        const auto it = header.find(key);
        if (it == header.end()) throw FormatError(std::string("ASCII grid: missing header '") + key + "'");
        return it->second;
    };
    const double ncols_d = need("ncols");
    const double nrows_d = need("nrows");
    if (ncols_d < 2 || nrows_d < 2 || ncols_d != std::floor(ncols_d) || nrows_d != std::floor(nrows_d)) {
        throw FormatError("ASCII grid: ncols/nrows must be integers >= 2");
    }
    const auto ncols = static_cast<std::size_t>(ncols_d);
    const auto nrows = static_cast<std::size_t>(nrows_d);
    const double cell = need("cellsize");
    if (!(cell > 0.0)) throw FormatError("ASCII grid: cellsize must be positive");
    double xll, yll;
    if (header.count("xllcorner")) {
        xll = header["xllcorner"];
    } else if (header.count("xllcenter")) {
        xll = header["xllcenter"] - 0.5 * cell;
    } else {
        throw FormatError("ASCII grid: missing header 'xllcorner'");
    }
    if (header.count("yllcorner")) {
        yll = header["yllcorner"];
    } else if (header.count("yllcenter")) {
        yll = header["yllcenter"] - 0.5 * cell;
    } else {
        throw FormatError("ASCII grid: missing header 'yllcorner'");
    }
    const bool has_nodata = header.count("nodata_value") > 0;
    const double nodata = has_nodata ? header["nodata_value"] : 0.0;

    std::vector<double> body;
    body.reserve(ncols * nrows);
    auto push = [&](const std::string& tok) {
        const auto v = parse_number(tok);
        if (!v) {
            throw FormatError("ASCII grid: malformed value '" + tok + "' at cell " + std::to_string(body.size()));
        }
        body.push_back(*v);
    };
    if (first_value) push(*first_value);
    while (in >> token) push(token);
    if (body.size() != ncols * nrows) {
        throw FormatError("ASCII grid: header declares " + std::to_string(nrows) + "x" + std::to_string(ncols) +
                          " = " + std::to_string(ncols * nrows) + " values, body has " + std::to_string(body.size()));
    }

    AsciiGrid out;
    out.grid = GridSpec{xll, yll, cell, ncols, nrows};
    out.values = Tensor<float>(Shape{1, nrows, ncols});
    out.nodata.assign(ncols * nrows, 0);
    for (std::size_t r = 0; r < nrows; ++r) {
        const std::size_t i = nrows - 1 - r;  // file row 0 is the northernmost
        for (std::size_t j = 0; j < ncols; ++j) {
            const double v = body[r * ncols + j];
            const std::size_t k = i * ncols + j;
            if (has_nodata && v == nodata) {
                out.values[k] = 0.0f;
                out.nodata[k] = 1;
            } else {
                out.values[k] = static_cast<float>(v);
            }
        }
    }
    return out;
}

inline AsciiGrid load_topography_asc(const std::filesystem::path& path) {
    try {
        return parse_ascii_grid(read_file_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline std::string format_ascii_grid(const GridSpec& grid, const Tensor<float>& values, double nodata_value = -9999.0) {
    if (values.shape() != Shape{1, grid.height, grid.width}) {
        throw DimensionError("format_ascii_grid: values " + to_string(values.shape()) + " do not match grid");
    }
    std::ostringstream os;
    os << "ncols " << grid.width << '\n'
       << "nrows " << grid.height << '\n'
       << "xllcorner " << format_number(grid.lon_min) << '\n'
       << "yllcorner " << format_number(grid.lat_min) << '\n'
       << "cellsize " << format_number(grid.cell_size) << '\n'
       << "NODATA_value " << format_number(nodata_value) << '\n';
    for (std::size_t r = 0; r < grid.height; ++r) {
        const std::size_t i = grid.height - 1 - r;
        for (std::size_t j = 0; j < grid.width; ++j) {
            if (j) os << ' ';
            os << format_number(values[i * grid.width + j]);
        }
        os << '\n';
    }
    return os.str();
}

inline void write_topography_asc(const std::filesystem::path& path, const GridSpec& grid, const Tensor<float>& values) {
    write_file_atomic(path, format_ascii_grid(grid, values));
}

} // namespace spliif
