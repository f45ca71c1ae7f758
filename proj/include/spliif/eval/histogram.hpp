#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/io.hpp"

namespace spliif {

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    double density = 0.0;
};

/// Evenly spaced edges lo, lo+step, ..., hi.
inline std::vector<double> even_edges(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi > lo)) throw ContractError("even_edges: need hi > lo and step > 0");
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
    std::vector<double> edges;
    for (std::size_t i = 0; i <= n; ++i) edges.push_back(lo + static_cast<double>(i) * step);
    return edges;
}

/// Absolute-error edges per evaluated variable.
inline std::vector<double> histogram_edges(const std::string& variable) {
    if (variable == "temperature") return even_edges(0.0, 15.0, 0.5);
    if (variable == "wind_speed") return even_edges(0.0, 10.0, 0.25);
    if (variable == "wind_angle") return even_edges(0.0, 180.0, 5.0);
    throw ContractError("no histogram edges for variable '" + variable + "'");
}

/// Probability density over fixed bins: sum(density * width) = 1. Bins are
/// [lo, hi); values past the last edge are counted in the last bin and values
/// below the first edge in the first.
inline std::vector<HistogramBin> error_histogram(const std::vector<double>& errors, const std::vector<double>& edges) {
    if (errors.empty()) throw ContractError("error_histogram: no values");
    if (edges.size() < 2) throw ContractError("error_histogram: need at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw ContractError("error_histogram: edges must increase");
    std::vector<double> counts(edges.size() - 1, 0.0);
    for (const double e : errors) {
        if (!std::isfinite(e)) throw ContractError("error_histogram: non-finite value");
        std::size_t b = 0;
        if (e >= edges.back()) {
            b = counts.size() - 1;
        } else if (e > edges.front()) {
            b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), e) - edges.begin()) - 1;
        }
        counts[b] += 1.0;
    }
    std::vector<HistogramBin> out;
    const double n = static_cast<double>(errors.size());
    for (std::size_t b = 0; b < counts.size(); ++b) {
        out.push_back({edges[b], edges[b + 1], counts[b] / (n * (edges[b + 1] - edges[b]))});
    }
    return out;
}

inline std::string format_histogram_csv(const std::vector<std::pair<std::string, std::vector<HistogramBin>>>& tables) {
    std::ostringstream os;
    os << "variable,bin_lo,bin_hi,density\n";
    for (const auto& [name, bins] : tables)
        for (const auto& b : bins)
            os << name << ',' << format_number(b.lo) << ',' << format_number(b.hi) << ',' << format_number(b.density)
               << '\n';
    return os.str();
}

} // namespace spliif
