#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/numerics/graph.hpp"

namespace spliif {

/// Fixed (non-learnable) part of the learnable IDW kernel.
struct IdwSettings {
    std::size_t k_neighbors = 16;
    double epsilon = 1e-6;  // degrees

    void validate() const {
        if (k_neighbors < 1) throw InputError("IDW: k_neighbors must be >= 1");
        if (!(epsilon > 0.0)) throw InputError("IDW: epsilon must be > 0");
    }
};

inline double softplus(double x) {
    return x > 20.0 ? x : std::log1p(std::exp(x));
}

inline double softplus_inverse(double y) {
    return y > 20.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace detail {

struct IdwTap {
    std::uint32_t station;
    double weight;    // normalised, sums to 1 over a pixel's taps
    double log_u;     // log(d/length + eps)
    double d_over_u;  // d / (d/length + eps)
};

// Ordering of candidate neighbours. Distance first, then position, then value,
// then index: a station set yields the same tap sequence under any permutation.
struct NeighborKey {
    double d2;
    double lon;
    double lat;
    double value;
    std::uint32_t index;

    friend bool operator<(const NeighborKey& a, const NeighborKey& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        if (a.lon != b.lon) return a.lon < b.lon;
        if (a.lat != b.lat) return a.lat < b.lat;
        if (a.value != b.value) return a.value < b.value;
        return a.index < b.index;
    }
};

} // namespace detail

/// Densifies sparse station values onto a grid with a learnable IDW kernel.
///
/// Per channel c and pixel p, over the k nearest valid stations:
///   w_k = (d_k / length_c + eps)^(-exponent_c),  value = sum w_k x_k / sum w_k
/// where exponent_c = softplus(exponent_raw[c]) and length_c = softplus(length_raw[c]),
/// and d_k is the flat lon/lat distance in degrees. Differentiable with respect
/// to the station values and both raw parameter vectors.
///
/// `values` is [N, C]; `mask` (optional, [N, C], 0/1) excludes stations per
/// channel. A channel with no valid station is filled with zeros.
/// Returns [C, grid.height, grid.width].
template <class T>
Var idw_densify(Graph<T>& g, std::span<const LonLat> positions, Var values, const Tensor<T>* mask,
                const GridSpec& grid, Var exponent_raw, Var length_raw, const IdwSettings& settings) {
    grid.validate();
    settings.validate();
    const auto& vs = g.value(values).shape();
    if (positions.empty()) throw InputError("idw_densify: empty station list");
    if (vs.size() != 2 || vs[0] != positions.size()) {
        throw DimensionError("idw_densify: values " + to_string(vs) + " do not match " +
                             std::to_string(positions.size()) + " stations");
    }
    const std::size_t N = vs[0];
    const std::size_t C = vs[1];
    if (g.value(exponent_raw).shape() != Shape{C} || g.value(length_raw).shape() != Shape{C}) {
        throw DimensionError("idw_densify: parameters must have shape (" + std::to_string(C) + ")");
    }
    if (mask && mask->shape() != vs) {
        throw DimensionError("idw_densify: mask " + to_string(mask->shape()) + " vs values " + to_string(vs));
    }
    for (const auto& p : positions) {
        if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) {
            throw InputError("idw_densify: station coordinates must be finite");
        }
    }

    const std::size_t H = grid.height, W = grid.width, P = H * W;
    const std::size_t K = std::min(settings.k_neighbors, N);
    const auto& xv = g.value(values);

    struct Saved {
        std::vector<std::size_t> tap_count;  // per (c, p)
        std::vector<detail::IdwTap> taps;    // K slots per (c, p)
        std::vector<double> out;             // per (c, p)
        std::vector<double> exponent, length;
    };
    auto saved = std::make_shared<Saved>();
    saved->tap_count.assign(C * P, 0);
    saved->taps.resize(C * P * K);
    saved->out.assign(C * P, 0.0);

    Tensor<T> y(Shape{C, H, W});
    std::vector<detail::NeighborKey> cand;
    cand.reserve(N);
    for (std::size_t c = 0; c < C; ++c) {
        const double p = softplus(static_cast<double>(g.value(exponent_raw)[c]));
        const double len = softplus(static_cast<double>(g.value(length_raw)[c]));
        saved->exponent.push_back(p);
        saved->length.push_back(len);
        std::vector<std::uint32_t> valid;
        for (std::size_t n = 0; n < N; ++n)
            if (!mask || (*mask)[n * C + c] != T(0)) valid.push_back(static_cast<std::uint32_t>(n));
        if (valid.empty()) continue;
        const std::size_t k = std::min(K, valid.size());

        for (std::size_t i = 0; i < H; ++i) {
            const double plat = grid.lat_center(i);
            for (std::size_t j = 0; j < W; ++j) {
                const double plon = grid.lon_center(j);
                cand.clear();
                for (const auto n : valid) {
                    const double dx = positions[n].lon - plon;
                    const double dy = positions[n].lat - plat;
                    cand.push_back({dx * dx + dy * dy, positions[n].lon, positions[n].lat,
                                    static_cast<double>(xv[n * C + c]), n});
                }
                std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

                const std::size_t cp = c * P + i * W + j;
                detail::IdwTap* taps = saved->taps.data() + cp * K;
                double max_logw = -std::numeric_limits<double>::infinity();
                for (std::size_t t = 0; t < k; ++t) {
                    const double d = std::sqrt(cand[t].d2);
                    const double u = d / len + settings.epsilon;
                    taps[t].station = cand[t].index;
                    taps[t].log_u = std::log(u);
                    taps[t].d_over_u = d / u;
                    taps[t].weight = -p * taps[t].log_u;
                    max_logw = std::max(max_logw, taps[t].weight);
                }
                double sum = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    taps[t].weight = std::exp(taps[t].weight - max_logw);
                    sum += taps[t].weight;
                }
                double v = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    taps[t].weight /= sum;
                    v += taps[t].weight * cand[t].value;
                }
                saved->tap_count[cp] = k;
                saved->out[cp] = v;
                y[cp] = static_cast<T>(v);
            }
        }
    }

    return g.record("idw_densify", std::move(y), {values, exponent_raw, length_raw},
                    [values, exponent_raw, length_raw, saved, C, P, K](Graph<T>& gr, const Tensor<T>& dy) {
                        const auto& xv = gr.value(values);
                        const bool want_x = gr.requires_grad(values);
                        const bool want_p = gr.requires_grad(exponent_raw);
                        const bool want_l = gr.requires_grad(length_raw);
                        for (std::size_t c = 0; c < C; ++c) {
                            const double p = saved->exponent[c];
                            const double len = saved->length[c];
                            double dp = 0.0, dl = 0.0;
                            for (std::size_t px = 0; px < P; ++px) {
                                const std::size_t cp = c * P + px;
                                const std::size_t k = saved->tap_count[cp];
                                if (k == 0) continue;
                                const double gy = dy[cp];
                                if (gy == 0.0) continue;
                                const double v = saved->out[cp];
                                const detail::IdwTap* taps = saved->taps.data() + cp * K;
                                for (std::size_t t = 0; t < k; ++t) {
                                    const auto& tap = taps[t];
                                    const double x = xv[tap.station * C + c];
                                    if (want_x) gr.grad(values)[tap.station * C + c] += static_cast<T>(gy * tap.weight);
                                    const double common = gy * tap.weight * (x - v);
                                    dp += common * -tap.log_u;
                                    dl += common * p * tap.d_over_u / (len * len);
                                }
                            }
                            if (want_p) {
                                gr.grad(exponent_raw)[c] += static_cast<T>(
                                    dp * sigmoid(static_cast<double>(gr.value(exponent_raw)[c])));
                            }
                            if (want_l) {
                                gr.grad(length_raw)[c] += static_cast<T>(
                                    dl * sigmoid(static_cast<double>(gr.value(length_raw)[c])));
                            }
                        }
                    });
}

/// One station for the fixed-exponent IDW baseline.
struct PointSample {
    LonLat pos;
    std::vector<double> values;
    std::vector<bool> valid;  // empty = all valid
};

/// Classic IDW over all stations with a fixed exponent and unit length scale.
///
/// A query within `epsilon` of a station returns that station's value exactly.
/// Channels with no valid station yield NaN. Result is [query][channel].
inline std::vector<std::vector<double>> idw_predict_points(std::span<const PointSample> stations,
                                                           std::span<const LonLat> queries,
                                                           double exponent = 2.0,
                                                           double epsilon = 1e-6) {
    if (stations.empty()) throw InputError("idw_predict_points: empty station list");
    const std::size_t C = stations.front().values.size();
    for (const auto& s : stations) {
        if (s.values.size() != C || (!s.valid.empty() && s.valid.size() != C)) {
            throw DimensionError("idw_predict_points: inconsistent channel counts");
        }
        if (!std::isfinite(s.pos.lon) || !std::isfinite(s.pos.lat)) {
            throw InputError("idw_predict_points: station coordinates must be finite");
        }
    }
    auto is_valid = [](const PointSample& s, std::size_t c) { return s.valid.empty() || s.valid[c]; };

    std::vector<std::vector<double>> out(queries.size(), std::vector<double>(C));
    std::vector<double> dist(stations.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (!std::isfinite(queries[q].lon) || !std::isfinite(queries[q].lat)) {
            throw InputError("idw_predict_points: query coordinate is not finite");
        }
        for (std::size_t n = 0; n < stations.size(); ++n) {
            const double dx = stations[n].pos.lon - queries[q].lon;
            const double dy = stations[n].pos.lat - queries[q].lat;
            dist[n] = std::sqrt(dx * dx + dy * dy);
        }
        for (std::size_t c = 0; c < C; ++c) {
            std::size_t hit = stations.size();
            for (std::size_t n = 0; n < stations.size(); ++n) {
                if (!is_valid(stations[n], c) || dist[n] > epsilon) continue;
                if (hit == stations.size() || dist[n] < dist[hit]) hit = n;
            }
            if (hit != stations.size()) {
                out[q][c] = stations[hit].values[c];
                continue;
            }
            double num = 0.0, den = 0.0;
            for (std::size_t n = 0; n < stations.size(); ++n) {
                if (!is_valid(stations[n], c)) continue;
                const double w = std::pow(dist[n] + epsilon, -exponent);
                num += w * stations[n].values[c];
                den += w;
            }
            out[q][c] = den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

} // namespace spliif
