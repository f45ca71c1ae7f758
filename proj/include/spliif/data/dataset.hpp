#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "spliif/data/ascii_grid.hpp"
#include "spliif/data/normalize.hpp"
#include "spliif/data/station.hpp"
#include "spliif/data/station_csv.hpp"
#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/model/config.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// Station observations grouped by time plus the topography they sit on.
struct Dataset {
    GridSpec world;
    Tensor<float> topography;  // [1, H, W], metres
    std::vector<std::string> times;
    std::vector<std::vector<StationObservation>> observations;  // per time, sorted by station_id

    std::vector<std::string> station_ids() const {
        std::set<std::string> ids;
        for (const auto& slice : observations)
            for (const auto& o : slice) ids.insert(o.station_id);
        return {ids.begin(), ids.end()};
    }
};

/// Groups loose observation rows by their time stamp (ISO strings sort chronologically).
inline Dataset make_dataset(GridSpec world, Tensor<float> topography, std::vector<StationObservation> rows) {
    world.validate();
    if (topography.shape() != Shape{1, world.height, world.width}) {
        throw DimensionError("dataset: topography " + to_string(topography.shape()) + " does not match grid");
    }
    std::map<std::string, std::vector<StationObservation>> by_time;
    for (auto& o : rows) {
        o.validate();
        by_time[o.time].push_back(std::move(o));
    }
    Dataset ds;
    ds.world = world;
    ds.topography = std::move(topography);
    for (auto& [t, slice] : by_time) {
        std::sort(slice.begin(), slice.end(),
                  [](const StationObservation& a, const StationObservation& b) { return a.station_id < b.station_id; });
        for (std::size_t i = 1; i < slice.size(); ++i) {
            if (slice[i].station_id == slice[i - 1].station_id) {
                throw FormatError("dataset: duplicate observation for station '" + slice[i].station_id + "' at " + t);
            }
        }
        ds.times.push_back(t);
        ds.observations.push_back(std::move(slice));
    }
    if (ds.times.empty()) throw InputError("dataset: no observations");
    return ds;
}

inline Dataset load_dataset(const std::filesystem::path& stations_csv, const std::filesystem::path& topography_asc) {
    AsciiGrid topo = load_topography_asc(topography_asc);
    return make_dataset(topo.grid, std::move(topo.values), load_stations_csv(stations_csv));
}

/// Deterministic station hold-out: sort ids, shuffle with `seed`, hold out the
/// first round(fraction * n).
inline std::set<std::string> holdout_stations(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    Rng rng(derive_seed(seed, 0x5b1));
    shuffle(ids, rng);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n)};
}

/// Station and time-slice hold-out shared by training and evaluation.
struct DataSplit {
    std::set<std::string> holdout_stations;  // never used as model inputs or training targets
    std::vector<std::size_t> train_times;
    std::vector<std::size_t> eval_times;
};

/// round(eval_time_fraction * T) slices (at least one) go to evaluation; with a
/// single time slice both roles share it.
inline DataSplit make_split(const Dataset& ds, double holdout_fraction, double eval_time_fraction,
                            std::uint64_t seed) {
    if (!(eval_time_fraction > 0.0 && eval_time_fraction < 1.0)) {
        throw ConfigError("eval time fraction must be in (0, 1)");
    }
    DataSplit split;
    split.holdout_stations = holdout_stations(ds.station_ids(), holdout_fraction, seed);
    const std::size_t T = ds.times.size();
    std::vector<std::size_t> order(T);
    for (std::size_t t = 0; t < T; ++t) order[t] = t;
    Rng rng(derive_seed(seed, 0x7153));
    shuffle(order, rng);
    const auto n_eval = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(eval_time_fraction * static_cast<double>(T))), 1, T);
    split.eval_times.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    split.train_times.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    if (split.train_times.empty()) split.train_times = split.eval_times;
    std::sort(split.eval_times.begin(), split.eval_times.end());
    std::sort(split.train_times.begin(), split.train_times.end());
    return split;
}

inline std::vector<StationObservation> filter_stations(const std::vector<StationObservation>& obs,
                                                        const std::set<std::string>& ids, bool keep) {
    std::vector<StationObservation> out;
    for (const auto& o : obs)
        if (ids.count(o.station_id) == static_cast<std::size_t>(keep)) out.push_back(o);
    return out;
}

/// Patch sampling rules.
struct PatchProtocol {
    std::size_t patch_pixels = 256;  // world pixels per patch side
    std::size_t max_stations = 30;
    double input_fraction = 0.8;
    std::size_t min_stations = 5;
    std::size_t retry_cap = 100;

    void validate() const {
        if (patch_pixels < 2) throw ConfigError("patch_pixels must be >= 2");
        if (max_stations < 2) throw ConfigError("max_stations must be >= 2");
        if (!(input_fraction > 0.0 && input_fraction < 1.0)) throw ConfigError("input_fraction must be in (0, 1)");
        if (min_stations < 2 || min_stations > max_stations) throw ConfigError("min_stations must be in [2, max_stations]");
        if (retry_cap < 1) throw ConfigError("retry_cap must be >= 1");
    }
};

/// Geometry and topography of one square tile of the world.
struct PatchGeometry {
    std::size_t origin_row = 0;  // world pixel of the south-west corner
    std::size_t origin_col = 0;
    GridSpec grid_fine;
    GridSpec grid_coarse;
    Tensor<float> topo;  // [1, fine_h, fine_w], normalised
};

struct Patch {
    PatchGeometry geometry;
    std::vector<StationObservation> input_stations;
    std::vector<StationObservation> target_stations;
    std::string time_id;
};

/// Crops patch_pixels x patch_pixels world pixels starting at (row, col) and
/// block-averages them down to the model's fine extents.
inline PatchGeometry make_patch_geometry(const GridSpec& world, const Tensor<float>& topo_m, std::size_t row,
                                         std::size_t col, std::size_t patch_pixels, const SpliifConfig& model) {
    if (row + patch_pixels > world.height || col + patch_pixels > world.width) {
        throw SamplingError("patch at (" + std::to_string(row) + ", " + std::to_string(col) + ") exceeds the world");
    }
    if (model.fine_h != model.fine_w || patch_pixels % model.fine_h != 0) {
        throw ConfigError("patch_pixels (" + std::to_string(patch_pixels) +
                          ") must be a multiple of the square fine extent " + std::to_string(model.fine_h));
    }
    const std::size_t factor = patch_pixels / model.fine_h;
    PatchGeometry g;
    g.origin_row = row;
    g.origin_col = col;
    g.grid_fine = GridSpec{world.lon_min + static_cast<double>(col) * world.cell_size,
                           world.lat_min + static_cast<double>(row) * world.cell_size,
                           world.cell_size * static_cast<double>(factor), model.fine_w, model.fine_h};
    g.grid_coarse = g.grid_fine.resampled(model.coarse_h, model.coarse_w);
    g.topo = Tensor<float>(Shape{1, model.fine_h, model.fine_w});
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t i = 0; i < model.fine_h; ++i) {
        for (std::size_t j = 0; j < model.fine_w; ++j) {
            double acc = 0.0;
            for (std::size_t a = 0; a < factor; ++a)
                for (std::size_t b = 0; b < factor; ++b)
                    acc += topo_m[(row + i * factor + a) * world.width + col + j * factor + b];
            g.topo[i * model.fine_w + j] = static_cast<float>(normalize(Variable::topography, acc * inv));
        }
    }
    return g;
}

inline std::vector<StationObservation> stations_inside(const std::vector<StationObservation>& stations,
                                                       const GridSpec& grid) {
    std::vector<StationObservation> out;
    for (const auto& s : stations)
        if (grid.contains(s.position())) out.push_back(s);
    return out;
}

/// Draws one training patch: uniform origin, up to max_stations stations chosen
/// uniformly without replacement, the first ceil(input_fraction*n) of a
/// shuffled order become inputs and the rest targets.
inline Patch sample_patch(const std::vector<StationObservation>& stations, const GridSpec& world,
                          const Tensor<float>& topo_m, Rng& rng, const PatchProtocol& protocol,
                          const SpliifConfig& model, const std::string& time_id = {}) {
    protocol.validate();
    if (world.height < protocol.patch_pixels || world.width < protocol.patch_pixels) {
        throw SamplingError("world is smaller than one patch");
    }
    const std::size_t rows = world.height - protocol.patch_pixels + 1;
    const std::size_t cols = world.width - protocol.patch_pixels + 1;
    for (std::size_t attempt = 0; attempt < protocol.retry_cap; ++attempt) {
        const auto r = static_cast<std::size_t>(uniform_index(rng, rows));
        const auto c = static_cast<std::size_t>(uniform_index(rng, cols));
        const GridSpec footprint{world.lon_min + static_cast<double>(c) * world.cell_size,
                                 world.lat_min + static_cast<double>(r) * world.cell_size, world.cell_size,
                                 protocol.patch_pixels, protocol.patch_pixels};
        std::vector<StationObservation> inside = stations_inside(stations, footprint);
        if (inside.size() < protocol.min_stations) continue;

        shuffle(inside, rng);
        inside.resize(std::min(inside.size(), protocol.max_stations));
        const auto n = inside.size();
        const auto n_in = static_cast<std::size_t>(std::ceil(protocol.input_fraction * static_cast<double>(n) - 1e-9));
        Patch p;
        p.input_stations.assign(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(n_in));
        p.target_stations.assign(inside.begin() + static_cast<std::ptrdiff_t>(n_in), inside.end());
        bool any_target = false;
        for (const auto& t : p.target_stations) any_target = any_target || t.temperature_valid || t.wind_valid;
        if (!any_target || p.target_stations.empty()) continue;
        p.geometry = make_patch_geometry(world, topo_m, r, c, protocol.patch_pixels, model);
        p.time_id = time_id;
        return p;
    }
    throw SamplingError("no patch with >= " + std::to_string(protocol.min_stations) + " stations after " +
                        std::to_string(protocol.retry_cap) + " attempts");
}

} // namespace spliif
