#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "spliif/data/dataset.hpp"
#include "spliif/data/normalize.hpp"
#include "spliif/data/station.hpp"
#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/numerics/random.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

struct SynthWorldConfig {
    std::uint64_t seed = 42;
    double lon_min = 136.0;
    double lat_min = 35.0;
    double cell_size = 1.4 / 256.0;  // ~600 m
    std::size_t width = 256;
    std::size_t height = 256;

    std::size_t terrain_octaves = 5;
    double terrain_wavelength = 0.5;  // degrees, coarsest octave
    double terrain_persistence = 0.5;
    double terrain_gamma = 1.5;       // > 1 widens the lowlands
    double terrain_max = 3000.0;      // m

    double lapse_rate = -0.0065;      // C per m
    double base_temp_min = -5.0;      // per-time mean drawn uniformly in [min, max]
    double base_temp_max = 25.0;
    double base_temp_amplitude = 4.0; // C
    double base_temp_wavelength = 2.0;// degrees

    double wind_speed_min = 1.0;      // per-time base speed, m/s
    double wind_speed_max = 12.0;
    double deflection_gain = 0.8;     // share of the slope-normal component removed on steep terrain
    double upslope_damping = 3.0;     // speed /= 1 + damping * upslope gradient
    double altitude_speedup = 0.5;    // speed *= 1 + speedup * h / 3000

    std::size_t station_count = 600;
    std::size_t time_count = 240;     // hourly from 2018-01-01T00:00:00Z
    double noise_temperature = 0.3;   // C
    double noise_wind = 0.3;          // m/s per component

    GridSpec grid() const { return GridSpec{lon_min, lat_min, cell_size, width, height}; }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
        };
        auto non_negative = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be >= 0");
        };
        if (!std::isfinite(lon_min) || !std::isfinite(lat_min)) throw ConfigError("lon_min/lat_min must be finite");
        positive(cell_size, "cell_size");
        if (width < 2 || height < 2) throw ConfigError("width and height must be >= 2");
        if (terrain_octaves < 1) throw ConfigError("terrain_octaves must be >= 1");
        positive(terrain_wavelength, "terrain_wavelength");
        positive(terrain_persistence, "terrain_persistence");
        positive(terrain_gamma, "terrain_gamma");
        if (!(terrain_max >= 0.0 && terrain_max <= 3000.0)) throw ConfigError("terrain_max must be in [0, 3000]");
        if (!std::isfinite(lapse_rate)) throw ConfigError("lapse_rate must be finite");
        if (!(base_temp_min <= base_temp_max)) throw ConfigError("base_temp_min must be <= base_temp_max");
        non_negative(base_temp_amplitude, "base_temp_amplitude");
        positive(base_temp_wavelength, "base_temp_wavelength");
        non_negative(wind_speed_min, "wind_speed_min");
        if (!(wind_speed_min <= wind_speed_max)) throw ConfigError("wind_speed_min must be <= wind_speed_max");
        if (!(deflection_gain >= 0.0 && deflection_gain <= 1.0)) throw ConfigError("deflection_gain must be in [0, 1]");
        non_negative(upslope_damping, "upslope_damping");
        non_negative(altitude_speedup, "altitude_speedup");
        if (station_count < 1) throw ConfigError("station_count must be >= 1");
        if (station_count > width * height) throw ConfigError("station_count exceeds the number of pixels");
        if (time_count < 1) throw ConfigError("time_count must be >= 1");
        non_negative(noise_temperature, "noise_temperature");
        non_negative(noise_wind, "noise_wind");
    }
};

/// Hourly ISO 8601 stamp `hours` after 2018-01-01T00:00:00Z.
inline std::string synth_time_stamp(std::size_t hours) {
    // days-to-civil conversion (proleptic Gregorian)
    const long long days = 17532 + static_cast<long long>(hours / 24);  // 2018-01-01 is day 17532 since 1970
    long long z = days + 719468;
    const long long era = (z >= 0 ? z : z - 146096) / 146097;
    const long long doe = z - era * 146097;
    const long long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long long mp = (5 * doy + 2) / 153;
    const long long d = doy - (153 * mp + 2) / 5 + 1;
    const long long m = mp < 10 ? mp + 3 : mp - 9;
    const long long y = yoe + era * 400 + (m <= 2 ? 1 : 0);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lldT%02zu:00:00Z", y, m, d, hours % 24);
    return buf;
}

struct SynthTruth {
    double altitude = 0.0;     // m
    double temperature = 0.0;  // C
    double u = 0.0;            // m/s
    double v = 0.0;
};

/// Analytic weather over seeded value-noise terrain. Stations sit on pixel
/// centres so their altitude equals the exported raster value.
class SynthWorld {
public:
    explicit SynthWorld(SynthWorldConfig config) : cfg_(config), grid_(config.grid()) {
        cfg_.validate();
        grid_.validate();
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::vector<double> raw(grid_.width * grid_.height);
        for (std::size_t i = 0; i < grid_.height; ++i)
            for (std::size_t j = 0; j < grid_.width; ++j) {
                const double r = raw_terrain(grid_.lon_center(j), grid_.lat_center(i));
                raw[i * grid_.width + j] = r;
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
        raw_lo_ = lo;
        raw_span_ = hi > lo ? hi - lo : 1.0;
        topography_.resize(raw.size());
        for (std::size_t k = 0; k < raw.size(); ++k) topography_[k] = shape_altitude(raw[k]);

        Rng rng(derive_seed(cfg_.seed, 0x57a7));
        std::set<std::uint64_t> taken;
        while (taken.size() < cfg_.station_count) taken.insert(uniform_index(rng, grid_.width * grid_.height));
        std::vector<std::uint64_t> order(taken.begin(), taken.end());
        shuffle(order, rng);
        const std::size_t digits = std::max<std::size_t>(4, std::to_string(order.size()).size());
        for (std::size_t s = 0; s < order.size(); ++s) {
            const std::string n = std::to_string(s + 1);
            station_ids_.push_back("ST" + std::string(digits - n.size(), '0') + n);
            station_pixels_.push_back(order[s]);
        }
    }

    const SynthWorldConfig& config() const { return cfg_; }
    const GridSpec& grid() const { return grid_; }
    std::size_t time_count() const { return cfg_.time_count; }
    std::string time_id(std::size_t t) const { return synth_time_stamp(t); }

    /// Terrain height in metres at any coordinate, clamped to [0, terrain_max].
    double altitude(double lon, double lat) const { return shape_altitude(raw_terrain(lon, lat)); }

    /// Noise-free weather at (lon, lat) for time index t.
    SynthTruth truth(double lon, double lat, std::size_t t) const {
        const TimeState st = time_state(t);
        SynthTruth out;
        out.altitude = altitude(lon, lat);
        const double phase = 2.0 * std::numbers::pi *
                                 ((lon - cfg_.lon_min) * st.temp_dir[0] + (lat - cfg_.lat_min) * st.temp_dir[1]) /
                                 cfg_.base_temp_wavelength +
                             st.temp_phase;
        out.temperature = st.temp_mean + cfg_.base_temp_amplitude * std::sin(phase) + cfg_.lapse_rate * out.altitude;

        // Slope in metres per metre: central differences on the analytic terrain.
        const double d = 1e-4;
        const double mx = d * 111320.0 * std::cos(lat * kDegToRad), my = d * 110540.0;
        const double gx = (altitude(lon + d, lat) - altitude(lon - d, lat)) / (2.0 * mx);
        const double gy = (altitude(lon, lat + d) - altitude(lon, lat - d)) / (2.0 * my);
        const double slope = std::hypot(gx, gy);

        double u = st.wind_u, v = st.wind_v;
        const double speed0 = std::hypot(u, v);
        if (slope > 0.0 && speed0 > 0.0) {
            const double nx = gx / slope, ny = gy / slope;
            const double blend = cfg_.deflection_gain * slope / (slope + 0.05);
            const double along = u * nx + v * ny;
            u -= blend * along * nx;
            v -= blend * along * ny;
            const double upslope = std::max(0.0, (st.wind_u * gx + st.wind_v * gy) / speed0);
            const double damp = 1.0 / (1.0 + cfg_.upslope_damping * upslope);
            u *= damp;
            v *= damp;
        }
        const double boost = 1.0 + cfg_.altitude_speedup * out.altitude / 3000.0;
        out.u = u * boost;
        out.v = v * boost;
        return out;
    }

    /// Truth sampled at every pixel centre: [3, H, W] of (temperature C, u, v m/s).
    Tensor<double> truth_grid(std::size_t t) const {
        Tensor<double> out(Shape{3, grid_.height, grid_.width});
        const std::size_t hw = grid_.height * grid_.width;
        for (std::size_t i = 0; i < grid_.height; ++i)
            for (std::size_t j = 0; j < grid_.width; ++j) {
                const SynthTruth s = truth(grid_.lon_center(j), grid_.lat_center(i), t);
                const std::size_t k = i * grid_.width + j;
                out[k] = s.temperature;
                out[hw + k] = s.u;
                out[2 * hw + k] = s.v;
            }
        return out;
    }

    /// Topography raster [1, H, W] in metres.
    Tensor<float> topography() const {
        Tensor<float> out(Shape{1, grid_.height, grid_.width});
        for (std::size_t k = 0; k < topography_.size(); ++k) out[k] = static_cast<float>(topography_[k]);
        return out;
    }

    const std::vector<std::string>& station_ids() const { return station_ids_; }

    LonLat station_position(std::size_t s) const {
        const std::size_t k = station_pixels_.at(s);
        return {grid_.lon_center(k % grid_.width), grid_.lat_center(k / grid_.width)};
    }

    /// Noisy observations of every station at time t, sorted by station id.
    std::vector<StationObservation> observe(std::size_t t) const {
        Rng rng(derive_seed(cfg_.seed, 0x0b5e, t));
        std::vector<StationObservation> out;
        out.reserve(station_ids_.size());
        const std::string stamp = time_id(t);
        for (std::size_t s = 0; s < station_ids_.size(); ++s) {
            const LonLat p = station_position(s);
            const SynthTruth tr = truth(p.lon, p.lat, t);
            StationObservation o;
            o.station_id = station_ids_[s];
            o.time = stamp;
            o.lon = p.lon;
            o.lat = p.lat;
            o.altitude = static_cast<float>(topography_[station_pixels_[s]]);
            o.temperature = tr.temperature + cfg_.noise_temperature * normal01(rng);
            const double u = tr.u + cfg_.noise_wind * normal01(rng);
            const double v = tr.v + cfg_.noise_wind * normal01(rng);
            const WindPolar w = uv_to_wind(u, v);
            o.wind_speed = w.speed;
            o.wind_dir = w.dir;
            out.push_back(std::move(o));
        }
        return out;
    }

    Dataset to_dataset() const {
        Dataset ds;
        ds.world = grid_;
        ds.topography = topography();
        for (std::size_t t = 0; t < cfg_.time_count; ++t) {
            ds.times.push_back(time_id(t));
            ds.observations.push_back(observe(t));
        }
        return ds;
    }

private:
    struct TimeState {
        double temp_mean, temp_phase;
        std::array<double, 2> temp_dir;
        double wind_u, wind_v;
    };

    TimeState time_state(std::size_t t) const {
        Rng rng(derive_seed(cfg_.seed, 0x7135, t));
        TimeState s{};
        s.temp_mean = uniform(rng, cfg_.base_temp_min, cfg_.base_temp_max);
        const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        s.temp_dir = {std::cos(a), std::sin(a)};
        s.temp_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const WindUV w = wind_to_uv(uniform(rng, cfg_.wind_speed_min, cfg_.wind_speed_max), uniform(rng, 0.0, 360.0));
        s.wind_u = w.u;
        s.wind_v = w.v;
        return s;
    }

    double lattice(std::int64_t ix, std::int64_t iy, std::size_t octave) const {
        const std::uint64_t h = derive_seed(derive_seed(cfg_.seed, 0x7e44, octave), static_cast<std::uint64_t>(ix),
                                            static_cast<std::uint64_t>(iy));
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    }

    static double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

    double raw_terrain(double lon, double lat) const {
        double sum = 0.0, amp = 1.0, norm = 0.0;
        double freq = 1.0 / cfg_.terrain_wavelength;
        for (std::size_t o = 0; o < cfg_.terrain_octaves; ++o) {
            const double x = (lon - cfg_.lon_min) * freq, y = (lat - cfg_.lat_min) * freq;
            const double fx = std::floor(x), fy = std::floor(y);
            const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
            const double sx = fade(x - fx), sy = fade(y - fy);
            const double a = lattice(ix, iy, o), b = lattice(ix + 1, iy, o);
            const double c = lattice(ix, iy + 1, o), d = lattice(ix + 1, iy + 1, o);
            sum += amp * ((a + (b - a) * sx) * (1.0 - sy) + (c + (d - c) * sx) * sy);
            norm += amp;
            amp *= cfg_.terrain_persistence;
            freq *= 2.0;
        }
        return sum / norm;
    }

    double shape_altitude(double raw) const {
        const double x = std::clamp((raw - raw_lo_) / raw_span_, 0.0, 1.0);
        return cfg_.terrain_max * std::pow(x, cfg_.terrain_gamma);
    }

    SynthWorldConfig cfg_;
    GridSpec grid_;
    double raw_lo_ = 0.0;
    double raw_span_ = 1.0;
    std::vector<double> topography_;
    std::vector<std::string> station_ids_;
    std::vector<std::uint64_t> station_pixels_;
};

} // namespace spliif
