#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "spliif/data/normalize.hpp"
#include "spliif/error.hpp"
#include "spliif/interp/grid_spec.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// One station at one time. Invalid variables never reach losses or metrics.
struct StationObservation {
    std::string station_id;
    std::string time;  // ISO 8601
    double lon = 0.0;
    double lat = 0.0;
    double altitude = 0.0;     // m
    double temperature = 0.0;  // C
    double wind_speed = 0.0;   // m/s
    double wind_dir = 0.0;     // degrees, meteorological
    bool temperature_valid = true;
    bool wind_valid = true;  // speed and direction both present

    LonLat position() const { return {lon, lat}; }

    void validate() const {
        if (!std::isfinite(lon) || !std::isfinite(lat) || !std::isfinite(altitude)) {
            throw InputError("station '" + station_id + "': non-finite position");
        }
        if (temperature_valid && !std::isfinite(temperature)) {
            throw InputError("station '" + station_id + "': non-finite temperature");
        }
        if (wind_valid) {
            if (!(wind_speed >= 0.0) || !std::isfinite(wind_speed)) {
                throw InputError("station '" + station_id + "': wind speed must be >= 0");
            }
            if (!(wind_dir >= 0.0 && wind_dir < 360.0)) {
                throw InputError("station '" + station_id + "': wind direction outside [0, 360)");
            }
        }
    }

    /// (temperature, u, v) in physical units.
    std::array<double, 3> physical_channels() const {
        const WindUV w = wind_valid ? wind_to_uv(wind_speed, wind_dir) : WindUV{};
        return {temperature_valid ? temperature : 0.0, w.u, w.v};
    }

    std::array<bool, 3> channel_valid() const { return {temperature_valid, wind_valid, wind_valid}; }
};

inline constexpr std::size_t kStationChannels = 3;

/// Normalised (temperature, u, v) rows [N, 3] and their 0/1 validity mask.
template <class T>
std::pair<Tensor<T>, Tensor<T>> station_channels(const std::vector<StationObservation>& obs) {
    Tensor<T> values(Shape{obs.size(), kStationChannels});
    Tensor<T> mask(Shape{obs.size(), kStationChannels});
    for (std::size_t n = 0; n < obs.size(); ++n) {
        const auto phys = obs[n].physical_channels();
        const auto valid = obs[n].channel_valid();
        values.at(n, 0) = static_cast<T>(normalize(Variable::temperature, phys[0]));
        values.at(n, 1) = static_cast<T>(normalize(Variable::wind_component, phys[1]));
        values.at(n, 2) = static_cast<T>(normalize(Variable::wind_component, phys[2]));
        for (std::size_t c = 0; c < kStationChannels; ++c) {
            mask.at(n, c) = valid[c] ? T(1) : T(0);
            if (!valid[c]) values.at(n, c) = T(0);
        }
    }
    return {std::move(values), std::move(mask)};
}

} // namespace spliif
