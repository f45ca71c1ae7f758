#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "spliif/error.hpp"

namespace spliif {

enum class Variable { temperature, wind_component, topography };

inline Variable parse_variable(std::string_view tag) {
    if (tag == "temperature") return Variable::temperature;
    if (tag == "wind_component") return Variable::wind_component;
    if (tag == "topography") return Variable::topography;
    throw ContractError("unknown variable tag '" + std::string(tag) + "'");
}

// Temperature: [-30, 40] C -> [-1, 1]. Wind components share the speed scale
// [0, 30] m/s -> [0, 1]. Topography: metres / 3000.
inline constexpr double kTempCenter = 5.0;
inline constexpr double kTempHalfRange = 35.0;
inline constexpr double kWindScale = 30.0;
inline constexpr double kTopoScale = 3000.0;

/// Affine map to model units. Out-of-range values are not clamped.
inline double normalize(Variable var, double value) {
    switch (var) {
    case Variable::temperature: return (value - kTempCenter) / kTempHalfRange;
    case Variable::wind_component: return value / kWindScale;
    case Variable::topography: return value / kTopoScale;
    }
    throw ContractError("normalize: invalid variable");
}

inline double denormalize(Variable var, double value) {
    switch (var) {
    case Variable::temperature: return value * kTempHalfRange + kTempCenter;
    case Variable::wind_component: return value * kWindScale;
    case Variable::topography: return value * kTopoScale;
    }
    throw ContractError("denormalize: invalid variable");
}

inline double normalize(std::string_view tag, double value) { return normalize(parse_variable(tag), value); }
inline double denormalize(std::string_view tag, double value) { return denormalize(parse_variable(tag), value); }

/// Bearing folded into [0, 360).
inline double wrap_degrees(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r < 0.0) r += 360.0;
    if (r >= 360.0) r = 0.0;
    return r;
}

struct WindUV {
    double u = 0.0;  // eastward, m/s
    double v = 0.0;  // northward, m/s
};

struct WindPolar {
    double speed = 0.0;  // m/s
    double dir = 0.0;    // degrees the wind blows FROM, 0 = north, clockwise
};

inline constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

/// Meteorological convention: u = -speed*sin(dir), v = -speed*cos(dir).
inline WindUV wind_to_uv(double speed, double dir_deg) {
    if (!(speed >= 0.0)) throw InputError("wind_to_uv: negative wind speed " + std::to_string(speed));
    const double r = dir_deg * kDegToRad;
    return {-speed * std::sin(r), -speed * std::cos(r)};
}

/// Inverse of wind_to_uv; direction is 0 when the speed is 0.
inline WindPolar uv_to_wind(double u, double v) {
    const double speed = std::hypot(u, v);
    if (speed == 0.0) return {0.0, 0.0};
    return {speed, wrap_degrees(std::atan2(-u, -v) / kDegToRad)};
}

} // namespace spliif
