#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spliif/data/normalize.hpp"
#include "spliif/data/station.hpp"
#include "spliif/error.hpp"
#include "spliif/io.hpp"

namespace spliif {

inline constexpr std::array<const char*, 8> kStationCsvColumns = {
    "station_id", "lon", "lat", "altitude_m", "time_iso8601", "temp_c", "wind_ms", "wind_dir_deg"};

namespace detail {

// Splits one CSV record; double quotes may wrap a field and "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    if (quoted) throw FormatError("line " + std::to_string(line_no) + ": unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

} // namespace detail

/// Parses station CSV text. Empty temp_c masks temperature; an empty wind_ms or
/// wind_dir_deg masks wind. Directions are folded into [0, 360).
inline std::vector<StationObservation> parse_stations_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        lines.push_back(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw FormatError("station CSV: missing header row");

    const auto header = detail::split_csv_line(lines[0], 1);
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[std::string(trim(header[i]))] = i;
    std::string missing;
    for (const char* name : kStationCsvColumns) {
        if (!column.count(name)) missing += (missing.empty() ? "" : ", ") + std::string(name);
    }
    if (!missing.empty()) throw FormatError("station CSV: missing required columns: " + missing);

    std::vector<StationObservation> out;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        if (trim(lines[li]).empty()) continue;
        const auto fields = detail::split_csv_line(lines[li], line_no);
        if (fields.size() != header.size()) {
            throw FormatError("station CSV line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
        }
        auto cell = [&](const char* name) { return trim(fields[column.at(name)]); };
        auto required_number = [&](const char* name) {
            const auto v = parse_number(cell(name));
            if (!v || !std::isfinite(*v)) {
                throw FormatError("station CSV line " + std::to_string(line_no) + ": malformed " + name +
                                  " value '" + std::string(cell(name)) + "'");
            }
            return *v;
        };
        auto optional_number = [&](const char* name, bool& valid) {
            if (cell(name).empty()) {
                valid = false;
                return 0.0;
            }
            return required_number(name);
        };

        StationObservation o;
        o.station_id = std::string(cell("station_id"));
        if (o.station_id.empty()) throw FormatError("station CSV line " + std::to_string(line_no) + ": empty station_id");
        o.time = std::string(cell("time_iso8601"));
        if (o.time.empty()) throw FormatError("station CSV line " + std::to_string(line_no) + ": empty time_iso8601");
        o.lon = required_number("lon");
        o.lat = required_number("lat");
        o.altitude = required_number("altitude_m");
        o.temperature = optional_number("temp_c", o.temperature_valid);
        bool speed_ok = true, dir_ok = true;
        o.wind_speed = optional_number("wind_ms", speed_ok);
        o.wind_dir = optional_number("wind_dir_deg", dir_ok);
        o.wind_valid = speed_ok && dir_ok;
        if (!o.wind_valid) {
            o.wind_speed = 0.0;
            o.wind_dir = 0.0;
        } else {
            if (o.wind_speed < 0.0) {
                throw FormatError("station CSV line " + std::to_string(line_no) + ": negative wind_ms");
            }
            o.wind_dir = wrap_degrees(o.wind_dir);
        }
        out.push_back(std::move(o));
    }
    return out;
}

inline std::vector<StationObservation> load_stations_csv(const std::filesystem::path& path) {
    try {
        return parse_stations_csv(read_file_text(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline std::string format_stations_csv(const std::vector<StationObservation>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < kStationCsvColumns.size(); ++i) os << (i ? "," : "") << kStationCsvColumns[i];
    os << '\n';
    for (const auto& o : rows) {
        os << o.station_id << ',' << format_number(o.lon) << ',' << format_number(o.lat) << ','
           << format_number(o.altitude) << ',' << o.time << ','
           << (o.temperature_valid ? format_number(o.temperature) : "") << ','
           << (o.wind_valid ? format_number(o.wind_speed) : "") << ','
           << (o.wind_valid ? format_number(o.wind_dir) : "") << '\n';
    }
    return os.str();
}

inline void write_stations_csv(const std::filesystem::path& path, const std::vector<StationObservation>& rows) {
    write_file_atomic(path, format_stations_csv(rows));
}

} // namespace spliif
