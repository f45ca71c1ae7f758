#pragma once

#include <string>
#include <vector>

namespace spliif::testing {

struct MalformedFixture {
    std::string name;
    bool is_csv;
    std::string text;
    std::string expect;  // substring of the error message
};

inline constexpr const char* kCsvHeader = "station_id,lon,lat,altitude_m,time_iso8601,temp_c,wind_ms,wind_dir_deg\n";

inline std::vector<MalformedFixture> malformed_fixtures() {
    const std::string h = kCsvHeader;
    const std::string asc = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 0.5\n";
    return {
        {"csv_empty", true, "", "missing header"},
        {"csv_missing_column", true, "station_id,lon,lat,altitude_m,time_iso8601,temp_c,wind_ms\nA,1,2,3,t,4,5\n",
         "wind_dir_deg"},
        {"csv_bad_number", true, h + "A,13x,35,10,2018-01-01T00:00:00Z,1,2,3\n", "line 2: malformed lon"},
        {"csv_field_count", true, h + "A,136,35,10,2018-01-01T00:00:00Z,1,2\n", "line 2: expected 8 fields"},
        {"csv_unterminated_quote", true, h + "\"A,136,35,10,t,1,2,3\n", "unterminated"},
        {"csv_negative_wind", true, h + "A,136,35,10,t,1,-2,3\nB,136,35,10,t,1,2,3\n", "negative wind_ms"},
        {"csv_empty_id", true, h + "B,136,35,10,t,1,2,3\n,136,35,10,t,1,2,3\n", "line 3: empty station_id"},
        {"asc_missing_ncols", false, "nrows 2\nxllcorner 0\nyllcorner 0\ncellsize 0.5\n1 2\n3 4\n", "ncols"},
        {"asc_count_mismatch", false, asc + "1 2\n3\n", "body has 3"},
        {"asc_bad_value", false, asc + "1 2\n3 four\n", "malformed value 'four'"},
    };
}

} // namespace spliif::testing
