#pragma once

#include <cstdint>

#include "common.hpp"

namespace curvecast {

// Civil calendar <-> days-since-epoch (proleptic Gregorian).
inline int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    int month;  // 1..12
    int day;    // 1..31
};

inline CivilDate civil_from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

// Linear month index (year*12 + month-1) of a nanosecond timestamp.
inline int month_index(int64_t ts_ns) {
    int64_t day = ts_ns / kNsPerDay;
    if (ts_ns < 0 && ts_ns % kNsPerDay != 0) --day;
    CivilDate cd = civil_from_days(day);
    return cd.year * 12 + cd.month - 1;
}

inline int64_t day_index(int64_t ts_ns) {
    int64_t day = ts_ns / kNsPerDay;
    if (ts_ns < 0 && ts_ns % kNsPerDay != 0) --day;
    return day;
}

}  // namespace curvecast
