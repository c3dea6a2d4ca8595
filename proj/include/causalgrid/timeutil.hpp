#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "causalgrid/common.hpp"

namespace causalgrid {

// UTC instants as seconds since the Unix epoch. All series are hourly, so
// instants are always multiples of 3600 after alignment.
using Instant = std::int64_t;

constexpr Instant kHour = 3600;
constexpr Instant kDay = 86400;

// Days since 1970-01-01 from a civil date (Howard Hinnant's algorithm).
constexpr std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    int year;
    int month;
    int day;
};

constexpr CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline int hour_of_day(Instant t) {
    std::int64_t s = ((t % kDay) + kDay) % kDay;
    return static_cast<int>(s / kHour);
}

// 0-based day of year in UTC.
inline int day_of_year(Instant t) {
    std::int64_t days = (t >= 0 ? t : t - (kDay - 1)) / kDay;
    CivilDate c = civil_from_days(days);
    return static_cast<int>(days - days_from_civil(c.year, 1, 1));
}

// 0 = Monday ... 6 = Sunday.
inline int weekday(Instant t) {
    std::int64_t days = (t >= 0 ? t : t - (kDay - 1)) / kDay;
    return static_cast<int>(((days % 7) + 10) % 7);
}

inline std::int64_t day_index(Instant t) { return (t >= 0 ? t : t - (kDay - 1)) / kDay; }

namespace detail {
inline bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}
}  // namespace detail

// Parses "YYYY-MM-DDTHH:MM:SSZ" (strict UTC).
inline Instant parse_instant(std::string_view s) {
    int y, mo, d, h, mi, se;
    bool ok = s.size() == 20 && s[4] == '-' && s[7] == '-' && s[10] == 'T' && s[13] == ':' &&
              s[16] == ':' && s[19] == 'Z' && detail::parse_fixed_uint(s, 0, 4, y) &&
              detail::parse_fixed_uint(s, 5, 2, mo) && detail::parse_fixed_uint(s, 8, 2, d) &&
              detail::parse_fixed_uint(s, 11, 2, h) && detail::parse_fixed_uint(s, 14, 2, mi) &&
              detail::parse_fixed_uint(s, 17, 2, se);
    if (!ok || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
        throw FormatError("unparseable UTC timestamp: '" + std::string(s) + "'");
    return days_from_civil(y, mo, d) * kDay + h * kHour + mi * 60 + se;
}

// Parses "YYYY-MM-DD" as midnight UTC.
inline Instant parse_date(std::string_view s) {
    int y, mo, d;
    bool ok = s.size() == 10 && s[4] == '-' && s[7] == '-' && detail::parse_fixed_uint(s, 0, 4, y) &&
              detail::parse_fixed_uint(s, 5, 2, mo) && detail::parse_fixed_uint(s, 8, 2, d);
    if (!ok || mo < 1 || mo > 12 || d < 1 || d > 31)
        throw FormatError("unparseable date: '" + std::string(s) + "'");
    return days_from_civil(y, mo, d) * kDay;
}

inline std::string format_instant(Instant t) {
    CivilDate c = civil_from_days(day_index(t));
    std::int64_t s = ((t % kDay) + kDay) % kDay;
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month, c.day,
                  static_cast<int>(s / 3600), static_cast<int>((s / 60) % 60),
                  static_cast<int>(s % 60));
    return buf;
}

}  // namespace causalgrid
