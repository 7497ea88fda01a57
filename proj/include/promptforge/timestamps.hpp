#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace pforge {

// All clinical timestamps are integer minutes since 1970-01-01 00:00 so that
// time-delta grouping uses exact integer equality.
using Minutes = std::int64_t;

namespace detail {

// Howard Hinnant's civil date algorithms.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, std::int64_t& out) {
    if (pos + n > s.size()) return false;
    std::int64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

} // namespace detail

// "YYYY-MM-DD" at midnight
inline std::optional<Minutes> parse_date(std::string_view s) {
    std::int64_t y, m, d;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    if (!detail::read_digits(s, 0, 4, y) || !detail::read_digits(s, 5, 2, m) ||
        !detail::read_digits(s, 8, 2, d))
        return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    return detail::days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d)) * 1440;
}

// "HH:MM" or "HH:MM:SS"; seconds are floored away (minutes resolution)
inline std::optional<int> parse_time_of_day(std::string_view s) {
    std::int64_t h, mi;
    if (s.size() != 5 && s.size() != 8) return std::nullopt;
    if (s[2] != ':') return std::nullopt;
    if (!detail::read_digits(s, 0, 2, h) || !detail::read_digits(s, 3, 2, mi)) return std::nullopt;
    if (s.size() == 8) {
        std::int64_t sec;
        if (s[5] != ':' || !detail::read_digits(s, 6, 2, sec) || sec > 59) return std::nullopt;
    }
    if (h > 23 || mi > 59) return std::nullopt;
    return static_cast<int>(h * 60 + mi);
}

// "YYYY-MM-DD HH:MM[:SS]"
inline std::optional<Minutes> parse_timestamp(std::string_view s) {
    if (s.size() < 16 || s[10] != ' ') return std::nullopt;
    auto day = parse_date(s.substr(0, 10));
    auto tod = parse_time_of_day(s.substr(11));
    if (!day || !tod) return std::nullopt;
    return *day + *tod;
}

inline std::string format_date(Minutes t) {
    std::int64_t days = t / 1440;
    if (t < 0 && t % 1440 != 0) --days;
    std::int64_t y;
    unsigned m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
    return buf;
}

inline std::string format_time_of_day(int minutes_of_day) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d", minutes_of_day / 60, minutes_of_day % 60);
    return buf;
}

inline std::string format_timestamp(Minutes t) {
    std::int64_t days = t / 1440;
    std::int64_t rem = t % 1440;
    if (rem < 0) {
        rem += 1440;
        --days;
    }
    return format_date(days * 1440) + " " + format_time_of_day(static_cast<int>(rem));
}

// Δ in hours, later minus earlier.
inline double hours_between(Minutes later, Minutes earlier) {
    return static_cast<double>(later - earlier) / 60.0;
}

} // namespace pforge
