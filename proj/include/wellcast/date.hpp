#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "wellcast/error.hpp"

namespace wellcast {

/// Calendar day, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(int days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int y, unsigned m, unsigned d) {
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                              std::chrono::day{d}};
        if (!ymd.ok()) {
            throw DataError("invalid calendar date " + std::to_string(y) + "-" +
                            std::to_string(m) + "-" + std::to_string(d));
        }
        return Date(static_cast<int>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
    }

    /// Parses `YYYY-MM-DD`.
    static Date parse(std::string_view text) {
        while (!text.empty() && (text.front() == ' ' || text.front() == '"')) text.remove_prefix(1);
        while (!text.empty() && (text.back() == ' ' || text.back() == '"')) text.remove_suffix(1);
        int y = 0;
        unsigned m = 0, d = 0;
        char tail = 0;
        const std::string s(text);
        if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
            throw DataError("unparseable date '" + s + "' (expected YYYY-MM-DD)");
        }
        return from_ymd(y, m, d);
    }

    std::string to_string() const {
        const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    constexpr int days() const noexcept { return days_; }
    constexpr Date operator+(int n) const noexcept { return Date(days_ + n); }
    constexpr Date operator-(int n) const noexcept { return Date(days_ - n); }
    constexpr int operator-(Date other) const noexcept { return days_ - other.days_; }
    constexpr auto operator<=>(const Date&) const = default;

private:
    int days_ = 0;
};

}  // namespace wellcast
