#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace quorum {

/// Calendar date with day resolution. Ordered, hashable through `days()`.
class Date {
public:
    constexpr Date() = default;
    constexpr Date(int year, unsigned month, unsigned day)
        : ymd_(std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}) {}
    constexpr explicit Date(std::chrono::sys_days d) : ymd_(d) {}

    /// Strict ISO-8601 `YYYY-MM-DD`.
    static std::optional<Date> parse_iso(std::string_view text);

    /// Lenient parser used for scraped news. Accepts ISO dates with `-`, `/`
    /// or `.` separators, compact `YYYYMMDD`, `Mon D, YYYY`, `D Mon YYYY`,
    /// full month names, `YYYY年M月D日`, and any of these followed by a time
    /// component (`T...` or ` HH:MM[:SS]`).
    static std::optional<Date> parse_lenient(std::string_view text);

    int year() const { return static_cast<int>(ymd_.year()); }
    unsigned month() const { return static_cast<unsigned>(ymd_.month()); }
    unsigned day() const { return static_cast<unsigned>(ymd_.day()); }
    bool valid() const { return ymd_.ok(); }

    std::chrono::sys_days days() const { return std::chrono::sys_days{ymd_}; }
    bool is_weekend() const;
    Date plus_days(int n) const { return Date{days() + std::chrono::days{n}}; }

    std::string iso() const;

    friend bool operator==(const Date& a, const Date& b) { return a.days() == b.days(); }
    friend std::strong_ordering operator<=>(const Date& a, const Date& b) {
        return a.days() <=> b.days();
    }

private:
    std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                     std::chrono::day{1}};
};

struct DateHash {
    std::size_t operator()(const Date& d) const noexcept {
        return std::hash<long>{}(d.days().time_since_epoch().count());
    }
};

}  // namespace quorum
