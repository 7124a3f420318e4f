#include "quorum/date.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <regex>

namespace quorum {

namespace {

std::optional<Date> make_checked(int y, int m, int d) {
    if (y < 1900 || y > 2200 || m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    Date out{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
    if (!out.valid()) return std::nullopt;
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

int month_from_name(std::string name) {
    static constexpr std::array<const char*, 12> names = {
        "january", "february", "march", "april", "may", "june",
        "july", "august", "september", "october", "november", "december"};
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (!name.empty() && name.back() == '.') name.pop_back();
    if (name.size() < 3) return 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string_view full = names[i];
        if (name == full || name == full.substr(0, 3) || (name == "sept" && i == 8)) {
            return static_cast<int>(i) + 1;
        }
    }
    return 0;
}

}  // namespace

std::optional<Date> Date::parse_iso(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
    }
    auto num = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (text[i] - '0');
        return v;
    };
    return make_checked(num(0, 4), num(5, 2), num(8, 2));
}

std::optional<Date> Date::parse_lenient(std::string_view raw) {
    const std::string text{trim(raw)};
    if (text.empty()) return std::nullopt;

    // Time suffixes share one tail pattern across all numeric layouts.
    static const std::string time_tail = R"((?:[T ]\d{1,2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?)?)";
    static const std::regex numeric(R"(^(\d{4})[-/.](\d{1,2})[-/.](\d{1,2}))" + time_tail + "$");
    static const std::regex compact(R"(^(\d{4})(\d{2})(\d{2})$)");
    static const std::regex han(
        "^(\\d{4})\xE5\xB9\xB4(\\d{1,2})\xE6\x9C\x88(\\d{1,2})\xE6\x97\xA5" + time_tail + "$");
    static const std::regex month_first(
        R"(^([A-Za-z]{3,9}\.?)\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4}))" + time_tail + "$");
    static const std::regex day_first(
        R"(^(\d{1,2})\s+([A-Za-z]{3,9}\.?),?\s+(\d{4}))" + time_tail + "$");

    std::smatch m;
    if (std::regex_match(text, m, numeric) || std::regex_match(text, m, compact) ||
        std::regex_match(text, m, han)) {
        return make_checked(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
    }
    if (std::regex_match(text, m, month_first)) {
        int month = month_from_name(m[1]);
        if (month == 0) return std::nullopt;
        return make_checked(std::stoi(m[3]), month, std::stoi(m[2]));
    }
    if (std::regex_match(text, m, day_first)) {
        int month = month_from_name(m[2]);
        if (month == 0) return std::nullopt;
        return make_checked(std::stoi(m[3]), month, std::stoi(m[1]));
    }
    return std::nullopt;
}

bool Date::is_weekend() const {
    std::chrono::weekday wd{days()};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
}

}  // namespace quorum
