#include "quorum/market_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace quorum {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string lower(std::string_view s) {
    std::string out{s};
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::string format_number(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string_view to_string(Market m) noexcept { return m == Market::US ? "US" : "ASHARE"; }

std::span<const PriceBar> PriceSeries::through(const Date& origin) const {
    auto it = std::upper_bound(bars.begin(), bars.end(), origin,
                               [](const Date& d, const PriceBar& b) { return d < b.date; });
    return {bars.data(), static_cast<std::size_t>(it - bars.begin())};
}

std::vector<double> PriceSeries::closes() const {
    std::vector<double> out;
    out.reserve(bars.size());
    for (const auto& b : bars) out.push_back(b.close);
    return out;
}

std::optional<std::size_t> PriceSeries::index_of(const Date& d) const {
    auto it = std::lower_bound(bars.begin(), bars.end(), d,
                               [](const PriceBar& b, const Date& x) { return b.date < x; });
    if (it == bars.end() || it->date != d) return std::nullopt;
    return static_cast<std::size_t>(it - bars.begin());
}

std::string_view to_string(Period p) noexcept {
    switch (p) {
        case Period::Q1: return "Q1";
        case Period::Q2: return "Q2";
        case Period::Q3: return "Q3";
        case Period::FY: return "FY";
    }
    return "?";
}

std::optional<Period> parse_period(std::string_view s) noexcept {
    if (s == "Q1") return Period::Q1;
    if (s == "Q2") return Period::Q2;
    if (s == "Q3") return Period::Q3;
    if (s == "FY") return Period::FY;
    return std::nullopt;
}

std::string_view to_string(StatementSource s) noexcept {
    switch (s) {
        case StatementSource::Balance: return "balance";
        case StatementSource::CashFlow: return "cashflow";
        case StatementSource::Income: return "income";
    }
    return "?";
}

std::optional<StatementSource> parse_statement_source(std::string_view s) noexcept {
    if (s == "balance") return StatementSource::Balance;
    if (s == "cashflow") return StatementSource::CashFlow;
    if (s == "income") return StatementSource::Income;
    return std::nullopt;
}

PriceValidationError::PriceValidationError(std::vector<ValidationIssue> issues)
    : Error(issues.empty() ? Errc::EmptyInput : issues.front().code,
            [&] {
                std::string msg = std::to_string(issues.size()) + " price validation issue(s)";
                std::size_t shown = 0;
                for (const auto& i : issues) {
                    if (shown++ == 10) {
                        msg += "; ...";
                        break;
                    }
                    msg += "; line " + std::to_string(i.line) + ": " + i.message;
                }
                return msg;
            }()),
      issues_(std::move(issues)) {}

PriceSeries parse_prices(std::string_view csv, std::string ticker, Market market) {
    std::vector<ValidationIssue> issues;
    PriceSeries series{std::move(ticker), market, {}};
    std::vector<std::size_t> line_of;

    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t nl = csv.find('\n', pos);
        std::string_view line = csv.substr(pos, nl == std::string_view::npos ? csv.npos : nl - pos);
        pos = nl == std::string_view::npos ? csv.size() + 1 : nl + 1;
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (lower(line) != "date,open,high,low,close,volume") {
                throw PriceValidationError(
                    {{Errc::MalformedRow, line_no, "expected header date,open,high,low,close,volume"}});
            }
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != 6) {
            issues.push_back({Errc::MalformedRow, line_no,
                              "expected 6 fields, got " + std::to_string(fields.size())});
            continue;
        }
        auto date = Date::parse_iso(fields[0]);
        if (!date) {
            issues.push_back({Errc::MalformedRow, line_no, "bad date '" + std::string(fields[0]) + "'"});
            continue;
        }
        std::array<double, 5> v{};
        bool ok = true;
        for (std::size_t i = 0; i < 5; ++i) {
            auto d = parse_double(fields[i + 1]);
            if (!d) {
                issues.push_back({Errc::MalformedRow, line_no,
                                  "bad number '" + std::string(fields[i + 1]) + "'"});
                ok = false;
                break;
            }
            v[i] = *d;
        }
        if (!ok) continue;
        PriceBar bar{*date, v[0], v[1], v[2], v[3], v[4]};
        if (bar.open <= 0 || bar.high <= 0 || bar.low <= 0 || bar.close <= 0) {
            issues.push_back({Errc::NonPositivePrice, line_no, "non-positive price"});
            continue;
        }
        if (bar.volume < 0) {
            issues.push_back({Errc::InvalidBar, line_no, "negative volume"});
            continue;
        }
        if (!(bar.low <= bar.open && bar.open <= bar.high && bar.low <= bar.close &&
              bar.close <= bar.high)) {
            issues.push_back({Errc::InvalidBar, line_no, "open/close outside [low, high]"});
            continue;
        }
        series.bars.push_back(bar);
        line_of.push_back(line_no);
    }
    if (!header_seen) throw PriceValidationError({{Errc::EmptyInput, 0, "empty price file"}});

    // Newest-first exports are accepted and reversed; any other disorder is an error.
    const auto& bars = series.bars;
    bool descending = bars.size() > 1;
    for (std::size_t i = 1; i < bars.size() && descending; ++i) descending = bars[i].date < bars[i - 1].date;
    if (descending) {
        std::reverse(series.bars.begin(), series.bars.end());
        std::reverse(line_of.begin(), line_of.end());
    }
    for (std::size_t i = 1; i < series.bars.size(); ++i) {
        if (!(series.bars[i - 1].date < series.bars[i].date)) {
            issues.push_back({Errc::NonMonotonicDates, line_of[i],
                              "date " + series.bars[i].date.iso() + " does not follow " +
                                  series.bars[i - 1].date.iso()});
        }
    }
    if (series.bars.empty() && issues.empty()) {
        issues.push_back({Errc::EmptyInput, line_no, "no price rows"});
    }
    if (!issues.empty()) {
        std::stable_sort(issues.begin(), issues.end(),
                         [](const auto& a, const auto& b) { return a.line < b.line; });
        throw PriceValidationError(std::move(issues));
    }
    return series;
}

std::string ticker_from_path(const std::filesystem::path& path) {
    std::string stem = path.filename().string();
    auto cut = stem.find_first_of("._");
    return cut == std::string::npos ? stem : stem.substr(0, cut);
}

Market market_for_ticker(std::string_view ticker) {
    bool six_digits = ticker.size() == 6 &&
                      std::all_of(ticker.begin(), ticker.end(),
                                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    return six_digits ? Market::AShare : Market::US;
}

PriceSeries load_prices(const std::filesystem::path& path) {
    auto ticker = ticker_from_path(path);
    auto market = market_for_ticker(ticker);
    return load_prices(path, std::move(ticker), market);
}

PriceSeries load_prices(const std::filesystem::path& path, std::string ticker, Market market) {
    return parse_prices(read_file(path), std::move(ticker), market);
}

std::string serialize_prices(const PriceSeries& series) {
    std::string out = "date,open,high,low,close,volume\n";
    for (const auto& b : series.bars) {
        out += b.date.iso();
        for (double v : {b.open, b.high, b.low, b.close, b.volume}) {
            out += ',';
            out += format_number(v);
        }
        out += '\n';
    }
    return out;
}

std::vector<NewsArticle> parse_news(std::string_view jsonl) {
    std::vector<NewsArticle> out;
    std::size_t record = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        std::size_t nl = jsonl.find('\n', pos);
        std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? jsonl.npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
        line = trim(line);
        if (line.empty()) continue;
        ++record;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRow(record, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw MalformedRow(record, "record is not an object");
        for (const char* key : {"title", "date", "text"}) {
            if (!j.contains(key) || !j[key].is_string()) throw MissingField(key, record);
        }
        auto text = j["text"].get<std::string>();
        if (trim(text).empty()) throw MissingField("text", record);
        auto raw_date = j["date"].get<std::string>();
        auto date = Date::parse_lenient(raw_date);
        if (!date) {
            throw Error(Errc::UnparseableDate,
                        "record " + std::to_string(record) + ": unparseable date '" + raw_date + "'");
        }
        out.push_back({j["title"].get<std::string>(), *date, std::move(text)});
    }
    return out;
}

std::vector<NewsArticle> load_news(const std::filesystem::path& path) { return parse_news(read_file(path)); }

std::string serialize_news(std::span<const NewsArticle> articles) {
    std::string out;
    for (const auto& a : articles) {
        json j = json::object();
        j["title"] = a.title;
        j["date"] = a.date.iso();
        j["text"] = a.text;
        out += j.dump();
        out += '\n';
    }
    return out;
}

StatementBundle parse_statements(std::string_view text, std::string ticker) {
    // nlohmann::json keeps the last of duplicate keys silently, so duplicates
    // are detected during parsing with a per-object key set stack.
    std::vector<std::set<std::string>> keys_stack;
    std::optional<std::string> duplicate;
    std::optional<std::string> duplicate_period;
    json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start: keys_stack.emplace_back(); break;
            case json::parse_event_t::object_end:
                if (!keys_stack.empty()) keys_stack.pop_back();
                break;
            case json::parse_event_t::key:
                if (!keys_stack.empty() && !keys_stack.back().insert(parsed.get<std::string>()).second) {
                    auto& slot = keys_stack.size() == 1 ? duplicate_period : duplicate;
                    if (!slot) slot = parsed.get<std::string>();
                }
                break;
            default: break;
        }
        return true;
    };
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), cb);
    } catch (const json::parse_error& e) {
        throw Error(Errc::MalformedRow, std::string("statements: invalid JSON: ") + e.what());
    }
    if (duplicate_period) throw Error(Errc::MalformedRow, "duplicate period '" + *duplicate_period + "'");
    if (duplicate) throw Error(Errc::DuplicateIndicator, "duplicate indicator '" + *duplicate + "'");
    if (!doc.is_object()) throw Error(Errc::MalformedRow, "statements: top level must be an object");

    StatementBundle bundle{std::move(ticker), {}};
    for (const auto& [period_name, indicators] : doc.items()) {
        auto period = parse_period(period_name);
        if (!period) throw Error(Errc::UnknownPeriod, "unknown period '" + period_name + "'");
        if (!indicators.is_object()) {
            throw Error(Errc::MalformedRow, "period '" + period_name + "' must map indicators to numbers");
        }
        auto& slot = bundle.periods[*period];
        for (const auto& [name, value] : indicators.items()) {
            Indicator ind;
            if (value.is_number()) {
                ind.value = value.get<double>();
            } else if (value.is_object() && value.contains("value") && value["value"].is_number()) {
                ind.value = value["value"].get<double>();
                if (value.contains("source")) {
                    auto src = parse_statement_source(value["source"].get<std::string>());
                    if (!src) throw Error(Errc::MalformedRow, "indicator '" + name + "': unknown source");
                    ind.source = src;
                }
            } else {
                throw Error(Errc::MalformedRow, "indicator '" + name + "' is not numeric");
            }
            if (!std::isfinite(ind.value)) throw Error(Errc::NonFiniteInput, "indicator '" + name + "'");
            slot.emplace(name, ind);
        }
    }
    if (bundle.periods.empty()) throw Error(Errc::EmptyInput, "statements: no periods");
    return bundle;
}

StatementBundle load_statements(const std::filesystem::path& path) {
    return load_statements(path, ticker_from_path(path));
}

StatementBundle load_statements(const std::filesystem::path& path, std::string ticker) {
    return parse_statements(read_file(path), std::move(ticker));
}

std::string serialize_statements(const StatementBundle& bundle) {
    // Emitted in Q1..FY order with sorted indicator names.
    std::string out = "{";
    bool first_period = true;
    for (const auto& [period, indicators] : bundle.periods) {
        if (!first_period) out += ",";
        first_period = false;
        out += "\n  " + json(std::string(to_string(period))).dump() + ": {";
        bool first = true;
        for (const auto& [name, ind] : indicators) {
            if (!first) out += ",";
            first = false;
            out += "\n    " + json(name).dump() + ": ";
            if (ind.source) {
                out += "{\"value\": " + format_number(ind.value) + ", \"source\": \"" +
                       std::string(to_string(*ind.source)) + "\"}";
            } else {
                out += format_number(ind.value);
            }
        }
        out += indicators.empty() ? "}" : "\n  }";
    }
    out += "\n}\n";
    return out;
}

std::optional<Date> attribute_to_trading_day(std::span<const Date> calendar, const Date& d) {
    auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
    if (it == calendar.end()) return std::nullopt;
    return *it;
}

std::optional<Date> Dataset::next_trading_day(const Date& d) const {
    auto it = std::upper_bound(calendar.begin(), calendar.end(), d);
    if (it == calendar.end()) return std::nullopt;
    return *it;
}

std::optional<Date> Dataset::previous_trading_day(const Date& d) const {
    auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
    if (it == calendar.begin()) return std::nullopt;
    return *std::prev(it);
}

Dataset build_dataset(PriceSeries prices, std::vector<NewsArticle> news, StatementBundle statements) {
    if (!statements.ticker.empty() && statements.ticker != prices.ticker) {
        throw Error(Errc::TickerMismatch,
                    "prices are for '" + prices.ticker + "' but statements for '" + statements.ticker + "'");
    }
    if (prices.bars.empty()) throw Error(Errc::EmptyInput, "dataset needs at least one price bar");
    Dataset ds;
    ds.calendar.reserve(prices.bars.size());
    for (const auto& b : prices.bars) ds.calendar.push_back(b.date);
    for (const auto& a : news) {
        ds.attribution.push_back(attribute_to_trading_day(ds.calendar, a.date));
        ds.outside_calendar.push_back(a.date < ds.calendar.front() || a.date > ds.calendar.back());
    }
    ds.prices = std::move(prices);
    ds.news = std::move(news);
    ds.statements = std::move(statements);
    return ds;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace quorum
