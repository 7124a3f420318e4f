#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quorum/date.hpp"
#include "quorum/error.hpp"

namespace quorum {

struct PriceBar {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;

    friend bool operator==(const PriceBar&, const PriceBar&) = default;
};

enum class Market { US, AShare };

std::string_view to_string(Market m) noexcept;

struct PriceSeries {
    std::string ticker;
    Market market = Market::US;
    std::vector<PriceBar> bars;

    /// Bars dated on or before `origin`. Forecasters only ever see this view.
    std::span<const PriceBar> through(const Date& origin) const;
    std::vector<double> closes() const;
    std::optional<std::size_t> index_of(const Date& d) const;
};

struct NewsArticle {
    std::string title;
    Date date;
    std::string text;

    friend bool operator==(const NewsArticle&, const NewsArticle&) = default;
};

enum class Period { Q1, Q2, Q3, FY };
enum class StatementSource { Balance, CashFlow, Income };

std::string_view to_string(Period p) noexcept;
std::optional<Period> parse_period(std::string_view s) noexcept;
std::string_view to_string(StatementSource s) noexcept;
std::optional<StatementSource> parse_statement_source(std::string_view s) noexcept;

struct Indicator {
    double value = 0.0;
    std::optional<StatementSource> source;

    friend bool operator==(const Indicator&, const Indicator&) = default;
};

struct StatementBundle {
    std::string ticker;
    std::map<Period, std::map<std::string, Indicator>> periods;

    friend bool operator==(const StatementBundle&, const StatementBundle&) = default;
};

/// One issue found while validating a price file.
struct ValidationIssue {
    Errc code;
    std::size_t line;
    std::string message;
};

/// Thrown by the price loader with every issue found, not just the first.
/// `code()` is the kind of the first issue.
class PriceValidationError : public Error {
public:
    explicit PriceValidationError(std::vector<ValidationIssue> issues);
    const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ValidationIssue> issues_;
};

// Prices: `date,open,high,low,close,volume` CSV with ISO dates.
PriceSeries parse_prices(std::string_view csv, std::string ticker, Market market = Market::US);
PriceSeries load_prices(const std::filesystem::path& path);
PriceSeries load_prices(const std::filesystem::path& path, std::string ticker, Market market);
std::string serialize_prices(const PriceSeries& series);

// News: JSON-lines with `title`, `date`, `text`.
std::vector<NewsArticle> parse_news(std::string_view jsonl);
std::vector<NewsArticle> load_news(const std::filesystem::path& path);
std::string serialize_news(std::span<const NewsArticle> articles);

// Statements: `{period: {indicator: number | {"value": n, "source": s}}}`.
StatementBundle parse_statements(std::string_view json, std::string ticker);
StatementBundle load_statements(const std::filesystem::path& path);
StatementBundle load_statements(const std::filesystem::path& path, std::string ticker);
std::string serialize_statements(const StatementBundle& bundle);

/// Ticker convention for the loaders that take only a path: the file stem
/// up to the first '.' or '_' (`AMZN.prices.csv` -> `AMZN`). Six-digit
/// numeric tickers are treated as A-share codes.
std::string ticker_from_path(const std::filesystem::path& path);
Market market_for_ticker(std::string_view ticker);

struct Dataset {
    PriceSeries prices;
    std::vector<NewsArticle> news;
    StatementBundle statements;
    std::vector<Date> calendar;
    /// Per article, the trading date it is attributed to (same day, or the
    /// next trading day for weekend/holiday dates). Empty when the article
    /// falls after the last trading date.
    std::vector<std::optional<Date>> attribution;
    /// Per article, true when its date lies outside [first, last] trading date.
    std::vector<bool> outside_calendar;

    std::optional<Date> next_trading_day(const Date& d) const;
    std::optional<Date> previous_trading_day(const Date& d) const;
};

/// First trading date on or after `d`.
std::optional<Date> attribute_to_trading_day(std::span<const Date> calendar, const Date& d);

Dataset build_dataset(PriceSeries prices, std::vector<NewsArticle> news, StatementBundle statements);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal rendering used by every serializer.
std::string format_number(double v);

}  // namespace quorum
