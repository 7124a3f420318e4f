#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quorum/expert.hpp"
#include "quorum/market_data.hpp"
#include "quorum/signal.hpp"

namespace quorum {

struct DatedAction {
    Date date;
    Action action = Action::Hold;

    friend bool operator==(const DatedAction&, const DatedAction&) = default;
};

struct PortfolioState {
    double cash = 0.0;
    double shares = 0.0;

    double equity(double close) const { return cash + shares * close; }
};

struct Trade {
    Date date;
    Action side = Action::Buy;
    double shares = 0.0;
    double price = 0.0;
    double cash_after = 0.0;
    double fee = 0.0;
};

struct EquityPoint {
    Date date;
    double equity = 0.0;
};

/// Initial point plus one point per simulated trading day.
struct EquityCurve {
    std::vector<EquityPoint> points;

    std::vector<double> returns() const;
    std::vector<double> values() const;
};

struct SimulationOptions {
    bool whole_shares = false;
    /// Fee charged on a trade of the given notional; none by default.
    std::function<double(Action side, double notional)> cost;
};

struct SimulationResult {
    EquityCurve curve;
    std::vector<Trade> trades;
    PortfolioState final_state;
    /// Non-Hold decisions were given but none could be executed.
    bool infeasible = false;
};

/// Executes one action at `price` against `state`; nullopt when nothing
/// could be traded (no cash to buy, no shares to sell, or rounding to zero).
std::optional<Trade> execute_action(PortfolioState& state, const Date& date, Action action, double price,
                                    const RiskProfile& profile, const SimulationOptions& options = {});

/// Executes each decision at that day's close: Buy spends buy_fraction of
/// idle cash, Sell sells sell_fraction of held shares. Days without a
/// decision hold. Every bar of `prices` is simulated.
SimulationResult simulate(const std::vector<DatedAction>& decisions, std::span<const PriceBar> prices,
                          const RiskProfile& profile, double initial, const SimulationOptions& options = {});

std::vector<DatedAction> strategy_random(std::span<const Date> calendar, std::uint64_t seed);

/// Buy after `streak` consecutive up-closes, Sell after `streak` consecutive
/// down-closes; a flat close resets both counters.
std::vector<DatedAction> strategy_brsf(std::span<const PriceBar> prices, int streak);

/// Up -> Buy, Down -> Sell, missing -> Hold.
std::vector<DatedAction> strategy_from_predictions(const std::vector<std::pair<Date, std::optional<Trend>>>& predictions);
std::vector<DatedAction> strategy_from_signals(const std::vector<AgentSignal>& signals);

std::string serialize_decisions(const std::vector<DatedAction>& decisions);  // CSV date,action
std::vector<DatedAction> parse_decisions(std::string_view csv);

// Metrics.

double accuracy(const std::vector<Trend>& pred, const std::vector<Trend>& actual);

enum class F1Average { Positive, Macro, Weighted };

double f1(const std::vector<Trend>& pred, const std::vector<Trend>& actual, Trend positive = Trend::Up,
          F1Average average = F1Average::Positive);

constexpr double kTradingDaysPerYear = 252.0;

/// (end/start)^(days_per_year/N) - 1 with N the number of simulated days.
double annualized_return(const EquityCurve& curve, double days_per_year = kTradingDaysPerYear);

/// Mean excess daily return over its sample standard deviation, scaled by
/// sqrt(days_per_year). Throws Error(DegenerateSeries) for zero variance.
double sharpe(const EquityCurve& curve, double rf = 0.0, double days_per_year = kTradingDaysPerYear);

double max_drawdown(const EquityCurve& curve);

/// Uniform integer in [0, n) by rejection sampling; unlike the standard
/// distributions its output is the same on every standard library.
std::uint64_t uniform_index(std::uint64_t n, std::mt19937_64& rng);

}  // namespace quorum
