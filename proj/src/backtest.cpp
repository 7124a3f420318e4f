#include "quorum/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace quorum {

std::vector<double> EquityCurve::values() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.equity);
    return out;
}

std::vector<double> EquityCurve::returns() const {
    std::vector<double> out;
    for (std::size_t i = 1; i < points.size(); ++i) out.push_back(points[i].equity / points[i - 1].equity - 1.0);
    return out;
}

std::optional<Trade> execute_action(PortfolioState& st, const Date& date, Action a, double price,
                                    const RiskProfile& profile, const SimulationOptions& options) {
    if (!(price > 0.0) || !std::isfinite(price)) throw Error(Errc::NonPositivePrice, "execution price must be > 0");
    if (a == Action::Buy && st.cash > 0.0) {
        double budget = profile.buy_fraction * st.cash;
        double fee = options.cost ? options.cost(Action::Buy, budget) : 0.0;
        double qty = std::max(0.0, budget - fee) / price;
        if (options.whole_shares) qty = std::floor(qty);
        if (qty <= 0.0) return std::nullopt;
        st.cash -= qty * price + fee;
        if (st.cash < 0.0) st.cash = 0.0;  // rounding on a full-cash buy
        st.shares += qty;
        return Trade{date, Action::Buy, qty, price, st.cash, fee};
    }
    if (a == Action::Sell && st.shares > 0.0) {
        double qty = profile.sell_fraction == 1.0 ? st.shares : profile.sell_fraction * st.shares;
        if (options.whole_shares) qty = std::floor(qty);
        if (qty <= 0.0) return std::nullopt;
        double proceeds = qty * price;
        double fee = options.cost ? std::min(options.cost(Action::Sell, proceeds), proceeds) : 0.0;
        st.cash += proceeds - fee;
        st.shares -= qty;
        return Trade{date, Action::Sell, qty, price, st.cash, fee};
    }
    return std::nullopt;
}

SimulationResult simulate(const std::vector<DatedAction>& decisions, std::span<const PriceBar> prices,
                          const RiskProfile& profile, double initial, const SimulationOptions& options) {
    if (!(initial > 0.0) || !std::isfinite(initial)) throw Error(Errc::InvalidArgument, "initial capital must be > 0");
    if (prices.empty()) throw Error(Errc::EmptyInput, "no prices to simulate");
    auto in_range = [](double f) { return f > 0.0 && f <= 1.0; };
    if (!in_range(profile.buy_fraction) || !in_range(profile.sell_fraction)) {
        throw Error(Errc::InvalidProfile, "profile fractions must lie in (0, 1]");
    }

    std::map<Date, Action> by_date;
    bool any_trade_requested = false;
    for (const auto& d : decisions) {
        auto it = std::lower_bound(prices.begin(), prices.end(), d.date,
                                   [](const PriceBar& b, const Date& x) { return b.date < x; });
        if (it == prices.end() || it->date != d.date) {
            throw Error(Errc::DecisionOutsideCalendar, "decision dated " + d.date.iso() + " has no price bar");
        }
        by_date[d.date] = d.action;
        any_trade_requested = any_trade_requested || d.action != Action::Hold;
    }

    SimulationResult res;
    auto& st = res.final_state;
    st.cash = initial;
    res.curve.points.push_back({prices.front().date, initial});
    for (const auto& bar : prices) {
        auto it = by_date.find(bar.date);
        Action a = it == by_date.end() ? Action::Hold : it->second;
        if (auto t = execute_action(st, bar.date, a, bar.close, profile, options)) res.trades.push_back(*t);
        res.curve.points.push_back({bar.date, st.equity(bar.close)});
    }
    res.infeasible = any_trade_requested && res.trades.empty();
    return res;
}

std::uint64_t uniform_index(std::uint64_t n, std::mt19937_64& rng) {
    if (n == 0) throw Error(Errc::InvalidArgument, "empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

std::vector<DatedAction> strategy_random(std::span<const Date> calendar, std::uint64_t seed) {
    static constexpr Action choices[] = {Action::Buy, Action::Sell, Action::Hold};
    std::mt19937_64 rng(seed);
    std::vector<DatedAction> out;
    for (const auto& d : calendar) out.push_back({d, choices[uniform_index(3, rng)]});
    return out;
}

std::vector<DatedAction> strategy_brsf(std::span<const PriceBar> prices, int streak) {
    if (streak < 1) throw Error(Errc::InvalidArgument, "streak must be >= 1");
    std::vector<DatedAction> out;
    int up = 0, down = 0;
    for (std::size_t i = 0; i < prices.size(); ++i) {
        if (i > 0) {
            double prev = prices[i - 1].close, cur = prices[i].close;
            if (cur > prev) {
                ++up;
                down = 0;
            } else if (cur < prev) {
                ++down;
                up = 0;
            } else {
                up = down = 0;
            }
        }
        Action a = up >= streak ? Action::Buy : down >= streak ? Action::Sell : Action::Hold;
        out.push_back({prices[i].date, a});
    }
    return out;
}

std::vector<DatedAction> strategy_from_predictions(
    const std::vector<std::pair<Date, std::optional<Trend>>>& predictions) {
    std::vector<DatedAction> out;
    for (const auto& [d, t] : predictions) {
        out.push_back({d, !t ? Action::Hold : *t == Trend::Up ? Action::Buy : Action::Sell});
    }
    return out;
}

std::vector<DatedAction> strategy_from_signals(const std::vector<AgentSignal>& signals) {
    std::vector<std::pair<Date, std::optional<Trend>>> preds;
    for (const auto& s : signals) preds.emplace_back(s.date, s.trend);
    return strategy_from_predictions(preds);
}

std::string serialize_decisions(const std::vector<DatedAction>& decisions) {
    std::string out = "date,action\n";
    for (const auto& d : decisions) out += d.date.iso() + "," + std::string(to_string(d.action)) + "\n";
    return out;
}

std::vector<DatedAction> parse_decisions(std::string_view csv) {
    std::vector<DatedAction> out;
    std::size_t pos = 0, line_no = 0;
    bool header = true;
    while (pos < csv.size()) {
        auto nl = csv.find('\n', pos);
        std::string line{csv.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos)};
        pos = nl == std::string_view::npos ? csv.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "date,action") throw MalformedRow(line_no, "expected header 'date,action'");
            continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) throw MalformedRow(line_no, "expected two fields");
        auto d = Date::parse_iso(line.substr(0, comma));
        if (!d) throw MalformedRow(line_no, "bad date");
        try {
            out.push_back({*d, parse_action(line.substr(comma + 1))});
        } catch (const Error& e) {
            throw MalformedRow(line_no, e.what());
        }
    }
    return out;
}

namespace {

void check_pair(const std::vector<Trend>& pred, const std::vector<Trend>& actual) {
    if (pred.size() != actual.size()) throw Error(Errc::InvalidArgument, "prediction and actual lengths differ");
    if (pred.empty()) throw Error(Errc::EmptyInput, "no predictions to score");
}

double f1_for(const std::vector<Trend>& pred, const std::vector<Trend>& actual, Trend positive) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] == positive, a = actual[i] == positive;
        tp += p && a;
        fp += p && !a;
        fn += !p && a;
    }
    double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace

double accuracy(const std::vector<Trend>& pred, const std::vector<Trend>& actual) {
    check_pair(pred, actual);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == actual[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1(const std::vector<Trend>& pred, const std::vector<Trend>& actual, Trend positive, F1Average average) {
    check_pair(pred, actual);
    switch (average) {
        case F1Average::Positive: return f1_for(pred, actual, positive);
        case F1Average::Macro: return 0.5 * (f1_for(pred, actual, Trend::Up) + f1_for(pred, actual, Trend::Down));
        case F1Average::Weighted: {
            double up = static_cast<double>(std::count(actual.begin(), actual.end(), Trend::Up));
            double n = static_cast<double>(actual.size());
            return (up * f1_for(pred, actual, Trend::Up) + (n - up) * f1_for(pred, actual, Trend::Down)) / n;
        }
    }
    return 0.0;
}

double annualized_return(const EquityCurve& curve, double days_per_year) {
    if (curve.points.empty()) throw Error(Errc::EmptyInput, "empty equity curve");
    const std::size_t n = curve.points.size() - 1;
    if (n == 0) return 0.0;
    double ratio = curve.points.back().equity / curve.points.front().equity;
    return std::pow(ratio, days_per_year / static_cast<double>(n)) - 1.0;
}

double sharpe(const EquityCurve& curve, double rf, double days_per_year) {
    auto r = curve.returns();
    if (r.size() < 2) throw Error(Errc::DegenerateSeries, "need at least two returns");
    const double n = static_cast<double>(r.size());
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0 || sd <= 1e-12 * std::abs(mean)) throw Error(Errc::DegenerateSeries, "returns have zero variance");
    return (mean - rf / days_per_year) / sd * std::sqrt(days_per_year);
}

double max_drawdown(const EquityCurve& curve) {
    double peak = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (const auto& p : curve.points) {
        peak = std::max(peak, p.equity);
        if (peak > 0.0) worst = std::max(worst, (peak - p.equity) / peak);
    }
    return worst;
}

}  // namespace quorum
