#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "quorum/forecast.hpp"

using namespace quorum;

namespace {

std::vector<double> ar1_series(double phi, double c, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x{c / (1 - phi)};
    while (x.size() < n) x.push_back(c + phi * x.back() + noise(rng));
    return x;
}

std::vector<double> price_walk(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.05, 1.0);
    std::vector<double> x{100.0};
    while (x.size() < n) x.push_back(x.back() + noise(rng));
    return x;
}

}  // namespace

TEST(Differencing, RoundTrip) {
    std::vector<double> x{3, 5, 4, 8, 13, 12};
    auto w1 = difference(x, 1);
    EXPECT_EQ(w1, (std::vector<double>{2, -1, 4, 5, -1}));
    auto w2 = difference(x, 2);
    EXPECT_EQ(w2, (std::vector<double>{-3, 5, 1, -6}));
    std::vector<double> head{x[0], w1[0]};
    EXPECT_EQ(integrate(w2, head), x);
    EXPECT_EQ(difference(x, 0), x);
    EXPECT_THROW(difference(std::vector<double>{1.0}, 1), Error);
}

TEST(CssResiduals, HandRecursion) {
    ArimaSpec s;
    s.p = 1;
    s.q = 1;
    s.intercept = 0.5;
    s.phi = {0.4};
    s.theta = {-0.3};
    std::vector<double> w{1.0, 2.0, 0.0, 1.5};
    auto e = css_residuals(s, w, 1);
    double e1 = 2.0 - 0.5 - 0.4 * 1.0;
    double e2 = 0.0 - 0.5 - 0.4 * 2.0 + 0.3 * e1;
    double e3 = 1.5 - 0.5 - 0.4 * 0.0 + 0.3 * e2;
    EXPECT_DOUBLE_EQ(e[0], 0.0);
    EXPECT_NEAR(e[1], e1, 1e-15);
    EXPECT_NEAR(e[2], e2, 1e-15);
    EXPECT_NEAR(e[3], e3, 1e-15);
    EXPECT_THROW(css_residuals(s, w, 0), Error);
}

TEST(ArimaFit, WhiteNoiseInterceptIsTheMean) {
    auto x = price_walk(80, 4);
    auto s = fit_arima_order(x, 0, 1, 0, 0);
    auto w = difference(x, 1);
    double mean = 0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double css = 0;
    for (double v : w) css += (v - mean) * (v - mean);
    EXPECT_NEAR(s.intercept, mean, 1e-7);
    EXPECT_NEAR(s.css, css, 1e-7 * css);
    EXPECT_EQ(s.n_obs, w.size());
    const double n = static_cast<double>(s.n_obs);
    EXPECT_NEAR(s.aic, 2.0 + n * std::log(s.css / n), 1e-9);
    EXPECT_NEAR(s.bic, std::log(n) + n * std::log(s.css / n), 1e-9);
}

TEST(ArimaFit, PureArMatchesLeastSquares) {
    auto x = ar1_series(0.6, 1.0, 300, 17);
    auto s = fit_arima_order(x, 1, 0, 0, 1);
    // Ordinary least squares of x_t on (1, x_{t-1}).
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t t = 1; t < x.size(); ++t) {
        sx += x[t - 1];
        sy += x[t];
        sxx += x[t - 1] * x[t - 1];
        sxy += x[t - 1] * x[t];
        ++n;
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double icept = (sy - slope * sx) / n;
    EXPECT_NEAR(s.phi[0], slope, 1e-6);
    EXPECT_NEAR(s.intercept, icept, 1e-5);
    for (std::size_t i = 1; i < s.objective_trace.size(); ++i) {
        EXPECT_LE(s.objective_trace[i], s.objective_trace[i - 1]);
    }
}

TEST(ArimaFit, Validation) {
    auto x = price_walk(20, 1);
    EXPECT_THROW(fit_arima_order(x, 1, 1, 0, 1), Error);
    auto y = price_walk(60, 1);
    y[10] = std::nan("");
    try {
        fit_arima_order(y, 1, 1, 0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonFiniteInput);
    }
    EXPECT_THROW(fit_arima_order(price_walk(60, 1), 6, 1, 0, 6), Error);
    EXPECT_THROW(fit_arima_grid(price_walk(60, 1), 1, 6, 0), Error);
}

TEST(ArimaGrid, SelectsMinimumAicDeterministically) {
    auto x = price_walk(120, 9);
    auto one = fit_arima_grid(x, 1, 3, 3, 1);
    auto four = fit_arima_grid(x, 1, 3, 3, 4);
    ASSERT_EQ(one.grid.size(), 16u);
    EXPECT_EQ(to_json(one.spec).dump(), to_json(four.spec).dump());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : one.grid) {
        if (c.fitted) best = std::min(best, c.aic);
    }
    EXPECT_DOUBLE_EQ(one.spec.aic, best);
    // Every cell is scored on the residual window that starts at p-max.
    EXPECT_EQ(one.spec.n_obs, x.size() - 1 - 3);
}

TEST(ArimaForecast, ConstantAndDriftCases) {
    ArimaSpec s;
    s.d = 1;
    s.intercept = 0.5;
    std::vector<double> hist(40, 10.0);
    auto f = forecast_arima(s, hist, 3);
    EXPECT_EQ(f, (std::vector<double>{10.5, 11.0, 11.5}));
    s.intercept = 0.0;
    s.d = 0;
    s.p = 1;
    s.phi = {0.5};
    std::vector<double> lvl{4.0, 2.0};
    EXPECT_EQ(forecast_arima(s, lvl, 2), (std::vector<double>{1.0, 0.5}));
    EXPECT_THROW(forecast_arima(s, lvl, 0), Error);
}

TEST(ArimaSpec, JsonRoundTrip) {
    auto s = fit_arima_order(price_walk(60, 3), 1, 1, 1, 1);
    auto back = arima_spec_from_json(to_json(s));
    EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
    EXPECT_EQ(forecast_arima(back, price_walk(60, 3), 4), forecast_arima(s, price_walk(60, 3), 4));
    auto bad = to_json(s);
    bad["phi"] = Json::array();
    EXPECT_THROW(arima_spec_from_json(bad), Error);
}

TEST(Drift, LastPlusMeanChange) {
    std::vector<double> h{10, 12, 11, 16};
    EXPECT_EQ(forecast_drift(h, 2), (std::vector<double>{18, 20}));
    EXPECT_EQ(forecast_drift(std::vector<double>{7}, 1), (std::vector<double>{7}));
    EXPECT_THROW(forecast_drift(std::vector<double>{}, 1), Error);
}

TEST(ForecastAt, SeesOnlyTheHistory) {
    class Spy : public Forecaster {
    public:
        std::size_t seen = 0;
        Date last;
        std::string name() const override { return "spy"; }
        std::vector<double> forecast(std::span<const PriceBar> h, int n) override {
            seen = h.size();
            last = h.back().date;
            return std::vector<double>(static_cast<std::size_t>(n), 1.0);
        }
    } spy;
    PriceSeries s{"X", Market::US, {}};
    for (int i = 0; i < 10; ++i) s.bars.push_back({Date{2024, 1, 1}.plus_days(i), 1, 1, 1, 1, 1});
    auto f = forecast_at(s, Date{2024, 1, 5}, 2, spy);
    EXPECT_EQ(spy.seen, 5u);
    EXPECT_EQ(spy.last, (Date{2024, 1, 5}));
    EXPECT_EQ(f.values.size(), 2u);
    EXPECT_THROW(forecast_at(s, Date{2023, 1, 1}, 2, spy), Error);
}

TEST(Forecasters, FactoryAndReplayMiss) {
    EXPECT_EQ(make_forecaster("arima", 1, 2, 2, 1, nullptr, LlmMode::Replay)->name(), "arima");
    EXPECT_EQ(make_forecaster("drift", 1, 2, 2, 1, nullptr, LlmMode::Replay)->name(), "drift");
    EXPECT_THROW(make_forecaster("oracle", 1, 2, 2, 1, nullptr, LlmMode::Replay), Error);
    auto cassette = std::make_shared<Cassette>(CassetteMode::Replay);
    RemoteForecaster remote("http://127.0.0.1:1/forecast", "", cassette, LlmMode::Replay);
    std::vector<PriceBar> bars{{Date{2024, 1, 2}, 1, 1, 1, 1, 1}};
    EXPECT_THROW(remote.forecast(bars, 1), CassetteMiss);
    auto body = RemoteForecaster::request_body(bars, 3);
    EXPECT_EQ(body["h"], 3);
    EXPECT_EQ(body["series"][0]["close"], 1.0);
}
