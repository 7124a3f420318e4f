#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "quorum/llm_gateway.hpp"
#include "quorum/market_data.hpp"

namespace quorum {

struct PriceForecast {
    std::string ticker;
    Date origin;
    int horizon = 0;
    std::vector<double> values;  // closes for the next `horizon` trading days
};

struct ArimaSpec {
    int p = 0;
    int d = 0;
    int q = 0;
    double intercept = 0.0;
    std::vector<double> phi;
    std::vector<double> theta;
    double sigma2 = 0.0;
    double css = 0.0;
    std::size_t n_obs = 0;  // residuals in the CSS
    double aic = 0.0;
    double bic = 0.0;
    std::vector<double> objective_trace;  // CSS after every accepted optimizer step
};

Json to_json(const ArimaSpec& spec);
ArimaSpec arima_spec_from_json(const Json& j);

struct GridCell {
    int p = 0;
    int q = 0;
    bool fitted = false;
    std::string note;  // why the cell was skipped
    double aic = 0.0;
    double bic = 0.0;
    double css = 0.0;
};

struct ArimaFit {
    ArimaSpec spec;
    std::vector<GridCell> grid;  // row-major over p then q
};

std::vector<double> difference(std::span<const double> x, int d);

/// Inverse of `difference`: `head[k]` is the first value of the k-times
/// differenced series, k = 0..d-1.
std::vector<double> integrate(std::span<const double> diffs, std::span<const double> head);

/// Innovations e_t for t >= start of the differenced series `w`, with
/// pre-sample innovations set to zero.
std::vector<double> css_residuals(const ArimaSpec& spec, std::span<const double> w, std::size_t start);

/// CSS fit of one fixed order. `start` is the first residual index of the
/// differenced series (the grid uses p-max for every cell).
ArimaSpec fit_arima_order(std::span<const double> series, int p, int d, int q, std::size_t start);

/// Grid search over p in [0,p_max], q in [0,q_max] by AIC = 2k + n ln(CSS/n),
/// k = p + q + 1; ties go to smaller p+q, then smaller p.
ArimaFit fit_arima_grid(std::span<const double> series, int d, int p_max, int q_max, unsigned threads = 1);
ArimaSpec fit_arima(std::span<const double> series, int d, int p_max, int q_max, unsigned threads = 1);

/// Recursive h-step forecast of the original series; future innovations are
/// zero. Residuals over the differenced `history` start at index
/// max(p, len - n_obs), which is where the fit started them when `history` is
/// the fitting sample.
std::vector<double> forecast_arima(const ArimaSpec& spec, std::span<const double> history, int h);

/// last + i * mean daily change.
std::vector<double> forecast_drift(std::span<const double> history, int h);

/// A forecaster only ever receives bars dated on or before the origin.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> forecast(std::span<const PriceBar> history, int h) = 0;
};

PriceForecast forecast_at(const PriceSeries& series, const Date& origin, int h, Forecaster& forecaster);

class ArimaForecaster : public Forecaster {
public:
    ArimaForecaster(int d, int p_max, int q_max, unsigned threads = 1) : d_(d), p_max_(p_max), q_max_(q_max), threads_(threads) {}
    std::string name() const override { return "arima"; }
    std::vector<double> forecast(std::span<const PriceBar> history, int h) override;

private:
    int d_, p_max_, q_max_;
    unsigned threads_;
};

class DriftForecaster : public Forecaster {
public:
    std::string name() const override { return "drift"; }
    std::vector<double> forecast(std::span<const PriceBar> history, int h) override;
};

/// External forecasting service taking open/high/low as covariates.
/// Requests and responses go through the cassette like LLM calls.
class RemoteForecaster : public Forecaster {
public:
    RemoteForecaster(std::string endpoint, std::string api_key, std::shared_ptr<Cassette> cassette, LlmMode mode)
        : endpoint_(std::move(endpoint)), key_(std::move(api_key)), cassette_(std::move(cassette)), mode_(mode) {}
    std::string name() const override { return "remote"; }
    std::vector<double> forecast(std::span<const PriceBar> history, int h) override;

    static Json request_body(std::span<const PriceBar> history, int h);

private:
    std::string endpoint_;
    std::string key_;
    std::shared_ptr<Cassette> cassette_;
    LlmMode mode_;
};

std::unique_ptr<Forecaster> make_forecaster(const std::string& kind, int d, int p_max, int q_max, unsigned threads,
                                            std::shared_ptr<Cassette> cassette, LlmMode mode);

}  // namespace quorum
