#include "quorum/forecast.hpp"

#include <cfloat>
#include <cmath>

#include "quorum/optimizer.hpp"
#include "quorum/parallel.hpp"

namespace quorum {

Json to_json(const ArimaSpec& s) {
    return {{"p", s.p},          {"d", s.d},         {"q", s.q},     {"intercept", s.intercept},
            {"phi", s.phi},      {"theta", s.theta}, {"sigma2", s.sigma2}, {"css", s.css},
            {"n_obs", s.n_obs},  {"aic", s.aic},     {"bic", s.bic}};
}

ArimaSpec arima_spec_from_json(const Json& j) {
    ArimaSpec s;
    try {
        s.p = j.at("p").get<int>();
        s.d = j.at("d").get<int>();
        s.q = j.at("q").get<int>();
        s.intercept = j.value("intercept", 0.0);
        s.phi = j.value("phi", std::vector<double>{});
        s.theta = j.value("theta", std::vector<double>{});
        s.sigma2 = j.value("sigma2", 0.0);
        s.css = j.value("css", 0.0);
        s.n_obs = j.value("n_obs", std::size_t{0});
        s.aic = j.value("aic", 0.0);
        s.bic = j.value("bic", 0.0);
    } catch (const Json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("bad ARIMA spec: ") + e.what());
    }
    if (s.p < 0 || s.d < 0 || s.q < 0 || s.phi.size() != static_cast<std::size_t>(s.p) ||
        s.theta.size() != static_cast<std::size_t>(s.q)) {
        throw Error(Errc::InvalidArgument, "ARIMA spec orders do not match coefficient counts");
    }
    return s;
}

std::vector<double> difference(std::span<const double> x, int d) {
    if (d < 0) throw Error(Errc::InvalidArgument, "differencing order must be >= 0");
    std::vector<double> cur(x.begin(), x.end());
    for (int k = 0; k < d; ++k) {
        if (cur.size() < 2) throw Error(Errc::TooShort, "series too short to difference");
        std::vector<double> next(cur.size() - 1);
        for (std::size_t i = 0; i + 1 < cur.size(); ++i) next[i] = cur[i + 1] - cur[i];
        cur = std::move(next);
    }
    return cur;
}

std::vector<double> integrate(std::span<const double> diffs, std::span<const double> head) {
    std::vector<double> cur(diffs.begin(), diffs.end());
    for (std::size_t k = head.size(); k-- > 0;) {
        std::vector<double> up(cur.size() + 1);
        up[0] = head[k];
        for (std::size_t i = 0; i < cur.size(); ++i) up[i + 1] = up[i] + cur[i];
        cur = std::move(up);
    }
    return cur;
}

std::vector<double> css_residuals(const ArimaSpec& spec, std::span<const double> w, std::size_t start) {
    if (start < static_cast<std::size_t>(spec.p)) throw Error(Errc::InvalidArgument, "residual start before p");
    std::vector<double> e(w.size(), 0.0);
    for (std::size_t t = start; t < w.size(); ++t) {
        double v = w[t] - spec.intercept;
        for (int i = 1; i <= spec.p; ++i) v -= spec.phi[i - 1] * w[t - i];
        for (int j = 1; j <= spec.q; ++j) {
            if (t >= start + static_cast<std::size_t>(j)) v -= spec.theta[j - 1] * e[t - j];
        }
        e[t] = v;
    }
    return e;
}

namespace {

void check_series(std::span<const double> series, int d) {
    for (double v : series) {
        if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "series contains a non-finite value");
    }
    if (series.size() < static_cast<std::size_t>(30 + d)) {
        throw Error(Errc::TooShort, "need at least " + std::to_string(30 + d) + " observations, got " +
                                        std::to_string(series.size()));
    }
}

/// Conditional sum of squares and its gradient for x = (c, phi..., theta...).
double css_objective(std::span<const double> w, std::size_t start, int p, int q, const std::vector<double>& x,
                     std::vector<double>* grad) {
    const std::size_t K = 1 + static_cast<std::size_t>(p + q);
    const double c = x[0];
    const double* phi = x.data() + 1;
    const double* theta = x.data() + 1 + p;
    const std::size_t m = w.size();
    std::vector<double> e(m, 0.0);
    std::vector<double> de;
    if (grad) {
        de.assign(m * K, 0.0);
        grad->assign(K, 0.0);
    }
    double css = 0.0;
    for (std::size_t t = start; t < m; ++t) {
        double v = w[t] - c;
        for (int i = 1; i <= p; ++i) v -= phi[i - 1] * w[t - i];
        for (int j = 1; j <= q; ++j) {
            if (t >= start + static_cast<std::size_t>(j)) v -= theta[j - 1] * e[t - j];
        }
        e[t] = v;
        css += v * v;
        if (!grad) continue;
        double* dt = de.data() + t * K;
        dt[0] = -1.0;
        for (int i = 1; i <= p; ++i) dt[i] = -w[t - i];
        for (int j = 1; j <= q; ++j) {
            if (t >= start + static_cast<std::size_t>(j)) dt[p + j] = -e[t - j];
        }
        for (int j = 1; j <= q; ++j) {
            if (t < start + static_cast<std::size_t>(j)) continue;
            const double* prev = de.data() + (t - j) * K;
            for (std::size_t k = 0; k < K; ++k) dt[k] -= theta[j - 1] * prev[k];
        }
        for (std::size_t k = 0; k < K; ++k) (*grad)[k] += 2.0 * v * dt[k];
    }
    return css;
}

void score(ArimaSpec& s) {
    const double n = static_cast<double>(s.n_obs);
    const double k = static_cast<double>(s.p + s.q + 1);
    s.sigma2 = std::max(s.css / n, DBL_MIN);
    const double ll = n * std::log(s.sigma2);
    s.aic = 2.0 * k + ll;
    s.bic = k * std::log(n) + ll;
}

}  // namespace

ArimaSpec fit_arima_order(std::span<const double> series, int p, int d, int q, std::size_t start) {
    if (p < 0 || q < 0 || p > 5 || q > 5) throw Error(Errc::InvalidArgument, "orders must lie in [0, 5]");
    check_series(series, d);
    auto w = difference(series, d);
    start = std::max(start, static_cast<std::size_t>(p));
    if (w.size() <= start + static_cast<std::size_t>(p + q + 2)) throw Error(Errc::TooShort, "too few residuals");

    Objective f = [&](const std::vector<double>& x, std::vector<double>* g) {
        return css_objective(w, start, p, q, x, g);
    };
    auto opt = minimize_bfgs(f, std::vector<double>(static_cast<std::size_t>(1 + p + q), 0.0));
    if (opt.diverged) {
        throw Error(Errc::OptimizerDiverged, "ARIMA(" + std::to_string(p) + "," + std::to_string(d) + "," +
                                                 std::to_string(q) + ") optimizer diverged");
    }
    ArimaSpec s;
    s.p = p;
    s.d = d;
    s.q = q;
    s.intercept = opt.x[0];
    s.phi.assign(opt.x.begin() + 1, opt.x.begin() + 1 + p);
    s.theta.assign(opt.x.begin() + 1 + p, opt.x.end());
    s.css = opt.value;
    s.n_obs = w.size() - start;
    s.objective_trace = std::move(opt.trace);
    score(s);
    return s;
}

ArimaFit fit_arima_grid(std::span<const double> series, int d, int p_max, int q_max, unsigned threads) {
    if (p_max < 0 || q_max < 0 || p_max > 5 || q_max > 5) {
        throw Error(Errc::InvalidArgument, "grid bounds must lie in [0, 5]");
    }
    check_series(series, d);
    const std::size_t cols = static_cast<std::size_t>(q_max + 1);
    const std::size_t cells = static_cast<std::size_t>(p_max + 1) * cols;
    std::vector<std::optional<ArimaSpec>> specs(cells);
    ArimaFit fit;
    fit.grid.resize(cells);
    parallel_for(cells, threads, [&](std::size_t i) {
        auto& cell = fit.grid[i];
        cell.p = static_cast<int>(i / cols);
        cell.q = static_cast<int>(i % cols);
        try {
            specs[i] = fit_arima_order(series, cell.p, d, cell.q, static_cast<std::size_t>(p_max));
            cell.fitted = true;
            cell.aic = specs[i]->aic;
            cell.bic = specs[i]->bic;
            cell.css = specs[i]->css;
        } catch (const Error& e) {
            if (e.code() != Errc::OptimizerDiverged) throw;
            cell.note = e.what();
        }
    });

    const ArimaSpec* best = nullptr;
    for (const auto& s : specs) {
        if (!s) continue;
        if (!best || s->aic < best->aic ||
            (s->aic == best->aic &&
             (s->p + s->q < best->p + best->q || (s->p + s->q == best->p + best->q && s->p < best->p)))) {
            best = &*s;
        }
    }
    if (!best) throw Error(Errc::OptimizerDiverged, "no ARIMA order could be fitted");
    fit.spec = *best;
    return fit;
}

ArimaSpec fit_arima(std::span<const double> series, int d, int p_max, int q_max, unsigned threads) {
    return fit_arima_grid(series, d, p_max, q_max, threads).spec;
}

std::vector<double> forecast_arima(const ArimaSpec& spec, std::span<const double> history, int h) {
    if (h < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
    if (spec.phi.size() != static_cast<std::size_t>(spec.p) || spec.theta.size() != static_cast<std::size_t>(spec.q)) {
        throw Error(Errc::InvalidArgument, "ARIMA spec orders do not match coefficient counts");
    }
    for (double v : history) {
        if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "history contains a non-finite value");
    }
    if (history.size() < static_cast<std::size_t>(spec.d + spec.p + 1)) {
        throw Error(Errc::TooShort, "history too short for the model order");
    }

    // Last value of every differencing level, for integration.
    std::vector<double> lasts;
    std::vector<double> level(history.begin(), history.end());
    for (int k = 0; k < spec.d; ++k) {
        lasts.push_back(level.back());
        level = difference(level, 1);
    }
    std::vector<double> w = std::move(level);
    const std::size_t m = w.size();
    // Residuals start where the fit started them, so the fitted recursion is
    // replayed exactly on the fitting sample.
    std::size_t e_start = static_cast<std::size_t>(spec.p);
    if (spec.n_obs > 0 && spec.n_obs <= m) e_start = std::max(e_start, m - spec.n_obs);
    std::vector<double> e = css_residuals(spec, w, e_start);

    std::vector<double> out;
    for (int k = 0; k < h; ++k) {
        const std::size_t t = m + static_cast<std::size_t>(k);
        double v = spec.intercept;
        for (int i = 1; i <= spec.p; ++i) v += spec.phi[i - 1] * w[t - i];
        for (int j = 1; j <= spec.q; ++j) {
            if (t >= e_start + static_cast<std::size_t>(j)) v += spec.theta[j - 1] * e[t - j];
        }
        w.push_back(v);
        e.push_back(0.0);
        out.push_back(v);
    }
    for (std::size_t k = lasts.size(); k-- > 0;) {
        double acc = lasts[k];
        for (auto& v : out) {
            acc += v;
            v = acc;
        }
    }
    for (double v : out) {
        if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "forecast is not finite");
    }
    return out;
}

std::vector<double> forecast_drift(std::span<const double> history, int h) {
    if (history.empty()) throw Error(Errc::EmptyInput, "empty history");
    if (h < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
    const double last = history.back();
    const double drift =
        history.size() > 1 ? (last - history.front()) / static_cast<double>(history.size() - 1) : 0.0;
    std::vector<double> out;
    for (int i = 1; i <= h; ++i) out.push_back(last + i * drift);
    return out;
}

namespace {

std::vector<double> closes_of(std::span<const PriceBar> bars) {
    std::vector<double> out;
    out.reserve(bars.size());
    for (const auto& b : bars) out.push_back(b.close);
    return out;
}

}  // namespace

PriceForecast forecast_at(const PriceSeries& series, const Date& origin, int h, Forecaster& forecaster) {
    auto history = series.through(origin);
    if (history.empty()) throw Error(Errc::EmptyInput, "no bars on or before " + origin.iso());
    return {series.ticker, history.back().date, h, forecaster.forecast(history, h)};
}

std::vector<double> ArimaForecaster::forecast(std::span<const PriceBar> history, int h) {
    auto closes = closes_of(history);
    auto spec = fit_arima(closes, d_, p_max_, q_max_, threads_);
    return forecast_arima(spec, closes, h);
}

std::vector<double> DriftForecaster::forecast(std::span<const PriceBar> history, int h) {
    return forecast_drift(closes_of(history), h);
}

Json RemoteForecaster::request_body(std::span<const PriceBar> history, int h) {
    Json series = Json::array();
    for (const auto& b : history) {
        series.push_back({{"date", b.date.iso()}, {"open", b.open}, {"high", b.high}, {"low", b.low}, {"close", b.close}});
    }
    return {{"kind", "forecast"}, {"h", h}, {"series", std::move(series)}, {"covariates", {"open", "high", "low"}}};
}

std::vector<double> RemoteForecaster::forecast(std::span<const PriceBar> history, int h) {
    if (h < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
    const Json request = request_body(history, h);
    const std::string fp = fingerprint(request);
    Json response;
    std::optional<Json> hit = cassette_ ? cassette_->find(fp) : std::nullopt;
    if (mode_ == LlmMode::Replay) {
        if (!hit) throw CassetteMiss(fp);
        response = *hit;
    } else if (mode_ == LlmMode::Record && hit) {
        response = *hit;
    } else {
        response = post_json(endpoint_, request, key_);
        if (mode_ == LlmMode::Record && cassette_) cassette_->put(fp, request, response);
    }
    std::vector<double> values;
    try {
        values = response.at("values").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw ProviderError(200, std::string("forecast response without values: ") + e.what(), false);
    }
    if (values.size() != static_cast<std::size_t>(h)) throw ProviderError(200, "forecast length mismatch", false);
    for (double v : values) {
        if (!std::isfinite(v)) throw ProviderError(200, "forecast is not finite", false);
    }
    return values;
}

std::unique_ptr<Forecaster> make_forecaster(const std::string& kind, int d, int p_max, int q_max, unsigned threads,
                                            std::shared_ptr<Cassette> cassette, LlmMode mode) {
    if (kind == "arima") return std::make_unique<ArimaForecaster>(d, p_max, q_max, threads);
    if (kind == "drift") return std::make_unique<DriftForecaster>();
    if (kind == "remote") {
        const char* url = std::getenv("QUORUM_FORECAST_ENDPOINT");
        const char* key = std::getenv("QUORUM_FORECAST_API_KEY");
        return std::make_unique<RemoteForecaster>(url ? url : "", key ? key : "", std::move(cassette), mode);
    }
    throw Error(Errc::ConfigError, "unknown forecaster '" + kind + "'");
}

}  // namespace quorum
