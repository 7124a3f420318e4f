// Command-line entry points: batch runs and the session service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "quorum/experiment.hpp"
#include "quorum/forecast.hpp"
#include "quorum/service.hpp"

using namespace quorum;

namespace {

struct Globals {
    std::string llm_mode;
    std::string cassette;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

void apply_globals(ExperimentConfig& c, const Globals& g) {
    if (!g.llm_mode.empty()) c.llm_mode = parse_llm_mode(g.llm_mode);
    if (!g.cassette.empty()) c.cassette = g.cassette;
    if (g.seed) c.seed = *g.seed;
    if (g.threads) c.threads = g.threads;
}

/// Record-mode runs keep what they captured.
void save_context(const ExperimentConfig& c, const RunContext& ctx) {
    if (c.llm_mode == LlmMode::Record && !c.cassette.empty()) ctx.cassette->save(c.cassette);
    if (!c.search_cache.empty()) ctx.cache->save(c.search_cache);
}

Json error_json(const std::exception& e) {
    if (const auto* q = dynamic_cast<const Error*>(&e)) return {{"code", to_string(q->code())}, {"message", e.what()}};
    return {{"code", "Internal"}, {"message", e.what()}};
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quorum: human-agent stock trend prediction"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--llm-mode", g.llm_mode, "record | replay | live")->check(CLI::IsMember({"record", "replay", "live"}));
    app.add_option("--cassette", g.cassette, "cassette file");
    app.add_option("--seed", g.seed, "seed override");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "clean and cluster news; writes representatives as JSON-lines");
    std::string pre_prices, pre_news, pre_rules, pre_out;
    std::size_t pre_k = 2;
    bool pre_no_reflect = false;
    pre->add_option("--prices", pre_prices)->required();
    pre->add_option("--news", pre_news)->required();
    pre->add_option("--rules", pre_rules);
    pre->add_option("--k", pre_k);
    pre->add_flag("--no-reflect", pre_no_reflect);
    pre->add_option("--out", pre_out, "output file (stdout when omitted)");

    // fit-arima
    auto* fit = app.add_subcommand("fit-arima", "fit ARIMA(p,d,q) by CSS with AIC selection");
    std::string fit_prices, fit_origin;
    int fit_d = 2, fit_p = 5, fit_q = 5, fit_h = 1;
    fit->add_option("--prices", fit_prices)->required();
    fit->add_option("--origin", fit_origin, "last date used for fitting");
    fit->add_option("--d", fit_d);
    fit->add_option("--p-max", fit_p);
    fit->add_option("--q-max", fit_q);
    fit->add_option("--horizon", fit_h);
    fit->add_option("--threads", g.threads);

    // predict
    auto* pred = app.add_subcommand("predict", "agent signals and the expert decision for one day");
    std::string pred_config, pred_ticker, pred_date, pred_profile = "Cons", pred_attitude = "none";
    pred->add_option("--config", pred_config)->required();
    pred->add_option("--ticker", pred_ticker);
    pred->add_option("--date", pred_date)->required();
    pred->add_option("--profile", pred_profile);
    pred->add_option("--attitude", pred_attitude);

    // backtest
    auto* bt = app.add_subcommand("backtest", "simulate decisions on a price file");
    std::string bt_prices, bt_decisions, bt_profile = "Cons";
    double bt_initial = 100000.0;
    bt->add_option("--prices", bt_prices)->required();
    bt->add_option("--decisions", bt_decisions, "CSV date,action")->required();
    bt->add_option("--profile", bt_profile);
    bt->add_option("--initial", bt_initial);

    // experiment run
    auto* exp = app.add_subcommand("experiment", "batch experiments");
    exp->require_subcommand(1);
    auto* run = exp->add_subcommand("run", "run a configured experiment");
    std::string run_config, run_out;
    run->add_option("--config", run_config)->required();
    run->add_option("--out", run_out);
    run->add_option("--threads", g.threads);

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    std::string serve_config, serve_state, serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve->add_option("--config", serve_config)->required();
    serve->add_option("--port", serve_port);
    serve->add_option("--host", serve_host);
    serve->add_option("--state-dir", serve_state);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*pre) {
            ExperimentConfig c;
            c.rag = RagMode::Off;
            c.reflect = !pre_no_reflect;
            c.news_k = pre_k;
            TickerInputs in{ticker_from_path(pre_prices), pre_prices, pre_news, {}};
            c.tickers = {in};
            if (!pre_rules.empty()) c.rules = pre_rules;
            apply_globals(c, g);
            auto ctx = make_run_context(c);
            auto t = prepare_ticker(c, in, ctx);
            auto text = serialize_representatives(t.preprocess.representatives);
            if (pre_out.empty()) {
                std::cout << text;
            } else {
                write_file(pre_out, text);
            }
            save_context(c, ctx);
        } else if (*fit) {
            auto series = load_prices(fit_prices);
            std::span<const PriceBar> bars(series.bars);
            if (!fit_origin.empty()) {
                auto d = Date::parse_iso(fit_origin);
                if (!d) throw Error(Errc::UnparseableDate, fit_origin);
                bars = series.through(*d);
            }
            std::vector<double> closes;
            for (const auto& b : bars) closes.push_back(b.close);
            auto res = fit_arima_grid(closes, fit_d, fit_p, fit_q, g.threads ? g.threads : 1);
            Json grid = Json::array();
            for (const auto& cell : res.grid) {
                Json j{{"p", cell.p}, {"q", cell.q}, {"fitted", cell.fitted}};
                if (cell.fitted) {
                    j["aic"] = cell.aic;
                    j["bic"] = cell.bic;
                } else {
                    j["note"] = cell.note;
                }
                grid.push_back(j);
            }
            Json out{{"spec", to_json(res.spec)},
                     {"grid", grid},
                     {"forecast", forecast_arima(res.spec, closes, fit_h)}};
            std::cout << out.dump(2) << "\n";
        } else if (*pred) {
            auto c = load_experiment_config(pred_config);
            apply_globals(c, g);
            auto date = Date::parse_iso(pred_date);
            if (!date) throw Error(Errc::UnparseableDate, pred_date);
            const TickerInputs* in = &c.tickers.front();
            for (const auto& t : c.tickers) {
                if (t.ticker == pred_ticker) in = &t;
            }
            if (!pred_ticker.empty() && in->ticker != pred_ticker) {
                throw Error(Errc::InvalidArgument, "ticker '" + pred_ticker + "' is not configured");
            }
            auto ctx = make_run_context(c);
            auto t = prepare_ticker(c, *in, ctx);
            auto rec = evaluate_day(c, t, ctx, c.rag, *date);
            auto profile = named_profile(parse_profile_kind(pred_profile));
            DecideOptions opts;
            opts.attitude = parse_attitude(pred_attitude);
            opts.llm_fusion = c.llm_fusion;
            opts.ticker = t.ticker;
            opts.date = *date;
            Json signals = Json::array();
            for (const auto& s : rec.signals()) signals.push_back(to_json(s));
            Json out{{"date", rec.origin.iso()}, {"target", rec.target.iso()}, {"signals", signals}};
            out["decision"] = to_json(decide(rec.signals(), CorrectionState{}, &profile, ctx.gateway.get(), opts));
            std::cout << out.dump(2) << "\n";
            save_context(c, ctx);
        } else if (*bt) {
            auto series = load_prices(bt_prices);
            auto decisions = parse_decisions(read_file(bt_decisions));
            auto profile = named_profile(parse_profile_kind(bt_profile));
            auto sim = simulate(decisions, series.bars, profile, bt_initial);
            Json out{{"profile", to_json(profile)},
                     {"final_equity", sim.curve.points.back().equity},
                     {"trades", sim.trades.size()},
                     {"infeasible", sim.infeasible},
                     {"ar", annualized_return(sim.curve)},
                     {"md", max_drawdown(sim.curve)}};
            try {
                out["sr"] = sharpe(sim.curve);
            } catch (const Error& e) {
                if (e.code() != Errc::DegenerateSeries) throw;
                out["sr"] = nullptr;
            }
            std::cout << out.dump(2) << "\n";
        } else if (*run) {
            auto c = load_experiment_config(run_config);
            apply_globals(c, g);
            std::filesystem::path out = run_out.empty() ? c.output_dir : std::filesystem::path(run_out);
            if (out.empty()) throw Error(Errc::ConfigError, "no output directory (--out or output_dir)");
            auto ctx = make_run_context(c);
            auto outputs = run_experiment(c, ctx);
            write_outputs(out, outputs);
            save_context(c, ctx);
            std::cout << outputs.at("report.md");
        } else if (*serve) {
            auto c = load_experiment_config(serve_config);
            apply_globals(c, g);
            auto ctx = make_run_context(c);
            Service service(c, std::move(ctx), serve_state);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "serving on " << serve_host << ":" << serve_port << "\n";
            service.listen(serve_host, serve_port);
            g_service = nullptr;
        }
    } catch (const std::exception& e) {
        std::cerr << error_json(e).dump() << "\n";
        return 1;
    }
    return 0;
}
