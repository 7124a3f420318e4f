#include "quorum/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "quorum/parallel.hpp"

namespace quorum {

namespace {

const Date kDefaultWindowStart{2024, 1, 1};
const Date kDefaultWindowEnd{2024, 3, 27};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw Error(Errc::ConfigError, "unknown key '" + key + "' in " + where);
    }
}

Date config_date(const Json& j, const char* key) {
    auto d = Date::parse_iso(j.at(key).get<std::string>());
    if (!d) throw Error(Errc::ConfigError, std::string("bad date for '") + key + "'");
    return *d;
}

RunMode parse_run_mode(const std::string& s) {
    if (s == "prediction") return RunMode::Prediction;
    if (s == "trading") return RunMode::Trading;
    if (s == "both") return RunMode::Both;
    throw Error(Errc::ConfigError, "unknown mode '" + s + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(seed ^ h);
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(Errc::ConfigError, std::string("config is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(Errc::ConfigError, "config must be a JSON object");
    reject_unknown(j,
                   {"name", "tickers", "start", "end", "mode", "rag", "rag_ablation", "attitude", "profiles", "seed",
                    "llm", "search", "news", "forecast", "brsf_streak", "initial_capital", "threads", "output_dir"},
                   "config");
    ExperimentConfig c;
    c.source = j;
    try {
        c.name = j.value("name", c.name);
        if (!j.contains("tickers") || !j["tickers"].is_array() || j["tickers"].empty()) {
            throw Error(Errc::ConfigError, "config needs a non-empty 'tickers' list");
        }
        for (const auto& t : j["tickers"]) {
            reject_unknown(t, {"ticker", "prices", "news", "statements"}, "tickers");
            TickerInputs in;
            in.prices = resolve(base, t.at("prices").get<std::string>());
            in.ticker = t.contains("ticker") ? t["ticker"].get<std::string>() : ticker_from_path(in.prices);
            in.news = resolve(base, t.value("news", ""));
            in.statements = resolve(base, t.value("statements", ""));
            c.tickers.push_back(std::move(in));
        }
        if (j.contains("start")) c.start = config_date(j, "start");
        if (j.contains("end")) c.end = config_date(j, "end");
        c.mode = parse_run_mode(j.value("mode", "both"));
        c.rag = parse_rag_mode(j.value("rag", "adaptive"));
        c.rag_ablation = j.value("rag_ablation", false);
        c.attitude = parse_attitude(j.value("attitude", "none"));
        if (j.contains("profiles")) {
            c.profiles.clear();
            for (const auto& p : j["profiles"]) {
                auto kind = parse_profile_kind(p.get<std::string>());
                if (kind == ProfileKind::Custom) throw Error(Errc::ConfigError, "profiles must be named profiles");
                c.profiles.push_back(kind);
            }
            if (c.profiles.empty()) throw Error(Errc::ConfigError, "profiles list is empty");
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("llm")) {
            const auto& l = j["llm"];
            reject_unknown(l, {"mode", "cassette", "fusion", "requests_per_minute"}, "llm");
            c.llm_mode = parse_llm_mode(l.value("mode", "replay"));
            c.cassette = resolve(base, l.value("cassette", ""));
            c.llm_fusion = l.value("fusion", false);
            c.requests_per_minute = l.value("requests_per_minute", c.requests_per_minute);
        }
        if (j.contains("search")) {
            const auto& s = j["search"];
            reject_unknown(s, {"fixture", "cache", "n_max"}, "search");
            c.search_fixture = resolve(base, s.value("fixture", ""));
            c.search_cache = resolve(base, s.value("cache", ""));
            c.n_max = s.value("n_max", c.n_max);
        }
        if (j.contains("news")) {
            const auto& n = j["news"];
            reject_unknown(n, {"rules", "reflect", "k"}, "news");
            c.rules = resolve(base, n.value("rules", ""));
            c.reflect = n.value("reflect", c.reflect);
            c.news_k = n.value("k", c.news_k);
        }
        if (j.contains("forecast")) {
            const auto& f = j["forecast"];
            reject_unknown(f, {"time_forecaster", "d", "p_max", "q_max"}, "forecast");
            c.time_forecaster = f.value("time_forecaster", c.time_forecaster);
            c.arima_d = f.value("d", c.arima_d);
            c.arima_p_max = f.value("p_max", c.arima_p_max);
            c.arima_q_max = f.value("q_max", c.arima_q_max);
        }
        c.brsf_streak = j.value("brsf_streak", c.brsf_streak);
        c.initial_capital = j.value("initial_capital", c.initial_capital);
        c.threads = j.value("threads", c.threads);
        c.output_dir = resolve(base, j.value("output_dir", ""));
    } catch (const Json::exception& e) {
        throw Error(Errc::ConfigError, std::string("config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::ConfigError) throw;
        throw Error(Errc::ConfigError, e.what());
    }
    if (c.start && c.end && *c.end < *c.start) throw Error(Errc::ConfigError, "end precedes start");
    if (c.threads == 0) c.threads = 1;
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_file(path), path.parent_path());
}

RunContext make_run_context(const ExperimentConfig& config, std::unique_ptr<LlmProvider> provider) {
    RunContext ctx;
    switch (config.llm_mode) {
        case LlmMode::Replay:
            // Without a cassette every model call misses; fine for runs that make none.
            ctx.cassette = config.cassette.empty() ? std::make_shared<Cassette>(CassetteMode::Replay)
                                                   : Cassette::load(config.cassette, CassetteMode::Replay);
            break;
        case LlmMode::Record:
            ctx.cassette = config.cassette.empty() ? std::make_shared<Cassette>(CassetteMode::Record)
                                                   : Cassette::load(config.cassette, CassetteMode::Record);
            break;
        case LlmMode::Live: ctx.cassette = std::make_shared<Cassette>(CassetteMode::Passthrough); break;
    }
    if (config.llm_mode != LlmMode::Replay && !provider) provider = OpenAiCompatibleProvider::from_environment();
    LlmGateway::Options opts;
    opts.mode = config.llm_mode;
    opts.requests_per_minute = config.requests_per_minute;
    ctx.gateway = std::make_unique<LlmGateway>(ctx.cassette, std::move(provider), opts);

    if (!config.search_fixture.empty()) {
        ctx.search = FileStubSearchClient::load(config.search_fixture);
    } else {
        const char* url = std::getenv("QUORUM_SEARCH_ENDPOINT");
        const char* key = std::getenv("QUORUM_SEARCH_API_KEY");
        if (!url && config.rag != RagMode::Off) {
            throw Error(Errc::ConfigError, "no search fixture configured and QUORUM_SEARCH_ENDPOINT is unset");
        }
        ctx.search = std::make_unique<HttpSearchClient>(url ? url : "", key ? key : "");
    }
    ctx.cache = config.search_cache.empty() ? std::make_shared<QueryCache>() : QueryCache::load(config.search_cache);
    return ctx;
}

std::vector<AgentSignal> DayRecord::signals() const {
    std::vector<AgentSignal> out;
    for (const auto* s : {&time, &news, &statement}) {
        if (*s) out.push_back(**s);
    }
    return out;
}

namespace {

std::vector<Date> window_of(const ExperimentConfig& config, const Dataset& ds) {
    Date lo, hi;
    if (config.start || config.end) {
        lo = config.start.value_or(ds.calendar.front());
        hi = config.end.value_or(ds.calendar.back());
    } else if (ds.calendar.front() <= kDefaultWindowStart && ds.calendar.back() >= kDefaultWindowEnd) {
        lo = kDefaultWindowStart;
        hi = kDefaultWindowEnd;
    } else {
        lo = ds.calendar.front();
        hi = ds.calendar.back();
    }
    std::vector<Date> out;
    for (const auto& d : ds.calendar) {
        if (lo <= d && d <= hi) out.push_back(d);
    }
    if (out.empty()) throw Error(Errc::ConfigError, "the window contains no trading days");
    return out;
}

bool is_fatal(const Error& e) { return e.code() == Errc::CassetteMiss; }

}  // namespace

const RepresentativeNews* PreparedTicker::representative_for(const Date& d) const {
    auto it = std::lower_bound(preprocess.representatives.begin(), preprocess.representatives.end(), d,
                               [](const RepresentativeNews& r, const Date& x) { return r.attributed_date < x; });
    return it != preprocess.representatives.end() && it->attributed_date == d ? &*it : nullptr;
}

PreparedTicker prepare_ticker(const ExperimentConfig& config, const TickerInputs& inputs, RunContext& ctx) {
    PreparedTicker t;
    t.ticker = inputs.ticker;
    auto prices = load_prices(inputs.prices, inputs.ticker, market_for_ticker(inputs.ticker));
    std::vector<NewsArticle> news = inputs.news.empty() ? std::vector<NewsArticle>{} : load_news(inputs.news);
    StatementBundle statements = inputs.statements.empty() ? StatementBundle{inputs.ticker, {}}
                                                           : load_statements(inputs.statements, inputs.ticker);
    t.dataset = build_dataset(std::move(prices), std::move(news), std::move(statements));

    BiasRuleSet rules = config.rules.empty() ? BiasRuleSet{} : BiasRuleSet::load(config.rules);
    PreprocessOptions popts;
    popts.k = config.news_k;
    popts.seed = derive_seed(config.seed, inputs.ticker + "/news");
    popts.reflect = config.reflect;
    popts.threads = config.threads;
    t.preprocess = preprocess(t.dataset, rules, ctx.gateway.get(), popts);

    if (!t.dataset.statements.periods.empty()) {
        try {
            t.statement_chain = statement_signal(t.dataset.statements, *ctx.gateway);
        } catch (const StatementChainFailed& e) {
            t.statement_error = e.what();
        }
    }
    return t;
}

DayRecord evaluate_day(const ExperimentConfig& config, const PreparedTicker& t, RunContext& ctx, RagMode rag,
                       const Date& origin) {
    const Dataset& ds = t.dataset;
    auto oi = ds.prices.index_of(origin);
    auto next = ds.next_trading_day(origin);
    if (!oi || !next) throw Error(Errc::InvalidArgument, origin.iso() + " is not a trading day with a successor");
    LlmGateway& gw = *ctx.gateway;

    DayRecord rec;
    rec.origin = origin;
    rec.target = *next;
    rec.origin_close = ds.prices.bars[*oi].close;
    rec.target_close = ds.prices.bars[*ds.prices.index_of(rec.target)].close;
    rec.actual = trend_map(rec.origin_close, rec.target_close);

    auto forecaster = make_forecaster(config.time_forecaster, config.arima_d, config.arima_p_max, config.arima_q_max,
                                      1, ctx.cassette, config.llm_mode);
    try {
        rec.time = time_series_signal(ds, origin, 1, *forecaster).front();
    } catch (const Error& e) {
        if (is_fatal(e)) throw;
        rec.gaps.push_back({AgentKind::Time, rec.target, e.what()});
    }
    if (config.time_forecaster == "arima") {
        if (rec.time) rec.arima = rec.time->trend;
    } else {
        ArimaForecaster arima(config.arima_d, config.arima_p_max, config.arima_q_max);
        try {
            rec.arima = time_series_signal(ds, origin, 1, arima).front().trend;
        } catch (const Error& e) {
            if (is_fatal(e)) throw;
        }
    }

    if (const auto* rep = t.representative_for(origin)) {
        RetrievalOptions ropts;
        ropts.mode = rag;
        ropts.n_max = config.n_max;
        rec.retrieval = retrieve_if_needed(rep->article, t.ticker, &gw, *ctx.cache, *ctx.search, ropts);
        auto res = news_signal(*rep, rec.retrieval->info, gw, t.ticker, rec.target);
        if (res.signal) rec.news = std::move(res.signal);
        if (res.gap) rec.gaps.push_back(*res.gap);
    } else {
        rec.gaps.push_back({AgentKind::News, rec.target, "no news attributed to " + origin.iso()});
    }
    if (t.statement_chain) {
        rec.statement = dated(t.statement_chain->signal, rec.target);
    } else {
        rec.gaps.push_back(
            {AgentKind::Statement, rec.target, t.statement_error.empty() ? "no statements" : t.statement_error});
    }
    return rec;
}

TickerRun run_ticker(const ExperimentConfig& config, const TickerInputs& inputs, RunContext& ctx, RagMode rag) {
    TickerRun run;
    static_cast<PreparedTicker&>(run) = prepare_ticker(config, inputs, ctx);
    run.window = window_of(config, run.dataset);
    std::vector<Date> origins;
    for (const auto& d : run.window) {
        if (run.dataset.next_trading_day(d)) origins.push_back(d);
    }
    run.days.resize(origins.size());
    const RiskProfile profile = named_profile(config.profiles.front());
    const CorrectionState state;

    parallel_for(origins.size(), config.threads, [&](std::size_t i) {
        DayRecord rec = evaluate_day(config, run, ctx, rag, origins[i]);
        auto signals = rec.signals();
        if (!signals.empty()) {
            DecideOptions dopts;
            dopts.mode = DecisionMode::Prediction;
            dopts.attitude = config.attitude;
            dopts.llm_fusion = config.llm_fusion;
            dopts.ticker = run.ticker;
            dopts.date = rec.origin;
            rec.decision = decide(signals, state, &profile, ctx.gateway.get(), dopts);
        }
        std::mt19937_64 rng(derive_seed(config.seed, run.ticker + "/random-predict/" + rec.origin.iso()));
        rec.random = uniform_index(2, rng) == 0 ? Trend::Up : Trend::Down;
        run.days[i] = std::move(rec);
    });
    return run;
}

// ---------------------------------------------------------------------------
// Tables

std::optional<double> ResultsTable::mean(std::size_t column) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : cells) {
        if (row[column].value) {
            sum += *row[column].value;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::optional<double> ResultsTable::stddev(std::size_t column) const {
    auto m = mean(column);
    if (!m) return std::nullopt;
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& row : cells) {
        if (row[column].value) {
            ss += (*row[column].value - *m) * (*row[column].value - *m);
            ++n;
        }
    }
    if (n < 2) return std::nullopt;
    return std::sqrt(ss / static_cast<double>(n - 1));
}

namespace {

Trend expert_prediction(const DayRecord& d) { return d.decision ? d.decision->prediction : Trend::Down; }
Trend arima_prediction(const DayRecord& d) { return d.arima.value_or(Trend::Down); }
Trend random_prediction(const DayRecord& d) { return d.random; }

using Picker = Trend (*)(const DayRecord&);

const std::vector<std::pair<std::string, Picker>>& prediction_methods() {
    static const std::vector<std::pair<std::string, Picker>> methods{
        {"ARIMA", arima_prediction}, {"Random", random_prediction}, {"Expert", expert_prediction}};
    return methods;
}

std::pair<std::vector<Trend>, std::vector<Trend>> pred_actual(const TickerRun& run, Picker pick) {
    std::vector<Trend> pred, actual;
    for (const auto& d : run.days) {
        pred.push_back(pick(d));
        actual.push_back(d.actual);
    }
    return {pred, actual};
}

template <typename Metric>
ResultsTable prediction_table(const std::string& title, const std::vector<TickerRun>& runs, Metric metric) {
    ResultsTable t;
    t.title = title;
    for (const auto& [name, _] : prediction_methods()) t.columns.push_back(name);
    for (const auto& run : runs) {
        t.rows.push_back(run.ticker);
        std::vector<Cell> row;
        for (const auto& [_, pick] : prediction_methods()) {
            auto [pred, actual] = pred_actual(run, pick);
            row.push_back(pred.empty() ? Cell{std::nullopt, "n/a"} : Cell{metric(pred, actual), {}});
        }
        t.cells.push_back(std::move(row));
    }
    return t;
}

double f1_default(const std::vector<Trend>& p, const std::vector<Trend>& a) { return f1(p, a); }

struct StrategyRun {
    std::string name;
    std::vector<DatedAction> decisions;
};

std::vector<StrategyRun> strategies_for(const ExperimentConfig& config, const TickerRun& run) {
    const auto& bars = run.dataset.prices.bars;
    std::set<Date> window(run.window.begin(), run.window.end());
    std::vector<StrategyRun> out;

    out.push_back({"Random", strategy_random(run.window, derive_seed(config.seed, run.ticker + "/random-trade"))});

    std::vector<PriceBar> through_end;
    for (const auto& b : bars) {
        if (b.date <= run.window.back()) through_end.push_back(b);
    }
    std::vector<DatedAction> brsf;
    for (const auto& a : strategy_brsf(through_end, config.brsf_streak)) {
        if (window.count(a.date)) brsf.push_back(a);
    }
    out.push_back({"BRSF", std::move(brsf)});

    std::vector<std::pair<Date, std::optional<Trend>>> arima, expert;
    for (const auto& d : run.days) {
        arima.emplace_back(d.origin, d.arima);
        expert.emplace_back(d.origin, d.decision ? std::optional<Trend>(d.decision->prediction) : std::nullopt);
    }
    out.push_back({"ARIMA", strategy_from_predictions(arima)});
    out.push_back({"Expert", strategy_from_predictions(expert)});
    return out;
}

std::vector<PriceBar> window_bars(const TickerRun& run) {
    std::vector<PriceBar> out;
    for (const auto& b : run.dataset.prices.bars) {
        if (run.window.front() <= b.date && b.date <= run.window.back()) out.push_back(b);
    }
    return out;
}

std::string fixed(double v, int decimals) {
    v += 0.0;  // no negative zero
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s(buf);
    if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
    return s;
}

std::string csv_cell(const std::optional<double>& v, const std::string& note) { return v ? fixed(*v, 10) : note; }

std::string md_cell(const std::optional<double>& v, const std::string& note) {
    if (!v) return note.empty() ? "-" : note;
    if (*v < 0.0 && fixed(-*v, 4) != "0.0000") return "(" + fixed(-*v, 4) + ")";
    return fixed(*v, 4);
}

}  // namespace

ResultsTable accuracy_table(const std::vector<TickerRun>& runs) {
    return prediction_table("Accuracy", runs, accuracy);
}

ResultsTable f1_table(const std::vector<TickerRun>& runs) { return prediction_table("F1", runs, f1_default); }

TradingTables trading_tables(const ExperimentConfig& config, const std::vector<TickerRun>& runs) {
    TradingTables t;
    t.ar.title = "Annualized return";
    t.md.title = "Maximum drawdown";
    t.sr.title = "Sharpe ratio";
    for (const auto& run : runs) {
        auto bars = window_bars(run);
        std::vector<Cell> ar, md, sr;
        std::vector<std::string> columns;
        for (const auto& strat : strategies_for(config, run)) {
            for (auto kind : config.profiles) {
                columns.push_back(strat.name + "." + std::string(to_string(kind)));
                auto sim = simulate(strat.decisions, bars, named_profile(kind), config.initial_capital);
                if (sim.infeasible) {
                    ar.push_back({std::nullopt, "/"});
                    md.push_back({std::nullopt, "/"});
                    sr.push_back({std::nullopt, "/"});
                    continue;
                }
                ar.push_back({annualized_return(sim.curve), {}});
                md.push_back({max_drawdown(sim.curve), {}});
                try {
                    sr.push_back({sharpe(sim.curve), {}});
                } catch (const Error& e) {
                    if (e.code() != Errc::DegenerateSeries) throw;
                    sr.push_back({std::nullopt, "n/a"});
                }
            }
        }
        for (auto* table : {&t.ar, &t.md, &t.sr}) {
            if (table->columns.empty()) table->columns = columns;
            table->rows.push_back(run.ticker);
        }
        t.ar.cells.push_back(std::move(ar));
        t.md.cells.push_back(std::move(md));
        t.sr.cells.push_back(std::move(sr));
    }
    return t;
}

ResultsTable rag_ablation_table(const std::vector<TickerRun>& adaptive, const std::vector<TickerRun>& off) {
    if (adaptive.size() != off.size()) throw Error(Errc::InvalidArgument, "ablation arms differ in tickers");
    ResultsTable t;
    t.title = "Adaptive retrieval ablation";
    t.columns = {"adaptive.Acc", "off.Acc", "delta.Acc", "adaptive.F1", "off.F1", "delta.F1"};
    for (std::size_t i = 0; i < adaptive.size(); ++i) {
        auto [pa, aa] = pred_actual(adaptive[i], expert_prediction);
        auto [po, ao] = pred_actual(off[i], expert_prediction);
        t.rows.push_back(adaptive[i].ticker);
        if (pa.empty() || po.empty()) {
            t.cells.emplace_back(t.columns.size(), Cell{std::nullopt, "n/a"});
            continue;
        }
        double acc_a = accuracy(pa, aa), acc_o = accuracy(po, ao);
        double f1_a = f1(pa, aa), f1_o = f1(po, ao);
        t.cells.push_back({{acc_a, {}}, {acc_o, {}}, {acc_a - acc_o, {}}, {f1_a, {}}, {f1_o, {}}, {f1_a - f1_o, {}}});
    }
    return t;
}

std::string emit_report(const ResultsTable& t, ReportFormat format) {
    std::string out;
    if (format == ReportFormat::Csv) {
        out += "ticker";
        for (const auto& c : t.columns) out += "," + c;
        out += "\n";
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            out += t.rows[r];
            for (const auto& cell : t.cells[r]) out += "," + csv_cell(cell.value, cell.note);
            out += "\n";
        }
        out += "Mean";
        for (std::size_t c = 0; c < t.columns.size(); ++c) out += "," + csv_cell(t.mean(c), "");
        out += "\nStd";
        for (std::size_t c = 0; c < t.columns.size(); ++c) out += "," + csv_cell(t.stddev(c), "");
        out += "\n";
        return out;
    }
    out += "### " + t.title + "\n\n| Ticker |";
    for (const auto& c : t.columns) out += " " + c + " |";
    out += "\n|---|";
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += "---:|";
    out += "\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += "| " + t.rows[r] + " |";
        for (const auto& cell : t.cells[r]) out += " " + md_cell(cell.value, cell.note) + " |";
        out += "\n";
    }
    out += "| **Mean** |";
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += " " + md_cell(t.mean(c), "") + " |";
    out += "\n| **Std** |";
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += " " + md_cell(t.stddev(c), "") + " |";
    out += "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Run outputs

namespace {

std::string opt_trend(const std::optional<AgentSignal>& s) { return s ? std::string(to_string(s->trend)) : ""; }

std::string predictions_csv(const TickerRun& run) {
    std::string out = "origin,target,actual,expert,arima,random,time,news,statement\n";
    for (const auto& d : run.days) {
        out += d.origin.iso() + "," + d.target.iso() + "," + std::string(to_string(d.actual)) + "," +
               (d.decision ? std::string(to_string(d.decision->prediction)) : "") + "," +
               (d.arima ? std::string(to_string(*d.arima)) : "") + "," + std::string(to_string(d.random)) + "," +
               opt_trend(d.time) + "," + opt_trend(d.news) + "," + opt_trend(d.statement) + "\n";
    }
    return out;
}

std::string retrieval_jsonl(const TickerRun& run) {
    std::string out;
    for (const auto& d : run.days) {
        if (!d.retrieval) continue;
        Json j{{"date", d.origin.iso()},
               {"judgment", d.retrieval->judgment.value},
               {"rationale", d.retrieval->judgment.rationale},
               {"queries", d.retrieval->judgment.queries},
               {"fail_open", d.retrieval->judgment.fail_open},
               {"info", d.retrieval->info ? to_json(*d.retrieval->info) : Json(nullptr)}};
        out += j.dump() + "\n";
    }
    return out;
}

std::string gaps_jsonl(const TickerRun& run) {
    std::string out;
    for (const auto& d : run.days) {
        for (const auto& g : d.gaps) {
            out += Json{{"date", g.date.iso()}, {"agent", to_string(g.agent)}, {"reason", g.reason}}.dump() + "\n";
        }
    }
    return out;
}

std::string equity_csv(const ExperimentConfig& config, const TickerRun& run) {
    auto bars = window_bars(run);
    std::vector<std::string> names;
    std::vector<EquityCurve> curves;
    for (const auto& strat : strategies_for(config, run)) {
        for (auto kind : config.profiles) {
            names.push_back(strat.name + "." + std::string(to_string(kind)));
            curves.push_back(simulate(strat.decisions, bars, named_profile(kind), config.initial_capital).curve);
        }
    }
    std::string out = "date";
    for (const auto& n : names) out += "," + n;
    out += "\n";
    for (std::size_t i = 0; i < curves.front().points.size(); ++i) {
        out += i == 0 ? std::string("initial") : curves.front().points[i].date.iso();
        for (const auto& c : curves) out += "," + fixed(c.points[i].equity, 6);
        out += "\n";
    }
    return out;
}

std::string prompt_log_jsonl(const LlmGateway& gw) {
    auto log = gw.prompt_log();
    std::sort(log.begin(), log.end(), [](const PromptLogEntry& a, const PromptLogEntry& b) {
        return std::tie(a.tag, a.fingerprint, a.response) < std::tie(b.tag, b.fingerprint, b.response);
    });
    std::string out;
    for (const auto& e : log) {
        out += Json{{"fingerprint", e.fingerprint}, {"tag", e.tag}, {"system", e.system}, {"user", e.user},
                    {"response", e.response}}
                   .dump() +
               "\n";
    }
    return out;
}

std::vector<TickerRun> run_all(const ExperimentConfig& config, RunContext& ctx, RagMode rag) {
    std::vector<TickerRun> runs;
    for (const auto& t : config.tickers) runs.push_back(run_ticker(config, t, ctx, rag));
    return runs;
}

}  // namespace

RunOutputs run_experiment(const ExperimentConfig& config, RunContext& ctx) {
    RunOutputs out;
    out["config.json"] = config.source.dump(2) + "\n";

    auto runs = run_all(config, ctx, config.rag);
    std::string report = "# " + config.name + "\n\n";

    for (const auto& run : runs) {
        const std::string dir = run.ticker + "/";
        out[dir + "representatives.jsonl"] = serialize_representatives(run.preprocess.representatives);
        std::vector<AgentSignal> signals;
        std::string decisions;
        for (const auto& d : run.days) {
            for (auto& s : d.signals()) signals.push_back(std::move(s));
            if (d.decision) decisions += decision_log_line(*d.decision);
        }
        out[dir + "signals.jsonl"] = serialize_signal_log(signals);
        out[dir + "decisions.jsonl"] = decisions;
        out[dir + "predictions.csv"] = predictions_csv(run);
        out[dir + "retrieval.jsonl"] = retrieval_jsonl(run);
        out[dir + "gaps.jsonl"] = gaps_jsonl(run);
        if (run.statement_chain) out[dir + "statement_chain.json"] = to_json(*run.statement_chain).dump(2) + "\n";
        if (config.mode != RunMode::Prediction) out[dir + "equity.csv"] = equity_csv(config, run);
    }

    auto add_table = [&](const std::string& stem, const ResultsTable& t) {
        out["tables/" + stem + ".csv"] = emit_report(t, ReportFormat::Csv);
        auto md = emit_report(t, ReportFormat::Markdown);
        out["tables/" + stem + ".md"] = md;
        report += md + "\n";
    };
    if (config.mode != RunMode::Trading) {
        add_table("accuracy", accuracy_table(runs));
        add_table("f1", f1_table(runs));
    }
    if (config.mode != RunMode::Prediction) {
        auto tt = trading_tables(config, runs);
        add_table("trading_ar", tt.ar);
        add_table("trading_md", tt.md);
        add_table("trading_sr", tt.sr);
    }
    if (config.rag_ablation) {
        auto other = config.rag == RagMode::Off ? RagMode::Adaptive : RagMode::Off;
        auto second = run_all(config, ctx, other);
        add_table("rag_ablation", config.rag == RagMode::Off ? rag_ablation_table(second, runs)
                                                             : rag_ablation_table(runs, second));
    }
    out["report.md"] = report;
    out["prompt_log.jsonl"] = prompt_log_jsonl(*ctx.gateway);

    Json summary{{"name", config.name},
                 {"tickers", Json::array()},
                 {"llm_mode", to_string(config.llm_mode)},
                 {"cassette", config.cassette.filename().string()},
                 {"llm_calls", ctx.gateway->calls()},
                 {"search_cache", {{"hits", ctx.cache->hits()}, {"misses", ctx.cache->misses()}, {"entries", ctx.cache->size()}}}};
    for (const auto& run : runs) {
        summary["tickers"].push_back({{"ticker", run.ticker},
                                      {"window", {run.window.front().iso(), run.window.back().iso()}},
                                      {"evaluated_days", run.days.size()},
                                      {"representatives", run.preprocess.representatives.size()},
                                      {"unattributed_news", run.preprocess.unattributed.size()}});
    }
    out["summary.json"] = summary.dump(2) + "\n";
    return out;
}

void write_outputs(const std::filesystem::path& dir, const RunOutputs& outputs) {
    for (const auto& [name, content] : outputs) write_file(dir / name, content);
}

}  // namespace quorum
