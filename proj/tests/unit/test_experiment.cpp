#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "quorum/experiment.hpp"

using namespace quorum;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = fs::path(QUORUM_FIXTURES) / "golden";

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(cells);
    }
    return rows;
}

struct Cli {
    int status;
    std::string out;
};

Cli run_cli(const std::string& args) {
    auto out = fs::temp_directory_path() / ("quorum_cli_" + std::to_string(::getpid()) + ".txt");
    std::string cmd = std::string("\"") + QUORUM_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    int rc = std::system(cmd.c_str());
    Cli r{WEXITSTATUS(rc), read_file(out)};
    fs::remove(out);
    return r;
}

}  // namespace

TEST(Config, ResolvesPathsAndDefaults) {
    auto c = parse_experiment_config(R"({"tickers": [{"ticker": "X", "prices": "p.csv", "news": "/abs/n.jsonl",
                                         "statements": "s.json"}], "llm": {"mode": "record", "cassette": "c.json"}})",
                                     "/base");
    ASSERT_EQ(c.tickers.size(), 1u);
    EXPECT_EQ(c.tickers[0].prices, fs::path("/base/p.csv"));
    EXPECT_EQ(c.tickers[0].news, fs::path("/abs/n.jsonl"));
    EXPECT_EQ(c.cassette, fs::path("/base/c.json"));
    EXPECT_EQ(c.llm_mode, LlmMode::Record);
    EXPECT_EQ(c.rag, RagMode::Adaptive);
    EXPECT_EQ(c.profiles.size(), 4u);
    EXPECT_EQ(c.arima_p_max, 5);
}

TEST(Config, RejectsUnknownAndInvalid) {
    for (const char* bad : {R"({"tickers": [], "colour": "blue"})", R"({"tickers": [], "rag": "sometimes"})",
                            R"({"tickers": [], "llm": {"mode": "dream"}})", R"({"tickers": [], "start": "March"})",
                            "not json"}) {
        try {
            parse_experiment_config(bad, "/");
            ADD_FAILURE() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::ConfigError) << bad;
        }
    }
}

TEST(Seeds, DeriveSeedIsStableAndLabelled) {
    EXPECT_EQ(derive_seed(7, "HRBR/random-trade"), derive_seed(7, "HRBR/random-trade"));
    EXPECT_NE(derive_seed(7, "HRBR/random-trade"), derive_seed(7, "HRBR/random-predict"));
    EXPECT_NE(derive_seed(7, "a"), derive_seed(8, "a"));
}

TEST(Report, CsvAndMarkdown) {
    ResultsTable t{"Demo", {"A", "B"}, {"X", "Y"}, {{{0.5, ""}, {std::nullopt, "/"}}, {{-0.25, ""}, {1.0, ""}}}};
    EXPECT_EQ(*t.mean(0), 0.125);
    EXPECT_NEAR(*t.stddev(0), std::sqrt((0.375 * 0.375 * 2) / 1), 1e-15);
    EXPECT_EQ(*t.mean(1), 1.0);
    EXPECT_FALSE(t.stddev(1));
    EXPECT_EQ(emit_report(t, ReportFormat::Csv),
              "ticker,A,B\n"
              "X,0.5000000000,/\n"
              "Y,-0.2500000000,1.0000000000\n"
              "Mean,0.1250000000,1.0000000000\n"
              "Std,0.5303300859,\n");
    EXPECT_EQ(emit_report(t, ReportFormat::Markdown),
              "### Demo\n\n| Ticker | A | B |\n|---|---:|---:|\n"
              "| X | 0.5000 | / |\n"
              "| Y | (0.2500) | 1.0000 |\n"
              "| **Mean** | 0.1250 | 1.0000 |\n"
              "| **Std** | 0.5303 | - |\n");
}

TEST(Run, GoldenReplayIsThreadIndependent) {
    auto config = load_experiment_config(kGolden / "config.json");
    auto ctx1 = make_run_context(config);
    auto one = run_experiment(config, ctx1);
    config.threads = 4;
    auto ctx4 = make_run_context(config);
    auto four = run_experiment(config, ctx4);
    EXPECT_EQ(one, four);
}

TEST(Run, AccuracyTableAgreesWithPredictions) {
    auto config = load_experiment_config(kGolden / "config.json");
    auto ctx = make_run_context(config);
    auto out = run_experiment(config, ctx);
    auto preds = csv_rows(out.at("HRBR/predictions.csv"));
    ASSERT_GT(preds.size(), 1u);
    int expert = 0, arima = 0, random = 0, n = 0;
    for (std::size_t i = 1; i < preds.size(); ++i) {
        const auto& r = preds[i];
        auto hit = [&](const std::string& p) { return (p.empty() ? "Down" : p) == r[2]; };
        expert += hit(r[3]);
        arima += hit(r[4]);
        random += hit(r[5]);
        ++n;
    }
    auto table = csv_rows(out.at("tables/accuracy.csv"));
    ASSERT_EQ(table[0], (std::vector<std::string>{"ticker", "ARIMA", "Random", "Expert"}));
    EXPECT_NEAR(std::stod(table[1][1]), static_cast<double>(arima) / n, 1e-9);
    EXPECT_NEAR(std::stod(table[1][2]), static_cast<double>(random) / n, 1e-9);
    EXPECT_NEAR(std::stod(table[1][3]), static_cast<double>(expert) / n, 1e-9);

    auto summary = Json::parse(out.at("summary.json"));
    EXPECT_EQ(summary["tickers"][0]["evaluated_days"], n);
    EXPECT_EQ(summary["llm_mode"], "replay");
}

TEST(Run, EquityCurvesStartAtInitialCapital) {
    auto config = load_experiment_config(kGolden / "config.json");
    auto ctx = make_run_context(config);
    auto out = run_experiment(config, ctx);
    auto rows = csv_rows(out.at("HRBR/equity.csv"));
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0].size(), 17u);
    for (std::size_t c = 1; c < rows[1].size(); ++c) EXPECT_DOUBLE_EQ(std::stod(rows[1][c]), config.initial_capital);
    EXPECT_EQ(rows[2][0], "2024-03-11");
    EXPECT_EQ(rows.back()[0], "2024-03-22");
}

TEST(Run, ReplayMissIsFatal) {
    auto config = load_experiment_config(kGolden / "config.json");
    config.cassette.clear();
    auto ctx = make_run_context(config);
    EXPECT_THROW(run_experiment(config, ctx), CassetteMiss);
}

TEST(Run, EvaluateDayRejectsLastDay) {
    auto config = load_experiment_config(kGolden / "config.json");
    auto ctx = make_run_context(config);
    auto prepared = prepare_ticker(config, config.tickers[0], ctx);
    EXPECT_THROW(evaluate_day(config, prepared, ctx, RagMode::Off, prepared.dataset.calendar.back()), Error);
    EXPECT_THROW(evaluate_day(config, prepared, ctx, RagMode::Off, Date{2024, 3, 16}), Error);
}

TEST(Cli, FitArimaPrintsGridAndForecast) {
    auto r = run_cli("fit-arima --prices \"" + (kGolden / "HRBR.prices.csv").string() +
                     "\" --origin 2024-03-14 --d 1 --p-max 1 --q-max 1 --horizon 3");
    ASSERT_EQ(r.status, 0) << r.out;
    auto j = Json::parse(r.out);
    EXPECT_EQ(j["grid"].size(), 4u);
    EXPECT_EQ(j["forecast"].size(), 3u);
}

TEST(Cli, BacktestMatchesHandLedger) {
    auto prices = load_prices(kGolden / "HRBR.prices.csv");
    auto dec = fs::temp_directory_path() / "quorum_cli_decisions.csv";
    write_file(dec, "date,action\n2024-03-11,Buy\n2024-03-12,Sell\n");
    auto r = run_cli("backtest --prices \"" + (kGolden / "HRBR.prices.csv").string() + "\" --decisions \"" +
                     dec.string() + "\" --profile MAgg --initial 1000");
    fs::remove(dec);
    ASSERT_EQ(r.status, 0) << r.out;
    auto j = Json::parse(r.out);
    double c1 = prices.bars[*prices.index_of({2024, 3, 11})].close;
    double c2 = prices.bars[*prices.index_of({2024, 3, 12})].close;
    double last = prices.bars.back().close;
    double shares = 1000.0 / c1;
    double cash = 0.5 * shares * c2;
    EXPECT_NEAR(j["final_equity"].get<double>(), cash + 0.5 * shares * last, 1e-9);
    EXPECT_EQ(j["trades"], 2);
}

TEST(Cli, ErrorsAreJsonWithNonzeroExit) {
    auto r = run_cli("backtest --prices /nonexistent.csv --decisions /nonexistent.csv");
    EXPECT_EQ(r.status, 1);
    auto j = Json::parse(r.out);
    EXPECT_EQ(j["code"], "IoError");
}

TEST(Cli, PreprocessWritesRepresentatives) {
    auto r = run_cli("preprocess --prices \"" + (kGolden / "HRBR.prices.csv").string() + "\" --news \"" +
                     (kGolden / "HRBR.news.jsonl").string() + "\" --rules \"" + (kGolden / "rules.json").string() +
                     "\" --no-reflect");
    ASSERT_EQ(r.status, 0) << r.out;
    auto reps = parse_representatives(r.out);
    EXPECT_EQ(reps.size(), 12u);
    for (const auto& rep : reps) EXPECT_EQ(rep.article.cleaned_text.find("Staff Reporter"), std::string::npos);
}

TEST(Cli, PredictReplaysOneDay) {
    auto r = run_cli("predict --config \"" + (kGolden / "config.json").string() +
                     "\" --date 2024-03-11 --profile Cons");
    ASSERT_EQ(r.status, 0) << r.out;
    auto j = Json::parse(r.out);
    EXPECT_EQ(j["decision"]["inputs"].size(), 3u);
    EXPECT_EQ(j["decision"]["target"], "2024-03-12");
    // A profile whose prompts were never recorded misses the cassette.
    auto miss = run_cli("predict --config \"" + (kGolden / "config.json").string() +
                        "\" --date 2024-03-11 --profile MAgg");
    EXPECT_EQ(miss.status, 1);
    EXPECT_EQ(Json::parse(miss.out)["code"], "CassetteMiss");
}
