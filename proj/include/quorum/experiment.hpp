#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "quorum/agents.hpp"
#include "quorum/backtest.hpp"
#include "quorum/expert.hpp"
#include "quorum/news_pipeline.hpp"
#include "quorum/retrieval.hpp"

namespace quorum {

struct TickerInputs {
    std::string ticker;
    std::filesystem::path prices;
    std::filesystem::path news;
    std::filesystem::path statements;
};

enum class RunMode { Prediction, Trading, Both };

struct ExperimentConfig {
    std::string name = "run";
    std::vector<TickerInputs> tickers;
    std::optional<Date> start;
    std::optional<Date> end;
    RunMode mode = RunMode::Both;
    RagMode rag = RagMode::Adaptive;
    bool rag_ablation = false;
    Attitude attitude = Attitude::None;
    std::vector<ProfileKind> profiles{ProfileKind::Cons, ProfileKind::MCons, ProfileKind::MAgg, ProfileKind::Agg};
    std::uint64_t seed = 7;

    LlmMode llm_mode = LlmMode::Replay;
    std::filesystem::path cassette;
    bool llm_fusion = false;
    double requests_per_minute = 60.0;

    std::filesystem::path search_fixture;  // stub client; empty: HTTP client from the environment
    std::filesystem::path search_cache;    // empty: in-memory only
    std::size_t n_max = 5;

    std::filesystem::path rules;
    bool reflect = true;
    std::size_t news_k = 2;

    std::string time_forecaster = "arima";
    int arima_d = 2;
    int arima_p_max = 5;
    int arima_q_max = 5;

    int brsf_streak = 2;
    double initial_capital = 100000.0;
    unsigned threads = 1;
    std::filesystem::path output_dir;

    /// The config as written, for the run snapshot.
    Json source;
};

/// JSON config; relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(std::string_view json, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Gateway, search client and cache shared by every ticker of a run.
struct RunContext {
    std::shared_ptr<Cassette> cassette;
    std::unique_ptr<LlmGateway> gateway;
    std::unique_ptr<SearchClient> search;
    std::shared_ptr<QueryCache> cache;
};

/// Builds the context from the config. A provider may be injected for
/// record/live runs; otherwise the OpenAI-compatible client is configured
/// from the environment (replay needs none).
RunContext make_run_context(const ExperimentConfig& config, std::unique_ptr<LlmProvider> provider = nullptr);

struct DayRecord {
    Date origin;
    Date target;
    double origin_close = 0.0;
    double target_close = 0.0;
    Trend actual = Trend::Down;
    std::optional<AgentSignal> time;
    std::optional<AgentSignal> news;
    std::optional<AgentSignal> statement;
    std::vector<SignalGap> gaps;
    std::optional<RetrievalOutcome> retrieval;
    std::optional<ExpertDecision> decision;
    std::optional<Trend> arima;
    Trend random = Trend::Down;

    std::vector<AgentSignal> signals() const;
};

/// A ticker's data after loading, news preprocessing and the statement chain
/// (which does not depend on the day).
struct PreparedTicker {
    std::string ticker;
    Dataset dataset;
    PreprocessResult preprocess;
    std::optional<StatementChain> statement_chain;
    std::string statement_error;

    const RepresentativeNews* representative_for(const Date& d) const;
};

PreparedTicker prepare_ticker(const ExperimentConfig& config, const TickerInputs& inputs, RunContext& context);

/// Agent signals, retrieval and the ARIMA baseline for one origin day. No
/// decision is made. Throws Error(InvalidArgument) when `origin` is not a
/// trading day with a successor.
DayRecord evaluate_day(const ExperimentConfig& config, const PreparedTicker& ticker, RunContext& context, RagMode rag,
                       const Date& origin);

struct TickerRun : PreparedTicker {
    std::vector<Date> window;     // trading days simulated
    std::vector<DayRecord> days;  // window days with a next trading day
};

/// Loads a ticker's data and runs the whole daily pipeline over the window.
TickerRun run_ticker(const ExperimentConfig& config, const TickerInputs& inputs, RunContext& context,
                     RagMode rag);

struct Cell {
    std::optional<double> value;
    std::string note;  // shown when value is empty ("/" for an infeasible simulation)
};

/// Rows are tickers; Mean and Std rows are computed when rendered.
struct ResultsTable {
    std::string title;
    std::vector<std::string> columns;
    std::vector<std::string> rows;
    std::vector<std::vector<Cell>> cells;

    std::optional<double> mean(std::size_t column) const;
    std::optional<double> stddev(std::size_t column) const;  // sample, n-1
};

ResultsTable accuracy_table(const std::vector<TickerRun>& runs);
ResultsTable f1_table(const std::vector<TickerRun>& runs);

struct TradingTables {
    ResultsTable ar, md, sr;
};

TradingTables trading_tables(const ExperimentConfig& config, const std::vector<TickerRun>& runs);

/// Paired adaptive vs off arms; columns are Acc/F1 for each arm and deltas.
ResultsTable rag_ablation_table(const std::vector<TickerRun>& adaptive, const std::vector<TickerRun>& off);

enum class ReportFormat { Csv, Markdown };

std::string emit_report(const ResultsTable& table, ReportFormat format);

/// File name -> contents, everything a run writes.
using RunOutputs = std::map<std::string, std::string>;

RunOutputs run_experiment(const ExperimentConfig& config, RunContext& context);
void write_outputs(const std::filesystem::path& dir, const RunOutputs& outputs);

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace quorum
