#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quorum/forecast.hpp"
#include "quorum/llm_gateway.hpp"
#include "quorum/market_data.hpp"
#include "quorum/news_pipeline.hpp"
#include "quorum/retrieval.hpp"
#include "quorum/signal.hpp"

namespace quorum {

/// Up iff pred > prev; a flat prediction counts as Down.
Trend trend_map(double prev_close, double pred_close);

/// The `h` trading dates after `origin`. Past the end of the calendar the
/// sequence continues over weekdays.
std::vector<Date> target_dates(const Dataset& dataset, const Date& origin, int h);

/// Forecast closes for the h targets after `origin` and map each against the
/// previous value (the actual close at the origin for the first target).
std::vector<AgentSignal> time_series_signal(const Dataset& dataset, const Date& origin, int h,
                                            Forecaster& forecaster);

struct SignalGap {
    AgentKind agent = AgentKind::News;
    Date date;
    std::string reason;
};

struct NewsSignalResult {
    std::optional<AgentSignal> signal;
    std::optional<SignalGap> gap;  // set when the signal was abstained
};

/// Retrieved snippets as they appear in the news prompt; empty for no info.
std::string format_snippets(const std::optional<InfoSet>& info);

/// Unusable model output becomes a gap; a replay cassette miss propagates.
NewsSignalResult news_signal(const RepresentativeNews& rep, const std::optional<InfoSet>& info,
                             LlmGateway& gateway, const std::string& ticker, const Date& target);

struct SeasonalAnalysis {
    std::map<Period, std::string> findings;
    std::string summary;
};

struct OperationalReview {
    std::string analysis;
    std::vector<std::pair<Period, std::string>> stages;
};

struct StatementOutlook {
    std::map<Period, Trend> period_trends;
    Trend trend = Trend::Down;
    double confidence = 0.0;
    std::string confidence_source;  // "logprob" or "self-report"
};

struct StatementChain {
    SeasonalAnalysis seasonal;
    OperationalReview review;
    StatementOutlook outlook;
    AgentSignal signal;  // dated by the caller; held constant across targets
};

Json to_json(const StatementChain& chain);

/// Confidence carried by the overall trend token, exp(logprob), when the
/// completion has token logprobs.
std::optional<double> trend_token_confidence(const Completion& completion, Trend trend);

/// Three chained calls: seasonal patterns, operational review, outlook.
/// Any step that fails throws StatementChainFailed with its 1-based index.
StatementChain statement_signal(const StatementBundle& bundle, LlmGateway& gateway);

AgentSignal dated(AgentSignal signal, const Date& date);

}  // namespace quorum
