#include "quorum/agents.hpp"

#include <cmath>
#include <regex>

#include "quorum/prompts.hpp"

namespace quorum {

Trend trend_map(double prev_close, double pred_close) {
    if (!std::isfinite(prev_close) || !std::isfinite(pred_close) || prev_close <= 0.0 || pred_close <= 0.0) {
        throw Error(Errc::NonFiniteInput, "trend_map needs positive finite prices");
    }
    return pred_close > prev_close ? Trend::Up : Trend::Down;
}

std::vector<Date> target_dates(const Dataset& dataset, const Date& origin, int h) {
    std::vector<Date> out;
    auto it = std::upper_bound(dataset.calendar.begin(), dataset.calendar.end(), origin);
    for (; it != dataset.calendar.end() && static_cast<int>(out.size()) < h; ++it) out.push_back(*it);
    Date cur = out.empty() ? std::max(origin, dataset.calendar.empty() ? origin : dataset.calendar.back()) : out.back();
    while (static_cast<int>(out.size()) < h) {
        cur = cur.plus_days(1);
        if (!cur.is_weekend()) out.push_back(cur);
    }
    return out;
}

std::vector<AgentSignal> time_series_signal(const Dataset& dataset, const Date& origin, int h,
                                            Forecaster& forecaster) {
    if (h < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
    auto fc = forecast_at(dataset.prices, origin, h, forecaster);
    auto history = dataset.prices.through(origin);
    auto targets = target_dates(dataset, history.back().date, h);

    std::vector<AgentSignal> out;
    double prev = history.back().close;
    for (int i = 0; i < h; ++i) {
        double pred = fc.values[static_cast<std::size_t>(i)];
        AgentSignal s;
        s.agent = AgentKind::Time;
        s.date = targets[static_cast<std::size_t>(i)];
        s.trend = trend_map(prev, pred);
        s.rationale = forecaster.name() + " forecast " + format_number(pred) + " vs " + format_number(prev);
        s.provenance = {"forecast:" + forecaster.name() + "@" + fc.origin.iso()};
        out.push_back(std::move(s));
        prev = pred;
    }
    return out;
}

std::string format_snippets(const std::optional<InfoSet>& info) {
    if (!info || info->items.empty()) return "";
    std::string out = "\nWeb search results:\n";
    for (const auto& item : info->items) {
        out += "[" + std::to_string(item.rank) + "] " + item.url + "\n" + item.snippet + "\n";
    }
    return out;
}

NewsSignalResult news_signal(const RepresentativeNews& rep, const std::optional<InfoSet>& info,
                             LlmGateway& gateway, const std::string& ticker, const Date& target) {
    if (!(rep.attributed_date < target)) {
        throw Error(Errc::InvalidArgument, "news attributed to " + rep.attributed_date.iso() +
                                               " cannot predict " + target.iso());
    }
    static const Schema schema{{
        {"summary", FieldType::String},
        {"trend", FieldType::Enum, true, {"Up", "Down"}},
        {"confidence", FieldType::Number, true, {}, 0.0, 1.0},
    }};
    PromptVars vars{{"ticker", ticker},
                    {"date", rep.attributed_date.iso()},
                    {"target_date", target.iso()},
                    {"title", rep.article.original.title},
                    {"text", rep.article.cleaned_text},
                    {"retrieved", format_snippets(info)}};
    NewsSignalResult out;
    try {
        auto res = gateway.complete_structured(build_prompt("news_signal.v1", vars), schema);
        AgentSignal s;
        s.agent = AgentKind::News;
        s.date = target;
        s.trend = parse_trend(res.record["trend"].get<std::string>());
        s.confidence = res.record["confidence"].get<double>();
        s.rationale = res.record["summary"].get<std::string>();
        s.provenance.push_back("article:" + rep.article.original.date.iso() + ":" + rep.article.original.title);
        if (info) {
            for (const auto& item : info->items) s.provenance.push_back("search:" + item.url);
        }
        out.signal = std::move(s);
    } catch (const CassetteMiss&) {
        throw;
    } catch (const Error& e) {
        if (e.code() != Errc::UnparseableAfterRepair && e.code() != Errc::ProviderError) throw;
        out.gap = SignalGap{AgentKind::News, target, e.what()};
    }
    return out;
}

Json to_json(const StatementChain& c) {
    Json findings = Json::object();
    for (const auto& [p, text] : c.seasonal.findings) findings[std::string(to_string(p))] = text;
    Json stages = Json::array();
    for (const auto& [p, text] : c.review.stages) stages.push_back({{"period", to_string(p)}, {"assessment", text}});
    Json trends = Json::object();
    for (const auto& [p, t] : c.outlook.period_trends) trends[std::string(to_string(p))] = to_string(t);
    return {{"seasonal", {{"findings", findings}, {"summary", c.seasonal.summary}}},
            {"review", {{"analysis", c.review.analysis}, {"stages", stages}}},
            {"outlook",
             {{"period_trends", trends},
              {"trend", to_string(c.outlook.trend)},
              {"confidence", c.outlook.confidence},
              {"confidence_source", c.outlook.confidence_source}}}};
}

std::optional<double> trend_token_confidence(const Completion& completion, Trend trend) {
    if (!completion.logprobs || completion.logprobs->empty()) return std::nullopt;
    const auto& tokens = *completion.logprobs;
    std::string joined;
    std::vector<std::size_t> ends;
    for (const auto& t : tokens) {
        joined += t.token;
        ends.push_back(joined.size());
    }
    static const std::regex key(R"re("trend"\s*:\s*")re");
    std::smatch m;
    if (!std::regex_search(joined, m, key)) return std::nullopt;
    const std::size_t value_pos = static_cast<std::size_t>(m.position() + m.length());
    const std::string word{to_string(trend)};
    if (joined.compare(value_pos, word.size(), word) != 0) return std::nullopt;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (ends[i] > value_pos) return std::exp(tokens[i].logprob);
    }
    return std::nullopt;
}

namespace {

Json parse_step(const Completion& c, int step) {
    auto obj = extract_json_object(c.text);
    if (!obj) throw StatementChainFailed(step, "reply has no JSON object");
    return *obj;
}

template <typename Fn>
auto run_step(int step, Fn&& fn) {
    try {
        return fn();
    } catch (const CassetteMiss&) {
        throw;
    } catch (const StatementChainFailed&) {
        throw;
    } catch (const std::exception& e) {
        throw StatementChainFailed(step, e.what());
    }
}

}  // namespace

StatementChain statement_signal(const StatementBundle& bundle, LlmGateway& gateway) {
    if (bundle.periods.empty()) throw Error(Errc::EmptyInput, "statement bundle has no periods");
    StatementChain chain;
    std::string periods;
    for (const auto& [p, _] : bundle.periods) periods += (periods.empty() ? "" : ", ") + std::string(to_string(p));
    PromptVars vars{{"ticker", bundle.ticker}, {"statements", serialize_statements(bundle)}, {"periods", periods}};

    // Step 1: seasonal patterns.
    Json seasonal = run_step(1, [&] {
        Json j = parse_step(gateway.complete(build_prompt("statement_seasonal.v1", vars)), 1);
        if (!j.contains("findings") || !j["findings"].is_object()) throw StatementChainFailed(1, "no findings object");
        for (const auto& [p, _] : bundle.periods) {
            std::string key{to_string(p)};
            if (!j["findings"].contains(key) || !j["findings"][key].is_string()) {
                throw StatementChainFailed(1, "findings miss period " + key);
            }
            chain.seasonal.findings[p] = j["findings"][key].get<std::string>();
        }
        chain.seasonal.summary = j.value("summary", "");
        return j;
    });
    vars["seasonal"] = seasonal.dump(2);

    // Step 2: operational review.
    Json review = run_step(2, [&] {
        Json j = parse_step(gateway.complete(build_prompt("statement_review.v1", vars)), 2);
        if (!j.contains("analysis") || !j["analysis"].is_string() || j["analysis"].get<std::string>().empty()) {
            throw StatementChainFailed(2, "no analysis text");
        }
        chain.review.analysis = j["analysis"].get<std::string>();
        if (j.contains("stages") && j["stages"].is_array()) {
            for (const auto& s : j["stages"]) {
                auto p = parse_period(s.value("period", ""));
                if (p) chain.review.stages.emplace_back(*p, s.value("assessment", ""));
            }
        }
        return j;
    });
    vars["review"] = review.dump(2);

    // Step 3: outlook with token confidence.
    run_step(3, [&] {
        PromptParams params;
        params.logprobs = true;
        Completion c = gateway.complete(build_prompt("statement_outlook.v1", vars, params));
        Json j = parse_step(c, 3);
        if (!j.contains("trend") || !j["trend"].is_string()) throw StatementChainFailed(3, "no trend");
        chain.outlook.trend = parse_trend(j["trend"].get<std::string>());
        if (j.contains("period_trends") && j["period_trends"].is_object()) {
            for (const auto& [k, v] : j["period_trends"].items()) {
                auto p = parse_period(k);
                if (p && v.is_string()) chain.outlook.period_trends[*p] = parse_trend(v.get<std::string>());
            }
        }
        if (auto lp = trend_token_confidence(c, chain.outlook.trend)) {
            chain.outlook.confidence = *lp;
            chain.outlook.confidence_source = "logprob";
        } else if (j.contains("confidence") && j["confidence"].is_number()) {
            double v = j["confidence"].get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw StatementChainFailed(3, "confidence outside [0, 1]");
            chain.outlook.confidence = v;
            chain.outlook.confidence_source = "self-report";
        } else {
            throw StatementChainFailed(3, "no confidence");
        }
        return 0;
    });

    auto& s = chain.signal;
    s.agent = AgentKind::Statement;
    s.trend = chain.outlook.trend;
    s.confidence = chain.outlook.confidence;
    s.rationale = chain.review.analysis;
    for (const auto& [p, _] : bundle.periods) s.provenance.push_back("statement:" + std::string(to_string(p)));
    return chain;
}

AgentSignal dated(AgentSignal signal, const Date& date) {
    signal.date = date;
    return signal;
}

}  // namespace quorum
