#include "quorum/expert.hpp"

#include <algorithm>
#include <cctype>

#include "quorum/market_data.hpp"
#include "quorum/prompts.hpp"

namespace quorum {

namespace {

std::string fold(std::string_view s) {
    std::string out;
    bool space = false;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || c == '-' || c == '_') {
            space = !out.empty();
            continue;
        }
        if (c == '.' || c == '!' || c == ',' || c == '"' || c == '\'') continue;
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string percent(double f) { return format_number(f * 100.0) + "%"; }

std::string describe(const RiskProfile& p) {
    return std::string(to_string(p.kind)) + " (buys with " + percent(p.buy_fraction) + " of idle cash, sells " +
           percent(p.sell_fraction) + " of held shares on a predicted fall)";
}

std::string attitude_text(Attitude a) {
    switch (a) {
        case Attitude::None: return "";
        case Attitude::Sensitive:
            return "Investor attitude: sensitive. The investor reacts strongly to short-term news and price moves.\n";
        case Attitude::Insensitive:
            return "Investor attitude: insensitive. The investor pays little attention to short-term fluctuations.\n";
        case Attitude::Optimistic:
            return "Investor attitude: optimistic. The investor expects the market to keep rising.\n";
    }
    return "";
}

std::string signal_lines(const std::vector<AgentSignal>& signals, const CorrectionState* state) {
    std::string out;
    for (const auto& s : signals) {
        out += "- " + std::string(to_string(s.agent)) + " analyst: " + std::string(to_string(s.trend));
        out += " (confidence " + (s.confidence ? format_number(*s.confidence) : std::string("n/a"));
        if (state) out += ", trust weight " + format_number(state->weight(s.agent));
        out += "): " + s.rationale + "\n";
    }
    return out;
}

std::map<AgentKind, double> clamp_all(std::map<AgentKind, double> w) {
    for (auto& [_, v] : w) v = std::clamp(v, kMinWeight, kMaxWeight);
    return w;
}

Json weights_json(const std::map<AgentKind, double>& w) {
    Json j = Json::object();
    for (const auto& [a, v] : w) j[std::string(to_string(a))] = v;
    return j;
}

std::map<AgentKind, double> weights_from_json(const Json& j) {
    std::map<AgentKind, double> w;
    for (const auto& [k, v] : j.items()) w[parse_agent_kind(k)] = v.get<double>();
    return w;
}

}  // namespace

std::string_view to_string(ProfileKind k) noexcept {
    switch (k) {
        case ProfileKind::Cons: return "Cons";
        case ProfileKind::MCons: return "MCons";
        case ProfileKind::MAgg: return "MAgg";
        case ProfileKind::Agg: return "Agg";
        case ProfileKind::Custom: return "Custom";
    }
    return "Custom";
}

ProfileKind parse_profile_kind(std::string_view s) {
    auto f = fold(s);
    if (f == "cons") return ProfileKind::Cons;
    if (f == "mcons") return ProfileKind::MCons;
    if (f == "magg") return ProfileKind::MAgg;
    if (f == "agg") return ProfileKind::Agg;
    if (f == "custom") return ProfileKind::Custom;
    throw Error(Errc::InvalidProfile, "unknown profile kind '" + std::string(s) + "'");
}

RiskProfile named_profile(ProfileKind kind) {
    switch (kind) {
        case ProfileKind::Cons: return {kind, 0.5, 1.0, {}, {}};
        case ProfileKind::MCons: return {kind, 0.7, 1.0, {}, {}};
        case ProfileKind::MAgg: return {kind, 1.0, 0.5, {}, {}};
        case ProfileKind::Agg: return {kind, 1.0, 0.3, {}, {}};
        case ProfileKind::Custom: break;
    }
    throw Error(Errc::InvalidProfile, "Custom profiles need explicit fractions");
}

Json to_json(const RiskProfile& p) {
    Json j{{"kind", to_string(p.kind)},
           {"buy_fraction", p.buy_fraction},
           {"sell_fraction", p.sell_fraction},
           {"statement", p.statement},
           {"target_sharpe", nullptr}};
    if (p.target_sharpe) j["target_sharpe"] = *p.target_sharpe;
    return j;
}

RiskProfile risk_profile_from_json(const Json& j) {
    RiskProfile p;
    p.kind = parse_profile_kind(j.at("kind").get<std::string>());
    p.buy_fraction = j.at("buy_fraction").get<double>();
    p.sell_fraction = j.at("sell_fraction").get<double>();
    p.statement = j.value("statement", "");
    if (j.contains("target_sharpe") && !j["target_sharpe"].is_null()) p.target_sharpe = j["target_sharpe"].get<double>();
    return p;
}

std::optional<RiskProfile> profile_from_keyword(std::string_view text) {
    static const std::map<std::string, ProfileKind> keywords{
        {"conservative", ProfileKind::Cons},
        {"cons", ProfileKind::Cons},
        {"moderately conservative", ProfileKind::MCons},
        {"moderate conservative", ProfileKind::MCons},
        {"mcons", ProfileKind::MCons},
        {"m cons", ProfileKind::MCons},
        {"moderately aggressive", ProfileKind::MAgg},
        {"moderate aggressive", ProfileKind::MAgg},
        {"magg", ProfileKind::MAgg},
        {"m agg", ProfileKind::MAgg},
        {"aggressive", ProfileKind::Agg},
        {"agg", ProfileKind::Agg},
    };
    auto it = keywords.find(fold(text));
    if (it == keywords.end()) return std::nullopt;
    auto p = named_profile(it->second);
    p.statement = std::string(text);
    return p;
}

RiskProfile parse_risk_preference(std::string_view text, LlmGateway* gateway) {
    if (trim(text).empty()) throw Error(Errc::EmptyPreference, "risk preference is empty");
    if (auto p = profile_from_keyword(text)) return *p;
    if (!gateway) throw Error(Errc::InvalidProfile, "free-text preference needs an LLM gateway");

    static const Schema schema{{
        {"kind", FieldType::Enum, true, {"Cons", "MCons", "MAgg", "Agg", "Custom"}},
        {"buy_fraction", FieldType::Number, false},
        {"sell_fraction", FieldType::Number, false},
        {"target_sharpe", FieldType::Number, false},
        {"summary", FieldType::String, false},
    }};
    auto res = gateway->complete_structured(build_prompt("risk_preference.v1", {{"statement", std::string(text)}}),
                                            schema);
    const auto kind = parse_profile_kind(res.record["kind"].get<std::string>());
    RiskProfile p;
    if (kind == ProfileKind::Custom) {
        if (!res.record.contains("buy_fraction") || !res.record.contains("sell_fraction")) {
            throw Error(Errc::InvalidProfile, "Custom profile without fractions");
        }
        p.kind = kind;
        p.buy_fraction = res.record["buy_fraction"].get<double>();
        p.sell_fraction = res.record["sell_fraction"].get<double>();
        auto ok = [](double f) { return f > 0.0 && f <= 1.0; };
        if (!ok(p.buy_fraction) || !ok(p.sell_fraction)) {
            throw Error(Errc::InvalidProfile, "Custom fractions must lie in (0, 1]");
        }
    } else {
        p = named_profile(kind);
    }
    p.statement = std::string(text);
    if (res.record.contains("target_sharpe")) p.target_sharpe = res.record["target_sharpe"].get<double>();
    return p;
}

std::string_view to_string(Attitude a) noexcept {
    switch (a) {
        case Attitude::None: return "none";
        case Attitude::Sensitive: return "sensitive";
        case Attitude::Insensitive: return "insensitive";
        case Attitude::Optimistic: return "optimistic";
    }
    return "none";
}

Attitude parse_attitude(std::string_view s) {
    auto f = fold(s);
    if (f.empty() || f == "none") return Attitude::None;
    if (f == "sensitive" || f == "sen") return Attitude::Sensitive;
    if (f == "insensitive" || f == "insen") return Attitude::Insensitive;
    if (f == "optimistic" || f == "opt") return Attitude::Optimistic;
    throw Error(Errc::InvalidArgument, "unknown attitude '" + std::string(s) + "'");
}

double CorrectionState::weight(AgentKind a) const {
    auto it = weights.find(a);
    return it == weights.end() ? 1.0 : it->second;
}

Json to_json(const CorrectionState& s) {
    Json history = Json::array();
    for (const auto& e : s.history) {
        history.push_back({{"date", e.date.iso()}, {"feedback", e.feedback}, {"weights", weights_json(e.weights_after)}});
    }
    return {{"weights", weights_json(s.weights)}, {"history", history}};
}

CorrectionState correction_state_from_json(const Json& j) {
    CorrectionState s;
    s.weights = weights_from_json(j.at("weights"));
    for (const auto& e : j.value("history", Json::array())) {
        auto d = Date::parse_iso(e.at("date").get<std::string>());
        if (!d) throw Error(Errc::UnparseableDate, e.at("date").get<std::string>());
        s.history.push_back({*d, e.value("feedback", ""), weights_from_json(e.at("weights"))});
    }
    return s;
}

Json to_json(const ExpertDecision& d) {
    Json inputs = Json::array();
    for (const auto& s : d.inputs) inputs.push_back(to_json(s));
    Json abstained = Json::array();
    for (auto a : d.abstained) abstained.push_back(to_string(a));
    return {{"date", d.date.iso()},
            {"target", d.target.iso()},
            {"prediction", to_string(d.prediction)},
            {"action", to_string(d.action)},
            {"score", d.score},
            {"tiebreak", d.tiebreak},
            {"llm_fusion", d.llm_fusion},
            {"rationale", d.rationale},
            {"inputs", inputs},
            {"abstained", abstained},
            {"attitude", to_string(d.attitude)},
            {"weights", weights_json(d.weights)}};
}

ExpertDecision expert_decision_from_json(const Json& j) {
    auto date = [&](const char* key) {
        auto d = Date::parse_iso(j.at(key).get<std::string>());
        if (!d) throw Error(Errc::UnparseableDate, j.at(key).get<std::string>());
        return *d;
    };
    ExpertDecision d;
    d.date = date("date");
    d.target = date("target");
    d.prediction = parse_trend(j.at("prediction").get<std::string>());
    d.action = parse_action(j.at("action").get<std::string>());
    d.score = j.at("score").get<double>();
    d.tiebreak = j.value("tiebreak", false);
    d.llm_fusion = j.value("llm_fusion", false);
    d.rationale = j.value("rationale", "");
    for (const auto& s : j.value("inputs", Json::array())) d.inputs.push_back(agent_signal_from_json(s));
    for (const auto& a : j.value("abstained", Json::array())) d.abstained.push_back(parse_agent_kind(a.get<std::string>()));
    d.attitude = parse_attitude(j.value("attitude", "none"));
    d.weights = weights_from_json(j.at("weights"));
    return d;
}

std::string decision_log_line(const ExpertDecision& d) {
    Json j{{"date", d.date.iso()},
           {"prediction", to_string(d.prediction)},
           {"action", to_string(d.action)},
           {"score", d.score},
           {"weights", weights_json(d.weights)},
           {"attitude", to_string(d.attitude)}};
    return j.dump() + "\n";
}

Action map_action(Trend prediction, const Holdings& h) {
    if (prediction == Trend::Up && h.cash > 0.0) return Action::Buy;
    if (prediction == Trend::Down && h.shares > 0.0) return Action::Sell;
    return Action::Hold;
}

double fusion_score(const std::vector<AgentSignal>& signals, const CorrectionState& state) {
    double score = 0.0;
    for (const auto& s : signals) score += state.weight(s.agent) * direction(s.trend) * s.confidence.value_or(1.0);
    return score;
}

ExpertDecision decide(const std::vector<AgentSignal>& signals, const CorrectionState& state,
                      const RiskProfile* profile, LlmGateway* gateway, const DecideOptions& options) {
    if (!profile) throw Error(Errc::EmptyPreference, "a risk preference is required before deciding");
    if (signals.empty()) throw Error(Errc::NoDecision, "every agent abstained");

    ExpertDecision d;
    d.date = options.date;
    d.target = signals.front().date;
    d.inputs = signals;
    d.attitude = options.attitude;
    d.weights = state.weights;
    for (auto a : kAllAgents) {
        bool present = std::any_of(signals.begin(), signals.end(), [&](const AgentSignal& s) { return s.agent == a; });
        if (!present) d.abstained.push_back(a);
    }
    d.score = fusion_score(signals, state);

    PromptVars vars{{"ticker", options.ticker},
                    {"date", options.date.iso()},
                    {"profile", describe(*profile)},
                    {"attitude", attitude_text(options.attitude)},
                    {"signals", signal_lines(signals, nullptr)}};
    static const Schema call_schema{{
        {"prediction", FieldType::Enum, true, {"Up", "Down"}},
        {"reason", FieldType::String, false},
    }};

    if (options.llm_fusion || d.score == 0.0) {
        if (!gateway) throw Error(Errc::InvalidArgument, "fusion needs an LLM gateway for this decision");
        std::string id = "expert_tiebreak.v1";
        if (options.llm_fusion) {
            id = "expert_fusion.v1";
            vars["signals"] = signal_lines(signals, &state);
            d.llm_fusion = true;
        } else {
            d.tiebreak = true;
        }
        auto res = gateway->complete_structured(build_prompt(id, vars), call_schema);
        d.prediction = parse_trend(res.record["prediction"].get<std::string>());
    } else {
        d.prediction = d.score > 0.0 ? Trend::Up : Trend::Down;
    }
    d.action = map_action(d.prediction, options.holdings);

    if (options.rationale && gateway) {
        vars["prediction"] = std::string(to_string(d.prediction));
        vars["action"] = options.mode == DecisionMode::Trading ? std::string(to_string(d.action))
                                                               : std::string("none (prediction only)");
        d.rationale = trim(gateway->complete(build_prompt("expert_rationale.v1", vars)).text);
    }
    return d;
}

Feedback parse_feedback(std::string_view s) {
    auto f = fold(s);
    if (f == "agree") return {FeedbackKind::Agree, "agree"};
    if (f == "disagree") return {FeedbackKind::Disagree, "disagree"};
    return {FeedbackKind::Text, std::string(s)};
}

CorrectionState apply_feedback(const CorrectionState& state, const Feedback& feedback,
                               std::optional<Trend> realized, const ExpertDecision& decision,
                               LlmGateway* gateway) {
    CorrectionState next = state;
    FeedbackKind kind = feedback.kind;
    std::map<AgentKind, int> overrides;  // +1 reward, -1 penalize

    if (kind == FeedbackKind::Text) {
        if (!gateway) throw Error(Errc::InvalidArgument, "free-text feedback needs an LLM gateway");
        static const Schema schema{{
            {"verdict", FieldType::Enum, true, {"agree", "disagree", "override"}},
            {"overrides", FieldType::Object, false},
        }};
        PromptVars vars{{"prediction", std::string(to_string(decision.prediction))},
                        {"signals", signal_lines(decision.inputs, nullptr)},
                        {"feedback", feedback.text}};
        auto res = gateway->complete_structured(build_prompt("feedback_interpret.v1", vars), schema);
        auto verdict = res.record["verdict"].get<std::string>();
        if (verdict == "agree") kind = FeedbackKind::Agree;
        else if (verdict == "disagree") kind = FeedbackKind::Disagree;
        else if (res.record.contains("overrides")) {
            for (const auto& [agent, v] : res.record["overrides"].items()) {
                if (!v.is_string()) continue;
                auto a = parse_agent_kind(agent);
                if (v == "reward") overrides[a] = 1;
                else if (v == "penalize") overrides[a] = -1;
            }
        }
    }

    std::optional<Trend> endorsed = realized;
    if (!endorsed && kind == FeedbackKind::Agree) endorsed = decision.prediction;
    if (!endorsed && kind == FeedbackKind::Disagree) endorsed = opposite(decision.prediction);

    if (kind == FeedbackKind::Text && !realized) {
        for (const auto& [a, sign] : overrides) {
            next.weights[a] = next.weight(a) * (1.0 + sign * kFeedbackRate);
        }
    } else if (endorsed) {
        for (const auto& s : decision.inputs) {
            double factor = s.trend == *endorsed ? 1.0 + kFeedbackRate : 1.0 - kFeedbackRate;
            next.weights[s.agent] = next.weight(s.agent) * factor;
        }
    }
    next.weights = clamp_all(std::move(next.weights));
    std::string label = feedback.kind == FeedbackKind::Agree      ? "agree"
                        : feedback.kind == FeedbackKind::Disagree ? "disagree"
                                                                  : feedback.text;
    if (realized) label += " (realized " + std::string(to_string(*realized)) + ")";
    next.history.push_back({decision.date, label, next.weights});
    return next;
}

}  // namespace quorum
