#include "quorum/signal.hpp"

#include <cctype>

#include "quorum/error.hpp"

namespace quorum {

namespace {

std::string lower(std::string_view s) {
    std::string out;
    for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::string_view to_string(Trend t) noexcept { return t == Trend::Up ? "Up" : "Down"; }

std::string_view to_string(AgentKind a) noexcept {
    switch (a) {
        case AgentKind::Time: return "time";
        case AgentKind::News: return "news";
        case AgentKind::Statement: return "statement";
    }
    return "time";
}

std::string_view to_string(Action a) noexcept {
    switch (a) {
        case Action::Buy: return "Buy";
        case Action::Sell: return "Sell";
        case Action::Hold: return "Hold";
    }
    return "Hold";
}

Trend parse_trend(std::string_view s) {
    auto l = lower(s);
    if (l == "up") return Trend::Up;
    if (l == "down") return Trend::Down;
    throw Error(Errc::InvalidArgument, "unknown trend '" + std::string(s) + "'");
}

AgentKind parse_agent_kind(std::string_view s) {
    auto l = lower(s);
    if (l == "time") return AgentKind::Time;
    if (l == "news") return AgentKind::News;
    if (l == "statement") return AgentKind::Statement;
    throw Error(Errc::InvalidArgument, "unknown agent '" + std::string(s) + "'");
}

Action parse_action(std::string_view s) {
    auto l = lower(s);
    if (l == "buy") return Action::Buy;
    if (l == "sell") return Action::Sell;
    if (l == "hold") return Action::Hold;
    throw Error(Errc::InvalidArgument, "unknown action '" + std::string(s) + "'");
}

nlohmann::json to_json(const AgentSignal& s) {
    nlohmann::json j{{"date", s.date.iso()},
                     {"agent", to_string(s.agent)},
                     {"trend", to_string(s.trend)},
                     {"confidence", nullptr},
                     {"rationale", s.rationale}};
    if (s.confidence) j["confidence"] = *s.confidence;
    if (!s.provenance.empty()) j["provenance"] = s.provenance;
    return j;
}

AgentSignal agent_signal_from_json(const nlohmann::json& j) {
    AgentSignal s;
    for (const char* key : {"date", "agent", "trend"}) {
        if (!j.contains(key) || !j[key].is_string()) throw MissingField(key);
    }
    auto date = Date::parse_iso(j["date"].get<std::string>());
    if (!date) throw Error(Errc::UnparseableDate, j["date"].get<std::string>());
    s.date = *date;
    s.agent = parse_agent_kind(j["agent"].get<std::string>());
    s.trend = parse_trend(j["trend"].get<std::string>());
    if (j.contains("confidence") && j["confidence"].is_number()) {
        double c = j["confidence"].get<double>();
        if (!(c >= 0.0 && c <= 1.0)) throw Error(Errc::InvalidArgument, "confidence outside [0, 1]");
        s.confidence = c;
    }
    s.rationale = j.value("rationale", "");
    if (j.contains("provenance")) s.provenance = j["provenance"].get<std::vector<std::string>>();
    return s;
}

std::string serialize_signal_log(const std::vector<AgentSignal>& signals) {
    std::string out;
    for (const auto& s : signals) {
        out += to_json(s).dump();
        out += '\n';
    }
    return out;
}

std::vector<AgentSignal> parse_signal_log(std::string_view jsonl) {
    std::vector<AgentSignal> out;
    std::size_t pos = 0, line_no = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            out.push_back(agent_signal_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw MalformedRow(line_no, e.what());
        }
    }
    return out;
}

}  // namespace quorum
