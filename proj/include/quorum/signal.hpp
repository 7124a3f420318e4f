#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "quorum/date.hpp"

namespace quorum {

enum class Trend { Up, Down };
enum class AgentKind { Time, News, Statement };
enum class Action { Buy, Sell, Hold };

std::string_view to_string(Trend t) noexcept;
std::string_view to_string(AgentKind a) noexcept;
std::string_view to_string(Action a) noexcept;
Trend parse_trend(std::string_view s);
AgentKind parse_agent_kind(std::string_view s);
Action parse_action(std::string_view s);

inline int direction(Trend t) noexcept { return t == Trend::Up ? 1 : -1; }
inline Trend opposite(Trend t) noexcept { return t == Trend::Up ? Trend::Down : Trend::Up; }

constexpr AgentKind kAllAgents[] = {AgentKind::Time, AgentKind::News, AgentKind::Statement};

/// One agent's call for one target trading date.
struct AgentSignal {
    AgentKind agent = AgentKind::Time;
    Date date;
    Trend trend = Trend::Down;
    std::optional<double> confidence;
    std::string rationale;
    std::vector<std::string> provenance;
};

nlohmann::json to_json(const AgentSignal& s);
AgentSignal agent_signal_from_json(const nlohmann::json& j);

/// JSON-lines `{date, agent, trend, confidence, rationale}`; also the format
/// external signal producers write.
std::string serialize_signal_log(const std::vector<AgentSignal>& signals);
std::vector<AgentSignal> parse_signal_log(std::string_view jsonl);

}  // namespace quorum
