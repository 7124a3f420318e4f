#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quorum/llm_gateway.hpp"
#include "quorum/signal.hpp"

namespace quorum {

enum class ProfileKind { Cons, MCons, MAgg, Agg, Custom };

std::string_view to_string(ProfileKind k) noexcept;
ProfileKind parse_profile_kind(std::string_view s);

/// Execution rule pair: share of idle cash spent per buy, share of held
/// stock sold per sell.
struct RiskProfile {
    ProfileKind kind = ProfileKind::Cons;
    double buy_fraction = 0.5;
    double sell_fraction = 1.0;
    std::string statement;
    std::optional<double> target_sharpe;
};

RiskProfile named_profile(ProfileKind kind);
Json to_json(const RiskProfile& p);
RiskProfile risk_profile_from_json(const Json& j);

/// Direct keyword match ("conservative", "moderately aggressive", "MAgg", ...).
std::optional<RiskProfile> profile_from_keyword(std::string_view text);

/// Keywords map directly; anything else takes one LLM call (needs `gateway`).
RiskProfile parse_risk_preference(std::string_view text, LlmGateway* gateway);

enum class Attitude { None, Sensitive, Insensitive, Optimistic };

std::string_view to_string(Attitude a) noexcept;
Attitude parse_attitude(std::string_view s);

struct FeedbackEvent {
    Date date;
    std::string feedback;
    std::map<AgentKind, double> weights_after;
};

/// Per-agent trust weights evolved by investor feedback.
struct CorrectionState {
    std::map<AgentKind, double> weights{{AgentKind::Time, 1.0}, {AgentKind::News, 1.0}, {AgentKind::Statement, 1.0}};
    std::vector<FeedbackEvent> history;

    double weight(AgentKind a) const;
};

Json to_json(const CorrectionState& s);
CorrectionState correction_state_from_json(const Json& j);

enum class DecisionMode { Prediction, Trading };

struct Holdings {
    double cash = 1.0;
    double shares = 0.0;
};

struct ExpertDecision {
    Date date;    // decision date (close of trading)
    Date target;  // trading day being predicted
    Trend prediction = Trend::Down;
    Action action = Action::Hold;
    double score = 0.0;
    bool tiebreak = false;
    bool llm_fusion = false;
    std::string rationale;
    std::vector<AgentSignal> inputs;
    std::vector<AgentKind> abstained;
    Attitude attitude = Attitude::None;
    std::map<AgentKind, double> weights;
};

Json to_json(const ExpertDecision& d);
ExpertDecision expert_decision_from_json(const Json& j);
/// Decision log line `{date, prediction, action, score, weights, attitude}`.
std::string decision_log_line(const ExpertDecision& d);

/// Up and cash left -> Buy; Down and shares held -> Sell; otherwise Hold.
Action map_action(Trend prediction, const Holdings& holdings);

/// Σ weight · direction · confidence (missing confidence counts as 1).
double fusion_score(const std::vector<AgentSignal>& signals, const CorrectionState& state);

struct DecideOptions {
    DecisionMode mode = DecisionMode::Prediction;
    Attitude attitude = Attitude::None;
    Holdings holdings;
    bool llm_fusion = false;
    bool rationale = true;  // one summarization call per decision
    std::string ticker;
    Date date;
};

/// Throws Error(EmptyPreference) without a profile and Error(NoDecision)
/// when every agent abstained.
ExpertDecision decide(const std::vector<AgentSignal>& signals, const CorrectionState& state,
                      const RiskProfile* profile, LlmGateway* gateway, const DecideOptions& options);

enum class FeedbackKind { Agree, Disagree, Text };

struct Feedback {
    FeedbackKind kind = FeedbackKind::Agree;
    std::string text;
};

Feedback parse_feedback(std::string_view s);

constexpr double kFeedbackRate = 0.1;
constexpr double kMinWeight = 0.1;
constexpr double kMaxWeight = 10.0;

/// Agents that called the realized (or endorsed) direction get ×(1+η), the
/// others ×(1−η); clamped to [0.1, 10]. Every call appends one history event.
CorrectionState apply_feedback(const CorrectionState& state, const Feedback& feedback,
                               std::optional<Trend> realized, const ExpertDecision& decision,
                               LlmGateway* gateway);

}  // namespace quorum
