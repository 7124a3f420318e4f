#include "quorum/error.hpp"

namespace quorum {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::NonMonotonicDates: return "NonMonotonicDates";
        case Errc::NonPositivePrice: return "NonPositivePrice";
        case Errc::InvalidBar: return "InvalidBar";
        case Errc::MissingField: return "MissingField";
        case Errc::UnparseableDate: return "UnparseableDate";
        case Errc::UnknownPeriod: return "UnknownPeriod";
        case Errc::DuplicateIndicator: return "DuplicateIndicator";
        case Errc::TickerMismatch: return "TickerMismatch";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::InvalidRule: return "InvalidRule";
        case Errc::CassetteMiss: return "CassetteMiss";
        case Errc::ProviderError: return "ProviderError";
        case Errc::UnparseableAfterRepair: return "UnparseableAfterRepair";
        case Errc::SearchClientError: return "SearchClientError";
        case Errc::TooShort: return "TooShort";
        case Errc::NonFiniteInput: return "NonFiniteInput";
        case Errc::OptimizerDiverged: return "OptimizerDiverged";
        case Errc::StatementChainFailed: return "StatementChainFailed";
        case Errc::EmptyPreference: return "EmptyPreference";
        case Errc::InvalidProfile: return "InvalidProfile";
        case Errc::NoDecision: return "NoDecision";
        case Errc::DecisionOutsideCalendar: return "DecisionOutsideCalendar";
        case Errc::DegenerateSeries: return "DegenerateSeries";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace quorum
