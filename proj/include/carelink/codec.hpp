#pragma once
// Canonical JSON encoding for every domain type: snake_case fields,
// enums as their names, timestamps as ISO-8601 UTC strings.

#include "carelink/domain.hpp"
#include "carelink/error.hpp"

#include <nlohmann/json.hpp>

namespace carelink {

using json = nlohmann::json;

void to_json(json& j, const Timestamp& v);
void from_json(const json& j, Timestamp& v);

void to_json(json& j, const Speaker& v);
void from_json(const json& j, Speaker& v);
void to_json(json& j, const TurnKind& v);
void from_json(const json& j, TurnKind& v);
void to_json(json& j, const ValueKind& v);
void from_json(const json& j, ValueKind& v);
void to_json(json& j, const Initiator& v);
void from_json(const json& j, Initiator& v);
void to_json(json& j, const SessionStatus& v);
void from_json(const json& j, SessionStatus& v);
void to_json(json& j, const RiskLevel& v);
void from_json(const json& j, RiskLevel& v);
void to_json(json& j, const ActionKind& v);
void from_json(const json& j, ActionKind& v);
void to_json(json& j, const StageState& v);
void from_json(const json& j, StageState& v);

void to_json(json& j, const PatientProfile& v);
void from_json(const json& j, PatientProfile& v);
void to_json(json& j, const KeySlot& v);
void from_json(const json& j, KeySlot& v);
void to_json(json& j, const ConversationProtocol& v);
void from_json(const json& j, ConversationProtocol& v);
void to_json(json& j, const Turn& v);
void from_json(const json& j, Turn& v);
void to_json(json& j, const PendingLoopback& v);
void from_json(const json& j, PendingLoopback& v);
void to_json(json& j, const CollectedSlot& v);
void from_json(const json& j, CollectedSlot& v);
void to_json(json& j, const Session& v);
void from_json(const json& j, Session& v);
void to_json(json& j, const SymptomDetail& v);
void from_json(const json& j, SymptomDetail& v);
void to_json(json& j, const ClinicalSummary& v);
void from_json(const json& j, ClinicalSummary& v);
void to_json(json& j, const HighlightSpan& v);
void from_json(const json& j, HighlightSpan& v);
void to_json(json& j, const HighlightReport& v);
void from_json(const json& j, HighlightReport& v);
void to_json(json& j, const RiskAssessment& v);
void from_json(const json& j, RiskAssessment& v);
void to_json(json& j, const ProviderAction& v);
void from_json(const json& j, ProviderAction& v);
void to_json(json& j, const StageStatus& v);
void from_json(const json& j, StageStatus& v);
void to_json(json& j, const ProcessingRecord& v);
void from_json(const json& j, ProcessingRecord& v);

// json -> T, rethrowing any shape problem as ValidationError.
template <typename T>
T decode(const json& j) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed record: ") + e.what());
    }
}

template <typename T>
T decode_text(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    return decode<T>(j);
}

}  // namespace carelink
