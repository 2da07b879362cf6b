#pragma once
// Shared domain types for the patient and provider sides. No I/O here.

#include "carelink/time.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carelink {

enum class Speaker { patient, assistant };

enum class TurnKind {
    normal,
    loopback_confirm_request,
    loopback_confirm_response,
    reprompt,
    closing,
};

enum class ValueKind { scalar_1_to_10, free_text, yes_no };

enum class Initiator { patient, provider };

enum class SessionStatus { active, awaiting_confirmation, paused, completed, aborted };

enum class RiskLevel { low, moderate, high };

enum class ActionKind { note, follow_up_call, schedule_visit, escalate, mark_done, custom };

std::string_view to_string(Speaker v) noexcept;
std::string_view to_string(TurnKind v) noexcept;
std::string_view to_string(ValueKind v) noexcept;
std::string_view to_string(Initiator v) noexcept;
std::string_view to_string(SessionStatus v) noexcept;
std::string_view to_string(RiskLevel v) noexcept;
std::string_view to_string(ActionKind v) noexcept;

// Parsers throw ValidationError on unknown names.
SessionStatus parse_session_status(std::string_view s);
RiskLevel parse_risk_level(std::string_view s);
ActionKind parse_action_kind(std::string_view s);
Initiator parse_initiator(std::string_view s);

// Dashboard dot color: low=green, moderate=yellow, high=red.
std::string_view risk_color(RiskLevel level) noexcept;

struct PatientProfile {
    std::string patient_id;
    std::string name;
    int age = 0;
    std::string gender;
    std::string living_situation;
    std::vector<std::string> conditions;
    std::vector<std::string> medical_history;

    bool operator==(const PatientProfile&) const = default;
};

struct KeySlot {
    std::string slot_name;
    std::string description;
    ValueKind value_kind = ValueKind::free_text;

    bool operator==(const KeySlot&) const = default;
};

struct ConversationProtocol {
    std::string protocol_id;
    std::string task_summary;
    std::vector<std::string> question_protocol;
    std::vector<KeySlot> key_information;

    const KeySlot* find_slot(std::string_view name) const;

    bool operator==(const ConversationProtocol&) const = default;
};

struct Turn {
    std::size_t turn_index = 0;
    Speaker speaker = Speaker::patient;
    std::string text;
    Timestamp timestamp;
    TurnKind kind = TurnKind::normal;

    bool operator==(const Turn&) const = default;
};

struct PendingLoopback {
    std::string slot_name;
    std::string candidate_value;
    // Assistant turn whose question produced the candidate.
    std::size_t question_turn = 0;
    // Ambiguous confirmations already re-asked.
    int reasks = 0;

    bool operator==(const PendingLoopback&) const = default;
};

struct CollectedSlot {
    std::string value;
    ValueKind value_kind = ValueKind::free_text;
    // Index of the patient's affirming loopback_confirm_response turn.
    std::optional<std::size_t> confirmed_turn;

    bool operator==(const CollectedSlot&) const = default;
};

struct Session {
    std::string session_id;
    std::string patient_id;
    std::string protocol_id;
    Initiator initiator = Initiator::patient;
    std::vector<Turn> turns;
    SessionStatus status = SessionStatus::active;
    std::optional<PendingLoopback> pending_loopback;
    std::map<std::string, CollectedSlot> collected_slots;
    Timestamp created;
    std::optional<Timestamp> closed;

    bool is_terminal() const noexcept {
        return status == SessionStatus::completed || status == SessionStatus::aborted;
    }
    const Turn* last_turn(Speaker who) const;

    bool operator==(const Session&) const = default;
};

struct SymptomDetail {
    std::string label;
    std::string value;

    bool operator==(const SymptomDetail&) const = default;
};

struct ClinicalSummary {
    std::string session_id;
    int version = 1;
    std::string chief_concern;
    std::vector<SymptomDetail> symptom_details;
    std::vector<std::string> patient_questions;
    std::vector<std::string> additional_notes;
    std::string raw_model_output;
    bool parse_warning = false;

    bool operator==(const ClinicalSummary&) const = default;
};

struct HighlightSpan {
    std::string session_id;
    std::size_t turn_index = 0;
    std::size_t char_start = 0;  // half-open byte offsets into the turn text
    std::size_t char_end = 0;
    std::string quote;

    bool operator==(const HighlightSpan&) const = default;
};

struct HighlightReport {
    std::string session_id;
    int version = 1;
    std::vector<HighlightSpan> spans;
    std::size_t dropped_quotes = 0;
    std::string raw_model_output;

    bool operator==(const HighlightReport&) const = default;
};

struct RiskAssessment {
    std::string session_id;
    int version = 1;
    std::optional<RiskLevel> level;
    std::string reasoning;
    bool needs_human_review = false;
    std::string raw_model_output;

    bool operator==(const RiskAssessment&) const = default;
};

struct ProviderAction {
    std::string action_id;
    std::string session_id;
    std::string author;
    ActionKind kind = ActionKind::note;
    std::string body;
    Timestamp timestamp;

    bool operator==(const ProviderAction&) const = default;
};

enum class StageState { pending, succeeded, failed };
std::string_view to_string(StageState v) noexcept;

struct StageStatus {
    StageState state = StageState::pending;
    std::string error;  // last failure message, empty on success
    int attempts = 0;

    bool retryable() const noexcept { return state != StageState::succeeded; }
    bool operator==(const StageStatus&) const = default;
};

// Provider-pipeline bookkeeping for one session.
struct ProcessingRecord {
    std::string session_id;
    StageStatus summary;
    StageStatus highlights;
    StageStatus risk;
    bool notified = false;
    Timestamp updated;

    bool complete() const noexcept {
        return summary.state == StageState::succeeded && highlights.state == StageState::succeeded &&
               risk.state == StageState::succeeded;
    }
    bool operator==(const ProcessingRecord&) const = default;
};

// "Voice Assistant: ..." / "Patient: ..." lines, newline-terminated.
std::string format_transcript(const std::vector<Turn>& turns);

// Returns one human-readable line per broken Session invariant; empty when valid.
std::vector<std::string> validate_session(const Session& session);

// Throw ValidationError when the record breaks its type invariants.
void validate_profile(const PatientProfile& profile);
void validate_protocol(const ConversationProtocol& protocol);

}  // namespace carelink
