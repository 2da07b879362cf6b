#include "carelink/domain.hpp"

#include "carelink/error.hpp"
#include "carelink/text.hpp"

#include <array>
#include <set>
#include <utility>

#include <fmt/format.h>

namespace carelink {

namespace {

template <typename Enum, std::size_t N>
using NameTable = std::array<std::pair<Enum, std::string_view>, N>;

constexpr NameTable<SessionStatus, 5> kStatusNames{{
    {SessionStatus::active, "active"},
    {SessionStatus::awaiting_confirmation, "awaiting_confirmation"},
    {SessionStatus::paused, "paused"},
    {SessionStatus::completed, "completed"},
    {SessionStatus::aborted, "aborted"},
}};

constexpr NameTable<RiskLevel, 3> kRiskNames{{
    {RiskLevel::low, "low"},
    {RiskLevel::moderate, "moderate"},
    {RiskLevel::high, "high"},
}};

constexpr NameTable<ActionKind, 6> kActionNames{{
    {ActionKind::note, "note"},
    {ActionKind::follow_up_call, "follow_up_call"},
    {ActionKind::schedule_visit, "schedule_visit"},
    {ActionKind::escalate, "escalate"},
    {ActionKind::mark_done, "mark_done"},
    {ActionKind::custom, "custom"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const NameTable<Enum, N>& table, Enum v) {
    for (const auto& [e, name] : table) {
        if (e == v) {
            return name;
        }
    }
    return "unknown";
}

template <typename Enum, std::size_t N>
Enum parse_name(const NameTable<Enum, N>& table, std::string_view s, std::string_view what) {
    for (const auto& [e, name] : table) {
        if (name == s) {
            return e;
        }
    }
    throw ValidationError(fmt::format("unknown {} '{}'", what, s));
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::lifecycle: return "lifecycle";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::configuration: return "configuration";
        case ErrorCode::gateway: return "gateway";
        case ErrorCode::storage: return "storage";
        case ErrorCode::unauthorized: return "unauthorized";
        case ErrorCode::forbidden: return "forbidden";
    }
    return "unknown";
}

std::string_view to_string(Speaker v) noexcept {
    return v == Speaker::patient ? "patient" : "assistant";
}

std::string_view to_string(TurnKind v) noexcept {
    switch (v) {
        case TurnKind::normal: return "normal";
        case TurnKind::loopback_confirm_request: return "loopback_confirm_request";
        case TurnKind::loopback_confirm_response: return "loopback_confirm_response";
        case TurnKind::reprompt: return "reprompt";
        case TurnKind::closing: return "closing";
    }
    return "unknown";
}

std::string_view to_string(ValueKind v) noexcept {
    switch (v) {
        case ValueKind::scalar_1_to_10: return "scalar_1_to_10";
        case ValueKind::free_text: return "free_text";
        case ValueKind::yes_no: return "yes_no";
    }
    return "unknown";
}

std::string_view to_string(Initiator v) noexcept {
    return v == Initiator::patient ? "patient" : "provider";
}

std::string_view to_string(SessionStatus v) noexcept { return name_of(kStatusNames, v); }
std::string_view to_string(RiskLevel v) noexcept { return name_of(kRiskNames, v); }
std::string_view to_string(ActionKind v) noexcept { return name_of(kActionNames, v); }

std::string_view to_string(StageState v) noexcept {
    switch (v) {
        case StageState::pending: return "pending";
        case StageState::succeeded: return "succeeded";
        case StageState::failed: return "failed";
    }
    return "unknown";
}

SessionStatus parse_session_status(std::string_view s) { return parse_name(kStatusNames, s, "session status"); }
RiskLevel parse_risk_level(std::string_view s) { return parse_name(kRiskNames, s, "risk level"); }
ActionKind parse_action_kind(std::string_view s) { return parse_name(kActionNames, s, "action kind"); }

Initiator parse_initiator(std::string_view s) {
    if (s == "patient") {
        return Initiator::patient;
    }
    if (s == "provider") {
        return Initiator::provider;
    }
    throw ValidationError(fmt::format("unknown initiator '{}'", s));
}

std::string_view risk_color(RiskLevel level) noexcept {
    switch (level) {
        case RiskLevel::low: return "green";
        case RiskLevel::moderate: return "yellow";
        case RiskLevel::high: return "red";
    }
    return "gray";
}

const KeySlot* ConversationProtocol::find_slot(std::string_view name) const {
    for (const auto& slot : key_information) {
        if (slot.slot_name == name) {
            return &slot;
        }
    }
    return nullptr;
}

const Turn* Session::last_turn(Speaker who) const {
    for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
        if (it->speaker == who) {
            return &*it;
        }
    }
    return nullptr;
}

std::string format_transcript(const std::vector<Turn>& turns) {
    std::string out;
    for (const auto& t : turns) {
        out += t.speaker == Speaker::assistant ? "Voice Assistant: " : "Patient: ";
        out += t.text;
        out += '\n';
    }
    return out;
}

std::vector<std::string> validate_session(const Session& session) {
    std::vector<std::string> violations;
    const auto& turns = session.turns;

    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].turn_index != i) {
            violations.push_back(
                fmt::format("turn at position {} has turn_index {} (expected {})", i, turns[i].turn_index, i));
        }
    }

    for (std::size_t i = 1; i < turns.size(); ++i) {
        if (turns[i].speaker != turns[i - 1].speaker) {
            continue;
        }
        const bool reprompt_after_assistant =
            turns[i].speaker == Speaker::assistant && turns[i].kind == TurnKind::reprompt;
        if (!reprompt_after_assistant) {
            violations.push_back(fmt::format("turns {} and {} are both by the {}", i - 1, i, to_string(turns[i].speaker)));
        }
    }

    const bool awaiting = session.status == SessionStatus::awaiting_confirmation;
    if (awaiting && !session.pending_loopback) {
        violations.push_back("status is awaiting_confirmation but no loopback is pending");
    }
    if (!awaiting && session.pending_loopback) {
        violations.push_back(
            fmt::format("loopback pending while status is {}", to_string(session.status)));
    }
    if (session.pending_loopback && session.pending_loopback->question_turn >= turns.size()) {
        violations.push_back("pending loopback references a turn that does not exist");
    }

    if (session.is_terminal() != session.closed.has_value()) {
        violations.push_back(session.is_terminal() ? "terminal session has no closed timestamp"
                                                   : "open session has a closed timestamp");
    }

    for (const auto& [name, slot] : session.collected_slots) {
        if (slot.value_kind != ValueKind::scalar_1_to_10) {
            continue;
        }
        const auto ct = slot.confirmed_turn;
        const auto value = text::parse_scale_number(slot.value);
        bool paired = ct && *ct >= 1 && *ct < turns.size() && turns[*ct].speaker == Speaker::patient &&
                      turns[*ct].kind == TurnKind::loopback_confirm_response && value;
        if (paired) {
            // The request is the nearest earlier assistant turn, skipping reprompts.
            std::size_t r = *ct;
            while (r > 0 && turns[r - 1].kind == TurnKind::reprompt) {
                --r;
            }
            paired = r > 0 && turns[r - 1].speaker == Speaker::assistant &&
                     turns[r - 1].kind == TurnKind::loopback_confirm_request &&
                     text::mentions_number(turns[r - 1].text, *value);
        }
        if (!paired) {
            violations.push_back(
                fmt::format("slot '{}' value '{}' lacks a preceding confirmation request/response pair", name, slot.value));
        }
    }
    return violations;
}

void validate_profile(const PatientProfile& profile) {
    if (profile.patient_id.empty()) {
        throw ValidationError("patient_id must not be empty");
    }
    if (profile.age <= 0) {
        throw ValidationError(fmt::format("patient age must be positive, got {}", profile.age));
    }
}

void validate_protocol(const ConversationProtocol& protocol) {
    if (protocol.protocol_id.empty()) {
        throw ValidationError("protocol_id must not be empty");
    }
    std::set<std::string_view> names;
    for (const auto& slot : protocol.key_information) {
        if (slot.slot_name.empty()) {
            throw ValidationError("key_information slot_name must not be empty");
        }
        if (!names.insert(slot.slot_name).second) {
            throw ValidationError(fmt::format("duplicate key_information slot '{}'", slot.slot_name));
        }
    }
}

}  // namespace carelink
