#include "carelink/codec.hpp"

namespace carelink {

namespace {

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        out.reset();
    } else {
        out = it->get<T>();
    }
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    if (v) {
        j[key] = *v;
    } else {
        j[key] = nullptr;
    }
}

}  // namespace

void to_json(json& j, const Timestamp& v) { j = v.to_iso8601(); }
void from_json(const json& j, Timestamp& v) { v = Timestamp::parse_iso8601(j.get<std::string>()); }

void to_json(json& j, const Speaker& v) { j = to_string(v); }
void from_json(const json& j, Speaker& v) {
    const auto s = j.get<std::string>();
    if (s == "patient") {
        v = Speaker::patient;
    } else if (s == "assistant") {
        v = Speaker::assistant;
    } else {
        throw ValidationError("unknown speaker '" + s + "'");
    }
}

void to_json(json& j, const TurnKind& v) { j = to_string(v); }
void from_json(const json& j, TurnKind& v) {
    const auto s = j.get<std::string>();
    for (auto k : {TurnKind::normal, TurnKind::loopback_confirm_request, TurnKind::loopback_confirm_response,
                   TurnKind::reprompt, TurnKind::closing}) {
        if (to_string(k) == s) {
            v = k;
            return;
        }
    }
    throw ValidationError("unknown turn kind '" + s + "'");
}

void to_json(json& j, const ValueKind& v) { j = to_string(v); }
void from_json(const json& j, ValueKind& v) {
    const auto s = j.get<std::string>();
    for (auto k : {ValueKind::scalar_1_to_10, ValueKind::free_text, ValueKind::yes_no}) {
        if (to_string(k) == s) {
            v = k;
            return;
        }
    }
    throw ValidationError("unknown value kind '" + s + "'");
}

void to_json(json& j, const Initiator& v) { j = to_string(v); }
void from_json(const json& j, Initiator& v) { v = parse_initiator(j.get<std::string>()); }
void to_json(json& j, const SessionStatus& v) { j = to_string(v); }
void from_json(const json& j, SessionStatus& v) { v = parse_session_status(j.get<std::string>()); }
void to_json(json& j, const RiskLevel& v) { j = to_string(v); }
void from_json(const json& j, RiskLevel& v) { v = parse_risk_level(j.get<std::string>()); }
void to_json(json& j, const ActionKind& v) { j = to_string(v); }
void from_json(const json& j, ActionKind& v) { v = parse_action_kind(j.get<std::string>()); }

void to_json(json& j, const StageState& v) { j = to_string(v); }
void from_json(const json& j, StageState& v) {
    const auto s = j.get<std::string>();
    for (auto k : {StageState::pending, StageState::succeeded, StageState::failed}) {
        if (to_string(k) == s) {
            v = k;
            return;
        }
    }
    throw ValidationError("unknown stage state '" + s + "'");
}

void to_json(json& j, const PatientProfile& v) {
    j = json{{"patient_id", v.patient_id},
             {"name", v.name},
             {"age", v.age},
             {"gender", v.gender},
             {"living_situation", v.living_situation},
             {"conditions", v.conditions},
             {"medical_history", v.medical_history}};
}
void from_json(const json& j, PatientProfile& v) {
    j.at("patient_id").get_to(v.patient_id);
    j.at("name").get_to(v.name);
    j.at("age").get_to(v.age);
    j.at("gender").get_to(v.gender);
    j.at("living_situation").get_to(v.living_situation);
    j.at("conditions").get_to(v.conditions);
    j.at("medical_history").get_to(v.medical_history);
}

void to_json(json& j, const KeySlot& v) {
    j = json{{"slot_name", v.slot_name}, {"description", v.description}, {"value_kind", v.value_kind}};
}
void from_json(const json& j, KeySlot& v) {
    j.at("slot_name").get_to(v.slot_name);
    j.at("description").get_to(v.description);
    j.at("value_kind").get_to(v.value_kind);
}

void to_json(json& j, const ConversationProtocol& v) {
    j = json{{"protocol_id", v.protocol_id},
             {"task_summary", v.task_summary},
             {"question_protocol", v.question_protocol},
             {"key_information", v.key_information}};
}
void from_json(const json& j, ConversationProtocol& v) {
    j.at("protocol_id").get_to(v.protocol_id);
    j.at("task_summary").get_to(v.task_summary);
    j.at("question_protocol").get_to(v.question_protocol);
    j.at("key_information").get_to(v.key_information);
}

void to_json(json& j, const Turn& v) {
    j = json{{"turn_index", v.turn_index},
             {"speaker", v.speaker},
             {"text", v.text},
             {"timestamp", v.timestamp},
             {"kind", v.kind}};
}
void from_json(const json& j, Turn& v) {
    j.at("turn_index").get_to(v.turn_index);
    j.at("speaker").get_to(v.speaker);
    j.at("text").get_to(v.text);
    j.at("timestamp").get_to(v.timestamp);
    j.at("kind").get_to(v.kind);
}

void to_json(json& j, const PendingLoopback& v) {
    j = json{{"slot_name", v.slot_name},
             {"candidate_value", v.candidate_value},
             {"question_turn", v.question_turn},
             {"reasks", v.reasks}};
}
void from_json(const json& j, PendingLoopback& v) {
    j.at("slot_name").get_to(v.slot_name);
    j.at("candidate_value").get_to(v.candidate_value);
    j.at("question_turn").get_to(v.question_turn);
    v.reasks = j.value("reasks", 0);
}

void to_json(json& j, const CollectedSlot& v) {
    j = json{{"value", v.value}, {"value_kind", v.value_kind}};
    put_optional(j, "confirmed_turn", v.confirmed_turn);
}
void from_json(const json& j, CollectedSlot& v) {
    j.at("value").get_to(v.value);
    j.at("value_kind").get_to(v.value_kind);
    get_optional(j, "confirmed_turn", v.confirmed_turn);
}

void to_json(json& j, const Session& v) {
    j = json{{"session_id", v.session_id},
             {"patient_id", v.patient_id},
             {"protocol_id", v.protocol_id},
             {"initiator", v.initiator},
             {"turns", v.turns},
             {"status", v.status},
             {"collected_slots", v.collected_slots},
             {"created", v.created}};
    put_optional(j, "pending_loopback", v.pending_loopback);
    put_optional(j, "closed", v.closed);
}
void from_json(const json& j, Session& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("patient_id").get_to(v.patient_id);
    j.at("protocol_id").get_to(v.protocol_id);
    j.at("initiator").get_to(v.initiator);
    j.at("turns").get_to(v.turns);
    j.at("status").get_to(v.status);
    j.at("collected_slots").get_to(v.collected_slots);
    j.at("created").get_to(v.created);
    get_optional(j, "pending_loopback", v.pending_loopback);
    get_optional(j, "closed", v.closed);
}

void to_json(json& j, const SymptomDetail& v) { j = json{{"label", v.label}, {"value", v.value}}; }
void from_json(const json& j, SymptomDetail& v) {
    j.at("label").get_to(v.label);
    j.at("value").get_to(v.value);
}

void to_json(json& j, const ClinicalSummary& v) {
    j = json{{"session_id", v.session_id},
             {"version", v.version},
             {"chief_concern", v.chief_concern},
             {"symptom_details", v.symptom_details},
             {"patient_questions", v.patient_questions},
             {"additional_notes", v.additional_notes},
             {"raw_model_output", v.raw_model_output},
             {"parse_warning", v.parse_warning}};
}
void from_json(const json& j, ClinicalSummary& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("version").get_to(v.version);
    j.at("chief_concern").get_to(v.chief_concern);
    j.at("symptom_details").get_to(v.symptom_details);
    j.at("patient_questions").get_to(v.patient_questions);
    j.at("additional_notes").get_to(v.additional_notes);
    j.at("raw_model_output").get_to(v.raw_model_output);
    v.parse_warning = j.value("parse_warning", false);
}

void to_json(json& j, const HighlightSpan& v) {
    j = json{{"session_id", v.session_id},
             {"turn_index", v.turn_index},
             {"char_start", v.char_start},
             {"char_end", v.char_end},
             {"quote", v.quote}};
}
void from_json(const json& j, HighlightSpan& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("turn_index").get_to(v.turn_index);
    j.at("char_start").get_to(v.char_start);
    j.at("char_end").get_to(v.char_end);
    j.at("quote").get_to(v.quote);
}

void to_json(json& j, const HighlightReport& v) {
    j = json{{"session_id", v.session_id},
             {"version", v.version},
             {"spans", v.spans},
             {"dropped_quotes", v.dropped_quotes},
             {"raw_model_output", v.raw_model_output}};
}
void from_json(const json& j, HighlightReport& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("version").get_to(v.version);
    j.at("spans").get_to(v.spans);
    j.at("dropped_quotes").get_to(v.dropped_quotes);
    j.at("raw_model_output").get_to(v.raw_model_output);
}

void to_json(json& j, const RiskAssessment& v) {
    j = json{{"session_id", v.session_id},
             {"version", v.version},
             {"reasoning", v.reasoning},
             {"needs_human_review", v.needs_human_review},
             {"raw_model_output", v.raw_model_output}};
    put_optional(j, "level", v.level);
}
void from_json(const json& j, RiskAssessment& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("version").get_to(v.version);
    get_optional(j, "level", v.level);
    j.at("reasoning").get_to(v.reasoning);
    j.at("needs_human_review").get_to(v.needs_human_review);
    j.at("raw_model_output").get_to(v.raw_model_output);
}

void to_json(json& j, const ProviderAction& v) {
    j = json{{"action_id", v.action_id},
             {"session_id", v.session_id},
             {"author", v.author},
             {"kind", v.kind},
             {"body", v.body},
             {"timestamp", v.timestamp}};
}
void from_json(const json& j, ProviderAction& v) {
    j.at("action_id").get_to(v.action_id);
    j.at("session_id").get_to(v.session_id);
    j.at("author").get_to(v.author);
    j.at("kind").get_to(v.kind);
    j.at("body").get_to(v.body);
    j.at("timestamp").get_to(v.timestamp);
}

void to_json(json& j, const StageStatus& v) {
    j = json{{"state", v.state}, {"error", v.error}, {"attempts", v.attempts}};
}
void from_json(const json& j, StageStatus& v) {
    j.at("state").get_to(v.state);
    j.at("error").get_to(v.error);
    j.at("attempts").get_to(v.attempts);
}

void to_json(json& j, const ProcessingRecord& v) {
    j = json{{"session_id", v.session_id},
             {"summary", v.summary},
             {"highlights", v.highlights},
             {"risk", v.risk},
             {"notified", v.notified},
             {"updated", v.updated}};
}
void from_json(const json& j, ProcessingRecord& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("summary").get_to(v.summary);
    j.at("highlights").get_to(v.highlights);
    j.at("risk").get_to(v.risk);
    j.at("notified").get_to(v.notified);
    j.at("updated").get_to(v.updated);
}

}  // namespace carelink
