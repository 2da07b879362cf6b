#include "carelink/conversation_engine.hpp"

#include "carelink/error.hpp"
#include "carelink/text.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace carelink {

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

bool restates_value(std::string_view reply, const LoopbackCandidate& c, ValueKind kind) {
    if (reply.find('?') == std::string_view::npos) {
        return false;
    }
    if (kind == ValueKind::scalar_1_to_10) {
        const auto v = text::parse_scale_number(c.value);
        return v && text::mentions_number(reply, *v);
    }
    return text::to_lower(reply).find(text::to_lower(c.value)) != std::string::npos;
}

}  // namespace

std::string_view to_string(SessionEvent e) noexcept {
    switch (e) {
        case SessionEvent::patient_utterance: return "patient_utterance";
        case SessionEvent::pause_timeout: return "pause_timeout";
        case SessionEvent::close: return "close";
    }
    return "unknown";
}

std::string_view to_string(TransitionAction a) noexcept {
    switch (a) {
        case TransitionAction::converse: return "converse";
        case TransitionAction::resolve_loopback: return "resolve_loopback";
        case TransitionAction::resume_and_converse: return "resume_and_converse";
        case TransitionAction::reprompt_or_pause: return "reprompt_or_pause";
        case TransitionAction::ignore: return "ignore";
        case TransitionAction::complete: return "complete";
        case TransitionAction::reject: return "reject";
    }
    return "unknown";
}

TransitionAction transition(SessionStatus status, SessionEvent event) noexcept {
    switch (status) {
        case SessionStatus::active:
            switch (event) {
                case SessionEvent::patient_utterance: return TransitionAction::converse;
                case SessionEvent::pause_timeout: return TransitionAction::reprompt_or_pause;
                case SessionEvent::close: return TransitionAction::complete;
            }
            break;
        case SessionStatus::awaiting_confirmation:
            switch (event) {
                case SessionEvent::patient_utterance: return TransitionAction::resolve_loopback;
                case SessionEvent::pause_timeout: return TransitionAction::reprompt_or_pause;
                case SessionEvent::close: return TransitionAction::complete;
            }
            break;
        case SessionStatus::paused:
            switch (event) {
                case SessionEvent::patient_utterance: return TransitionAction::resume_and_converse;
                case SessionEvent::pause_timeout: return TransitionAction::ignore;
                case SessionEvent::close: return TransitionAction::complete;
            }
            break;
        case SessionStatus::completed:
        case SessionStatus::aborted:
            return event == SessionEvent::pause_timeout ? TransitionAction::ignore : TransitionAction::reject;
    }
    return TransitionAction::reject;
}

void EngineConfig::validate() const {
    if (max_rounds < 1) {
        throw ConfigurationError(fmt::format("max_rounds must be at least 1, got {}", max_rounds));
    }
    if (pause_timeout.count() <= 0) {
        throw ConfigurationError("pause_timeout must be positive");
    }
    if (max_consecutive_reprompts < 0) {
        throw ConfigurationError("max_consecutive_reprompts must not be negative");
    }
}

ConversationEngine::ConversationEngine(const PromptEngine& prompts, LlmGateway& gateway, const Clock& clock,
                                       EngineConfig config)
    : prompts_(prompts), gateway_(gateway), clock_(clock), config_(std::move(config)), guardrail_(config_.guardrail) {
    config_.validate();
}

int ConversationEngine::next_round(const Session& session) {
    const auto generated = std::count_if(session.turns.begin(), session.turns.end(), [](const Turn& t) {
        return t.speaker == Speaker::assistant &&
               (t.kind == TurnKind::normal || t.kind == TurnKind::loopback_confirm_request);
    });
    return static_cast<int>(generated) + 1;
}

Turn ConversationEngine::append_turn(Session& s, Speaker speaker, std::string text, TurnKind kind) const {
    Turn t;
    t.turn_index = s.turns.size();
    t.speaker = speaker;
    t.text = std::move(text);
    t.timestamp = clock_.now();
    t.kind = kind;
    s.turns.push_back(t);
    return t;
}

void ConversationEngine::finish(Session& s, SessionStatus status) const {
    s.status = status;
    s.pending_loopback.reset();
    s.closed = clock_.now();
}

bool ConversationEngine::is_closing(std::string_view reply) const {
    return std::any_of(config_.closing_phrases.begin(), config_.closing_phrases.end(),
                       [&](const std::string& phrase) { return text::contains_phrase(reply, phrase); });
}

std::string ConversationEngine::confirmation_text(const ConversationProtocol& protocol,
                                                  const LoopbackCandidate& c) const {
    std::string slot_label = c.slot_name;
    std::replace(slot_label.begin(), slot_label.end(), '_', ' ');
    (void)protocol;
    auto out = config_.confirmation_template;
    replace_all(out, "{slot}", slot_label);
    replace_all(out, "{value}", c.value);
    return out;
}

Session ConversationEngine::start_session(std::string session_id, const PatientProfile& profile,
                                          const ConversationProtocol& protocol, Initiator initiator) const {
    Session s;
    s.session_id = std::move(session_id);
    s.patient_id = profile.patient_id;
    s.protocol_id = protocol.protocol_id;
    s.initiator = initiator;
    s.status = SessionStatus::active;
    s.created = clock_.now();
    if (initiator == Initiator::provider) {
        generate_reply(s, profile, protocol, std::nullopt, 0);
    }
    return s;
}

Turn ConversationEngine::generate_reply(Session& s, const PatientProfile& profile,
                                        const ConversationProtocol& protocol,
                                        const std::optional<LoopbackCandidate>& candidate,
                                        std::size_t question_turn) const {
    const int round = next_round(s);
    if (round > config_.max_rounds) {
        auto t = append_turn(s, Speaker::assistant, config_.abort_text, TurnKind::closing);
        finish(s, SessionStatus::aborted);
        return t;
    }

    std::optional<LoopbackDirective> directive;
    const KeySlot* slot = candidate ? protocol.find_slot(candidate->slot_name) : nullptr;
    if (candidate) {
        directive = LoopbackDirective{candidate->slot_name, slot ? slot->description : candidate->slot_name,
                                      candidate->value};
    }
    const auto bundle = prompts_.build_question_prompt(profile, protocol, s.turns, round, directive);
    std::optional<std::string> last_utterance;
    if (const Turn* last = s.last_turn(Speaker::patient)) {
        last_utterance = last->text;
    }
    auto reply = gateway_.complete(config_.completion.make(bundle, last_utterance));
    reply = guardrail_.check(reply).text;

    if (is_closing(reply)) {
        auto t = append_turn(s, Speaker::assistant, std::move(reply), TurnKind::closing);
        finish(s, SessionStatus::completed);
        return t;
    }
    if (candidate) {
        const auto kind = slot ? slot->value_kind : ValueKind::scalar_1_to_10;
        if (!restates_value(reply, *candidate, kind)) {
            reply = confirmation_text(protocol, *candidate);
        }
        auto t = append_turn(s, Speaker::assistant, std::move(reply), TurnKind::loopback_confirm_request);
        s.status = SessionStatus::awaiting_confirmation;
        s.pending_loopback = PendingLoopback{candidate->slot_name, candidate->value, question_turn, 0};
        return t;
    }
    auto t = append_turn(s, Speaker::assistant, std::move(reply), TurnKind::normal);
    s.status = SessionStatus::active;
    return t;
}

Turn ConversationEngine::converse(Session& s, const PatientProfile& profile, const ConversationProtocol& protocol,
                                  std::string_view utterance) const {
    if (text::trim(utterance).empty()) {
        throw ValidationError("patient utterance must not be empty");
    }
    std::optional<std::size_t> question_turn;
    for (std::size_t i = s.turns.size(); i-- > 0;) {
        if (s.turns[i].speaker == Speaker::assistant) {
            question_turn = i;
            break;
        }
    }
    append_turn(s, Speaker::patient, std::string(utterance), TurnKind::normal);
    std::optional<LoopbackCandidate> candidate;
    if (question_turn) {
        candidate = detect_loopback(protocol, s.turns[*question_turn].text, utterance, config_.loopback_value_kinds);
    }
    return generate_reply(s, profile, protocol, candidate, question_turn.value_or(0));
}

Turn ConversationEngine::patient_turn(Session& session, const PatientProfile& profile,
                                      const ConversationProtocol& protocol, std::string_view utterance) const {
    switch (transition(session.status, SessionEvent::patient_utterance)) {
        case TransitionAction::resolve_loopback:
            return resolve_loopback(session, profile, protocol, utterance);
        case TransitionAction::converse: {
            Session work = session;
            auto reply = converse(work, profile, protocol, utterance);
            session = std::move(work);
            return reply;
        }
        case TransitionAction::resume_and_converse: {
            Session work = session;
            work.status = SessionStatus::active;
            auto reply = converse(work, profile, protocol, utterance);
            session = std::move(work);
            return reply;
        }
        default:
            throw LifecycleError(fmt::format("session {} is {}; no further turns accepted", session.session_id,
                                             to_string(session.status)));
    }
}

Turn ConversationEngine::resolve_loopback(Session& session, const PatientProfile& profile,
                                          const ConversationProtocol& protocol, std::string_view answer) const {
    if (session.status != SessionStatus::awaiting_confirmation || !session.pending_loopback) {
        throw LifecycleError(fmt::format("session {} has no pending confirmation", session.session_id));
    }
    Session work = session;
    auto pending = *work.pending_loopback;
    const auto response = append_turn(work, Speaker::patient, std::string(answer), TurnKind::loopback_confirm_response);
    auto verdict = classify_confirmation(answer);

    Turn reply;
    if (verdict == Confirmation::affirm) {
        const KeySlot* slot = protocol.find_slot(pending.slot_name);
        work.collected_slots[pending.slot_name] =
            CollectedSlot{pending.candidate_value, slot ? slot->value_kind : ValueKind::scalar_1_to_10,
                          response.turn_index};
        work.pending_loopback.reset();
        work.status = SessionStatus::active;
        reply = generate_reply(work, profile, protocol, std::nullopt, 0);
    } else if (verdict == Confirmation::ambiguous && pending.reasks < 1) {
        const Turn* last_request = nullptr;
        for (auto it = work.turns.rbegin(); it != work.turns.rend(); ++it) {
            if (it->kind == TurnKind::loopback_confirm_request) {
                last_request = &*it;
                break;
            }
        }
        std::string text = config_.reask_confirmation_prefix +
                           (last_request ? last_request->text
                                         : confirmation_text(protocol, {pending.slot_name, pending.candidate_value}));
        ++work.pending_loopback->reasks;
        reply = append_turn(work, Speaker::assistant, std::move(text), TurnKind::loopback_confirm_request);
    } else {
        // Negative, or still ambiguous after one re-ask: the candidate is discarded.
        work.pending_loopback.reset();
        work.status = SessionStatus::active;
        const auto& question = work.turns.at(pending.question_turn).text;
        std::optional<LoopbackCandidate> correction;
        if (verdict == Confirmation::negate) {
            correction = detect_loopback(protocol, question, answer, config_.loopback_value_kinds);
        }
        if (correction) {
            reply = generate_reply(work, profile, protocol, correction, pending.question_turn);
        } else {
            reply = append_turn(work, Speaker::assistant, config_.reask_question_prefix + question, TurnKind::normal);
        }
    }
    session = std::move(work);
    return reply;
}

std::optional<Turn> ConversationEngine::handle_pause(Session& session, Timestamp now) const {
    if (transition(session.status, SessionEvent::pause_timeout) != TransitionAction::reprompt_or_pause) {
        return std::nullopt;
    }
    const auto last_activity = session.turns.empty() ? session.created : session.turns.back().timestamp;
    if (now - last_activity < config_.pause_timeout) {
        throw PreconditionError(fmt::format("pause timeout of {}s has not elapsed", config_.pause_timeout.count()));
    }
    int trailing_reprompts = 0;
    for (auto it = session.turns.rbegin(); it != session.turns.rend() && it->kind == TurnKind::reprompt; ++it) {
        ++trailing_reprompts;
    }
    if (trailing_reprompts >= config_.max_consecutive_reprompts) {
        session.status = SessionStatus::paused;
        session.pending_loopback.reset();
        return std::nullopt;
    }
    const Turn* question = nullptr;
    for (auto it = session.turns.rbegin(); it != session.turns.rend(); ++it) {
        if (it->speaker == Speaker::assistant && it->kind != TurnKind::reprompt) {
            question = &*it;
            break;
        }
    }
    Turn t;
    t.turn_index = session.turns.size();
    t.speaker = Speaker::assistant;
    t.text = question ? config_.reprompt_text + " " + question->text : config_.reprompt_text;
    t.timestamp = now;
    t.kind = TurnKind::reprompt;
    session.turns.push_back(t);
    return t;
}

void ConversationEngine::close(Session& session) const {
    if (transition(session.status, SessionEvent::close) != TransitionAction::complete) {
        throw LifecycleError(
            fmt::format("session {} is already {}", session.session_id, to_string(session.status)));
    }
    finish(session, SessionStatus::completed);
}

}  // namespace carelink
