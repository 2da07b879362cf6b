#pragma once
// Patient-side session state machine: turn loop, content loopback,
// pause/re-prompt handling, closing and guardrail enforcement.
//
// Transition table (status x event -> action):
//
//   status                 | patient_utterance   | pause_timeout     | close
//   -----------------------+---------------------+-------------------+---------
//   active                 | converse            | reprompt_or_pause | complete
//   awaiting_confirmation  | resolve_loopback    | reprompt_or_pause | complete
//   paused                 | resume_and_converse | ignore            | complete
//   completed              | reject              | ignore            | reject
//   aborted                | reject              | ignore            | reject
//
// converse may leave the session active, awaiting_confirmation (a value was
// read back), completed (the reply matched a closing phrase) or aborted
// (max_rounds exceeded). reprompt_or_pause emits a reprompt turn, or moves to
// paused once the consecutive reprompt cap is reached.

#include "carelink/domain.hpp"
#include "carelink/guardrail.hpp"
#include "carelink/llm_gateway.hpp"
#include "carelink/loopback.hpp"
#include "carelink/prompt_engine.hpp"
#include "carelink/time.hpp"

#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace carelink {

enum class SessionEvent { patient_utterance, pause_timeout, close };

enum class TransitionAction {
    converse,
    resolve_loopback,
    resume_and_converse,
    reprompt_or_pause,
    ignore,
    complete,
    reject,
};

std::string_view to_string(SessionEvent e) noexcept;
std::string_view to_string(TransitionAction a) noexcept;

// Total over every (status, event) pair.
TransitionAction transition(SessionStatus status, SessionEvent event) noexcept;

struct EngineConfig {
    int max_rounds = 30;
    std::chrono::seconds pause_timeout{60};
    int max_consecutive_reprompts = 2;
    std::string reprompt_text = "Are you still there?";
    std::vector<std::string> closing_phrases = {"goodbye"};
    std::set<ValueKind> loopback_value_kinds = {ValueKind::scalar_1_to_10};

    // {slot} and {value} are replaced.
    std::string confirmation_template = "Just to confirm, your {slot} is {value}. Is that correct?";
    std::string reask_confirmation_prefix = "Sorry, I didn't catch that. ";
    std::string reask_question_prefix = "Sorry about that. Let me ask again. ";
    std::string abort_text =
        "Thank you for your time today. I will pass everything you told me along to your care team. Goodbye!";

    GuardrailConfig guardrail;
    CompletionDefaults completion;

    // Throws ConfigurationError when max_rounds < 1 or pause_timeout <= 0.
    void validate() const;
};

// Drives one session value at a time. Every mutating call is transactional:
// when it throws, the session passed in is left untouched.
class ConversationEngine {
public:
    ConversationEngine(const PromptEngine& prompts, LlmGateway& gateway, const Clock& clock, EngineConfig config = {});

    // Provider-initiated sessions open with a generated question; patient-initiated
    // sessions start with no turns.
    Session start_session(std::string session_id, const PatientProfile& profile, const ConversationProtocol& protocol,
                          Initiator initiator) const;

    // Appends the utterance and the assistant's reply; returns the reply.
    // Throws LifecycleError on terminal sessions, GatewayError when the LLM fails.
    Turn patient_turn(Session& session, const PatientProfile& profile, const ConversationProtocol& protocol,
                      std::string_view utterance) const;

    // Handles the patient's answer to a read-back. Requires awaiting_confirmation.
    Turn resolve_loopback(Session& session, const PatientProfile& profile, const ConversationProtocol& protocol,
                          std::string_view answer) const;

    // Timeout event at `now`. Returns the reprompt, or nullopt when the session
    // paused or the event was ignored. PreconditionError if the timeout has not elapsed.
    std::optional<Turn> handle_pause(Session& session, Timestamp now) const;

    // Explicit close: non-terminal sessions become completed.
    void close(Session& session) const;

    GuardrailResult guardrail_check(std::string_view reply) const { return guardrail_.check(reply); }

    // 1 + assistant turns produced by question prompts so far.
    static int next_round(const Session& session);

    const EngineConfig& config() const noexcept { return config_; }

private:
    Turn converse(Session& s, const PatientProfile& profile, const ConversationProtocol& protocol,
                  std::string_view utterance) const;
    Turn generate_reply(Session& s, const PatientProfile& profile, const ConversationProtocol& protocol,
                        const std::optional<LoopbackCandidate>& candidate, std::size_t question_turn) const;
    Turn append_turn(Session& s, Speaker speaker, std::string text, TurnKind kind) const;
    std::string confirmation_text(const ConversationProtocol& protocol, const LoopbackCandidate& c) const;
    bool is_closing(std::string_view reply) const;
    void finish(Session& s, SessionStatus status) const;

    const PromptEngine& prompts_;
    LlmGateway& gateway_;
    const Clock& clock_;
    EngineConfig config_;
    Guardrail guardrail_;
};

}  // namespace carelink
