#pragma once
// Persona replay: drives a session from a list of patient utterances, with
// optional pauses that exercise the reprompt path on a manual clock.

#include "carelink/session_service.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace carelink {

struct PersonaStep {
    std::string utterance;
    std::chrono::milliseconds delay{0};  // silence before the utterance
};

struct Persona {
    std::optional<std::string> patient_id;
    std::optional<std::string> protocol_id;
    std::optional<Initiator> initiator;
    std::vector<PersonaStep> steps;
};

// Either a JSON list of utterances, or an object with "utterances" plus
// optional "patient_id", "protocol_id" and "initiator". A list item may be a
// string or {"text": ..., "delay_ms": N}. ValidationError when there is
// nothing to say.
Persona parse_persona(std::string_view json_text);
Persona load_persona(const std::filesystem::path& path);

struct SimulationResult {
    Session session;
    std::size_t unused_steps = 0;  // utterances left when the session ended early
};

SimulationResult run_simulation(SessionService& service, ManualClock& clock, const Persona& persona,
                                const std::string& patient_id, const std::string& protocol_id, Initiator initiator);

}  // namespace carelink
