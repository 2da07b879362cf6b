#include "carelink/simulation.hpp"

#include "carelink/codec.hpp"
#include "carelink/error.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace carelink {

namespace {

PersonaStep parse_step(const json& item) {
    if (item.is_string()) {
        return {item.get<std::string>(), {}};
    }
    if (!item.is_object()) {
        throw ValidationError("persona entries must be strings or objects");
    }
    PersonaStep step;
    if (item.contains("text")) {
        step.utterance = item.at("text").get<std::string>();
    } else if (item.contains("utterance")) {
        step.utterance = item.at("utterance").get<std::string>();
    } else {
        throw ValidationError("persona entry has no \"text\"");
    }
    if (item.contains("delay_ms")) {
        const auto ms = item.at("delay_ms").get<std::int64_t>();
        if (ms < 0) {
            throw ValidationError("persona delay_ms must not be negative");
        }
        step.delay = std::chrono::milliseconds(ms);
    }
    return step;
}

}  // namespace

Persona parse_persona(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("persona is not valid JSON: ") + e.what());
    }
    Persona persona;
    try {
        const json* list = &doc;
        if (doc.is_object()) {
            if (doc.contains("patient_id")) {
                persona.patient_id = doc.at("patient_id").get<std::string>();
            }
            if (doc.contains("protocol_id")) {
                persona.protocol_id = doc.at("protocol_id").get<std::string>();
            }
            if (doc.contains("initiator")) {
                persona.initiator = parse_initiator(doc.at("initiator").get<std::string>());
            }
            if (!doc.contains("utterances")) {
                throw ValidationError("persona object has no \"utterances\" list");
            }
            list = &doc.at("utterances");
        }
        if (!list->is_array()) {
            throw ValidationError("persona must be a list of utterances");
        }
        for (const auto& item : *list) {
            persona.steps.push_back(parse_step(item));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed persona: ") + e.what());
    }
    if (persona.steps.empty()) {
        throw ValidationError("persona has no utterances");
    }
    return persona;
}

Persona load_persona(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError(fmt::format("cannot read persona file {}", path.string()));
    }
    std::stringstream buf;
    buf << in.rdbuf();
    if (buf.str().find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ValidationError(fmt::format("persona file {} is empty", path.string()));
    }
    return parse_persona(buf.str());
}

SimulationResult run_simulation(SessionService& service, ManualClock& clock, const Persona& persona,
                                const std::string& patient_id, const std::string& protocol_id, Initiator initiator) {
    const auto pause = std::chrono::duration_cast<std::chrono::milliseconds>(service.engine().config().pause_timeout);
    auto session = service.start(patient_id, protocol_id, initiator);
    const auto id = session.session_id;

    for (std::size_t i = 0; i < persona.steps.size(); ++i) {
        if (session.is_terminal()) {
            return {session, persona.steps.size() - i};
        }
        auto remaining = persona.steps[i].delay;
        while (remaining.count() > 0) {
            const auto last = session.turns.empty() ? session.created : session.turns.back().timestamp;
            const auto deadline = last + pause;
            const auto until_deadline = deadline - clock.now();
            if (session.status == SessionStatus::paused || remaining < until_deadline) {
                clock.advance(remaining);
                break;
            }
            const auto step = std::max(until_deadline, std::chrono::milliseconds(0));
            clock.advance(step);
            remaining -= step;
            session = service.timeout(id).session;
        }
        session = service.patient_turn(id, persona.steps[i].utterance).session;
    }
    return {session, 0};
}

}  // namespace carelink
