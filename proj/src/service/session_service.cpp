#include "carelink/session_service.hpp"

#include "carelink/error.hpp"

#include <spdlog/spdlog.h>

namespace carelink {

SessionService::SessionService(Store& store, const ConversationEngine& engine, const Clock& clock)
    : store_(store), engine_(engine), clock_(clock) {}

void SessionService::on_completed(CompletionListener listener) {
    std::lock_guard lock(listeners_mu_);
    listeners_.push_back(std::move(listener));
}

std::shared_ptr<std::mutex> SessionService::lock_for(const std::string& session_id) {
    std::lock_guard lock(locks_mu_);
    auto& slot = locks_[session_id];
    if (!slot) {
        slot = std::make_shared<std::mutex>();
    }
    return slot;
}

void SessionService::notify_if_completed(const Session& before, const Session& after) {
    if (before.status == SessionStatus::completed || after.status != SessionStatus::completed) {
        return;
    }
    std::vector<CompletionListener> listeners;
    {
        std::lock_guard lock(listeners_mu_);
        listeners = listeners_;
    }
    for (const auto& listener : listeners) {
        try {
            listener(after.session_id);
        } catch (const std::exception& e) {
            spdlog::error("completion listener failed for session {}: {}", after.session_id, e.what());
        }
    }
}

Session SessionService::start(const std::string& patient_id, const std::string& protocol_id, Initiator initiator) {
    const auto profile = store_.get_patient(patient_id);
    const auto protocol = store_.get_protocol(protocol_id);
    auto session = engine_.start_session(store_.new_id("ses"), profile, protocol, initiator);
    store_.put_session(session);
    spdlog::info("session {} started ({}-initiated)", session.session_id, to_string(initiator));
    notify_if_completed(Session{}, session);
    return session;
}

SessionService::TurnResult SessionService::patient_turn(const std::string& session_id, std::string_view utterance) {
    auto guard = lock_for(session_id);
    std::lock_guard lock(*guard);
    auto session = store_.get_session(session_id);
    if (session.is_terminal()) {
        throw LifecycleError(fmt::format("session {} is {}; no further turns accepted", session_id,
                                         to_string(session.status)));
    }
    const auto profile = store_.get_patient(session.patient_id);
    const auto protocol = store_.get_protocol(session.protocol_id);
    const Session before = session;
    auto reply = engine_.patient_turn(session, profile, protocol, utterance);
    store_.put_session(session);
    notify_if_completed(before, session);
    return {std::move(session), std::move(reply)};
}

SessionService::PauseResult SessionService::timeout(const std::string& session_id, std::optional<Timestamp> now) {
    auto guard = lock_for(session_id);
    std::lock_guard lock(*guard);
    auto session = store_.get_session(session_id);
    const Session before = session;
    auto reprompt = engine_.handle_pause(session, now.value_or(clock_.now()));
    if (session != before) {
        store_.put_session(session);
    }
    return {std::move(session), std::move(reprompt)};
}

Session SessionService::close(const std::string& session_id) {
    auto guard = lock_for(session_id);
    std::lock_guard lock(*guard);
    auto session = store_.get_session(session_id);
    const Session before = session;
    engine_.close(session);
    store_.put_session(session);
    notify_if_completed(before, session);
    return session;
}

}  // namespace carelink
