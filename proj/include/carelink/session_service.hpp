#pragma once
// Store-backed front door to the conversation engine. Calls on one session
// are serialized; different sessions proceed in parallel. Every accepted
// event is persisted before the call returns.

#include "carelink/conversation_engine.hpp"
#include "carelink/store.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace carelink {

class SessionService {
public:
    using CompletionListener = std::function<void(const std::string& session_id)>;

    SessionService(Store& store, const ConversationEngine& engine, const Clock& clock);

    // Called after a session reaches completed and has been persisted.
    void on_completed(CompletionListener listener);

    // NotFoundError for an unknown patient or protocol.
    Session start(const std::string& patient_id, const std::string& protocol_id, Initiator initiator);

    struct TurnResult {
        Session session;
        Turn reply;
    };
    TurnResult patient_turn(const std::string& session_id, std::string_view utterance);

    struct PauseResult {
        Session session;
        std::optional<Turn> reprompt;
    };
    // `now` defaults to the service clock.
    PauseResult timeout(const std::string& session_id, std::optional<Timestamp> now = std::nullopt);

    Session close(const std::string& session_id);

    const ConversationEngine& engine() const noexcept { return engine_; }

private:
    std::shared_ptr<std::mutex> lock_for(const std::string& session_id);
    void notify_if_completed(const Session& before, const Session& after);

    Store& store_;
    const ConversationEngine& engine_;
    const Clock& clock_;
    std::mutex locks_mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
    std::mutex listeners_mu_;
    std::vector<CompletionListener> listeners_;
};

}  // namespace carelink
