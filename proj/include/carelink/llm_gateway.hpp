#pragma once
// Uniform completion interface over a live chat-completion HTTP backend and a
// deterministic scripted backend used for tests and transcript replays.

#include "carelink/chat.hpp"
#include "carelink/error.hpp"
#include "carelink/prompt_engine.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace carelink {

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::string backend_id;  // empty selects the gateway default

    // Routing metadata. Never sent to a live backend.
    PromptKind purpose = PromptKind::question;
    std::optional<std::string> last_patient_utterance;

    // Throws ValidationError when temperature is outside [0, 2] or the token cap is not positive.
    void validate() const;
};

// Decoding defaults per call purpose.
struct CompletionDefaults {
    double question_temperature = 0.7;
    double provider_temperature = 0.0;
    int question_max_tokens = 256;
    int summary_max_tokens = 800;
    int highlight_max_tokens = 600;
    int risk_max_tokens = 300;

    CompletionRequest make(const PromptBundle& bundle, std::optional<std::string> last_patient_utterance = {}) const;
};

enum class GatewayErrorKind {
    timeout,
    rate_limit,
    auth,
    malformed_response,
    unavailable,    // connection failure or 5xx
    rejected,       // other 4xx
    scripted_miss,  // scripted backend has no matching exchange
    not_configured,
};

std::string_view to_string(GatewayErrorKind kind) noexcept;

class GatewayError : public Error {
public:
    GatewayError(GatewayErrorKind kind, const std::string& what) : Error(ErrorCode::gateway, what), kind_(kind) {}

    GatewayErrorKind kind() const noexcept { return kind_; }
    bool retryable() const noexcept {
        return kind_ == GatewayErrorKind::timeout || kind_ == GatewayErrorKind::rate_limit ||
               kind_ == GatewayErrorKind::unavailable;
    }

private:
    GatewayErrorKind kind_;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

struct ScriptedExchange {
    // Exactly one of the two keys is set.
    std::optional<std::string> utterance;  // exact last patient utterance
    std::optional<std::size_t> index;      // ordinal of the call among calls of the same purpose
    PromptKind purpose = PromptKind::question;
    std::string response;
};

// Closed-world replay backend: an unmatched request is a scripted_miss error.
// Lookup prefers the utterance key, then the ordinal key.
class ScriptedBackend final : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<ScriptedExchange> script);

    // JSON list of {"utterance"|"index", "response", optional "purpose"}.
    static std::shared_ptr<ScriptedBackend> load_file(const std::filesystem::path& path);
    static std::vector<ScriptedExchange> parse_script(std::string_view json_text);

    std::string complete(const CompletionRequest& request) override;

    // Rewinds the ordinal counters.
    void reset();

private:
    using UtteranceKey = std::pair<PromptKind, std::string>;
    using IndexKey = std::pair<PromptKind, std::size_t>;

    std::map<UtteranceKey, std::string> by_utterance_;
    std::map<IndexKey, std::string> by_index_;
    std::map<PromptKind, std::size_t> calls_;
    std::mutex mu_;
};

struct HttpBackendConfig {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{30'000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    int requests_per_minute = 0;  // 0 disables client-side rate limiting

    // Reads LLM_BASE_URL, LLM_MODEL, LLM_API_KEY. Throws ConfigurationError when unset.
    static HttpBackendConfig from_env();
};

// OpenAI-style POST {base_url}/chat/completions.
class HttpChatBackend final : public LlmBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config);

    std::string complete(const CompletionRequest& request) override;

    std::size_t requests_sent() const noexcept;

private:
    std::string attempt(const std::string& body);
    void wait_for_rate_slot();

    HttpBackendConfig config_;
    std::string origin_;
    std::string path_;
    mutable std::mutex mu_;
    std::chrono::steady_clock::time_point next_slot_{};
    std::size_t requests_sent_ = 0;
};

class LlmGateway {
public:
    void register_backend(std::string id, std::shared_ptr<LlmBackend> backend, bool make_default = false);

    // Throws GatewayError(not_configured) when no backend matches.
    std::string complete(const CompletionRequest& request);

    bool has_backend() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<LlmBackend>, std::less<>> backends_;
    std::string default_id_;
};

}  // namespace carelink
