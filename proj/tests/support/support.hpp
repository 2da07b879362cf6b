#pragma once
// Shared fixtures for the unit and acceptance binaries.

#include "carelink/api_server.hpp"
#include "carelink/codec.hpp"
#include "carelink/conversation_engine.hpp"
#include "carelink/llm_gateway.hpp"
#include "carelink/prompt_engine.hpp"
#include "carelink/provider_pipeline.hpp"
#include "carelink/session_service.hpp"
#include "carelink/simulation.hpp"
#include "carelink/store.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace carelink::testing {

inline const std::string john_id = "pt_3f9a1c0d52e84b17";
inline const std::string mary_id = "pt_8c2e6b91a4d07f35";
inline const std::string post_surgery = "post-surgery";
inline const std::string daily_care = "daily-care";

std::filesystem::path source_dir();
std::filesystem::path fixture_path(const std::string& relative);
std::filesystem::path template_dir();
std::filesystem::path carelink_binary();
std::string read_file(const std::filesystem::path& path);

// Store pre-loaded with fixtures/bundle.jsonl.
std::unique_ptr<Store> bundled_store();
void load_bundle(Store& store);

// Transcript fixture parsed back into turns (all kinds normal).
std::vector<Turn> transcript_turns(const std::string& name);

// Removed with its contents on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Backend whose behaviour per request is a callback.
class LambdaBackend final : public LlmBackend {
public:
    using Fn = std::function<std::string(const CompletionRequest&)>;
    explicit LambdaBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const CompletionRequest& request) override {
        ++calls;
        return fn_(request);
    }
    std::atomic<int> calls{0};

private:
    Fn fn_;
};

// Delegates to an inner backend except for purposes marked down.
class FlakyBackend final : public LlmBackend {
public:
    explicit FlakyBackend(std::shared_ptr<LlmBackend> inner) : inner_(std::move(inner)) {}
    void set_down(PromptKind purpose, bool down);
    std::string complete(const CompletionRequest& request) override;

private:
    std::shared_ptr<LlmBackend> inner_;
    std::mutex mu_;
    std::set<PromptKind> down_;
};

class RecordingSink final : public NotificationSink {
public:
    void publish(ProviderNotification note) override {
        std::lock_guard lock(mu);
        note.event_id = notes.size() + 1;
        notes.push_back(std::move(note));
    }
    std::size_t count() {
        std::lock_guard lock(mu);
        return notes.size();
    }
    std::mutex mu;
    std::vector<ProviderNotification> notes;
};

// Full in-process stack over the scripted fixtures for one fixture log.
struct Deployment {
    // script: "b1", "b2" or empty for no backend.
    explicit Deployment(const std::string& script, EngineConfig config = {},
                        std::unique_ptr<Store> store = nullptr);

    ManualClock clock;
    std::unique_ptr<Store> store;
    PromptEngine prompts;
    LlmGateway gateway;
    std::shared_ptr<ScriptedBackend> scripted;
    std::shared_ptr<FlakyBackend> flaky;
    ConversationEngine engine;
    SessionService service;
    ProviderPipeline pipeline;
    std::shared_ptr<RecordingSink> sink;

    // Runs fixtures/personas/<name>.json against the service.
    SimulationResult replay(const std::string& persona_name);
};

inline const std::string provider_token = "prov-token";
inline const std::string john_token = "john-token";
inline const std::string mary_token = "mary-token";

struct HttpResult {
    int status = 0;
    std::string raw;
    json body;  // null when the body is not JSON
    std::multimap<std::string, std::string> headers;

    std::string header(const std::string& name) const;
};

// ApiServer on a free loopback port over a Deployment, with one provider
// token and a token each for John and Mary.
class ApiHarness {
public:
    explicit ApiHarness(const std::string& script = "b1");
    ~ApiHarness();

    HttpResult request(const std::string& method, const std::string& path, const std::string& token,
                       const json& body = nullptr, const std::map<std::string, std::string>& headers = {});
    HttpResult get(const std::string& path, const std::string& token) { return request("GET", path, token); }
    HttpResult post(const std::string& path, const std::string& token, const json& body = json::object(),
                    const std::map<std::string, std::string>& headers = {}) {
        return request("POST", path, token, body, headers);
    }

    Deployment d;
    ApiServer server;
    int port = 0;
};

}  // namespace carelink::testing
