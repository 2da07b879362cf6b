#pragma once
// HTTP JSON API under /v1 for the patient text client and the provider
// dashboard, plus the server-sent event stream of provider notifications.

#include "carelink/provider_pipeline.hpp"
#include "carelink/session_service.hpp"
#include "carelink/store.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
class Request;
class Response;
}  // namespace httplib

namespace carelink {

enum class AccessRole { patient, provider };

struct Principal {
    AccessRole role = AccessRole::patient;
    std::string patient_id;  // set for patients
    std::string token;
};

struct AuthConfig {
    std::string provider_token;
    std::map<std::string, std::string> patient_tokens;  // token -> patient_id

    // PROVIDER_TOKEN and PATIENT_TOKENS ("token=patient_id,token=patient_id").
    static AuthConfig from_env();
    static std::map<std::string, std::string> parse_patient_tokens(std::string_view spec);

    // nullopt for a missing or unknown token.
    std::optional<Principal> authenticate(std::string_view authorization_header) const;
};

// Ring buffer of recent notifications with blocking waits for stream readers.
class NotificationHub final : public NotificationSink {
public:
    explicit NotificationHub(std::size_t capacity = 256);

    void publish(ProviderNotification note) override;

    // Buffered events with event_id > after, oldest first.
    std::vector<ProviderNotification> since(std::uint64_t after) const;
    // Waits until an event newer than `after` exists, the timeout passes or the hub closes.
    void wait(std::uint64_t after, std::chrono::milliseconds timeout) const;
    std::uint64_t last_id() const;
    void close();
    bool closed() const;

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::deque<ProviderNotification> events_;
    std::uint64_t next_id_ = 1;
    bool closed_ = false;
};

// Runs provider processing off the request path.
class ProcessingQueue {
public:
    explicit ProcessingQueue(ProviderPipeline& pipeline);
    ~ProcessingQueue();
    ProcessingQueue(const ProcessingQueue&) = delete;
    ProcessingQueue& operator=(const ProcessingQueue&) = delete;

    void enqueue(std::string session_id);
    // Blocks until the queue is empty and no job is running.
    void wait_idle();
    void stop();

private:
    void run();

    ProviderPipeline& pipeline_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<std::string> jobs_;
    bool busy_ = false;
    bool stopping_ = false;
    std::thread worker_;
};

struct CachedResponse {
    int status = 200;
    std::string body;
    std::string content_type;
    std::string request_fingerprint;
};

// Bounded LRU of responses to requests that carried an Idempotency-Key.
class IdempotencyCache {
public:
    explicit IdempotencyCache(std::size_t capacity = 1024) : capacity_(capacity) {}

    std::optional<CachedResponse> find(const std::string& key);
    void put(const std::string& key, CachedResponse response);
    // Serializes concurrent requests that share a key.
    std::shared_ptr<std::mutex> key_lock(const std::string& key);

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::list<std::pair<std::string, CachedResponse>> order_;
    std::unordered_map<std::string, std::list<std::pair<std::string, CachedResponse>>::iterator> index_;
    std::unordered_map<std::string, std::weak_ptr<std::mutex>> locks_;
};

class ApiServer {
public:
    ApiServer(Store& store, SessionService& sessions, ProviderPipeline& pipeline, AuthConfig auth,
              const Clock& clock);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws ConfigurationError on failure.
    int bind(const std::string& host, int port);
    // Blocks serving requests until stop().
    void listen();
    void start_background();
    void stop();

    NotificationHub& hub() noexcept { return *hub_; }
    // Waits for queued provider processing to finish.
    void wait_idle() { queue_->wait_idle(); }

    // The OpenAPI document served at /v1/openapi.
    static std::string openapi_document();

private:
    void routes();

    Store& store_;
    SessionService& sessions_;
    ProviderPipeline& pipeline_;
    AuthConfig auth_;
    const Clock& clock_;
    std::shared_ptr<NotificationHub> hub_;
    std::shared_ptr<ProcessingQueue> queue_;
    IdempotencyCache idempotency_;
    std::unique_ptr<httplib::Server> server_;
    std::thread background_;
};

}  // namespace carelink
