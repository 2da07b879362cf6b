#include "carelink/api_server.hpp"

#include "carelink/codec.hpp"
#include "carelink/error.hpp"
#include "carelink/llm_gateway.hpp"
#include "carelink/text.hpp"

#include <httplib.h>

#include <cstdlib>
#include <functional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace carelink {

namespace {

constexpr const char* kJson = "application/json";

struct HttpError {
    int status;
    std::string code;
    std::string message;
};

HttpError forbidden(std::string message) { return {403, "forbidden", std::move(message)}; }

int status_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict:
        case ErrorCode::lifecycle:
        case ErrorCode::precondition: return 409;
        case ErrorCode::invalid_argument: return 422;
        case ErrorCode::unauthorized: return 401;
        case ErrorCode::forbidden: return 403;
        case ErrorCode::gateway: {
            const auto* g = dynamic_cast<const GatewayError*>(&e);
            return g && g->kind() == GatewayErrorKind::timeout ? 504 : 502;
        }
        case ErrorCode::configuration:
        case ErrorCode::storage: return 500;
    }
    return 500;
}

std::string error_body(std::string_view code, std::string_view message) {
    return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

json parse_body(const httplib::Request& req, bool required = true) {
    if (text::trim(req.body).empty()) {
        if (required) {
            throw ValidationError("request body must be a JSON object");
        }
        return json::object();
    }
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON body: ") + e.what());
    }
    if (!body.is_object()) {
        throw ValidationError("request body must be a JSON object");
    }
    return body;
}

std::string required_string(const json& body, const char* field) {
    if (!body.contains(field) || !body[field].is_string() || body[field].get_ref<const std::string&>().empty()) {
        throw ValidationError(fmt::format("field '{}' must be a non-empty string", field));
    }
    return body[field].get<std::string>();
}

std::optional<std::string> optional_string(const json& body, const char* field) {
    if (!body.contains(field) || body[field].is_null()) {
        return std::nullopt;
    }
    if (!body[field].is_string()) {
        throw ValidationError(fmt::format("field '{}' must be a string", field));
    }
    return body[field].get<std::string>();
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) {
        return fallback;
    }
    const auto v = req.get_param_value(name);
    std::size_t pos = 0;
    try {
        const auto n = std::stoll(v, &pos);
        if (pos == v.size() && n >= 0) {
            return static_cast<std::size_t>(n);
        }
    } catch (const std::exception&) {
    }
    throw ValidationError(fmt::format("query parameter '{}' must be a non-negative integer", name));
}

json risk_view(const std::optional<RiskAssessment>& risk) {
    if (!risk) {
        return nullptr;
    }
    json j = *risk;
    j["risk_color"] = risk->level ? risk_color(*risk->level) : std::string_view("gray");
    return j;
}

json queue_item(const SessionIndexRow& row, const std::string& patient_name) {
    json level = nullptr;
    std::string_view color = "gray";
    switch (row.risk) {
        case RiskBucket::low: level = "low"; color = risk_color(RiskLevel::low); break;
        case RiskBucket::moderate: level = "moderate"; color = risk_color(RiskLevel::moderate); break;
        case RiskBucket::high: level = "high"; color = risk_color(RiskLevel::high); break;
        case RiskBucket::needs_review:
        case RiskBucket::unassessed: break;
    }
    return {
        {"session_id", row.session_id},
        {"patient_id", row.patient_id},
        {"patient_name", patient_name},
        {"status", row.status},
        {"created", row.created},
        {"risk", to_string(row.risk)},
        {"risk_level", level},
        {"needs_human_review", row.risk == RiskBucket::needs_review},
        {"risk_color", color},
        {"done", row.done},
    };
}

std::string sse_frame(const ProviderNotification& note) {
    json data = {
        {"session_id", note.session_id},
        {"patient_id", note.patient_id},
        {"risk_level", note.level ? json(*note.level) : json(nullptr)},
        {"risk_color", note.level ? risk_color(*note.level) : std::string_view("gray")},
        {"needs_human_review", note.needs_human_review},
        {"at", note.at},
    };
    return fmt::format("id: {}\nevent: session_processed\ndata: {}\n\n", note.event_id, data.dump());
}

}  // namespace

// --- auth

std::map<std::string, std::string> AuthConfig::parse_patient_tokens(std::string_view spec) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto comma = spec.find(',', pos);
        if (comma == std::string_view::npos) {
            comma = spec.size();
        }
        const auto entry = text::trim(spec.substr(pos, comma - pos));
        pos = comma + 1;
        if (entry.empty()) {
            continue;
        }
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos || eq == 0 || eq + 1 == entry.size()) {
            throw ConfigurationError(fmt::format("PATIENT_TOKENS entry '{}' is not token=patient_id", entry));
        }
        out.emplace(std::string(text::trim(entry.substr(0, eq))), std::string(text::trim(entry.substr(eq + 1))));
    }
    return out;
}

AuthConfig AuthConfig::from_env() {
    AuthConfig cfg;
    const char* provider = std::getenv("PROVIDER_TOKEN");
    if (!provider || !*provider) {
        throw ConfigurationError("PROVIDER_TOKEN is not set");
    }
    cfg.provider_token = provider;
    if (const char* patients = std::getenv("PATIENT_TOKENS")) {
        cfg.patient_tokens = parse_patient_tokens(patients);
    }
    return cfg;
}

std::optional<Principal> AuthConfig::authenticate(std::string_view header) const {
    constexpr std::string_view scheme = "Bearer ";
    if (!text::starts_with_ci(header, scheme)) {
        return std::nullopt;
    }
    const auto token = std::string(text::trim(header.substr(scheme.size())));
    if (token.empty()) {
        return std::nullopt;
    }
    if (!provider_token.empty() && token == provider_token) {
        return Principal{AccessRole::provider, {}, token};
    }
    if (auto it = patient_tokens.find(token); it != patient_tokens.end()) {
        return Principal{AccessRole::patient, it->second, token};
    }
    return std::nullopt;
}

// --- notification hub

NotificationHub::NotificationHub(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void NotificationHub::publish(ProviderNotification note) {
    {
        std::lock_guard lock(mu_);
        note.event_id = next_id_++;
        events_.push_back(std::move(note));
        while (events_.size() > capacity_) {
            events_.pop_front();
        }
    }
    cv_.notify_all();
}

std::vector<ProviderNotification> NotificationHub::since(std::uint64_t after) const {
    std::lock_guard lock(mu_);
    std::vector<ProviderNotification> out;
    for (const auto& e : events_) {
        if (e.event_id > after) {
            out.push_back(e);
        }
    }
    return out;
}

void NotificationHub::wait(std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || next_id_ - 1 > after; });
}

std::uint64_t NotificationHub::last_id() const {
    std::lock_guard lock(mu_);
    return next_id_ - 1;
}

void NotificationHub::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool NotificationHub::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

// --- processing queue

ProcessingQueue::ProcessingQueue(ProviderPipeline& pipeline) : pipeline_(pipeline), worker_([this] { run(); }) {}

ProcessingQueue::~ProcessingQueue() { stop(); }

void ProcessingQueue::enqueue(std::string session_id) {
    {
        std::lock_guard lock(mu_);
        if (stopping_) {
            return;
        }
        jobs_.push_back(std::move(session_id));
    }
    cv_.notify_one();
}

void ProcessingQueue::wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [&] { return (jobs_.empty() && !busy_) || stopping_; });
}

void ProcessingQueue::stop() {
    {
        std::lock_guard lock(mu_);
        if (stopping_ && !worker_.joinable()) {
            return;
        }
        stopping_ = true;
    }
    cv_.notify_all();
    idle_cv_.notify_all();
    if (worker_.joinable()) {
        worker_.join();
    }
}

void ProcessingQueue::run() {
    for (;;) {
        std::string job;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
            if (stopping_) {
                return;
            }
            job = std::move(jobs_.front());
            jobs_.pop_front();
            busy_ = true;
        }
        try {
            const auto record = pipeline_.process_session(job);
            if (!record.complete()) {
                spdlog::warn("session {}: provider processing incomplete; retry via /process", job);
            }
        } catch (const std::exception& e) {
            spdlog::error("session {}: provider processing failed: {}", job, e.what());
        }
        {
            std::lock_guard lock(mu_);
            busy_ = false;
        }
        idle_cv_.notify_all();
    }
}

// --- idempotency

std::optional<CachedResponse> IdempotencyCache::find(const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) {
        return std::nullopt;
    }
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
}

void IdempotencyCache::put(const std::string& key, CachedResponse response) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
        it->second->second = std::move(response);
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.emplace_front(key, std::move(response));
    index_[key] = order_.begin();
    while (order_.size() > capacity_) {
        index_.erase(order_.back().first);
        order_.pop_back();
    }
}

std::shared_ptr<std::mutex> IdempotencyCache::key_lock(const std::string& key) {
    std::lock_guard lock(mu_);
    for (auto it = locks_.begin(); it != locks_.end();) {
        it = it->second.expired() ? locks_.erase(it) : std::next(it);
    }
    auto& slot = locks_[key];
    auto existing = slot.lock();
    if (!existing) {
        existing = std::make_shared<std::mutex>();
        slot = existing;
    }
    return existing;
}

// --- server

ApiServer::ApiServer(Store& store, SessionService& sessions, ProviderPipeline& pipeline, AuthConfig auth,
                     const Clock& clock)
    : store_(store),
      sessions_(sessions),
      pipeline_(pipeline),
      auth_(std::move(auth)),
      clock_(clock),
      hub_(std::make_shared<NotificationHub>()),
      queue_(std::make_shared<ProcessingQueue>(pipeline)),
      server_(std::make_unique<httplib::Server>()) {
    pipeline_.set_sink(hub_);
    std::weak_ptr<ProcessingQueue> weak = queue_;
    sessions_.on_completed([weak](const std::string& session_id) {
        if (auto q = weak.lock()) {
            q->enqueue(session_id);
        }
    });
    server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
    routes();
}

ApiServer::~ApiServer() {
    stop();
    pipeline_.set_sink(nullptr);
}

int ApiServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw ConfigurationError(fmt::format("cannot bind {}:{}", host, port));
    }
    return bound;
}

void ApiServer::listen() { server_->listen_after_bind(); }

void ApiServer::start_background() {
    background_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void ApiServer::stop() {
    hub_->close();
    if (server_) {
        server_->stop();
    }
    if (background_.joinable()) {
        background_.join();
    }
    queue_->stop();
}

void ApiServer::routes() {
    using Handler = std::function<void(const httplib::Request&, httplib::Response&, const Principal&)>;
    auto& srv = *server_;

    // Authentication, error mapping and idempotent replay around every handler.
    auto wrap = [this](bool mutating, Handler handler) {
        return [this, mutating, handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
            const auto principal = auth_.authenticate(req.get_header_value("Authorization"));
            if (!principal) {
                res.status = 401;
                res.set_header("WWW-Authenticate", "Bearer");
                res.set_content(error_body("unauthorized", "missing or unknown bearer token"), kJson);
                return;
            }
            const auto idem = mutating ? req.get_header_value("Idempotency-Key") : std::string();
            std::shared_ptr<std::mutex> key_guard;
            std::unique_lock<std::mutex> key_lock;
            std::string cache_key;
            const std::string fingerprint = req.method + " " + req.path + "\n" + req.body;
            if (!idem.empty()) {
                cache_key = principal->token + "\n" + idem;
                key_guard = idempotency_.key_lock(cache_key);
                key_lock = std::unique_lock(*key_guard);
                if (auto cached = idempotency_.find(cache_key)) {
                    if (cached->request_fingerprint != fingerprint) {
                        res.status = 422;
                        res.set_content(
                            error_body("invalid_argument", "Idempotency-Key was already used for a different request"),
                            kJson);
                        return;
                    }
                    res.status = cached->status;
                    res.set_header("Idempotent-Replayed", "true");
                    res.set_content(cached->body, cached->content_type.c_str());
                    return;
                }
            }
            try {
                handler(req, res, *principal);
            } catch (const HttpError& e) {
                res.status = e.status;
                res.set_content(error_body(e.code, e.message), kJson);
            } catch (const Error& e) {
                res.status = status_for(e);
                res.set_content(error_body(to_string(e.code()), e.what()), kJson);
                if (res.status >= 500) {
                    spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
                }
            } catch (const json::exception& e) {
                res.status = 422;
                res.set_content(error_body("invalid_argument", e.what()), kJson);
            } catch (const std::exception& e) {
                spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
                res.status = 500;
                res.set_content(error_body("internal", "internal server error"), kJson);
            }
            if (!cache_key.empty() && res.status < 500) {
                idempotency_.put(cache_key, {res.status, res.body, res.get_header_value("Content-Type"), fingerprint});
            }
        };
    };

    auto require_provider = [](const Principal& p) {
        if (p.role != AccessRole::provider) {
            throw forbidden("provider role required");
        }
    };
    // Loads a session the principal may see.
    auto visible_session = [this](const Principal& p, const std::string& id) {
        auto session = store_.get_session(id);
        if (p.role == AccessRole::patient && session.patient_id != p.patient_id) {
            throw forbidden("session belongs to another patient");
        }
        return session;
    };

    srv.Get("/v1/openapi", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(openapi_document(), kJson);
    });
    srv.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", kJson);
    });

    // --- patient side

    srv.Post("/v1/sessions", wrap(true, [this](const auto& req, auto& res, const Principal& p) {
        const auto body = parse_body(req);
        const auto protocol_id = required_string(body, "protocol_id");
        auto patient_id = optional_string(body, "patient_id");
        const auto initiator_name = optional_string(body, "initiator");
        Initiator initiator = p.role == AccessRole::provider ? Initiator::provider : Initiator::patient;
        if (initiator_name) {
            initiator = parse_initiator(*initiator_name);
        }
        if (p.role == AccessRole::patient) {
            if (patient_id && *patient_id != p.patient_id) {
                throw forbidden("patients may only start their own sessions");
            }
            if (initiator != Initiator::patient) {
                throw forbidden("only providers may start provider-initiated sessions");
            }
            patient_id = p.patient_id;
        }
        if (!patient_id) {
            throw ValidationError("field 'patient_id' is required");
        }
        send(res, 201, json(sessions_.start(*patient_id, protocol_id, initiator)));
    }));

    srv.Get(R"(/v1/sessions/([^/]+))", wrap(false, [visible_session](const auto& req, auto& res, const Principal& p) {
        send(res, 200, json(visible_session(p, req.matches[1])));
    }));

    srv.Post(R"(/v1/sessions/([^/]+)/turns)",
             wrap(true, [this, visible_session](const auto& req, auto& res, const Principal& p) {
                 if (p.role != AccessRole::patient) {
                     throw forbidden("only the patient can add conversation turns");
                 }
                 const std::string id = req.matches[1];
                 visible_session(p, id);
                 const auto body = parse_body(req);
                 const auto result = sessions_.patient_turn(id, required_string(body, "text"));
                 send(res, 200, {{"reply", result.reply}, {"session", result.session}});
             }));

    srv.Post(R"(/v1/sessions/([^/]+)/timeout)",
             wrap(true, [this, visible_session](const auto& req, auto& res, const Principal& p) {
                 const std::string id = req.matches[1];
                 visible_session(p, id);
                 const auto body = parse_body(req, false);
                 std::optional<Timestamp> now;
                 if (auto at = optional_string(body, "now")) {
                     now = Timestamp::parse_iso8601(*at);
                 }
                 const auto result = sessions_.timeout(id, now);
                 send(res, 200,
                      {{"reprompt", result.reprompt ? json(*result.reprompt) : json(nullptr)},
                       {"session", result.session}});
             }));

    srv.Post(R"(/v1/sessions/([^/]+)/close)",
             wrap(true, [this, visible_session](const auto& req, auto& res, const Principal& p) {
                 const std::string id = req.matches[1];
                 visible_session(p, id);
                 send(res, 200, json(sessions_.close(id)));
             }));

    // --- provider side

    srv.Get("/v1/provider/sessions", wrap(false, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        SessionFilter filter;
        if (req.has_param("patient_id")) {
            filter.patient_id = req.get_param_value("patient_id");
        }
        if (req.has_param("status")) {
            filter.status = parse_session_status(req.get_param_value("status"));
        }
        if (req.has_param("risk")) {
            filter.risk = parse_risk_bucket(req.get_param_value("risk"));
        }
        const auto done = req.has_param("done") ? req.get_param_value("done") : std::string("false");
        if (done == "true") {
            filter.done = true;
        } else if (done == "false") {
            filter.done = false;
        } else if (done != "all") {
            throw ValidationError("query parameter 'done' must be true, false or all");
        }
        filter.offset = size_param(req, "offset", 0);
        filter.limit = size_param(req, "limit", 50);
        const auto page = store_.list_sessions(filter);
        std::map<std::string, std::string> names;
        json items = json::array();
        for (const auto& row : page.items) {
            auto it = names.find(row.patient_id);
            if (it == names.end()) {
                const auto profile = store_.find_patient(row.patient_id);
                it = names.emplace(row.patient_id, profile ? profile->name : std::string()).first;
            }
            items.push_back(queue_item(row, it->second));
        }
        send(res, 200,
             {{"items", items},
              {"total", page.total},
              {"next_offset", page.next_offset ? json(*page.next_offset) : json(nullptr)}});
    }));

    srv.Get(R"(/v1/provider/sessions/([^/]+))",
            wrap(false, [this, require_provider](const auto& req, auto& res, const Principal& p) {
                require_provider(p);
                const std::string id = req.matches[1];
                const auto session = store_.get_session(id);
                const auto row = store_.index_row(id);
                const auto processing = store_.find_processing(id);
                const auto summary = store_.latest_summary(id);
                const auto highlights = store_.latest_highlights(id);
                send(res, 200,
                     {{"session", session},
                      {"patient", store_.find_patient(session.patient_id) ? json(store_.get_patient(session.patient_id))
                                                                          : json(nullptr)},
                      {"summary", summary ? json(*summary) : json(nullptr)},
                      {"highlights", highlights ? json(*highlights) : json(nullptr)},
                      {"risk", risk_view(store_.latest_risk(id))},
                      {"actions", store_.list_actions(id)},
                      {"processing", processing ? json(*processing) : json(nullptr)},
                      {"done", row && row->done}});
            }));

    srv.Post(R"(/v1/provider/sessions/([^/]+)/actions)",
             wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
                 require_provider(p);
                 const auto body = parse_body(req);
                 ProviderAction action;
                 action.session_id = req.matches[1];
                 action.kind = parse_action_kind(required_string(body, "kind"));
                 action.body = optional_string(body, "body").value_or("");
                 action.author = optional_string(body, "author").value_or("provider");
                 action.timestamp = clock_.now();
                 if (action.kind != ActionKind::mark_done && text::trim(action.body).empty()) {
                     throw ValidationError("field 'body' must describe the action or note");
                 }
                 send(res, 201, json(store_.append_action(std::move(action))));
             }));

    srv.Post(R"(/v1/provider/sessions/([^/]+)/done)",
             wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
                 require_provider(p);
                 const auto body = parse_body(req, false);
                 const auto author = optional_string(body, "author").value_or("provider");
                 send(res, 200, json(store_.mark_done(std::string(req.matches[1]), author, clock_.now())));
             }));

    srv.Post(R"(/v1/provider/sessions/([^/]+)/process)",
             wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
                 require_provider(p);
                 const auto body = parse_body(req, false);
                 const bool force = body.value("force", false);
                 send(res, 200, json(pipeline_.process_session(req.matches[1], force)));
             }));

    // --- configuration records

    srv.Get("/v1/protocols", wrap(false, [this, require_provider](const auto&, auto& res, const Principal& p) {
        require_provider(p);
        send(res, 200, json(store_.list_protocols()));
    }));
    srv.Get(R"(/v1/protocols/([^/]+))", wrap(false, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        send(res, 200, json(store_.get_protocol(std::string(req.matches[1]))));
    }));
    srv.Post("/v1/protocols", wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        auto body = parse_body(req);
        body["protocol_id"] = "";  // ids are assigned by the store
        auto protocol = decode<ConversationProtocol>(body);
        send(res, 201, json(store_.put_protocol(std::move(protocol))));
    }));
    srv.Put(R"(/v1/protocols/([^/]+))", wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        auto body = parse_body(req);
        const std::string id = req.matches[1];
        if (body.contains("protocol_id") && body["protocol_id"] != id) {
            throw ValidationError("protocol_id in the body does not match the path");
        }
        body["protocol_id"] = id;
        send(res, 200, json(store_.put_protocol(decode<ConversationProtocol>(body))));
    }));

    srv.Get("/v1/patients", wrap(false, [this, require_provider](const auto&, auto& res, const Principal& p) {
        require_provider(p);
        send(res, 200, json(store_.list_patients()));
    }));
    srv.Get(R"(/v1/patients/([^/]+))", wrap(false, [this](const auto& req, auto& res, const Principal& p) {
        const std::string id = req.matches[1];
        if (p.role == AccessRole::patient && id != p.patient_id) {
            throw forbidden("patients may only read their own profile");
        }
        send(res, 200, json(store_.get_patient(id)));
    }));
    srv.Post("/v1/patients", wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        auto body = parse_body(req);
        body["patient_id"] = "";
        auto profile = decode<PatientProfile>(body);
        send(res, 201, json(store_.put_patient(std::move(profile))));
    }));
    srv.Put(R"(/v1/patients/([^/]+))", wrap(true, [this, require_provider](const auto& req, auto& res, const Principal& p) {
        require_provider(p);
        auto body = parse_body(req);
        const std::string id = req.matches[1];
        if (body.contains("patient_id") && body["patient_id"] != id) {
            throw ValidationError("patient_id in the body does not match the path");
        }
        body["patient_id"] = id;
        send(res, 200, json(store_.put_patient(decode<PatientProfile>(body))));
    }));

    // --- notification stream

    srv.Get("/v1/provider/notifications", [this](const httplib::Request& req, httplib::Response& res) {
        const auto principal = auth_.authenticate(req.get_header_value("Authorization"));
        if (!principal) {
            res.status = 401;
            res.set_header("WWW-Authenticate", "Bearer");
            res.set_content(error_body("unauthorized", "missing or unknown bearer token"), kJson);
            return;
        }
        if (principal->role != AccessRole::provider) {
            res.status = 403;
            res.set_content(error_body("forbidden", "provider role required"), kJson);
            return;
        }
        auto cursor = std::make_shared<std::uint64_t>(0);
        const auto last_event = req.get_header_value("Last-Event-ID");
        if (!last_event.empty()) {
            try {
                *cursor = std::stoull(last_event);
            } catch (const std::exception&) {
                *cursor = 0;
            }
        } else {
            *cursor = hub_->last_id();
        }
        res.set_header("Cache-Control", "no-cache");
        auto hub = hub_;
        res.set_chunked_content_provider("text/event-stream", [hub, cursor](std::size_t, httplib::DataSink& sink) {
            if (hub->closed() || !sink.is_writable()) {
                sink.done();
                return false;
            }
            auto events = hub->since(*cursor);
            if (events.empty()) {
                hub->wait(*cursor, std::chrono::seconds(15));
                events = hub->since(*cursor);
            }
            if (events.empty()) {
                const std::string ping = ": keep-alive\n\n";
                return sink.write(ping.data(), ping.size());
            }
            for (const auto& e : events) {
                const auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) {
                    return false;
                }
                *cursor = e.event_id;
            }
            return true;
        });
    });
}

std::string ApiServer::openapi_document() {
    auto op = [](std::string summary, std::string role) {
        return json{{"summary", std::move(summary)}, {"x-role", std::move(role)}, {"security", {{{"bearer", json::array()}}}}};
    };
    json paths = {
        {"/v1/sessions", {{"post", op("Start a session", "patient|provider")}}},
        {"/v1/sessions/{id}", {{"get", op("Session with its turns", "owner|provider")}}},
        {"/v1/sessions/{id}/turns", {{"post", op("Add a patient utterance; returns the assistant reply", "owner")}}},
        {"/v1/sessions/{id}/timeout", {{"post", op("Report a patient pause; may return a reprompt", "owner|provider")}}},
        {"/v1/sessions/{id}/close", {{"post", op("Close the session and queue provider processing", "owner|provider")}}},
        {"/v1/provider/sessions",
         {{"get", op("Triage queue; filters patient_id, status, risk (low|moderate|high|review|none), done "
                     "(true|false|all), offset, limit",
                     "provider")}}},
        {"/v1/provider/sessions/{id}",
         {{"get", op("Session detail: summary, raw log, highlights, risk, actions", "provider")}}},
        {"/v1/provider/sessions/{id}/actions", {{"post", op("Record a note or follow-up action", "provider")}}},
        {"/v1/provider/sessions/{id}/done", {{"post", op("Mark the session done (once)", "provider")}}},
        {"/v1/provider/sessions/{id}/process", {{"post", op("Run or retry provider processing", "provider")}}},
        {"/v1/provider/notifications", {{"get", op("Server-sent events, one per processed session", "provider")}}},
        {"/v1/protocols", {{"get", op("List protocols", "provider")}, {"post", op("Create a protocol", "provider")}}},
        {"/v1/protocols/{id}", {{"get", op("Read a protocol", "provider")}, {"put", op("Replace a protocol", "provider")}}},
        {"/v1/patients", {{"get", op("List patients", "provider")}, {"post", op("Create a patient", "provider")}}},
        {"/v1/patients/{id}",
         {{"get", op("Read a patient profile", "self|provider")}, {"put", op("Replace a patient profile", "provider")}}},
    };
    json doc = {
        {"openapi", "3.0.3"},
        {"info", {{"title", "carelink API"}, {"version", "1"}}},
        {"components",
         {{"securitySchemes", {{"bearer", {{"type", "http"}, {"scheme", "bearer"}}}}},
          {"x-errors",
           {{"401", "missing or unknown token"},
            {"403", "role or ownership violation"},
            {"404", "unknown id"},
            {"409", "lifecycle conflict"},
            {"422", "validation failure"},
            {"502", "LLM backend failure"}}},
          {"x-idempotency", "Mutating requests accept an Idempotency-Key header; a retry replays the first response."}}},
        {"paths", paths},
    };
    return doc.dump(2);
}

}  // namespace carelink
