#include "carelink/llm_gateway.hpp"

#include "carelink/codec.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace carelink {

namespace {

PromptKind parse_purpose(std::string_view s) {
    for (auto k : {PromptKind::question, PromptKind::summary, PromptKind::highlight, PromptKind::risk}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw ValidationError(fmt::format("unknown script purpose '{}'", s));
}

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

}  // namespace

std::string_view to_string(GatewayErrorKind kind) noexcept {
    switch (kind) {
        case GatewayErrorKind::timeout: return "timeout";
        case GatewayErrorKind::rate_limit: return "rate_limit";
        case GatewayErrorKind::auth: return "auth";
        case GatewayErrorKind::malformed_response: return "malformed_response";
        case GatewayErrorKind::unavailable: return "unavailable";
        case GatewayErrorKind::rejected: return "rejected";
        case GatewayErrorKind::scripted_miss: return "scripted_miss";
        case GatewayErrorKind::not_configured: return "not_configured";
    }
    return "unknown";
}

void CompletionRequest::validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw ValidationError(fmt::format("temperature {} outside [0, 2]", temperature));
    }
    if (max_output_tokens <= 0) {
        throw ValidationError(fmt::format("max_output_tokens must be positive, got {}", max_output_tokens));
    }
}

CompletionRequest CompletionDefaults::make(const PromptBundle& bundle,
                                           std::optional<std::string> last_patient_utterance) const {
    CompletionRequest req;
    req.messages = bundle.assembled;
    req.purpose = bundle.kind;
    req.last_patient_utterance = std::move(last_patient_utterance);
    switch (bundle.kind) {
        case PromptKind::question:
            req.temperature = question_temperature;
            req.max_output_tokens = question_max_tokens;
            break;
        case PromptKind::summary:
            req.temperature = provider_temperature;
            req.max_output_tokens = summary_max_tokens;
            break;
        case PromptKind::highlight:
            req.temperature = provider_temperature;
            req.max_output_tokens = highlight_max_tokens;
            break;
        case PromptKind::risk:
            req.temperature = provider_temperature;
            req.max_output_tokens = risk_max_tokens;
            break;
    }
    return req;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<ScriptedExchange> script) {
    for (auto& ex : script) {
        if (ex.utterance.has_value() == ex.index.has_value()) {
            throw ValidationError("scripted exchange needs exactly one of 'utterance' or 'index'");
        }
        if (ex.utterance) {
            auto [it, inserted] = by_utterance_.emplace(UtteranceKey{ex.purpose, *ex.utterance}, ex.response);
            if (!inserted && it->second != ex.response) {
                throw ValidationError(fmt::format("ambiguous script: utterance '{}' maps to two responses", *ex.utterance));
            }
        } else {
            auto [it, inserted] = by_index_.emplace(IndexKey{ex.purpose, *ex.index}, ex.response);
            if (!inserted && it->second != ex.response) {
                throw ValidationError(fmt::format("ambiguous script: index {} maps to two responses", *ex.index));
            }
        }
    }
}

std::vector<ScriptedExchange> ScriptedBackend::parse_script(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed script JSON: ") + e.what());
    }
    if (!doc.is_array()) {
        throw ValidationError("script must be a JSON list of exchanges");
    }
    std::vector<ScriptedExchange> out;
    for (const auto& item : doc) {
        try {
            ScriptedExchange ex;
            if (item.contains("utterance")) {
                ex.utterance = item.at("utterance").get<std::string>();
            }
            if (item.contains("index")) {
                ex.index = item.at("index").get<std::size_t>();
            }
            ex.purpose = parse_purpose(item.value("purpose", std::string("question")));
            ex.response = item.at("response").get<std::string>();
            out.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw ValidationError(std::string("malformed scripted exchange: ") + e.what());
        }
    }
    return out;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigurationError(fmt::format("cannot read script file {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::make_shared<ScriptedBackend>(parse_script(ss.str()));
}

std::string ScriptedBackend::complete(const CompletionRequest& request) {
    std::lock_guard lock(mu_);
    const auto ordinal = calls_[request.purpose]++;
    if (request.last_patient_utterance) {
        auto it = by_utterance_.find({request.purpose, *request.last_patient_utterance});
        if (it != by_utterance_.end()) {
            return it->second;
        }
    }
    auto it = by_index_.find({request.purpose, ordinal});
    if (it != by_index_.end()) {
        return it->second;
    }
    throw GatewayError(GatewayErrorKind::scripted_miss,
                       fmt::format("no scripted {} response for call #{}", to_string(request.purpose), ordinal));
}

void ScriptedBackend::reset() {
    std::lock_guard lock(mu_);
    calls_.clear();
}

// ---------------------------------------------------------------------------
// HttpChatBackend

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig cfg;
    cfg.base_url = env_or_empty("LLM_BASE_URL");
    cfg.model = env_or_empty("LLM_MODEL");
    cfg.api_key = env_or_empty("LLM_API_KEY");
    if (cfg.base_url.empty() || cfg.model.empty()) {
        throw ConfigurationError("LLM_BASE_URL and LLM_MODEL must be set for the live backend");
    }
    return cfg;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigurationError(fmt::format("LLM base URL '{}' has no scheme", config_.base_url));
    }
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    origin_ = config_.base_url.substr(0, path_start);
    path_ = path_start == std::string::npos ? std::string() : config_.base_url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') {
        path_.pop_back();
    }
    path_ += "/chat/completions";
    if (config_.max_attempts < 1) {
        throw ConfigurationError("max_attempts must be at least 1");
    }
}

std::size_t HttpChatBackend::requests_sent() const noexcept {
    std::lock_guard lock(mu_);
    return requests_sent_;
}

void HttpChatBackend::wait_for_rate_slot() {
    if (config_.requests_per_minute <= 0) {
        return;
    }
    const auto interval = std::chrono::milliseconds(60'000 / config_.requests_per_minute);
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

std::string HttpChatBackend::attempt(const std::string& body) {
    wait_for_rate_slot();
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    {
        std::lock_guard lock(mu_);
        ++requests_sent_;
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
            throw GatewayError(GatewayErrorKind::timeout, fmt::format("LLM request failed: {}", httplib::to_string(err)));
        }
        throw GatewayError(GatewayErrorKind::unavailable, fmt::format("LLM request failed: {}", httplib::to_string(err)));
    }
    if (res->status == 401 || res->status == 403) {
        throw GatewayError(GatewayErrorKind::auth, fmt::format("LLM backend rejected credentials ({})", res->status));
    }
    if (res->status == 429) {
        throw GatewayError(GatewayErrorKind::rate_limit, "LLM backend rate limit hit");
    }
    if (res->status == 408 || res->status == 504) {
        throw GatewayError(GatewayErrorKind::timeout, fmt::format("LLM backend timed out ({})", res->status));
    }
    if (res->status >= 500) {
        throw GatewayError(GatewayErrorKind::unavailable, fmt::format("LLM backend error {}", res->status));
    }
    if (res->status != 200) {
        throw GatewayError(GatewayErrorKind::rejected, fmt::format("LLM backend rejected request ({})", res->status));
    }
    try {
        const auto doc = json::parse(res->body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) {
            throw GatewayError(GatewayErrorKind::malformed_response, "completion content is not a string");
        }
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw GatewayError(GatewayErrorKind::malformed_response, fmt::format("malformed completion: {}", e.what()));
    }
}

std::string HttpChatBackend::complete(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    const json body = {{"model", config_.model},
                       {"messages", messages},
                       {"temperature", request.temperature},
                       {"max_tokens", request.max_output_tokens}};
    const auto payload = body.dump();

    auto backoff = config_.initial_backoff;
    for (int attempt_no = 1;; ++attempt_no) {
        try {
            return attempt(payload);
        } catch (const GatewayError& e) {
            if (!e.retryable() || attempt_no >= config_.max_attempts) {
                throw;
            }
            spdlog::warn("LLM call attempt {} failed ({}), retrying in {} ms", attempt_no, to_string(e.kind()),
                         backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

// ---------------------------------------------------------------------------
// LlmGateway

void LlmGateway::register_backend(std::string id, std::shared_ptr<LlmBackend> backend, bool make_default) {
    std::lock_guard lock(mu_);
    if (make_default || default_id_.empty()) {
        default_id_ = id;
    }
    backends_[std::move(id)] = std::move(backend);
}

bool LlmGateway::has_backend() const {
    std::lock_guard lock(mu_);
    return !backends_.empty();
}

std::string LlmGateway::complete(const CompletionRequest& request) {
    request.validate();
    std::shared_ptr<LlmBackend> backend;
    {
        std::lock_guard lock(mu_);
        const auto& id = request.backend_id.empty() ? default_id_ : request.backend_id;
        auto it = backends_.find(id);
        if (it == backends_.end()) {
            throw GatewayError(GatewayErrorKind::not_configured, fmt::format("no LLM backend '{}' configured", id));
        }
        backend = it->second;
    }
    spdlog::debug("LLM {} request: {} messages", to_string(request.purpose), request.messages.size());
    if (spdlog::should_log(spdlog::level::trace)) {
        for (const auto& m : request.messages) {
            spdlog::trace("  [{}] {}", to_string(m.role), m.content);
        }
    }
    auto response = backend->complete(request);
    spdlog::debug("LLM {} response: {} chars", to_string(request.purpose), response.size());
    spdlog::trace("  response: {}", response);
    return response;
}

}  // namespace carelink
