#include "support.hpp"

#include "carelink/text.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#ifndef CARELINK_SOURCE_DIR
#error "CARELINK_SOURCE_DIR must be defined by the build"
#endif
#ifndef CARELINK_BINARY
#define CARELINK_BINARY "carelink"
#endif

namespace carelink::testing {

std::filesystem::path source_dir() { return CARELINK_SOURCE_DIR; }
std::filesystem::path fixture_path(const std::string& relative) { return source_dir() / "fixtures" / relative; }
std::filesystem::path template_dir() { return source_dir() / "templates"; }
std::filesystem::path carelink_binary() { return CARELINK_BINARY; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void load_bundle(Store& store) {
    std::ifstream in(fixture_path("bundle.jsonl"));
    store.import_snapshot(in);
}

std::unique_ptr<Store> bundled_store() {
    auto store = Store::in_memory();
    load_bundle(*store);
    return store;
}

std::vector<Turn> transcript_turns(const std::string& name) {
    std::vector<Turn> turns;
    const auto body = read_file(fixture_path("transcripts/" + name + ".txt"));
    for (const auto& line : text::split_lines(body)) {
        if (line.empty()) {
            continue;
        }
        Turn t;
        t.turn_index = turns.size();
        if (line.rfind("Patient: ", 0) == 0) {
            t.speaker = Speaker::patient;
            t.text = line.substr(9);
        } else if (line.rfind("Voice Assistant: ", 0) == 0) {
            t.speaker = Speaker::assistant;
            t.text = line.substr(17);
        } else {
            throw std::runtime_error("bad transcript line: " + line);
        }
        t.timestamp = Timestamp::from_millis(1'700'000'000'000 + static_cast<std::int64_t>(turns.size()) * 1000);
        turns.push_back(std::move(t));
    }
    return turns;
}

TempDir::TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / fmt::format("carelink-test-{:016x}", (std::uint64_t{rd()} << 32) | rd());
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

void FlakyBackend::set_down(PromptKind purpose, bool down) {
    std::lock_guard lock(mu_);
    if (down) {
        down_.insert(purpose);
    } else {
        down_.erase(purpose);
    }
}

std::string FlakyBackend::complete(const CompletionRequest& request) {
    {
        std::lock_guard lock(mu_);
        if (down_.count(request.purpose) > 0) {
            throw GatewayError(GatewayErrorKind::unavailable, "backend down");
        }
    }
    return inner_->complete(request);
}

Deployment::Deployment(const std::string& script, EngineConfig config, std::unique_ptr<Store> store_in)
    : store(store_in ? std::move(store_in) : bundled_store()),
      prompts(PromptEngine::load(template_dir())),
      scripted(script.empty() ? nullptr : ScriptedBackend::load_file(fixture_path("scripts/" + script + ".json"))),
      flaky(scripted ? std::make_shared<FlakyBackend>(scripted) : nullptr),
      engine(prompts, gateway, clock, config),
      service(*store, engine, clock),
      pipeline(*store, prompts, gateway, clock, config.completion),
      sink(std::make_shared<RecordingSink>()) {
    if (flaky) {
        gateway.register_backend("scripted", flaky, true);
    }
    pipeline.set_sink(sink);
}

SimulationResult Deployment::replay(const std::string& persona_name) {
    const auto persona = load_persona(fixture_path("personas/" + persona_name + ".json"));
    return run_simulation(service, clock, persona, *persona.patient_id, *persona.protocol_id,
                          persona.initiator.value_or(Initiator::patient));
}

std::string HttpResult::header(const std::string& name) const {
    auto it = headers.find(name);
    return it == headers.end() ? std::string() : it->second;
}

namespace {

AuthConfig test_auth() {
    AuthConfig auth;
    auth.provider_token = provider_token;
    auth.patient_tokens = {{john_token, john_id}, {mary_token, mary_id}};
    return auth;
}

}  // namespace

ApiHarness::ApiHarness(const std::string& script)
    : d(script), server(*d.store, d.service, d.pipeline, test_auth(), d.clock) {
    port = server.bind("127.0.0.1", 0);
    server.start_background();
}

ApiHarness::~ApiHarness() { server.stop(); }

HttpResult ApiHarness::request(const std::string& method, const std::string& path, const std::string& token,
                               const json& body, const std::map<std::string, std::string>& headers) {
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(std::chrono::seconds(10));
    httplib::Headers h;
    if (!token.empty()) {
        h.emplace("Authorization", "Bearer " + token);
    }
    for (const auto& [k, v] : headers) {
        h.emplace(k, v);
    }
    const std::string payload = body.is_null() ? std::string() : body.dump();
    auto send = [&]() -> httplib::Result {
        if (method == "GET") {
            return client.Get(path, h);
        }
        if (method == "POST") {
            return client.Post(path, h, payload, "application/json");
        }
        if (method == "PUT") {
            return client.Put(path, h, payload, "application/json");
        }
        throw std::invalid_argument("unsupported method " + method);
    };
    const auto res = send();
    if (!res) {
        throw std::runtime_error("HTTP request failed: " + httplib::to_string(res.error()));
    }
    HttpResult out;
    out.status = res->status;
    out.raw = res->body;
    out.body = json::parse(res->body, nullptr, false);
    if (out.body.is_discarded()) {
        out.body = nullptr;
    }
    for (const auto& [k, v] : res->headers) {
        out.headers.emplace(k, v);
    }
    return out;
}

}  // namespace carelink::testing
