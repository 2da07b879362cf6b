#include "support.hpp"

#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <thread>

using namespace carelink;
using namespace carelink::testing;

namespace {

CompletionRequest question_request(std::optional<std::string> utterance) {
    CompletionRequest r;
    r.messages = {{Role::system, "sys"}, {Role::user, "go"}};
    r.purpose = PromptKind::question;
    r.last_patient_utterance = std::move(utterance);
    return r;
}

// Local chat-completion stand-in; the handler decides each response.
class MockServer {
public:
    explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    HttpBackendConfig config() const {
        HttpBackendConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
        c.model = "test-model";
        c.api_key = "sk-test";
        c.timeout = std::chrono::milliseconds(500);
        c.max_attempts = 3;
        c.initial_backoff = std::chrono::milliseconds(1);
        return c;
    }

    std::atomic<int> hits{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

void reply_ok(httplib::Response& res, const std::string& content) {
    res.set_content(json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump(),
                    "application/json");
}

GatewayErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const GatewayError& e) {
        return e.kind();
    }
    FAIL("expected a GatewayError");
    return GatewayErrorKind::not_configured;
}

}  // namespace

TEST_SUITE("llm") {

TEST_CASE("scripted backend replays the b1 exchange") {
    auto backend = ScriptedBackend::load_file(fixture_path("scripts/b1.json"));
    CHECK(backend->complete(question_request("Yes, that's correct.")) ==
          "Thank you for letting me know. Is the pain more towards the mild side or is it more severe?");
    // Same utterance again gives the same answer; utterance keys do not advance.
    CHECK(backend->complete(question_request("Yes, that's correct.")) ==
          "Thank you for letting me know. Is the pain more towards the mild side or is it more severe?");
}

TEST_CASE("scripted backend: unmatched utterance is a scripted miss") {
    auto backend = ScriptedBackend::load_file(fixture_path("scripts/b1.json"));
    // The first question call is the scripted opener (ordinal 0); later unknown utterances miss.
    CHECK(backend->complete(question_request(std::nullopt)).find("How are you feeling") != std::string::npos);
    CHECK(kind_of([&] { backend->complete(question_request("What's the weather?")); }) ==
          GatewayErrorKind::scripted_miss);
}

TEST_CASE("scripted backend: ordinal keys per purpose") {
    ScriptedBackend backend(ScriptedBackend::parse_script(R"([
        {"index": 0, "response": "q0"},
        {"index": 2, "response": "q2"},
        {"index": 0, "purpose": "risk", "response": "r0"},
        {"utterance": "hi", "response": "keyed"}
    ])"));
    auto risk = question_request(std::nullopt);
    risk.purpose = PromptKind::risk;
    CHECK(backend.complete(question_request(std::nullopt)) == "q0");
    CHECK(backend.complete(risk) == "r0");
    CHECK(backend.complete(question_request("hi")) == "keyed");
    CHECK(backend.complete(question_request("unknown but ordinal")) == "q2");  // ordinal 2: keyed calls still count
    CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) == GatewayErrorKind::scripted_miss);
    CHECK(kind_of([&] { backend.complete(risk); }) == GatewayErrorKind::scripted_miss);
    backend.reset();
    CHECK(backend.complete(question_request(std::nullopt)) == "q0");
}

TEST_CASE("scripted backend: malformed scripts") {
    CHECK_THROWS_AS(ScriptedBackend::parse_script("{}"), ValidationError);
    auto build = [](std::string_view text) { ScriptedBackend b(ScriptedBackend::parse_script(text)); };
    CHECK_THROWS_AS(build(R"([{"response": "x"}])"), ValidationError);
    CHECK_THROWS_AS(build(R"([{"index": 0, "utterance": "a", "response": "x"}])"), ValidationError);
    CHECK_THROWS_AS(build(R"([{"index": 0, "response": "x"}, {"index": 0, "response": "y"}])"), ValidationError);
    CHECK_THROWS_AS(ScriptedBackend::parse_script(R"([{"index": 0}])"), ValidationError);
    CHECK_THROWS_AS(ScriptedBackend::parse_script(R"([{"index": 0, "purpose": "poem", "response": "x"}])"),
                    ValidationError);
    CHECK_THROWS_AS(ScriptedBackend::load_file("/nonexistent/script.json"), ConfigurationError);
}

TEST_CASE("request validation and defaults") {
    auto r = question_request(std::nullopt);
    r.temperature = 2.5;
    CHECK_THROWS_AS(r.validate(), ValidationError);
    r.temperature = 0.2;
    r.max_output_tokens = 0;
    CHECK_THROWS_AS(r.validate(), ValidationError);

    CompletionDefaults d;
    PromptBundle b;
    b.kind = PromptKind::summary;
    b.assembled = {{Role::system, "x"}};
    const auto req = d.make(b);
    CHECK(req.purpose == PromptKind::summary);
    CHECK(req.temperature == doctest::Approx(d.provider_temperature));
    CHECK(req.max_output_tokens == d.summary_max_tokens);
    b.kind = PromptKind::question;
    CHECK(d.make(b, "hi").last_patient_utterance == "hi");
}

TEST_CASE("gateway routing") {
    LlmGateway gw;
    CHECK_FALSE(gw.has_backend());
    CHECK(kind_of([&] { gw.complete(question_request(std::nullopt)); }) == GatewayErrorKind::not_configured);
    gw.register_backend("a", std::make_shared<LambdaBackend>([](const CompletionRequest&) { return "A"; }));
    gw.register_backend("b", std::make_shared<LambdaBackend>([](const CompletionRequest&) { return "B"; }));
    CHECK(gw.complete(question_request(std::nullopt)) == "A");
    auto r = question_request(std::nullopt);
    r.backend_id = "b";
    CHECK(gw.complete(r) == "B");
    r.backend_id = "c";
    CHECK(kind_of([&] { gw.complete(r); }) == GatewayErrorKind::not_configured);
    r.temperature = -1;
    r.backend_id.clear();
    CHECK_THROWS_AS(gw.complete(r), ValidationError);
}

TEST_CASE("http backend: success and request shape") {
    MockServer mock([](const httplib::Request&, httplib::Response& res) { reply_ok(res, "Hello there."); });
    HttpChatBackend backend(mock.config());
    auto req = question_request("secret utterance");
    req.temperature = 0.3;
    req.max_output_tokens = 77;
    CHECK(backend.complete(req) == "Hello there.");
    CHECK(mock.hits == 1);
    CHECK(mock.last_auth == "Bearer sk-test");
    const auto body = json::parse(mock.last_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("max_tokens") == 77);
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.3));
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages").at(0).at("role") == "system");
    // Routing metadata never leaves the process.
    CHECK(mock.last_body.find("secret utterance") == std::string::npos);
    CHECK(mock.last_body.find("purpose") == std::string::npos);
}

TEST_CASE("http backend: invalid credentials fail without retry") {
    MockServer mock([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    HttpChatBackend backend(mock.config());
    CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) == GatewayErrorKind::auth);
    CHECK(mock.hits == 1);
}

TEST_CASE("http backend: transient failures are retried") {
    SUBCASE("5xx until the attempts run out") {
        MockServer mock([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
        HttpChatBackend backend(mock.config());
        CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) == GatewayErrorKind::unavailable);
        CHECK(mock.hits == 3);
    }
    SUBCASE("rate limit then success") {
        std::atomic<int> n{0};
        MockServer mock([&](const httplib::Request&, httplib::Response& res) {
            if (n++ == 0) {
                res.status = 429;
            } else {
                reply_ok(res, "ok");
            }
        });
        HttpChatBackend backend(mock.config());
        CHECK(backend.complete(question_request(std::nullopt)) == "ok");
        CHECK(mock.hits == 2);
        CHECK(backend.requests_sent() == 2);
    }
    SUBCASE("read timeout") {
        MockServer mock([](const httplib::Request&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(700));
            reply_ok(res, "late");
        });
        auto cfg = mock.config();
        cfg.max_attempts = 1;
        HttpChatBackend backend(cfg);
        CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) == GatewayErrorKind::timeout);
    }
}

TEST_CASE("http backend: other failures") {
    SUBCASE("malformed body") {
        MockServer mock([](const httplib::Request&, httplib::Response& res) { res.set_content("{\"choices\":[]}", "application/json"); });
        HttpChatBackend backend(mock.config());
        CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) ==
              GatewayErrorKind::malformed_response);
        CHECK(mock.hits == 1);
    }
    SUBCASE("4xx rejection") {
        MockServer mock([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
        HttpChatBackend backend(mock.config());
        CHECK(kind_of([&] { backend.complete(question_request(std::nullopt)); }) == GatewayErrorKind::rejected);
        CHECK(mock.hits == 1);
    }
    SUBCASE("connection refused") {
        HttpBackendConfig cfg;
        cfg.base_url = "http://127.0.0.1:1/v1";
        cfg.model = "m";
        cfg.max_attempts = 2;
        cfg.initial_backoff = std::chrono::milliseconds(1);
        cfg.timeout = std::chrono::milliseconds(300);
        HttpChatBackend backend(cfg);
        const auto k = kind_of([&] { backend.complete(question_request(std::nullopt)); });
        CHECK((k == GatewayErrorKind::unavailable || k == GatewayErrorKind::timeout));
        CHECK(backend.requests_sent() == 2);
    }
    SUBCASE("bad configuration") {
        HttpBackendConfig cfg;
        cfg.base_url = "localhost:8080";
        CHECK_THROWS_AS(HttpChatBackend{cfg}, ConfigurationError);
    }
}

}  // TEST_SUITE
