// carelink: serve the API, replay personas, run provider processing offline
// and manage fixture snapshots.
//
// Exit codes: 0 success, 1 invariant violation, 2 usage, 3 backend failure.

#include "carelink/api_server.hpp"
#include "carelink/codec.hpp"
#include "carelink/conversation_engine.hpp"
#include "carelink/error.hpp"
#include "carelink/llm_gateway.hpp"
#include "carelink/prompt_engine.hpp"
#include "carelink/provider_pipeline.hpp"
#include "carelink/session_service.hpp"
#include "carelink/simulation.hpp"
#include "carelink/store.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <pthread.h>
#include <thread>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#ifndef CARELINK_DEFAULT_TEMPLATE_DIR
#define CARELINK_DEFAULT_TEMPLATE_DIR "templates"
#endif
#ifndef CARELINK_DEFAULT_DATA_DIR
#define CARELINK_DEFAULT_DATA_DIR "fixtures"
#endif

namespace {

using namespace carelink;

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

std::filesystem::path template_dir() { return env_or("TEMPLATE_DIR", CARELINK_DEFAULT_TEMPLATE_DIR); }
std::filesystem::path data_dir() { return env_or("CARELINK_DATA_DIR", CARELINK_DEFAULT_DATA_DIR); }

void load_bundle(Store& store) {
    const auto path = data_dir() / "bundle.jsonl";
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError(fmt::format("bundled fixtures not found at {}", path.string()));
    }
    store.import_snapshot(in);
}

std::unique_ptr<Store> open_store() { return Store::open_from_env(); }

bool store_configured() {
    const char* p = std::getenv("STORE_PATH");
    const char* k = std::getenv("STORE_KEY");
    return p && *p && k && *k;
}

std::shared_ptr<LlmGateway> make_gateway(const std::string& script) {
    auto gateway = std::make_shared<LlmGateway>();
    if (!script.empty()) {
        gateway->register_backend("scripted", ScriptedBackend::load_file(script), true);
    } else if (const char* url = std::getenv("LLM_BASE_URL"); url && *url) {
        gateway->register_backend("live", std::make_shared<HttpChatBackend>(HttpBackendConfig::from_env()), true);
    } else {
        throw ConfigurationError("no LLM backend configured: pass --script or set LLM_BASE_URL");
    }
    return gateway;
}

struct Options {
    // serve
    std::string host = "0.0.0.0";
    int port = -1;
    // simulate / process / serve
    std::string script;
    std::string persona;
    std::string protocol;
    std::string patient;
    std::string initiator;
    std::string expect;
    bool process_after = false;
    // process
    std::string session_id;
    bool force = false;
    // fixtures
    std::string file;
    bool bundled = false;
    // purge
    std::vector<std::string> purge_ids;
    bool verbose = false;
};

int cmd_serve(const Options& o) {
    // Signals are taken by a dedicated thread; every other thread inherits the mask.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    auto store = open_store();
    const auto prompts = PromptEngine::load(template_dir());
    auto gateway = make_gateway(o.script);
    SystemClock clock;
    ConversationEngine engine(prompts, *gateway, clock);
    SessionService sessions(*store, engine, clock);
    ProviderPipeline pipeline(*store, prompts, *gateway, clock);
    ApiServer server(*store, sessions, pipeline, AuthConfig::from_env(), clock);
    const int port = o.port >= 0 ? o.port : std::stoi(env_or("PORT", "8080"));
    const int bound = server.bind(o.host, port);
    spdlog::info("listening on {}:{}", o.host, bound);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        spdlog::info("signal {} received, shutting down", sig);
        server.stop();
    });
    server.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kExitOk;
}

int cmd_simulate(const Options& o) {
    const auto persona = load_persona(o.persona);
    const auto patient_id = !o.patient.empty() ? o.patient : persona.patient_id.value_or("");
    const auto protocol_id = !o.protocol.empty() ? o.protocol : persona.protocol_id.value_or("");
    if (patient_id.empty() || protocol_id.empty()) {
        throw ValidationError("simulate needs a patient and a protocol (flags or persona file)");
    }
    const auto initiator =
        !o.initiator.empty() ? parse_initiator(o.initiator) : persona.initiator.value_or(Initiator::patient);

    std::unique_ptr<Store> store;
    if (store_configured()) {
        store = open_store();
    } else {
        store = Store::in_memory();
        load_bundle(*store);
    }
    const auto prompts = PromptEngine::load(template_dir());
    auto gateway = make_gateway(o.script);
    ManualClock clock(SystemClock().now());
    ConversationEngine engine(prompts, *gateway, clock);
    SessionService sessions(*store, engine, clock);

    const auto result = run_simulation(sessions, clock, persona, patient_id, protocol_id, initiator);
    const auto transcript = format_transcript(result.session.turns);
    std::cout << transcript << std::flush;
    std::cerr << fmt::format("session {} {} after {} turns\n", result.session.session_id,
                             to_string(result.session.status), result.session.turns.size());

    int code = kExitOk;
    for (const auto& v : validate_session(result.session)) {
        std::cerr << "invariant violated: " << v << '\n';
        code = kExitInvariant;
    }
    if (result.unused_steps > 0) {
        std::cerr << fmt::format("session ended with {} persona utterance(s) unused\n", result.unused_steps);
    }
    if (!o.expect.empty()) {
        std::ifstream in(o.expect);
        if (!in) {
            throw ValidationError(fmt::format("cannot read expected transcript {}", o.expect));
        }
        std::stringstream buf;
        buf << in.rdbuf();
        if (buf.str() != transcript) {
            std::cerr << "transcript differs from " << o.expect << '\n';
            code = kExitInvariant;
        }
    }
    if (o.process_after && result.session.status == SessionStatus::completed) {
        ProviderPipeline pipeline(*store, prompts, *gateway, clock);
        const auto record = pipeline.process_session(result.session.session_id);
        std::cerr << fmt::format("provider processing {}\n", record.complete() ? "complete" : "incomplete");
        if (!record.complete() && code == kExitOk) {
            code = kExitBackend;
        }
    }
    return code;
}

int cmd_process(const Options& o) {
    auto store = open_store();
    const auto prompts = PromptEngine::load(template_dir());
    auto gateway = make_gateway(o.script);
    SystemClock clock;
    ProviderPipeline pipeline(*store, prompts, *gateway, clock);
    const auto record = pipeline.process_session(o.session_id, o.force);
    const auto summary = store->latest_summary(o.session_id);
    const auto highlights = store->latest_highlights(o.session_id);
    const auto risk = store->latest_risk(o.session_id);
    json out = {
        {"processing", record},
        {"summary", summary ? json(*summary) : json(nullptr)},
        {"highlights", highlights ? json(*highlights) : json(nullptr)},
        {"risk", risk ? json(*risk) : json(nullptr)},
    };
    std::cout << out.dump(2) << '\n';
    return record.complete() ? kExitOk : kExitBackend;
}

int cmd_fixtures_load(const Options& o) {
    auto store = open_store();
    std::size_t n = 0;
    if (o.bundled) {
        const auto path = data_dir() / "bundle.jsonl";
        std::ifstream in(path);
        if (!in) {
            throw ConfigurationError(fmt::format("bundled fixtures not found at {}", path.string()));
        }
        n += store->import_snapshot(in);
    }
    if (!o.file.empty()) {
        std::ifstream in(o.file);
        if (!in) {
            throw ValidationError(fmt::format("cannot read snapshot {}", o.file));
        }
        n += store->import_snapshot(in);
    }
    if (!o.bundled && o.file.empty()) {
        throw ValidationError("fixtures load needs a snapshot file or --bundled");
    }
    std::cerr << fmt::format("loaded {} record(s)\n", n);
    return kExitOk;
}

int cmd_fixtures_dump(const Options& o) {
    auto store = open_store();
    std::size_t n = 0;
    if (o.file.empty() || o.file == "-") {
        n = store->export_snapshot(std::cout);
    } else {
        std::ofstream out(o.file);
        if (!out) {
            throw ValidationError(fmt::format("cannot write snapshot {}", o.file));
        }
        n = store->export_snapshot(out);
    }
    std::cerr << fmt::format("dumped {} record(s)\n", n);
    return kExitOk;
}

int cmd_purge(const Options& o) {
    auto store = open_store();
    int missing = 0;
    for (const auto& id : o.purge_ids) {
        if (store->purge_session(id)) {
            std::cerr << "purged " << id << '\n';
        } else {
            std::cerr << "unknown session " << id << '\n';
            ++missing;
        }
    }
    return missing > 0 ? kExitUsage : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"carelink: patient check-in conversations and provider triage"};
    app.require_subcommand(1);
    Options o;
    app.add_flag("-v,--verbose", o.verbose, "Debug logging (includes LLM call metadata)");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option("--host", o.host, "Bind address");
    serve->add_option("--port", o.port, "Port (default: PORT or 8080)");
    serve->add_option("--script", o.script, "Use a scripted LLM backend instead of LLM_BASE_URL");

    auto* simulate = app.add_subcommand("simulate", "Replay a persona and print the transcript");
    simulate->add_option("--persona", o.persona, "Persona JSON file")->required();
    simulate->add_option("--protocol", o.protocol, "Protocol id");
    simulate->add_option("--patient", o.patient, "Patient id");
    simulate->add_option("--initiator", o.initiator, "patient or provider");
    simulate->add_option("--script", o.script, "Scripted LLM backend file");
    simulate->add_option("--expect", o.expect, "Fail unless the transcript equals this file");
    simulate->add_flag("--process", o.process_after, "Run provider processing after the session completes");

    auto* process = app.add_subcommand("process", "Run provider processing for a stored session");
    process->add_option("session-id", o.session_id, "Session id")->required();
    process->add_option("--script", o.script, "Scripted LLM backend file");
    process->add_flag("--force", o.force, "Re-run every stage and store new artifact versions");

    auto* fixtures = app.add_subcommand("fixtures", "Import or export JSON-lines snapshots");
    fixtures->require_subcommand(1);
    auto* load = fixtures->add_subcommand("load", "Import a snapshot");
    load->add_option("file", o.file, "Snapshot file");
    load->add_flag("--bundled", o.bundled, "Import the bundled patients and protocols");
    auto* dump = fixtures->add_subcommand("dump", "Export the store");
    dump->add_option("file", o.file, "Output file (default: stdout)");

    auto* purge = app.add_subcommand("purge", "Delete sessions and everything attached to them");
    purge->add_option("session-ids", o.purge_ids, "Session ids")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("carelink"));
    spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::warn);
    if (serve->parsed()) {
        spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);
    }

    try {
        if (serve->parsed()) {
            return cmd_serve(o);
        }
        if (simulate->parsed()) {
            return cmd_simulate(o);
        }
        if (process->parsed()) {
            return cmd_process(o);
        }
        if (load->parsed()) {
            return cmd_fixtures_load(o);
        }
        if (dump->parsed()) {
            return cmd_fixtures_dump(o);
        }
        if (purge->parsed()) {
            return cmd_purge(o);
        }
    } catch (const GatewayError& e) {
        std::cerr << "LLM backend failure: " << e.what() << '\n';
        return kExitBackend;
    } catch (const StorageError& e) {
        std::cerr << "storage failure: " << e.what() << '\n';
        return kExitBackend;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitBackend;
    }
    return kExitUsage;
}
