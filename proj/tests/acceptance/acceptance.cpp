// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
// CARELINK_SEED overrides the fixed seed of the randomized criteria.

#include "support.hpp"

#include "carelink/loopback.hpp"

#include <signal.h>
#include <sqlite3.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

using namespace carelink;
using namespace carelink::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::uint64_t seed_value() {
    if (const char* s = std::getenv("CARELINK_SEED"); s && *s) {
        return std::stoull(s);
    }
    return 20261016;
}

std::size_t count_of(const std::string& hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

// Collects failures; keeps the first few messages.
struct Failures {
    std::size_t count = 0;
    std::vector<std::string> first;
    void add(std::string msg) {
        if (first.size() < 3) {
            first.push_back(std::move(msg));
        }
        ++count;
    }
    std::string describe() const {
        std::string out = fmt::format("{} failure(s)", count);
        for (const auto& m : first) {
            out += "; " + m;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// 1. transcript replay

Outcome criterion_replay() {
    struct Case {
        std::string name;
        std::size_t turns;
        std::size_t loopbacks;
    };
    std::vector<std::string> notes;
    bool ok = true;
    for (const auto& c : {Case{"b1", 15, 1}, Case{"b2", 12, 0}}) {
        const auto t0 = std::chrono::steady_clock::now();
        Deployment d(c.name);
        const auto result = d.replay(c.name);
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const auto& s = result.session;
        const auto expected = read_file(fixture_path("transcripts/" + c.name + ".txt"));
        const bool identical = format_transcript(s.turns) == expected;
        const auto loopbacks = std::count_if(s.turns.begin(), s.turns.end(),
                                             [](const Turn& t) { return t.kind == TurnKind::loopback_confirm_request; });
        const auto affirmations = std::count_if(s.turns.begin(), s.turns.end(), [](const Turn& t) {
            return t.kind == TurnKind::loopback_confirm_response;
        });
        bool slots_ok = true;
        if (c.loopbacks == 1) {
            auto it = s.collected_slots.find("pain_level");
            slots_ok = it != s.collected_slots.end() && it->second.value == "2" && it->second.confirmed_turn &&
                       s.turns.at(*it->second.confirmed_turn).kind == TurnKind::loopback_confirm_response;
        } else {
            slots_ok = std::none_of(s.collected_slots.begin(), s.collected_slots.end(),
                                    [](const auto& kv) { return kv.second.confirmed_turn.has_value(); });
        }
        const bool case_ok = identical && s.turns.size() == c.turns && static_cast<std::size_t>(loopbacks) == c.loopbacks &&
                             static_cast<std::size_t>(affirmations) == c.loopbacks && slots_ok &&
                             s.status == SessionStatus::completed && validate_session(s).empty() &&
                             result.unused_steps == 0 && elapsed < 1.0;
        ok = ok && case_ok;
        notes.push_back(fmt::format("{}: {} turns, {} loopback, {}, {}, {:.3f}s", c.name, s.turns.size(), loopbacks,
                                    to_string(s.status), identical ? "byte-identical" : "TRANSCRIPT DIFFERS", elapsed));
    }
    return {ok, fmt::format("{}", fmt::join(notes, "; "))};
}

// ---------------------------------------------------------------------------
// 2. prompt assembly

std::string random_sentence(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {
        "pain",  "knee",     "today",   "better", "worse",   "sleep",  "doctor", "medicine", "7",   "ten",
        "a",     "little",   "my",      "is",     "feeling", "okay",   "tired",  "cough",    "===", "PATIENT",
        "fever", "headache", "walking", "stairs", "\u2014",  "café", "\"quoted\"", "{{name}}"};
    std::uniform_int_distribution<std::size_t> len(1, 14);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::string out;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
        out += (i ? " " : "") + words[pick(rng)];
    }
    // Occasionally try to forge a delimiter line.
    if (std::uniform_int_distribution<int>(0, 9)(rng) == 0) {
        out += "\n" + std::string(delimiters::response_optimization) + "\n";
    }
    return out;
}

Outcome criterion_prompt_assembly(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto store = bundled_store();
    const auto prompts = PromptEngine::load(template_dir());
    const std::vector<std::pair<std::string, std::string>> pairs = {{john_id, post_surgery}, {mary_id, daily_care}};
    Failures failures;
    constexpr int kCases = 1000;
    for (int c = 0; c < kCases; ++c) {
        const int n = std::uniform_int_distribution<int>(1, 20)(rng);
        const auto& [pid, prid] = pairs[static_cast<std::size_t>(c) % pairs.size()];
        const auto profile = store->get_patient(pid);
        const auto protocol = store->get_protocol(prid);

        Session s;
        s.session_id = fmt::format("ses_prompt_{}", c);
        s.patient_id = pid;
        s.protocol_id = prid;
        auto add = [&](Speaker who, TurnKind kind) {
            Turn t;
            t.turn_index = s.turns.size();
            t.speaker = who;
            t.kind = kind;
            t.text = random_sentence(rng);
            t.timestamp = Timestamp::from_millis(1'700'000'000'000 + static_cast<std::int64_t>(s.turns.size()) * 1000);
            s.turns.push_back(std::move(t));
        };
        // n - 1 question-producing assistant turns, with reprompts and read-backs mixed in.
        const bool provider_first = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        for (int produced = 0; produced < n - 1; ++produced) {
            if (produced > 0 || !provider_first) {
                add(Speaker::patient, TurnKind::normal);
            }
            const int shape = std::uniform_int_distribution<int>(0, 5)(rng);
            if (shape == 0 && produced > 0) {
                add(Speaker::assistant, TurnKind::loopback_confirm_request);
                if (produced + 1 < n - 1) {
                    add(Speaker::patient, TurnKind::loopback_confirm_response);
                    add(Speaker::assistant, TurnKind::normal);
                    ++produced;
                }
            } else {
                add(Speaker::assistant, TurnKind::normal);
            }
            if (shape == 1) {
                add(Speaker::assistant, TurnKind::reprompt);
            }
        }
        if (!s.turns.empty() && s.turns.back().speaker == Speaker::assistant &&
            s.turns.back().kind != TurnKind::loopback_confirm_request) {
            add(Speaker::patient, TurnKind::normal);
        }
        if (ConversationEngine::next_round(s) != n) {
            failures.add(fmt::format("case {}: generator produced round {} for N={}", c,
                                     ConversationEngine::next_round(s), n));
            continue;
        }
        std::optional<LoopbackDirective> directive;
        if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
            directive = LoopbackDirective{"pain_level", "Pain rating on a 1 to 10 scale", "4"};
        }
        const auto bundle = prompts.build_question_prompt(profile, protocol, s.turns, n, directive);
        const auto text = bundle.full_text();
        const std::size_t p1 = count_of(text, delimiters::patient_information);
        const std::size_t p2 = count_of(text, delimiters::conversation_protocol);
        const std::size_t p3 = count_of(text, delimiters::system_setting);
        const std::size_t p4 = count_of(text, delimiters::conversation_history);
        const std::size_t p5 = count_of(text, delimiters::response_optimization);
        const std::size_t lb = count_of(text, delimiters::content_loopback);
        if (p1 != 1 || p2 != 1 || p3 != 1 || p4 != 1 || p5 != static_cast<std::size_t>(n) ||
            lb != (directive ? 1u : 0u)) {
            failures.add(fmt::format("case {} N={}: parts {}/{}/{}/{} part5={} loopback={}", c, n, p1, p2, p3, p4, p5,
                                     lb));
        }
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    return {true, fmt::format("{} random sessions, N in 1..20, parts 1-4 once and part 5 N times", kCases)};
}

// ---------------------------------------------------------------------------
// 3. loopback soundness

const char* kPainQuestion = "On a scale of 1 to 10, how would you rate your pain?";

std::string number_form(int v, bool word) {
    static const char* words[] = {"zero", "one", "two", "three", "four", "five",
                                  "six",  "seven", "eight", "nine", "ten"};
    return word ? words[v] : std::to_string(v);
}

Outcome criterion_loopback(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Deployment d("");
    // The current read-back value is shared with the backend so it can restate it.
    std::string offered;
    auto backend = std::make_shared<LambdaBackend>([&](const CompletionRequest& r) -> std::string {
        if (r.messages.back().content.find(delimiters::content_loopback) != std::string::npos) {
            switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
                case 0: return fmt::format("So you would rate your pain as a {}. Is that correct?", offered);
                case 1: return "Thank you for sharing that.";  // replaced by the template
                default: return fmt::format("Got it, a {} out of 10. Did I get that right?", offered);
            }
        }
        if (r.last_patient_utterance && r.last_patient_utterance->find("bye") != std::string::npos) {
            return "Thank you, take care. Goodbye!";
        }
        return kPainQuestion;
    });
    d.gateway.register_backend("lambda", backend, true);
    const auto profile = d.store->get_patient(john_id);
    const auto protocol = d.store->get_protocol(post_surgery);

    const std::vector<std::string> carriers = {"{}", "I would say {}.", "Probably a {}.", "It's about {} today.",
                                               "I'd rate it {}", "Maybe {} right now."};
    const std::vector<std::string> affirm = {"Yes.", "Yes, that's correct.", "Correct.", "Yeah, that's right."};
    const std::vector<std::string> negate = {"No.", "No, that's not right.", "Nope."};
    const std::vector<std::string> unclear = {"Hmm.", "Pardon?", "What was the question again?"};
    const std::string corrections = "No, I meant {}.";

    Failures failures;
    std::size_t commits = 0, negatives = 0, corrections_sent = 0, readbacks = 0;
    constexpr int kSessions = 1000;
    for (int c = 0; c < kSessions; ++c) {
        auto s = d.engine.start_session(fmt::format("ses_lb_{}", c), profile, protocol, Initiator::provider);
        std::optional<std::string> last_affirmed;  // driver-side model of what may be committed
        std::set<std::size_t> affirm_turns;
        const int exchanges = std::uniform_int_distribution<int>(1, 8)(rng);
        for (int e = 0; e < exchanges && !s.is_terminal(); ++e) {
            const auto* last = s.last_turn(Speaker::assistant);
            std::string utterance;
            if (last && last->kind == TurnKind::loopback_confirm_request) {
                ++readbacks;
                const int r = std::uniform_int_distribution<int>(0, 9)(rng);
                if (r < 4) {
                    utterance = affirm[rng() % affirm.size()];
                    last_affirmed = offered;
                    affirm_turns.insert(s.turns.size());
                } else if (r < 6) {
                    utterance = negate[rng() % negate.size()];
                    ++negatives;
                } else if (r < 8) {
                    const int v = std::uniform_int_distribution<int>(1, 10)(rng);
                    offered = std::to_string(v);
                    utterance = fmt::format(fmt::runtime(corrections), number_form(v, rng() % 2 == 0));
                    ++negatives;
                    ++corrections_sent;
                } else {
                    utterance = unclear[rng() % unclear.size()];
                }
            } else {
                const int v = std::uniform_int_distribution<int>(1, 10)(rng);
                if (std::uniform_int_distribution<int>(0, 5)(rng) == 0) {
                    utterance = "I'm not really sure how to put it.";
                } else {
                    offered = std::to_string(v);
                    utterance =
                        fmt::format(fmt::runtime(carriers[rng() % carriers.size()]), number_form(v, rng() % 2 == 0));
                }
            }
            d.engine.patient_turn(s, profile, protocol, utterance);
        }
        if (!s.is_terminal()) {
            if (s.status == SessionStatus::awaiting_confirmation) {
                d.engine.patient_turn(s, profile, protocol, negate[0]);
                ++negatives;
            }
            d.engine.patient_turn(s, profile, protocol, "That's all, bye.");
        }

        // Every committed scalar is backed by a read-back and an affirmation the driver actually sent.
        for (const auto& [name, slot] : s.collected_slots) {
            if (slot.value_kind != ValueKind::scalar_1_to_10) {
                continue;
            }
            ++commits;
            if (!slot.confirmed_turn || affirm_turns.count(*slot.confirmed_turn) == 0) {
                failures.add(fmt::format("session {}: {}={} committed without an affirmation", c, name, slot.value));
                continue;
            }
            const auto& response = s.turns.at(*slot.confirmed_turn);
            const Turn* request = nullptr;
            for (std::size_t i = *slot.confirmed_turn; i-- > 0;) {
                if (s.turns[i].kind != TurnKind::reprompt) {
                    request = &s.turns[i];
                    break;
                }
            }
            if (response.kind != TurnKind::loopback_confirm_response || !request ||
                request->kind != TurnKind::loopback_confirm_request ||
                request->text.find(slot.value) == std::string::npos) {
                failures.add(fmt::format("session {}: {}={} lacks a request/affirmation pair", c, name, slot.value));
            }
        }
        const auto it = s.collected_slots.find("pain_level");
        const std::optional<std::string> committed =
            it == s.collected_slots.end() ? std::nullopt : std::optional(it->second.value);
        if (committed != last_affirmed) {
            failures.add(fmt::format("session {}: committed {} but last affirmed {}", c, committed.value_or("nothing"),
                                     last_affirmed.value_or("nothing")));
        }
        for (const auto& v : validate_session(s)) {
            failures.add(fmt::format("session {}: {}", c, v));
        }
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    if (commits == 0 || negatives == 0 || corrections_sent == 0) {
        return {false, "generator did not exercise both affirmations and negations"};
    }
    return {true, fmt::format("{} sessions, {} read-backs, {} commits, {} negative confirmations (none committed)",
                              kSessions, readbacks, commits, negatives)};
}

// ---------------------------------------------------------------------------
// 4. state machine totality

Outcome criterion_state_machine() {
    using S = SessionStatus;
    using E = SessionEvent;
    using A = TransitionAction;
    // The documented table.
    const std::map<std::pair<S, E>, A> table = {
        {{S::active, E::patient_utterance}, A::converse},
        {{S::active, E::pause_timeout}, A::reprompt_or_pause},
        {{S::active, E::close}, A::complete},
        {{S::awaiting_confirmation, E::patient_utterance}, A::resolve_loopback},
        {{S::awaiting_confirmation, E::pause_timeout}, A::reprompt_or_pause},
        {{S::awaiting_confirmation, E::close}, A::complete},
        {{S::paused, E::patient_utterance}, A::resume_and_converse},
        {{S::paused, E::pause_timeout}, A::ignore},
        {{S::paused, E::close}, A::complete},
        {{S::completed, E::patient_utterance}, A::reject},
        {{S::completed, E::pause_timeout}, A::ignore},
        {{S::completed, E::close}, A::reject},
        {{S::aborted, E::patient_utterance}, A::reject},
        {{S::aborted, E::pause_timeout}, A::ignore},
        {{S::aborted, E::close}, A::reject},
    };
    const std::vector<S> statuses = {S::active, S::awaiting_confirmation, S::paused, S::completed, S::aborted};
    const std::vector<E> events = {E::patient_utterance, E::pause_timeout, E::close};

    EngineConfig config;
    config.max_consecutive_reprompts = 0;  // a timeout pauses at once
    Deployment d("", config);
    d.gateway.register_backend("lambda", std::make_shared<LambdaBackend>([](const CompletionRequest&) {
                                   return std::string(kPainQuestion);
                               }),
                               true);
    const auto profile = d.store->get_patient(john_id);
    const auto protocol = d.store->get_protocol(post_surgery);
    auto make = [&](S status) {
        auto s = d.engine.start_session("ses_sm", profile, protocol, Initiator::provider);
        switch (status) {
            case S::active: break;
            case S::awaiting_confirmation: d.engine.patient_turn(s, profile, protocol, "I would say 5."); break;
            case S::paused: d.engine.handle_pause(s, s.turns.back().timestamp + std::chrono::minutes(5)); break;
            case S::completed: d.engine.close(s); break;
            case S::aborted:
                d.engine.close(s);
                s.status = S::aborted;
                break;
        }
        return s;
    };

    Failures failures;
    std::size_t checked = 0;
    for (auto status : statuses) {
        for (auto event : events) {
            ++checked;
            const auto expected = table.at({status, event});
            const auto actual = transition(status, event);
            if (actual != expected) {
                failures.add(fmt::format("({}, {}) -> {} expected {}", to_string(status), to_string(event),
                                         to_string(actual), to_string(expected)));
                continue;
            }
            // The engine behaves as the table says.
            auto s = make(status);
            if (s.status != status) {
                failures.add(fmt::format("could not reach {}", to_string(status)));
                continue;
            }
            const Session before = s;
            bool behaved = false;
            try {
                switch (event) {
                    case E::patient_utterance: {
                        const auto reply = d.engine.patient_turn(s, profile, protocol, "I'm okay.");
                        const auto& patient = s.turns.at(before.turns.size());
                        behaved = (expected == A::converse && s.status == S::active &&
                                   patient.kind == TurnKind::normal && reply.speaker == Speaker::assistant) ||
                                  (expected == A::resolve_loopback && patient.kind == TurnKind::loopback_confirm_response) ||
                                  (expected == A::resume_and_converse && s.status == S::active &&
                                   reply.speaker == Speaker::assistant);
                        break;
                    }
                    case E::pause_timeout: {
                        const auto r = d.engine.handle_pause(s, s.turns.back().timestamp + std::chrono::minutes(5));
                        behaved = (expected == A::ignore && !r && s == before) ||
                                  (expected == A::reprompt_or_pause && (r || s.status == S::paused));
                        break;
                    }
                    case E::close:
                        d.engine.close(s);
                        behaved = expected == A::complete && s.status == S::completed;
                        break;
                }
            } catch (const LifecycleError&) {
                behaved = expected == A::reject && s == before;
            }
            if (!behaved) {
                failures.add(fmt::format("engine disagrees with ({}, {}) -> {}", to_string(status), to_string(event),
                                         to_string(expected)));
            }
        }
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    return {true, fmt::format("{} (status, event) pairs match the table and the engine", checked)};
}

// ---------------------------------------------------------------------------
// 5. highlight anchoring

// Independent normalization: ASCII alnum lowercased, ASCII punctuation and
// U+2010..U+2027 removed, whitespace runs collapsed, trimmed.
std::string oracle_normalize(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if (c >= 0xF0) {
            len = 4;
        } else if (c >= 0xE0) {
            len = 3;
        } else if (c >= 0xC0) {
            len = 2;
        }
        len = std::min(len, s.size() - i);
        if (len == 1) {
            if (std::isspace(c)) {
                pending_space = !out.empty();
            } else if (std::isalnum(c)) {
                if (pending_space) {
                    out += ' ';
                    pending_space = false;
                }
                out += static_cast<char>(std::tolower(c));
            }
        } else if (len == 2 && c == 0xC2 && static_cast<unsigned char>(s[i + 1]) == 0xA0) {
            pending_space = !out.empty();
        } else {
            const bool general_punct = len == 3 && c == 0xE2 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
                                       static_cast<unsigned char>(s[i + 2]) >= 0x90 &&
                                       static_cast<unsigned char>(s[i + 2]) <= 0xA7;
            if (!general_punct) {
                if (pending_space) {
                    out += ' ';
                    pending_space = false;
                }
                out.append(s, i, len);
            }
        }
        i += len;
    }
    return out;
}

bool is_boundary(const std::string& s, std::size_t i) {
    return i == s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80;
}

// Brute force: earliest exact occurrence across patient turns, else the
// earliest tight substring whose normalization equals the quote's.
std::optional<HighlightSpan> oracle_anchor(const std::vector<Turn>& turns, const std::string& quote, bool& normalized) {
    normalized = false;
    if (!quote.empty()) {
        for (const auto& t : turns) {
            if (t.speaker != Speaker::patient) {
                continue;
            }
            for (std::size_t b = 0; b + quote.size() <= t.text.size(); ++b) {
                if (t.text.compare(b, quote.size(), quote) == 0) {
                    return HighlightSpan{"", t.turn_index, b, b + quote.size(), quote};
                }
            }
        }
    }
    const auto nq = oracle_normalize(quote);
    if (nq.empty()) {
        return std::nullopt;
    }
    for (const auto& t : turns) {
        if (t.speaker != Speaker::patient) {
            continue;
        }
        const auto& x = t.text;
        for (std::size_t b = 0; b < x.size(); ++b) {
            if (!is_boundary(x, b)) {
                continue;
            }
            for (std::size_t e = b + 1; e <= x.size(); ++e) {
                if (!is_boundary(x, e)) {
                    continue;
                }
                if (oracle_normalize(x.substr(b, e - b)) != nq) {
                    continue;
                }
                // Tight on the left: dropping the first code point changes the result.
                std::size_t next = b + 1;
                while (!is_boundary(x, next)) {
                    ++next;
                }
                if (next <= e && oracle_normalize(x.substr(next, e - next)) == nq) {
                    break;
                }
                normalized = true;
                return HighlightSpan{"", t.turn_index, b, e, x.substr(b, e - b)};
            }
        }
    }
    return std::nullopt;
}

Outcome criterion_anchoring(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<std::string> vocab = {
        "I",     "have",  "a",      "little", "pain",   "in",     "my",       "knee",   "It's",   "about",
        "2",     "fever", "cough",  "and",    "tired",  "today",  "doctor",   "Yes,",   "no.",    "really",
        "bad",   "\u2014",     "“okay”", "don't",  "sleep",  "well",   "...",      "Héllo",  "stairs", "ache"};
    auto sentence = [&](std::size_t lo, std::size_t hi) {
        std::string out;
        const auto n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const auto sep = rng() % 7 == 0 ? std::string("  ") : std::string(" ");
            out += (i ? sep : "") + vocab[rng() % vocab.size()];
        }
        return out;
    };
    auto snap = [](const std::string& s, std::size_t i) {
        while (i < s.size() && !is_boundary(s, i)) {
            ++i;
        }
        return i;
    };
    // Variations a model might produce when quoting.
    auto perturb = [&](std::string q) {
        switch (rng() % 5) {
            case 0: std::transform(q.begin(), q.end(), q.begin(), [](unsigned char ch) { return std::toupper(ch); }); break;
            case 1: q = "“" + q + "”"; break;
            case 2: q += "."; break;
            case 3: {
                std::string out;
                for (char ch : q) {
                    if (ch != ',' && ch != '.' && ch != '\'') {
                        out += ch;
                    }
                }
                q = out;
                break;
            }
            default: q = "  " + q + " "; break;
        }
        return q;
    };

    Failures failures;
    std::size_t total_quotes = 0, total_dropped = 0, total_spans = 0, total_normalized = 0;
    constexpr int kCases = 500;
    for (int c = 0; c < kCases; ++c) {
        std::vector<Turn> turns;
        const auto n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
        for (std::size_t i = 0; i < n; ++i) {
            Turn t;
            t.turn_index = i;
            t.speaker = i % 2 == 0 ? Speaker::assistant : Speaker::patient;
            t.text = sentence(1, 12);
            turns.push_back(std::move(t));
        }
        std::vector<std::string> quotes;
        const auto q = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
        for (std::size_t i = 0; i < q; ++i) {
            const auto& src = turns[rng() % turns.size()].text;
            auto b = snap(src, rng() % (src.size() + 1));
            auto e = snap(src, b + rng() % (src.size() - b + 1));
            std::string quote = src.substr(b, e - b);
            switch (rng() % 6) {
                case 0: quote = perturb(quote); break;
                case 1: quote = sentence(1, 4); break;
                case 2: if (!quotes.empty()) quote = quotes[rng() % quotes.size()]; break;
                case 3: if (rng() % 4 == 0) quote = rng() % 2 ? "" : " ... "; break;
                default: break;
            }
            quotes.push_back(quote);
        }

        const auto got = anchor_quotes(turns, quotes);
        std::vector<HighlightSpan> expected;
        std::size_t dropped = 0;
        for (const auto& quote : quotes) {
            bool normalized = false;
            if (auto span = oracle_anchor(turns, quote, normalized)) {
                total_normalized += normalized ? 1 : 0;
                if (std::find(expected.begin(), expected.end(), *span) == expected.end()) {
                    expected.push_back(*span);
                }
            } else {
                ++dropped;
            }
        }
        total_quotes += quotes.size();
        total_dropped += dropped;
        total_spans += expected.size();
        if (got.spans != expected) {
            failures.add(fmt::format("case {}: {} spans, oracle {}", c, got.spans.size(), expected.size()));
        } else if (got.dropped_quotes != dropped) {
            failures.add(fmt::format("case {}: dropped {}, oracle {}", c, got.dropped_quotes, dropped));
        }
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    if (total_normalized == 0 || total_dropped == 0) {
        return {false, "generator never exercised normalized matches or dropped quotes"};
    }
    return {true, fmt::format("{} cases, {} quotes ({} matched after normalization, {} dropped), {} spans, all equal "
                              "to the brute-force oracle",
                              kCases, total_quotes, total_normalized, total_dropped, total_spans)};
}

// ---------------------------------------------------------------------------
// 6. risk parsing

Outcome criterion_risk(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<std::string> tokens = {
        "low",   "moderate", "high",  "medium", "LOW",  "High",  "risk",    "level", "Risk Level:", ":",   "-",
        "is",    "not",      "very",  "the",    "pain", "2/10",  "\n",      "Reasoning:", "**", "urgent", "none",
        "lowly", "highway",  "é", "{",     "}",    "null",  "patient", "fever", "..."};
    Failures failures;
    constexpr int kFuzz = 2000;
    std::size_t levels = 0, reviews = 0;
    for (int c = 0; c < kFuzz; ++c) {
        std::string raw;
        const auto n = std::uniform_int_distribution<std::size_t>(0, 20)(rng);
        for (std::size_t i = 0; i < n; ++i) {
            raw += (rng() % 3 ? " " : "") + tokens[rng() % tokens.size()];
        }
        if (rng() % 10 == 0) {
            // Raw bytes.
            for (int i = 0; i < 16; ++i) {
                raw += static_cast<char>(rng() & 0xFF);
            }
        }
        const auto r = parse_risk(raw);
        if (r.level.has_value() == r.needs_human_review) {
            failures.add(fmt::format("case {}: level and review flag both {}", c, r.needs_human_review));
        }
        if (r.raw_model_output != raw) {
            failures.add(fmt::format("case {}: raw output not preserved", c));
        }
        r.level ? ++levels : ++reviews;
    }

    // Canonical labels, any casing, in the usual output shapes.
    const std::vector<std::pair<std::string, RiskLevel>> canon = {
        {"low", RiskLevel::low}, {"moderate", RiskLevel::moderate}, {"high", RiskLevel::high}};
    const std::vector<std::string> shapes = {"{}", "{}.", "Risk level: {}", "Risk Level: {}\nReasoning: stable vitals",
                                             "{} - the patient reports mild symptoms", "**{}**"};
    std::size_t canonical = 0;
    for (const auto& [word, level] : canon) {
        for (const auto& shape : shapes) {
            for (int v = 0; v < 8; ++v) {
                std::string w = word;
                for (auto& ch : w) {
                    if (rng() % 2) {
                        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                    }
                }
                const auto raw = fmt::format(fmt::runtime(shape), w);
                const auto r = parse_risk(raw);
                ++canonical;
                if (r.level != level || r.needs_human_review) {
                    failures.add(fmt::format("'{}' did not parse as {}", raw, word));
                }
            }
        }
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    return {true, fmt::format("{} fuzzed outputs ({} with a level, {} for review), {} canonical label checks", kFuzz,
                              levels, reviews, canonical)};
}

// ---------------------------------------------------------------------------
// 7. store durability

constexpr int kWrites = 1000;
constexpr int kSessionsInWorkload = 40;
const std::string kSecret = "acceptance-durability-secret";
const std::string kMarkerName = "Quentin Zabriskie";

// Write i stores session i % 40 with a turn count determined by i.
Session workload_session(int i) {
    const int s = i % kSessionsInWorkload;
    const int pairs = i / kSessionsInWorkload + 1;
    Session out;
    out.session_id = fmt::format("ses_dur_{:02d}", s);
    out.patient_id = john_id;
    out.protocol_id = post_surgery;
    out.initiator = Initiator::provider;
    out.created = Timestamp::from_millis(1'700'000'000'000);
    for (int k = 0; k < pairs * 2; ++k) {
        Turn t;
        t.turn_index = static_cast<std::size_t>(k);
        t.speaker = k % 2 == 0 ? Speaker::assistant : Speaker::patient;
        t.text = k % 2 == 0 ? fmt::format("How is the knee today, {}? (check {})", kMarkerName, k)
                            : fmt::format("Durable marker {}-{}: my pain is about {}.", s, k, k % 10 + 1);
        t.timestamp = Timestamp::from_millis(1'700'000'000'000 + k * 1000);
        out.turns.push_back(std::move(t));
    }
    return out;
}

// Child: writes [from, kWrites) and reports each committed index on fd.
[[noreturn]] void workload_child(const std::filesystem::path& dir, int from, int fd) {
    int code = 0;
    try {
        auto store = Store::open(dir, kSecret);
        if (from == 0) {
            PatientProfile p = store->get_patient(john_id);
            p.name = kMarkerName;
            p.medical_history.push_back("Marker history entry for " + kMarkerName);
            store->put_patient(p);
        }
        for (int i = from; i < kWrites; ++i) {
            store->put_session(workload_session(i));
            if (::write(fd, &i, sizeof i) != static_cast<ssize_t>(sizeof i)) {
                code = 2;
                break;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "writer: " << e.what() << '\n';
        code = 1;
    }
    ::close(fd);
    ::_exit(code);
}

// Runs a writer from `from`; kills it with SIGKILL after `kill_after` acknowledgements
// (negative: let it finish). Returns the last acknowledged index and whether it was killed.
std::pair<int, bool> run_writer(const std::filesystem::path& dir, int from, int kill_after) {
    int fds[2];
    if (::pipe(fds) != 0) {
        throw std::runtime_error("pipe failed");
    }
    std::cout.flush();
    std::cerr.flush();
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw std::runtime_error("fork failed");
    }
    if (pid == 0) {
        ::close(fds[0]);
        workload_child(dir, from, fds[1]);
    }
    ::close(fds[1]);
    int last = from - 1;
    int seen = 0;
    bool killed = false;
    int idx = 0;
    while (::read(fds[0], &idx, sizeof idx) == static_cast<ssize_t>(sizeof idx)) {
        last = idx;
        if (kill_after >= 0 && ++seen >= kill_after) {
            ::kill(pid, SIGKILL);
            killed = true;
            break;
        }
    }
    // Acknowledgements already in the pipe were committed before the kill.
    while (::read(fds[0], &idx, sizeof idx) == static_cast<ssize_t>(sizeof idx)) {
        last = idx;
    }
    ::close(fds[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!killed && !(WIFEXITED(status) && WEXITSTATUS(status) == 0)) {
        throw std::runtime_error("writer failed");
    }
    return {last, killed && WIFSIGNALED(status)};
}

// Every record decrypts, every session validates and holds at least the last acknowledged write.
void verify_store(const std::filesystem::path& dir, int last_ack, Failures& failures) {
    auto store = Store::open(dir, kSecret);
    std::ostringstream dump;
    store->export_snapshot(dump);  // decrypts and decodes every record
    for (int s = 0; s < kSessionsInWorkload; ++s) {
        // Latest acknowledged write for this session, and the one that may have been in flight.
        int acked = -1;
        for (int i = s; i <= last_ack; i += kSessionsInWorkload) {
            acked = i;
        }
        const int in_flight = last_ack + 1 < kWrites && (last_ack + 1) % kSessionsInWorkload == s ? last_ack + 1 : -1;
        const auto found = store->find_session(fmt::format("ses_dur_{:02d}", s));
        if (acked < 0) {
            if (found && !(in_flight >= 0 && *found == workload_session(in_flight))) {
                failures.add(fmt::format("session {} present before any acknowledged write", s));
            }
            continue;
        }
        if (!found) {
            failures.add(fmt::format("session {} lost (acknowledged write {})", s, acked));
            continue;
        }
        if (!validate_session(*found).empty()) {
            failures.add(fmt::format("session {} fails validation", s));
        }
        if (*found != workload_session(acked) && !(in_flight >= 0 && *found == workload_session(in_flight))) {
            failures.add(fmt::format("session {} holds neither write {} nor the in-flight write", s, acked));
        }
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".db") {
            continue;
        }
        sqlite3* db = nullptr;
        if (sqlite3_open_v2(entry.path().c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
            failures.add("cannot open " + entry.path().string());
        } else {
            sqlite3_stmt* stmt = nullptr;
            sqlite3_prepare_v2(db, "PRAGMA integrity_check", -1, &stmt, nullptr);
            const bool ok = stmt && sqlite3_step(stmt) == SQLITE_ROW &&
                            std::string(reinterpret_cast<const char*>(sqlite3_column_text(stmt, 0))) == "ok";
            sqlite3_finalize(stmt);
            if (!ok) {
                failures.add("integrity_check failed on " + entry.path().string());
            }
        }
        sqlite3_close(db);
    }
}

Outcome criterion_store_durability(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TempDir tmp;
    const auto dir = tmp.path() / "store";
    {
        auto store = Store::open(dir, kSecret);
        load_bundle(*store);
    }
    Failures failures;
    int next = 0;
    int kills = 0;
    // Two crash-and-restart cycles, then a final run to the end of the workload.
    for (int cycle = 0; cycle < 2 && next < kWrites; ++cycle) {
        const int budget = std::uniform_int_distribution<int>(50, 400)(rng);
        const auto [last, killed] = run_writer(dir, next, budget);
        kills += killed ? 1 : 0;
        verify_store(dir, last, failures);
        next = last + 1;
    }
    const auto [last, killed] = run_writer(dir, next, -1);
    verify_store(dir, last, failures);
    if (last != kWrites - 1) {
        failures.add(fmt::format("workload stopped at {}", last));
    }

    // Nothing readable on disk.
    const std::vector<std::string> needles = {kMarkerName, "Durable marker", "How is the knee", "Marker history",
                                              "Knee joint surgery", "ibuprofen"};
    std::size_t bytes = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto content = read_file(entry.path());
        bytes += content.size();
        for (const auto& n : needles) {
            if (content.find(n) != std::string::npos) {
                failures.add(fmt::format("plaintext '{}' in {}", n, entry.path().filename().string()));
            }
        }
    }
    if (kills == 0) {
        failures.add("no writer was killed mid-workload");
    }
    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    return {true, fmt::format("{} writes across {} SIGKILL restarts, all records decrypt and validate, no plaintext "
                              "in {} bytes on disk",
                              kWrites, kills, bytes)};
}

// ---------------------------------------------------------------------------
// 8. API contract

Outcome criterion_api() {
    ApiHarness api("b1");
    Failures failures;
    auto expect = [&](bool cond, const std::string& what) {
        if (!cond) {
            failures.add(what);
        }
    };
    const auto utterances = [] {
        std::vector<std::string> out;
        for (const auto& step : load_persona(fixture_path("personas/b1.json")).steps) {
            out.push_back(step.utterance);
        }
        return out;
    }();

    // Auth separation.
    const auto start = api.post("/v1/sessions", provider_token, {{"patient_id", john_id}, {"protocol_id", post_surgery}});
    expect(start.status == 201, "provider start");
    const auto sid = start.body.value("session_id", std::string());
    const auto path = "/v1/sessions/" + sid;
    expect(api.get(path, "").status == 401, "no token is 401");
    expect(api.get(path, "forged").status == 401, "unknown token is 401");
    expect(api.get(path, john_token).status == 200, "owner can read");
    expect(api.get(path, mary_token).status == 403, "other patient cannot read");
    expect(api.post(path + "/turns", mary_token, {{"text", utterances.at(0)}}).status == 403,
           "other patient cannot post");
    expect(api.get("/v1/provider/sessions", john_token).status == 403, "patient cannot list the queue");
    expect(api.get("/v1/provider/sessions/" + sid, mary_token).status == 403, "patient cannot read provider detail");
    expect(api.get("/v1/patients/" + john_id, mary_token).status == 403, "patient cannot read another profile");

    // Idempotent retries: the first turn twice under one key.
    const json first{{"text", utterances.at(0)}};
    const auto a = api.post(path + "/turns", john_token, first, {{"Idempotency-Key", "turn-1"}});
    const auto b = api.post(path + "/turns", john_token, first, {{"Idempotency-Key", "turn-1"}});
    expect(a.status == 200 && b.status == 200 && a.raw == b.raw, "retried turn returns the same response");
    expect(b.header("Idempotent-Replayed") == "true", "replay is marked");
    expect(api.d.store->get_session(sid).turns.size() == 3, "retried turn applied once");
    expect(api.post(path + "/turns", john_token, {{"text", "different"}}, {{"Idempotency-Key", "turn-1"}}).status == 422,
           "key reuse with another body is rejected");
    const json create{{"protocol_id", daily_care}};
    const auto c1 = api.post("/v1/sessions", mary_token, create, {{"Idempotency-Key", "create-1"}});
    const auto c2 = api.post("/v1/sessions", mary_token, create, {{"Idempotency-Key", "create-1"}});
    expect(c1.status == 201 && c1.raw == c2.raw, "retried create returns the same session");
    SessionFilter mary_filter;
    mary_filter.patient_id = mary_id;
    expect(api.d.store->list_sessions(mary_filter).total == 1, "retried create stored once");

    // Lifecycle conflicts.
    for (std::size_t i = 1; i < utterances.size(); ++i) {
        const auto r = api.post(path + "/turns", john_token, {{"text", utterances[i]}});
        expect(r.status == 200, fmt::format("turn {} accepted", i));
    }
    expect(api.get(path, john_token).body.value("status", std::string()) == "completed", "session completed");
    expect(api.post(path + "/turns", john_token, {{"text", "One more thing"}}).status == 409, "turn after completion");
    expect(api.post(path + "/close", john_token).status == 409, "close after completion");
    api.server.wait_idle();
    expect(api.post("/v1/provider/sessions/" + sid + "/done", provider_token).status == 200, "mark done");
    expect(api.post("/v1/provider/sessions/" + sid + "/done", provider_token).status == 409, "mark done twice");
    expect(api.get("/v1/sessions/ses_missing", provider_token).status == 404, "unknown session");

    if (failures.count > 0) {
        return {false, failures.describe()};
    }
    return {true, "auth separation, idempotent retries and lifecycle conflicts over HTTP"};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const auto seed = seed_value();
    struct Criterion {
        int id;
        std::string name;
        std::function<Outcome()> run;
    };
    // Durability runs before anything starts threads, since it forks.
    const std::vector<Criterion> criteria = {
        {7, "store durability", [&] { return criterion_store_durability(seed + 7); }},
        {1, "transcript replay", criterion_replay},
        {2, "prompt assembly", [&] { return criterion_prompt_assembly(seed + 2); }},
        {3, "loopback soundness", [&] { return criterion_loopback(seed + 3); }},
        {4, "state machine totality", criterion_state_machine},
        {5, "highlight anchoring", [&] { return criterion_anchoring(seed + 5); }},
        {6, "risk parse totality", [&] { return criterion_risk(seed + 6); }},
        {8, "API contract", criterion_api},
    };
    std::map<int, std::string> lines;
    bool all = true;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        lines[c.id] = fmt::format("{} criterion {} ({}): {}", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail);
    }
    for (const auto& [id, line] : lines) {
        std::cout << line << '\n';
    }
    std::cout << "seed " << seed << '\n';
    return all ? 0 : 1;
}
