#include "carelink/prompt_engine.hpp"

#include "carelink/error.hpp"
#include "carelink/text.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace carelink {

namespace {

constexpr std::array<std::string_view, 14> kKnownPlaceholders = {
    "name",         "age",          "gender",           "living_situation", "conditions",
    "medical_history", "task_summary", "question_protocol", "key_information", "no_advice_clause",
    "round",        "slot_name",    "slot_description", "candidate_value"};

bool is_known_placeholder(std::string_view name) {
    return std::find(kKnownPlaceholders.begin(), kKnownPlaceholders.end(), name) != kKnownPlaceholders.end();
}

// Calls fn(literal) and fn_slot(name) in order of appearance.
template <typename Literal, typename Slot>
void scan_placeholders(std::string_view text, std::string_view origin, Literal&& on_literal, Slot&& on_slot) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            on_literal(text.substr(pos));
            return;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw ConfigurationError(fmt::format("{}: unterminated placeholder", origin));
        }
        on_literal(text.substr(pos, open - pos));
        on_slot(text::trim(text.substr(open + 2, close - open - 2)));
        pos = close + 2;
    }
}

std::string list_or(const std::vector<std::string>& items, std::string_view empty) {
    if (items.empty()) {
        return std::string(empty);
    }
    std::vector<std::string> cleaned;
    cleaned.reserve(items.size());
    for (const auto& item : items) {
        cleaned.push_back(neutralize_delimiters(item));
    }
    return text::join(cleaned, ", ");
}

std::string numbered(const std::vector<std::string>& items) {
    if (items.empty()) {
        return "(no protocol questions configured)";
    }
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) {
            out.push_back('\n');
        }
        out += fmt::format("{}. {}", i + 1, neutralize_delimiters(items[i]));
    }
    return out;
}

std::string_view value_kind_label(ValueKind kind) {
    switch (kind) {
        case ValueKind::scalar_1_to_10: return "number from 1 to 10";
        case ValueKind::yes_no: return "yes or no";
        case ValueKind::free_text: return "free text";
    }
    return "free text";
}

std::string key_information_text(const ConversationProtocol& protocol) {
    if (protocol.key_information.empty()) {
        return "(no key information slots; rely on the question protocol)";
    }
    std::string out;
    for (std::size_t i = 0; i < protocol.key_information.size(); ++i) {
        const auto& slot = protocol.key_information[i];
        if (i > 0) {
            out.push_back('\n');
        }
        out += fmt::format("- {} ({}): {}", neutralize_delimiters(slot.slot_name), value_kind_label(slot.value_kind),
                           neutralize_delimiters(slot.description));
    }
    return out;
}

std::map<std::string, std::string> base_values(const PatientProfile& profile, const ConversationProtocol& protocol) {
    return {
        {"name", neutralize_delimiters(profile.name)},
        {"age", std::to_string(profile.age)},
        {"gender", neutralize_delimiters(profile.gender)},
        {"living_situation", neutralize_delimiters(profile.living_situation)},
        {"conditions", list_or(profile.conditions, "none recorded")},
        {"medical_history", list_or(profile.medical_history, "none recorded")},
        {"task_summary", neutralize_delimiters(protocol.task_summary)},
        {"question_protocol", numbered(protocol.question_protocol)},
        {"key_information", key_information_text(protocol)},
    };
}

std::string section(std::string_view delimiter, std::string_view body) {
    std::string out(delimiter);
    out.push_back('\n');
    out.append(body);
    return out;
}

void require_inputs(const PatientProfile& profile, const ConversationProtocol& protocol) {
    if (profile.patient_id.empty()) {
        throw ConfigurationError("prompt requires a patient profile");
    }
    if (protocol.protocol_id.empty()) {
        throw ConfigurationError("prompt requires a conversation protocol");
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigurationError(fmt::format("cannot read template file {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_blocks(const PromptTemplate& tmpl, std::string_view kind, std::initializer_list<std::string_view> names) {
    for (auto name : names) {
        if (!tmpl.has(name)) {
            throw ConfigurationError(fmt::format("{} template is missing block '{}'", kind, name));
        }
    }
}

}  // namespace

std::string_view to_string(PromptKind kind) noexcept {
    switch (kind) {
        case PromptKind::question: return "question";
        case PromptKind::summary: return "summary";
        case PromptKind::highlight: return "highlight";
        case PromptKind::risk: return "risk";
    }
    return "question";
}

std::string PromptBundle::full_text() const {
    std::string out;
    for (const auto& m : assembled) {
        out.append(m.content);
        out.push_back('\n');
    }
    return out;
}

std::string neutralize_delimiters(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '=') {
            out.push_back(s[i++]);
            continue;
        }
        std::size_t run = 0;
        while (i + run < s.size() && s[i + run] == '=') {
            ++run;
        }
        if (run < 3) {
            out.append(run, '=');
        } else {
            for (std::size_t k = 0; k < run; ++k) {
                if (k > 0) {
                    out.push_back(' ');
                }
                out.push_back('=');
            }
        }
        i += run;
    }
    return out;
}

std::string render_transcript(const std::vector<Turn>& turns) {
    std::string out;
    for (const auto& t : turns) {
        if (!out.empty()) {
            out.push_back('\n');
        }
        out += t.speaker == Speaker::patient ? "Patient: " : "Assistant: ";
        out += neutralize_delimiters(t.text);
    }
    return out;
}

PromptTemplate PromptTemplate::parse(std::string_view file_text, std::string_view origin) {
    PromptTemplate tmpl;
    tmpl.origin_ = std::string(origin);
    std::string current;
    std::string body;
    bool in_block = false;
    auto flush = [&] {
        if (!in_block) {
            return;
        }
        while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) {
            body.pop_back();
        }
        if (!tmpl.blocks_.emplace(current, body).second) {
            throw ConfigurationError(fmt::format("{}: duplicate block '{}'", origin, current));
        }
    };
    for (const auto& line : text::split_lines(file_text)) {
        if (line.rfind("@@ ", 0) == 0) {
            flush();
            current = std::string(text::trim(std::string_view(line).substr(3)));
            body.clear();
            in_block = true;
            continue;
        }
        if (in_block) {
            body += line;
            body.push_back('\n');
        }
    }
    flush();
    for (const auto& [name, content] : tmpl.blocks_) {
        scan_placeholders(
            content, origin, [](std::string_view) {},
            [&](std::string_view slot) {
                if (!is_known_placeholder(slot)) {
                    throw ConfigurationError(
                        fmt::format("{}: block '{}' uses unknown placeholder '{}'", origin, name, slot));
                }
            });
    }
    return tmpl;
}

bool PromptTemplate::has(std::string_view block) const { return blocks_.find(block) != blocks_.end(); }

const std::string& PromptTemplate::block(std::string_view name) const {
    auto it = blocks_.find(name);
    if (it == blocks_.end()) {
        throw ConfigurationError(fmt::format("{}: missing block '{}'", origin_, name));
    }
    return it->second;
}

std::string PromptTemplate::render(std::string_view name, const std::map<std::string, std::string>& values) const {
    std::string out;
    scan_placeholders(
        block(name), origin_, [&](std::string_view lit) { out.append(lit); },
        [&](std::string_view slot) {
            auto it = values.find(std::string(slot));
            if (it == values.end()) {
                throw ConfigurationError(fmt::format("{}: no value for placeholder '{}'", origin_, slot));
            }
            out.append(it->second);
        });
    return out;
}

PromptEngine::PromptEngine(PromptTemplate question, PromptTemplate summary, PromptTemplate highlight,
                           PromptTemplate risk, PromptConfig config)
    : question_(std::move(question)),
      summary_(std::move(summary)),
      highlight_(std::move(highlight)),
      risk_(std::move(risk)),
      config_(config) {
    for (std::string_view name : {"patient_information", "conversation_protocol", "system_setting"}) {
        require_blocks(question_, "question", {name});
        require_blocks(summary_, "summary", {name});
        require_blocks(highlight_, "highlight", {name});
        require_blocks(risk_, "risk", {name});
    }
    require_blocks(question_, "question", {"no_advice_clause", "empty_history", "response_optimization", "content_loopback"});
    require_blocks(summary_, "summary", {"exemplar"});
    require_blocks(risk_, "risk", {"output_format"});
    if (config_.history_token_budget <= 0 || config_.chars_per_token <= 0) {
        throw ConfigurationError("history token budget and chars per token must be positive");
    }
}

PromptEngine PromptEngine::load(const std::filesystem::path& dir, PromptConfig config) {
    auto load_one = [&](std::string_view file) {
        const auto path = dir / file;
        return PromptTemplate::parse(read_file(path), path.string());
    };
    return PromptEngine(load_one("question.tmpl"), load_one("summary.tmpl"), load_one("highlight.tmpl"),
                        load_one("risk.tmpl"), config);
}

std::string PromptEngine::render_history(const std::vector<Turn>& turns) const {
    if (turns.empty()) {
        return question_.block("empty_history");
    }

    // Group into units: a loopback request plus its response stays together.
    struct Unit {
        std::size_t first = 0;
        std::size_t count = 1;
        bool loopback = false;
        std::size_t chars = 0;
    };
    std::vector<Unit> units;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        Unit u{i, 1, false, 0};
        if (turns[i].kind == TurnKind::loopback_confirm_request && i + 1 < turns.size() &&
            turns[i + 1].kind == TurnKind::loopback_confirm_response) {
            u.count = 2;
            u.loopback = true;
        } else if (turns[i].kind == TurnKind::loopback_confirm_request) {
            u.loopback = true;
        }
        for (std::size_t k = u.first; k < u.first + u.count; ++k) {
            u.chars += render_transcript({turns[k]}).size() + 1;
        }
        units.push_back(u);
        i += u.count - 1;
    }

    const auto budget = static_cast<std::size_t>(config_.history_token_budget) *
                        static_cast<std::size_t>(config_.chars_per_token);
    std::size_t total = 0;
    for (const auto& u : units) {
        total += u.chars;
    }
    std::vector<bool> keep(units.size(), true);
    bool dropped = false;
    // Oldest normal units first, then oldest loopback units. The newest unit always stays.
    for (bool loopback_pass : {false, true}) {
        for (std::size_t i = 0; i + 1 < units.size() && total > budget; ++i) {
            if (keep[i] && units[i].loopback == loopback_pass) {
                keep[i] = false;
                total -= units[i].chars;
                dropped = true;
            }
        }
    }

    std::vector<Turn> kept;
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (keep[i]) {
            for (std::size_t k = units[i].first; k < units[i].first + units[i].count; ++k) {
                kept.push_back(turns[k]);
            }
        }
    }
    std::string out = dropped ? "[earlier turns omitted]\n" : "";
    out += render_transcript(kept);
    return out;
}

PromptBundle PromptEngine::build_question_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                                 const std::vector<Turn>& turns, int round,
                                                 const std::optional<LoopbackDirective>& loopback) const {
    require_inputs(profile, protocol);
    if (round < 1) {
        throw PreconditionError(fmt::format("round must be at least 1, got {}", round));
    }
    auto values = base_values(profile, protocol);
    values["no_advice_clause"] = question_.block("no_advice_clause");

    PromptBundle bundle;
    bundle.kind = PromptKind::question;
    bundle.system_text = section(delimiters::patient_information, question_.render("patient_information", values)) +
                         "\n\n" +
                         section(delimiters::conversation_protocol, question_.render("conversation_protocol", values)) +
                         "\n\n" + section(delimiters::system_setting, question_.render("system_setting", values));
    bundle.history_block = render_history(turns);
    bundle.assembled.push_back({Role::system, bundle.system_text});
    bundle.assembled.push_back({Role::system, section(delimiters::conversation_history, bundle.history_block)});

    for (int r = 1; r <= round; ++r) {
        values["round"] = std::to_string(r);
        auto suffix = question_.render("response_optimization", values);
        bundle.assembled.push_back({Role::user, section(delimiters::response_optimization, suffix)});
        if (r == round) {
            bundle.per_round_suffix = std::move(suffix);
        }
    }

    if (loopback) {
        values["slot_name"] = neutralize_delimiters(loopback->slot_name);
        values["slot_description"] = neutralize_delimiters(loopback->slot_description);
        values["candidate_value"] = neutralize_delimiters(loopback->candidate_value);
        auto& last = bundle.assembled.back().content;
        last += "\n\n";
        last += section(delimiters::content_loopback, question_.render("content_loopback", values));
    }
    return bundle;
}

PromptBundle PromptEngine::build_provider_prompt(PromptKind kind, const PromptTemplate& tmpl,
                                                 const PatientProfile& profile, const ConversationProtocol& protocol,
                                                 const Session& session) const {
    require_inputs(profile, protocol);
    if (session.patient_id != profile.patient_id || session.protocol_id != protocol.protocol_id) {
        throw ConfigurationError("session does not belong to the given patient and protocol");
    }
    if (session.turns.empty()) {
        throw PreconditionError("cannot build a provider prompt from an empty transcript");
    }
    if (session.status != SessionStatus::completed) {
        throw PreconditionError(fmt::format("provider prompts require a completed session (status is {})",
                                            to_string(session.status)));
    }
    const auto values = base_values(profile, protocol);

    PromptBundle bundle;
    bundle.kind = kind;
    bundle.system_text = section(delimiters::patient_information, tmpl.render("patient_information", values)) +
                         "\n\n" + section(delimiters::conversation_protocol, tmpl.render("conversation_protocol", values)) +
                         "\n\n" + section(delimiters::system_setting, tmpl.render("system_setting", values));
    bundle.history_block = render_transcript(session.turns);
    bundle.assembled.push_back({Role::system, bundle.system_text});
    bundle.assembled.push_back({Role::user, section(delimiters::conversation_log, bundle.history_block)});

    if (kind == PromptKind::summary) {
        bundle.per_round_suffix = tmpl.block("exemplar");
        bundle.assembled.push_back({Role::user, section(delimiters::summary_example, bundle.per_round_suffix)});
    } else if (kind == PromptKind::risk) {
        bundle.per_round_suffix = tmpl.block("output_format");
        bundle.assembled.push_back({Role::user, section(delimiters::output_format, bundle.per_round_suffix)});
    }
    return bundle;
}

PromptBundle PromptEngine::build_summary_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                                const Session& session) const {
    return build_provider_prompt(PromptKind::summary, summary_, profile, protocol, session);
}

PromptBundle PromptEngine::build_highlight_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                                  const Session& session) const {
    return build_provider_prompt(PromptKind::highlight, highlight_, profile, protocol, session);
}

PromptBundle PromptEngine::build_risk_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                             const Session& session) const {
    return build_provider_prompt(PromptKind::risk, risk_, profile, protocol, session);
}

}  // namespace carelink
