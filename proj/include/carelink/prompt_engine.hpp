#pragma once
// Deterministic prompt assembly for question generation (patient side) and
// the summary / highlight / risk calls (provider side).
//
// Every prompt is built from up to five parts, each introduced by a fixed
// delimiter line so callers and tests can find them byte-exactly:
//   1 patient information, 2 conversation protocol, 3 system setting,
//   4 conversation history (or log), 5 response optimization / exemplar /
//   output format.
// Parts 1-3 form the system message. Question prompts repeat part 5 once per
// conversation round; the highlight prompt has no part 5.

#include "carelink/chat.hpp"
#include "carelink/domain.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carelink {

namespace delimiters {
inline constexpr std::string_view patient_information = "=== PATIENT INFORMATION ===";
inline constexpr std::string_view conversation_protocol = "=== CONVERSATION PROTOCOL ===";
inline constexpr std::string_view system_setting = "=== SYSTEM SETTING ===";
inline constexpr std::string_view conversation_history = "=== CONVERSATION HISTORY ===";
inline constexpr std::string_view conversation_log = "=== CONVERSATION LOG ===";
inline constexpr std::string_view response_optimization = "=== RESPONSE OPTIMIZATION ===";
inline constexpr std::string_view summary_example = "=== SUMMARY EXAMPLE ===";
inline constexpr std::string_view output_format = "=== OUTPUT FORMAT ===";
inline constexpr std::string_view content_loopback = "=== CONTENT LOOPBACK ===";
}  // namespace delimiters

enum class PromptKind { question, summary, highlight, risk };
std::string_view to_string(PromptKind kind) noexcept;

struct PromptBundle {
    PromptKind kind = PromptKind::question;
    std::string system_text;       // parts 1-3
    std::string history_block;     // part 4 body
    std::string per_round_suffix;  // part 5 body for the current round; empty when absent
    std::vector<ChatMessage> assembled;

    // Concatenation of every assembled message, for delimiter counting.
    std::string full_text() const;
};

// Named "@@ block" sections of one template file. Text before the first block
// header is a comment.
class PromptTemplate {
public:
    static PromptTemplate parse(std::string_view file_text, std::string_view origin);

    bool has(std::string_view block) const;
    const std::string& block(std::string_view name) const;  // ConfigurationError when missing

    // Substitutes {{placeholder}} slots. Unknown slots are a ConfigurationError.
    std::string render(std::string_view block, const std::map<std::string, std::string>& values) const;

private:
    std::string origin_;
    std::map<std::string, std::string, std::less<>> blocks_;
};

struct PromptConfig {
    int history_token_budget = 3000;
    int chars_per_token = 4;
};

// A scalar value to read back to the patient in the next reply.
struct LoopbackDirective {
    std::string slot_name;
    std::string slot_description;
    std::string candidate_value;
};

class PromptEngine {
public:
    PromptEngine(PromptTemplate question, PromptTemplate summary, PromptTemplate highlight, PromptTemplate risk,
                 PromptConfig config = {});

    // Reads question.tmpl, summary.tmpl, highlight.tmpl and risk.tmpl from dir.
    static PromptEngine load(const std::filesystem::path& dir, PromptConfig config = {});

    PromptBundle build_question_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                       const std::vector<Turn>& turns, int round,
                                       const std::optional<LoopbackDirective>& loopback = std::nullopt) const;

    PromptBundle build_summary_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                      const Session& session) const;
    PromptBundle build_highlight_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                        const Session& session) const;
    PromptBundle build_risk_prompt(const PatientProfile& profile, const ConversationProtocol& protocol,
                                   const Session& session) const;

    // Rendered text of the configured no-advice clause.
    const std::string& no_advice_clause() const { return question_.block("no_advice_clause"); }
    const std::string& summary_exemplar() const { return summary_.block("exemplar"); }
    const PromptConfig& config() const noexcept { return config_; }

    // History block with the oldest turns dropped to fit the token budget.
    // Loopback request/response pairs are kept or dropped together.
    std::string render_history(const std::vector<Turn>& turns) const;

private:
    PromptBundle build_provider_prompt(PromptKind kind, const PromptTemplate& tmpl, const PatientProfile& profile,
                                       const ConversationProtocol& protocol, const Session& session) const;

    PromptTemplate question_;
    PromptTemplate summary_;
    PromptTemplate highlight_;
    PromptTemplate risk_;
    PromptConfig config_;
};

// "Patient: ..." / "Assistant: ..." lines, one per turn.
std::string render_transcript(const std::vector<Turn>& turns);

// Breaks any run of three or more '=' so inserted data can never forge a delimiter.
std::string neutralize_delimiters(std::string_view s);

}  // namespace carelink
