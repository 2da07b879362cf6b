#pragma once
// Turns a completed session into the three provider artifacts: clinical
// summary, anchored highlights and risk assessment.

#include "carelink/domain.hpp"
#include "carelink/llm_gateway.hpp"
#include "carelink/prompt_engine.hpp"
#include "carelink/store.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carelink {

// --- output parsing (pure)

namespace summary_labels {
inline constexpr std::string_view chief_concern = "Chief Concern";
inline constexpr std::string_view symptom_details = "Symptom Details";
inline constexpr std::string_view patient_questions = "Patient Questions";
inline constexpr std::string_view additional_notes = "Additional Notes";
}  // namespace summary_labels

// Section order does not matter; labels must match (case-insensitive).
// Output with no recognizable label yields empty fields and parse_warning;
// a partially labelled output keeps what it found and also sets parse_warning.
ClinicalSummary parse_clinical_summary(std::string_view raw);

// One quote per line (bullets, numbering and wrapping quotes stripped), or a
// JSON array of strings.
std::vector<std::string> parse_highlight_quotes(std::string_view raw);

// Lowercase, drop punctuation, collapse whitespace, trim.
std::string normalize_for_match(std::string_view s);

struct AnchorResult {
    std::vector<HighlightSpan> spans;  // distinct, in quote order
    std::size_t dropped_quotes = 0;
};

// Exact earliest match across patient turns first, then a normalized match.
AnchorResult anchor_quotes(const std::vector<Turn>& turns, const std::vector<std::string>& quotes);

// Always yields a level or needs_human_review, never both.
RiskAssessment parse_risk(std::string_view raw);

// --- notifications

struct ProviderNotification {
    std::uint64_t event_id = 0;  // assigned by the sink
    std::string session_id;
    std::string patient_id;
    std::optional<RiskLevel> level;
    bool needs_human_review = false;
    Timestamp at;
};

class NotificationSink {
public:
    virtual ~NotificationSink() = default;
    virtual void publish(ProviderNotification note) = 0;
};

// --- pipeline

class ProviderPipeline {
public:
    ProviderPipeline(Store& store, const PromptEngine& prompts, LlmGateway& gateway, const Clock& clock,
                     CompletionDefaults defaults = {});

    void set_sink(std::shared_ptr<NotificationSink> sink);

    // Single stages. PreconditionError unless the session is completed;
    // gateway errors propagate. Nothing is persisted.
    ClinicalSummary summarize_session(const Session& session) const;
    HighlightReport extract_highlights(const Session& session) const;
    RiskAssessment assess_risk(const Session& session) const;

    // Runs the stages that have not succeeded yet (all of them with force),
    // concurrently, persists each artifact that succeeds and the bookkeeping
    // record, and notifies providers once per session.
    ProcessingRecord process_session(const std::string& session_id, bool force = false);

private:
    std::shared_ptr<std::mutex> lock_for(const std::string& session_id);
    void require_completed(const Session& session) const;

    Store& store_;
    const PromptEngine& prompts_;
    LlmGateway& gateway_;
    const Clock& clock_;
    CompletionDefaults defaults_;
    std::shared_ptr<NotificationSink> sink_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace carelink
