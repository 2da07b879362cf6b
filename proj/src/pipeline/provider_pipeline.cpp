#include "carelink/provider_pipeline.hpp"

#include "carelink/error.hpp"

#include <future>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace carelink {

namespace {

template <typename T>
struct StageOutcome {
    std::optional<T> value;
    std::string error;
};

template <typename Fn>
auto run_stage(bool wanted, Fn fn) -> std::future<StageOutcome<decltype(fn())>> {
    using T = decltype(fn());
    if (!wanted) {
        std::promise<StageOutcome<T>> idle;
        idle.set_value({});
        return idle.get_future();
    }
    return std::async(std::launch::async, [fn = std::move(fn)]() -> StageOutcome<T> {
        try {
            return {fn(), {}};
        } catch (const std::exception& e) {
            return {std::nullopt, e.what()};
        }
    });
}

void record_stage(StageStatus& stage, bool ran, const std::string& error) {
    if (!ran) {
        return;
    }
    ++stage.attempts;
    stage.state = error.empty() ? StageState::succeeded : StageState::failed;
    stage.error = error;
}

}  // namespace

ProviderPipeline::ProviderPipeline(Store& store, const PromptEngine& prompts, LlmGateway& gateway, const Clock& clock,
                                   CompletionDefaults defaults)
    : store_(store), prompts_(prompts), gateway_(gateway), clock_(clock), defaults_(defaults) {}

void ProviderPipeline::set_sink(std::shared_ptr<NotificationSink> sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

std::shared_ptr<std::mutex> ProviderPipeline::lock_for(const std::string& session_id) {
    std::lock_guard lock(mu_);
    auto& slot = locks_[session_id];
    if (!slot) {
        slot = std::make_shared<std::mutex>();
    }
    return slot;
}

void ProviderPipeline::require_completed(const Session& session) const {
    if (session.status != SessionStatus::completed) {
        throw PreconditionError(fmt::format("session {} is {}; provider processing needs a completed session",
                                            session.session_id, to_string(session.status)));
    }
}

ClinicalSummary ProviderPipeline::summarize_session(const Session& session) const {
    require_completed(session);
    const auto bundle = prompts_.build_summary_prompt(store_.get_patient(session.patient_id),
                                                      store_.get_protocol(session.protocol_id), session);
    auto summary = parse_clinical_summary(gateway_.complete(defaults_.make(bundle)));
    summary.session_id = session.session_id;
    if (summary.parse_warning) {
        spdlog::warn("summary for session {} did not match the expected sections", session.session_id);
    }
    return summary;
}

HighlightReport ProviderPipeline::extract_highlights(const Session& session) const {
    require_completed(session);
    const auto bundle = prompts_.build_highlight_prompt(store_.get_patient(session.patient_id),
                                                        store_.get_protocol(session.protocol_id), session);
    HighlightReport report;
    report.session_id = session.session_id;
    report.raw_model_output = gateway_.complete(defaults_.make(bundle));
    auto anchored = anchor_quotes(session.turns, parse_highlight_quotes(report.raw_model_output));
    report.spans = std::move(anchored.spans);
    for (auto& span : report.spans) {
        span.session_id = session.session_id;
    }
    report.dropped_quotes = anchored.dropped_quotes;
    if (report.dropped_quotes > 0) {
        spdlog::info("session {}: {} highlight quote(s) could not be anchored", session.session_id,
                     report.dropped_quotes);
    }
    return report;
}

RiskAssessment ProviderPipeline::assess_risk(const Session& session) const {
    require_completed(session);
    const auto bundle = prompts_.build_risk_prompt(store_.get_patient(session.patient_id),
                                                   store_.get_protocol(session.protocol_id), session);
    auto risk = parse_risk(gateway_.complete(defaults_.make(bundle)));
    risk.session_id = session.session_id;
    return risk;
}

ProcessingRecord ProviderPipeline::process_session(const std::string& session_id, bool force) {
    auto guard = lock_for(session_id);
    std::lock_guard lock(*guard);

    const auto session = store_.get_session(session_id);
    require_completed(session);
    auto record = store_.find_processing(session_id).value_or(ProcessingRecord{});
    record.session_id = session_id;

    const bool run_summary = force || record.summary.retryable();
    const bool run_highlights = force || record.highlights.retryable();
    const bool run_risk = force || record.risk.retryable();

    auto summary = run_stage(run_summary, [&] { return summarize_session(session); });
    auto highlights = run_stage(run_highlights, [&] { return extract_highlights(session); });
    auto risk = run_stage(run_risk, [&] { return assess_risk(session); });

    auto s = summary.get();
    auto h = highlights.get();
    auto r = risk.get();

    if (s.value) {
        store_.put_summary(*s.value);
    }
    if (h.value) {
        store_.put_highlights(*h.value);
    }
    if (r.value) {
        store_.put_risk(*r.value);
    }
    record_stage(record.summary, run_summary, s.error);
    record_stage(record.highlights, run_highlights, h.error);
    record_stage(record.risk, run_risk, r.error);
    for (const auto* err : {&s.error, &h.error, &r.error}) {
        if (!err->empty()) {
            spdlog::warn("session {}: provider stage failed: {}", session_id, *err);
        }
    }

    const bool any_artifact = record.summary.state == StageState::succeeded ||
                              record.highlights.state == StageState::succeeded ||
                              record.risk.state == StageState::succeeded;
    const bool notify = any_artifact && !record.notified;
    record.notified = record.notified || notify;
    record.updated = clock_.now();
    store_.put_processing(record);

    std::shared_ptr<NotificationSink> sink;
    {
        std::lock_guard sink_lock(mu_);
        sink = sink_;
    }
    if (notify && sink) {
        ProviderNotification note;
        note.session_id = session_id;
        note.patient_id = session.patient_id;
        if (auto latest = store_.latest_risk(session_id)) {
            note.level = latest->level;
            note.needs_human_review = latest->needs_human_review;
        }
        note.at = record.updated;
        sink->publish(std::move(note));
    }
    return record;
}

}  // namespace carelink
