#include "carelink/store.hpp"

#include "carelink/codec.hpp"
#include "carelink/error.hpp"

#include <cstdlib>
#include <istream>
#include <mutex>
#include <ostream>

#include <fmt/format.h>
#include <sodium.h>

namespace carelink {

namespace {

std::string associated_data(std::string_view kind, std::string_view id) { return fmt::format("{}|{}", kind, id); }

constexpr std::string_view kExportOrder[] = {
    record_kind::patient, record_kind::protocol, record_kind::session,    record_kind::summary,
    record_kind::highlights, record_kind::risk,  record_kind::action,     record_kind::processing,
};

int seq_of(std::string_view id) {
    const auto hash = id.rfind('#');
    return hash == std::string_view::npos ? 0 : std::atoi(std::string(id.substr(hash + 1)).c_str());
}

}  // namespace

std::string artifact_id(std::string_view session_id, int seq) { return fmt::format("{}#{:06d}", session_id, seq); }

std::string_view to_string(RiskBucket b) noexcept {
    switch (b) {
        case RiskBucket::unassessed: return "none";
        case RiskBucket::low: return "low";
        case RiskBucket::moderate: return "moderate";
        case RiskBucket::needs_review: return "review";
        case RiskBucket::high: return "high";
    }
    return "none";
}

RiskBucket parse_risk_bucket(std::string_view s) {
    for (auto b : {RiskBucket::unassessed, RiskBucket::low, RiskBucket::moderate, RiskBucket::needs_review,
                   RiskBucket::high}) {
        if (to_string(b) == s) {
            return b;
        }
    }
    throw ValidationError(fmt::format("unknown risk filter '{}' (expected low, moderate, high, review or none)", s));
}

RiskBucket risk_bucket(const RiskAssessment& risk) noexcept {
    if (!risk.level) {
        return RiskBucket::needs_review;
    }
    switch (*risk.level) {
        case RiskLevel::low: return RiskBucket::low;
        case RiskLevel::moderate: return RiskBucket::moderate;
        case RiskLevel::high: return RiskBucket::high;
    }
    return RiskBucket::needs_review;
}

Store::Store(std::unique_ptr<StorageBackend> backend, Cipher cipher)
    : backend_(std::move(backend)), cipher_(std::move(cipher)) {}

std::unique_ptr<Store> Store::open(const std::filesystem::path& dir, std::string_view secret) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw StorageError(fmt::format("cannot create store directory {}: {}", dir.string(), ec.message()));
    }
    return std::make_unique<Store>(std::make_unique<SqliteBackend>(dir / db_file_name), Cipher::from_secret(secret));
}

std::unique_ptr<Store> Store::open_from_env() {
    const char* path = std::getenv("STORE_PATH");
    const char* key = std::getenv("STORE_KEY");
    if (!path || !*path) {
        throw ConfigurationError("STORE_PATH is not set");
    }
    if (!key || !*key) {
        throw ConfigurationError("STORE_KEY is not set");
    }
    return open(path, key);
}

std::unique_ptr<Store> Store::in_memory() {
    return std::make_unique<Store>(std::make_unique<MemoryBackend>(), Cipher::random());
}

std::string Store::new_id(std::string_view prefix) const {
    unsigned char raw[8];
    randombytes_buf(raw, sizeof raw);
    char hex[sizeof raw * 2 + 1];
    sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
    return fmt::format("{}_{}", prefix, hex);
}

template <typename T>
void Store::put_record(WriteBatch& batch, std::string_view kind, const std::string& id, const T& value) const {
    const std::string plain = json(value).dump();
    batch.puts.push_back({std::string(kind), id, cipher_.seal(plain, associated_data(kind, id))});
}

template <typename T>
std::optional<T> Store::get_record(std::string_view kind, std::string_view id) const {
    auto blob = backend_->read(kind, id);
    if (!blob) {
        return std::nullopt;
    }
    return decode_text<T>(cipher_.open(*blob, associated_data(kind, id)));
}

template <typename T>
std::vector<T> Store::scan_records(std::string_view kind, std::string_view prefix) const {
    std::vector<T> out;
    for (const auto& rec : backend_->scan(kind, prefix)) {
        out.push_back(decode_text<T>(cipher_.open(rec.blob, associated_data(rec.kind, rec.id))));
    }
    return out;
}

template <typename T>
std::optional<T> Store::latest_artifact(std::string_view kind, std::string_view session_id) const {
    auto recs = backend_->scan(kind, std::string(session_id) + "#");
    if (recs.empty()) {
        return std::nullopt;
    }
    const auto& last = recs.back();
    return decode_text<T>(cipher_.open(last.blob, associated_data(last.kind, last.id)));
}

int Store::next_version(std::string_view kind, std::string_view session_id) const {
    auto recs = backend_->scan(kind, std::string(session_id) + "#");
    return recs.empty() ? 1 : seq_of(recs.back().id) + 1;
}

void Store::require_session(std::string_view session_id) const {
    if (!backend_->index_row(session_id)) {
        throw NotFoundError(fmt::format("session {} not found", session_id));
    }
}

// --- patients and protocols

PatientProfile Store::put_patient(PatientProfile profile) {
    std::unique_lock lock(mu_);
    if (profile.patient_id.empty()) {
        profile.patient_id = new_id("pt");
    }
    validate_profile(profile);
    WriteBatch batch;
    put_record(batch, record_kind::patient, profile.patient_id, profile);
    backend_->commit(batch);
    return profile;
}

std::optional<PatientProfile> Store::find_patient(std::string_view id) const {
    std::shared_lock lock(mu_);
    return get_record<PatientProfile>(record_kind::patient, id);
}

PatientProfile Store::get_patient(std::string_view id) const {
    if (auto p = find_patient(id)) {
        return *p;
    }
    throw NotFoundError(fmt::format("patient {} not found", id));
}

std::vector<PatientProfile> Store::list_patients() const {
    std::shared_lock lock(mu_);
    return scan_records<PatientProfile>(record_kind::patient, "");
}

ConversationProtocol Store::put_protocol(ConversationProtocol protocol) {
    std::unique_lock lock(mu_);
    if (protocol.protocol_id.empty()) {
        protocol.protocol_id = new_id("pr");
    }
    validate_protocol(protocol);
    WriteBatch batch;
    put_record(batch, record_kind::protocol, protocol.protocol_id, protocol);
    backend_->commit(batch);
    return protocol;
}

std::optional<ConversationProtocol> Store::find_protocol(std::string_view id) const {
    std::shared_lock lock(mu_);
    return get_record<ConversationProtocol>(record_kind::protocol, id);
}

ConversationProtocol Store::get_protocol(std::string_view id) const {
    if (auto p = find_protocol(id)) {
        return *p;
    }
    throw NotFoundError(fmt::format("protocol {} not found", id));
}

std::vector<ConversationProtocol> Store::list_protocols() const {
    std::shared_lock lock(mu_);
    return scan_records<ConversationProtocol>(record_kind::protocol, "");
}

// --- sessions

SessionIndexRow Store::row_for(const Session& session) const {
    SessionIndexRow row;
    if (auto existing = backend_->index_row(session.session_id)) {
        row = *existing;
    } else {
        if (auto risk = latest_artifact<RiskAssessment>(record_kind::risk, session.session_id)) {
            row.risk = risk_bucket(*risk);
        }
        for (const auto& a : scan_records<ProviderAction>(record_kind::action, session.session_id + "#")) {
            row.done = row.done || a.kind == ActionKind::mark_done;
        }
    }
    row.session_id = session.session_id;
    row.patient_id = session.patient_id;
    row.status = session.status;
    row.created = session.created;
    return row;
}

void Store::put_session_locked(const Session& session, WriteBatch& batch) const {
    if (session.session_id.empty()) {
        throw ValidationError("session_id must not be empty");
    }
    if (const auto violations = validate_session(session); !violations.empty()) {
        throw ValidationError(fmt::format("session {} is inconsistent: {}", session.session_id, violations.front()));
    }
    if (auto stored = get_record<Session>(record_kind::session, session.session_id)) {
        if (stored->is_terminal() && *stored != session) {
            throw ConflictError(fmt::format("session {} is {} and can no longer change", session.session_id,
                                            to_string(stored->status)));
        }
    }
    put_record(batch, record_kind::session, session.session_id, session);
    batch.index_upserts.push_back(row_for(session));
}

void Store::put_session(const Session& session) {
    std::unique_lock lock(mu_);
    WriteBatch batch;
    put_session_locked(session, batch);
    backend_->commit(batch);
}

std::optional<Session> Store::find_session(std::string_view id) const {
    std::shared_lock lock(mu_);
    return get_record<Session>(record_kind::session, id);
}

Session Store::get_session(std::string_view id) const {
    if (auto s = find_session(id)) {
        return *s;
    }
    throw NotFoundError(fmt::format("session {} not found", id));
}

// --- provider artifacts

int Store::put_summary(ClinicalSummary summary) {
    std::unique_lock lock(mu_);
    require_session(summary.session_id);
    summary.version = next_version(record_kind::summary, summary.session_id);
    WriteBatch batch;
    put_record(batch, record_kind::summary, artifact_id(summary.session_id, summary.version), summary);
    backend_->commit(batch);
    return summary.version;
}

int Store::put_highlights(HighlightReport report) {
    std::unique_lock lock(mu_);
    require_session(report.session_id);
    report.version = next_version(record_kind::highlights, report.session_id);
    for (auto& span : report.spans) {
        span.session_id = report.session_id;
    }
    WriteBatch batch;
    put_record(batch, record_kind::highlights, artifact_id(report.session_id, report.version), report);
    backend_->commit(batch);
    return report.version;
}

int Store::put_risk(RiskAssessment risk) {
    std::unique_lock lock(mu_);
    auto row = backend_->index_row(risk.session_id);
    if (!row) {
        throw NotFoundError(fmt::format("session {} not found", risk.session_id));
    }
    risk.version = next_version(record_kind::risk, risk.session_id);
    WriteBatch batch;
    put_record(batch, record_kind::risk, artifact_id(risk.session_id, risk.version), risk);
    row->risk = risk_bucket(risk);
    batch.index_upserts.push_back(*row);
    backend_->commit(batch);
    return risk.version;
}

std::optional<ClinicalSummary> Store::latest_summary(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return latest_artifact<ClinicalSummary>(record_kind::summary, session_id);
}

std::optional<HighlightReport> Store::latest_highlights(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return latest_artifact<HighlightReport>(record_kind::highlights, session_id);
}

std::optional<RiskAssessment> Store::latest_risk(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return latest_artifact<RiskAssessment>(record_kind::risk, session_id);
}

void Store::put_processing(const ProcessingRecord& record) {
    std::unique_lock lock(mu_);
    require_session(record.session_id);
    WriteBatch batch;
    put_record(batch, record_kind::processing, record.session_id, record);
    backend_->commit(batch);
}

std::optional<ProcessingRecord> Store::find_processing(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return get_record<ProcessingRecord>(record_kind::processing, session_id);
}

// --- provider actions

ProviderAction Store::append_action(ProviderAction action) {
    if (action.kind == ActionKind::mark_done) {
        return mark_done(action.session_id, std::move(action.author), action.timestamp);
    }
    std::unique_lock lock(mu_);
    require_session(action.session_id);
    if (action.action_id.empty()) {
        action.action_id = new_id("act");
    }
    WriteBatch batch;
    put_record(batch, record_kind::action,
               artifact_id(action.session_id, next_version(record_kind::action, action.session_id)), action);
    backend_->commit(batch);
    return action;
}

ProviderAction Store::mark_done(std::string_view session_id, std::string author, Timestamp at) {
    std::unique_lock lock(mu_);
    auto row = backend_->index_row(session_id);
    if (!row) {
        throw NotFoundError(fmt::format("session {} not found", session_id));
    }
    if (row->done) {
        throw ConflictError(fmt::format("session {} is already marked done", session_id));
    }
    ProviderAction action;
    action.action_id = new_id("act");
    action.session_id = std::string(session_id);
    action.author = std::move(author);
    action.kind = ActionKind::mark_done;
    action.timestamp = at;
    WriteBatch batch;
    put_record(batch, record_kind::action, artifact_id(session_id, next_version(record_kind::action, session_id)),
               action);
    row->done = true;
    batch.index_upserts.push_back(*row);
    backend_->commit(batch);
    return action;
}

std::vector<ProviderAction> Store::list_actions(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return scan_records<ProviderAction>(record_kind::action, std::string(session_id) + "#");
}

// --- queue

std::optional<SessionIndexRow> Store::index_row(std::string_view session_id) const {
    std::shared_lock lock(mu_);
    return backend_->index_row(session_id);
}

SessionPage Store::list_sessions(const SessionFilter& filter) const {
    if (filter.limit == 0) {
        throw ValidationError("limit must be positive");
    }
    std::vector<SessionIndexRow> rows;
    {
        std::shared_lock lock(mu_);
        rows = backend_->query(filter);
    }
    SessionPage page;
    page.total = rows.size();
    if (filter.offset < rows.size()) {
        const auto end = std::min(rows.size(), filter.offset + filter.limit);
        page.items.assign(rows.begin() + static_cast<std::ptrdiff_t>(filter.offset),
                          rows.begin() + static_cast<std::ptrdiff_t>(end));
        if (end < rows.size()) {
            page.next_offset = end;
        }
    }
    return page;
}

bool Store::purge_session(std::string_view session_id) {
    std::unique_lock lock(mu_);
    const bool known = backend_->index_row(session_id).has_value() ||
                       backend_->read(record_kind::session, session_id).has_value();
    if (!known) {
        return false;
    }
    WriteBatch batch;
    batch.deletes.push_back({std::string(record_kind::session), std::string(session_id)});
    batch.deletes.push_back({std::string(record_kind::processing), std::string(session_id)});
    for (auto kind : {record_kind::summary, record_kind::highlights, record_kind::risk, record_kind::action}) {
        for (const auto& rec : backend_->scan(kind, std::string(session_id) + "#")) {
            batch.deletes.push_back({rec.kind, rec.id});
        }
    }
    batch.index_deletes.emplace_back(session_id);
    backend_->commit(batch);
    return true;
}

// --- snapshots

std::size_t Store::export_snapshot(std::ostream& out) const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (auto kind : kExportOrder) {
        for (const auto& rec : backend_->scan(kind, "")) {
            json line = {{"kind", kind}, {"record", json::parse(cipher_.open(rec.blob, associated_data(kind, rec.id)))}};
            out << line.dump() << '\n';
            ++n;
        }
    }
    return n;
}

std::size_t Store::import_snapshot(std::istream& in) {
    std::string text;
    std::size_t line_no = 0;
    std::size_t n = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json line;
        try {
            line = json::parse(text);
        } catch (const json::exception& e) {
            throw ValidationError(fmt::format("snapshot line {}: {}", line_no, e.what()));
        }
        if (!line.is_object() || !line.contains("kind") || !line.contains("record") || !line["kind"].is_string()) {
            throw ValidationError(fmt::format("snapshot line {}: expected {{\"kind\", \"record\"}}", line_no));
        }
        const auto kind = line["kind"].get<std::string>();
        const auto& record = line["record"];

        std::unique_lock lock(mu_);
        WriteBatch batch;
        if (kind == record_kind::patient) {
            auto v = decode<PatientProfile>(record);
            validate_profile(v);
            put_record(batch, kind, v.patient_id, v);
        } else if (kind == record_kind::protocol) {
            auto v = decode<ConversationProtocol>(record);
            validate_protocol(v);
            put_record(batch, kind, v.protocol_id, v);
        } else if (kind == record_kind::session) {
            put_session_locked(decode<Session>(record), batch);
        } else if (kind == record_kind::summary) {
            auto v = decode<ClinicalSummary>(record);
            put_record(batch, kind, artifact_id(v.session_id, v.version), v);
        } else if (kind == record_kind::highlights) {
            auto v = decode<HighlightReport>(record);
            put_record(batch, kind, artifact_id(v.session_id, v.version), v);
        } else if (kind == record_kind::risk) {
            auto v = decode<RiskAssessment>(record);
            put_record(batch, kind, artifact_id(v.session_id, v.version), v);
            if (auto row = backend_->index_row(v.session_id); row && v.version >= next_version(kind, v.session_id) - 1) {
                row->risk = risk_bucket(v);
                batch.index_upserts.push_back(*row);
            }
        } else if (kind == record_kind::action) {
            auto v = decode<ProviderAction>(record);
            bool seen = false;
            for (const auto& a : scan_records<ProviderAction>(kind, v.session_id + "#")) {
                seen = seen || a.action_id == v.action_id;
            }
            if (!seen) {
                put_record(batch, kind, artifact_id(v.session_id, next_version(kind, v.session_id)), v);
                if (auto row = backend_->index_row(v.session_id); row && v.kind == ActionKind::mark_done) {
                    row->done = true;
                    batch.index_upserts.push_back(*row);
                }
            }
        } else if (kind == record_kind::processing) {
            auto v = decode<ProcessingRecord>(record);
            put_record(batch, kind, v.session_id, v);
        } else {
            throw ValidationError(fmt::format("snapshot line {}: unknown record kind '{}'", line_no, kind));
        }
        backend_->commit(batch);
        ++n;
    }
    return n;
}

}  // namespace carelink
