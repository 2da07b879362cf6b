#pragma once
// Encrypted-at-rest record store. Every record is a JSON document sealed with
// XChaCha20-Poly1305; only the session index (ids, status, timestamps, risk
// rank) is kept in the clear so the provider queue can be filtered and sorted.

#include "carelink/domain.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace carelink {

using Bytes = std::vector<std::uint8_t>;

class Cipher {
public:
    static constexpr std::size_t key_size = 32;
    using Key = std::array<std::uint8_t, key_size>;

    explicit Cipher(const Key& key);

    // 64 hex characters are used as the raw key; anything else is hashed.
    static Cipher from_secret(std::string_view secret);
    static Cipher random();

    // nonce || ciphertext || tag. The associated data binds the blob to its slot.
    Bytes seal(std::string_view plaintext, std::string_view associated) const;
    // StorageError when the blob was tampered with, moved or sealed under another key.
    std::string open(const Bytes& blob, std::string_view associated) const;

private:
    Key key_;
};

// Queue bucket, ordered by urgency.
enum class RiskBucket { unassessed = 0, low = 1, moderate = 2, needs_review = 3, high = 4 };

std::string_view to_string(RiskBucket b) noexcept;
// "low", "moderate", "high", "review", "none". ValidationError otherwise.
RiskBucket parse_risk_bucket(std::string_view s);
RiskBucket risk_bucket(const RiskAssessment& risk) noexcept;

struct SessionIndexRow {
    std::string session_id;
    std::string patient_id;
    SessionStatus status = SessionStatus::active;
    Timestamp created;
    RiskBucket risk = RiskBucket::unassessed;
    bool done = false;

    bool operator==(const SessionIndexRow&) const = default;
};

struct SessionFilter {
    std::optional<std::string> patient_id;
    std::optional<SessionStatus> status;
    std::optional<RiskBucket> risk;
    std::optional<bool> done;
    std::size_t offset = 0;
    std::size_t limit = 50;
};

struct SessionPage {
    std::vector<SessionIndexRow> items;
    std::size_t total = 0;
    std::optional<std::size_t> next_offset;
};

struct StoredRecord {
    std::string kind;
    std::string id;
    Bytes blob;
};

struct RecordKey {
    std::string kind;
    std::string id;
};

// Everything in one batch is applied atomically.
struct WriteBatch {
    std::vector<StoredRecord> puts;
    std::vector<RecordKey> deletes;
    std::vector<SessionIndexRow> index_upserts;
    std::vector<std::string> index_deletes;
};

class StorageBackend {
public:
    virtual ~StorageBackend() = default;

    virtual void commit(const WriteBatch& batch) = 0;
    virtual std::optional<Bytes> read(std::string_view kind, std::string_view id) const = 0;
    // Records of one kind whose id starts with prefix, ordered by id.
    virtual std::vector<StoredRecord> scan(std::string_view kind, std::string_view id_prefix = {}) const = 0;
    virtual std::optional<SessionIndexRow> index_row(std::string_view session_id) const = 0;
    // Matching rows ordered by risk desc, created desc, session id.
    virtual std::vector<SessionIndexRow> query(const SessionFilter& filter) const = 0;
};

// Single-file SQLite database (WAL journal, synchronous=FULL).
class SqliteBackend final : public StorageBackend {
public:
    explicit SqliteBackend(const std::filesystem::path& db_file);
    ~SqliteBackend() override;
    SqliteBackend(const SqliteBackend&) = delete;
    SqliteBackend& operator=(const SqliteBackend&) = delete;

    void commit(const WriteBatch& batch) override;
    std::optional<Bytes> read(std::string_view kind, std::string_view id) const override;
    std::vector<StoredRecord> scan(std::string_view kind, std::string_view id_prefix) const override;
    std::optional<SessionIndexRow> index_row(std::string_view session_id) const override;
    std::vector<SessionIndexRow> query(const SessionFilter& filter) const override;

private:
    struct Db;
    std::unique_ptr<Db> db_;
};

class MemoryBackend final : public StorageBackend {
public:
    MemoryBackend();
    ~MemoryBackend() override;

    void commit(const WriteBatch& batch) override;
    std::optional<Bytes> read(std::string_view kind, std::string_view id) const override;
    std::vector<StoredRecord> scan(std::string_view kind, std::string_view id_prefix) const override;
    std::optional<SessionIndexRow> index_row(std::string_view session_id) const override;
    std::vector<SessionIndexRow> query(const SessionFilter& filter) const override;

private:
    struct State;
    std::unique_ptr<State> state_;
};

namespace record_kind {
inline constexpr std::string_view patient = "patient";
inline constexpr std::string_view protocol = "protocol";
inline constexpr std::string_view session = "session";
inline constexpr std::string_view summary = "summary";
inline constexpr std::string_view highlights = "highlights";
inline constexpr std::string_view risk = "risk";
inline constexpr std::string_view action = "action";
inline constexpr std::string_view processing = "processing";
}  // namespace record_kind

// Typed facade. Many concurrent readers, one writer at a time.
class Store {
public:
    Store(std::unique_ptr<StorageBackend> backend, Cipher cipher);

    // <dir>/carelink.db, created when missing.
    static std::unique_ptr<Store> open(const std::filesystem::path& dir, std::string_view secret);
    // Reads STORE_PATH and STORE_KEY. ConfigurationError when either is unset.
    static std::unique_ptr<Store> open_from_env();
    static std::unique_ptr<Store> in_memory();

    static inline const std::string db_file_name = "carelink.db";

    // "<prefix>_<16 hex>" from a CSPRNG.
    std::string new_id(std::string_view prefix) const;

    // Patients and protocols: an empty id gets a fresh one. Returns the stored record.
    PatientProfile put_patient(PatientProfile profile);
    PatientProfile get_patient(std::string_view id) const;
    std::optional<PatientProfile> find_patient(std::string_view id) const;
    std::vector<PatientProfile> list_patients() const;

    ConversationProtocol put_protocol(ConversationProtocol protocol);
    ConversationProtocol get_protocol(std::string_view id) const;
    std::optional<ConversationProtocol> find_protocol(std::string_view id) const;
    std::vector<ConversationProtocol> list_protocols() const;

    // ConflictError when the stored copy is terminal and differs.
    void put_session(const Session& session);
    Session get_session(std::string_view id) const;
    std::optional<Session> find_session(std::string_view id) const;

    // Artifacts are versioned; put assigns version = latest + 1 and returns it.
    int put_summary(ClinicalSummary summary);
    int put_highlights(HighlightReport report);
    int put_risk(RiskAssessment risk);
    std::optional<ClinicalSummary> latest_summary(std::string_view session_id) const;
    std::optional<HighlightReport> latest_highlights(std::string_view session_id) const;
    std::optional<RiskAssessment> latest_risk(std::string_view session_id) const;

    void put_processing(const ProcessingRecord& record);
    std::optional<ProcessingRecord> find_processing(std::string_view session_id) const;

    // Fills action_id when empty. A mark_done action goes through mark_done.
    ProviderAction append_action(ProviderAction action);
    std::vector<ProviderAction> list_actions(std::string_view session_id) const;
    // ConflictError on the second call for the same session.
    ProviderAction mark_done(std::string_view session_id, std::string author, Timestamp at);

    std::optional<SessionIndexRow> index_row(std::string_view session_id) const;
    SessionPage list_sessions(const SessionFilter& filter) const;

    // Removes a session and everything attached to it. Returns false when unknown.
    bool purge_session(std::string_view session_id);

    // JSON lines, one {"kind": ..., "record": ...} per record, deterministic order.
    std::size_t export_snapshot(std::ostream& out) const;
    // Upserts every record. Artifact versions are kept as written.
    std::size_t import_snapshot(std::istream& in);

private:
    template <typename T>
    void put_record(WriteBatch& batch, std::string_view kind, const std::string& id, const T& value) const;
    template <typename T>
    std::optional<T> get_record(std::string_view kind, std::string_view id) const;
    template <typename T>
    std::vector<T> scan_records(std::string_view kind, std::string_view prefix) const;
    template <typename T>
    std::optional<T> latest_artifact(std::string_view kind, std::string_view session_id) const;
    int next_version(std::string_view kind, std::string_view session_id) const;
    SessionIndexRow row_for(const Session& session) const;
    void require_session(std::string_view session_id) const;
    void put_session_locked(const Session& session, WriteBatch& batch) const;

    std::unique_ptr<StorageBackend> backend_;
    Cipher cipher_;
    mutable std::shared_mutex mu_;
};

// "sid#000003"
std::string artifact_id(std::string_view session_id, int seq);

}  // namespace carelink
