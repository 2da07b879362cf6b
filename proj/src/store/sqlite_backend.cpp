#include "carelink/error.hpp"
#include "carelink/store.hpp"

#include <sqlite3.h>

#include <fmt/format.h>

namespace carelink {

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS records (
  kind TEXT NOT NULL,
  id   TEXT NOT NULL,
  blob BLOB NOT NULL,
  PRIMARY KEY (kind, id)
) WITHOUT ROWID;
CREATE TABLE IF NOT EXISTS session_index (
  session_id TEXT PRIMARY KEY,
  patient_id TEXT NOT NULL,
  status     TEXT NOT NULL,
  created_ms INTEGER NOT NULL,
  risk_rank  INTEGER NOT NULL DEFAULT 0,
  done       INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS session_index_queue ON session_index (risk_rank DESC, created_ms DESC);
)sql";

class Statement {
public:
    Statement(sqlite3* db, std::string_view sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr) != SQLITE_OK) {
            throw StorageError(fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    void bind(int i, std::string_view s) {
        check(sqlite3_bind_text(stmt_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT));
    }
    void bind(int i, std::int64_t v) { check(sqlite3_bind_int64(stmt_, i, v)); }
    void bind(int i, const Bytes& b) {
        check(sqlite3_bind_blob(stmt_, i, b.data(), static_cast<int>(b.size()), SQLITE_TRANSIENT));
    }

    // True while rows remain.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) {
            return true;
        }
        if (rc == SQLITE_DONE) {
            return false;
        }
        throw StorageError(fmt::format("sqlite step failed: {}", sqlite3_errmsg(db_)));
    }

    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    Bytes blob(int col) const {
        const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
        const auto n = static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col));
        return p ? Bytes(p, p + n) : Bytes();
    }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) {
            throw StorageError(fmt::format("sqlite bind failed: {}", sqlite3_errmsg(db_)));
        }
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw StorageError(fmt::format("sqlite: {}", msg));
    }
}

SessionIndexRow read_row(const Statement& st) {
    SessionIndexRow row;
    row.session_id = st.text(0);
    row.patient_id = st.text(1);
    row.status = parse_session_status(st.text(2));
    row.created = Timestamp::from_millis(st.integer(3));
    row.risk = static_cast<RiskBucket>(st.integer(4));
    row.done = st.integer(5) != 0;
    return row;
}

constexpr std::string_view kRowColumns = "session_id, patient_id, status, created_ms, risk_rank, done";

}  // namespace

struct SqliteBackend::Db {
    sqlite3* handle = nullptr;
};

SqliteBackend::SqliteBackend(const std::filesystem::path& db_file) : db_(std::make_unique<Db>()) {
    const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(db_file.c_str(), &db_->handle, flags, nullptr) != SQLITE_OK) {
        std::string msg = db_->handle ? sqlite3_errmsg(db_->handle) : "out of memory";
        sqlite3_close(db_->handle);
        throw StorageError(fmt::format("cannot open store {}: {}", db_file.string(), msg));
    }
    sqlite3_busy_timeout(db_->handle, 5000);
    try {
        exec(db_->handle, "PRAGMA journal_mode=WAL;");
        exec(db_->handle, "PRAGMA synchronous=FULL;");
        exec(db_->handle, kSchema);
    } catch (...) {
        sqlite3_close(db_->handle);
        throw;
    }
}

SqliteBackend::~SqliteBackend() {
    if (db_ && db_->handle) {
        sqlite3_close(db_->handle);
    }
}

void SqliteBackend::commit(const WriteBatch& batch) {
    sqlite3* db = db_->handle;
    exec(db, "BEGIN IMMEDIATE;");
    try {
        for (const auto& rec : batch.puts) {
            Statement st(db, "INSERT OR REPLACE INTO records (kind, id, blob) VALUES (?1, ?2, ?3)");
            st.bind(1, rec.kind);
            st.bind(2, rec.id);
            st.bind(3, rec.blob);
            st.step();
        }
        for (const auto& key : batch.deletes) {
            Statement st(db, "DELETE FROM records WHERE kind = ?1 AND id = ?2");
            st.bind(1, key.kind);
            st.bind(2, key.id);
            st.step();
        }
        for (const auto& row : batch.index_upserts) {
            Statement st(db,
                         "INSERT OR REPLACE INTO session_index (session_id, patient_id, status, created_ms, "
                         "risk_rank, done) VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
            st.bind(1, row.session_id);
            st.bind(2, row.patient_id);
            st.bind(3, to_string(row.status));
            st.bind(4, row.created.millis());
            st.bind(5, static_cast<std::int64_t>(row.risk));
            st.bind(6, static_cast<std::int64_t>(row.done ? 1 : 0));
            st.step();
        }
        for (const auto& sid : batch.index_deletes) {
            Statement st(db, "DELETE FROM session_index WHERE session_id = ?1");
            st.bind(1, sid);
            st.step();
        }
        exec(db, "COMMIT;");
    } catch (...) {
        sqlite3_exec(db, "ROLLBACK;", nullptr, nullptr, nullptr);
        throw;
    }
}

std::optional<Bytes> SqliteBackend::read(std::string_view kind, std::string_view id) const {
    Statement st(db_->handle, "SELECT blob FROM records WHERE kind = ?1 AND id = ?2");
    st.bind(1, kind);
    st.bind(2, id);
    if (!st.step()) {
        return std::nullopt;
    }
    return st.blob(0);
}

std::vector<StoredRecord> SqliteBackend::scan(std::string_view kind, std::string_view id_prefix) const {
    Statement st(db_->handle,
                 "SELECT id, blob FROM records WHERE kind = ?1 AND substr(id, 1, length(?2)) = ?2 ORDER BY id");
    st.bind(1, kind);
    st.bind(2, id_prefix);
    std::vector<StoredRecord> out;
    while (st.step()) {
        out.push_back({std::string(kind), st.text(0), st.blob(1)});
    }
    return out;
}

std::optional<SessionIndexRow> SqliteBackend::index_row(std::string_view session_id) const {
    Statement st(db_->handle, fmt::format("SELECT {} FROM session_index WHERE session_id = ?1", kRowColumns));
    st.bind(1, session_id);
    if (!st.step()) {
        return std::nullopt;
    }
    return read_row(st);
}

std::vector<SessionIndexRow> SqliteBackend::query(const SessionFilter& filter) const {
    std::string sql = fmt::format("SELECT {} FROM session_index WHERE 1 = 1", kRowColumns);
    if (filter.patient_id) {
        sql += " AND patient_id = ?1";
    }
    if (filter.status) {
        sql += " AND status = ?2";
    }
    if (filter.risk) {
        sql += " AND risk_rank = ?3";
    }
    if (filter.done) {
        sql += " AND done = ?4";
    }
    sql += " ORDER BY risk_rank DESC, created_ms DESC, session_id ASC";
    Statement st(db_->handle, sql);
    if (filter.patient_id) {
        st.bind(1, *filter.patient_id);
    }
    if (filter.status) {
        st.bind(2, to_string(*filter.status));
    }
    if (filter.risk) {
        st.bind(3, static_cast<std::int64_t>(*filter.risk));
    }
    if (filter.done) {
        st.bind(4, static_cast<std::int64_t>(*filter.done ? 1 : 0));
    }
    std::vector<SessionIndexRow> out;
    while (st.step()) {
        out.push_back(read_row(st));
    }
    return out;
}

}  // namespace carelink
