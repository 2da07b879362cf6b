#include "carelink/store.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace carelink {

struct MemoryBackend::State {
    mutable std::mutex mu;
    std::map<std::pair<std::string, std::string>, Bytes> records;
    std::map<std::string, SessionIndexRow> index;
};

MemoryBackend::MemoryBackend() : state_(std::make_unique<State>()) {}
MemoryBackend::~MemoryBackend() = default;

void MemoryBackend::commit(const WriteBatch& batch) {
    std::lock_guard lock(state_->mu);
    for (const auto& rec : batch.puts) {
        state_->records[{rec.kind, rec.id}] = rec.blob;
    }
    for (const auto& key : batch.deletes) {
        state_->records.erase({key.kind, key.id});
    }
    for (const auto& row : batch.index_upserts) {
        state_->index[row.session_id] = row;
    }
    for (const auto& sid : batch.index_deletes) {
        state_->index.erase(sid);
    }
}

std::optional<Bytes> MemoryBackend::read(std::string_view kind, std::string_view id) const {
    std::lock_guard lock(state_->mu);
    auto it = state_->records.find({std::string(kind), std::string(id)});
    if (it == state_->records.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<StoredRecord> MemoryBackend::scan(std::string_view kind, std::string_view id_prefix) const {
    std::lock_guard lock(state_->mu);
    std::vector<StoredRecord> out;
    for (auto it = state_->records.lower_bound({std::string(kind), std::string(id_prefix)});
         it != state_->records.end() && it->first.first == kind && it->first.second.starts_with(id_prefix); ++it) {
        out.push_back({it->first.first, it->first.second, it->second});
    }
    return out;
}

std::optional<SessionIndexRow> MemoryBackend::index_row(std::string_view session_id) const {
    std::lock_guard lock(state_->mu);
    auto it = state_->index.find(std::string(session_id));
    if (it == state_->index.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<SessionIndexRow> MemoryBackend::query(const SessionFilter& filter) const {
    std::vector<SessionIndexRow> out;
    {
        std::lock_guard lock(state_->mu);
        for (const auto& [sid, row] : state_->index) {
            if ((filter.patient_id && row.patient_id != *filter.patient_id) ||
                (filter.status && row.status != *filter.status) || (filter.risk && row.risk != *filter.risk) ||
                (filter.done && row.done != *filter.done)) {
                continue;
            }
            out.push_back(row);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const SessionIndexRow& a, const SessionIndexRow& b) {
        if (a.risk != b.risk) {
            return a.risk > b.risk;
        }
        if (a.created != b.created) {
            return a.created > b.created;
        }
        return a.session_id < b.session_id;
    });
    return out;
}

}  // namespace carelink
