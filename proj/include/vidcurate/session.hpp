#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotrain.hpp"
#include "error.hpp"

namespace vidcurate {

// Event-sourced review session: a snapshot of every dimension's CoTrainState plus an
// append-only log of the mutations applied since. Writes for one dimension are
// serialized; readers get immutable shared snapshots and never wait on retraining.

struct SessionEvent {
    enum class Type { label, advance };
    std::uint64_t seq = 0;
    Type type = Type::label;
    Dimension dimension = Dimension::med;
    // label events
    std::string video_id;
    Binary label = Binary::low;
    std::string resolver;
    std::uint64_t revision = 0;
    // advance events: the round produced
    int round = 0;
};

inline nlohmann::json to_json(const SessionEvent& e) {
    nlohmann::json j{{"seq", e.seq}, {"dimension", to_string(e.dimension)}};
    if (e.type == SessionEvent::Type::label) {
        j["type"] = "label";
        j["video_id"] = e.video_id;
        j["label"] = to_string(e.label);
        j["resolver"] = e.resolver;
        j["revision"] = e.revision;
    } else {
        j["type"] = "advance";
        j["round"] = e.round;
    }
    return j;
}

inline SessionEvent session_event_from_json(const nlohmann::json& j) {
    SessionEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.dimension = parse_dimension(j.at("dimension").get<std::string>());
    const auto type = j.at("type").get<std::string>();
    if (type == "label") {
        e.type = SessionEvent::Type::label;
        e.video_id = j.at("video_id").get<std::string>();
        e.label = parse_binary(j.at("label").get<std::string>());
        e.resolver = j.at("resolver").get<std::string>();
        e.revision = j.at("revision").get<std::uint64_t>();
    } else if (type == "advance") {
        e.type = SessionEvent::Type::advance;
        e.round = j.at("round").get<int>();
    } else {
        throw DataError("unknown event type '" + type + "'");
    }
    return e;
}

/// One select_pools + commit_round cycle, as the offline driver performs it.
inline RoundReport advance_round(CoTrainState& s) {
    if (s.pending_count() > 0) throw StateError("pending review items");
    if (!s.unlabeled.empty()) select_pools(s);
    return commit_round(s);
}

struct LabelSubmission {
    std::string video_id;
    Dimension dimension = Dimension::med;
    Binary label = Binary::low;
    std::string resolver;
    std::uint64_t revision = 0;
};

struct SubmitResult {
    enum class Status { applied, duplicate, conflict, not_found };
    Status status = Status::applied;
    std::string message;
    std::uint64_t revision = 0;  // item revision after the call
};

/// Raised by advance when the dimension still has pending review items.
class PendingItemsError : public StateError {
public:
    explicit PendingItemsError(std::vector<std::string> ids)
        : StateError("pending review items: " + join(ids)), pending(std::move(ids)) {}
    std::vector<std::string> pending;

private:
    static std::string join(const std::vector<std::string>& ids) {
        std::string s;
        for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
        return s;
    }
};

class SessionStore {
public:
    static constexpr const char* kSnapshotFile = "snapshot.json";
    static constexpr const char* kEventFile = "events.jsonl";

    /// Opens `dir`. With a snapshot present, the snapshot plus the event log are replayed
    /// and `initial` is ignored; otherwise `initial` becomes the seq-0 snapshot.
    explicit SessionStore(std::filesystem::path dir, std::map<Dimension, CoTrainState> initial = {})
        : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        std::map<Dimension, CoTrainState> states;
        if (std::filesystem::exists(snapshot_path())) {
            states = read_snapshot(last_seq_);
            replay(states);
        } else {
            if (initial.empty()) throw DataError("no session snapshot in " + dir_.string() + " and no initial state");
            for (auto& [d, s] : initial)
                if (s.config.target != d) throw DataError("initial state keyed by the wrong dimension");
            states = std::move(initial);
            write_snapshot(states, 0);
            std::ofstream(event_path(), std::ios::trunc);
        }
        for (auto& [d, s] : states) {
            auto& slot = slots_[d];
            slot = std::make_unique<Slot>();
            slot->current = std::make_shared<const CoTrainState>(std::move(s));
        }
        log_.open(event_path(), std::ios::app | std::ios::binary);
        if (!log_) throw DataError("cannot open event log " + event_path().string());
    }

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    std::vector<Dimension> dimensions() const {
        std::vector<Dimension> out;
        for (const auto& [d, _] : slots_) out.push_back(d);
        return out;
    }

    bool has(Dimension d) const { return slots_.contains(d); }

    std::shared_ptr<const CoTrainState> state(Dimension d) const {
        const auto& slot = this->slot(d);
        std::lock_guard lock(slot.publish);
        return slot.current;
    }

    /// Optimistic-concurrency label submission; see SubmitResult for outcomes.
    SubmitResult submit(const LabelSubmission& sub) {
        if (sub.resolver.empty()) throw UsageError("resolver name required");
        auto& slot = this->slot(sub.dimension);
        std::lock_guard writer(slot.writer);
        const auto cur = state(sub.dimension);
        const ReviewItem* item = cur->find_review(sub.video_id);
        if (!item) return {SubmitResult::Status::not_found, "no review item for " + sub.video_id, 0};
        if (item->status == ReviewStatus::resolved) {
            if (item->resolved_label == sub.label) return {SubmitResult::Status::duplicate, "already applied", item->revision};
            return {SubmitResult::Status::conflict, "item already resolved with a different label", item->revision};
        }
        if (item->revision != sub.revision)
            return {SubmitResult::Status::conflict,
                    "stale revision " + std::to_string(sub.revision) + " (current " + std::to_string(item->revision) + ")",
                    item->revision};
        auto next = std::make_shared<CoTrainState>(*cur);
        resolve_review(*next, sub.video_id, sub.label, sub.resolver);
        SessionEvent e;
        e.type = SessionEvent::Type::label;
        e.dimension = sub.dimension;
        e.video_id = sub.video_id;
        e.label = sub.label;
        e.resolver = sub.resolver;
        e.revision = sub.revision;
        append(e);
        const auto rev = next->find_review(sub.video_id)->revision;
        publish(slot, std::move(next));
        return {SubmitResult::Status::applied, "applied", rev};
    }

    /// Runs one round for `d`; throws PendingItemsError while review items are pending.
    RoundReport advance(Dimension d) {
        auto& slot = this->slot(d);
        std::lock_guard writer(slot.writer);
        const auto cur = state(d);
        if (cur->pending_count() > 0) throw PendingItemsError(pending_ids(*cur));
        auto next = std::make_shared<CoTrainState>(*cur);
        auto report = advance_round(*next);
        SessionEvent e;
        e.type = SessionEvent::Type::advance;
        e.dimension = d;
        e.round = report.round;
        append(e);
        publish(slot, std::move(next));
        return report;
    }

    /// Writes a snapshot covering every event appended so far.
    void snapshot() {
        std::vector<std::unique_lock<std::mutex>> writers;
        for (auto& [d, slot] : slots_) writers.emplace_back(slot->writer);
        std::map<Dimension, CoTrainState> states;
        for (const auto& [d, slot] : slots_) states.emplace(d, *state(d));
        std::lock_guard lock(log_mutex_);
        write_snapshot(states, last_seq_);
    }

    std::uint64_t last_seq() const {
        std::lock_guard lock(log_mutex_);
        return last_seq_;
    }

    /// Events currently in the log (those after the latest snapshot and possibly older ones).
    std::vector<SessionEvent> events() const {
        std::lock_guard lock(log_mutex_);
        return read_events(event_path());
    }

    const std::filesystem::path& directory() const { return dir_; }

    static std::vector<std::string> pending_ids(const CoTrainState& s) {
        std::vector<std::string> ids;
        for (const auto& r : s.review_queue)
            if (r.status == ReviewStatus::pending) ids.push_back(r.video_id);
        return ids;
    }

private:
    struct Slot {
        std::mutex writer;
        mutable std::mutex publish;
        std::shared_ptr<const CoTrainState> current;
    };

    Slot& slot(Dimension d) const {
        auto it = slots_.find(d);
        if (it == slots_.end()) throw DataError(std::string("dimension ") + to_string(d) + " is not served");
        return *it->second;
    }

    static void publish(Slot& slot, std::shared_ptr<CoTrainState> next) {
        std::lock_guard lock(slot.publish);
        slot.current = std::move(next);
    }

    std::filesystem::path snapshot_path() const { return dir_ / kSnapshotFile; }
    std::filesystem::path event_path() const { return dir_ / kEventFile; }

    void append(SessionEvent& e) {
        std::lock_guard lock(log_mutex_);
        e.seq = last_seq_ + 1;
        const auto line = to_json(e).dump() + "\n";
        log_.write(line.data(), static_cast<std::streamsize>(line.size()));
        log_.flush();
        if (!log_) throw DataError("event log write failed");
        last_seq_ = e.seq;
    }

    void write_snapshot(const std::map<Dimension, CoTrainState>& states, std::uint64_t seq) const {
        nlohmann::json j{{"format", "vidcurate-session"}, {"version", 1}, {"seq", seq}};
        j["states"] = nlohmann::json::object();
        for (const auto& [d, s] : states) j["states"][to_string(d)] = to_json(s);
        const auto tmp = snapshot_path().string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataError("cannot write snapshot " + tmp);
            out << j.dump() << '\n';
        }
        std::filesystem::rename(tmp, snapshot_path());
    }

    std::map<Dimension, CoTrainState> read_snapshot(std::uint64_t& seq) const {
        std::ifstream in(snapshot_path());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corrupt session snapshot: " + std::string(e.what()));
        }
        if (j.value("format", "") != "vidcurate-session" || j.value("version", 0) != 1)
            throw DataError("session snapshot has an unknown format");
        seq = j.at("seq").get<std::uint64_t>();
        std::map<Dimension, CoTrainState> states;
        for (const auto& [key, value] : j.at("states").items()) states.emplace(parse_dimension(key), cotrain_state_from_json(value));
        return states;
    }

    static std::vector<SessionEvent> read_events(const std::filesystem::path& path) {
        std::vector<SessionEvent> out;
        std::ifstream in(path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                out.push_back(session_event_from_json(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                throw DataError("corrupt event log line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        return out;
    }

    /// Re-applies logged events newer than the snapshot; any divergence is corruption.
    void replay(std::map<Dimension, CoTrainState>& states) {
        for (const auto& e : read_events(event_path())) {
            if (e.seq <= last_seq_) continue;
            if (e.seq != last_seq_ + 1) throw DataError("event log gap before seq " + std::to_string(e.seq));
            auto it = states.find(e.dimension);
            if (it == states.end()) throw DataError("event for a dimension missing from the snapshot");
            auto& s = it->second;
            if (e.type == SessionEvent::Type::label) {
                const ReviewItem* item = s.find_review(e.video_id);
                if (!item || item->status != ReviewStatus::pending || item->revision != e.revision)
                    throw DataError("event " + std::to_string(e.seq) + " does not apply to the replayed state");
                resolve_review(s, e.video_id, e.label, e.resolver);
            } else {
                const auto report = advance_round(s);
                if (report.round != e.round) throw DataError("replayed round number diverges at seq " + std::to_string(e.seq));
            }
            last_seq_ = e.seq;
        }
    }

    std::filesystem::path dir_;
    std::map<Dimension, std::unique_ptr<Slot>> slots_;
    mutable std::mutex log_mutex_;
    std::ofstream log_;
    std::uint64_t last_seq_ = 0;
};

}  // namespace vidcurate
