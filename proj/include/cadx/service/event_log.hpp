#pragma once

// Append-only session event log, one JSON object per line:
//   {"session_id": "...", "seq": 1, "kind": "opened", "ts": 1700000000000, "payload": {...}}

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/arbitration.hpp"
#include "cadx/error.hpp"

namespace cadx::service {

using arbitration::ReviewSession;
using arbitration::SessionEvent;

/// Reads every event; a line that does not parse as an event (for example
/// a partially written last line) fails with CorruptLogLine and its number.
inline std::vector<SessionEvent> read_events(std::istream& in) {
    std::vector<SessionEvent> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<SessionEvent>());
        } catch (const std::exception& e) {
            fail(ErrorCode::CorruptLogLine, "event log line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return out;
}

inline std::vector<SessionEvent> read_events(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::FileNotFound, "cannot open event log " + path.string());
    return read_events(in);
}

/// Folds events into sessions. Can be fed in batches of any size; the
/// result only depends on the concatenated event order.
class SessionReplayer {
public:
    void feed(std::span<const SessionEvent> events) {
        for (const auto& e : events) {
            auto it = sessions_.find(e.session_id);
            if (it == sessions_.end()) {
                if (e.seq != 1) {
                    fail(ErrorCode::SequenceGap, "session " + e.session_id + " starts at seq " + std::to_string(e.seq));
                }
                it = sessions_.emplace(e.session_id, ReviewSession{}).first;
                order_.push_back(e.session_id);
            }
            it->second.apply(e);
        }
    }

    [[nodiscard]] const std::map<std::string, ReviewSession>& sessions() const { return sessions_; }
    [[nodiscard]] std::map<std::string, ReviewSession> take() { return std::move(sessions_); }
    /// Session ids in order of first appearance.
    [[nodiscard]] const std::vector<std::string>& order() const { return order_; }

private:
    std::map<std::string, ReviewSession> sessions_;
    std::vector<std::string> order_;
};

inline std::map<std::string, ReviewSession> load_sessions(std::span<const SessionEvent> events) {
    SessionReplayer r;
    r.feed(events);
    return r.take();
}

inline std::map<std::string, ReviewSession> load_sessions(const std::filesystem::path& path) {
    const auto events = read_events(path);
    return load_sessions(events);
}

/// Single appender. Each event is written as one line and flushed before
/// append returns; sequence numbers must continue each session's history.
class EventLog {
public:
    EventLog() = default;

    /// Opens (creating if needed) and scans the existing content so that
    /// sequence checks continue from it.
    explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
        if (std::filesystem::exists(path_)) {
            for (const auto& e : read_events(path_)) last_seq_[e.session_id] = e.seq;
        }
        out_.open(path_, std::ios::app | std::ios::binary);
        if (!out_) fail(ErrorCode::IoError, "cannot open event log " + path_.string() + " for appending");
    }

    void append(const SessionEvent& e) {
        std::lock_guard lock(mu_);
        const auto expected = last_seq_[e.session_id] + 1;
        if (e.seq != expected) {
            fail(ErrorCode::SequenceGap, "session " + e.session_id + ": expected seq " + std::to_string(expected) + ", got " +
                                             std::to_string(e.seq));
        }
        const auto line = nlohmann::json(e).dump() + "\n";
        if (out_.is_open()) {
            out_.write(line.data(), static_cast<std::streamsize>(line.size()));
            out_.flush();
            if (!out_) fail(ErrorCode::IoError, "write to event log failed");
        }
        memory_.push_back(e);
        last_seq_[e.session_id] = e.seq;
    }

    /// Appends the session's events that this log has not seen yet.
    void sync(const ReviewSession& s) {
        const auto& h = s.history();
        std::uint64_t have = 0;
        {
            std::lock_guard lock(mu_);
            auto it = last_seq_.find(s.session_id());
            have = it == last_seq_.end() ? 0 : it->second;
        }
        for (std::size_t i = have; i < h.size(); ++i) append(h[i]);
    }

    /// Events appended through this object (not those found on open).
    [[nodiscard]] const std::vector<SessionEvent>& appended() const { return memory_; }
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
    std::map<std::string, std::uint64_t> last_seq_;
    std::vector<SessionEvent> memory_;
};

}  // namespace cadx::service
