#pragma once

// Review sessions. The physician commits a judgment before the model's
// assessment becomes readable. Agreement finalizes at once; a discrepancy
// opens interrogation, and the physician may finalize (keeping or revising
// the initial call) only after at least one query.
//
// A session is a fold over its events: every mutation is expressed as an
// event and applied with ReviewSession::apply, so replaying a log rebuilds
// the exact same value.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"
#include "cadx/explain/answer.hpp"
#include "cadx/explain/query.hpp"
#include "cadx/features.hpp"
#include "cadx/ingest.hpp"
#include "cadx/risk/assess.hpp"

namespace cadx::arbitration {

enum class SessionState { AwaitingInitial, Interrogation, Finalized };

constexpr std::string_view to_string(SessionState s) {
    switch (s) {
        case SessionState::AwaitingInitial: return "AwaitingInitial";
        case SessionState::Interrogation: return "Interrogation";
        case SessionState::Finalized: return "Finalized";
    }
    return "AwaitingInitial";
}

struct Author {
    enum class Kind { physician, model };
    Kind kind = Kind::physician;
    /// Physician id or model version.
    std::string id;

    static Author physician(std::string id) { return {Kind::physician, std::move(id)}; }
    static Author model(std::string version) { return {Kind::model, std::move(version)}; }
    bool operator==(const Author&) const = default;
};

struct Judgment {
    Label label = Label::benign;
    Author author;
    std::int64_t timestamp = 0;  // ms since epoch
    bool operator==(const Judgment&) const = default;
};

inline void to_json(nlohmann::json& j, const Judgment& v) {
    j = {{"label", v.label},
         {"author", {{"kind", v.author.kind == Author::Kind::model ? "model" : "physician"}, {"id", v.author.id}}},
         {"timestamp", v.timestamp}};
}

inline void from_json(const nlohmann::json& j, Judgment& v) {
    v.label = j.at("label").get<Label>();
    const auto& a = j.at("author");
    const auto kind = a.at("kind").get<std::string>();
    if (kind != "model" && kind != "physician") fail(ErrorCode::InvalidArgument, "unknown author kind '" + kind + "'");
    v.author = {kind == "model" ? Author::Kind::model : Author::Kind::physician, a.at("id").get<std::string>()};
    v.timestamp = j.at("timestamp").get<std::int64_t>();
}

struct Turn {
    std::string query;
    explain::Response response;
    std::int64_t timestamp = 0;
    bool operator==(const Turn&) const = default;
};

inline void to_json(nlohmann::json& j, const Turn& t) {
    j = {{"query", t.query}, {"response", t.response}, {"timestamp", t.timestamp}};
}

inline void from_json(const nlohmann::json& j, Turn& t) {
    t.query = j.at("query").get<std::string>();
    t.response = j.at("response").get<explain::Response>();
    t.timestamp = j.at("timestamp").get<std::int64_t>();
}

enum class EventKind { opened, initial, turn, reassessment, finalized };

constexpr std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::opened: return "opened";
        case EventKind::initial: return "initial";
        case EventKind::turn: return "turn";
        case EventKind::reassessment: return "reassessment";
        case EventKind::finalized: return "finalized";
    }
    return "opened";
}

inline EventKind parse_event_kind(std::string_view s) {
    for (auto k : {EventKind::opened, EventKind::initial, EventKind::turn, EventKind::reassessment, EventKind::finalized}) {
        if (to_string(k) == s) return k;
    }
    fail(ErrorCode::InvalidArgument, "unknown event kind '" + std::string(s) + "'");
}

/// One line of the session event log.
struct SessionEvent {
    std::string session_id;
    std::uint64_t seq = 0;  // 1-based, per session
    EventKind kind = EventKind::opened;
    std::int64_t timestamp = 0;
    nlohmann::json payload = nlohmann::json::object();
    bool operator==(const SessionEvent&) const = default;
};

inline void to_json(nlohmann::json& j, const SessionEvent& e) {
    j = {{"session_id", e.session_id},
         {"seq", e.seq},
         {"kind", std::string(to_string(e.kind))},
         {"ts", e.timestamp},
         {"payload", e.payload}};
}

inline void from_json(const nlohmann::json& j, SessionEvent& e) {
    e.session_id = j.at("session_id").get<std::string>();
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = parse_event_kind(j.at("kind").get<std::string>());
    e.timestamp = j.at("ts").get<std::int64_t>();
    e.payload = j.at("payload");
}

class ReviewSession {
public:
    ReviewSession() = default;

    /// Builds the session from a complete or truncated event sequence.
    static ReviewSession replay(const std::vector<SessionEvent>& events) {
        ReviewSession s;
        for (const auto& e : events) s.apply(e);
        return s;
    }

    /// Applies one event; rejects events that the protocol does not allow
    /// in the current state.
    void apply(const SessionEvent& e) {
        if (!history_.empty() && e.session_id != session_id_) {
            fail(ErrorCode::InvalidArgument, "event for session '" + e.session_id + "' applied to '" + session_id_ + "'");
        }
        if (e.seq != history_.size() + 1) {
            fail(ErrorCode::SequenceGap, "session " + e.session_id + ": expected seq " + std::to_string(history_.size() + 1) +
                                             ", got " + std::to_string(e.seq));
        }
        if (!history_.empty() && e.timestamp < history_.back().timestamp) {
            fail(ErrorCode::InvalidArgument, "session " + e.session_id + ": timestamps must not decrease");
        }
        switch (e.kind) {
            case EventKind::opened: {
                if (!history_.empty()) fail(ErrorCode::InvalidState, "session already opened");
                session_id_ = e.session_id;
                case_id_ = e.payload.at("case_id").get<std::string>();
                physician_id_ = e.payload.at("physician_id").get<std::string>();
                original_ = e.payload.at("assessment").get<risk::Assessment>();
                opened_at_ = e.timestamp;
                state_ = SessionState::AwaitingInitial;
                break;
            }
            case EventKind::initial: {
                require_state(SessionState::AwaitingInitial, "initial judgment");
                auto j = e.payload.at("judgment").get<Judgment>();
                initial_ = j;
                if (j.label == original_.label) {
                    final_ = j;
                    revised_ = false;
                    state_ = SessionState::Finalized;
                } else {
                    state_ = SessionState::Interrogation;
                }
                break;
            }
            case EventKind::turn: {
                require_state(SessionState::Interrogation, "query");
                transcript_.push_back(e.payload.get<Turn>());
                break;
            }
            case EventKind::reassessment: {
                require_state(SessionState::Interrogation, "reassessment");
                if (history_.back().kind != EventKind::turn) fail(ErrorCode::InvalidState, "reassessment must follow a turn");
                latest_ = e.payload.at("assessment").get<risk::Assessment>();
                break;
            }
            case EventKind::finalized: {
                require_state(SessionState::Interrogation, "final judgment");
                if (transcript_.empty()) fail(ErrorCode::MustInterrogate, "at least one query is required before finalizing");
                auto j = e.payload.at("judgment").get<Judgment>();
                final_ = j;
                revised_ = j.label != initial_->label;
                state_ = SessionState::Finalized;
                break;
            }
        }
        history_.push_back(e);
    }

    [[nodiscard]] const std::string& session_id() const { return session_id_; }
    [[nodiscard]] const std::string& case_id() const { return case_id_; }
    [[nodiscard]] const std::string& physician_id() const { return physician_id_; }
    [[nodiscard]] SessionState state() const { return state_; }
    [[nodiscard]] bool opened() const { return !history_.empty(); }
    [[nodiscard]] const std::optional<Judgment>& initial() const { return initial_; }
    [[nodiscard]] const std::optional<Judgment>& final_judgment() const { return final_; }
    [[nodiscard]] bool revised() const { return revised_; }
    [[nodiscard]] const std::vector<Turn>& transcript() const { return transcript_; }
    [[nodiscard]] const std::vector<SessionEvent>& history() const { return history_; }
    [[nodiscard]] std::int64_t last_timestamp() const { return history_.empty() ? 0 : history_.back().timestamp; }

    /// The assessment as computed at open. Blinded until the initial judgment.
    [[nodiscard]] const risk::Assessment& original_assessment() const {
        require_unblinded();
        return original_;
    }

    /// The latest reassessment, or the original. Blinded until the initial judgment.
    [[nodiscard]] const risk::Assessment& visible_assessment() const {
        require_unblinded();
        return latest_ ? *latest_ : original_;
    }

    bool operator==(const ReviewSession&) const = default;

private:
    void require_state(SessionState want, const char* what) const {
        if (history_.empty()) fail(ErrorCode::InvalidState, "session not opened");
        if (state_ != want) {
            fail(ErrorCode::InvalidState, std::string(what) + " not allowed in state " + std::string(to_string(state_)), 0,
                 std::string(to_string(state_)));
        }
    }

    void require_unblinded() const {
        if (history_.empty()) fail(ErrorCode::InvalidState, "session not opened");
        if (state_ == SessionState::AwaitingInitial) {
            fail(ErrorCode::BlindedAccess, "the model assessment is hidden until the initial judgment is submitted");
        }
    }

    std::string session_id_, case_id_, physician_id_;
    SessionState state_ = SessionState::AwaitingInitial;
    risk::Assessment original_;
    std::optional<risk::Assessment> latest_;
    std::optional<Judgment> initial_, final_;
    bool revised_ = false;
    std::vector<Turn> transcript_;
    std::int64_t opened_at_ = 0;
    std::vector<SessionEvent> history_;
};

// ---------------------------------------------------------------------------
// Operations. Each builds events and applies them; the new events are the
// tail of session.history().

namespace detail {

inline SessionEvent next_event(const ReviewSession& s, EventKind kind, std::int64_t ts, nlohmann::json payload) {
    return {s.session_id(), s.history().size() + 1, kind, ts, std::move(payload)};
}

inline void check_author(const ReviewSession& s, const Judgment& j) {
    if (j.author.kind != Author::Kind::physician || j.author.id != s.physician_id()) {
        fail(ErrorCode::WrongAuthor, "judgment must come from physician '" + s.physician_id() + "'");
    }
}

}  // namespace detail

/// Opens a session around an already computed assessment.
inline ReviewSession open_session(std::string session_id, std::string case_id, std::string physician_id,
                                  const risk::Assessment& assessment, std::int64_t ts) {
    if (session_id.empty()) fail(ErrorCode::InvalidArgument, "session id must not be empty");
    if (physician_id.empty()) fail(ErrorCode::InvalidArgument, "physician id must not be empty");
    ReviewSession s;
    s.apply({std::move(session_id), 1, EventKind::opened, ts,
             {{"case_id", std::move(case_id)}, {"physician_id", std::move(physician_id)}, {"assessment", assessment}}});
    return s;
}

/// Looks the case up, extracts features when needed and scores it.
inline ReviewSession start_review(std::string session_id, const ingest::CaseSet& cases, std::string_view case_id,
                                  std::string physician_id, const risk::RiskModel& model, const risk::ScoreTable& table,
                                  std::int64_t ts, const imaging::FeatureConfig& fcfg = {}) {
    const auto* c = cases.find(case_id);
    if (!c) fail(ErrorCode::UnknownCase, "no case '" + std::string(case_id) + "'", 0, std::string(case_id));
    const auto fv = ingest::case_features(*c, cases.base_dir, fcfg);
    return open_session(std::move(session_id), c->case_id, std::move(physician_id), risk::predict_risk(model, fv, table), ts);
}

inline ReviewSession& submit_initial(ReviewSession& s, const Judgment& j) {
    if (!s.opened()) fail(ErrorCode::InvalidState, "session not opened");
    if (s.state() != SessionState::AwaitingInitial) fail(ErrorCode::InvalidState, "initial judgment already submitted");
    detail::check_author(s, j);
    s.apply(detail::next_event(s, EventKind::initial, j.timestamp, {{"judgment", j}}));
    return s;
}

/// What a live query needs besides the session: the model, the table, and
/// optionally the pixels for heatmaps and region exclusion.
struct QueryEnvironment {
    const risk::RiskModel& model;
    const risk::ScoreTable& table;
    const explain::SynonymTable& synonyms;
    const risk::ImageContext* image = nullptr;
};

/// Parses and answers one query. Unrecognized queries throw before any
/// event is written, leaving the session unchanged.
inline explain::Response interrogate(ReviewSession& s, std::string_view text, const QueryEnvironment& env,
                                     std::int64_t ts) {
    if (!s.opened()) fail(ErrorCode::InvalidState, "session not opened");
    if (s.state() != SessionState::Interrogation) {
        fail(ErrorCode::InvalidState, "queries are only accepted during interrogation (state " +
                                          std::string(to_string(s.state())) + ")");
    }
    const auto intent = explain::parse_query(text, env.synonyms);
    const auto& original = s.original_assessment();
    explain::QueryContext ctx{env.model, env.table, original.features, s.visible_assessment(), env.image, true};
    auto response = explain::answer_query(intent, ctx);

    s.apply(detail::next_event(s, EventKind::turn, ts, Turn{std::string(text), response, ts}));
    if (intent.kind == explain::IntentKind::Reassess && response.new_assessment) {
        s.apply(detail::next_event(s, EventKind::reassessment, ts, {{"assessment", *response.new_assessment}}));
    }
    return response;
}

inline ReviewSession& finalize(ReviewSession& s, const Judgment& j) {
    if (!s.opened()) fail(ErrorCode::InvalidState, "session not opened");
    if (s.state() != SessionState::Interrogation) {
        fail(ErrorCode::InvalidState, "cannot finalize in state " + std::string(to_string(s.state())));
    }
    detail::check_author(s, j);
    if (s.transcript().empty()) fail(ErrorCode::MustInterrogate, "at least one query is required before finalizing");
    s.apply(detail::next_event(s, EventKind::finalized, j.timestamp, {{"judgment", j}}));
    return s;
}

/// Session view for clients. The assessment fields are present only once
/// the initial judgment is in; pathology is never included.
inline nlohmann::json session_view(const ReviewSession& s) {
    nlohmann::json j = {{"session_id", s.session_id()},
                        {"case_id", s.case_id()},
                        {"physician_id", s.physician_id()},
                        {"state", std::string(to_string(s.state()))},
                        {"revised", s.revised()},
                        {"turns", s.transcript().size()}};
    j["initial"] = s.initial() ? nlohmann::json(*s.initial()) : nlohmann::json(nullptr);
    j["final"] = s.final_judgment() ? nlohmann::json(*s.final_judgment()) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json transcript_json(const ReviewSession& s) {
    nlohmann::json j = session_view(s);
    j["transcript"] = s.transcript();
    if (s.state() != SessionState::AwaitingInitial) {
        j["original_assessment"] = s.original_assessment();
        j["visible_assessment"] = s.visible_assessment();
    }
    return j;
}

}  // namespace cadx::arbitration
