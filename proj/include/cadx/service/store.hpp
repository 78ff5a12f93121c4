#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/arbitration.hpp"
#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/explain/query.hpp"
#include "cadx/imaging/extract.hpp"
#include "cadx/ingest.hpp"
#include "cadx/readersim.hpp"
#include "cadx/risk/assess.hpp"
#include "cadx/risk/model.hpp"
#include "cadx/risk/score_table.hpp"
#include "cadx/service/event_log.hpp"
#include "cadx/service/report.hpp"

namespace cadx::service {

/// Everything `serve` reads from the config file.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> model_path;
    std::optional<std::filesystem::path> score_table_path;
    std::optional<std::filesystem::path> cases_path;
    std::optional<std::filesystem::path> event_log_path;
    imaging::FeatureConfig features;
    imaging::GridSize grid;
    std::optional<double> fusion_lambda;
    std::optional<double> decision_threshold;

    static ServiceConfig from(const Config& cfg) {
        ServiceConfig s;
        s.host = cfg.get_or("serve.host", s.host);
        s.port = static_cast<int>(cfg.get_int("serve.port", s.port));
        if (s.port < 0 || s.port > 65535) fail(ErrorCode::BadConfig, "serve.port out of range");
        s.model_path = cfg.get_path("model");
        s.score_table_path = cfg.get_path("score_table");
        s.cases_path = cfg.get_path("cases");
        s.event_log_path = cfg.get_path("event_log");
        s.features = imaging::FeatureConfig::from(cfg);
        s.grid.cols = static_cast<int>(cfg.get_int("heatmap.grid_cols", s.grid.cols));
        s.grid.rows = static_cast<int>(cfg.get_int("heatmap.grid_rows", s.grid.rows));
        if (s.grid.cols < 1 || s.grid.rows < 1) fail(ErrorCode::BadConfig, "heatmap grid must have >= 1 cell per axis");
        if (cfg.contains("fusion_lambda")) s.fusion_lambda = cfg.get_double("fusion_lambda", 0.7);
        if (cfg.contains("decision_threshold")) s.decision_threshold = cfg.get_double("decision_threshold", 0.5);
        return s;
    }
};

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// In-memory state behind the API: cases, sessions (mirrored to the event
/// log) and finished study reports. Mutations of one session are
/// serialized by that session's mutex.
class Store {
public:
    Store(risk::RiskModel model, risk::ScoreTable table, explain::SynonymTable synonyms = explain::SynonymTable::defaults(),
          imaging::FeatureConfig features = {}, imaging::GridSize grid = {})
        : model_(std::move(model)),
          table_(std::move(table)),
          synonyms_(std::move(synonyms)),
          features_(features),
          grid_(grid) {}

    std::function<std::int64_t()> clock = now_ms;

    [[nodiscard]] const risk::RiskModel& model() const { return model_; }
    [[nodiscard]] const risk::ScoreTable& table() const { return table_; }
    [[nodiscard]] const imaging::FeatureConfig& feature_config() const { return features_; }
    [[nodiscard]] imaging::GridSize grid() const { return grid_; }

    /// Replays an existing log and appends all later events to it.
    void attach_log(const std::filesystem::path& path) {
        std::vector<SessionEvent> events;
        if (std::filesystem::exists(path)) events = read_events(path);
        auto sessions = load_sessions(events);
        std::unique_lock lock(mu_);
        for (auto& [id, s] : sessions) {
            auto slot = std::make_unique<Slot>();
            slot->session = std::move(s);
            bump_counter(id);
            sessions_[id] = std::move(slot);
        }
        log_ = std::make_unique<EventLog>(path);
    }

    struct AddResult {
        std::vector<std::string> retained;
        std::vector<ingest::Excluded> excluded;
    };

    /// Adds cases after the exclusion criteria; excluded cases are reported
    /// and not stored. Duplicate ids (within the batch or against stored
    /// cases) reject the whole batch.
    AddResult add_cases(const ingest::CaseSet& batch) {
        std::unique_lock lock(mu_);
        std::set<std::string> seen;
        for (const auto& c : batch.cases) {
            if (cases_.contains(c.case_id) || !seen.insert(c.case_id).second) {
                fail(ErrorCode::DuplicateCaseId, "duplicate case_id '" + c.case_id + "'", 0, c.case_id);
            }
        }
        const auto report = ingest::apply_exclusions(batch);
        AddResult r;
        r.excluded = report.excluded;
        for (const auto& c : report.retained.cases) {
            cases_[c.case_id] = StoredCase{c, batch.base_dir};
            case_order_.push_back(c.case_id);
            r.retained.push_back(c.case_id);
        }
        return r;
    }

    struct StoredCase {
        ingest::CaseRecord record;
        std::filesystem::path base_dir;
    };

    [[nodiscard]] std::optional<StoredCase> find_case(std::string_view id) const {
        std::shared_lock lock(mu_);
        auto it = cases_.find(std::string(id));
        if (it == cases_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] StoredCase require_case(std::string_view id) const {
        auto c = find_case(id);
        if (!c) fail(ErrorCode::UnknownCase, "no case '" + std::string(id) + "'", 0, std::string(id));
        return *c;
    }

    [[nodiscard]] std::vector<std::string> case_ids() const {
        std::shared_lock lock(mu_);
        return case_order_;
    }

    /// Opens a session; the model assessment is computed now and hidden
    /// until the initial judgment arrives.
    arbitration::ReviewSession open_session(std::string_view case_id, std::string physician_id) {
        const auto c = require_case(case_id);
        const auto fv = ingest::case_features(c.record, c.base_dir, features_);
        const auto assessment = risk::predict_risk(model_, fv, table_);
        auto slot = std::make_unique<Slot>();
        std::unique_lock lock(mu_);
        const auto id = next_session_id();
        slot->session = arbitration::open_session(id, c.record.case_id, std::move(physician_id), assessment, clock());
        if (log_) log_->sync(slot->session);
        auto copy = slot->session;
        sessions_[id] = std::move(slot);
        return copy;
    }

    /// Runs `f` on the session under its lock, then appends any new events
    /// to the log. Returns whatever `f` returns.
    template <typename F>
    auto with_session(std::string_view id, F&& f) {
        Slot* slot = nullptr;
        {
            std::shared_lock lock(mu_);
            auto it = sessions_.find(std::string(id));
            if (it == sessions_.end()) fail(ErrorCode::NotFound, "no session '" + std::string(id) + "'", 0, std::string(id));
            slot = it->second.get();
        }
        std::lock_guard session_lock(slot->mu);
        auto sync = [&] {
            if (log_) log_->sync(slot->session);
        };
        try {
            if constexpr (std::is_void_v<std::invoke_result_t<F&, arbitration::ReviewSession&>>) {
                f(slot->session);
                sync();
            } else {
                auto r = f(slot->session);
                sync();
                return r;
            }
        } catch (const Error&) {
            sync();
            throw;
        }
    }

    [[nodiscard]] arbitration::ReviewSession session(std::string_view id) {
        return with_session(id, [](const arbitration::ReviewSession& s) { return s; });
    }

    /// Monotone timestamp for the next event of `s`.
    [[nodiscard]] std::int64_t timestamp_for(const arbitration::ReviewSession& s) const {
        return std::max(clock(), s.last_timestamp());
    }

    /// Image context for heatmaps and region exclusion, when pixels exist.
    struct Pixels {
        std::optional<imaging::Image> image;
        std::optional<imaging::Mask> mask;
        std::optional<double> mm_per_pixel;
    };

    [[nodiscard]] Pixels pixels_for(std::string_view case_id) const {
        const auto c = require_case(case_id);
        Pixels p;
        p.mm_per_pixel = c.record.mm_per_pixel;
        try {
            p.image = ingest::case_image(c.record, c.base_dir);
            if (p.image) p.mask = ingest::case_mask(c.record, c.base_dir, p.image->width, p.image->height);
        } catch (const Error&) {
            p.image.reset();
            p.mask.reset();
        }
        return p;
    }

    explain::Response query(std::string_view session_id, std::string_view text) {
        return with_session(session_id, [&](arbitration::ReviewSession& s) {
            const auto px = pixels_for(s.case_id());
            risk::ImageContext ic;
            if (px.image && px.mask) {
                ic.image = &*px.image;
                ic.mask = &*px.mask;
            }
            ic.mm_per_pixel = px.mm_per_pixel;
            ic.feature_config = features_;
            ic.grid = grid_;
            arbitration::QueryEnvironment env{model_, table_, synonyms_, &ic};
            return arbitration::interrogate(s, text, env, timestamp_for(s));
        });
    }

    std::string add_study(nlohmann::json report) {
        std::unique_lock lock(mu_);
        const auto id = "study-" + std::to_string(++study_counter_);
        studies_[id] = std::move(report);
        return id;
    }

    [[nodiscard]] nlohmann::json study(std::string_view id) const {
        std::shared_lock lock(mu_);
        auto it = studies_.find(std::string(id));
        if (it == studies_.end()) fail(ErrorCode::NotFound, "no study '" + std::string(id) + "'", 0, std::string(id));
        return it->second;
    }

    [[nodiscard]] std::vector<std::string> session_ids() const {
        std::shared_lock lock(mu_);
        std::vector<std::string> out;
        for (const auto& [id, _] : sessions_) out.push_back(id);
        return out;
    }

private:
    struct Slot {
        std::mutex mu;
        arbitration::ReviewSession session;
    };

    std::string next_session_id() {
        char buf[32];
        std::snprintf(buf, sizeof buf, "s-%06llu", static_cast<unsigned long long>(++session_counter_));
        return buf;
    }

    void bump_counter(const std::string& id) {
        unsigned long long n = 0;
        if (std::sscanf(id.c_str(), "s-%llu", &n) == 1) session_counter_ = std::max<std::uint64_t>(session_counter_, n);
    }

    risk::RiskModel model_;
    risk::ScoreTable table_;
    explain::SynonymTable synonyms_;
    imaging::FeatureConfig features_;
    imaging::GridSize grid_;

    mutable std::shared_mutex mu_;
    std::map<std::string, StoredCase> cases_;
    std::vector<std::string> case_order_;
    std::map<std::string, std::unique_ptr<Slot>> sessions_;
    std::map<std::string, nlohmann::json> studies_;
    std::uint64_t session_counter_ = 0;
    std::uint64_t study_counter_ = 0;
    std::unique_ptr<EventLog> log_;
};

}  // namespace cadx::service
