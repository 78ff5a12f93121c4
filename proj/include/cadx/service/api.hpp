#pragma once

// Transport-independent request router. service/http.hpp binds it to an
// HTTP server; tests call dispatch() directly.
//
// Request and response bodies are JSON. Errors are {"code", "message"} plus
// "detail" when there is one (e.g. the suggested query form).

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/arbitration.hpp"
#include "cadx/error.hpp"
#include "cadx/explain/rationale.hpp"
#include "cadx/ingest.hpp"
#include "cadx/readersim.hpp"
#include "cadx/service/report.hpp"
#include "cadx/service/store.hpp"

#ifndef CADX_VERSION
#define CADX_VERSION "0.0.0"
#endif

namespace cadx::service {

struct ApiRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    [[nodiscard]] nlohmann::json json() const { return nlohmann::json::parse(body); }
};

inline constexpr std::string_view kPhysicianHeader = "X-Physician-Id";

inline int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::BlindedAccess:
        case ErrorCode::WrongAuthor: return 403;
        case ErrorCode::NotFound:
        case ErrorCode::UnknownCase:
        case ErrorCode::FileNotFound: return 404;
        case ErrorCode::InvalidState:
        case ErrorCode::InvalidSessionState:
        case ErrorCode::MustInterrogate:
        case ErrorCode::DuplicateCaseId: return 409;
        case ErrorCode::UnrecognizedQuery:
        case ErrorCode::UnknownRegion:
        case ErrorCode::UnknownFeature:
        case ErrorCode::EmptyStudy:
        case ErrorCode::FeatureExtractionFailed:
        case ErrorCode::MissingPathology: return 422;
        case ErrorCode::IoError: return 500;
        default: return 400;
    }
}

inline ApiResponse json_response(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }

inline ApiResponse error_response(const Error& e) {
    nlohmann::json j = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (!e.detail().empty()) j["detail"] = e.detail();
    return json_response(http_status(e.code()), j);
}

/// Case as shown to reviewers: no pathology, no pixels.
inline nlohmann::json case_view(const ingest::CaseRecord& c) {
    nlohmann::json j = {{"case_id", c.case_id},
                        {"age", c.age},
                        {"sex", std::string(ingest::to_string(c.sex))},
                        {"machine_tag", c.machine_tag},
                        {"has_image", c.has_image()},
                        {"has_mask", c.mask.has_value() || c.mask_ref.has_value()}};
    if (c.image) j["size"] = {c.image->width, c.image->height};
    if (c.bbox) j["bbox"] = {c.bbox->x, c.bbox->y, c.bbox->w, c.bbox->h};
    if (c.features) j["features"] = *c.features;
    if (c.mm_per_pixel) j["mm_per_pixel"] = *c.mm_per_pixel;
    return j;
}

class Api {
public:
    explicit Api(Store& store) : store_(store) {}

    ApiResponse dispatch(const ApiRequest& req) {
        try {
            return route(req);
        } catch (const Error& e) {
            return error_response(e);
        } catch (const nlohmann::json::exception& e) {
            return json_response(400, {{"code", "InvalidArgument"}, {"message", std::string("bad request body: ") + e.what()}});
        } catch (const std::exception& e) {
            return json_response(500, {{"code", "Internal"}, {"message", e.what()}});
        }
    }

private:
    static std::vector<std::string> segments(std::string_view path) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos < path.size()) {
            auto next = path.find('/', pos);
            if (next == std::string_view::npos) next = path.size();
            if (next > pos) out.emplace_back(path.substr(pos, next - pos));
            pos = next + 1;
        }
        return out;
    }

    static nlohmann::json body_json(const ApiRequest& req) {
        if (req.body.empty()) return nlohmann::json::object();
        return nlohmann::json::parse(req.body);
    }

    static Label body_label(const nlohmann::json& b) {
        if (!b.contains("label") || !b["label"].is_string()) fail(ErrorCode::InvalidArgument, "body needs a 'label'");
        return require_label(b["label"].get<std::string>());
    }

    /// Physician id from the header, the body, or the session itself.
    static std::string physician_of(const ApiRequest& req, const nlohmann::json& b, const std::string& fallback) {
        for (const auto& [k, v] : req.headers) {
            if (k.size() == kPhysicianHeader.size() &&
                std::equal(k.begin(), k.end(), kPhysicianHeader.begin(),
                           [](char a, char c) { return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(c)); })) {
                return v;
            }
        }
        if (b.contains("physician_id") && b["physician_id"].is_string()) return b["physician_id"].get<std::string>();
        return fallback;
    }

    [[noreturn]] static void not_found(const ApiRequest& req) {
        fail(ErrorCode::NotFound, "no route for " + req.method + " " + req.path);
    }

    ApiResponse route(const ApiRequest& req) {
        const auto seg = segments(req.path);
        const auto& m = req.method;
        if (seg.size() == 1 && seg[0] == "health" && m == "GET") {
            return json_response(200, {{"status", "ok"}, {"version", CADX_VERSION}, {"model_version", store_.model().version}});
        }
        if (!seg.empty() && seg[0] == "cases") return cases(req, seg);
        if (!seg.empty() && seg[0] == "sessions") return sessions(req, seg);
        if (!seg.empty() && seg[0] == "studies") return studies(req, seg);
        not_found(req);
    }

    ApiResponse cases(const ApiRequest& req, const std::vector<std::string>& seg) {
        if (seg.size() == 1 && req.method == "POST") {
            ingest::CaseSet batch;
            batch.name = "api";
            const auto trimmed = cadx::detail::trim(req.body);
            if (!trimmed.empty() && trimmed.front() == '[') {
                for (const auto& rec : nlohmann::json::parse(trimmed)) batch.cases.push_back(ingest::parse_case(rec));
            } else if (!trimmed.empty() && trimmed.front() == '{' && nlohmann::json::accept(trimmed) &&
                       nlohmann::json::parse(trimmed).contains("cases")) {
                for (const auto& rec : nlohmann::json::parse(trimmed).at("cases")) batch.cases.push_back(ingest::parse_case(rec));
            } else {
                batch = ingest::parse_cases(req.body, true, "api");
            }
            const auto r = store_.add_cases(batch);
            nlohmann::json ex = nlohmann::json::array();
            for (const auto& e : r.excluded) ex.push_back({{"case_id", e.case_id}, {"reason", std::string(ingest::to_string(e.reason))}});
            return json_response(201, {{"added", r.retained}, {"excluded", ex}});
        }
        if (seg.size() == 1 && req.method == "GET") return json_response(200, {{"cases", store_.case_ids()}});
        if (seg.size() == 2 && req.method == "GET") return json_response(200, case_view(store_.require_case(seg[1]).record));
        if (seg.size() == 3 && seg[2] == "image" && req.method == "GET") {
            const auto px = store_.pixels_for(seg[1]);
            auto layer = req.query.contains("layer") ? req.query.at("layer") : std::string("image");
            if (layer == "mask") {
                if (!px.mask) fail(ErrorCode::NotFound, "case '" + seg[1] + "' has no mask");
                imaging::Image shown(px.mask->width, px.mask->height);
                for (std::size_t i = 0; i < shown.size(); ++i) shown.pixels[i] = px.mask->pixels[i] ? 255 : 0;
                const auto png = imaging::encode_png(shown);
                return {200, "image/png", std::string(png.begin(), png.end())};
            }
            if (layer != "image") fail(ErrorCode::InvalidArgument, "layer must be image or mask");
            if (!px.image) fail(ErrorCode::NotFound, "case '" + seg[1] + "' has no image");
            const auto png = imaging::encode_png(*px.image);
            return {200, "image/png", std::string(png.begin(), png.end())};
        }
        not_found(req);
    }

    ApiResponse sessions(const ApiRequest& req, const std::vector<std::string>& seg) {
        const auto& m = req.method;
        if (seg.size() == 1 && m == "POST") {
            const auto b = body_json(req);
            if (!b.contains("case_id")) fail(ErrorCode::InvalidArgument, "body needs 'case_id'");
            const auto physician = physician_of(req, b, "");
            if (physician.empty()) fail(ErrorCode::InvalidArgument, "physician id missing (header or body)");
            auto s = store_.open_session(b["case_id"].get<std::string>(), physician);
            return json_response(201, arbitration::session_view(s));
        }
        if (seg.size() == 1 && m == "GET") return json_response(200, {{"sessions", store_.session_ids()}});
        if (seg.size() < 2) not_found(req);
        const auto& id = seg[1];
        if (seg.size() == 2 && m == "GET") return json_response(200, arbitration::session_view(store_.session(id)));
        const std::string action = seg.size() == 3 ? seg[2] : "";

        if (action == "initial" && m == "POST") {
            const auto b = body_json(req);
            auto view = store_.with_session(id, [&](arbitration::ReviewSession& s) {
                arbitration::Judgment j{body_label(b), arbitration::Author::physician(physician_of(req, b, s.physician_id())),
                                        store_.timestamp_for(s)};
                arbitration::submit_initial(s, j);
                auto v = arbitration::session_view(s);
                v["assessment"] = s.visible_assessment();
                return v;
            });
            return json_response(200, view);
        }
        if (action == "assessment" && m == "GET") {
            auto body = store_.with_session(id, [](arbitration::ReviewSession& s) {
                const auto& visible = s.visible_assessment();
                return nlohmann::json{{"original", s.original_assessment()},
                                      {"visible", visible},
                                      {"rationale", explain::render_rationale(visible)}};
            });
            return json_response(200, body);
        }
        if (action == "query" && m == "POST") {
            const auto b = body_json(req);
            if (!b.contains("text") || !b["text"].is_string()) fail(ErrorCode::InvalidArgument, "body needs 'text'");
            const auto response = store_.query(id, b["text"].get<std::string>());
            auto s = store_.session(id);
            nlohmann::json j = response;
            j["turn"] = s.transcript().size();
            j["visible_probability"] = s.visible_assessment().probability;
            j["original_probability"] = s.original_assessment().probability;
            return json_response(200, j);
        }
        if (action == "final" && m == "POST") {
            const auto b = body_json(req);
            auto view = store_.with_session(id, [&](arbitration::ReviewSession& s) {
                arbitration::Judgment j{body_label(b), arbitration::Author::physician(physician_of(req, b, s.physician_id())),
                                        store_.timestamp_for(s)};
                arbitration::finalize(s, j);
                return arbitration::session_view(s);
            });
            return json_response(200, view);
        }
        if (action == "transcript" && m == "GET") {
            return json_response(200, arbitration::transcript_json(store_.session(id)));
        }
        not_found(req);
    }

    ApiResponse studies(const ApiRequest& req, const std::vector<std::string>& seg) {
        if (seg.size() == 2 && seg[1] == "run" && req.method == "POST") {
            const auto b = body_json(req);
            Config cfg;
            if (b.contains("config")) {
                const auto& c = b["config"];
                if (c.is_string()) {
                    cfg = Config::parse(c.get<std::string>(), "request");
                } else if (c.is_object()) {
                    for (const auto& [k, v] : c.items()) cfg.set(k, v.is_string() ? v.get<std::string>() : v.dump());
                } else {
                    fail(ErrorCode::BadConfig, "config must be text or an object");
                }
            }
            const auto study_cfg = readersim::StudyConfig::from(cfg);
            const std::uint64_t seed = b.value("seed", std::uint64_t{1});
            std::vector<std::string> ids =
                b.contains("case_ids") ? b["case_ids"].get<std::vector<std::string>>() : store_.case_ids();
            std::vector<Label> truth;
            std::vector<risk::Assessment> as;
            for (const auto& cid : ids) {
                const auto c = store_.require_case(cid);
                if (!c.record.pathology) continue;
                truth.push_back(*c.record.pathology);
                as.push_back(risk::predict_risk(store_.model(), ingest::case_features(c.record, c.base_dir, store_.feature_config()),
                                                store_.table()));
            }
            if (truth.empty()) fail(ErrorCode::EmptyStudy, "no cases with pathology to evaluate");
            const auto result = readersim::evaluate_study(truth, as, study_cfg, seed);
            auto report = study_report_json(result);
            const auto study_id = store_.add_study(report);
            return json_response(201, {{"study_id", study_id}, {"report", report}});
        }
        if (seg.size() == 3 && seg[2] == "report" && req.method == "GET") return json_response(200, store_.study(seg[1]));
        not_found(req);
    }

    Store& store_;
};

}  // namespace cadx::service
