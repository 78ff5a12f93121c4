#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"
#include "cadx/explain/contributions.hpp"
#include "cadx/explain/query.hpp"
#include "cadx/explain/rationale.hpp"
#include "cadx/imaging/heatmap.hpp"
#include "cadx/risk/assess.hpp"

namespace cadx::explain {

struct Response {
    IntentKind kind = IntentKind::Why;
    std::string text;
    /// Present for Reassess and WhatIf.
    std::optional<risk::Assessment> new_assessment;
    std::vector<Contribution> referenced_contributions;
    std::optional<imaging::Heatmap> heatmap;

    bool operator==(const Response&) const = default;
};

inline void to_json(nlohmann::json& j, const Response& r) {
    j = {{"kind", std::string(to_string(r.kind))},
         {"text", r.text},
         {"referenced_contributions", r.referenced_contributions}};
    if (r.new_assessment) j["new_assessment"] = *r.new_assessment;
    if (r.heatmap) j["heatmap"] = *r.heatmap;
}

inline IntentKind intent_kind_from(std::string_view s) {
    for (auto k : {IntentKind::Why, IntentKind::ShowHeatmap, IntentKind::Reassess, IntentKind::WhatIf,
                   IntentKind::Confidence}) {
        if (to_string(k) == s) return k;
    }
    fail(ErrorCode::InvalidArgument, "unknown intent kind '" + std::string(s) + "'");
}

inline void from_json(const nlohmann::json& j, Response& r) {
    r.kind = intent_kind_from(j.at("kind").get<std::string>());
    r.text = j.at("text").get<std::string>();
    r.referenced_contributions = j.at("referenced_contributions").get<std::vector<Contribution>>();
    r.new_assessment.reset();
    r.heatmap.reset();
    if (j.contains("new_assessment")) r.new_assessment = j.at("new_assessment").get<risk::Assessment>();
    if (j.contains("heatmap")) r.heatmap = j.at("heatmap").get<imaging::Heatmap>();
}

/// Everything a query may consult. `current` is the assessment visible to
/// the physician (the latest reassessment, or the original).
struct QueryContext {
    const risk::RiskModel& model;
    const risk::ScoreTable& table;
    const FeatureVector& features;
    const risk::Assessment& current;
    const risk::ImageContext* image = nullptr;
    bool interrogation_open = true;
};

inline constexpr int kWhyFactors = 3;

inline Response answer_query(const Intent& intent, const QueryContext& ctx) {
    if (!ctx.interrogation_open) fail(ErrorCode::InvalidSessionState, "session does not accept queries in its current state");

    Response r;
    r.kind = intent.kind;
    const auto& cur = ctx.current;
    switch (intent.kind) {
        case IntentKind::Why: {
            const auto k = std::min<std::size_t>(kWhyFactors, cur.contributions.size());
            r.referenced_contributions.assign(cur.contributions.begin(), cur.contributions.begin() + static_cast<std::ptrdiff_t>(k));
            r.text = "The model considers this nodule " + std::string(to_string(cur.label)) + " (probability " +
                     fixed3(cur.probability) + "). The strongest factors are:";
            for (std::size_t i = 0; i < k; ++i) {
                r.text += (i ? "; " : " ") + std::to_string(i + 1) + ". " + describe(r.referenced_contributions[i]);
            }
            r.text += ".";
            break;
        }
        case IntentKind::ShowHeatmap: {
            if (!ctx.image || !ctx.image->image || !ctx.image->mask) {
                r.text = "No image is attached to this case, so no heatmap is available.";
                break;
            }
            imaging::OcclusionOptions opt{ctx.image->grid, ctx.image->mm_per_pixel, ctx.image->feature_config};
            r.heatmap = imaging::occlusion_heatmap(*ctx.image->image, *ctx.image->mask, ctx.model, ctx.table, opt);
            const auto& h = *r.heatmap;
            r.text = "Heatmap attached (" + std::to_string(h.grid_w) + "x" + std::to_string(h.grid_h) +
                     " grid, base risk " + fixed3(h.base_risk) + "). Highest-weight cells:";
            const auto ranked = h.ranked_cells();
            for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
                r.text += (i ? ", " : " ") + risk::cell_name(ranked[i]) + " " + signed3(h.at(ranked[i].col, ranked[i].row));
            }
            r.text += ".";
            break;
        }
        case IntentKind::Reassess: {
            auto next = risk::reassess(ctx.model, ctx.features, intent.exclusion, ctx.table, ctx.image);
            r.text = "Recalculated ignoring ";
            for (std::size_t i = 0; i < next.excluded.size(); ++i) r.text += (i ? ", " : "") + next.excluded[i];
            r.text += ": original probability " + fixed3(cur.probability) + " (" + std::string(to_string(cur.label)) +
                      "), reassessed probability " + fixed3(next.probability) + " (" +
                      std::string(to_string(next.label)) + ").";
            r.referenced_contributions = next.contributions;
            r.new_assessment = std::move(next);
            break;
        }
        case IntentKind::WhatIf: {
            const Feature f = require_feature(intent.feature);
            FeatureVector hypo = ctx.features;
            hypo[f] = intent.value;
            auto next = risk::predict_risk(ctx.model, hypo, ctx.table);
            r.text = "If " + intent.feature + " were " + detail::shortest_repr(intent.value) + " (currently " +
                     detail::shortest_repr(ctx.features[f]) + "), the probability would be " + fixed3(next.probability) +
                     " (" + std::string(to_string(next.label)) + ") instead of " + fixed3(cur.probability) + ".";
            r.referenced_contributions = next.contributions;
            r.new_assessment = std::move(next);
            break;
        }
        case IntentKind::Confidence: {
            const double margin = cur.probability - cur.threshold;
            r.text = "Probability " + fixed3(cur.probability) + " is " + fixed3(std::abs(margin)) +
                     (margin >= 0 ? " above" : " below") + " the decision threshold " + fixed3(cur.threshold) + " (" +
                     std::string(to_string(cur.label)) + ").";
            break;
        }
    }
    return r;
}

}  // namespace cadx::explain
