#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"
#include "cadx/explain/contributions.hpp"
#include "cadx/features.hpp"
#include "cadx/imaging/extract.hpp"
#include "cadx/imaging/heatmap_grid.hpp"
#include "cadx/imaging/image.hpp"
#include "cadx/risk/model.hpp"
#include "cadx/risk/score_table.hpp"

namespace cadx::risk {

struct Assessment {
    double probability = 0.0;
    double p_logistic = 0.0;
    double p_guideline = 0.0;
    double threshold = 0.5;
    Label label = Label::benign;
    int guideline_points = 0;
    std::string guideline_category;
    std::vector<explain::Contribution> contributions;
    std::optional<imaging::Heatmap> heatmap;
    std::string model_version;
    /// The feature values actually scored (after any exclusion).
    FeatureVector features;
    bool reassessment = false;
    /// Excluded feature names and "cell(c,r)" regions, for reassessments.
    std::vector<std::string> excluded;

    bool operator==(const Assessment&) const = default;
};

inline void to_json(nlohmann::json& j, const Assessment& a) {
    j = {{"probability", a.probability},
         {"p_logistic", a.p_logistic},
         {"p_guideline", a.p_guideline},
         {"threshold", a.threshold},
         {"label", a.label},
         {"guideline_points", a.guideline_points},
         {"guideline_category", a.guideline_category},
         {"contributions", a.contributions},
         {"model_version", a.model_version},
         {"features", a.features},
         {"reassessment", a.reassessment},
         {"excluded", a.excluded}};
    if (a.heatmap) j["heatmap"] = *a.heatmap;
}

inline void from_json(const nlohmann::json& j, Assessment& a) {
    a.probability = j.at("probability").get<double>();
    a.p_logistic = j.at("p_logistic").get<double>();
    a.p_guideline = j.at("p_guideline").get<double>();
    a.threshold = j.at("threshold").get<double>();
    a.label = j.at("label").get<Label>();
    a.guideline_points = j.at("guideline_points").get<int>();
    a.guideline_category = j.at("guideline_category").get<std::string>();
    a.contributions = j.at("contributions").get<std::vector<explain::Contribution>>();
    a.model_version = j.at("model_version").get<std::string>();
    a.features = j.at("features").get<FeatureVector>();
    a.reassessment = j.at("reassessment").get<bool>();
    a.excluded = j.at("excluded").get<std::vector<std::string>>();
    a.heatmap.reset();
    if (j.contains("heatmap")) a.heatmap = j.at("heatmap").get<imaging::Heatmap>();
}

/// Fused malignancy assessment of one feature vector.
inline Assessment predict_risk(const RiskModel& model, const FeatureVector& fv, const ScoreTable& table) {
    for (double v : fv.values) {
        if (!std::isfinite(v)) fail(ErrorCode::FeatureDimensionMismatch, "feature vector has non-finite entries");
    }
    const auto g = score_guideline(fv, table);
    const int max_points = table.max_points();

    Assessment a;
    a.p_logistic = sigmoid(model.logit(fv));
    a.p_guideline = max_points > 0 ? static_cast<double>(g.points) / max_points : 0.0;
    a.probability = model.fusion_lambda * a.p_logistic + (1.0 - model.fusion_lambda) * a.p_guideline;
    a.threshold = model.decision_threshold;
    a.label = a.probability >= a.threshold ? Label::malignant : Label::benign;
    a.guideline_points = g.points;
    a.guideline_category = g.category;
    a.contributions = explain::feature_contributions(model, fv);
    a.model_version = model.version;
    a.features = fv;
    return a;
}

/// What a reassessment should ignore.
struct Exclusion {
    std::vector<std::string> features;
    std::vector<imaging::Cell> cells;

    [[nodiscard]] bool empty() const { return features.empty() && cells.empty(); }
    bool operator==(const Exclusion&) const = default;
};

inline std::string cell_name(const imaging::Cell& c) {
    return "cell(" + std::to_string(c.col) + "," + std::to_string(c.row) + ")";
}

/// Pixels and settings needed to recompute features with regions removed.
struct ImageContext {
    const imaging::Image* image = nullptr;
    const imaging::Mask* mask = nullptr;
    std::optional<double> mm_per_pixel;
    imaging::FeatureConfig feature_config;
    imaging::GridSize grid;
};

/// Re-runs predict_risk with the requested evidence removed: grid cells are
/// zero-weighted and the features re-extracted from the image, then each
/// excluded feature is replaced by its training mean. An empty exclusion
/// returns exactly predict_risk's result.
inline Assessment reassess(const RiskModel& model, const FeatureVector& fv, const Exclusion& exclusion,
                           const ScoreTable& table, const ImageContext* image = nullptr) {
    if (exclusion.empty()) return predict_risk(model, fv, table);

    std::vector<Feature> features;
    for (const auto& name : exclusion.features) features.push_back(require_feature(name));

    FeatureVector work = fv;
    if (!exclusion.cells.empty()) {
        if (!image || !image->image || !image->mask) {
            fail(ErrorCode::UnknownRegion, "region exclusion needs the case image and mask");
        }
        const auto& img = *image->image;
        imaging::Mask drop(img.width, img.height);
        for (const auto& cell : exclusion.cells) {
            if (cell.col < 0 || cell.row < 0 || cell.col >= image->grid.cols || cell.row >= image->grid.rows) {
                fail(ErrorCode::UnknownRegion, "no grid cell " + cell_name(cell), 0, cell_name(cell));
            }
            const auto [x0, x1] = imaging::cell_span(cell.col, image->grid.cols, img.width);
            const auto [y0, y1] = imaging::cell_span(cell.row, image->grid.rows, img.height);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) drop.at(x, y) = 1;
            }
        }
        work = imaging::extract_features(img, *image->mask, image->mm_per_pixel, image->feature_config, &drop);
    }
    for (Feature f : features) work[f] = model.mean[static_cast<std::size_t>(f)];

    Assessment a = predict_risk(model, work, table);
    a.reassessment = true;
    a.excluded = exclusion.features;
    for (const auto& c : exclusion.cells) a.excluded.push_back(cell_name(c));
    return a;
}

}  // namespace cadx::risk
