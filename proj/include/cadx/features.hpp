#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"

namespace cadx {

/// Structured nodule descriptors. The order here is the model's feature
/// order everywhere (weights, standardization constants, serialization).
enum class Feature : std::size_t {
    aspect_ratio,
    taller_than_wide,
    echogenicity_ratio,
    calcification_fraction,
    margin_irregularity,
    cystic_fraction,
    size_mm,
};

inline constexpr std::size_t kFeatureCount = 7;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "aspect_ratio",       "taller_than_wide", "echogenicity_ratio", "calcification_fraction",
    "margin_irregularity", "cystic_fraction", "size_mm",
};

constexpr std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<std::size_t>(f)]; }

inline std::optional<Feature> feature_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (kFeatureNames[i] == name) return static_cast<Feature>(i);
    }
    return std::nullopt;
}

inline Feature require_feature(std::string_view name) {
    if (auto f = feature_from_name(name)) return *f;
    fail(ErrorCode::UnknownFeature, "unknown feature '" + std::string(name) + "'", 0, std::string(name));
}

enum class Label { benign, malignant };

constexpr std::string_view to_string(Label l) { return l == Label::malignant ? "malignant" : "benign"; }

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "benign") return Label::benign;
    if (s == "malignant") return Label::malignant;
    return std::nullopt;
}

inline Label require_label(std::string_view s) {
    if (auto l = parse_label(s)) return *l;
    fail(ErrorCode::InvalidArgument, "label must be 'benign' or 'malignant', got '" + std::string(s) + "'");
}

inline void to_json(nlohmann::json& j, Label l) { j = std::string(to_string(l)); }
inline void from_json(const nlohmann::json& j, Label& l) { l = require_label(j.get<std::string>()); }

using FeatureArray = std::array<double, kFeatureCount>;

/// Feature vector in raw (unstandardized) units. Extracted vectors hold
/// 0/1 in `taller_than_wide`; vectors with features replaced by training
/// means may hold fractional values there.
struct FeatureVector {
    FeatureArray values{};
    /// Set when size_mm was computed with the default pixel spacing.
    bool nominal_size = false;

    double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
    double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }

    bool operator==(const FeatureVector&) const = default;
};

inline void to_json(nlohmann::json& j, const FeatureVector& fv) {
    j = nlohmann::json::object();
    for (std::size_t i = 0; i < kFeatureCount; ++i) j[std::string(kFeatureNames[i])] = fv.values[i];
    if (fv.nominal_size) j["nominal_size"] = true;
}

inline void from_json(const nlohmann::json& j, FeatureVector& fv) {
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "feature vector must be an object");
    fv = {};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const std::string key(kFeatureNames[i]);
        auto it = j.find(key);
        if (it == j.end()) fail(ErrorCode::FeatureDimensionMismatch, "feature vector lacks '" + key + "'");
        if (it->is_boolean()) {
            fv.values[i] = it->get<bool>() ? 1.0 : 0.0;
        } else if (it->is_number()) {
            fv.values[i] = it->get<double>();
        } else {
            fail(ErrorCode::InvalidArgument, "feature '" + key + "' must be numeric");
        }
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "nominal_size") continue;
        if (!feature_from_name(it.key())) {
            fail(ErrorCode::FeatureDimensionMismatch, "unexpected feature '" + it.key() + "'");
        }
    }
    fv.nominal_size = j.value("nominal_size", false);
}

}  // namespace cadx
