#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/features.hpp"
#include "cadx/risk/model.hpp"

namespace cadx::explain {

/// Signed logit contribution of one feature: weight × standardized value,
/// i.e. the feature's push away from the average training case.
struct Contribution {
    std::string feature;
    double value = 0.0;
    /// 1-based, by |value| descending; ties by feature name.
    int rank = 0;
    bool operator==(const Contribution&) const = default;
};

inline void to_json(nlohmann::json& j, const Contribution& c) {
    j = {{"feature", c.feature}, {"value", c.value}, {"rank", c.rank}};
}

inline void from_json(const nlohmann::json& j, Contribution& c) {
    c.feature = j.at("feature").get<std::string>();
    c.value = j.at("value").get<double>();
    c.rank = j.at("rank").get<int>();
}

/// One contribution per model feature, sorted by rank. The values sum to
/// model.logit(fv) - model.bias.
inline std::vector<Contribution> feature_contributions(const risk::RiskModel& model, const FeatureVector& fv) {
    const auto z = model.standardize(fv);
    std::vector<Contribution> out;
    out.reserve(kFeatureCount);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        out.push_back({std::string(kFeatureNames[i]), model.weights[i] * z[i], 0});
    }
    std::sort(out.begin(), out.end(), [](const Contribution& a, const Contribution& b) {
        const double ma = std::abs(a.value), mb = std::abs(b.value);
        if (ma != mb) return ma > mb;
        return a.feature < b.feature;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i + 1);
    return out;
}

}  // namespace cadx::explain
