#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/features.hpp"

namespace cadx::risk {

inline constexpr std::string_view kModelFormat = "cadx-risk-model";
inline constexpr int kModelFormatVersion = 1;

/// Fused risk model: a logistic regression over standardized features,
/// blended with the guideline score as
///   p = fusion_lambda * p_logistic + (1 - fusion_lambda) * p_guideline.
/// Immutable after training.
struct RiskModel {
    FeatureArray weights{};
    double bias = 0.0;
    /// Training-set feature means; doubles as the exclusion baseline.
    FeatureArray mean{};
    /// Training-set standard deviations (1 where a feature was constant).
    FeatureArray scale = filled(1.0);
    double fusion_lambda = 0.7;
    double decision_threshold = 0.5;
    std::string version = "untrained";

    static constexpr FeatureArray filled(double v) {
        FeatureArray a{};
        for (auto& x : a) x = v;
        return a;
    }

    [[nodiscard]] FeatureVector baseline() const { return FeatureVector{mean, false}; }

    [[nodiscard]] FeatureArray standardize(const FeatureVector& fv) const {
        FeatureArray z{};
        for (std::size_t i = 0; i < kFeatureCount; ++i) z[i] = (fv.values[i] - mean[i]) / scale[i];
        return z;
    }

    [[nodiscard]] double logit(const FeatureVector& fv) const {
        const auto z = standardize(fv);
        double eta = bias;
        for (std::size_t i = 0; i < kFeatureCount; ++i) eta += weights[i] * z[i];
        return eta;
    }

    void validate() const {
        if (!(fusion_lambda >= 0.0 && fusion_lambda <= 1.0)) fail(ErrorCode::InvalidArgument, "fusion_lambda must be in [0,1]");
        if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) {
            fail(ErrorCode::InvalidArgument, "decision_threshold must be in [0,1]");
        }
        for (double s : scale) {
            if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorCode::InvalidArgument, "standardization scale must be positive");
        }
    }

    bool operator==(const RiskModel&) const = default;
};

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit_of(double p) { return std::log(p / (1.0 - p)); }

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline void to_json(nlohmann::json& j, const RiskModel& m) {
    auto arr = [](const FeatureArray& a) { return std::vector<double>(a.begin(), a.end()); };
    std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
    j = {{"format", kModelFormat},
         {"format_version", kModelFormatVersion},
         {"model_version", m.version},
         {"features", names},
         {"weights", arr(m.weights)},
         {"bias", m.bias},
         {"mean", arr(m.mean)},
         {"scale", arr(m.scale)},
         {"fusion_lambda", m.fusion_lambda},
         {"decision_threshold", m.decision_threshold}};
}

inline void from_json(const nlohmann::json& j, RiskModel& m) {
    if (j.value("format", std::string{}) != kModelFormat) fail(ErrorCode::BadConfig, "not a risk model file");
    if (j.value("format_version", 0) != kModelFormatVersion) {
        fail(ErrorCode::BadConfig, "unsupported model format_version " + std::to_string(j.value("format_version", 0)));
    }
    const auto names = j.at("features").get<std::vector<std::string>>();
    if (names.size() != kFeatureCount) fail(ErrorCode::FeatureDimensionMismatch, "model feature count differs");
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (names[i] != kFeatureNames[i]) fail(ErrorCode::FeatureDimensionMismatch, "model feature order differs at " + names[i]);
    }
    auto arr = [&](const char* key) {
        const auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != kFeatureCount) fail(ErrorCode::FeatureDimensionMismatch, std::string(key) + " has wrong length");
        FeatureArray a{};
        std::copy(v.begin(), v.end(), a.begin());
        return a;
    };
    m.version = j.at("model_version").get<std::string>();
    m.weights = arr("weights");
    m.bias = j.at("bias").get<double>();
    m.mean = arr("mean");
    m.scale = arr("scale");
    m.fusion_lambda = j.at("fusion_lambda").get<double>();
    m.decision_threshold = j.at("decision_threshold").get<double>();
    m.validate();
}

inline void save_model(const RiskModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << nlohmann::json(m).dump(2) << '\n';
}

inline RiskModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::FileNotFound, "cannot open model " + path.string());
    try {
        return nlohmann::json::parse(in).get<RiskModel>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadConfig, "model " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training

struct TrainParams {
    double learning_rate = 0.5;
    int iterations = 500;
    double l2 = 1e-3;
    double fusion_lambda = 0.7;
    double decision_threshold = 0.5;
    std::string version = "logistic-v1";

    static TrainParams from(const Config& cfg) {
        TrainParams p;
        p.learning_rate = cfg.get_double("train.learning_rate", p.learning_rate);
        p.iterations = static_cast<int>(cfg.get_int("train.iterations", p.iterations));
        p.l2 = cfg.get_double("train.l2", p.l2);
        p.fusion_lambda = cfg.get_double("fusion_lambda", p.fusion_lambda);
        p.decision_threshold = cfg.get_double("decision_threshold", p.decision_threshold);
        p.version = cfg.get_or("model_version", p.version);
        return p;
    }
};

struct LabeledFeatures {
    FeatureVector features;
    bool malignant = false;
};

/// Weights followed by the bias.
using LogisticParams = std::array<double, kFeatureCount + 1>;

/// Mean log-loss plus (l2/2)·|w|² over standardized rows; the bias is not
/// penalized.
class LogisticObjective {
public:
    LogisticObjective(std::vector<FeatureArray> rows, std::vector<double> targets, double l2)
        : rows_(std::move(rows)), targets_(std::move(targets)), l2_(l2) {
        if (rows_.size() != targets_.size()) fail(ErrorCode::LengthMismatch, "rows and targets differ in length");
        if (rows_.empty()) fail(ErrorCode::InvalidArgument, "objective needs at least one row");
    }

    [[nodiscard]] double loss(const LogisticParams& p) const {
        double total = 0.0;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const double eta = linear(p, rows_[i]);
            total += softplus(eta) - targets_[i] * eta;
        }
        double penalty = 0.0;
        for (std::size_t k = 0; k < kFeatureCount; ++k) penalty += p[k] * p[k];
        return total / static_cast<double>(rows_.size()) + 0.5 * l2_ * penalty;
    }

    [[nodiscard]] LogisticParams gradient(const LogisticParams& p) const {
        LogisticParams g{};
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const double r = sigmoid(linear(p, rows_[i])) - targets_[i];
            for (std::size_t k = 0; k < kFeatureCount; ++k) g[k] += r * rows_[i][k];
            g[kFeatureCount] += r;
        }
        const double n = static_cast<double>(rows_.size());
        for (std::size_t k = 0; k < kFeatureCount; ++k) g[k] = g[k] / n + l2_ * p[k];
        g[kFeatureCount] /= n;
        return g;
    }

    [[nodiscard]] std::size_t size() const { return rows_.size(); }

private:
    static double linear(const LogisticParams& p, const FeatureArray& z) {
        double eta = p[kFeatureCount];
        for (std::size_t k = 0; k < kFeatureCount; ++k) eta += p[k] * z[k];
        return eta;
    }

    std::vector<FeatureArray> rows_;
    std::vector<double> targets_;
    double l2_;
};

struct TrainResult {
    RiskModel model;
    /// Objective value before each gradient step (length = iterations).
    std::vector<double> loss_history;
};

/// Standardization constants from the training rows: means and population
/// standard deviations, with zero deviations replaced by 1.
inline std::pair<FeatureArray, FeatureArray> standardization(std::span<const LabeledFeatures> rows) {
    FeatureArray mean{}, sd{};
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) mean[k] += r.features.values[k];
    }
    for (auto& m : mean) m /= n;
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            const double d = r.features.values[k] - mean[k];
            sd[k] += d * d;
        }
    }
    for (auto& s : sd) {
        s = std::sqrt(s / n);
        if (!(s > 1e-12)) s = 1.0;
    }
    return {mean, sd};
}

/// Full-batch gradient descent from all-zero coefficients.
inline TrainResult train_logistic(std::span<const LabeledFeatures> rows, const TrainParams& params = {}) {
    std::size_t positives = 0;
    for (const auto& r : rows) positives += r.malignant ? 1 : 0;
    if (positives == 0 || positives == rows.size()) {
        fail(ErrorCode::SingleClassTrainingSet, "training set needs both benign and malignant cases");
    }
    if (params.iterations < 0 || !(params.learning_rate > 0.0) || params.l2 < 0.0) {
        fail(ErrorCode::InvalidArgument, "bad training hyperparameters");
    }

    TrainResult result;
    RiskModel& m = result.model;
    std::tie(m.mean, m.scale) = standardization(rows);
    m.fusion_lambda = params.fusion_lambda;
    m.decision_threshold = params.decision_threshold;
    m.version = params.version;
    m.validate();

    std::vector<FeatureArray> z;
    std::vector<double> y;
    z.reserve(rows.size());
    y.reserve(rows.size());
    for (const auto& r : rows) {
        z.push_back(m.standardize(r.features));
        y.push_back(r.malignant ? 1.0 : 0.0);
    }
    const LogisticObjective objective(std::move(z), std::move(y), params.l2);

    LogisticParams p{};
    result.loss_history.reserve(static_cast<std::size_t>(params.iterations));
    for (int it = 0; it < params.iterations; ++it) {
        const double loss = objective.loss(p);
        if (!std::isfinite(loss)) fail(ErrorCode::NonFiniteLoss, "loss became non-finite at iteration " + std::to_string(it));
        result.loss_history.push_back(loss);
        const auto g = objective.gradient(p);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= params.learning_rate * g[k];
    }
    std::copy_n(p.begin(), kFeatureCount, m.weights.begin());
    m.bias = p[kFeatureCount];
    return result;
}

}  // namespace cadx::risk
