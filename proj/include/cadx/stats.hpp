#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "cadx/error.hpp"

namespace cadx::stats {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    bool operator==(const RocPoint&) const = default;
};

inline void to_json(nlohmann::json& j, const RocPoint& p) { j = nlohmann::json::array({p.fpr, p.tpr}); }

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Interval&) const = default;
};

inline void to_json(nlohmann::json& j, const Interval& i) { j = nlohmann::json::array({i.lo, i.hi}); }

struct RocAnalysis {
    std::vector<RocPoint> points;
    double auc = 0.0;
    double variance = 0.0;
    Interval ci;
    double level = 0.95;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

inline void to_json(nlohmann::json& j, const RocAnalysis& r) {
    j = {{"points", r.points}, {"auc", r.auc},         {"variance", r.variance}, {"ci", r.ci},
         {"level", r.level},   {"positives", r.positives}, {"negatives", r.negatives}};
}

/// Two-sided standard normal multiplier; z(0.95) = 1.959964.
inline double z_for_level(double level) {
    if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidArgument, "confidence level must be in (0,1)");
    return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
}

inline double normal_two_sided_p(double z) {
    if (std::isinf(z)) return 0.0;
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

namespace detail {

struct Classes {
    std::vector<double> pos, neg;
};

inline Classes by_class(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        fail(ErrorCode::LengthMismatch, std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
    }
    Classes c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) fail(ErrorCode::InvalidArgument, "labels must be 0 or 1");
        if (std::isnan(scores[i])) fail(ErrorCode::InvalidArgument, "scores must not be NaN");
        (labels[i] ? c.pos : c.neg).push_back(scores[i]);
    }
    if (c.pos.empty() || c.neg.empty()) fail(ErrorCode::DegenerateLabels, "both classes must be present");
    return c;
}

/// 2 × (number of elements of sorted `v` below x) + (number equal to x).
inline std::int64_t twice_rank_below(const std::vector<double>& sorted, double x) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
    const auto hi = std::upper_bound(lo, sorted.end(), x);
    return 2 * (lo - sorted.begin()) + (hi - lo);
}

/// Per-case structural components (placement values), ties at 0.5.
struct Placements {
    std::vector<double> v10;  // per positive: share of negatives it outranks
    std::vector<double> v01;  // per negative: share of positives outranking it
    std::int64_t twice_u = 0;
};

inline Placements placements(const Classes& c) {
    std::vector<double> ps = c.pos, ns = c.neg;
    std::sort(ps.begin(), ps.end());
    std::sort(ns.begin(), ns.end());
    const double m = static_cast<double>(ps.size()), n = static_cast<double>(ns.size());
    Placements p;
    p.v10.reserve(c.pos.size());
    for (double x : c.pos) {
        const auto t = twice_rank_below(ns, x);
        p.twice_u += t;
        p.v10.push_back(static_cast<double>(t) / (2.0 * n));
    }
    p.v01.reserve(c.neg.size());
    for (double y : c.neg) {
        const auto below_or_eq = twice_rank_below(ps, y);
        p.v01.push_back(static_cast<double>(2 * static_cast<std::int64_t>(ps.size()) - below_or_eq) / (2.0 * m));
    }
    return p;
}

inline double sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / (n - 1.0);
}

}  // namespace detail

/// ROC operating points for thresholds swept over the distinct scores in
/// descending order, tied scores grouped. Starts at (0,0), ends at (1,1).
inline std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> labels) {
    const auto c = detail::by_class(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    const double m = static_cast<double>(c.pos.size()), n = static_cast<double>(c.neg.size());

    std::vector<RocPoint> pts{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
        pts.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / m});
    }
    return pts;
}

enum class AucMethod { trapezoid, mann_whitney };

/// Both methods accumulate the same integer numerator (twice the
/// Mann-Whitney U) so they agree exactly.
inline double auc(std::span<const double> scores, std::span<const int> labels, AucMethod method = AucMethod::mann_whitney) {
    const auto c = detail::by_class(scores, labels);
    const auto m = static_cast<std::int64_t>(c.pos.size()), n = static_cast<std::int64_t>(c.neg.size());
    std::int64_t twice_u = 0;
    if (method == AucMethod::mann_whitney) {
        twice_u = detail::placements(c).twice_u;
    } else {
        // trapezoids in count space: (fp_i - fp_{i-1}) * (tp_i + tp_{i-1}) / 2
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
        std::int64_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < order.size();) {
            const double s = scores[order[i]];
            const std::int64_t tp0 = tp, fp0 = fp;
            for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp) += 1;
            twice_u += (fp - fp0) * (tp + tp0);
        }
    }
    return static_cast<double>(twice_u) / (2.0 * static_cast<double>(m) * static_cast<double>(n));
}

/// AUC with DeLong variance and a normal CI clipped to [0,1].
inline RocAnalysis delong_ci(std::span<const double> scores, std::span<const int> labels, double level = 0.95) {
    const auto c = detail::by_class(scores, labels);
    if (c.pos.size() < 2 || c.neg.size() < 2) fail(ErrorCode::TooFewCases, "DeLong needs at least 2 cases per class");
    const double z = z_for_level(level);
    const auto p = detail::placements(c);
    const double m = static_cast<double>(c.pos.size()), n = static_cast<double>(c.neg.size());

    RocAnalysis r;
    r.points = roc_points(scores, labels);
    r.auc = static_cast<double>(p.twice_u) / (2.0 * m * n);
    r.variance = std::max(0.0, detail::sample_covariance(p.v10, p.v10) / m + detail::sample_covariance(p.v01, p.v01) / n);
    const double half = z * std::sqrt(r.variance);
    r.ci = {std::clamp(r.auc - half, 0.0, 1.0), std::clamp(r.auc + half, 0.0, 1.0)};
    r.level = level;
    r.positives = c.pos.size();
    r.negatives = c.neg.size();
    return r;
}

struct AucComparison {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double diff = 0.0;
    double stderr_diff = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
};

inline void to_json(nlohmann::json& j, const AucComparison& c) {
    j = {{"auc_a", c.auc_a}, {"auc_b", c.auc_b}, {"diff", c.diff}, {"stderr", c.stderr_diff}, {"z", c.z}, {"p", c.p_two_sided}};
}

/// DeLong test for two correlated AUCs on the same cases.
inline AucComparison delong_compare(std::span<const double> a, std::span<const double> b, std::span<const int> labels) {
    if (a.size() != b.size()) fail(ErrorCode::LengthMismatch, "score sets differ in length");
    const auto ca = detail::by_class(a, labels);
    const auto cb = detail::by_class(b, labels);
    if (ca.pos.size() < 2 || ca.neg.size() < 2) fail(ErrorCode::TooFewCases, "DeLong needs at least 2 cases per class");
    const auto pa = detail::placements(ca);
    const auto pb = detail::placements(cb);
    const double m = static_cast<double>(ca.pos.size()), n = static_cast<double>(ca.neg.size());
    using detail::sample_covariance;
    const double s_aa = sample_covariance(pa.v10, pa.v10) / m + sample_covariance(pa.v01, pa.v01) / n;
    const double s_bb = sample_covariance(pb.v10, pb.v10) / m + sample_covariance(pb.v01, pb.v01) / n;
    const double s_ab = sample_covariance(pa.v10, pb.v10) / m + sample_covariance(pa.v01, pb.v01) / n;

    AucComparison r;
    r.auc_a = static_cast<double>(pa.twice_u) / (2.0 * m * n);
    r.auc_b = static_cast<double>(pb.twice_u) / (2.0 * m * n);
    r.diff = r.auc_a - r.auc_b;
    const double var = std::max(0.0, s_aa + s_bb - 2.0 * s_ab);
    r.stderr_diff = std::sqrt(var);
    if (r.stderr_diff > 0.0) {
        r.z = r.diff / r.stderr_diff;
    } else {
        r.z = r.diff == 0.0 ? 0.0 : std::copysign(INFINITY, r.diff);
    }
    r.p_two_sided = normal_two_sided_p(r.z);
    return r;
}

// ---------------------------------------------------------------------------
// Confusion-matrix metrics

struct Counts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool operator==(const Counts&) const = default;
};

inline void to_json(nlohmann::json& j, const Counts& c) {
    j = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

struct MetricsReport {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double accuracy = 0.0;
    double fnr = 0.0;
    Counts counts;
    Interval sensitivity_ci, specificity_ci, accuracy_ci;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = {{"sensitivity", r.sensitivity},
         {"specificity", r.specificity},
         {"accuracy", r.accuracy},
         {"fnr", r.fnr},
         {"counts", r.counts},
         {"sensitivity_ci", r.sensitivity_ci},
         {"specificity_ci", r.specificity_ci},
         {"accuracy_ci", r.accuracy_ci}};
}

/// Wilson score interval for k successes out of n.
inline Interval wilson_interval(std::int64_t k, std::int64_t n, double level = 0.95) {
    if (n <= 0) fail(ErrorCode::ZeroDenominator, "Wilson interval needs n >= 1");
    const double z = z_for_level(level);
    const double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn, z2 = z * z;
    const double centre = (ph + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z / (1 + z2 / nn) * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn));
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline MetricsReport classification_metrics(const Counts& c, double level = 0.95) {
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) fail(ErrorCode::InvalidArgument, "counts must be non-negative");
    if (c.tp + c.fn < 1) fail(ErrorCode::ZeroDenominator, "no positive cases (TP + FN = 0)");
    if (c.tn + c.fp < 1) fail(ErrorCode::ZeroDenominator, "no negative cases (TN + FP = 0)");
    MetricsReport r;
    r.counts = c;
    const auto pos = c.tp + c.fn, neg = c.tn + c.fp, all = pos + neg;
    r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(pos);
    r.fnr = 1.0 - r.sensitivity;
    r.specificity = static_cast<double>(c.tn) / static_cast<double>(neg);
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(all);
    r.sensitivity_ci = wilson_interval(c.tp, pos, level);
    r.specificity_ci = wilson_interval(c.tn, neg, level);
    r.accuracy_ci = wilson_interval(c.tp + c.tn, all, level);
    return r;
}

/// Tallies binary predictions (1 = malignant) against truth.
inline Counts confusion(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) fail(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            (predicted[i] ? c.tp : c.fn) += 1;
        } else {
            (predicted[i] ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

}  // namespace cadx::stats
