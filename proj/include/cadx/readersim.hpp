#pragma once

// Monte-Carlo reader study: unaided readers, readers who adopt the model's
// label on disagreement with some probability, and the model alone, all
// scored on the same cases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/features.hpp"
#include "cadx/ingest.hpp"
#include "cadx/risk/assess.hpp"
#include "cadx/stats.hpp"

namespace cadx::readersim {

enum class Seniority { junior, senior };

constexpr std::string_view to_string(Seniority s) { return s == Seniority::senior ? "senior" : "junior"; }

struct Rates {
    double sensitivity = 0.0;
    double specificity = 0.0;
    bool operator==(const Rates&) const = default;
};

struct ReaderProfile {
    std::string name;
    Seniority seniority = Seniority::junior;
    double sensitivity = 0.0;
    double specificity = 0.0;
    /// P(adopt the model's label | disagreement).
    double adoption_prob = 0.0;
    /// Per-direction overrides, keyed by the label the model proposes.
    std::optional<double> adoption_to_malignant;
    std::optional<double> adoption_to_benign;
    /// Phi correlation between reader and model correctness within a class.
    double error_correlation = 0.0;
    /// Phi correlation between adopting and the model being right, among
    /// disagreements of one class. Needs the symmetric adoption_prob.
    double discernment = 0.0;
    /// Published aided rates to compare against, if any.
    std::optional<Rates> target;

    [[nodiscard]] double adoption_for(Label model_label) const {
        if (model_label == Label::malignant && adoption_to_malignant) return *adoption_to_malignant;
        if (model_label == Label::benign && adoption_to_benign) return *adoption_to_benign;
        return adoption_prob;
    }

    void validate() const {
        auto prob = [&](double v, const char* what) {
            if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::InvalidArgument, name + ": " + what + " must be in [0,1]");
        };
        prob(sensitivity, "sensitivity");
        prob(specificity, "specificity");
        prob(adoption_prob, "adoption_prob");
        if (adoption_to_malignant) prob(*adoption_to_malignant, "adoption_to_malignant");
        if (adoption_to_benign) prob(*adoption_to_benign, "adoption_to_benign");
        if (!(error_correlation >= -1.0 && error_correlation <= 1.0)) {
            fail(ErrorCode::InvalidArgument, name + ": error_correlation must be in [-1,1]");
        }
        if (!(discernment >= -1.0 && discernment <= 1.0)) fail(ErrorCode::InvalidArgument, name + ": discernment must be in [-1,1]");
        if (discernment != 0.0 && (adoption_to_malignant || adoption_to_benign)) {
            fail(ErrorCode::InvalidArgument, name + ": discernment cannot be combined with per-class adoption");
        }
    }
};

namespace detail {

/// Independent stream per (seed, stream, purpose).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

/// P(B | A) and P(B | not A) for binary events with marginals b, a and phi
/// correlation rho. Fails when the implied conditionals leave [0,1].
inline std::pair<double, double> conditional_on(double b, double a, double rho, const std::string& who) {
    if (rho == 0.0 || a <= 0.0 || a >= 1.0 || b <= 0.0 || b >= 1.0) return {b, b};
    const double given = b + rho * std::sqrt(b * (1 - b) * (1 - a) / a);
    const double not_given = b - rho * std::sqrt(b * (1 - b) * a / (1 - a));
    constexpr double eps = 1e-12;
    if (given < -eps || given > 1 + eps || not_given < -eps || not_given > 1 + eps) {
        fail(ErrorCode::InfeasibleParameters, who + ": correlation " + std::to_string(rho) + " is infeasible for rates " +
                                                  std::to_string(b) + " and " + std::to_string(a));
    }
    return {std::clamp(given, 0.0, 1.0), std::clamp(not_given, 0.0, 1.0)};
}

inline Label flip(Label l) { return l == Label::malignant ? Label::benign : Label::malignant; }

}  // namespace detail

inline std::vector<Label> truth_of(const ingest::CaseSet& cs) {
    std::vector<Label> t;
    t.reserve(cs.size());
    for (const auto& c : cs.cases) {
        if (!c.pathology) fail(ErrorCode::MissingPathology, "case '" + c.case_id + "' has no pathology", 0, c.case_id);
        t.push_back(*c.pathology);
    }
    return t;
}

/// Reader calls: correct with probability sensitivity on malignant cases
/// and specificity on benign ones, one uniform draw per case. With a
/// nonzero error_correlation the draw is conditioned on whether `model`
/// got the case right, keeping the marginal rates.
inline std::vector<Label> simulate_reader(const ReaderProfile& p, std::span<const Label> truth, std::uint64_t seed,
                                          std::span<const Label> model = {}, std::uint64_t stream_index = 0) {
    p.validate();
    const bool correlated = p.error_correlation != 0.0;
    if (correlated && model.size() != truth.size()) {
        fail(ErrorCode::LengthMismatch, p.name + ": correlated readers need one model call per case");
    }
    // per-class conditional rates given model correct / wrong
    std::pair<double, double> cond[2] = {{p.specificity, p.specificity}, {p.sensitivity, p.sensitivity}};
    if (correlated) {
        for (int cls = 0; cls < 2; ++cls) {
            std::size_t n = 0, right = 0;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                if (static_cast<int>(truth[i]) != cls) continue;
                ++n;
                right += model[i] == truth[i];
            }
            const double m = n ? static_cast<double>(right) / static_cast<double>(n) : 0.0;
            const double r = cls ? p.sensitivity : p.specificity;
            cond[cls] = detail::conditional_on(r, m, p.error_correlation, p.name);
        }
    }
    auto rng = detail::stream(seed, stream_index, 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Label> out(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int cls = static_cast<int>(truth[i]);
        double rate = cls ? p.sensitivity : p.specificity;
        if (correlated) rate = model[i] == truth[i] ? cond[cls].first : cond[cls].second;
        out[i] = u(rng) < rate ? truth[i] : detail::flip(truth[i]);
    }
    return out;
}

inline std::vector<Label> simulate_reader(const ReaderProfile& p, const ingest::CaseSet& cases, std::uint64_t seed) {
    const auto t = truth_of(cases);
    return simulate_reader(p, t, seed);
}

/// Aided calls. Agreement keeps the reader's label; on disagreement the
/// model's label is adopted with the profile's adoption probability (or,
/// with discernment, a probability that depends on whether the model is
/// right, which needs `truth`). One uniform draw per case.
inline std::vector<Label> apply_adoption(std::span<const Label> reader, std::span<const Label> model, const ReaderProfile& p,
                                         std::uint64_t seed, std::span<const Label> truth = {},
                                         std::uint64_t stream_index = 0) {
    p.validate();
    if (reader.size() != model.size()) fail(ErrorCode::LengthMismatch, "reader and model judgments differ in length");

    // adoption probability when the model is right / wrong, per class
    std::pair<double, double> discern[2] = {{p.adoption_prob, p.adoption_prob}, {p.adoption_prob, p.adoption_prob}};
    const bool discerning = p.discernment != 0.0;
    if (discerning) {
        if (truth.size() != reader.size()) fail(ErrorCode::LengthMismatch, p.name + ": discernment needs the true labels");
        for (int cls = 0; cls < 2; ++cls) {
            std::size_t disagree = 0, model_right = 0;
            for (std::size_t i = 0; i < reader.size(); ++i) {
                if (static_cast<int>(truth[i]) != cls || reader[i] == model[i]) continue;
                ++disagree;
                model_right += model[i] == truth[i];
            }
            const double pi = disagree ? static_cast<double>(model_right) / static_cast<double>(disagree) : 0.0;
            discern[cls] = detail::conditional_on(p.adoption_prob, pi, p.discernment, p.name);
        }
    }

    auto rng = detail::stream(seed, stream_index, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Label> out(reader.size());
    for (std::size_t i = 0; i < reader.size(); ++i) {
        const double draw = u(rng);
        if (reader[i] == model[i]) {
            out[i] = reader[i];
            continue;
        }
        double q = p.adoption_for(model[i]);
        if (discerning) {
            const int cls = static_cast<int>(truth[i]);
            q = model[i] == truth[i] ? discern[cls].first : discern[cls].second;
        }
        out[i] = draw < q ? model[i] : reader[i];
    }
    return out;
}

/// Closed-form expected aided rate for one class under independent errors
/// and constant adoption: r + p (m - r).
constexpr double expected_aided_rate(double r, double m, double p) { return r + p * (m - r); }

// ---------------------------------------------------------------------------
// Gap analysis: what it would take to reach a published aided rate.

struct GapAnalysis {
    std::string profile;
    std::string metric;  // "sensitivity" or "specificity"
    double reader = 0.0;
    double model = 0.0;
    double target = 0.0;
    /// Adoption probability the closed form needs; outside [0,1] means the
    /// target is out of reach with independent adoption.
    double p_required = 0.0;
    bool attainable_independent = false;
    /// Highest aided rate any adoption policy can reach: r + (1-r) m.
    double max_reachable = 0.0;
    /// Smallest adoption-vs-model-correctness correlation that reaches the
    /// target, with the adoption probabilities that realize it.
    std::optional<double> kappa_min;
    double alpha = 0.0;  // P(adopt | model right)
    double beta = 0.0;   // P(adopt | model wrong)
    double adoption_prob = 0.0;
};

inline void to_json(nlohmann::json& j, const GapAnalysis& g) {
    j = {{"profile", g.profile},
         {"metric", g.metric},
         {"reader", g.reader},
         {"model", g.model},
         {"target", g.target},
         {"p_required", std::isfinite(g.p_required) ? nlohmann::json(g.p_required) : nlohmann::json(nullptr)},
         {"attainable_independent", g.attainable_independent},
         {"max_reachable", g.max_reachable},
         {"kappa_min", g.kappa_min ? nlohmann::json(*g.kappa_min) : nlohmann::json(nullptr)},
         {"alpha", g.alpha},
         {"beta", g.beta},
         {"adoption_prob", g.adoption_prob}};
}

/// For one class with reader rate r, model rate m and independent errors,
/// disagreements where the model is right occur at D1 = (1-r) m and where it
/// is wrong at D2 = r (1-m). Adopting with probability alpha / beta in those
/// two cases gives aided = r + alpha D1 - beta D2. Among reachable
/// (alpha, beta) this finds the one with the smallest phi correlation
/// between adopting and the model being right.
inline GapAnalysis analyze_gap(std::string profile, std::string metric, double r, double m, double t) {
    GapAnalysis g;
    g.profile = std::move(profile);
    g.metric = std::move(metric);
    g.reader = r;
    g.model = m;
    g.target = t;
    const double need = t - r;
    g.p_required = m != r ? need / (m - r) : (need == 0.0 ? 0.0 : INFINITY);
    g.attainable_independent = std::isfinite(g.p_required) && g.p_required >= 0.0 && g.p_required <= 1.0;
    const double d1 = (1 - r) * m, d2 = r * (1 - m);
    g.max_reachable = r + d1;
    if (d1 + d2 <= 0.0) return g;
    const double pi = d1 / (d1 + d2);

    auto beta_of = [&](double a) { return d2 > 0 ? (a * d1 - need) / d2 : 0.0; };
    auto feasible = [&](double a) {
        if (d2 <= 0) return std::abs(a * d1 - need) < 1e-12;
        const double b = beta_of(a);
        return b >= -1e-12 && b <= 1 + 1e-12;
    };
    auto kappa = [&](double a) {
        const double b = std::clamp(beta_of(a), 0.0, 1.0);
        const double p = pi * a + (1 - pi) * b;
        if (p <= 0.0 || p >= 1.0) return a == b ? 0.0 : std::copysign(1.0, a - b);
        return (a - b) * std::sqrt(pi * (1 - pi) / (p * (1 - p)));
    };

    constexpr int kSteps = 200000;
    std::optional<double> best_a;
    double best_k = INFINITY;
    for (int i = 0; i <= kSteps; ++i) {
        const double a = static_cast<double>(i) / kSteps;
        if (!feasible(a)) continue;
        const double k = kappa(a);
        if (k < best_k) {
            best_k = k;
            best_a = a;
        }
    }
    if (!best_a) return g;
    // refine around the grid minimum
    double lo = std::max(0.0, *best_a - 1.0 / kSteps), hi = std::min(1.0, *best_a + 1.0 / kSteps);
    for (int it = 0; it < 100; ++it) {
        const double a1 = lo + (hi - lo) / 3, a2 = hi - (hi - lo) / 3;
        const double k1 = feasible(a1) ? kappa(a1) : INFINITY, k2 = feasible(a2) ? kappa(a2) : INFINITY;
        (k1 < k2 ? hi : lo) = k1 < k2 ? a2 : a1;
    }
    const double a = (lo + hi) / 2;
    if (feasible(a) && kappa(a) < best_k) {
        best_a = a;
        best_k = kappa(a);
    }
    g.alpha = *best_a;
    g.beta = std::clamp(beta_of(*best_a), 0.0, 1.0);
    g.adoption_prob = pi * g.alpha + (1 - pi) * g.beta;
    g.kappa_min = best_k;
    return g;
}

// ---------------------------------------------------------------------------
// Study

struct StudyConfig {
    std::string name = "study";
    std::vector<ReaderProfile> profiles;
    /// Published model rates for the gap analysis; the measured model
    /// rates are used when absent.
    std::optional<Rates> reference_model;
    double level = 0.95;

    /// Keys: study.name, reader.<name>.{seniority, sensitivity, specificity,
    /// adoption_prob, adoption_to_malignant, adoption_to_benign,
    /// error_correlation, discernment, target_sensitivity,
    /// target_specificity}, reference_model.{sensitivity, specificity}.
    static StudyConfig from(const Config& cfg) {
        StudyConfig s;
        s.name = cfg.get_or("study.name", s.name);
        std::vector<std::string> order;
        for (const auto& [key, value] : cfg.with_prefix("reader.")) {
            const auto dot = key.find('.');
            if (dot == std::string::npos) fail(ErrorCode::BadConfig, "reader key 'reader." + key + "' lacks a field");
            const auto name = key.substr(0, dot);
            if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
        }
        for (const auto& name : order) {
            const std::string k = "reader." + name + ".";
            ReaderProfile p;
            p.name = name;
            const auto sen = cfg.get_or(k + "seniority", "junior");
            if (sen != "junior" && sen != "senior") fail(ErrorCode::BadConfig, k + "seniority must be junior or senior");
            p.seniority = sen == "senior" ? Seniority::senior : Seniority::junior;
            if (!cfg.contains(k + "sensitivity") || !cfg.contains(k + "specificity")) {
                fail(ErrorCode::BadConfig, "reader '" + name + "' needs sensitivity and specificity");
            }
            p.sensitivity = cfg.get_double(k + "sensitivity", 0.0);
            p.specificity = cfg.get_double(k + "specificity", 0.0);
            p.adoption_prob = cfg.get_double(k + "adoption_prob", 0.0);
            if (cfg.contains(k + "adoption_to_malignant")) p.adoption_to_malignant = cfg.get_double(k + "adoption_to_malignant", 0.0);
            if (cfg.contains(k + "adoption_to_benign")) p.adoption_to_benign = cfg.get_double(k + "adoption_to_benign", 0.0);
            p.error_correlation = cfg.get_double(k + "error_correlation", 0.0);
            p.discernment = cfg.get_double(k + "discernment", 0.0);
            if (cfg.contains(k + "target_sensitivity") || cfg.contains(k + "target_specificity")) {
                p.target = Rates{cfg.get_double(k + "target_sensitivity", p.sensitivity),
                                 cfg.get_double(k + "target_specificity", p.specificity)};
            }
            try {
                p.validate();
            } catch (const Error& e) {
                fail(ErrorCode::BadConfig, e.what());
            }
            s.profiles.push_back(std::move(p));
        }
        if (cfg.contains("reference_model.sensitivity") || cfg.contains("reference_model.specificity")) {
            s.reference_model = Rates{cfg.get_double("reference_model.sensitivity", 0.0),
                                      cfg.get_double("reference_model.specificity", 0.0)};
        }
        s.level = cfg.get_double("study.level", s.level);
        return s;
    }
};

struct DeltaRow {
    std::string profile;
    std::string metric;
    double unaided = 0.0;
    double aided = 0.0;
    /// aided - unaided.
    double delta = 0.0;
    std::string text;
};

inline void to_json(nlohmann::json& j, const DeltaRow& d) {
    j = {{"profile", d.profile}, {"metric", d.metric}, {"unaided", d.unaided},
         {"aided", d.aided},     {"delta", d.delta},   {"text", d.text}};
}

/// "+27.1% sensitivity (+18.9 pp)": relative change, then the absolute
/// change in percentage points.
inline std::string render_delta(std::string_view metric, double unaided, double aided) {
    char buf[128];
    const double pp = (aided - unaided) * 100.0;
    if (unaided > 0.0) {
        const double rel = (aided - unaided) / unaided * 100.0;
        std::snprintf(buf, sizeof buf, "%+.1f%% %.*s (%+.1f pp)", rel + 0.0, static_cast<int>(metric.size()), metric.data(),
                      pp + 0.0);
    } else {
        std::snprintf(buf, sizeof buf, "%+.1f pp %.*s", pp + 0.0, static_cast<int>(metric.size()), metric.data());
    }
    return buf;
}

struct ReaderArm {
    ReaderProfile profile;
    stats::MetricsReport unaided;
    stats::MetricsReport aided;
    std::vector<DeltaRow> deltas;
    std::vector<GapAnalysis> gaps;
};

struct StudyResult {
    std::string name;
    std::uint64_t seed = 0;
    std::size_t cases = 0;
    std::string model_version;
    stats::MetricsReport model;
    stats::RocAnalysis model_roc;
    std::vector<ReaderArm> arms;
    std::optional<Rates> reference_model;
    /// Inputs kept for reproducibility checks.
    std::vector<Label> truth;
    std::vector<double> model_scores;
};

namespace detail {

inline stats::MetricsReport metrics_of(std::span<const Label> calls, std::span<const Label> truth, double level) {
    std::vector<int> pred(calls.size()), t(truth.size());
    for (std::size_t i = 0; i < calls.size(); ++i) pred[i] = calls[i] == Label::malignant;
    for (std::size_t i = 0; i < truth.size(); ++i) t[i] = truth[i] == Label::malignant;
    return stats::classification_metrics(stats::confusion(pred, t), level);
}

}  // namespace detail

/// Scores every case with the model, simulates each profile unaided and
/// aided on the same cases, and reports metrics, deltas and gap analyses.
inline StudyResult evaluate_study(std::span<const Label> truth, std::span<const risk::Assessment> assessments,
                                  const StudyConfig& cfg, std::uint64_t seed) {
    if (truth.size() != assessments.size()) fail(ErrorCode::LengthMismatch, "one assessment per case is required");
    if (truth.empty()) fail(ErrorCode::EmptyStudy, "study has no cases");

    StudyResult r;
    r.name = cfg.name;
    r.seed = seed;
    r.cases = truth.size();
    r.truth.assign(truth.begin(), truth.end());
    r.reference_model = cfg.reference_model;
    std::vector<Label> model_calls(truth.size());
    std::vector<int> labels01(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        model_calls[i] = assessments[i].label;
        r.model_scores.push_back(assessments[i].probability);
        labels01[i] = truth[i] == Label::malignant;
    }
    if (!assessments.empty()) r.model_version = assessments.front().model_version;
    r.model = detail::metrics_of(model_calls, truth, cfg.level);
    r.model_roc = stats::delong_ci(r.model_scores, labels01, cfg.level);

    const Rates model_rates = cfg.reference_model.value_or(Rates{r.model.sensitivity, r.model.specificity});
    for (std::size_t k = 0; k < cfg.profiles.size(); ++k) {
        const auto& p = cfg.profiles[k];
        const auto reader = simulate_reader(p, truth, seed, model_calls, k);
        const auto aided = apply_adoption(reader, model_calls, p, seed, truth, k);
        ReaderArm arm;
        arm.profile = p;
        arm.unaided = detail::metrics_of(reader, truth, cfg.level);
        arm.aided = detail::metrics_of(aided, truth, cfg.level);
        for (const auto& [metric, u, a] : {std::tuple{"sensitivity", arm.unaided.sensitivity, arm.aided.sensitivity},
                                          std::tuple{"specificity", arm.unaided.specificity, arm.aided.specificity},
                                          std::tuple{"accuracy", arm.unaided.accuracy, arm.aided.accuracy}}) {
            arm.deltas.push_back({p.name, metric, u, a, a - u, render_delta(metric, u, a)});
        }
        if (p.target) {
            arm.gaps.push_back(analyze_gap(p.name, "sensitivity", p.sensitivity, model_rates.sensitivity, p.target->sensitivity));
            arm.gaps.push_back(analyze_gap(p.name, "specificity", p.specificity, model_rates.specificity, p.target->specificity));
        }
        r.arms.push_back(std::move(arm));
    }
    return r;
}

/// Convenience overload: assesses each case (features stored or extracted).
inline StudyResult evaluate_study(const ingest::CaseSet& cases, const StudyConfig& cfg, const risk::RiskModel& model,
                                  const risk::ScoreTable& table, std::uint64_t seed, const imaging::FeatureConfig& fcfg = {}) {
    if (cases.cases.empty()) fail(ErrorCode::EmptyStudy, "study has no cases");
    const auto truth = truth_of(cases);
    std::vector<risk::Assessment> as;
    as.reserve(cases.size());
    for (const auto& c : cases.cases) as.push_back(risk::predict_risk(model, ingest::case_features(c, cases.base_dir, fcfg), table));
    return evaluate_study(truth, as, cfg, seed);
}

}  // namespace cadx::readersim
