#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cadx/cadx.hpp"

namespace cadx::testkit {

/// Filled disk of radius r (pixel centres within r of the centre).
inline imaging::Mask disk_mask(int w, int h, double cx, double cy, double r) {
    imaging::Mask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1;
        }
    }
    return m;
}

inline imaging::Mask rect_mask(int w, int h, int x0, int y0, int rw, int rh) {
    imaging::Mask m(w, h);
    for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) m.at(x, y) = 1;
    }
    return m;
}

/// Model with unit standardization, zero mean and the given weights.
inline risk::RiskModel plain_model(FeatureArray weights, double bias = 0.0, double lambda = 1.0) {
    risk::RiskModel m;
    m.weights = weights;
    m.bias = bias;
    m.fusion_lambda = lambda;
    m.version = "test-model";
    return m;
}

inline risk::RiskModel weight_on(Feature f, double w, double bias = 0.0, double lambda = 1.0) {
    FeatureArray a{};
    a[static_cast<std::size_t>(f)] = w;
    return plain_model(a, bias, lambda);
}

/// A model with a little weight on every feature, for session tests.
inline risk::RiskModel demo_model() {
    return plain_model({0.4, 0.8, -3.0, 25.0, 2.0, -2.0, 0.05}, 0.5, 0.7);
}

/// Pairwise-comparison AUC, ties counted one half. O(n*m); used as oracle.
inline double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct Binormal {
    std::vector<double> scores;
    std::vector<int> labels;
};

/// Negatives ~ N(0,1), positives ~ N(shift,1); true AUC = Phi(shift / sqrt 2).
inline Binormal binormal(std::size_t negatives, std::size_t positives, double shift, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Binormal b;
    for (std::size_t i = 0; i < negatives; ++i) {
        b.scores.push_back(n01(rng));
        b.labels.push_back(0);
    }
    for (std::size_t i = 0; i < positives; ++i) {
        b.scores.push_back(shift + n01(rng));
        b.labels.push_back(1);
    }
    return b;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Shift giving true binormal AUC `a`: sqrt(2) * Phi^-1(a), by bisection.
inline double shift_for_auc(double a) {
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid / std::sqrt(2.0)) < a ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Percentile bootstrap CI of the AUC, resampling within each class.
inline stats::Interval bootstrap_ci(const Binormal& b, int replicates, double level, std::uint64_t seed) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < b.scores.size(); ++i) (b.labels[i] ? pos : neg).push_back(b.scores[i]);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1), pick_neg(0, neg.size() - 1);
    std::vector<double> aucs;
    std::vector<double> s;
    std::vector<int> l;
    for (int r = 0; r < replicates; ++r) {
        s.clear();
        l.clear();
        for (std::size_t i = 0; i < pos.size(); ++i) {
            s.push_back(pos[pick_pos(rng)]);
            l.push_back(1);
        }
        for (std::size_t i = 0; i < neg.size(); ++i) {
            s.push_back(neg[pick_neg(rng)]);
            l.push_back(0);
        }
        aucs.push_back(stats::auc(s, l));
    }
    std::sort(aucs.begin(), aucs.end());
    const double tail = (1.0 - level) / 2.0;
    auto quantile = [&](double q) {
        const double h = (aucs.size() - 1) * q;
        const auto i = static_cast<std::size_t>(std::floor(h));
        const double frac = h - i;
        return i + 1 < aucs.size() ? aucs[i] + frac * (aucs[i + 1] - aucs[i]) : aucs[i];
    };
    return {quantile(tail), quantile(1.0 - tail)};
}

/// Random standardized design for gradient checks.
inline risk::LogisticObjective random_objective(std::mt19937_64& rng, std::size_t rows, double l2) {
    std::normal_distribution<double> n01;
    std::bernoulli_distribution coin(0.4);
    std::vector<FeatureArray> z(rows);
    std::vector<double> y(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        for (auto& v : z[i]) v = n01(rng);
        y[i] = coin(rng) ? 1.0 : 0.0;
    }
    return risk::LogisticObjective(std::move(z), std::move(y), l2);
}

/// Largest relative error between the analytic gradient and a central
/// difference at `p`.
inline double gradient_rel_error(const risk::LogisticObjective& obj, const risk::LogisticParams& p) {
    const auto g = obj.gradient(p);
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(p[k]));
        auto up = p, down = p;
        up[k] += h;
        down[k] -= h;
        const double fd = (obj.loss(up) - obj.loss(down)) / (2 * h);
        const double err = std::abs(fd - g[k]) / std::max({std::abs(fd), std::abs(g[k]), 1e-8});
        worst = std::max(worst, err);
    }
    return worst;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("cadx-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::int64_t ts(int i) { return 1'700'000'000'000LL + i; }

inline FeatureVector random_features(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FeatureVector fv;
    fv[Feature::aspect_ratio] = 0.6 + 0.8 * u(rng);
    fv[Feature::taller_than_wide] = fv[Feature::aspect_ratio] > 1.0 ? 1.0 : 0.0;
    fv[Feature::echogenicity_ratio] = 0.4 + 0.8 * u(rng);
    fv[Feature::calcification_fraction] = 0.04 * u(rng);
    fv[Feature::margin_irregularity] = 1.0 + 0.6 * u(rng);
    fv[Feature::cystic_fraction] = 0.5 * u(rng) * u(rng);
    fv[Feature::size_mm] = 3 + 30 * u(rng);
    return fv;
}

/// Drives random review sessions one operation at a time, so that many
/// sessions can be interleaved in one event log.
class LifecycleDriver {
public:
    LifecycleDriver() : model_(demo_model()), table_(risk::default_score_table()), synonyms_(explain::SynonymTable::defaults()) {}

    struct Live {
        arbitration::ReviewSession session;
        int turns_left = 0;
        bool will_finalize = true;
    };

    Live open(const std::string& id, std::mt19937_64& rng) {
        Live l;
        const auto a = risk::predict_risk(model_, random_features(rng), table_);
        l.session = arbitration::open_session(id, "case-" + id, physician_, a, next_ts());
        l.turns_left = static_cast<int>(rng() % 4);
        l.will_finalize = rng() % 5 != 0;
        return l;
    }

    /// Performs the next operation; false once the session is finished.
    bool step(Live& l, std::mt19937_64& rng) {
        using arbitration::SessionState;
        auto& s = l.session;
        switch (s.state()) {
            case SessionState::AwaitingInitial: {
                const bool agree = rng() % 2 == 0;
                const auto model_label = model_label_of(s);
                arbitration::submit_initial(s, {agree ? model_label : flip(model_label), arbitration::Author::physician(physician_), next_ts()});
                return s.state() != SessionState::Finalized;
            }
            case SessionState::Interrogation: {
                if (l.turns_left > 0) {
                    --l.turns_left;
                    static const char* queries[] = {"why", "confidence", "show heatmap", "recalculate ignoring the cystic area",
                                                    "recalculate ignoring margins, size", "what if size = 20", "no idea"};
                    const char* q = queries[rng() % std::size(queries)];
                    try {
                        arbitration::interrogate(s, q, {model_, table_, synonyms_, nullptr}, next_ts());
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::UnrecognizedQuery) throw;
                    }
                    return true;
                }
                if (!l.will_finalize) return false;
                const Label label = rng() % 2 ? Label::malignant : Label::benign;
                try {
                    arbitration::finalize(s, {label, arbitration::Author::physician(physician_), next_ts()});
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::MustInterrogate) throw;
                    // ask once, then finalize
                    arbitration::interrogate(s, "why", {model_, table_, synonyms_, nullptr}, next_ts());
                    return true;
                }
                return false;
            }
            case SessionState::Finalized: return false;
        }
        return false;
    }

private:
    static Label flip(Label l) { return l == Label::malignant ? Label::benign : Label::malignant; }
    // the driver knows the label it scored; sessions keep it blinded
    static Label model_label_of(const arbitration::ReviewSession& s) {
        return s.history().front().payload.at("assessment").at("label").get<Label>();
    }
    std::int64_t next_ts() { return ts(++clock_); }

    risk::RiskModel model_;
    risk::ScoreTable table_;
    explain::SynonymTable synonyms_;
    std::string physician_ = "dr-a";
    int clock_ = 0;
};

}  // namespace cadx::testkit
