#include <gtest/gtest.h>

#include "support.hpp"

using namespace cadx;
using namespace cadx::readersim;

namespace {

constexpr Label kM = Label::malignant;
constexpr Label kB = Label::benign;

std::vector<Label> balanced(std::size_t n) {
    std::vector<Label> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = i % 2 ? kM : kB;
    return t;
}

ReaderProfile profile(double sens, double spec, double p = 0.0) {
    ReaderProfile r;
    r.name = "r";
    r.sensitivity = sens;
    r.specificity = spec;
    r.adoption_prob = p;
    return r;
}

double rate_on(std::span<const Label> calls, std::span<const Label> truth, Label cls) {
    std::size_t n = 0, right = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] != cls) continue;
        ++n;
        right += calls[i] == truth[i];
    }
    return static_cast<double>(right) / static_cast<double>(n);
}

/// Assessments with a fixed label per case, for studies that bypass the model.
std::vector<risk::Assessment> assessments_for(std::span<const Label> calls, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 0.5);
    std::vector<risk::Assessment> out(calls.size());
    for (std::size_t i = 0; i < calls.size(); ++i) {
        out[i].label = calls[i];
        out[i].probability = calls[i] == kM ? 0.5 + u(rng) : u(rng);
        out[i].threshold = 0.5;
        out[i].model_version = "fixed";
    }
    return out;
}

std::filesystem::path config_file(const char* name) { return std::filesystem::path(CADX_CONFIG_DIR) / name; }

}  // namespace

TEST(SimulateReader, PerfectReaderIsAlwaysRight) {
    const auto t = balanced(1000);
    EXPECT_EQ(simulate_reader(profile(1, 1), t, 5), t);
}

TEST(SimulateReader, JuniorSensitivityRecovered) {
    const auto t = balanced(10000);
    const auto calls = simulate_reader(profile(0.698, 0.672), t, 11);
    EXPECT_NEAR(rate_on(calls, t, kM), 0.698, 0.02);
    EXPECT_NEAR(rate_on(calls, t, kB), 0.672, 0.02);
}

TEST(SimulateReader, SeededAndStreamed) {
    const auto t = balanced(500);
    const auto p = profile(0.7, 0.7);
    EXPECT_EQ(simulate_reader(p, t, 3), simulate_reader(p, t, 3));
    EXPECT_NE(simulate_reader(p, t, 3), simulate_reader(p, t, 4));
    EXPECT_NE(simulate_reader(p, t, 3, {}, 0), simulate_reader(p, t, 3, {}, 1));
}

TEST(SimulateReader, MissingPathology) {
    ingest::CaseSet cs;
    cs.cases.resize(2);
    cs.cases[0].case_id = "a";
    cs.cases[0].pathology = kB;
    cs.cases[1].case_id = "b";
    try {
        simulate_reader(profile(0.7, 0.7), cs, 1);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingPathology);
    }
}

TEST(SimulateReader, ErrorCorrelationKeepsMarginals) {
    const auto t = balanced(200000);
    const auto model = simulate_reader(profile(0.86, 0.88), t, 1);
    auto p = profile(0.7, 0.67);
    p.error_correlation = 0.4;
    const auto calls = simulate_reader(p, t, 2, model);
    EXPECT_NEAR(rate_on(calls, t, kM), 0.7, 0.005);
    EXPECT_NEAR(rate_on(calls, t, kB), 0.67, 0.005);
    // phi between the two correctness indicators on malignant cases
    double n = 0, a = 0, b = 0, ab = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] != kM) continue;
        const double x = calls[i] == t[i], y = model[i] == t[i];
        n += 1, a += x, b += y, ab += x * y;
    }
    a /= n, b /= n, ab /= n;
    EXPECT_NEAR((ab - a * b) / std::sqrt(a * (1 - a) * b * (1 - b)), 0.4, 0.01);
}

TEST(SimulateReader, InfeasibleCorrelation) {
    const auto t = balanced(1000);
    const auto model = simulate_reader(profile(0.99, 0.99), t, 1);
    auto p = profile(0.3, 0.3);
    p.error_correlation = -0.9;
    try {
        simulate_reader(p, t, 2, model);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleParameters);
    }
}

TEST(ReaderProfile, Validation) {
    EXPECT_THROW(profile(1.2, 0.5).validate(), Error);
    EXPECT_THROW(profile(0.5, 0.5, -0.1).validate(), Error);
    auto p = profile(0.5, 0.5);
    p.discernment = 0.3;
    p.adoption_to_benign = 0.2;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Adoption, ZeroKeepsReader) {
    const auto t = balanced(2000);
    const auto reader = simulate_reader(profile(0.7, 0.7), t, 1);
    const auto model = simulate_reader(profile(0.9, 0.9), t, 2);
    EXPECT_EQ(apply_adoption(reader, model, profile(0.7, 0.7, 0.0), 3), reader);
}

TEST(Adoption, OneCopiesModel) {
    const auto t = balanced(2000);
    const auto reader = simulate_reader(profile(0.7, 0.7), t, 1);
    const auto model = simulate_reader(profile(0.9, 0.9), t, 2);
    EXPECT_EQ(apply_adoption(reader, model, profile(0.7, 0.7, 1.0), 3), model);
}

TEST(Adoption, LengthMismatch) {
    const std::vector<Label> a{kM, kB}, b{kM};
    try {
        apply_adoption(a, b, profile(0.5, 0.5, 0.5), 1);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
}

TEST(Adoption, PerDirectionOverrides) {
    const std::vector<Label> reader{kB, kM, kB, kM};
    const std::vector<Label> model{kM, kB, kB, kM};
    auto p = profile(0.5, 0.5, 0.0);
    p.adoption_to_malignant = 1.0;
    const auto aided = apply_adoption(reader, model, p, 1);
    EXPECT_EQ(aided, (std::vector<Label>{kM, kM, kB, kM}));
}

// r + p (m - r): condition on disagreement. With independent errors the
// reader is wrong and the model right with probability (1-r) m, and the
// reverse with r (1-m); adoption moves p of each.
TEST(Adoption, MonteCarloMatchesClosedForm) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<Label> truth(100000, kM);
    for (int k = 0; k < 10; ++k) {
        const double r = u(rng), m = u(rng), p = u(rng);
        const auto reader = simulate_reader(profile(r, 0.5), truth, 100 + k);
        const auto model = simulate_reader(profile(m, 0.5), truth, 200 + k);
        const auto aided = apply_adoption(reader, model, profile(r, 0.5, p), 300 + k);
        const double d1 = (1 - r) * m, d2 = r * (1 - m);
        const double oracle = r + p * d1 - p * d2;
        EXPECT_NEAR(oracle, expected_aided_rate(r, m, p), 1e-12);
        EXPECT_NEAR(rate_on(aided, truth, kM), oracle, 0.01) << r << " " << m << " " << p;
    }
}

TEST(Study, ZeroAdoptionGivesZeroDeltas) {
    std::mt19937_64 rng(1);
    const auto t = balanced(4000);
    const auto model_calls = simulate_reader(profile(0.86, 0.88), t, 9);
    const auto as = assessments_for(model_calls, rng);
    StudyConfig cfg;
    cfg.profiles = {profile(0.7, 0.67, 0.0), profile(0.83, 0.8, 0.0)};
    cfg.profiles[1].name = "s";
    const auto r = evaluate_study(t, as, cfg, 5);
    ASSERT_EQ(r.arms.size(), 2u);
    for (const auto& arm : r.arms) {
        for (const auto& d : arm.deltas) EXPECT_EQ(d.delta, 0.0) << d.metric;
    }
}

TEST(Study, DeltasAreExactDifferences) {
    std::mt19937_64 rng(2);
    const auto t = balanced(3000);
    const auto as = assessments_for(simulate_reader(profile(0.86, 0.88), t, 9), rng);
    StudyConfig cfg;
    cfg.profiles = {profile(0.7, 0.67, 0.4)};
    const auto r = evaluate_study(t, as, cfg, 6);
    for (const auto& d : r.arms[0].deltas) {
        EXPECT_EQ(d.delta, d.aided - d.unaided);
        EXPECT_EQ(d.text, render_delta(d.metric, d.unaided, d.aided));
    }
    EXPECT_EQ(r.arms[0].deltas[0].unaided, r.arms[0].unaided.sensitivity);
}

TEST(Study, FullAdoptionEqualsModelArm) {
    std::mt19937_64 rng(3);
    const auto t = balanced(3000);
    const auto as = assessments_for(simulate_reader(profile(0.86, 0.88), t, 9), rng);
    StudyConfig cfg;
    cfg.profiles = {profile(0.7, 0.67, 1.0)};
    const auto r = evaluate_study(t, as, cfg, 7);
    EXPECT_EQ(r.arms[0].aided.counts, r.model.counts);
}

TEST(Study, BetterModelHelpsInExpectation) {
    std::mt19937_64 rng(4);
    const auto t = balanced(20000);
    const auto as = assessments_for(simulate_reader(profile(0.86, 0.88), t, 9), rng);
    StudyConfig cfg;
    cfg.profiles = {profile(0.7, 0.67, 0.5)};
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = evaluate_study(t, as, cfg, seed);
        EXPECT_GE(r.arms[0].aided.sensitivity, r.arms[0].unaided.sensitivity);
        const double expected = expected_aided_rate(r.arms[0].unaided.sensitivity, r.model.sensitivity, 0.5);
        sum += r.arms[0].aided.sensitivity - expected;
    }
    EXPECT_NEAR(sum / 5, 0.0, 0.01);
}

TEST(Study, EmptyAndMismatch) {
    StudyConfig cfg;
    try {
        evaluate_study(std::vector<Label>{}, std::vector<risk::Assessment>{}, cfg, 1);
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyStudy);
    }
    EXPECT_THROW(evaluate_study(std::vector<Label>{kM}, std::vector<risk::Assessment>{}, cfg, 1), Error);
}

TEST(Study, OrderIndependentStreams) {
    std::mt19937_64 rng(5);
    const auto t = balanced(2000);
    const auto as = assessments_for(simulate_reader(profile(0.86, 0.88), t, 9), rng);
    auto a = profile(0.7, 0.67, 0.5), b = profile(0.83, 0.8, 0.3);
    a.name = "a";
    b.name = "b";
    StudyConfig one, both;
    one.profiles = {a};
    both.profiles = {a, b};
    EXPECT_EQ(evaluate_study(t, as, one, 3).arms[0].aided.counts, evaluate_study(t, as, both, 3).arms[0].aided.counts);
}

TEST(RenderDelta, PublishedRelativeChanges) {
    // unaided -> aided pairs from the reader study; relative changes as published
    struct Row {
        double u, a;
        const char* metric;
        const char* prefix;
    };
    const Row rows[] = {
        {0.698, 0.887, "sensitivity", "+27.1% sensitivity"}, {0.678, 0.871, "sensitivity", "+28.5% sensitivity"},
        {0.672, 0.815, "specificity", "+21.3% specificity"}, {0.717, 0.856, "specificity", "+19.4% specificity"},
        {0.827, 0.945, "sensitivity", "+14.3% sensitivity"}, {0.820, 0.911, "sensitivity", "+11.1% sensitivity"},
        {0.805, 0.890, "specificity", "+10.6% specificity"}, {0.813, 0.888, "specificity", "+9.2% specificity"},
    };
    for (const auto& r : rows) EXPECT_EQ(render_delta(r.metric, r.u, r.a).rfind(r.prefix, 0), 0u) << render_delta(r.metric, r.u, r.a);
    EXPECT_EQ(render_delta("sensitivity", 0.698, 0.887), "+27.1% sensitivity (+18.9 pp)");
    EXPECT_EQ(render_delta("specificity", 0.8, 0.7), "-12.5% specificity (-10.0 pp)");
    EXPECT_EQ(render_delta("sensitivity", 0.5, 0.5), "+0.0% sensitivity (+0.0 pp)");
    EXPECT_EQ(render_delta("sensitivity", 0.0, 0.25), "+25.0 pp sensitivity");
}

TEST(Gap, ShippedProfilesMatchPublishedRates) {
    const auto s1 = StudyConfig::from(Config::load(config_file("study_set1.conf")));
    const auto s2 = StudyConfig::from(Config::load(config_file("study_set2.conf")));
    ASSERT_EQ(s1.profiles.size(), 2u);
    EXPECT_EQ(s1.profiles[0].sensitivity, 0.698);
    EXPECT_EQ(s1.profiles[0].specificity, 0.672);
    EXPECT_EQ(s1.profiles[1].sensitivity, 0.827);
    EXPECT_EQ(s1.profiles[1].specificity, 0.805);
    EXPECT_EQ(s2.profiles[0].sensitivity, 0.678);
    EXPECT_EQ(s2.profiles[0].specificity, 0.717);
    EXPECT_EQ(s2.profiles[1].sensitivity, 0.820);
    EXPECT_EQ(s2.profiles[1].specificity, 0.813);
    EXPECT_EQ(s1.reference_model->sensitivity, 0.862);
    EXPECT_EQ(s2.reference_model->specificity, 0.870);
    EXPECT_EQ(s1.profiles[0].target->sensitivity, 0.887);
}

TEST(Gap, JuniorSensitivityNeedsMoreThanFullAdoption) {
    const auto g = analyze_gap("junior", "sensitivity", 0.698, 0.862, 0.887);
    EXPECT_NEAR(g.p_required, (0.887 - 0.698) / (0.862 - 0.698), 1e-12);
    EXPECT_GT(g.p_required, 1.0);
    EXPECT_FALSE(g.attainable_independent);
    ASSERT_TRUE(g.kappa_min);
    EXPECT_GT(*g.kappa_min, 0.0);
    // chosen policy reaches the target
    const double d1 = (1 - 0.698) * 0.862, d2 = 0.698 * (1 - 0.862);
    EXPECT_NEAR(0.698 + g.alpha * d1 - g.beta * d2, 0.887, 1e-9);
}

TEST(Gap, ReachableTargetNeedsNoCorrelation) {
    const auto g = analyze_gap("junior", "specificity", 0.672, 0.883, 0.815);
    EXPECT_TRUE(g.attainable_independent);
    ASSERT_TRUE(g.kappa_min);
    EXPECT_LE(*g.kappa_min, 1e-6);
}

TEST(Gap, KappaMinMatchesGridSearch) {
    // brute force over a 2-D grid of (alpha, beta), keeping points that land
    // within half a grid step of the target
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.55, 0.95);
    for (int k = 0; k < 6; ++k) {
        const double r = u(rng), m = u(rng);
        const double t = std::min(0.99, r + (1 - r) * m * 0.9);
        const auto g = analyze_gap("x", "sensitivity", r, m, t);
        const double d1 = (1 - r) * m, d2 = r * (1 - m), pi = d1 / (d1 + d2);
        double best = INFINITY;
        const int N = 1000;
        for (int i = 0; i <= N; ++i) {
            for (int j = 0; j <= N; ++j) {
                const double a = static_cast<double>(i) / N, b = static_cast<double>(j) / N;
                if (std::abs(r + a * d1 - b * d2 - t) > 0.5 * (d1 + d2) / N) continue;
                const double p = pi * a + (1 - pi) * b;
                if (p <= 0 || p >= 1) continue;
                best = std::min(best, (a - b) * std::sqrt(pi * (1 - pi) / (p * (1 - p))));
            }
        }
        ASSERT_TRUE(g.kappa_min);
        EXPECT_NEAR(*g.kappa_min, best, 0.01) << r << " " << m << " " << t;
    }
}

TEST(Gap, DiscerningReaderReachesTarget) {
    // simulate with the minimal correlation and check the published aided rate comes out
    const double r = 0.698, m = 0.862, t = 0.887;
    const auto g = analyze_gap("junior", "sensitivity", r, m, t);
    const std::vector<Label> truth(200000, kM);
    const auto reader = simulate_reader(profile(r, 0.5), truth, 1);
    const auto model = simulate_reader(profile(m, 0.5), truth, 2);
    auto p = profile(r, 0.5, g.adoption_prob);
    p.discernment = *g.kappa_min;
    const auto aided = apply_adoption(reader, model, p, 3, truth);
    EXPECT_NEAR(rate_on(aided, truth, kM), t, 0.01);
}
