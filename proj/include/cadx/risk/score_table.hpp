#pragma once

// Guideline point scorer.
//
// A table is a list of named entries, each awarding non-negative points when
// one feature falls in a half-open bucket [lo, hi), plus ordered category
// bands. Config syntax:
//
//   entry.<name> = <feature> <lo> <hi> <points>
//   band.<label> = <min_points>
//
// The shipped default (config/acr_tirads.conf) reproduces the ACR TI-RADS
// point values over this project's feature proxies.

#include <algorithm>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/features.hpp"

namespace cadx::risk {

struct ScoreEntry {
    std::string name;
    std::string feature;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    int points = 0;

    [[nodiscard]] bool matches(double v) const { return v >= lo && v < hi; }
    bool operator==(const ScoreEntry&) const = default;
};

struct ScoreBand {
    int min_points = 0;
    std::string label;
    bool operator==(const ScoreBand&) const = default;
};

struct GuidelineScore {
    int points = 0;
    std::string category;
    /// Names of the matched entries, in table order.
    std::vector<std::string> matched;
};

class ScoreTable {
public:
    ScoreTable() = default;

    ScoreTable(std::vector<ScoreEntry> entries, std::vector<ScoreBand> bands)
        : entries_(std::move(entries)), bands_(std::move(bands)) {
        validate();
    }

    static ScoreTable from_config(const Config& cfg) {
        std::vector<ScoreEntry> entries;
        for (const auto& [name, value] : cfg.with_prefix("entry.")) {
            const auto tok = detail::split_ws(value);
            if (tok.size() != 4) fail(ErrorCode::BadConfig, "entry." + name + ": expected <feature> <lo> <hi> <points>");
            ScoreEntry e;
            e.name = name;
            e.feature = tok[0];
            auto lo = detail::parse_double(tok[1]);
            auto hi = detail::parse_double(tok[2]);
            auto pts = detail::parse_int(tok[3]);
            if (!lo || !hi || !pts) fail(ErrorCode::BadConfig, "entry." + name + ": bad number");
            e.lo = *lo;
            e.hi = *hi;
            e.points = static_cast<int>(*pts);
            entries.push_back(std::move(e));
        }
        std::vector<ScoreBand> bands;
        for (const auto& [label, value] : cfg.with_prefix("band.")) {
            auto pts = detail::parse_int(value);
            if (!pts) fail(ErrorCode::BadConfig, "band." + label + ": bad number");
            bands.push_back({static_cast<int>(*pts), label});
        }
        std::stable_sort(bands.begin(), bands.end(),
                         [](const ScoreBand& a, const ScoreBand& b) { return a.min_points < b.min_points; });
        return ScoreTable(std::move(entries), std::move(bands));
    }

    static ScoreTable load(const std::filesystem::path& path) { return from_config(Config::load(path)); }

    [[nodiscard]] const std::vector<ScoreEntry>& entries() const { return entries_; }
    [[nodiscard]] const std::vector<ScoreBand>& bands() const { return bands_; }

    /// Largest total any single feature vector can reach. Within one feature
    /// the matched set only grows at some entry's `lo`, so evaluating there
    /// finds the per-feature maximum exactly.
    [[nodiscard]] int max_points() const {
        int total = 0;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const std::string_view fname = kFeatureNames[f];
            int best = 0;
            for (const auto& probe : entries_) {
                if (probe.feature != fname) continue;
                int sum = 0;
                for (const auto& e : entries_) {
                    if (e.feature == fname && e.matches(probe.lo)) sum += e.points;
                }
                best = std::max(best, sum);
            }
            total += best;
        }
        return total;
    }

    [[nodiscard]] const std::string& category_for(int points) const {
        const ScoreBand* hit = &bands_.front();
        for (const auto& b : bands_) {
            if (points >= b.min_points) hit = &b;
        }
        return hit->label;
    }

    bool operator==(const ScoreTable&) const = default;

private:
    void validate() const {
        if (bands_.empty()) fail(ErrorCode::BadConfig, "score table needs at least one band");
        if (bands_.front().min_points != 0) fail(ErrorCode::BadConfig, "lowest band must start at 0 points");
        for (std::size_t i = 1; i < bands_.size(); ++i) {
            if (bands_[i].min_points <= bands_[i - 1].min_points) {
                fail(ErrorCode::BadConfig, "bands must have strictly increasing min_points");
            }
        }
        for (const auto& e : entries_) {
            if (e.points < 0) fail(ErrorCode::BadConfig, "entry " + e.name + " has negative points");
            if (!(e.lo < e.hi)) fail(ErrorCode::BadConfig, "entry " + e.name + " has an empty bucket");
        }
    }

    std::vector<ScoreEntry> entries_;
    std::vector<ScoreBand> bands_;
};

/// Sums the points of every matched entry and maps the total to its band.
inline GuidelineScore score_guideline(const FeatureVector& fv, const ScoreTable& table) {
    GuidelineScore out;
    for (const auto& e : table.entries()) {
        const auto f = feature_from_name(e.feature);
        if (!f) fail(ErrorCode::TableFeatureMissing, "score entry '" + e.name + "' references unknown feature '" + e.feature + "'", 0, e.feature);
        if (e.matches(fv[*f])) {
            out.points += e.points;
            out.matched.push_back(e.name);
        }
    }
    out.category = table.category_for(out.points);
    return out;
}

/// Built-in copy of config/acr_tirads.conf so the library works without files.
inline ScoreTable default_score_table() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return ScoreTable(
        {
            {"cystic", "cystic_fraction", 0.95, inf, 0},
            {"mixed_cystic_solid", "cystic_fraction", 0.1, 0.95, 1},
            {"solid", "cystic_fraction", -inf, 0.1, 2},
            {"isoechoic", "echogenicity_ratio", 0.9, inf, 1},
            {"hypoechoic", "echogenicity_ratio", 0.6, 0.9, 2},
            {"very_hypoechoic", "echogenicity_ratio", -inf, 0.6, 3},
            {"taller_than_wide", "taller_than_wide", 0.5, inf, 3},
            {"irregular_margin", "margin_irregularity", 1.3, inf, 2},
            {"punctate_foci", "calcification_fraction", 0.002, 0.05, 3},
            {"macrocalcification", "calcification_fraction", 0.05, inf, 1},
        },
        {{0, "TR1"}, {2, "TR2"}, {3, "TR3"}, {4, "TR4"}, {7, "TR5"}});
}

}  // namespace cadx::risk
