#pragma once

// Interrogation mini-language. The grammar is documented in
// docs/query_grammar.ebnf:
//
//   WHY [free text]
//   SHOW HEATMAP
//   CONFIDENCE
//   RECALCULATE IGNORING <target> {(, | and) <target>}
//   WHAT IF <feature> = <number>
//
// Matching is case-insensitive; trailing punctuation is ignored. Targets
// are feature names, synonym phrases ("the cystic area") or heatmap cells
// written cell(col,row).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/features.hpp"
#include "cadx/imaging/heatmap_grid.hpp"
#include "cadx/risk/assess.hpp"

namespace cadx::explain {

enum class IntentKind { Why, ShowHeatmap, Reassess, WhatIf, Confidence };

constexpr std::string_view to_string(IntentKind k) {
    switch (k) {
        case IntentKind::Why: return "why";
        case IntentKind::ShowHeatmap: return "show_heatmap";
        case IntentKind::Reassess: return "reassess";
        case IntentKind::WhatIf: return "what_if";
        case IntentKind::Confidence: return "confidence";
    }
    return "why";
}

struct Intent {
    IntentKind kind = IntentKind::Why;
    /// Reassess payload.
    risk::Exclusion exclusion;
    /// WhatIf payload.
    std::string feature;
    double value = 0.0;
    std::string raw_text;

    /// Equality on kind and payload; raw_text is ignored.
    [[nodiscard]] bool same_request(const Intent& o) const {
        return kind == o.kind && exclusion == o.exclusion && feature == o.feature && value == o.value;
    }
};

/// Phrase → feature name map for clinical wording.
class SynonymTable {
public:
    SynonymTable() {
        for (auto name : kFeatureNames) {
            std::string spaced(name);
            std::replace(spaced.begin(), spaced.end(), '_', ' ');
            add(spaced, std::string(name));
        }
    }

    static SynonymTable defaults() {
        SynonymTable t;
        const std::pair<const char*, const char*> builtin[] = {
            {"cystic area", "cystic_fraction"},
            {"cystic areas", "cystic_fraction"},
            {"cystic region", "cystic_fraction"},
            {"cystic regions", "cystic_fraction"},
            {"cystic component", "cystic_fraction"},
            {"composition", "cystic_fraction"},
            {"nodule composition", "cystic_fraction"},
            {"calcification", "calcification_fraction"},
            {"calcifications", "calcification_fraction"},
            {"echogenic foci", "calcification_fraction"},
            {"punctate foci", "calcification_fraction"},
            {"ring-shaped calcification", "calcification_fraction"},
            {"rim calcification", "calcification_fraction"},
            {"margin", "margin_irregularity"},
            {"margins", "margin_irregularity"},
            {"margin area", "margin_irregularity"},
            {"border", "margin_irregularity"},
            {"shape", "aspect_ratio"},
            {"echogenicity", "echogenicity_ratio"},
            {"size", "size_mm"},
        };
        for (const auto& [phrase, feature] : builtin) t.add(phrase, feature);
        return t;
    }

    /// Defaults plus `synonym.<phrase> = <feature>` entries from config.
    static SynonymTable from(const Config& cfg) {
        SynonymTable t = defaults();
        for (const auto& [phrase, feature] : cfg.with_prefix("synonym.")) {
            if (!feature_from_name(feature)) {
                fail(ErrorCode::BadConfig, "synonym '" + phrase + "' maps to unknown feature '" + feature + "'");
            }
            t.add(phrase, feature);
        }
        return t;
    }

    void add(std::string phrase, std::string feature) {
        std::transform(phrase.begin(), phrase.end(), phrase.begin(), [](unsigned char c) { return std::tolower(c); });
        map_[phrase] = std::move(feature);
    }

    [[nodiscard]] const std::string* lookup(std::string_view phrase) const {
        auto it = map_.find(std::string(phrase));
        return it == map_.end() ? nullptr : &it->second;
    }

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return map_; }

private:
    std::map<std::string, std::string> map_;
};

namespace detail {

using cadx::detail::parse_double;
using cadx::detail::parse_int;
using cadx::detail::trim;

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string normalize(std::string_view text) {
    std::string out;
    bool space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    while (!out.empty() && (out.back() == '?' || out.back() == '.' || out.back() == '!')) out.pop_back();
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

inline bool consume(std::string_view& s, std::string_view word) {
    if (s.substr(0, word.size()) != word) return false;
    const auto rest = s.substr(word.size());
    if (!rest.empty() && rest.front() != ' ' && word.back() != ' ') return false;
    s = trim(rest);
    return true;
}

inline std::string_view strip_article(std::string_view s) {
    for (std::string_view art : {"the ", "a ", "an "}) {
        if (s.substr(0, art.size()) == art) return trim(s.substr(art.size()));
    }
    return s;
}

/// Splits on commas and " and " outside parentheses.
inline std::vector<std::string> split_targets(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    auto flush = [&] {
        auto t = trim(cur);
        if (!t.empty()) out.emplace_back(t);
        cur.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (depth == 0 && c == ',') {
            flush();
            continue;
        }
        if (depth == 0 && s.substr(i, 5) == " and ") {
            flush();
            i += 4;
            continue;
        }
        cur.push_back(c);
    }
    flush();
    return out;
}

inline std::optional<imaging::Cell> parse_cell(std::string_view s) {
    if (s.substr(0, 5) != "cell(" || s.back() != ')') return std::nullopt;
    const auto inner = s.substr(5, s.size() - 6);
    const auto comma = inner.find(',');
    if (comma == std::string_view::npos) return std::nullopt;
    auto col = parse_int(inner.substr(0, comma));
    auto row = parse_int(inner.substr(comma + 1));
    if (!col || !row) return std::nullopt;
    return imaging::Cell{static_cast<int>(*col), static_cast<int>(*row)};
}

inline std::string shortest_repr(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline constexpr std::string_view kCanonicalForms[] = {
    "why", "show heatmap", "confidence", "recalculate ignoring <feature or cell(col,row)>",
    "what if <feature> = <value>",
};

[[noreturn]] inline void unrecognized(std::string_view norm, std::string_view raw) {
    std::string_view best = kCanonicalForms[0];
    std::size_t best_d = std::string::npos;
    for (auto form : kCanonicalForms) {
        const auto head = form.substr(0, form.find(" <"));
        const auto d = edit_distance(norm.substr(0, std::max(head.size(), norm.find(' '))), head);
        if (d < best_d) {
            best_d = d;
            best = form;
        }
    }
    fail(ErrorCode::UnrecognizedQuery, "could not understand '" + std::string(raw) + "'; did you mean '" + std::string(best) + "'?",
         0, std::string(best));
}

}  // namespace detail

/// Resolves a target phrase to a feature name, or fails with the nearest
/// known phrase as the suggestion.
inline std::string resolve_feature(std::string_view phrase, const SynonymTable& synonyms) {
    const auto p = detail::strip_article(phrase);
    if (feature_from_name(p)) return std::string(p);
    if (const auto* f = synonyms.lookup(p)) return *f;
    std::string best;
    std::size_t best_d = std::string::npos;
    for (const auto& [k, v] : synonyms.entries()) {
        const auto d = detail::edit_distance(p, k);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    fail(ErrorCode::UnrecognizedQuery, "unknown feature or region '" + std::string(p) + "'; did you mean '" + best + "'?", 0,
         best);
}

inline Intent parse_query(std::string_view text, const SynonymTable& synonyms = SynonymTable::defaults()) {
    const std::string norm = detail::normalize(text);
    std::string_view s = norm;
    Intent intent;
    intent.raw_text = std::string(text);

    if (detail::consume(s, "why")) {
        intent.kind = IntentKind::Why;
        return intent;
    }
    if (detail::consume(s, "confidence") && s.empty()) {
        intent.kind = IntentKind::Confidence;
        return intent;
    }
    s = norm;
    if (detail::consume(s, "show") && detail::consume(s, "heatmap") && s.empty()) {
        intent.kind = IntentKind::ShowHeatmap;
        return intent;
    }
    s = norm;
    if (detail::consume(s, "recalculate") && detail::consume(s, "ignoring")) {
        intent.kind = IntentKind::Reassess;
        const auto targets = detail::split_targets(s);
        if (targets.empty()) detail::unrecognized(norm, text);
        for (const auto& t : targets) {
            if (auto cell = detail::parse_cell(detail::strip_article(t))) {
                if (std::find(intent.exclusion.cells.begin(), intent.exclusion.cells.end(), *cell) ==
                    intent.exclusion.cells.end()) {
                    intent.exclusion.cells.push_back(*cell);
                }
                continue;
            }
            auto f = resolve_feature(t, synonyms);
            if (std::find(intent.exclusion.features.begin(), intent.exclusion.features.end(), f) ==
                intent.exclusion.features.end()) {
                intent.exclusion.features.push_back(std::move(f));
            }
        }
        return intent;
    }
    s = norm;
    if (detail::consume(s, "what") && detail::consume(s, "if")) {
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) detail::unrecognized(norm, text);
        auto value = detail::parse_double(s.substr(eq + 1));
        if (!value || !std::isfinite(*value)) detail::unrecognized(norm, text);
        intent.kind = IntentKind::WhatIf;
        intent.feature = resolve_feature(detail::trim(s.substr(0, eq)), synonyms);
        intent.value = *value;
        return intent;
    }
    detail::unrecognized(norm, text);
}

/// The grammar's canonical spelling; parse_query(canonical_form(i)) reproduces i.
inline std::string canonical_form(const Intent& i) {
    switch (i.kind) {
        case IntentKind::Why: return "why";
        case IntentKind::ShowHeatmap: return "show heatmap";
        case IntentKind::Confidence: return "confidence";
        case IntentKind::Reassess: {
            std::string out = "recalculate ignoring ";
            bool first = true;
            for (const auto& f : i.exclusion.features) {
                out += (first ? "" : ", ") + f;
                first = false;
            }
            for (const auto& c : i.exclusion.cells) {
                out += (first ? "" : ", ") + risk::cell_name(c);
                first = false;
            }
            return out;
        }
        case IntentKind::WhatIf: return "what if " + i.feature + " = " + detail::shortest_repr(i.value);
    }
    return "why";
}

}  // namespace cadx::explain
