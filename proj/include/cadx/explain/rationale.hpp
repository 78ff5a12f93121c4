#pragma once

#include <algorithm>
#include <cstdio>
#include <string>

#include "cadx/error.hpp"
#include "cadx/explain/contributions.hpp"
#include "cadx/risk/assess.hpp"

namespace cadx::explain {

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline std::string signed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.3f", v);
    return buf;
}

inline std::string direction_words(double v) {
    if (v > 0) return "raises risk";
    if (v < 0) return "lowers risk";
    return "has no effect";
}

/// "aspect_ratio raises risk (+0.412)"
inline std::string describe(const Contribution& c) {
    return c.feature + " " + direction_words(c.value) + " (" + signed3(c.value) + ")";
}

/// Fixed-template explanation of an assessment naming the verdict, the
/// probability, the guideline category and the top_k contributions.
inline std::string render_rationale(const risk::Assessment& a, int top_k = 3) {
    if (top_k < 1) fail(ErrorCode::InvalidArgument, "top_k must be >= 1");
    std::string out;
    if (a.reassessment) {
        out += "Reassessment ignoring ";
        for (std::size_t i = 0; i < a.excluded.size(); ++i) out += (i ? ", " : "") + a.excluded[i];
        out += ". ";
    }
    out += "The nodule is assessed as " + std::string(to_string(a.label)) + " with a probability of " +
           fixed3(a.probability) + " (decision threshold " + fixed3(a.threshold) + "). ";
    out += "Guideline score " + std::to_string(a.guideline_points) + " points, category " + a.guideline_category + ". ";
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k), a.contributions.size());
    out += "Main factors:";
    for (std::size_t i = 0; i < k; ++i) {
        out += (i ? "; " : " ") + std::to_string(i + 1) + ". " + describe(a.contributions[i]);
    }
    out += ".";
    return out;
}

}  // namespace cadx::explain
