#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cadx/error.hpp"

namespace cadx::explain {

using Tokens = std::vector<std::string>;

inline Tokens tokenize(std::string_view text) {
    Tokens out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, int>;

inline NgramCounts ngram_counts(const Tokens& t, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[Tokens(t.begin() + i, t.begin() + i + n)];
    return counts;
}

}  // namespace detail

/// Sentence BLEU without smoothing: geometric mean of clipped n-gram
/// precisions for n = 1..max_n times the brevity penalty exp(1 - r/c) when
/// the candidate is shorter than the closest reference (ties to the shorter
/// reference). Orders longer than the candidate contribute no n-grams and
/// are left out of the mean; any zero precision gives 0.
inline double bleu_score(const Tokens& candidate, const std::vector<Tokens>& references, int max_n = 4) {
    if (candidate.empty()) fail(ErrorCode::EmptyCandidate, "candidate has no tokens");
    if (references.empty()) fail(ErrorCode::InvalidArgument, "at least one reference is required");
    if (max_n < 1) fail(ErrorCode::InvalidArgument, "max_n must be >= 1");

    const std::size_t c = candidate.size();
    const std::size_t orders = std::min<std::size_t>(static_cast<std::size_t>(max_n), c);
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= orders; ++n) {
        const auto cand = detail::ngram_counts(candidate, n);
        std::vector<detail::NgramCounts> refs;
        refs.reserve(references.size());
        for (const auto& r : references) refs.push_back(detail::ngram_counts(r, n));
        int clipped = 0, total = 0;
        for (const auto& [gram, count] : cand) {
            int max_ref = 0;
            for (const auto& rc : refs) {
                auto it = rc.find(gram);
                if (it != rc.end()) max_ref = std::max(max_ref, it->second);
            }
            clipped += std::min(count, max_ref);
            total += count;
        }
        if (clipped == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped) / total);
    }

    std::size_t r = references.front().size();
    for (const auto& ref : references) {
        const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
        if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
    }
    const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

}  // namespace cadx::explain
