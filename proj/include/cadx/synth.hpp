#pragma once

// Synthetic ultrasound-like cases for demos and end-to-end tests. Nodules
// are filled ellipses with a wavy border on a speckled background.
// Malignant ones lean towards tall, dark, irregular and speckled with bright
// dots; benign ones towards wide, brighter, smooth and partly cystic. The
// classes overlap so that no feature separates them on its own.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "cadx/error.hpp"
#include "cadx/imaging/image.hpp"
#include "cadx/ingest.hpp"

namespace cadx::synth {

struct SynthSpec {
    std::size_t cases = 200;
    double malignant_fraction = 0.5;
    int width = 96;
    int height = 96;
    double mm_per_pixel = 0.1;
    /// Share of cases carrying an exclusion criterion (prior treatment,
    /// incomplete clinical info or missing pathology).
    double exclusion_rate = 0.0;
    std::uint64_t seed = 1;
    std::string id_prefix = "syn";
};

struct SynthCase {
    imaging::Image image;
    imaging::Mask mask;
    bool malignant = false;
};

/// One nodule image and its mask.
inline SynthCase synth_case(bool malignant, std::mt19937_64& rng, const SynthSpec& spec) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
    std::normal_distribution<double> noise(0.0, 12.0);

    SynthCase sc{imaging::Image(spec.width, spec.height), imaging::Mask(spec.width, spec.height), malignant};
    const double cx = spec.width / 2.0 + uni(-4, 4), cy = spec.height / 2.0 + uni(-4, 4);
    const double half_w = uni(11, 17);
    const bool tall = u(rng) < (malignant ? 0.75 : 0.2);
    const double half_h = half_w * (tall ? uni(1.05, 1.4) : uni(0.6, 0.97));
    const double wobble = malignant ? (u(rng) < 0.7 ? uni(0.08, 0.2) : uni(0.0, 0.05)) : uni(0.0, 0.06);
    const int lobes = static_cast<int>(uni(5, 11));
    const double phase = uni(0, 2 * std::numbers::pi);
    const double inside = malignant ? uni(55, 100) : uni(80, 140);
    const double background = uni(110, 130);

    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const double dx = (x - cx) / half_w, dy = (y - cy) / half_h;
            const double theta = std::atan2(dy, dx);
            const double radius = 1.0 + wobble * std::sin(lobes * theta + phase);
            const bool in = std::hypot(dx, dy) <= radius;
            sc.mask.at(x, y) = in ? 1 : 0;
            const double v = (in ? inside : background) + noise(rng);
            sc.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }

    auto paint = [&](double px, double py, double r, double value) {
        for (int y = static_cast<int>(py - r) - 1; y <= static_cast<int>(py + r) + 1; ++y) {
            for (int x = static_cast<int>(px - r) - 1; x <= static_cast<int>(px + r) + 1; ++x) {
                if (!sc.image.contains(x, y) || !sc.mask.at(x, y)) continue;
                if (std::hypot(x - px, y - py) <= r) {
                    sc.image.at(x, y) = static_cast<std::uint8_t>(std::clamp(value + noise(rng) * 0.3, 0.0, 255.0));
                }
            }
        }
    };
    auto random_inside = [&](double shrink) {
        const double t = uni(0, 2 * std::numbers::pi), s = std::sqrt(u(rng)) * shrink;
        return std::pair{cx + s * half_w * std::cos(t), cy + s * half_h * std::sin(t)};
    };

    if (u(rng) < (malignant ? 0.6 : 0.15)) {
        const int dots = static_cast<int>(uni(3, 9));
        for (int i = 0; i < dots; ++i) {
            auto [px, py] = random_inside(0.8);
            paint(px, py, 0.6, 235);
        }
    }
    if (u(rng) < (malignant ? 0.1 : 0.5)) {
        const int blobs = static_cast<int>(uni(1, 4));
        for (int i = 0; i < blobs; ++i) {
            auto [px, py] = random_inside(0.6);
            paint(px, py, uni(3, 6), 18);
        }
    }
    return sc;
}

namespace detail {

inline void add_exclusion(ingest::CaseRecord& c, std::mt19937_64& rng) {
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0: c.prior_treatment = {"I131"}; break;
        case 1: c.clinical_complete = false; break;
        default: c.pathology.reset(); break;
    }
}

inline ingest::CaseRecord base_record(const SynthSpec& spec, std::size_t i, bool malignant, std::mt19937_64& rng) {
    ingest::CaseRecord c;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", spec.id_prefix.c_str(), i + 1);
    c.case_id = id;
    c.age = std::uniform_int_distribution<int>(18, 85)(rng);
    c.sex = std::uniform_real_distribution<double>(0, 1)(rng) < 0.75 ? ingest::Sex::F : ingest::Sex::M;
    c.pathology = malignant ? Label::malignant : Label::benign;
    c.machine_tag = std::uniform_int_distribution<int>(0, 1)(rng) ? "synthetic-a" : "synthetic-b";
    c.mm_per_pixel = spec.mm_per_pixel;
    return c;
}

}  // namespace detail

/// Cases with inline pixels.
inline ingest::CaseSet generate(const SynthSpec& spec) {
    if (!(spec.malignant_fraction >= 0 && spec.malignant_fraction <= 1)) {
        fail(ErrorCode::InvalidArgument, "malignant_fraction must be in [0,1]");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ingest::CaseSet cs;
    cs.name = spec.id_prefix;
    for (std::size_t i = 0; i < spec.cases; ++i) {
        const bool malignant = u(rng) < spec.malignant_fraction;
        auto c = detail::base_record(spec, i, malignant, rng);
        auto sc = synth_case(malignant, rng, spec);
        c.image = std::move(sc.image);
        c.mask = std::move(sc.mask);
        if (u(rng) < spec.exclusion_rate) detail::add_exclusion(c, rng);
        cs.cases.push_back(std::move(c));
    }
    return cs;
}

/// Writes images/<id>.pgm, masks/<id>.pgm and cases.jsonl under `dir`;
/// returns the case file path.
inline std::filesystem::path write_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "masks");
    auto cs = generate(spec);
    for (auto& c : cs.cases) {
        const std::string img_rel = "images/" + c.case_id + ".pgm", mask_rel = "masks/" + c.case_id + ".pgm";
        imaging::write_bytes(dir / img_rel, imaging::encode_pgm(*c.image));
        imaging::Mask scaled = *c.mask;
        for (auto& p : scaled.pixels) p = p ? 255 : 0;
        imaging::write_bytes(dir / mask_rel, imaging::encode_pgm(scaled));
        c.image.reset();
        c.mask.reset();
        c.image_ref = img_rel;
        c.mask_ref = mask_rel;
    }
    const auto path = dir / "cases.jsonl";
    ingest::save_cases(cs, path);
    return path;
}

}  // namespace cadx::synth
