#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/features.hpp"
#include "cadx/imaging/image.hpp"

namespace cadx::imaging {

/// Pixel-level thresholds for the feature proxies.
struct FeatureConfig {
    /// In-mask pixels at or above this intensity count as calcification.
    int calcification_threshold = 200;
    /// In-mask pixels at or below this intensity count as cystic.
    int cystic_threshold = 40;
    /// Width of the surrounding ring (square dilation radius) in pixels.
    int ring_width = 8;
    double default_mm_per_pixel = 0.1;

    static FeatureConfig from(const Config& cfg) {
        FeatureConfig fc;
        fc.calcification_threshold = static_cast<int>(cfg.get_int("calcification_threshold", fc.calcification_threshold));
        fc.cystic_threshold = static_cast<int>(cfg.get_int("cystic_threshold", fc.cystic_threshold));
        fc.ring_width = static_cast<int>(cfg.get_int("ring_width", fc.ring_width));
        fc.default_mm_per_pixel = cfg.get_double("mm_per_pixel", fc.default_mm_per_pixel);
        if (fc.ring_width < 1) fail(ErrorCode::BadConfig, "ring_width must be >= 1");
        return fc;
    }
};

/// Square (Chebyshev) dilation, separable max filter.
inline Mask dilate(const Mask& m, int radius) {
    Mask tmp(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 0;
            for (int k = std::max(0, x - radius); k <= std::min(m.width - 1, x + radius) && !v; ++k) v = m.at(k, y);
            tmp.at(x, y) = v;
        }
    }
    Mask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 0;
            for (int k = std::max(0, y - radius); k <= std::min(m.height - 1, y + radius) && !v; ++k) v = tmp.at(x, k);
            out.at(x, y) = v;
        }
    }
    return out;
}

struct ContourMeasure {
    double perimeter = 0.0;
    double area = 0.0;
};

/// Perimeter and enclosed area of the marching-squares contour through the
/// pixel centres (iso-level 0.5, zero padding outside the raster). Saddle
/// cells are resolved as disconnected corners.
inline ContourMeasure contour_measure(const Mask& m) {
    static constexpr double kHalfDiag = std::numbers::sqrt2 / 2.0;
    auto px = [&](int x, int y) -> int { return m.contains(x, y) && m.at(x, y) ? 1 : 0; };
    ContourMeasure cm;
    for (int y = -1; y < m.height; ++y) {
        for (int x = -1; x < m.width; ++x) {
            const int a = px(x, y), b = px(x + 1, y), c = px(x, y + 1), d = px(x + 1, y + 1);
            switch (a + b + c + d) {
                case 1:
                    cm.perimeter += kHalfDiag;
                    cm.area += 0.125;
                    break;
                case 2:
                    if (a == d) {  // saddle
                        cm.perimeter += 2 * kHalfDiag;
                        cm.area += 0.25;
                    } else {
                        cm.perimeter += 1.0;
                        cm.area += 0.5;
                    }
                    break;
                case 3:
                    cm.perimeter += kHalfDiag;
                    cm.area += 0.875;
                    break;
                case 4: cm.area += 1.0; break;
                default: break;
            }
        }
    }
    return cm;
}

/// Computes the nodule descriptors from an image and its mask.
///
/// `exclude`, when given, zero-weights a region: its pixels are dropped from
/// the nodule and from the surrounding ring before any statistic is taken.
/// `mm_per_pixel` falls back to the configured default and the result is
/// then flagged `nominal_size`.
inline FeatureVector extract_features(const Image& img, const Mask& mask, std::optional<double> mm_per_pixel,
                                      const FeatureConfig& cfg = {}, const Mask* exclude = nullptr) {
    if (!mask.same_shape(img)) fail(ErrorCode::DimensionMismatch, "mask and image dimensions differ");
    if (exclude && !exclude->same_shape(img)) fail(ErrorCode::DimensionMismatch, "exclusion region dimensions differ");

    Mask nodule = mask;
    if (exclude) {
        for (std::size_t i = 0; i < nodule.size(); ++i) {
            if (exclude->pixels[i]) nodule.pixels[i] = 0;
        }
    }

    std::size_t area = 0, calcified = 0, cystic = 0, ring_count = 0;
    double in_sum = 0.0, ring_sum = 0.0;
    const Mask grown = dilate(nodule, cfg.ring_width);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int v = img.pixels[i];
        if (nodule.pixels[i]) {
            ++area;
            in_sum += v;
            if (v >= cfg.calcification_threshold) ++calcified;
            if (v <= cfg.cystic_threshold) ++cystic;
        } else if (grown.pixels[i] && !(exclude && exclude->pixels[i])) {
            ++ring_count;
            ring_sum += v;
        }
    }
    if (area == 0) fail(ErrorCode::EmptyMask, "mask has no pixels");

    const BBox box = mask_bbox(nodule);
    const double mean_in = in_sum / static_cast<double>(area);
    const double mean_ring = ring_count ? ring_sum / static_cast<double>(ring_count) : mean_in;
    const ContourMeasure cm = contour_measure(nodule);

    FeatureVector fv;
    fv[Feature::aspect_ratio] = static_cast<double>(box.h) / static_cast<double>(box.w);
    fv[Feature::taller_than_wide] = fv[Feature::aspect_ratio] > 1.0 ? 1.0 : 0.0;
    // black surroundings would blow the ratio up; one intensity unit floors it
    fv[Feature::echogenicity_ratio] = mean_ring == mean_in ? 1.0 : mean_in / std::max(mean_ring, 1.0);
    fv[Feature::calcification_fraction] = static_cast<double>(calcified) / static_cast<double>(area);
    fv[Feature::margin_irregularity] =
        cm.area > 0.0 ? cm.perimeter * cm.perimeter / (4.0 * std::numbers::pi * cm.area) : 1.0;
    fv[Feature::cystic_fraction] = static_cast<double>(cystic) / static_cast<double>(area);
    fv.nominal_size = !mm_per_pixel.has_value();
    fv[Feature::size_mm] = std::max(box.w, box.h) * mm_per_pixel.value_or(cfg.default_mm_per_pixel);
    return fv;
}

}  // namespace cadx::imaging
