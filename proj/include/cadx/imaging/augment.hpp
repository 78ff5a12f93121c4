#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>

#include "cadx/config.hpp"
#include "cadx/error.hpp"
#include "cadx/imaging/image.hpp"

namespace cadx::imaging {

/// Training-time augmentation: rotation within ±rotation_deg_max, isotropic
/// scaling in [scale_min, scale_max] and an optional random crop that is
/// resized back to the input dimensions.
struct AugSpec {
    double rotation_deg_max = 10.0;
    double scale_min = 0.8;
    double scale_max = 1.2;
    bool crop = true;
    /// Smallest crop window, as a fraction of each image dimension.
    double crop_min_fraction = 0.85;
    std::uint64_t seed = 0;

    static AugSpec from(const Config& cfg) {
        AugSpec a;
        a.rotation_deg_max = cfg.get_double("augment.rotation_deg_max", a.rotation_deg_max);
        a.scale_min = cfg.get_double("augment.scale_min", a.scale_min);
        a.scale_max = cfg.get_double("augment.scale_max", a.scale_max);
        a.crop = cfg.get_bool("augment.crop", a.crop);
        a.crop_min_fraction = cfg.get_double("augment.crop_min_fraction", a.crop_min_fraction);
        a.seed = static_cast<std::uint64_t>(cfg.get_int("augment.seed", 0));
        a.validate();
        return a;
    }

    void validate() const {
        if (!(rotation_deg_max >= 0.0)) fail(ErrorCode::InvalidArgument, "rotation_deg_max must be >= 0");
        if (!(scale_min > 0.0) || !(scale_min <= scale_max)) {
            fail(ErrorCode::InvalidArgument, "require 0 < scale_min <= scale_max");
        }
        if (!(crop_min_fraction > 0.0 && crop_min_fraction <= 1.0)) {
            fail(ErrorCode::InvalidArgument, "crop_min_fraction must be in (0, 1]");
        }
    }
};

struct AugTransform {
    double angle_deg = 0.0;
    double scale = 1.0;
    /// Crop window size as a fraction of the image, and its top-left corner
    /// as a fraction of the slack (1 - crop_fraction) in each dimension.
    double crop_fraction = 1.0;
    double crop_x = 0.0;
    double crop_y = 0.0;
};

namespace detail {

inline double draw_uniform(std::mt19937_64& rng, double lo, double hi) {
    if (lo == hi) return lo;
    std::uniform_real_distribution<double> dist(lo, hi);
    // uniform_real_distribution is half-open; clamp guards the rounding case
    return std::clamp(dist(rng), lo, hi);
}

}  // namespace detail

inline AugTransform sample_transform(const AugSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    AugTransform t;
    t.angle_deg = detail::draw_uniform(rng, -spec.rotation_deg_max, spec.rotation_deg_max);
    t.scale = detail::draw_uniform(rng, spec.scale_min, spec.scale_max);
    if (spec.crop) {
        t.crop_fraction = detail::draw_uniform(rng, spec.crop_min_fraction, 1.0);
        t.crop_x = detail::draw_uniform(rng, 0.0, 1.0);
        t.crop_y = detail::draw_uniform(rng, 0.0, 1.0);
    }
    return t;
}

struct Augmented {
    Image image;
    std::optional<Mask> mask;
    AugTransform transform;
};

/// Warps `img` (bilinear) and `mask` (nearest neighbour) with the same
/// transform. Pixels mapped from outside the source become 0.
inline Augmented apply_transform(const Image& img, const std::optional<Mask>& mask, const AugTransform& t) {
    if (mask && !mask->same_shape(img)) fail(ErrorCode::DimensionMismatch, "mask and image dimensions differ");

    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    const double theta = t.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double ox = t.crop_x * (1.0 - t.crop_fraction) * (img.width - 1);
    const double oy = t.crop_y * (1.0 - t.crop_fraction) * (img.height - 1);

    Augmented out{Image(img.width, img.height), std::nullopt, t};
    if (mask) out.mask = Mask(img.width, img.height);

    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            double px = u;
            double py = v;
            if (t.crop_fraction != 1.0) {
                px = ox + u * t.crop_fraction;
                py = oy + v * t.crop_fraction;
            }
            const double dx = (px - cx) / t.scale;
            const double dy = (py - cy) / t.scale;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;

            const double fx = std::floor(sx);
            const double fy = std::floor(sy);
            const int x0 = static_cast<int>(fx);
            const int y0 = static_cast<int>(fy);
            const double ax = sx - fx;
            const double ay = sy - fy;
            auto sample = [&](int x, int y) -> double { return img.contains(x, y) ? img.at(x, y) : 0.0; };
            double value;
            if (ax == 0.0 && ay == 0.0) {
                value = sample(x0, y0);
            } else {
                value = (1 - ax) * (1 - ay) * sample(x0, y0) + ax * (1 - ay) * sample(x0 + 1, y0) +
                        (1 - ax) * ay * sample(x0, y0 + 1) + ax * ay * sample(x0 + 1, y0 + 1);
            }
            out.image.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));

            if (mask) {
                const int nx = static_cast<int>(std::lround(sx));
                const int ny = static_cast<int>(std::lround(sy));
                out.mask->at(u, v) = mask->contains(nx, ny) ? mask->at(nx, ny) : 0;
            }
        }
    }
    return out;
}

/// Draws one transform from `spec.seed` and applies it.
inline Augmented augment(const Image& img, const std::optional<Mask>& mask, const AugSpec& spec) {
    if (mask && !mask->same_shape(img)) fail(ErrorCode::DimensionMismatch, "mask and image dimensions differ");
    std::mt19937_64 rng(spec.seed);
    return apply_transform(img, mask, sample_transform(spec, rng));
}

}  // namespace cadx::imaging
