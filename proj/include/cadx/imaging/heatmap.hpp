#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "cadx/error.hpp"
#include "cadx/imaging/extract.hpp"
#include "cadx/imaging/heatmap_grid.hpp"
#include "cadx/imaging/image.hpp"
#include "cadx/risk/assess.hpp"

namespace cadx::imaging {

struct OcclusionOptions {
    GridSize grid;
    std::optional<double> mm_per_pixel;
    FeatureConfig feature_config;
};

/// Rounded mean intensity over the mask; the occlusion fill value.
inline std::uint8_t mask_mean_intensity(const Image& img, const Mask& mask) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (mask.pixels[i]) {
            sum += img.pixels[i];
            ++n;
        }
    }
    if (n == 0) fail(ErrorCode::EmptyMask, "mask has no pixels");
    return static_cast<std::uint8_t>(std::lround(sum / static_cast<double>(n)));
}

/// Occlusion sensitivity. Each grid cell's pixels are replaced by the
/// in-mask mean intensity and the fused risk recomputed; the cell value is
/// base_risk - occluded_risk. Cells are independent, so evaluation order
/// does not affect the result.
inline Heatmap occlusion_heatmap(const Image& img, const Mask& mask, const risk::RiskModel& model,
                                 const risk::ScoreTable& table, const OcclusionOptions& opt = {}) {
    if (!mask.same_shape(img)) fail(ErrorCode::DimensionMismatch, "mask and image dimensions differ");
    if (opt.grid.cols < 1 || opt.grid.rows < 1) fail(ErrorCode::InvalidArgument, "heatmap grid needs >= 1 cell per axis");

    auto risk_of = [&](const Image& im) {
        return risk::predict_risk(model, extract_features(im, mask, opt.mm_per_pixel, opt.feature_config), table)
            .probability;
    };

    Heatmap h;
    h.grid_w = opt.grid.cols;
    h.grid_h = opt.grid.rows;
    h.base_risk = risk_of(img);
    h.values.assign(static_cast<std::size_t>(h.grid_w) * h.grid_h, 0.0);
    const std::uint8_t fill = mask_mean_intensity(img, mask);

    for (int row = 0; row < h.grid_h; ++row) {
        const auto [y0, y1] = cell_span(row, h.grid_h, img.height);
        for (int col = 0; col < h.grid_w; ++col) {
            const auto [x0, x1] = cell_span(col, h.grid_w, img.width);
            bool changed = false;
            Image occluded = img;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    changed |= occluded.at(x, y) != fill;
                    occluded.at(x, y) = fill;
                }
            }
            // an unchanged image scores identically; skip the re-extraction
            h.values[static_cast<std::size_t>(row) * h.grid_w + col] = changed ? h.base_risk - risk_of(occluded) : 0.0;
        }
    }
    return h;
}

}  // namespace cadx::imaging
