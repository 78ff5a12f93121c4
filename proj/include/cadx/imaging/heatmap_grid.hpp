#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadx/error.hpp"

namespace cadx::imaging {

/// Grid cell, column-major naming: `col` runs along x, `row` along y.
struct Cell {
    int col = 0;
    int row = 0;
    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

struct GridSize {
    int cols = 8;
    int rows = 8;
    bool operator==(const GridSize&) const = default;
};

/// Pixel span [begin, end) covered by grid cell `index` of `cells` along a
/// dimension of `extent` pixels. Cells are empty when cells > extent.
inline std::pair<int, int> cell_span(int index, int cells, int extent) {
    const long long b = static_cast<long long>(index) * extent / cells;
    const long long e = static_cast<long long>(index + 1) * extent / cells;
    return {static_cast<int>(b), static_cast<int>(e)};
}

/// Occlusion saliency: per-cell base_risk - occluded_risk, row-major.
struct Heatmap {
    int grid_w = 0;
    int grid_h = 0;
    std::vector<double> values;
    double base_risk = 0.0;

    [[nodiscard]] double at(int col, int row) const { return values[static_cast<std::size_t>(row) * grid_w + col]; }

    /// Cells ordered by value, largest risk contribution first.
    [[nodiscard]] std::vector<Cell> ranked_cells() const {
        std::vector<Cell> cells;
        for (int r = 0; r < grid_h; ++r) {
            for (int c = 0; c < grid_w; ++c) cells.push_back({c, r});
        }
        std::stable_sort(cells.begin(), cells.end(), [&](const Cell& a, const Cell& b) {
            return at(a.col, a.row) > at(b.col, b.row);
        });
        return cells;
    }

    bool operator==(const Heatmap&) const = default;
};

inline void to_json(nlohmann::json& j, const Heatmap& h) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < h.grid_h; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < h.grid_w; ++c) row.push_back(h.at(c, r));
        rows.push_back(std::move(row));
    }
    j = {{"grid_w", h.grid_w}, {"grid_h", h.grid_h}, {"base_risk", h.base_risk}, {"values", std::move(rows)}};
}

inline void from_json(const nlohmann::json& j, Heatmap& h) {
    h.grid_w = j.at("grid_w").get<int>();
    h.grid_h = j.at("grid_h").get<int>();
    h.base_risk = j.at("base_risk").get<double>();
    h.values.clear();
    const auto& rows = j.at("values");
    if (static_cast<int>(rows.size()) != h.grid_h) fail(ErrorCode::CorruptData, "heatmap row count mismatch");
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != h.grid_w) fail(ErrorCode::CorruptData, "heatmap column count mismatch");
        for (const auto& v : row) h.values.push_back(v.get<double>());
    }
}

}  // namespace cadx::imaging
